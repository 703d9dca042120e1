//! Training objectives. Every loss has a graph form used during training and
//! a plain form over [`Image`]s that evaluates the same graph code in `f64`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use uwstyle_tensor::{Conv2dSpec, Float, Graph, Op, Tensor, Var};

use crate::error::{Error, Result};
use crate::image::Image;

/// SSIM stabilizers for the `[0, 1]` range.
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const SSIM_WINDOW: usize = 7;
pub const TV_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_self: f64,
    pub lambda_latent: f64,
    pub lambda_tv: f64,
    pub lambda_per: f64,
    pub lambda_iq: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_self: 10.0,
            lambda_latent: 1.0,
            lambda_tv: 1e-4,
            lambda_per: 0.5,
            lambda_iq: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_self,
            self.lambda_latent,
            self.lambda_tv,
            self.lambda_per,
            self.lambda_iq,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

fn check_same(a: &Image, b: &Image, what: &str) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "{what}: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Evaluate a graph-built scalar on `f64` copies of `images`.
fn eval_on_images(images: &[&Image], f: impl FnOnce(&mut Graph<f64>, &[Var]) -> Var) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = images.iter().map(|img| g.constant(img.to_tensor())).collect();
    let out = f(&mut g, &vars);
    g.value(out).data()[0]
}

// ---------------------------------------------------------------------------
// Reconstruction

/// `mean|x_cyc − x| + mean|y_cyc − y|`.
pub fn cycle_graph<T: Float>(g: &mut Graph<T>, x: Var, y: Var, x_cyc: Var, y_cyc: Var) -> Var {
    let a = g.mean_abs_diff(x_cyc, x);
    let b = g.mean_abs_diff(y_cyc, y);
    g.add(a, b)
}

/// Same form as the cycle term, on self-reconstructions.
pub fn self_graph<T: Float>(g: &mut Graph<T>, x: Var, x_rec: Var, y: Var, y_rec: Var) -> Var {
    cycle_graph(g, x, y, x_rec, y_rec)
}

pub fn loss_cycle(x: &Image, y: &Image, x_cyc: &Image, y_cyc: &Image) -> Result<f64> {
    check_same(x, x_cyc, "cycle x")?;
    check_same(y, y_cyc, "cycle y")?;
    Ok(eval_on_images(&[x, y, x_cyc, y_cyc], |g, v| {
        cycle_graph(g, v[0], v[1], v[2], v[3])
    }))
}

pub fn loss_self(x: &Image, x_rec: &Image, y: &Image, y_rec: &Image) -> Result<f64> {
    check_same(x, x_rec, "self x")?;
    check_same(y, y_rec, "self y")?;
    Ok(eval_on_images(&[x, x_rec, y, y_rec], |g, v| {
        self_graph(g, v[0], v[1], v[2], v[3])
    }))
}

// ---------------------------------------------------------------------------
// Adversarial

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GanSide {
    Generator,
    Discriminator,
}

/// Adversarial objective family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarialForm {
    /// Least-squares targets 1 (real) and 0 (fake).
    #[default]
    LeastSquares,
    /// Logistic (cross-entropy) form on raw logits.
    Log,
    /// No adversarial term.
    Off,
}

/// Adversarial loss summed over discriminator scales.
///
/// Discriminator side: `Σ mean((s_real − 1)²) + mean(s_fake²)`.
/// Generator side: `Σ mean((s_fake − 1)²)`; `real` is ignored.
pub fn adversarial_graph<T: Float>(
    g: &mut Graph<T>,
    real: &[Var],
    fake: &[Var],
    side: GanSide,
    form: AdversarialForm,
) -> Result<Var> {
    if fake.is_empty() || (side == GanSide::Discriminator && real.len() != fake.len()) {
        return Err(Error::InvalidArgument(
            "adversarial loss needs one non-empty score list per side".into(),
        ));
    }
    let term = |g: &mut Graph<T>, s: Var, target: f64| match form {
        AdversarialForm::LeastSquares | AdversarialForm::Off => {
            g.mean_sq_to_const(s, T::from_f64(target))
        }
        AdversarialForm::Log => g.bce_with_logits(s, T::from_f64(target)),
    };
    let mut parts = Vec::new();
    match side {
        GanSide::Generator => {
            for &s in fake {
                parts.push((term(g, s, 1.0), T::ONE));
            }
        }
        GanSide::Discriminator => {
            for (&r, &f) in real.iter().zip(fake) {
                parts.push((term(g, r, 1.0), T::ONE));
                parts.push((term(g, f, 0.0), T::ONE));
            }
        }
    }
    Ok(g.weighted_sum(&parts))
}

pub fn loss_lsgan(
    scores_real: &[Tensor<f64>],
    scores_fake: &[Tensor<f64>],
    side: GanSide,
) -> Result<f64> {
    if scores_fake.is_empty() {
        return Err(Error::InvalidArgument("empty score list".into()));
    }
    let mut g = Graph::new();
    let real: Vec<Var> = scores_real.iter().map(|t| g.constant(t.clone())).collect();
    let fake: Vec<Var> = scores_fake.iter().map(|t| g.constant(t.clone())).collect();
    let out = adversarial_graph(&mut g, &real, &fake, side, AdversarialForm::LeastSquares)?;
    Ok(g.value(out).data()[0])
}

// ---------------------------------------------------------------------------
// Pixel fidelity

/// `mean|a − target| + mean|b − target|`.
pub fn pixel_graph<T: Float>(g: &mut Graph<T>, a: Var, b: Var, target: Var) -> Var {
    let x = g.mean_abs_diff(a, target);
    let y = g.mean_abs_diff(b, target);
    g.add(x, y)
}

pub fn loss_pixel(enh_a: &Image, enh_b: &Image, target: &Image) -> Result<f64> {
    check_same(enh_a, target, "pixel a")?;
    check_same(enh_b, target, "pixel b")?;
    Ok(eval_on_images(&[enh_a, enh_b, target], |g, v| {
        pixel_graph(g, v[0], v[1], v[2])
    }))
}

// ---------------------------------------------------------------------------
// SSIM

/// Sums over every `k×k` window of an `h×w` plane (valid windows only).
fn window_sums<T: Float>(plane: &[T], h: usize, w: usize, k: usize) -> Vec<T> {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![T::ZERO; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        let mut acc: T = src[..k].iter().copied().sum();
        rows[y * ow] = acc;
        for x in 1..ow {
            acc += src[x + k - 1] - src[x - 1];
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![T::ZERO; oh * ow];
    for x in 0..ow {
        let mut acc = T::ZERO;
        for y in 0..k {
            acc += rows[y * ow + x];
        }
        out[x] = acc;
        for y in 1..oh {
            acc += rows[(y + k - 1) * ow + x] - rows[(y - 1) * ow + x];
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Adjoint of [`window_sums`]: every pixel receives the sum of the
/// coefficients of the windows that cover it.
fn scatter_windows<T: Float>(coef: &[T], h: usize, w: usize, k: usize) -> Vec<T> {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut cols = vec![T::ZERO; h * ow];
    for x in 0..ow {
        for y in 0..h {
            let lo = y.saturating_sub(k - 1);
            let hi = y.min(oh - 1);
            let mut acc = T::ZERO;
            for wy in lo..=hi {
                acc += coef[wy * ow + x];
            }
            cols[y * ow + x] = acc;
        }
    }
    let mut out = vec![T::ZERO; h * w];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(k - 1);
            let hi = x.min(ow - 1);
            let mut acc = T::ZERO;
            for wx in lo..=hi {
                acc += cols[y * ow + wx];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

struct SsimPlane<T> {
    /// Per-window SSIM value.
    map: Vec<T>,
    /// Per-window gradient coefficients `(α, β, γ)` for input a and for b.
    coef_a: [Vec<T>; 3],
    coef_b: [Vec<T>; 3],
}

fn ssim_plane<T: Float>(a: &[T], b: &[T], h: usize, w: usize, k: usize, c1: T, c2: T, grads: bool) -> SsimPlane<T> {
    let n = T::from_f64((k * k) as f64);
    let sa = window_sums(a, h, w, k);
    let sb = window_sums(b, h, w, k);
    let aa: Vec<T> = a.iter().map(|&v| v * v).collect();
    let bb: Vec<T> = b.iter().map(|&v| v * v).collect();
    let ab: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x * y).collect();
    let saa = window_sums(&aa, h, w, k);
    let sbb = window_sums(&bb, h, w, k);
    let sab = window_sums(&ab, h, w, k);
    let windows = sa.len();
    let two = T::from_f64(2.0);
    let mut map = Vec::with_capacity(windows);
    let mut coef_a = [vec![], vec![], vec![]];
    let mut coef_b = [vec![], vec![], vec![]];
    if grads {
        for v in coef_a.iter_mut().chain(coef_b.iter_mut()) {
            v.reserve(windows);
        }
    }
    for i in 0..windows {
        let (mu_a, mu_b) = (sa[i] / n, sb[i] / n);
        let var_a = saa[i] / n - mu_a * mu_a;
        let var_b = sbb[i] / n - mu_b * mu_b;
        let cov = sab[i] / n - mu_a * mu_b;
        let a1 = two * mu_a * mu_b + c1;
        let a2 = two * cov + c2;
        let b1 = mu_a * mu_a + mu_b * mu_b + c1;
        let b2 = var_a + var_b + c2;
        let s = a1 * a2 / (b1 * b2);
        map.push(s);
        if grads {
            let d_cov = two * a1 / (b1 * b2);
            let d_var = -s / b2;
            let d_mu_a = two * mu_b * a2 / (b1 * b2) - s * two * mu_a / b1;
            let d_mu_b = two * mu_a * a2 / (b1 * b2) - s * two * mu_b / b1;
            coef_a[0].push(d_mu_a - two * mu_a * d_var - mu_b * d_cov);
            coef_a[1].push(two * d_var);
            coef_a[2].push(d_cov);
            coef_b[0].push(d_mu_b - two * mu_b * d_var - mu_a * d_cov);
            coef_b[1].push(two * d_var);
            coef_b[2].push(d_cov);
        }
    }
    SsimPlane { map, coef_a, coef_b }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: SSIM_WINDOW,
            c1: SSIM_C1,
            c2: SSIM_C2,
        }
    }
}

impl SsimParams {
    fn validate(&self, h: usize, w: usize) -> Result<()> {
        if self.window % 2 == 0 || self.window == 0 || self.window > h.min(w) {
            return Err(Error::InvalidArgument(format!(
                "SSIM window must be odd and at most {}, got {}",
                h.min(w),
                self.window
            )));
        }
        Ok(())
    }
}

struct SsimOp<T> {
    params: SsimParams,
    coef: Vec<([Vec<T>; 3], [Vec<T>; 3])>,
}

impl<T: Float> Op<T> for SsimOp<T> {
    fn name(&self) -> &'static str {
        "ssim"
    }

    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, wants: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (a, b) = (i[0], i[1]);
        let (n, c, h, w) = a.dims4();
        let k = self.params.window;
        let windows = (h - k + 1) * (w - k + 1);
        let scale = g.data()[0] / T::from_f64((n * c * windows * k * k) as f64);
        let mut da = wants[0].then(|| Tensor::zeros(a.shape()));
        let mut db = wants[1].then(|| Tensor::zeros(b.shape()));
        let hw = h * w;
        for (p, (ca, cb)) in self.coef.iter().enumerate() {
            let pa = &a.data()[p * hw..(p + 1) * hw];
            let pb = &b.data()[p * hw..(p + 1) * hw];
            for (target, coef, own, other) in [
                (da.as_mut(), ca, pa, pb),
                (db.as_mut(), cb, pb, pa),
            ] {
                let Some(target) = target else { continue };
                let alpha = scatter_windows(&coef[0], h, w, k);
                let beta = scatter_windows(&coef[1], h, w, k);
                let gamma = scatter_windows(&coef[2], h, w, k);
                let dst = &mut target.data_mut()[p * hw..(p + 1) * hw];
                for j in 0..hw {
                    dst[j] = scale * (alpha[j] + beta[j] * own[j] + gamma[j] * other[j]);
                }
            }
        }
        vec![da, db]
    }
}

/// Mean SSIM over all valid box windows, channels and batch items.
pub fn ssim_graph<T: Float>(g: &mut Graph<T>, a: Var, b: Var, params: SsimParams) -> Result<Var> {
    let (av, bv) = (g.value(a), g.value(b));
    if av.shape() != bv.shape() || av.shape().len() != 4 {
        return Err(Error::Shape(format!(
            "ssim operands {:?} vs {:?}",
            av.shape(),
            bv.shape()
        )));
    }
    let (n, c, h, w) = av.dims4();
    params.validate(h, w)?;
    let grads = g.requires_grad(a) || g.requires_grad(b);
    let (c1, c2) = (T::from_f64(params.c1), T::from_f64(params.c2));
    let hw = h * w;
    let mut total = T::ZERO;
    let mut count = 0usize;
    let mut coef = Vec::new();
    for p in 0..n * c {
        let plane = ssim_plane(
            &av.data()[p * hw..(p + 1) * hw],
            &bv.data()[p * hw..(p + 1) * hw],
            h,
            w,
            params.window,
            c1,
            c2,
            grads,
        );
        total += plane.map.iter().copied().sum::<T>();
        count += plane.map.len();
        if grads {
            coef.push((plane.coef_a, plane.coef_b));
        }
    }
    let value = total / T::from_f64(count as f64);
    Ok(g.apply(SsimOp { params, coef }, &[a, b], Tensor::scalar(value)))
}

/// Structural similarity of two images, in `[−1, 1]`.
pub fn ssim(a: &Image, b: &Image, window: usize, c1: f64, c2: f64) -> Result<f64> {
    check_same(a, b, "ssim")?;
    let params = SsimParams { window, c1, c2 };
    let mut g = Graph::<f64>::new();
    let (x, y) = (g.constant(a.to_tensor()), g.constant(b.to_tensor()));
    let out = ssim_graph(&mut g, x, y, params)?;
    Ok(g.value(out).data()[0])
}

/// Per-window SSIM averaged over channels, `(H−k+1)×(W−k+1)` row-major.
pub fn ssim_map(a: &Image, b: &Image, params: SsimParams) -> Result<Vec<f64>> {
    check_same(a, b, "ssim_map")?;
    params.validate(a.height(), a.width())?;
    let (h, w) = (a.height(), a.width());
    let mut acc: Vec<f64> = Vec::new();
    for c in 0..3 {
        let plane = ssim_plane(a.channel(c), b.channel(c), h, w, params.window, params.c1, params.c2, false);
        if acc.is_empty() {
            acc = plane.map;
        } else {
            for (x, y) in acc.iter_mut().zip(plane.map) {
                *x += y;
            }
        }
    }
    Ok(acc.into_iter().map(|v| v / 3.0).collect())
}

/// `(1 − SSIM(a, target)) + (1 − SSIM(b, target))`.
pub fn ssim_pair_graph<T: Float>(g: &mut Graph<T>, a: Var, b: Var, target: Var) -> Result<Var> {
    let sa = ssim_graph(g, a, target, SsimParams::default())?;
    let sb = ssim_graph(g, b, target, SsimParams::default())?;
    let sum = g.add(sa, sb);
    let neg = g.scale(sum, -T::ONE);
    Ok(g.add_scalar(neg, T::from_f64(2.0)))
}

pub fn loss_ssim_pair(enh_a: &Image, enh_b: &Image, target: &Image) -> Result<f64> {
    check_same(enh_a, target, "ssim a")?;
    check_same(enh_b, target, "ssim b")?;
    let mut g = Graph::<f64>::new();
    let v: Vec<Var> = [enh_a, enh_b, target]
        .iter()
        .map(|i| g.constant(i.to_tensor()))
        .collect();
    let out = ssim_pair_graph(&mut g, v[0], v[1], v[2])?;
    Ok(g.value(out).data()[0])
}

// ---------------------------------------------------------------------------
// Perceptual

/// Fixed random convolutional pyramid used as the perceptual feature space.
///
/// Each stage is a stride-2 3×3 convolution followed by ReLU. Weights are
/// drawn once from a seeded Gaussian with He scaling and never trained.
#[derive(Clone, Debug)]
pub struct PerceptualExtractor {
    layers: Vec<(Tensor<f64>, Tensor<f64>)>,
}

pub const PERCEPTUAL_CHANNELS: [usize; 3] = [8, 16, 32];
pub const PERCEPTUAL_SEED: u64 = 0;

impl Default for PerceptualExtractor {
    fn default() -> Self {
        Self::new(PERCEPTUAL_SEED, &PERCEPTUAL_CHANNELS)
    }
}

impl PerceptualExtractor {
    pub fn new(seed: u64, channels: &[usize]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = 3;
        let layers = channels
            .iter()
            .map(|&cout| {
                let std = (2.0 / (cin * 9) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                let w = Tensor::from_fn(&[cout, cin, 3, 3], |_| normal.sample(&mut rng));
                let b = Tensor::zeros(&[cout]);
                cin = cout;
                (w, b)
            })
            .collect();
        Self { layers }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Feature map of every stage.
    pub fn features<T: Float>(&self, g: &mut Graph<T>, x: Var) -> Vec<Var> {
        let mut h = x;
        let mut out = Vec::with_capacity(self.layers.len());
        for (w, b) in &self.layers {
            let wv = g.constant(w.cast());
            let bv = g.constant(b.cast());
            let y = g.conv2d(h, wv, Some(bv), Conv2dSpec::new(2, 1));
            h = g.relu(y);
            out.push(h);
        }
        out
    }

    /// Smallest input side the pyramid accepts.
    pub fn min_side(&self) -> usize {
        1usize << self.layers.len().saturating_sub(1)
    }
}

/// `Σ_j mean((Φ_j(a) − Φ_j(t))²) + Σ_j mean((Φ_j(b) − Φ_j(t))²)`.
pub fn perceptual_graph<T: Float>(
    g: &mut Graph<T>,
    net: &PerceptualExtractor,
    a: Var,
    b: Var,
    target: Var,
) -> Var {
    let ft = net.features(g, target);
    let ft: Vec<Var> = ft.into_iter().map(|v| g.detach(v)).collect();
    let mut parts = Vec::new();
    for x in [a, b] {
        let fx = net.features(g, x);
        for (&p, &q) in fx.iter().zip(&ft) {
            parts.push((g.mean_sq_diff(p, q), T::ONE));
        }
    }
    g.weighted_sum(&parts)
}

pub fn loss_perceptual(
    enh_a: &Image,
    enh_b: &Image,
    target: &Image,
    net: &PerceptualExtractor,
) -> Result<f64> {
    check_same(enh_a, target, "perceptual a")?;
    check_same(enh_b, target, "perceptual b")?;
    Ok(eval_on_images(&[enh_a, enh_b, target], |g, v| {
        perceptual_graph(g, net, v[0], v[1], v[2])
    }))
}

// ---------------------------------------------------------------------------
// Total variation

struct TvOp;

impl<T: Float> Op<T> for TvOp {
    fn name(&self) -> &'static str {
        "total_variation"
    }

    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        let x = i[0];
        let (n, c, h, w) = x.dims4();
        let scale = g.data()[0] / T::from_f64(n as f64);
        let eps = T::from_f64(TV_EPS);
        let mut dx = Tensor::zeros(x.shape());
        let hw = h * w;
        for p in 0..n * c {
            let src = &x.data()[p * hw..(p + 1) * hw];
            let dst = &mut dx.data_mut()[p * hw..(p + 1) * hw];
            for y in 0..h - 1 {
                for xx in 0..w - 1 {
                    let v = src[y * w + xx];
                    let dv = v - src[(y + 1) * w + xx];
                    let dh = v - src[y * w + xx + 1];
                    let r = (dv * dv + dh * dh + eps).sqrt();
                    let (gv, gh) = (scale * dv / r, scale * dh / r);
                    dst[y * w + xx] += gv + gh;
                    dst[(y + 1) * w + xx] -= gv;
                    dst[y * w + xx + 1] -= gh;
                }
            }
        }
        vec![Some(dx)]
    }
}

/// Isotropic total variation summed over pixels and channels, averaged over the batch.
pub fn tv_graph<T: Float>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let xv = g.value(x);
    let (n, c, h, w) = xv.dims4();
    if h < 2 || w < 2 {
        return Err(Error::InvalidArgument("total variation needs H, W >= 2".into()));
    }
    let eps = T::from_f64(TV_EPS);
    let hw = h * w;
    let mut total = T::ZERO;
    for p in 0..n * c {
        let src = &xv.data()[p * hw..(p + 1) * hw];
        for y in 0..h - 1 {
            for xx in 0..w - 1 {
                let v = src[y * w + xx];
                let dv = v - src[(y + 1) * w + xx];
                let dh = v - src[y * w + xx + 1];
                total += (dv * dv + dh * dh + eps).sqrt();
            }
        }
    }
    let value = total / T::from_f64(n as f64);
    Ok(g.apply(TvOp, &[x], Tensor::scalar(value)))
}

pub fn loss_tv(img: &Image) -> Result<f64> {
    let mut g = Graph::<f64>::new();
    let x = g.constant(img.to_tensor());
    let out = tv_graph(&mut g, x)?;
    Ok(g.value(out).data()[0])
}

// ---------------------------------------------------------------------------
// Latent

/// L1 distance between two batches of style vectors (`N×d`), averaged over the batch.
pub fn latent_graph<T: Float>(g: &mut Graph<T>, za: Var, zb: Var) -> Var {
    g.row_l1_diff(za, zb)
}

// ---------------------------------------------------------------------------
// Aggregation and reporting

/// Raw value of every objective term for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub cyc: f64,
    #[serde(rename = "self")]
    pub self_rec: f64,
    pub gan_g: f64,
    pub gan_d: f64,
    pub pixel: f64,
    pub ssim: f64,
    pub per: f64,
    pub tv: f64,
    pub latent: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    #[serde(flatten)]
    pub terms: LossTerms,
    pub iq: f64,
    pub tran: f64,
    pub en: f64,
    pub total: f64,
}

/// Combine terms into the translation, enhancement and overall objectives.
///
/// `iq = ssim + pixel`, `tran = gan_g + λ_self·self + cyc`,
/// `en = λ_latent·latent + λ_tv·tv + λ_per·per + λ_iq·iq`, `total = tran + en`.
/// The discriminator term `gan_d` is reported but not part of `total`.
pub fn aggregate(terms: &LossTerms, w: &LossWeights) -> LossReport {
    let iq = terms.ssim + terms.pixel;
    let tran = terms.gan_g + w.lambda_self * terms.self_rec + terms.cyc;
    let en = w.lambda_latent * terms.latent
        + w.lambda_tv * terms.tv
        + w.lambda_per * terms.per
        + w.lambda_iq * iq;
    LossReport {
        terms: *terms,
        iq,
        tran,
        en,
        total: tran + en,
    }
}

impl LossReport {
    pub const CSV_HEADER: [&'static str; 14] = [
        "step", "cyc", "self", "gan_g", "gan_d", "pixel", "ssim", "per", "tv", "latent", "iq",
        "tran", "en", "total",
    ];

    pub fn values(&self) -> [f64; 13] {
        let t = &self.terms;
        [
            t.cyc, t.self_rec, t.gan_g, t.gan_d, t.pixel, t.ssim, t.per, t.tv, t.latent, self.iq,
            self.tran, self.en, self.total,
        ]
    }

    /// The first non-finite entry, by column name.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.values()
            .iter()
            .zip(&Self::CSV_HEADER[1..])
            .find(|(v, _)| !v.is_finite())
            .map(|(_, name)| *name)
    }

    /// One CSV row; floats use the shortest representation that round-trips.
    pub fn csv_row(&self, step: u64) -> String {
        let mut row = step.to_string();
        for v in self.values() {
            row.push(',');
            row.push_str(&format!("{v:?}"));
        }
        row
    }

    pub fn write_csv_header(out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER.join(","))
    }

    /// Parse a row written by [`LossReport::csv_row`].
    pub fn parse_csv_row(line: &str) -> Result<(u64, LossReport)> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != Self::CSV_HEADER.len() {
            return Err(Error::Data(format!("loss row has {} fields", fields.len())));
        }
        let step = fields[0]
            .parse()
            .map_err(|_| Error::Data(format!("bad step {:?}", fields[0])))?;
        let mut v = [0.0f64; 13];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse()
                .map_err(|_| Error::Data(format!("bad value {f:?}")))?;
        }
        let terms = LossTerms {
            cyc: v[0],
            self_rec: v[1],
            gan_g: v[2],
            gan_d: v[3],
            pixel: v[4],
            ssim: v[5],
            per: v[6],
            tv: v[7],
            latent: v[8],
        };
        Ok((
            step,
            LossReport {
                terms,
                iq: v[9],
                tran: v[10],
                en: v[11],
                total: v[12],
            },
        ))
    }
}
