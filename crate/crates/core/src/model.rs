//! Encoders, latent transform, AdaIN generator and multi-scale discriminators.
//!
//! Parameters live in two [`ParamStore`]s: the generator side (content
//! encoder, both style encoders, transform unit, decoder) and the
//! discriminator side. Network functions are generic over the scalar type
//! and operate on a [`Graph`] with the stores bound through [`Bound`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use uwstyle_tensor::{Bound, Conv2dSpec, Float, Graph, ParamId, ParamStore, Tensor, Var};

use crate::error::{Error, Result};
use crate::image::Image;

pub const NORM_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;
const LEAKY_SLOPE: f64 = 0.2;
const STYLE_STAGES: usize = 4;
const DIS_LAYERS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub base_filters: usize,
    pub content_channels: usize,
    pub num_content_resblocks: usize,
    pub style_channels: usize,
    pub latent_dim: usize,
    pub generator_resblocks: usize,
    pub adain_param_net_hidden: usize,
    pub transform_hidden: usize,
    pub discriminator_scales: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_filters: 16,
            content_channels: 64,
            num_content_resblocks: 3,
            style_channels: 64,
            latent_dim: 8,
            generator_resblocks: 3,
            adain_param_net_hidden: 128,
            transform_hidden: 32,
            discriminator_scales: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("base_filters", self.base_filters),
            ("content_channels", self.content_channels),
            ("style_channels", self.style_channels),
            ("latent_dim", self.latent_dim),
            ("adain_param_net_hidden", self.adain_param_net_hidden),
            ("transform_hidden", self.transform_hidden),
            ("discriminator_scales", self.discriminator_scales),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.content_channels % 4 != 0 {
            return Err(Error::InvalidArgument(
                "content_channels must be divisible by 4".into(),
            ));
        }
        Ok(())
    }

    /// Smallest input side every network accepts.
    pub fn min_input_side(&self) -> usize {
        let style = 1 << STYLE_STAGES;
        let dis = 1 << (DIS_LAYERS + self.discriminator_scales - 1);
        style.max(dis)
    }

    /// Inputs must be multiples of 4 and at least [`Self::min_input_side`].
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let min = self.min_input_side();
        if h % 4 != 0 || w % 4 != 0 || h < min || w < min {
            return Err(Error::Shape(format!(
                "input {h}x{w} must be divisible by 4 and at least {min}x{min}"
            )));
        }
        Ok(())
    }

    fn decoder_channels(&self) -> [usize; 3] {
        let c = self.content_channels;
        [c, c / 2, c / 4]
    }

    /// Number of γ/β channels the AdaIN parameter network produces.
    pub fn adain_channels(&self) -> usize {
        let [c0, c1, c2] = self.decoder_channels();
        2 * self.generator_resblocks * c0 + c1 + c2
    }
}

/// Which degraded domain an encoder or discriminator belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "SYN")]
    Syn,
    #[serde(rename = "REAL")]
    Real,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Syn => "syn",
            Domain::Real => "real",
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "syn" | "synthetic" => Ok(Domain::Syn),
            "real" => Ok(Domain::Real),
            _ => Err(Error::InvalidArgument(format!(
                "unknown domain {s:?} (expected syn or real)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StyleTag {
    #[serde(rename = "SYN")]
    Syn,
    #[serde(rename = "REAL")]
    Real,
    #[serde(rename = "CLEAN")]
    Clean,
    #[serde(rename = "INTERP")]
    Interp,
}

impl From<Domain> for StyleTag {
    fn from(d: Domain) -> Self {
        match d {
            Domain::Syn => StyleTag::Syn,
            Domain::Real => StyleTag::Real,
        }
    }
}

impl StyleTag {
    /// The degraded domain this tag names, if any.
    pub fn domain(self) -> Result<Domain> {
        match self {
            StyleTag::Syn => Ok(Domain::Syn),
            StyleTag::Real => Ok(Domain::Real),
            other => Err(Error::InvalidArgument(format!(
                "{other:?} is not a degraded domain"
            ))),
        }
    }
}

/// A style vector with its domain tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleLatent {
    pub vector: Vec<f64>,
    pub tag: StyleTag,
}

impl StyleLatent {
    pub fn new(vector: Vec<f64>, tag: StyleTag) -> Result<Self> {
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("style latent".into()));
        }
        Ok(Self { vector, tag })
    }
}

// ---------------------------------------------------------------------------
// Layers

#[derive(Clone, Debug)]
struct Conv {
    w: ParamId,
    b: ParamId,
    spec: Conv2dSpec,
}

impl Conv {
    fn forward<T: Float>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        g.conv2d(x, p.var(self.w), Some(p.var(self.b)), self.spec)
    }
}

#[derive(Clone, Debug)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn forward<T: Float>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        g.linear(x, p.var(self.w), Some(p.var(self.b)))
    }
}

struct Init<'a> {
    store: &'a mut ParamStore<f32>,
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl Init<'_> {
    fn gaussian(&mut self, shape: &[usize]) -> Tensor<f32> {
        let (rng, normal) = (&mut self.rng, &self.normal);
        Tensor::from_fn(shape, |_| normal.sample(rng) as f32)
    }

    /// N(0, INIT_STD) weights, rescaled to He std `sqrt(2 / fan_in)` for the
    /// style encoders and the AdaIN parameter network. At std 0.02 the style
    /// codes start near zero and the decoder learns to ignore them.
    fn weights(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Tensor<f32> {
        let w = self.gaussian(shape);
        if name.starts_with("style_") || name.starts_with("decoder/mlp") {
            let f = ((2.0 / fan_in as f64).sqrt() / INIT_STD) as f32;
            w.map(|v| v * f)
        } else {
            w
        }
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Conv {
        let w = self.weights(name, &[cout, cin, k, k], cin * k * k);
        Conv {
            w: self.store.add(format!("{name}/w"), w),
            b: self.store.add(format!("{name}/b"), Tensor::zeros(&[cout])),
            spec: Conv2dSpec::new(stride, (k - stride + 1) / 2),
        }
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, zero: bool) -> Linear {
        let w = if zero {
            Tensor::zeros(&[fan_out, fan_in])
        } else {
            self.weights(name, &[fan_out, fan_in], fan_in)
        };
        Linear {
            w: self.store.add(format!("{name}/w"), w),
            b: self.store.add(format!("{name}/b"), Tensor::zeros(&[fan_out])),
        }
    }
}

// ---------------------------------------------------------------------------
// Normalization

/// `γ·(x − μ)/σ + β` per `(n, c)` plane, with `γ`, `β` shaped `N×C`.
pub fn adain<T: Float>(g: &mut Graph<T>, x: Var, gamma: Var, beta: Var) -> Var {
    let n = g.instance_norm(x, T::from_f64(NORM_EPS));
    g.channel_affine(n, gamma, beta)
}

/// Tensor-level AdaIN; `gamma` and `beta` have one entry per channel and
/// are shared across the batch.
pub fn adain_tensor(x: &Tensor<f64>, gamma: &[f64], beta: &[f64]) -> Result<Tensor<f64>> {
    if x.shape().len() != 4 {
        return Err(Error::Shape(format!("adain input {:?}", x.shape())));
    }
    let (n, c, h, w) = x.dims4();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!(
            "adain has {c} channels but {} scales and {} shifts",
            gamma.len(),
            beta.len()
        )));
    }
    if h * w < 2 {
        return Err(Error::Shape("adain needs at least two pixels".into()));
    }
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let tile = |v: &[f64]| Tensor::from_fn(&[n, c], |i| v[i % c]);
    let gv = g.constant(tile(gamma));
    let bv = g.constant(tile(beta));
    let out = adain(&mut g, xv, gv, bv);
    Ok(g.value(out).clone())
}

/// Tensor-level instance normalization.
pub fn instance_norm_tensor(x: &Tensor<f64>, eps: f64) -> Result<Tensor<f64>> {
    if x.shape().len() != 4 {
        return Err(Error::Shape(format!("instance_norm input {:?}", x.shape())));
    }
    let (_, _, h, w) = x.dims4();
    if h * w < 2 || eps <= 0.0 {
        return Err(Error::InvalidArgument(
            "instance_norm needs at least two pixels and eps > 0".into(),
        ));
    }
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let out = g.instance_norm(v, eps);
    Ok(g.value(out).clone())
}

// ---------------------------------------------------------------------------
// Components

#[derive(Clone, Debug)]
struct ContentEncoder {
    stem: Conv,
    down: Vec<Conv>,
    blocks: Vec<(Conv, Conv)>,
}

impl ContentEncoder {
    fn build(init: &mut Init, cfg: &ModelConfig) -> Self {
        let b = cfg.base_filters;
        let stem = init.conv("content/stem", 3, b, 7, 1);
        let down = vec![
            init.conv("content/down0", b, 2 * b, 4, 2),
            init.conv("content/down1", 2 * b, cfg.content_channels, 4, 2),
        ];
        let c = cfg.content_channels;
        let blocks = (0..cfg.num_content_resblocks)
            .map(|i| {
                (
                    init.conv(&format!("content/res{i}/conv0"), c, c, 3, 1),
                    init.conv(&format!("content/res{i}/conv1"), c, c, 3, 1),
                )
            })
            .collect();
        Self { stem, down, blocks }
    }

    fn forward<T: Float>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let eps = T::from_f64(NORM_EPS);
        let mut h = x;
        for conv in std::iter::once(&self.stem).chain(&self.down) {
            let y = conv.forward(g, p, h);
            let y = g.instance_norm(y, eps);
            h = g.relu(y);
        }
        for (c0, c1) in &self.blocks {
            let y = c0.forward(g, p, h);
            let y = g.instance_norm(y, eps);
            let y = g.relu(y);
            let y = c1.forward(g, p, y);
            let y = g.instance_norm(y, eps);
            h = g.add(h, y);
        }
        h
    }
}

#[derive(Clone, Debug)]
struct StyleEncoder {
    convs: Vec<Conv>,
    head: Linear,
}

impl StyleEncoder {
    fn build(init: &mut Init, cfg: &ModelConfig, prefix: &str) -> Self {
        let mut c = cfg.base_filters;
        let mut convs = vec![init.conv(&format!("{prefix}/stem"), 3, c, 7, 1)];
        for i in 0..STYLE_STAGES {
            let next = (c * 2).min(cfg.style_channels);
            convs.push(init.conv(&format!("{prefix}/down{i}"), c, next, 4, 2));
            c = next;
        }
        let head = init.linear(&format!("{prefix}/head"), c, cfg.latent_dim, false);
        Self { convs, head }
    }

    fn forward<T: Float>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let mut h = x;
        for conv in &self.convs {
            let y = conv.forward(g, p, h);
            h = g.relu(y);
        }
        let pooled = g.global_avg_pool(h);
        self.head.forward(g, p, pooled)
    }
}

#[derive(Clone, Debug)]
struct Transform {
    layers: Vec<Linear>,
}

impl Transform {
    fn build(init: &mut Init, cfg: &ModelConfig) -> Self {
        let (d, h) = (cfg.latent_dim, cfg.transform_hidden);
        Self {
            layers: vec![
                init.linear("transform/fc0", d, h, false),
                init.linear("transform/fc1", h, h, false),
                init.linear("transform/fc2", h, d, true),
            ],
        }
    }

    fn forward<T: Float>(&self, g: &mut Graph<T>, p: &Bound, z: Var) -> Var {
        let mut h = z;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, p, h);
            if i < last {
                h = g.relu(h);
            }
        }
        g.add(z, h)
    }
}

#[derive(Clone, Debug)]
struct Decoder {
    mlp: Vec<Linear>,
    blocks: Vec<(Conv, Conv)>,
    up: Vec<Conv>,
    out: Conv,
    channels: [usize; 3],
}

impl Decoder {
    fn build(init: &mut Init, cfg: &ModelConfig) -> Self {
        let hid = cfg.adain_param_net_hidden;
        let mlp = vec![
            init.linear("decoder/mlp0", cfg.latent_dim, hid, false),
            init.linear("decoder/mlp1", hid, hid, false),
            init.linear("decoder/mlp2", hid, 2 * cfg.adain_channels(), false),
        ];
        let channels = cfg.decoder_channels();
        let c = channels[0];
        let blocks = (0..cfg.generator_resblocks)
            .map(|i| {
                (
                    init.conv(&format!("decoder/res{i}/conv0"), c, c, 3, 1),
                    init.conv(&format!("decoder/res{i}/conv1"), c, c, 3, 1),
                )
            })
            .collect();
        let up = vec![
            init.conv("decoder/up0", channels[0], channels[1], 3, 1),
            init.conv("decoder/up1", channels[1], channels[2], 3, 1),
        ];
        let out = init.conv("decoder/out", channels[2], 3, 7, 1);
        Self {
            mlp,
            blocks,
            up,
            out,
            channels,
        }
    }

    fn forward<T: Float>(&self, g: &mut Graph<T>, p: &Bound, content: Var, style: Var) -> Var {
        let mut h = style;
        for (i, layer) in self.mlp.iter().enumerate() {
            h = layer.forward(g, p, h);
            if i + 1 < self.mlp.len() {
                h = g.relu(h);
            }
        }
        let params = h;
        let total = g.shape(params)[1] / 2;
        let mut offset = 0;
        let mut next_affine = |g: &mut Graph<T>, c: usize| {
            let raw_gamma = g.narrow_cols(params, offset, c);
            let beta = g.narrow_cols(params, total + offset, c);
            offset += c;
            (g.add_scalar(raw_gamma, T::ONE), beta)
        };

        let mut x = content;
        for (c0, c1) in &self.blocks {
            let c = self.channels[0];
            let y = c0.forward(g, p, x);
            let (ga, be) = next_affine(g, c);
            let y = adain(g, y, ga, be);
            let y = g.relu(y);
            let y = c1.forward(g, p, y);
            let (ga, be) = next_affine(g, c);
            let y = adain(g, y, ga, be);
            x = g.add(x, y);
        }
        for (conv, &c) in self.up.iter().zip(&self.channels[1..]) {
            let y = g.upsample_nearest2x(x);
            let y = conv.forward(g, p, y);
            let (ga, be) = next_affine(g, c);
            let y = adain(g, y, ga, be);
            x = g.relu(y);
        }
        let y = self.out.forward(g, p, x);
        g.sigmoid(y)
    }
}

#[derive(Clone, Debug)]
struct Discriminator {
    scales: Vec<(Vec<Conv>, Conv)>,
}

impl Discriminator {
    fn build(init: &mut Init, cfg: &ModelConfig, prefix: &str) -> Self {
        let scales = (0..cfg.discriminator_scales)
            .map(|s| {
                let mut c = 3;
                let mut next = cfg.base_filters;
                let convs = (0..DIS_LAYERS)
                    .map(|i| {
                        let conv = init.conv(&format!("{prefix}/scale{s}/conv{i}"), c, next, 4, 2);
                        c = next;
                        next *= 2;
                        conv
                    })
                    .collect();
                let head = init.conv(&format!("{prefix}/scale{s}/head"), c, 1, 1, 1);
                (convs, head)
            })
            .collect();
        Self { scales }
    }

    fn forward<T: Float>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Vec<Var> {
        let slope = T::from_f64(LEAKY_SLOPE);
        let mut input = x;
        let mut out = Vec::with_capacity(self.scales.len());
        for (i, (convs, head)) in self.scales.iter().enumerate() {
            if i > 0 {
                input = g.avg_pool2x(input);
            }
            let mut h = input;
            for conv in convs {
                let y = conv.forward(g, p, h);
                h = g.leaky_relu(y, slope);
            }
            out.push(head.forward(g, p, h));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Model

/// All networks with their parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    gen: ParamStore<f32>,
    dis: ParamStore<f32>,
    content: ContentEncoder,
    style_syn: StyleEncoder,
    style_real: StyleEncoder,
    transform: Transform,
    decoder: Decoder,
    dis_syn: Discriminator,
    dis_real: Discriminator,
}

/// Parameter count of one named component.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentSize {
    pub name: String,
    pub parameters: usize,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let normal = Normal::new(0.0, INIT_STD).expect("positive std");
        let mut gen = ParamStore::new();
        let mut init = Init {
            store: &mut gen,
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal,
        };
        let content = ContentEncoder::build(&mut init, &config);
        let style_syn = StyleEncoder::build(&mut init, &config, "style_syn");
        let style_real = StyleEncoder::build(&mut init, &config, "style_real");
        let transform = Transform::build(&mut init, &config);
        let decoder = Decoder::build(&mut init, &config);
        let rng = init.rng;
        let mut dis = ParamStore::new();
        let mut init = Init {
            store: &mut dis,
            rng,
            normal,
        };
        let dis_syn = Discriminator::build(&mut init, &config, "dis_syn");
        let dis_real = Discriminator::build(&mut init, &config, "dis_real");
        Ok(Self {
            config,
            gen,
            dis,
            content,
            style_syn,
            style_real,
            transform,
            decoder,
            dis_syn,
            dis_real,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn gen_params(&self) -> &ParamStore<f32> {
        &self.gen
    }

    pub fn gen_params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.gen
    }

    pub fn dis_params(&self) -> &ParamStore<f32> {
        &self.dis
    }

    pub fn dis_params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.dis
    }

    /// Parameter counts per component, in a fixed order.
    pub fn summary(&self) -> Vec<ComponentSize> {
        let groups = [
            ("content_encoder", &self.gen, "content/"),
            ("style_encoder_syn", &self.gen, "style_syn/"),
            ("style_encoder_real", &self.gen, "style_real/"),
            ("transform", &self.gen, "transform/"),
            ("generator", &self.gen, "decoder/"),
            ("discriminator_syn", &self.dis, "dis_syn/"),
            ("discriminator_real", &self.dis, "dis_real/"),
        ];
        groups
            .iter()
            .map(|(name, store, prefix)| ComponentSize {
                name: (*name).to_string(),
                parameters: store
                    .iter()
                    .filter(|(n, _)| n.starts_with(prefix))
                    .map(|(_, t)| t.numel())
                    .sum(),
            })
            .collect()
    }

    pub fn encode_content<T: Float>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        self.content.forward(g, p, x)
    }

    pub fn encode_style<T: Float>(&self, g: &mut Graph<T>, p: &Bound, x: Var, domain: Domain) -> Var {
        match domain {
            Domain::Syn => self.style_syn.forward(g, p, x),
            Domain::Real => self.style_real.forward(g, p, x),
        }
    }

    pub fn transform_style<T: Float>(&self, g: &mut Graph<T>, p: &Bound, z: Var) -> Var {
        self.transform.forward(g, p, z)
    }

    pub fn decode<T: Float>(&self, g: &mut Graph<T>, p: &Bound, content: Var, style: Var) -> Var {
        self.decoder.forward(g, p, content, style)
    }

    /// One score map per scale, finest first. `p` binds the discriminator store.
    pub fn discriminate<T: Float>(&self, g: &mut Graph<T>, p: &Bound, x: Var, domain: Domain) -> Vec<Var> {
        match domain {
            Domain::Syn => self.dis_syn.forward(g, p, x),
            Domain::Real => self.dis_real.forward(g, p, x),
        }
    }

    /// Run `f` on a fresh `f32` graph with the generator-side parameters
    /// bound as constants.
    pub fn infer<R>(&self, f: impl FnOnce(&mut Graph<f32>, &Bound) -> Result<R>) -> Result<R> {
        let mut g = Graph::new();
        let p = self.gen.bind(&mut g, false);
        f(&mut g, &p)
    }

    fn image_var(&self, g: &mut Graph<f32>, img: &Image) -> Result<Var> {
        self.config.check_input(img.height(), img.width())?;
        Ok(g.constant(img.to_tensor()))
    }

    /// Content latent of one image, `C×H/4×W/4` with a leading batch axis.
    pub fn content_of(&self, img: &Image) -> Result<Tensor<f32>> {
        self.infer(|g, p| {
            let x = self.image_var(g, img)?;
            let c = self.encode_content(g, p, x);
            Ok(g.value(c).clone())
        })
    }

    pub fn style_of(&self, img: &Image, tag: StyleTag) -> Result<StyleLatent> {
        let domain = tag.domain()?;
        self.infer(|g, p| {
            let x = self.image_var(g, img)?;
            let z = self.encode_style(g, p, x, domain);
            latent_from(g.value(z), tag)
        })
    }

    /// Map a degraded style to the clean domain.
    pub fn transform_latent(&self, z: &StyleLatent) -> Result<StyleLatent> {
        z.tag.domain()?;
        self.check_latent(z)?;
        self.infer(|g, p| {
            let v = g.constant(style_tensor(z));
            let t = self.transform_style(g, p, v);
            latent_from(g.value(t), StyleTag::Clean)
        })
    }

    /// Decode a content latent (as returned by [`Model::content_of`]) with a style.
    pub fn decode_latents(&self, content: &Tensor<f32>, style: &StyleLatent) -> Result<Image> {
        self.check_latent(style)?;
        let shape = content.shape();
        if shape.len() != 4 || shape[0] != 1 || shape[1] != self.config.content_channels {
            return Err(Error::Shape(format!(
                "content latent {shape:?} does not match {} channels",
                self.config.content_channels
            )));
        }
        self.infer(|g, p| {
            let c = g.constant(content.clone());
            let s = g.constant(style_tensor(style));
            let y = self.decode(g, p, c, s);
            Image::from_tensor(g.value(y), 0)
        })
    }

    /// Restyle `img` (content kept) with the style extracted from `style_src`.
    pub fn translate(&self, img: &Image, style_src: &Image, target: Domain) -> Result<Image> {
        let content = self.content_of(img)?;
        let style = self.style_of(style_src, target.into())?;
        self.decode_latents(&content, &style)
    }

    /// Crop the bottom/right remainder so both sides are multiples of 4.
    pub fn fit_input(&self, img: &Image) -> Result<Image> {
        let (h, w) = (img.height() / 4 * 4, img.width() / 4 * 4);
        self.config.check_input(h, w)?;
        if (h, w) == (img.height(), img.width()) {
            return Ok(img.clone());
        }
        img.crop(0, 0, h, w)
    }

    /// Enhance a degraded image at level `alpha` (0 = reconstruction, 1 = full).
    pub fn enhance(&self, img: &Image, domain: Domain, alpha: f64) -> Result<Image> {
        let content = self.content_of(img)?;
        let z = self.style_of(img, domain.into())?;
        let clean = self.transform_latent(&z)?;
        let z = crate::latentlab::manipulate_style(&z, &clean, alpha)?;
        self.decode_latents(&content, &z)
    }

    fn check_latent(&self, z: &StyleLatent) -> Result<()> {
        if z.vector.len() != self.config.latent_dim {
            return Err(Error::Shape(format!(
                "style latent has {} entries, model expects {}",
                z.vector.len(),
                self.config.latent_dim
            )));
        }
        Ok(())
    }
}

fn style_tensor(z: &StyleLatent) -> Tensor<f32> {
    Tensor::from_fn(&[1, z.vector.len()], |i| z.vector[i] as f32)
}

fn latent_from(t: &Tensor<f32>, tag: StyleTag) -> Result<StyleLatent> {
    StyleLatent::new(t.data().iter().map(|&v| f64::from(v)).collect(), tag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(seed: u64) -> Image {
        crate::datasynth::render_clean_scene(seed, 64, 64).unwrap().0
    }

    #[test]
    fn instance_norm_examples() {
        let x = Tensor::full(&[1, 1, 4, 4], 0.7);
        let y = instance_norm_tensor(&x, 1e-5).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-9));

        let x = Tensor::new(&[1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        let y = instance_norm_tensor(&x, 1e-12).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-9 && (y.data()[1] - 1.0).abs() < 1e-9);

        let x = Tensor::new(&[1, 1, 1, 1], vec![0.5]).unwrap();
        assert!(instance_norm_tensor(&x, 1e-5).is_err());
    }

    #[test]
    fn adain_transports_statistics() {
        // Two-level channel: mean 0.5, std 0.25.
        let x = Tensor::from_fn(&[1, 1, 4, 4], |i| if i % 2 == 0 { 0.25 } else { 0.75 });
        let y = adain_tensor(&x, &[2.0], &[1.0]).unwrap();
        let mean = y.mean();
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
        assert!((mean - 1.0).abs() < 1e-9);
        // eps inside the root shrinks the std slightly below 2.
        assert!((var.sqrt() - 2.0).abs() < 1e-3);
        assert!(adain_tensor(&x, &[1.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn shapes_follow_config() {
        let model = Model::new(ModelConfig::default(), 0).unwrap();
        let img = scene(1);
        let c = model.content_of(&img).unwrap();
        assert_eq!(c.shape(), [1, 64, 16, 16]);
        let s = model.style_of(&img, StyleTag::Syn).unwrap();
        assert_eq!(s.vector.len(), 8);
        let r = model.style_of(&img, StyleTag::Real).unwrap();
        assert_ne!(s.vector, r.vector);
        assert!(model.style_of(&img, StyleTag::Clean).is_err());
        let out = model.decode_latents(&c, &s).unwrap();
        assert_eq!((out.height(), out.width()), (64, 64));
        assert!(model.content_of(&img.crop(0, 0, 62, 64).unwrap()).is_err());
    }

    #[test]
    fn transform_starts_as_identity() {
        let model = Model::new(ModelConfig::default(), 3).unwrap();
        let z = StyleLatent::new(vec![0.1, -0.2, 0.3, 0.0, 1.0, -1.0, 0.5, 0.25], StyleTag::Real).unwrap();
        let t = model.transform_latent(&z).unwrap();
        assert_eq!(t.tag, StyleTag::Clean);
        for (a, b) in t.vector.iter().zip(&z.vector) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(model.transform_latent(&t).is_err());
        let short = StyleLatent::new(vec![0.0; 3], StyleTag::Syn).unwrap();
        assert!(model.transform_latent(&short).is_err());
    }

    #[test]
    fn discriminator_scales_halve() {
        let model = Model::new(ModelConfig::default(), 0).unwrap();
        let mut g = Graph::<f32>::new();
        let p = model.dis_params().bind(&mut g, false);
        let batch = Tensor::stack_batch(&[scene(1).to_tensor(), scene(2).to_tensor()]).unwrap();
        let x = g.constant(batch.clone());
        let maps = model.discriminate(&mut g, &p, x, Domain::Real);
        assert_eq!(maps.len(), 2);
        assert_eq!(g.shape(maps[0]), [2, 1, 8, 8]);
        assert_eq!(g.shape(maps[1]), [2, 1, 4, 4]);
        assert!(g.value(maps[0]).all_finite());
        // Batch order is preserved.
        let single = g.constant(batch.batch_item(1));
        let one = model.discriminate(&mut g, &p, single, Domain::Real);
        assert_eq!(g.value(one[0]).data(), g.value(maps[0]).batch_item(1).data());
    }

    #[test]
    fn summary_is_a_function_of_config() {
        let a = Model::new(ModelConfig::default(), 0).unwrap();
        let b = Model::new(ModelConfig::default(), 9).unwrap();
        assert_eq!(a.summary(), b.summary());
        let total: usize = a.summary().iter().map(|c| c.parameters).sum();
        assert_eq!(total, a.gen_params().numel() + a.dis_params().numel());
        let t = a.summary().into_iter().find(|c| c.name == "transform").unwrap();
        assert_eq!(t.parameters, 8 * 32 + 32 + 32 * 32 + 32 + 32 * 8 + 8);
    }

    #[test]
    fn decode_range_and_determinism() {
        let model = Model::new(ModelConfig::default(), 4).unwrap();
        let img = scene(5);
        let c = model.content_of(&img).unwrap();
        for k in 0..3 {
            let z = StyleLatent::new((0..8).map(|i| ((i + k) as f64 * 1.7).sin() * 3.0).collect(), StyleTag::Syn).unwrap();
            let a = model.decode_latents(&c, &z).unwrap();
            let b = model.decode_latents(&c, &z).unwrap();
            assert_eq!(a, b);
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
