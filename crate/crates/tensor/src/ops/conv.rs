use crate::float::{gemm, Float};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

/// Geometry of a 2-D convolution with zero padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dSpec {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self { stride, padding }
    }

    pub fn output_hw(&self, h: usize, w: usize, kh: usize, kw: usize) -> Option<(usize, usize)> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < kh || pw < kw || self.stride == 0 {
            return None;
        }
        Some(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

fn im2col<T: Float>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let ncols = g.cols();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.stride == 1 {
                        // valid ox satisfy 0 <= ox + kx - pad < w
                        let lo = g.pad.saturating_sub(kx).min(g.ow);
                        let hi = (g.w + g.pad).saturating_sub(kx).min(g.ow).max(lo);
                        out[..lo].fill(T::ZERO);
                        out[hi..].fill(T::ZERO);
                        let start = lo + kx - g.pad;
                        out[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            *o = if ix < 0 || ix >= g.w as isize {
                                T::ZERO
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Float>(cols: &[T], g: &Geometry, dx: &mut [T]) {
    let ncols = g.cols();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let inp = &src[oy * g.ow..(oy + 1) * g.ow];
                    if g.stride == 1 {
                        let lo = g.pad.saturating_sub(kx).min(g.ow);
                        let hi = (g.w + g.pad).saturating_sub(kx).min(g.ow).max(lo);
                        let start = lo + kx - g.pad;
                        for (d, &s) in dst[start..start + (hi - lo)].iter_mut().zip(&inp[lo..hi]) {
                            *d += s;
                        }
                    } else {
                        for (ox, &s) in inp.iter().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && (ix as usize) < g.w {
                                dst[ix as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 convolutions with very few output channels are memory bound
/// under im2col; these shifted-row kernels skip the column buffer.
const DIRECT_MAX_OUT: usize = 4;

fn use_direct(o: usize, spec: Conv2dSpec) -> bool {
    spec.stride == 1 && o <= DIRECT_MAX_OUT
}

/// Visit every `(ky, kx, oy, iy, lo, hi, start)` of a stride-1 conv: output
/// row `oy` columns `lo..hi` read input row `iy` from column `start`.
fn for_each_tap(g: &Geometry, mut f: impl FnMut(usize, usize, usize, usize, usize, usize, usize)) {
    for ky in 0..g.kh {
        for kx in 0..g.kw {
            let lo = g.pad.saturating_sub(kx).min(g.ow);
            let hi = (g.w + g.pad).saturating_sub(kx).min(g.ow).max(lo);
            if lo == hi {
                continue;
            }
            let start = lo + kx - g.pad;
            for oy in 0..g.oh {
                let iy = oy as isize + ky as isize - g.pad as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                f(ky, kx, oy, iy as usize, lo, hi, start);
            }
        }
    }
}

fn direct_forward<T: Float>(x: &[T], w: &[T], g: &Geometry, o: usize, out: &mut [T]) {
    let (hw, ohw, ksz) = (g.h * g.w, g.oh * g.ow, g.kh * g.kw);
    for oc in 0..o {
        let dst = &mut out[oc * ohw..(oc + 1) * ohw];
        for c in 0..g.c {
            let plane = &x[c * hw..(c + 1) * hw];
            let kern = &w[(oc * g.c + c) * ksz..(oc * g.c + c + 1) * ksz];
            for_each_tap(g, |ky, kx, oy, iy, lo, hi, start| {
                let wv = kern[ky * g.kw + kx];
                let d = &mut dst[oy * g.ow + lo..oy * g.ow + hi];
                let s = &plane[iy * g.w + start..iy * g.w + start + (hi - lo)];
                for (d, &s) in d.iter_mut().zip(s) {
                    *d += wv * s;
                }
            });
        }
    }
}

fn direct_backward_input<T: Float>(gout: &[T], w: &[T], g: &Geometry, o: usize, dx: &mut [T]) {
    let (hw, ohw, ksz) = (g.h * g.w, g.oh * g.ow, g.kh * g.kw);
    for c in 0..g.c {
        let dst = &mut dx[c * hw..(c + 1) * hw];
        for oc in 0..o {
            let src = &gout[oc * ohw..(oc + 1) * ohw];
            let kern = &w[(oc * g.c + c) * ksz..(oc * g.c + c + 1) * ksz];
            for_each_tap(g, |ky, kx, oy, iy, lo, hi, start| {
                let wv = kern[ky * g.kw + kx];
                let d = &mut dst[iy * g.w + start..iy * g.w + start + (hi - lo)];
                let s = &src[oy * g.ow + lo..oy * g.ow + hi];
                for (d, &s) in d.iter_mut().zip(s) {
                    *d += wv * s;
                }
            });
        }
    }
}

fn direct_backward_weight<T: Float>(gout: &[T], x: &[T], g: &Geometry, o: usize, dw: &mut [T]) {
    let (hw, ohw, ksz) = (g.h * g.w, g.oh * g.ow, g.kh * g.kw);
    for oc in 0..o {
        let src = &gout[oc * ohw..(oc + 1) * ohw];
        for c in 0..g.c {
            let plane = &x[c * hw..(c + 1) * hw];
            let kern = &mut dw[(oc * g.c + c) * ksz..(oc * g.c + c + 1) * ksz];
            for_each_tap(g, |ky, kx, oy, iy, lo, hi, start| {
                let a = &src[oy * g.ow + lo..oy * g.ow + hi];
                let b = &plane[iy * g.w + start..iy * g.w + start + (hi - lo)];
                // Independent partial sums so the loop vectorizes.
                let mut acc = [T::ZERO; 8];
                let (mut ca, mut cb) = (a.chunks_exact(8), b.chunks_exact(8));
                for (xa, xb) in (&mut ca).zip(&mut cb) {
                    for i in 0..8 {
                        acc[i] += xa[i] * xb[i];
                    }
                }
                let mut sum: T = acc.iter().copied().sum();
                for (&p, &q) in ca.remainder().iter().zip(cb.remainder()) {
                    sum += p * q;
                }
                kern[ky * g.kw + kx] += sum;
            });
        }
    }
}

struct Conv2dOp {
    spec: Conv2dSpec,
}

fn geometry<T: Float>(x: &Tensor<T>, w: &Tensor<T>, spec: Conv2dSpec) -> Geometry {
    let (_, c, h, wd) = x.dims4();
    let (_, _, kh, kw) = w.dims4();
    let (oh, ow) = spec
        .output_hw(h, wd, kh, kw)
        .expect("conv2d geometry validated at forward time");
    Geometry {
        c,
        h,
        w: wd,
        kh,
        kw,
        oh,
        ow,
        stride: spec.stride,
        pad: spec.padding,
    }
}

impl<T: Float> Op<T> for Conv2dOp {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        wants: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let (x, w) = (inputs[0], inputs[1]);
        let g = geometry(x, w, self.spec);
        let (n, _, _, _) = x.dims4();
        let o = w.shape()[0];
        let (rows, ncols) = (g.rows(), g.cols());
        let in_plane = g.c * g.h * g.w;
        let out_plane = o * ncols;

        let mut dx = wants[0].then(|| Tensor::zeros(x.shape()));
        let mut dw = wants[1].then(|| Tensor::zeros(w.shape()));
        let direct = use_direct(o, self.spec);
        let buf = if direct { 0 } else { rows * ncols };
        let mut cols = vec![T::ZERO; buf];
        // Stride-1 input gradients are a convolution of the output gradient
        // with the flipped, transposed kernel; that avoids col2im.
        let transposed = (!direct && g.stride == 1 && g.kh == g.kw && g.pad < g.kh).then(|| {
            let tg = Geometry {
                c: o,
                h: g.oh,
                w: g.ow,
                kh: g.kh,
                kw: g.kw,
                oh: g.h,
                ow: g.w,
                stride: 1,
                pad: g.kh - 1 - g.pad,
            };
            let ksz = g.kh * g.kw;
            let mut wt = vec![T::ZERO; g.c * o * ksz];
            for oc in 0..o {
                for c in 0..g.c {
                    let src = &w.data()[(oc * g.c + c) * ksz..(oc * g.c + c + 1) * ksz];
                    let dst = &mut wt[(c * o + oc) * ksz..(c * o + oc + 1) * ksz];
                    for (d, s) in dst.iter_mut().zip(src.iter().rev()) {
                        *d = *s;
                    }
                }
            }
            (tg, wt)
        });
        let dcols_len = match (&transposed, direct) {
            (Some((tg, _)), _) => tg.rows() * tg.cols(),
            (None, false) => rows * ncols,
            (None, true) => 0,
        };
        let mut dcols = vec![T::ZERO; if wants[0] { dcols_len } else { 0 }];
        for b in 0..n {
            let gout = &grad.data()[b * out_plane..(b + 1) * out_plane];
            if direct {
                let xb = &x.data()[b * in_plane..(b + 1) * in_plane];
                if let Some(dw) = dw.as_mut() {
                    direct_backward_weight(gout, xb, &g, o, dw.data_mut());
                }
                if let Some(dx) = dx.as_mut() {
                    let dst = &mut dx.data_mut()[b * in_plane..(b + 1) * in_plane];
                    direct_backward_input(gout, w.data(), &g, o, dst);
                }
                continue;
            }
            if let Some(dw) = dw.as_mut() {
                im2col(&x.data()[b * in_plane..(b + 1) * in_plane], &g, &mut cols);
                gemm(o, ncols, rows, gout, false, &cols, true, dw.data_mut(), true);
            }
            if let Some(dx) = dx.as_mut() {
                let dst = &mut dx.data_mut()[b * in_plane..(b + 1) * in_plane];
                if let Some((tg, wt)) = &transposed {
                    im2col(gout, tg, &mut dcols);
                    gemm(g.c, tg.rows(), tg.cols(), wt, false, &dcols, false, dst, false);
                } else {
                    gemm(rows, o, ncols, w.data(), true, gout, false, &mut dcols, false);
                    col2im(&dcols, &g, dst);
                }
            }
        }
        let db = (inputs.len() > 2 && wants[2]).then(|| {
            let mut db = Tensor::zeros(&[o]);
            for b in 0..n {
                for (oc, slot) in db.data_mut().iter_mut().enumerate() {
                    let start = b * out_plane + oc * ncols;
                    *slot += grad.data()[start..start + ncols].iter().copied().sum::<T>();
                }
            }
            db
        });
        let mut out = vec![dx, dw];
        if inputs.len() > 2 {
            out.push(db);
        }
        out
    }
}

impl<T: Float> Graph<T> {
    /// 2-D convolution. `x` is `N×C×H×W`, `w` is `O×C×KH×KW`, `bias` has `O` entries.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, spec: Conv2dSpec) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let (n, c, h, wd) = xv.dims4();
        let (o, wc, kh, kw) = wv.dims4();
        assert_eq!(c, wc, "conv2d channel mismatch: input {c}, kernel {wc}");
        let (oh, ow) = spec
            .output_hw(h, wd, kh, kw)
            .unwrap_or_else(|| panic!("conv2d: {h}x{wd} input too small for {kh}x{kw} kernel"));
        let g = Geometry {
            c,
            h,
            w: wd,
            kh,
            kw,
            oh,
            ow,
            stride: spec.stride,
            pad: spec.padding,
        };
        let (rows, ncols) = (g.rows(), g.cols());
        let in_plane = c * h * wd;
        let out_plane = o * ncols;
        let mut out = Tensor::zeros(&[n, o, oh, ow]);
        let direct = use_direct(o, spec);
        let mut cols = vec![T::ZERO; if direct { 0 } else { rows * ncols }];
        for b in 0..n {
            if direct {
                let dst = &mut out.data_mut()[b * out_plane..(b + 1) * out_plane];
                direct_forward(&xv.data()[b * in_plane..(b + 1) * in_plane], wv.data(), &g, o, dst);
                continue;
            }
            im2col(&xv.data()[b * in_plane..(b + 1) * in_plane], &g, &mut cols);
            let dst = &mut out.data_mut()[b * out_plane..(b + 1) * out_plane];
            gemm(o, rows, ncols, wv.data(), false, &cols, false, dst, false);
        }
        let mut inputs = vec![x, w];
        if let Some(bias) = bias {
            let bv = self.value(bias);
            assert_eq!(bv.numel(), o, "conv2d bias length");
            let bd = bv.data().to_vec();
            for b in 0..n {
                for (oc, &bias) in bd.iter().enumerate() {
                    let start = b * out_plane + oc * ncols;
                    for v in &mut out.data_mut()[start..start + ncols] {
                        *v += bias;
                    }
                }
            }
            inputs.push(bias);
        }
        self.apply(Conv2dOp { spec }, &inputs, out)
    }
}

/// Direct (non-im2col) convolution used as an independent check in tests.
#[doc(hidden)]
pub fn conv2d_reference(x: &Tensor<f64>, w: &Tensor<f64>, spec: Conv2dSpec) -> Tensor<f64> {
    let (n, c, h, wd) = x.dims4();
    let (o, _, kh, kw) = w.dims4();
    let (oh, ow) = spec.output_hw(h, wd, kh, kw).unwrap();
    Tensor::from_fn(&[n, o, oh, ow], |idx| {
        let ox = idx % ow;
        let oy = (idx / ow) % oh;
        let oc = (idx / (ow * oh)) % o;
        let b = idx / (ow * oh * o);
        let mut acc = 0.0;
        for ic in 0..c {
            for ky in 0..kh {
                for kx in 0..kw {
                    let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                    let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                        continue;
                    }
                    acc += x.data()[((b * c + ic) * h + iy as usize) * wd + ix as usize]
                        * w.data()[((oc * c + ic) * kh + ky) * kw + kx];
                }
            }
        }
        acc
    })
}
