use crate::float::Float;
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

struct InstanceNormOp<T> {
    /// Normalized activations, kept for the backward pass.
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Float> Op<T> for InstanceNormOp<T> {
    fn name(&self) -> &'static str {
        "instance_norm"
    }

    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (n, c, h, w) = i[0].dims4();
        let hw = h * w;
        let inv_hw = T::from_f64(1.0 / hw as f64);
        let mut dx = Tensor::zeros(i[0].shape());
        for p in 0..n * c {
            let gs = &g.data()[p * hw..(p + 1) * hw];
            let xh = &self.xhat[p * hw..(p + 1) * hw];
            let mut mean_g = T::ZERO;
            let mut mean_gx = T::ZERO;
            for (&gv, &xv) in gs.iter().zip(xh) {
                mean_g += gv;
                mean_gx += gv * xv;
            }
            mean_g *= inv_hw;
            mean_gx *= inv_hw;
            let s = self.inv_std[p];
            for ((d, &gv), &xv) in dx.data_mut()[p * hw..(p + 1) * hw].iter_mut().zip(gs).zip(xh) {
                *d = s * (gv - mean_g - xv * mean_gx);
            }
        }
        vec![Some(dx)]
    }
}

struct ChannelAffineOp;

impl<T: Float> Op<T> for ChannelAffineOp {
    fn name(&self) -> &'static str {
        "channel_affine"
    }

    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, wants: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (x, gamma) = (i[0], i[1]);
        let (n, c, h, w) = x.dims4();
        let hw = h * w;
        let mut dx = wants[0].then(|| Tensor::zeros(x.shape()));
        let mut dgamma = wants[1].then(|| Tensor::zeros(&[n, c]));
        let mut dbeta = wants[2].then(|| Tensor::zeros(&[n, c]));
        for p in 0..n * c {
            let gs = &g.data()[p * hw..(p + 1) * hw];
            let xs = &x.data()[p * hw..(p + 1) * hw];
            if let Some(dx) = dx.as_mut() {
                let s = gamma.data()[p];
                for (d, &gv) in dx.data_mut()[p * hw..(p + 1) * hw].iter_mut().zip(gs) {
                    *d = gv * s;
                }
            }
            if let Some(dg) = dgamma.as_mut() {
                dg.data_mut()[p] = gs.iter().zip(xs).map(|(&a, &b)| a * b).sum();
            }
            if let Some(db) = dbeta.as_mut() {
                db.data_mut()[p] = gs.iter().copied().sum();
            }
        }
        vec![dx, dgamma, dbeta]
    }
}

/// Per-plane mean and `sqrt(var + eps)` of an NCHW tensor (biased variance).
pub fn plane_stats<T: Float>(x: &Tensor<T>, eps: T) -> (Vec<T>, Vec<T>) {
    let (n, c, h, w) = x.dims4();
    let hw = h * w;
    let inv_hw = T::from_f64(1.0 / hw as f64);
    let mut means = Vec::with_capacity(n * c);
    let mut stds = Vec::with_capacity(n * c);
    for plane in x.data().chunks_exact(hw) {
        let mean = plane.iter().copied().sum::<T>() * inv_hw;
        let var = plane
            .iter()
            .map(|&v| {
                let d = v - mean;
                d * d
            })
            .sum::<T>()
            * inv_hw;
        means.push(mean);
        stds.push((var + eps).sqrt());
    }
    (means, stds)
}

impl<T: Float> Graph<T> {
    /// Normalize every `(n, c)` plane to zero mean and unit variance.
    pub fn instance_norm(&mut self, x: Var, eps: T) -> Var {
        let xv = self.value(x);
        let (_, _, h, w) = xv.dims4();
        assert!(h * w >= 2, "instance_norm needs at least two pixels per plane");
        let hw = h * w;
        let (means, stds) = plane_stats(xv, eps);
        let inv_std: Vec<T> = stds.iter().map(|&s| T::ONE / s).collect();
        let mut out = Tensor::zeros(xv.shape());
        for (p, (src, dst)) in xv
            .data()
            .chunks_exact(hw)
            .zip(out.data_mut().chunks_exact_mut(hw))
            .enumerate()
        {
            let (m, s) = (means[p], inv_std[p]);
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = (v - m) * s;
            }
        }
        let needs = self.requires_grad(x);
        let op = InstanceNormOp {
            xhat: if needs { out.data().to_vec() } else { Vec::new() },
            inv_std,
        };
        self.apply(op, &[x], out)
    }

    /// `y[n,c] = gamma[n,c] · x[n,c] + beta[n,c]` with `gamma`, `beta` shaped `N×C`.
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let (n, c, h, w) = xv.dims4();
        assert_eq!(gv.shape(), [n, c], "channel_affine gamma shape");
        assert_eq!(bv.shape(), [n, c], "channel_affine beta shape");
        let hw = h * w;
        let mut out = Tensor::zeros(xv.shape());
        for (p, (src, dst)) in xv
            .data()
            .chunks_exact(hw)
            .zip(out.data_mut().chunks_exact_mut(hw))
            .enumerate()
        {
            let (s, b) = (gv.data()[p], bv.data()[p]);
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = s * v + b;
            }
        }
        self.apply(ChannelAffineOp, &[x, gamma, beta], out)
    }
}
