use crate::float::Float;
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

struct Upsample2xOp;
struct AvgPool2xOp;
struct GlobalAvgPoolOp;

impl<T: Float> Op<T> for Upsample2xOp {
    fn name(&self) -> &'static str {
        "upsample_nearest2x"
    }
    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (n, c, h, w) = i[0].dims4();
        let mut dx = Tensor::zeros(i[0].shape());
        let (oh, ow) = (2 * h, 2 * w);
        for p in 0..n * c {
            let src = &g.data()[p * oh * ow..(p + 1) * oh * ow];
            let dst = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
            for y in 0..oh {
                for x in 0..ow {
                    dst[(y / 2) * w + x / 2] += src[y * ow + x];
                }
            }
        }
        vec![Some(dx)]
    }
}

impl<T: Float> Op<T> for AvgPool2xOp {
    fn name(&self) -> &'static str {
        "avg_pool2x"
    }
    fn backward(&self, i: &[&Tensor<T>], out: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (n, c, h, w) = i[0].dims4();
        let (_, _, oh, ow) = out.dims4();
        let quarter = T::from_f64(0.25);
        let mut dx = Tensor::zeros(i[0].shape());
        for p in 0..n * c {
            let src = &g.data()[p * oh * ow..(p + 1) * oh * ow];
            let dst = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
            for y in 0..oh {
                for x in 0..ow {
                    let v = src[y * ow + x] * quarter;
                    dst[2 * y * w + 2 * x] += v;
                    dst[2 * y * w + 2 * x + 1] += v;
                    dst[(2 * y + 1) * w + 2 * x] += v;
                    dst[(2 * y + 1) * w + 2 * x + 1] += v;
                }
            }
        }
        vec![Some(dx)]
    }
}

impl<T: Float> Op<T> for GlobalAvgPoolOp {
    fn name(&self) -> &'static str {
        "global_avg_pool"
    }
    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (_, _, h, w) = i[0].dims4();
        let hw = h * w;
        let inv = T::from_f64(1.0 / hw as f64);
        let mut dx = Tensor::zeros(i[0].shape());
        for (p, plane) in dx.data_mut().chunks_exact_mut(hw).enumerate() {
            plane.fill(g.data()[p] * inv);
        }
        vec![Some(dx)]
    }
}

impl<T: Float> Graph<T> {
    /// Nearest-neighbour 2× spatial upsampling.
    pub fn upsample_nearest2x(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        for p in 0..n * c {
            let src = &xv.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out.data_mut()[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                let row = &src[(y / 2) * w..(y / 2 + 1) * w];
                for (x, d) in dst[y * ow..(y + 1) * ow].iter_mut().enumerate() {
                    *d = row[x / 2];
                }
            }
        }
        self.apply(Upsample2xOp, &[x], out)
    }

    /// 2×2 mean pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn avg_pool2x(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4();
        let (oh, ow) = (h / 2, w / 2);
        assert!(oh > 0 && ow > 0, "avg_pool2x on {h}x{w} input");
        let quarter = T::from_f64(0.25);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        for p in 0..n * c {
            let src = &xv.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out.data_mut()[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                for x in 0..ow {
                    dst[y * ow + x] = (src[2 * y * w + 2 * x]
                        + src[2 * y * w + 2 * x + 1]
                        + src[(2 * y + 1) * w + 2 * x]
                        + src[(2 * y + 1) * w + 2 * x + 1])
                        * quarter;
                }
            }
        }
        self.apply(AvgPool2xOp, &[x], out)
    }

    /// Spatial mean of every plane: `N×C×H×W → N×C`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4();
        let inv = T::from_f64(1.0 / (h * w) as f64);
        let data = xv
            .data()
            .chunks_exact(h * w)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        let out = Tensor::new(&[n, c], data).expect("pool shape");
        self.apply(GlobalAvgPoolOp, &[x], out)
    }
}
