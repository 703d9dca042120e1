use crate::float::{gemm, Float};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

struct LinearOp;

impl<T: Float> Op<T> for LinearOp {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, wants: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (x, w) = (i[0], i[1]);
        let (n, fin) = x.dims2();
        let (fout, _) = w.dims2();
        let dx = wants[0].then(|| {
            let mut dx = Tensor::zeros(&[n, fin]);
            gemm(n, fout, fin, g.data(), false, w.data(), false, dx.data_mut(), false);
            dx
        });
        let dw = wants[1].then(|| {
            let mut dw = Tensor::zeros(&[fout, fin]);
            gemm(fout, n, fin, g.data(), true, x.data(), false, dw.data_mut(), false);
            dw
        });
        let mut out = vec![dx, dw];
        if i.len() > 2 {
            out.push(wants[2].then(|| {
                let mut db = Tensor::zeros(&[fout]);
                for row in g.data().chunks_exact(fout) {
                    for (d, &v) in db.data_mut().iter_mut().zip(row) {
                        *d += v;
                    }
                }
                db
            }));
        }
        out
    }
}

impl<T: Float> Graph<T> {
    /// `y = x·Wᵀ + b` with `x: N×I`, `W: O×I`, `b: O`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let (n, fin) = xv.dims2();
        let (fout, win) = wv.dims2();
        assert_eq!(fin, win, "linear: input width {fin} vs weight width {win}");
        let mut out = Tensor::zeros(&[n, fout]);
        gemm(n, fin, fout, xv.data(), false, wv.data(), true, out.data_mut(), false);
        let mut inputs = vec![x, w];
        if let Some(b) = bias {
            let bv = self.value(b);
            assert_eq!(bv.numel(), fout, "linear bias length");
            let bd = bv.data().to_vec();
            for row in out.data_mut().chunks_exact_mut(fout) {
                for (d, &bias) in row.iter_mut().zip(&bd) {
                    *d += bias;
                }
            }
            inputs.push(b);
        }
        self.apply(LinearOp, &inputs, out)
    }
}
