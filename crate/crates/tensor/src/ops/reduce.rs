use crate::float::Float;
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

struct MeanAbsDiffOp;
struct MeanSqDiffOp;
struct MeanSqToConstOp<T>(T);
struct RowL1DiffOp;
struct BceWithLogitsOp<T>(T);
struct MeanOp;

fn scalar_grad<T: Float>(g: &Tensor<T>) -> T {
    g.data()[0]
}

impl<T: Float> Op<T> for MeanAbsDiffOp {
    fn name(&self) -> &'static str {
        "mean_abs_diff"
    }
    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, w: &[bool]) -> Vec<Option<Tensor<T>>> {
        let k = scalar_grad(g) / T::from_f64(i[0].numel() as f64);
        let da = i[0].zip_map(i[1], |a, b| (a - b).signum0() * k);
        let db = w[1].then(|| da.map(|v| -v));
        vec![w[0].then_some(da), db]
    }
}

impl<T: Float> Op<T> for MeanSqDiffOp {
    fn name(&self) -> &'static str {
        "mean_sq_diff"
    }
    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, w: &[bool]) -> Vec<Option<Tensor<T>>> {
        let k = T::from_f64(2.0) * scalar_grad(g) / T::from_f64(i[0].numel() as f64);
        let da = i[0].zip_map(i[1], |a, b| (a - b) * k);
        let db = w[1].then(|| da.map(|v| -v));
        vec![w[0].then_some(da), db]
    }
}

impl<T: Float> Op<T> for MeanSqToConstOp<T> {
    fn name(&self) -> &'static str {
        "mean_sq_to_const"
    }
    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        let k = T::from_f64(2.0) * scalar_grad(g) / T::from_f64(i[0].numel() as f64);
        let t = self.0;
        vec![Some(i[0].map(|a| (a - t) * k))]
    }
}

impl<T: Float> Op<T> for RowL1DiffOp {
    fn name(&self) -> &'static str {
        "row_l1_diff"
    }
    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, w: &[bool]) -> Vec<Option<Tensor<T>>> {
        let rows = i[0].shape()[0];
        let k = scalar_grad(g) / T::from_f64(rows as f64);
        let da = i[0].zip_map(i[1], |a, b| (a - b).signum0() * k);
        let db = w[1].then(|| da.map(|v| -v));
        vec![w[0].then_some(da), db]
    }
}

impl<T: Float> Op<T> for BceWithLogitsOp<T> {
    fn name(&self) -> &'static str {
        "bce_with_logits"
    }
    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        let k = scalar_grad(g) / T::from_f64(i[0].numel() as f64);
        let t = self.0;
        vec![Some(i[0].map(|s| (sigmoid(s) - t) * k))]
    }
}

impl<T: Float> Op<T> for MeanOp {
    fn name(&self) -> &'static str {
        "mean"
    }
    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        let k = scalar_grad(g) / T::from_f64(i[0].numel() as f64);
        vec![Some(Tensor::full(i[0].shape(), k))]
    }
}

fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus<T: Float>(x: T) -> T {
    if x > T::ZERO {
        x + (T::ONE + (-x).exp()).ln()
    } else {
        (T::ONE + x.exp()).ln()
    }
}

impl<T: Float> Graph<T> {
    /// Mean absolute difference over all elements.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mean_abs_diff shape mismatch");
        let (av, bv) = (self.value(a), self.value(b));
        let n = T::from_f64(av.numel() as f64);
        let s: T = av.data().iter().zip(bv.data()).map(|(&x, &y)| (x - y).abs()).sum();
        self.apply(MeanAbsDiffOp, &[a, b], Tensor::scalar(s / n))
    }

    /// Mean squared difference over all elements.
    pub fn mean_sq_diff(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mean_sq_diff shape mismatch");
        let (av, bv) = (self.value(a), self.value(b));
        let n = T::from_f64(av.numel() as f64);
        let s: T = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        self.apply(MeanSqDiffOp, &[a, b], Tensor::scalar(s / n))
    }

    /// `mean((a − target)²)`.
    pub fn mean_sq_to_const(&mut self, a: Var, target: T) -> Var {
        let av = self.value(a);
        let n = T::from_f64(av.numel() as f64);
        let s: T = av.data().iter().map(|&x| (x - target) * (x - target)).sum();
        self.apply(MeanSqToConstOp(target), &[a], Tensor::scalar(s / n))
    }

    /// Per-row L1 distance of two `N×D` matrices, averaged over rows.
    pub fn row_l1_diff(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "row_l1_diff shape mismatch");
        let (av, bv) = (self.value(a), self.value(b));
        let rows = T::from_f64(av.shape()[0] as f64);
        let s: T = av.data().iter().zip(bv.data()).map(|(&x, &y)| (x - y).abs()).sum();
        self.apply(RowL1DiffOp, &[a, b], Tensor::scalar(s / rows))
    }

    /// Mean binary cross-entropy of logits against a constant label.
    pub fn bce_with_logits(&mut self, logits: Var, target: T) -> Var {
        let av = self.value(logits);
        let n = T::from_f64(av.numel() as f64);
        let s: T = av
            .data()
            .iter()
            .map(|&x| softplus(x) - target * x)
            .sum();
        self.apply(BceWithLogitsOp(target), &[logits], Tensor::scalar(s / n))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a).mean();
        self.apply(MeanOp, &[a], Tensor::scalar(m))
    }
}
