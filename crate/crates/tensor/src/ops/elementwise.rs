use crate::float::Float;
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

struct AddOp;
struct SubOp;
struct MulOp;
struct ScaleOp<T>(T);
struct AddScalarOp;
struct ReluOp;
struct LeakyReluOp<T>(T);
struct SigmoidOp;
struct TanhOp;
struct ReshapeOp;
struct NarrowColsOp {
    start: usize,
}

impl<T: Float> Op<T> for AddOp {
    fn name(&self) -> &'static str {
        "add"
    }
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, w: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![w[0].then(|| g.clone()), w[1].then(|| g.clone())]
    }
}

impl<T: Float> Op<T> for SubOp {
    fn name(&self) -> &'static str {
        "sub"
    }
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, w: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![w[0].then(|| g.clone()), w[1].then(|| g.map(|v| -v))]
    }
}

impl<T: Float> Op<T> for MulOp {
    fn name(&self) -> &'static str {
        "mul"
    }
    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, w: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![
            w[0].then(|| g.zip_map(i[1], |a, b| a * b)),
            w[1].then(|| g.zip_map(i[0], |a, b| a * b)),
        ]
    }
}

impl<T: Float> Op<T> for ScaleOp<T> {
    fn name(&self) -> &'static str {
        "scale"
    }
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        let s = self.0;
        vec![Some(g.map(|v| v * s))]
    }
}

impl<T: Float> Op<T> for AddScalarOp {
    fn name(&self) -> &'static str {
        "add_scalar"
    }
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.clone())]
    }
}

impl<T: Float> Op<T> for ReluOp {
    fn name(&self) -> &'static str {
        "relu"
    }
    fn backward(&self, _: &[&Tensor<T>], out: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.zip_map(out, |g, y| if y > T::ZERO { g } else { T::ZERO }))]
    }
}

impl<T: Float> Op<T> for LeakyReluOp<T> {
    fn name(&self) -> &'static str {
        "leaky_relu"
    }
    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        let slope = self.0;
        vec![Some(g.zip_map(i[0], |g, x| if x > T::ZERO { g } else { g * slope }))]
    }
}

impl<T: Float> Op<T> for SigmoidOp {
    fn name(&self) -> &'static str {
        "sigmoid"
    }
    fn backward(&self, _: &[&Tensor<T>], out: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.zip_map(out, |g, y| g * y * (T::ONE - y)))]
    }
}

impl<T: Float> Op<T> for TanhOp {
    fn name(&self) -> &'static str {
        "tanh"
    }
    fn backward(&self, _: &[&Tensor<T>], out: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.zip_map(out, |g, y| g * (T::ONE - y * y)))]
    }
}

impl<T: Float> Op<T> for ReshapeOp {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn backward(&self, i: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.clone().reshaped(i[0].shape()).expect("reshape grad"))]
    }
}

impl<T: Float> Op<T> for NarrowColsOp {
    fn name(&self) -> &'static str {
        "narrow_cols"
    }
    fn backward(&self, i: &[&Tensor<T>], out: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Vec<Option<Tensor<T>>> {
        let (rows, cols) = i[0].dims2();
        let len = out.dims2().1;
        let mut dx = Tensor::zeros(&[rows, cols]);
        for r in 0..rows {
            dx.data_mut()[r * cols + self.start..r * cols + self.start + len]
                .copy_from_slice(&g.data()[r * len..(r + 1) * len]);
        }
        vec![Some(dx)]
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

fn tanh<T: Float>(x: T) -> T {
    let two = T::from_f64(2.0);
    two * sigmoid(two * x) - T::ONE
}

impl<T: Float> Graph<T> {
    fn check_same(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{what}: operand shapes differ"
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "add");
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.apply(AddOp, &[a, b], v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "sub");
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.apply(SubOp, &[a, b], v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "mul");
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.apply(MulOp, &[a, b], v)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.apply(ScaleOp(s), &[a], v)
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.apply(AddScalarOp, &[a], v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > T::ZERO { x } else { T::ZERO });
        self.apply(ReluOp, &[a], v)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let v = self.value(a).map(|x| if x > T::ZERO { x } else { x * slope });
        self.apply(LeakyReluOp(slope), &[a], v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.apply(SigmoidOp, &[a], v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(tanh);
        self.apply(TanhOp, &[a], v)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = self
            .value(a)
            .clone()
            .reshaped(shape)
            .unwrap_or_else(|e| panic!("reshape: {e}"));
        self.apply(ReshapeOp, &[a], v)
    }

    /// Columns `start..start + len` of a matrix.
    pub fn narrow_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (rows, cols) = self.value(a).dims2();
        assert!(start + len <= cols, "narrow_cols out of range");
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let v = Tensor::new(&[rows, len], data).expect("narrow shape");
        self.apply(NarrowColsOp { start }, &[a], v)
    }

    /// `Σ wᵢ·termᵢ` over single-element terms.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Var {
        assert!(!terms.is_empty(), "weighted_sum of nothing");
        let mut acc: Option<Var> = None;
        for &(v, w) in terms {
            let scaled = self.scale(v, w);
            acc = Some(match acc {
                None => scaled,
                Some(a) => self.add(a, scaled),
            });
        }
        acc.unwrap()
    }
}
