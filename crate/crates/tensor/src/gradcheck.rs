//! Central finite-difference gradient checker.

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Worst relative error per input over entries with `|grad| > floor`.
    pub max_rel_err: Vec<f64>,
    /// Entries compared per input.
    pub compared: Vec<usize>,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.max_rel_err.iter().copied().fold(0.0, f64::max)
    }
}

/// Compare the tape gradient of `f` with central differences of step `h`.
///
/// `f` builds a scalar from one graph variable per entry of `inputs`.
/// Entries where both the analytic and numeric gradient are at most
/// `floor` in magnitude are skipped.
pub fn check<F>(inputs: &[Tensor<f64>], f: F, h: f64, floor: f64) -> GradCheck
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = f(&mut g, &vars);
    let grads = g.backward(loss);
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();

    let eval = |perturbed: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars);
        g.value(out).data()[0]
    };

    let mut max_rel_err = Vec::with_capacity(inputs.len());
    let mut compared = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut count = 0;
        for j in 0..input.numel() {
            let orig = input.data()[j];
            work[k].data_mut()[j] = orig + h;
            let plus = eval(&work);
            work[k].data_mut()[j] = orig - h;
            let minus = eval(&work);
            work[k].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[k].data()[j];
            if a.abs() <= floor && numeric.abs() <= floor {
                continue;
            }
            count += 1;
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            worst = worst.max(rel);
        }
        max_rel_err.push(worst);
        compared.push(count);
    }
    GradCheck {
        max_rel_err,
        compared,
    }
}
