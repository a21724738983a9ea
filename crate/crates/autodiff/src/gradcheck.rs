//! Finite-difference gradient verification.

use crate::dtype::Dtype;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

impl GradCheckReport {
    fn update(&mut self, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        // small floor keeps near-zero gradients from dividing by ~0 while
        // leaving real components untouched
        let rel = abs / analytic.abs().max(numeric.abs()).max(1e-6);
        self.max_rel_err = self.max_rel_err.max(rel);
        self.max_abs_err = self.max_abs_err.max(abs);
        self.checked += 1;
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.checked += other.checked;
    }
}

/// Compares tape gradients of a scalar function against central finite
/// differences. `build` must construct the loss from leaves in input order.
/// At most `max_entries` elements per input are probed (stride-sampled).
pub fn check_gradients<T: Dtype>(
    build: &dyn Fn(&mut Tape<T>, &[Var]) -> Var,
    inputs: &[Tensor<T>],
    h: f64,
    max_entries: usize,
) -> GradCheckReport {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).expect("scalar loss");
    let grads: Vec<Option<Tensor<T>>> = vars.iter().map(|&v| tape.grad(v).cloned()).collect();

    let eval = |perturbed: &[Tensor<T>]| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.leaf(x.clone(), false)).collect();
        let out = build(&mut t, &vs);
        t.value(out).scalar_value().to_f64()
    };

    let mut report = GradCheckReport::default();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.len();
        if n == 0 {
            continue;
        }
        let stride = (n / max_entries.max(1)).max(1);
        for j in (0..n).step_by(stride) {
            let analytic = grads[i].as_ref().map_or(0.0, |g| g.data()[j].to_f64());
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += T::from_f64(h);
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= T::from_f64(h);
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            report.update(analytic, numeric);
        }
    }
    report
}
