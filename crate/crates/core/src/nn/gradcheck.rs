//! Central finite-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Relative error with a floor on the denominator so that near-zero
/// gradients are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Compares the gradient of the scalar built by `f` with respect to each
/// input against central differences with step `h`.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = f(&mut tape, &vars)?;
        if tape.value(out).len() != 1 {
            return Err(Error::Shape("gradient check needs a scalar output".into()));
        }
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let mut work = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic[j], numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, j);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
