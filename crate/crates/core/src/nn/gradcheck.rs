//! Central finite-difference verification of analytic gradients.
//!
//! The harness treats a model as a black box: `backward` must populate every
//! parameter gradient for some scalar loss, and `loss` must recompute that
//! scalar from scratch. The checker then perturbs every parameter entry by
//! ±step and compares `(loss(θ+h) − loss(θ−h)) / 2h` against the analytic
//! entry. This is the independent oracle against which every hand-written
//! backward pass in [`crate::nn::layers`] is certified.

use ndarray::ArrayD;

use super::ParamSet;
use crate::error::{Error, Result};

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error across all parameter entries.
    pub max_rel_err: f64,
    /// Name of the tensor holding the worst entry.
    pub worst_tensor: String,
    /// Number of scalar entries checked.
    pub entries: usize,
}

/// Relative error with a small-scale floor: entries where both gradients are
/// below `floor` are compared absolutely (a pure ratio would amplify noise
/// on gradients that are legitimately ~0).
fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < floor {
        (analytic - numeric).abs() / floor
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Check every parameter gradient of `model` against central finite
/// differences of `loss`.
///
/// * `backward` must zero existing gradients, run a forward pass, and
///   accumulate the analytic gradient of the same scalar that `loss`
///   returns.
/// * `step` is the central-difference half-step (1e-5 is the calibrated
///   choice for f64 at unit scale).
/// * `tol` is the maximum admissible relative error.
pub fn check_gradients<M: ParamSet>(
    model: &mut M,
    mut backward: impl FnMut(&mut M) -> f64,
    mut loss: impl FnMut(&M) -> f64,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let base = backward(model);
    if !base.is_finite() {
        return Err(Error::NumericalFailure("gradcheck: non-finite base loss".into()));
    }
    // Snapshot analytic gradients keyed by name, in visit order.
    let mut names: Vec<String> = Vec::new();
    let mut grads: Vec<ArrayD<f64>> = Vec::new();
    model.visit_params_mut("", &mut |name, p| {
        names.push(name.to_string());
        grads.push(p.g.to_owned());
    });

    let mut report = GradCheckReport { max_rel_err: 0.0, worst_tensor: String::new(), entries: 0 };
    for (ti, name) in names.iter().enumerate() {
        let n = grads[ti].len();
        for ei in 0..n {
            let nudge = |model: &mut M, delta: f64| {
                let mut idx = 0usize;
                model.visit_params_mut("", &mut |_, mut p| {
                    if idx == ti {
                        *p.v
                            .as_slice_memory_order_mut()
                            .expect("param tensors are contiguous")
                            .get_mut(ei)
                            .expect("entry index in range") += delta;
                    }
                    idx += 1;
                });
            };
            nudge(model, step);
            let up = loss(model);
            nudge(model, -2.0 * step);
            let down = loss(model);
            nudge(model, step);
            let numeric = (up - down) / (2.0 * step);
            let analytic = grads[ti].as_slice_memory_order().unwrap()[ei];
            let err = rel_err(analytic, numeric, 1e-4);
            report.entries += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_tensor = name.clone();
            }
        }
    }
    if report.max_rel_err > tol {
        return Err(Error::NumericalFailure(format!(
            "gradcheck failed: max relative error {:.3e} in '{}' exceeds {:.1e} ({} entries)",
            report.max_rel_err, report.worst_tensor, tol, report.entries
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Dense;
    use crate::nn::ParamSet;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A quadratic loss through a Dense layer: gradients must check out.
    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut layer = Dense::new(3, 2, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let report = check_gradients(
            &mut layer,
            |l| {
                l.zero_grads();
                let y = l.forward(x.view());
                let gy = y.mapv(|e| 2.0 * e); // d/dy of sum(y^2)
                l.backward(x.view(), gy.view());
                y.iter().map(|e| e * e).sum()
            },
            |l| l.forward(x.view()).iter().map(|e| e * e).sum(),
            1e-5,
            1e-6,
        )
        .expect("analytic gradient must match");
        assert_eq!(report.entries, 3 * 2 + 2);
    }

    /// Corrupting the analytic gradient must be caught.
    #[test]
    fn gradcheck_detects_wrong_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut layer = Dense::new(2, 2, &mut rng);
        let x = Array2::from_shape_fn((2, 2), |(i, j)| 0.5 + i as f64 - 0.25 * j as f64);
        let result = check_gradients(
            &mut layer,
            |l| {
                l.zero_grads();
                let y = l.forward(x.view());
                let mut gy = y.mapv(|e| 2.0 * e);
                gy[[0, 0]] += 3.0; // sabotage
                l.backward(x.view(), gy.view());
                y.iter().map(|e| e * e).sum()
            },
            |l| l.forward(x.view()).iter().map(|e| e * e).sum(),
            1e-5,
            1e-4,
        );
        assert!(result.is_err(), "sabotaged gradient must fail the check");
    }
}
