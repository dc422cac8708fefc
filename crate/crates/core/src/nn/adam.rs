//! Adaptive moment estimation over a [`ParamSet`].
//!
//! State (first/second moment per tensor, step counter) is keyed by the
//! parameter's full dotted name so it can round-trip through checkpoints and
//! survive model reconstruction. Updates are applied in visit order, which
//! is deterministic by the [`ParamSet`] contract.

use std::collections::BTreeMap;

use ndarray::{ArrayD, Zip};

use super::ParamSet;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    state: BTreeMap<String, (ArrayD<f64>, ArrayD<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step_count: 0, state: BTreeMap::new() }
    }

    /// One update step over every parameter of `model`, consuming the
    /// gradients currently accumulated in each `Param::g` (callers zero them
    /// afterwards or before the next backward pass).
    pub fn step(&mut self, model: &mut dyn ParamSet) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        // Bias correction folded into two scalars:
        //   lr·(m/c1) / (√(v/c2) + ε) = k_num·m / (√v + k_eps)
        // with k_num = lr·√c2/c1 and k_eps = ε·√c2, saving a division per
        // element on the innermost loop.
        let k_num = self.lr * c2.sqrt() / c1;
        let k_eps = self.eps * c2.sqrt();
        let (b1, b2) = (self.beta1, self.beta2);
        let (r1, r2) = (1.0 - b1, 1.0 - b2);
        let state = &mut self.state;
        model.visit_params_mut("", &mut |name, mut p| {
            let (m, v) = state
                .entry(name.to_string())
                .or_insert_with(|| (ArrayD::zeros(p.v.raw_dim()), ArrayD::zeros(p.v.raw_dim())));
            // Hot loop over millions of elements: go through contiguous
            // slices when possible — elementwise traversal of dynamic-dim
            // views is an order of magnitude slower.
            match (p.v.as_slice_mut(), p.g.as_slice(), m.as_slice_mut(), v.as_slice_mut()) {
                (Some(ws), Some(gs), Some(ms), Some(vs)) => {
                    for i in 0..ws.len() {
                        ms[i] = b1 * ms[i] + r1 * gs[i];
                        vs[i] = b2 * vs[i] + r2 * gs[i] * gs[i];
                        ws[i] -= k_num * ms[i] / (vs[i].sqrt() + k_eps);
                    }
                }
                _ => {
                    Zip::from(&mut p.v).and(m).and(v).and(&p.g).for_each(|w, m, v, &g| {
                        *m = b1 * *m + r1 * g;
                        *v = b2 * *v + r2 * g * g;
                        *w -= k_num * *m / (v.sqrt() + k_eps);
                    });
                }
            }
        });
    }

    /// Export moment tensors for checkpointing, prefixed per tensor with
    /// `.m` / `.v` suffixes.
    pub fn export_state(&self) -> Vec<(String, ArrayD<f64>)> {
        let mut out = Vec::with_capacity(2 * self.state.len());
        for (name, (m, v)) in &self.state {
            out.push((format!("{name}.m"), m.clone()));
            out.push((format!("{name}.v"), v.clone()));
        }
        out
    }

    /// Restore moment tensors exported by [`Adam::export_state`].
    pub fn import_state(
        &mut self,
        step_count: u64,
        tensors: impl IntoIterator<Item = (String, ArrayD<f64>)>,
    ) -> crate::error::Result<()> {
        self.step_count = step_count;
        self.state.clear();
        let mut halves: BTreeMap<String, (Option<ArrayD<f64>>, Option<ArrayD<f64>>)> =
            BTreeMap::new();
        for (name, t) in tensors {
            if let Some(base) = name.strip_suffix(".m") {
                halves.entry(base.to_string()).or_default().0 = Some(t);
            } else if let Some(base) = name.strip_suffix(".v") {
                halves.entry(base.to_string()).or_default().1 = Some(t);
            } else {
                return Err(crate::error::Error::CorruptData(format!(
                    "optimizer tensor '{name}' lacks .m/.v suffix"
                )));
            }
        }
        for (base, (m, v)) in halves {
            match (m, v) {
                (Some(m), Some(v)) => {
                    self.state.insert(base, (m, v));
                }
                _ => {
                    return Err(crate::error::Error::CorruptData(format!(
                        "optimizer state for '{base}' is missing one moment tensor"
                    )))
                }
            }
        }
        Ok(())
    }
}
