//! Minimal dense-tensor neural-network toolkit used by the decoder, the
//! sampling network, and the evaluation autoencoder.
//!
//! Everything is `f64` and single-threaded: training runs must be
//! bit-reproducible given a seed, and every layer ships a hand-derived
//! backward pass that is validated against central finite differences (see
//! [`gradcheck`]). Hot paths are expressed as matrix multiplications so the
//! whole stack rides on one well-optimized GEMM kernel.
//!
//! Layout conventions:
//! * feature maps are `(channels, time, vertices)` arrays in standard
//!   row-major order;
//! * batched vector data is `(batch, features)`;
//! * a [`Param`] couples a value tensor with its gradient accumulator, and
//!   models expose their parameters through [`ParamSet`] under stable
//!   dotted names (`block0.gcn.ws`, ...), which is what the optimizer,
//!   checkpoints, and the finite-difference harness all key on.

pub mod adam;
pub mod gradcheck;
pub mod layers;

use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD, Dimension};
use rand::Rng;

/// A trainable tensor: value plus gradient accumulator of identical shape.
///
/// Gradients accumulate across backward calls until [`Param::zero_grad`] (or
/// [`ParamSet::zero_grads`]) resets them, which is what makes batched
/// training loops a plain sum of per-sample backward passes.
#[derive(Debug, Clone)]
pub struct Param<D: Dimension> {
    pub v: ndarray::Array<f64, D>,
    pub g: ndarray::Array<f64, D>,
}

impl<D: Dimension> Param<D> {
    pub fn zeros<Sh: ndarray::ShapeBuilder<Dim = D> + Clone>(shape: Sh) -> Self {
        Param {
            v: ndarray::Array::zeros(shape.clone()),
            g: ndarray::Array::zeros(shape),
        }
    }

    pub fn ones<Sh: ndarray::ShapeBuilder<Dim = D> + Clone>(shape: Sh) -> Self {
        Param {
            v: ndarray::Array::ones(shape.clone()),
            g: ndarray::Array::zeros(shape),
        }
    }

    /// Fan-in-scaled uniform initialization: entries drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn uniform<Sh: ndarray::ShapeBuilder<Dim = D> + Clone>(
        shape: Sh,
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut p = Self::zeros(shape);
        for e in p.v.iter_mut() {
            *e = rng.random_range(-bound..bound);
        }
        p
    }

    pub fn zero_grad(&mut self) {
        self.g.fill(0.0);
    }
}

/// Mutable, dimension-erased view of one parameter used by visitors.
pub struct ParamMut<'a> {
    pub v: ArrayViewMutD<'a, f64>,
    pub g: ArrayViewMutD<'a, f64>,
}

/// Uniform access to a model's named parameters.
///
/// Visit order is defined by the implementation and must be deterministic;
/// the optimizer, checkpoint writer, and gradient checker all rely on it.
pub trait ParamSet {
    /// Visit `(name, value)` pairs immutably.
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>));

    /// Visit `(name, value+grad)` pairs mutably.
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>));

    fn zero_grads(&mut self) {
        self.visit_params_mut("", &mut |_, mut p| match p.g.as_slice_mut() {
            Some(s) => s.fill(0.0),
            None => p.g.fill(0.0),
        });
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, v| n += v.len());
        n
    }

    /// Clone all parameter values under their full names.
    fn named_tensors(&self) -> Vec<(String, ArrayD<f64>)> {
        let mut out = Vec::new();
        self.visit_params("", &mut |name, v| out.push((name.to_string(), v.to_owned())));
        out
    }

    /// Overwrite parameter values from `tensors`; every visited name must be
    /// present with a matching shape, and unknown names are rejected.
    fn load_tensors(
        &mut self,
        tensors: &std::collections::BTreeMap<String, ArrayD<f64>>,
    ) -> crate::error::Result<()> {
        let mut missing = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        let mut shape_err = None;
        self.visit_params_mut("", &mut |name, mut p| {
            seen.insert(name.to_string());
            match tensors.get(name) {
                Some(t) if t.shape() == p.v.shape() => p.v.assign(t),
                Some(t) => {
                    if shape_err.is_none() {
                        shape_err = Some(format!(
                            "tensor '{name}': stored shape {:?}, model expects {:?}",
                            t.shape(),
                            p.v.shape()
                        ));
                    }
                }
                None => missing.push(name.to_string()),
            }
        });
        if let Some(msg) = shape_err {
            return Err(crate::error::Error::ShapeMismatch(msg));
        }
        if !missing.is_empty() {
            return Err(crate::error::Error::MissingArtifact(format!(
                "checkpoint lacks tensors: {}",
                missing.join(", ")
            )));
        }
        for name in tensors.keys() {
            if !seen.contains(name) {
                return Err(crate::error::Error::ArtifactMismatch(format!(
                    "checkpoint carries unknown tensor '{name}'"
                )));
            }
        }
        Ok(())
    }
}

/// Join a visitor prefix with a local parameter name.
pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Leaky rectifier, elementwise: `x if x > 0 else slope * x`.
pub fn leaky_relu<D: Dimension>(
    x: &ndarray::Array<f64, D>,
    slope: f64,
) -> ndarray::Array<f64, D> {
    x.mapv(|e| if e > 0.0 { e } else { slope * e })
}

/// Gradient of [`leaky_relu`] given the pre-activation input.
pub fn leaky_relu_backward<D: Dimension>(
    pre: &ndarray::Array<f64, D>,
    gy: ndarray::ArrayView<'_, f64, D>,
    slope: f64,
) -> ndarray::Array<f64, D> {
    let mut gx = gy.to_owned();
    ndarray::Zip::from(&mut gx)
        .and(pre)
        .for_each(|g, &p| *g *= if p > 0.0 { 1.0 } else { slope });
    gx
}
