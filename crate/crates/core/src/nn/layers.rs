//! Layer library: forward passes and hand-derived backward passes.
//!
//! Every layer follows the same protocol: `forward` is pure and returns the
//! output (plus whatever intermediate the backward pass needs, bundled in a
//! small cache struct when the input alone is not enough); `backward` takes
//! the forward input, the cache, and the output gradient, accumulates
//! parameter gradients into each [`Param`]'s `g`, and returns the input
//! gradient. Feature maps are `(channels, time, vertices)`; batched vectors
//! are `(batch, features)`.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis, Ix1, Ix2, Ix3, Zip};
use rand::Rng;

use super::{join, Param, ParamMut, ParamSet};
use crate::error::{Error, Result};

/// Reinterpret a `(c, t, v)` view as `(c, t*v)`; valid because all owned
/// arrays in this crate are standard row-major.
fn as_rows(x: ArrayView3<'_, f64>) -> ArrayView2<'_, f64> {
    let (c, t, v) = x.dim();
    x.into_shape_with_order((c, t * v))
        .expect("feature maps are standard layout")
}

/// Reinterpret a `(c, t, v)` view as `(c*t, v)`.
fn as_stacked(x: ArrayView3<'_, f64>) -> ArrayView2<'_, f64> {
    let (c, t, v) = x.dim();
    x.into_shape_with_order((c * t, v))
        .expect("feature maps are standard layout")
}

/// Force standard row-major layout. `dot` can hand back a reversed-stride
/// buffer (e.g. when one operand was a transposed view), which would break
/// the zero-copy reshapes above on the next layer's input.
fn to_standard<D: ndarray::Dimension>(a: ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn into_map(y: Array2<f64>, c: usize, t: usize, v: usize) -> Array3<f64> {
    to_standard(y)
        .into_shape_with_order((c, t, v))
        .expect("row count matches map size")
}

/// Fully connected layer over batched row vectors: `y = x Wᵀ + b`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Param<Ix2>, // (out, in)
    pub b: Param<Ix1>, // (out,)
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Dense {
            w: Param::uniform((outputs, inputs), inputs, rng),
            b: Param::zeros(outputs),
        }
    }

    pub fn in_features(&self) -> usize {
        self.w.v.dim().1
    }

    pub fn out_features(&self) -> usize {
        self.w.v.dim().0
    }

    /// `x`: (batch, in) → (batch, out).
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        to_standard(x.dot(&self.w.v.t()) + &self.b.v)
    }

    /// Returns the input gradient; accumulates parameter gradients.
    pub fn backward(&mut self, x: ArrayView2<'_, f64>, gy: ArrayView2<'_, f64>) -> Array2<f64> {
        self.w.g += &gy.t().dot(&x);
        self.b.g += &gy.sum_axis(Axis(0));
        to_standard(gy.dot(&self.w.v))
    }
}

impl ParamSet for Dense {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        f(&join(prefix, "w"), self.w.v.view().into_dyn());
        f(&join(prefix, "b"), self.b.v.view().into_dyn());
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        f(
            &join(prefix, "w"),
            ParamMut { v: self.w.v.view_mut().into_dyn(), g: self.w.g.view_mut().into_dyn() },
        );
        f(
            &join(prefix, "b"),
            ParamMut { v: self.b.v.view_mut().into_dyn(), g: self.b.g.view_mut().into_dyn() },
        );
    }
}

/// 1×1 convolution over feature maps — a pure channel mix, optionally with
/// bias: `y[o,t,v] = Σ_i w[o,i] x[i,t,v] (+ b[o])`.
#[derive(Debug, Clone)]
pub struct Conv1x1 {
    pub w: Param<Ix2>, // (out, in)
    pub b: Option<Param<Ix1>>,
}

impl Conv1x1 {
    pub fn new(inputs: usize, outputs: usize, bias: bool, rng: &mut impl Rng) -> Self {
        Conv1x1 {
            w: Param::uniform((outputs, inputs), inputs, rng),
            b: bias.then(|| Param::zeros(outputs)),
        }
    }

    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Array3<f64> {
        let (_, t, v) = x.dim();
        let mut y2 = self.w.v.dot(&as_rows(x));
        if let Some(b) = &self.b {
            y2 += &b.v.view().insert_axis(Axis(1));
        }
        into_map(y2, self.w.v.dim().0, t, v)
    }

    pub fn backward(&mut self, x: ArrayView3<'_, f64>, gy: ArrayView3<'_, f64>) -> Array3<f64> {
        let (ci, t, v) = x.dim();
        let gy2 = as_rows(gy);
        let x2 = as_rows(x);
        self.w.g += &gy2.dot(&x2.t());
        if let Some(b) = &mut self.b {
            b.g += &gy2.sum_axis(Axis(1));
        }
        into_map(self.w.v.t().dot(&gy2), ci, t, v)
    }
}

impl ParamSet for Conv1x1 {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        f(&join(prefix, "w"), self.w.v.view().into_dyn());
        if let Some(b) = &self.b {
            f(&join(prefix, "b"), b.v.view().into_dyn());
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        f(
            &join(prefix, "w"),
            ParamMut { v: self.w.v.view_mut().into_dyn(), g: self.w.g.view_mut().into_dyn() },
        );
        if let Some(b) = &mut self.b {
            f(
                &join(prefix, "b"),
                ParamMut { v: b.v.view_mut().into_dyn(), g: b.g.view_mut().into_dyn() },
            );
        }
    }
}

/// Temporal convolution along the time axis, applied independently per
/// vertex, with zero padding: `y[o,to,v] = b[o] + Σ_{i,τ} w[o,i,τ] ·
/// x[i, to·s + τ − p, v]`.
#[derive(Debug, Clone)]
pub struct TemporalConv {
    pub w: Param<Ix3>, // (out, in, k)
    pub b: Param<Ix1>,
    pub stride: usize,
    pub pad: usize,
}

/// im2col buffer kept between forward and backward.
pub struct TemporalConvCache {
    cols: Array2<f64>, // (in*k, t_out*v)
}

impl TemporalConv {
    pub fn new(
        inputs: usize,
        outputs: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        TemporalConv {
            w: Param::uniform((outputs, inputs, kernel), inputs * kernel, rng),
            b: Param::zeros(outputs),
            stride,
            pad,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.w.v.dim().0
    }

    pub fn out_len(&self, t: usize) -> Result<usize> {
        let k = self.w.v.dim().2;
        let span = t + 2 * self.pad;
        if span < k || (span - k) % self.stride != 0 {
            return Err(Error::ShapeMismatch(format!(
                "temporal conv: input length {t} incompatible with kernel {k}, stride {}, pad {}",
                self.stride, self.pad
            )));
        }
        Ok((span - k) / self.stride + 1)
    }

    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Result<(Array3<f64>, TemporalConvCache)> {
        let (ci, t, v) = x.dim();
        let (co, wci, k) = self.w.v.dim();
        if ci != wci {
            return Err(Error::ShapeMismatch(format!(
                "temporal conv: {ci} input channels, kernel expects {wci}"
            )));
        }
        let to = self.out_len(t)?;
        let mut cols = Array2::zeros((ci * k, to * v));
        for i in 0..ci {
            for tau in 0..k {
                for t_out in 0..to {
                    let t_in = (t_out * self.stride + tau) as isize - self.pad as isize;
                    if t_in < 0 || t_in as usize >= t {
                        continue;
                    }
                    cols.slice_mut(s![i * k + tau, t_out * v..(t_out + 1) * v])
                        .assign(&x.slice(s![i, t_in as usize, ..]));
                }
            }
        }
        let w2 = self
            .w
            .v
            .view()
            .into_shape_with_order((co, ci * k))
            .expect("kernel is standard layout");
        let mut y2 = w2.dot(&cols);
        y2 += &self.b.v.view().insert_axis(Axis(1));
        Ok((into_map(y2, co, to, v), TemporalConvCache { cols }))
    }

    pub fn backward(
        &mut self,
        x: ArrayView3<'_, f64>,
        cache: &TemporalConvCache,
        gy: ArrayView3<'_, f64>,
    ) -> Array3<f64> {
        let (ci, t, v) = x.dim();
        let (co, _, k) = self.w.v.dim();
        let (_, to, _) = gy.dim();
        let gy2 = as_rows(gy);
        {
            let gw = gy2.dot(&cache.cols.t()); // (co, ci*k)
            let mut wg2 = self
                .w
                .g
                .view_mut()
                .into_shape_with_order((co, ci * k))
                .expect("kernel is standard layout");
            wg2 += &gw;
        }
        self.b.g += &gy2.sum_axis(Axis(1));
        let w2 = self
            .w
            .v
            .view()
            .into_shape_with_order((co, ci * k))
            .expect("kernel is standard layout");
        let gcols = w2.t().dot(&gy2); // (ci*k, to*v)
        let mut gx = Array3::zeros((ci, t, v));
        for i in 0..ci {
            for tau in 0..k {
                for t_out in 0..to {
                    let t_in = (t_out * self.stride + tau) as isize - self.pad as isize;
                    if t_in < 0 || t_in as usize >= t {
                        continue;
                    }
                    let mut row = gx.slice_mut(s![i, t_in as usize, ..]);
                    row += &gcols.slice(s![i * k + tau, t_out * v..(t_out + 1) * v]);
                }
            }
        }
        gx
    }
}

impl ParamSet for TemporalConv {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        f(&join(prefix, "w"), self.w.v.view().into_dyn());
        f(&join(prefix, "b"), self.b.v.view().into_dyn());
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        f(
            &join(prefix, "w"),
            ParamMut { v: self.w.v.view_mut().into_dyn(), g: self.w.g.view_mut().into_dyn() },
        );
        f(
            &join(prefix, "b"),
            ParamMut { v: self.b.v.view_mut().into_dyn(), g: self.b.g.view_mut().into_dyn() },
        );
    }
}

/// Transposed temporal convolution (fractionally strided) along the time
/// axis: `y[o, s·ti + τ − p, v] += Σ_i w[o,i,τ] x[i,ti,v]`, plus bias.
/// With kernel 4, stride 2, pad 1 the temporal length exactly doubles.
#[derive(Debug, Clone)]
pub struct TemporalTransposedConv {
    pub w: Param<Ix3>, // (out, in, k)
    pub b: Param<Ix1>,
    pub stride: usize,
    pub pad: usize,
}

impl TemporalTransposedConv {
    pub fn new(
        inputs: usize,
        outputs: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        TemporalTransposedConv {
            w: Param::uniform((outputs, inputs, kernel), inputs * kernel, rng),
            b: Param::zeros(outputs),
            stride,
            pad,
        }
    }

    pub fn out_len(&self, t: usize) -> usize {
        let k = self.w.v.dim().2;
        self.stride * (t - 1) + k - 2 * self.pad
    }

    /// Input time positions `ti` whose output position `s·ti + τ − p` lands
    /// inside `[0, t_out)`, as a half-open range.
    fn valid_ti(&self, tau: usize, t: usize, t_out: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = tau as isize - self.pad as isize;
        let mut lo = 0isize;
        while s * lo + off < 0 {
            lo += 1;
        }
        let mut hi = t as isize;
        while hi > lo && s * (hi - 1) + off >= t_out as isize {
            hi -= 1;
        }
        (lo as usize, hi as usize)
    }

    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
        let (ci, t, v) = x.dim();
        let (co, wci, k) = self.w.v.dim();
        if ci != wci {
            return Err(Error::ShapeMismatch(format!(
                "transposed conv: {ci} input channels, kernel expects {wci}"
            )));
        }
        if t == 0 {
            return Err(Error::ShapeMismatch("transposed conv: empty time axis".into()));
        }
        let to = self.out_len(t);
        let mut y = Array3::zeros((co, to, v));
        {
            let mut y2 = y.view_mut().into_shape_with_order((co, to * v)).unwrap();
            y2 += &self.b.v.view().insert_axis(Axis(1));
        }
        let x2 = as_rows(x);
        for tau in 0..k {
            let w_tau = self.w.v.slice(s![.., .., tau]); // (co, ci)
            let part = into_map(w_tau.dot(&x2), co, t, v);
            let (lo, hi) = self.valid_ti(tau, t, to);
            if lo >= hi {
                continue;
            }
            let t0 = self.stride * lo + tau - self.pad;
            let step = self.stride as isize;
            let mut dst =
                y.slice_mut(s![.., t0..t0 + self.stride * (hi - lo - 1) + 1; step, ..]);
            dst += &part.slice(s![.., lo..hi, ..]);
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: ArrayView3<'_, f64>, gy: ArrayView3<'_, f64>) -> Array3<f64> {
        let (ci, t, v) = x.dim();
        let (co, _, k) = self.w.v.dim();
        let (_, to, _) = gy.dim();
        self.b.g += &as_rows(gy).sum_axis(Axis(1));
        // Gather each kernel tap's window of the output gradient:
        // cols[o·k+τ, ti·v+·] = gy[o, s·ti+τ−p, ·], zero off the edges. Both
        // remaining products then run on standard-layout operands.
        let mut cols = Array2::zeros((co * k, t * v));
        for o in 0..co {
            for tau in 0..k {
                for ti in 0..t {
                    let t_out = (self.stride * ti + tau) as isize - self.pad as isize;
                    if t_out < 0 || t_out as usize >= to {
                        continue;
                    }
                    cols.slice_mut(s![o * k + tau, ti * v..(ti + 1) * v])
                        .assign(&gy.slice(s![o, t_out as usize, ..]));
                }
            }
        }
        let gw = cols.dot(&as_rows(x).t()); // (co*k, ci)
        for o in 0..co {
            for tau in 0..k {
                let mut dst = self.w.g.slice_mut(s![o, .., tau]);
                dst += &gw.row(o * k + tau);
            }
        }
        // Kernel flattened to (ci, co·k) so the input gradient is one GEMM
        // with a standard-layout result.
        let mut wp = Array2::zeros((ci, co * k));
        for o in 0..co {
            for tau in 0..k {
                wp.column_mut(o * k + tau).assign(&self.w.v.slice(s![o, .., tau]));
            }
        }
        into_map(wp.dot(&cols), ci, t, v)
    }
}

impl ParamSet for TemporalTransposedConv {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        f(&join(prefix, "w"), self.w.v.view().into_dyn());
        f(&join(prefix, "b"), self.b.v.view().into_dyn());
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        f(
            &join(prefix, "w"),
            ParamMut { v: self.w.v.view_mut().into_dyn(), g: self.w.g.view_mut().into_dyn() },
        );
        f(
            &join(prefix, "b"),
            ParamMut { v: self.b.v.view_mut().into_dyn(), g: self.b.g.view_mut().into_dyn() },
        );
    }
}

/// Masked inter-level aggregation lifting features from a coarse vertex set
/// to a fine one: `f_out[c,t,i] = Σ_{b,j} (mask ⊙ w)[b,i,j] · f_in[c,t,j]`.
///
/// The binary mask is fixed topology; only weights at mask-1 positions are
/// trainable, and weights at mask-0 positions stay exactly zero for the
/// lifetime of the layer (gradients are masked, so the optimizer never
/// moves them).
#[derive(Debug, Clone)]
pub struct SpatialUpsample {
    pub w: Param<Ix3>,      // (b, v_fine, v_coarse)
    pub mask: Array3<f64>,  // same shape, entries 0/1
}

impl SpatialUpsample {
    /// Weights start at 1 on every unmasked position (identity-style copy
    /// aggregation).
    pub fn new(mask: Array3<f64>) -> Self {
        let mut w = Param::zeros(mask.raw_dim());
        w.v.assign(&mask);
        SpatialUpsample { w, mask }
    }

    /// The effective mixing matrix `Σ_b mask[b] ⊙ w[b]`, stored transposed
    /// as (v_coarse, v_fine) so the forward GEMM produces a standard-layout
    /// result without copying.
    fn mixing_t(&self) -> Array2<f64> {
        let (nb, vf, vc) = self.mask.dim();
        let mut m = Array2::zeros((vc, vf));
        for b in 0..nb {
            Zip::indexed(&self.mask.index_axis(Axis(0), b))
                .and(&self.w.v.index_axis(Axis(0), b))
                .for_each(|(f, c), &mk, &wv| m[[c, f]] += mk * wv);
        }
        m
    }

    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
        let (c, t, vc) = x.dim();
        let (_, vf, mvc) = self.mask.dim();
        if vc != mvc {
            return Err(Error::ShapeMismatch(format!(
                "spatial upsample: input has {vc} vertices, mask expects {mvc}"
            )));
        }
        let y2 = as_stacked(x).dot(&self.mixing_t()); // (c*t, vf)
        Ok(into_map(y2, c, t, vf))
    }

    pub fn backward(&mut self, x: ArrayView3<'_, f64>, gy: ArrayView3<'_, f64>) -> Array3<f64> {
        let (c, t, vc) = x.dim();
        let (nb, _, _) = self.mask.dim();
        let gy2 = as_stacked(gy); // (c*t, vf)
        let x2 = as_stacked(x); // (c*t, vc)
        let p = gy2.t().dot(&x2); // (vf, vc)
        for b in 0..nb {
            let mut wg = self.w.g.index_axis_mut(Axis(0), b);
            Zip::from(&mut wg)
                .and(&self.mask.index_axis(Axis(0), b))
                .and(&p)
                .for_each(|g, &mk, &pe| *g += mk * pe);
        }
        into_map(gy2.dot(&self.mixing_t().t()), c, t, vc)
    }
}

impl ParamSet for SpatialUpsample {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        f(&join(prefix, "w"), self.w.v.view().into_dyn());
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        f(
            &join(prefix, "w"),
            ParamMut { v: self.w.v.view_mut().into_dyn(), g: self.w.g.view_mut().into_dyn() },
        );
    }
}

/// Graph convolution block: spatial aggregation with a fixed symmetric
/// degree-normalized adjacency, a 1×1 channel mix, a width-3 temporal
/// convolution (padding preserves length), then a leaky rectifier.
#[derive(Debug, Clone)]
pub struct GraphConv {
    pub ws: Param<Ix2>,      // (out, in) channel mix
    pub tconv: TemporalConv, // (out → out), k=3, stride 1, pad 1, carries bias
    pub adj: Array2<f64>,    // (v, v) normalized adjacency, symmetric
    pub slope: f64,
}

pub struct GraphConvCache {
    h2: Array3<f64>,  // after channel mix + adjacency
    pre: Array3<f64>, // pre-activation (after temporal conv)
    tc: TemporalConvCache,
}

impl GraphConv {
    pub fn new(inputs: usize, outputs: usize, adj: Array2<f64>, slope: f64, rng: &mut impl Rng) -> Self {
        GraphConv {
            ws: Param::uniform((outputs, inputs), inputs, rng),
            tconv: TemporalConv::new(outputs, outputs, 3, 1, 1, rng),
            adj,
            slope,
        }
    }

    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Result<(Array3<f64>, GraphConvCache)> {
        let (_, t, v) = x.dim();
        if v != self.adj.dim().0 {
            return Err(Error::ShapeMismatch(format!(
                "graph conv: input has {v} vertices, adjacency expects {}",
                self.adj.dim().0
            )));
        }
        let co = self.ws.v.dim().0;
        let h1 = into_map(self.ws.v.dot(&as_rows(x)), co, t, v);
        // Adjacency is symmetric, so right-multiplying the (c*t, v) stack by
        // it aggregates each vertex's neighborhood.
        let h2 = into_map(as_stacked(h1.view()).dot(&self.adj), co, t, v);
        let (pre, tc) = self.tconv.forward(h2.view())?;
        let y = super::leaky_relu(&pre, self.slope);
        Ok((y, GraphConvCache { h2, pre, tc }))
    }

    pub fn backward(
        &mut self,
        x: ArrayView3<'_, f64>,
        cache: &GraphConvCache,
        gy: ArrayView3<'_, f64>,
    ) -> Array3<f64> {
        let (ci, t, v) = x.dim();
        let co = self.ws.v.dim().0;
        let gpre = super::leaky_relu_backward(&cache.pre, gy, self.slope);
        let g2 = self.tconv.backward(cache.h2.view(), &cache.tc, gpre.view());
        let g1 = into_map(as_stacked(g2.view()).dot(&self.adj), co, t, v);
        let g1_rows = as_rows(g1.view()); // (co, t*v)
        self.ws.g += &g1_rows.dot(&as_rows(x).t());
        into_map(self.ws.v.t().dot(&g1_rows), ci, t, v)
    }
}

impl ParamSet for GraphConv {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        f(&join(prefix, "ws"), self.ws.v.view().into_dyn());
        self.tconv.visit_params(&join(prefix, "t"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        f(
            &join(prefix, "ws"),
            ParamMut { v: self.ws.v.view_mut().into_dyn(), g: self.ws.g.view_mut().into_dyn() },
        );
        self.tconv.visit_params_mut(&join(prefix, "t"), f);
    }
}

/// Residual bridge across a temporal-upsampling layer: nearest-neighbor
/// temporal repeat (×2) followed by a 1×1 channel projection when the
/// channel counts differ (bias-free; the main path already carries one).
#[derive(Debug, Clone)]
pub struct ResidualUpsample {
    pub proj: Option<Param<Ix2>>, // (out, in)
}

impl ResidualUpsample {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        ResidualUpsample {
            proj: (inputs != outputs).then(|| Param::uniform((outputs, inputs), inputs, rng)),
        }
    }

    fn repeat(x: ArrayView3<'_, f64>) -> Array3<f64> {
        let (c, t, v) = x.dim();
        let mut r = Array3::zeros((c, 2 * t, v));
        for ti in 0..t {
            r.slice_mut(s![.., 2 * ti, ..]).assign(&x.slice(s![.., ti, ..]));
            r.slice_mut(s![.., 2 * ti + 1, ..]).assign(&x.slice(s![.., ti, ..]));
        }
        r
    }

    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Array3<f64> {
        let r = Self::repeat(x);
        match &self.proj {
            None => r,
            Some(w) => {
                let (_, t2, v) = r.dim();
                into_map(w.v.dot(&as_rows(r.view())), w.v.dim().0, t2, v)
            }
        }
    }

    pub fn backward(&mut self, x: ArrayView3<'_, f64>, gy: ArrayView3<'_, f64>) -> Array3<f64> {
        let (ci, t, v) = x.dim();
        let gr = match &mut self.proj {
            None => gy.to_owned(),
            Some(w) => {
                let r = Self::repeat(x);
                let gy2 = as_rows(gy);
                w.g += &gy2.dot(&as_rows(r.view()).t());
                into_map(w.v.t().dot(&gy2), ci, 2 * t, v)
            }
        };
        let mut gx = Array3::zeros((ci, t, v));
        for ti in 0..t {
            let mut row = gx.slice_mut(s![.., ti, ..]);
            row += &gr.slice(s![.., 2 * ti, ..]);
            row += &gr.slice(s![.., 2 * ti + 1, ..]);
        }
        gx
    }
}

impl ParamSet for ResidualUpsample {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        if let Some(w) = &self.proj {
            f(&join(prefix, "w"), w.v.view().into_dyn());
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        if let Some(w) = &mut self.proj {
            f(
                &join(prefix, "w"),
                ParamMut { v: w.v.view_mut().into_dyn(), g: w.g.view_mut().into_dyn() },
            );
        }
    }
}

/// Hyperbolic tangent, elementwise, with its backward pass expressed in
/// terms of the forward output.
pub fn tanh(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(f64::tanh)
}

pub fn tanh_backward(y: &Array2<f64>, gy: &Array2<f64>) -> Array2<f64> {
    let mut gx = gy.clone();
    Zip::from(&mut gx).and(y).for_each(|g, &yv| *g *= 1.0 - yv * yv);
    gx
}
