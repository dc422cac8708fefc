//! Latent-to-sequence decoders.
//!
//! The principal decoder expands a unit-norm latent vector into a 64-frame
//! sequence of 69 facial landmarks by walking up the face-graph pyramid:
//! a dense projection seeds a single graph node with 512 channels over 4
//! frames, and four upsampling blocks then alternate temporal doubling
//! (transposed convolution, bridged by a residual connection), masked
//! spatial lifting onto the next-finer vertex set, and a spatio-temporal
//! graph convolution. A final 1×1 convolution emits the two coordinate
//! channels, giving a 64×69×2 sequence.
//!
//! A second, deliberately graph-free decoder with the same input/output
//! contract (three fully connected layers) backs the `wo_gcn` ablation.
//!
//! Both decoders run in 64-bit precision and support a full hand-derived
//! backward pass: [`Decoder::backward`] accumulates parameter gradients and
//! returns the gradient with respect to the latent itself, which is what
//! the latent-optimization trainer updates.

use ndarray::{Array1, Array2, Array3, ArrayView1, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{
    Conv1x1, Dense, GraphConv, GraphConvCache, ResidualUpsample, SpatialUpsample,
    TemporalTransposedConv,
};
use crate::nn::{leaky_relu, leaky_relu_backward, ParamMut, ParamSet};
use crate::topology::{normalize_adjacency, GraphPyramid};

/// Latent dimensionality (two banks of 768 features).
pub const LATENT_DIM: usize = 1536;
/// Frames per decoded sequence.
pub const FRAME_COUNT: usize = 64;
/// Coordinate channels per landmark.
pub const COORD_CHANNELS: usize = 2;
/// Channel widths entering each upsampling block, then leaving the last.
pub const CHANNEL_SCHEDULE: [usize; 5] = [512, 256, 128, 64, 64];
/// Temporal extent of the seed node; four doublings reach [`FRAME_COUNT`].
pub const INITIAL_FRAMES: usize = 4;
/// Negative slope of the leaky rectifier used throughout the decoder.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Maximum tolerated deviation of a consumed latent from unit norm.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// A decoded sequence: `(frame, vertex, coordinate)` with shape
/// `(64, 69, 2)` in normalized coordinate units.
pub type ExpressionSequence = Array3<f64>;

/// Checks the latent contract: correct length, finite entries, unit norm.
pub fn validate_latent(z: ArrayView1<'_, f64>) -> Result<()> {
    if z.len() != LATENT_DIM {
        return Err(Error::ShapeMismatch(format!(
            "latent has {} entries, decoder expects {LATENT_DIM}",
            z.len()
        )));
    }
    if z.iter().any(|e| !e.is_finite()) {
        return Err(Error::DegenerateInput("latent contains non-finite entries".into()));
    }
    let norm = z.dot(&z).sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "latent norm {norm} is not 1 within {UNIT_NORM_TOLERANCE}"
        )));
    }
    Ok(())
}

/// One pyramid stage: temporal doubling with its residual bridge, masked
/// spatial lift to the finer vertex set, then a graph convolution on the
/// finer graph.
#[derive(Debug, Clone)]
pub struct Block {
    pub tconv: TemporalTransposedConv,
    pub res: ResidualUpsample,
    pub up: SpatialUpsample,
    pub gconv: GraphConv,
}

impl ParamSet for Block {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        self.tconv.visit_params(&crate::nn::join(prefix, "tup"), f);
        self.res.visit_params(&crate::nn::join(prefix, "res"), f);
        self.up.visit_params(&crate::nn::join(prefix, "sup"), f);
        self.gconv.visit_params(&crate::nn::join(prefix, "gcn"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        self.tconv.visit_params_mut(&crate::nn::join(prefix, "tup"), f);
        self.res.visit_params_mut(&crate::nn::join(prefix, "res"), f);
        self.up.visit_params_mut(&crate::nn::join(prefix, "sup"), f);
        self.gconv.visit_params_mut(&crate::nn::join(prefix, "gcn"), f);
    }
}

/// Per-block intermediates retained for the backward pass.
pub struct BlockTrace {
    x: Array3<f64>,
    sum_pre: Array3<f64>,
    act: Array3<f64>,
    up_out: Array3<f64>,
    gcache: GraphConvCache,
}

/// The graph-pyramid decoder.
#[derive(Debug, Clone)]
pub struct GraphDecoder {
    pub initial: Dense,
    pub blocks: Vec<Block>,
    pub output: Conv1x1,
    topology_version: String,
}

/// Intermediates of one [`GraphDecoder`] forward pass.
pub struct GraphTrace {
    z_row: Array2<f64>,
    x0: Array3<f64>,
    blocks: Vec<BlockTrace>,
    final_in: Array3<f64>,
}

impl GraphDecoder {
    /// Fresh parameters over `pyramid`, drawn from `rng` (fan-in-scaled
    /// uniform for kernels, ones at mask positions for lift weights).
    pub fn new(pyramid: &GraphPyramid, rng: &mut impl Rng) -> Result<Self> {
        let pairs = pyramid.inter_level_adjacency.len();
        if pairs + 1 != CHANNEL_SCHEDULE.len() {
            return Err(Error::InvalidParameter(format!(
                "decoder needs a {}-level pyramid, got {} levels",
                CHANNEL_SCHEDULE.len(),
                pairs + 1
            )));
        }
        let initial = Dense::new(LATENT_DIM, CHANNEL_SCHEDULE[0] * INITIAL_FRAMES, rng);
        let mut blocks = Vec::with_capacity(pairs);
        for pair in 0..pairs {
            let cin = CHANNEL_SCHEDULE[pair];
            let cout = CHANNEL_SCHEDULE[pair + 1];
            let fine = &pyramid.levels[pair + 1];
            blocks.push(Block {
                tconv: TemporalTransposedConv::new(cin, cout, 4, 2, 1, rng),
                res: ResidualUpsample::new(cin, cout, rng),
                up: SpatialUpsample::new(pyramid.inter_level_adjacency[pair].clone()),
                gconv: GraphConv::new(
                    cout,
                    cout,
                    normalize_adjacency(&fine.adjacency_matrix()),
                    LEAKY_SLOPE,
                    rng,
                ),
            });
        }
        let output = Conv1x1::new(CHANNEL_SCHEDULE[pairs], COORD_CHANNELS, true, rng);
        Ok(GraphDecoder {
            initial,
            blocks,
            output,
            topology_version: pyramid.topology_version.clone(),
        })
    }

    /// Version stamp of the pyramid these parameters were built against.
    pub fn topology_version(&self) -> &str {
        &self.topology_version
    }

    fn forward(&self, z: ArrayView1<'_, f64>) -> Result<(ExpressionSequence, GraphTrace)> {
        validate_latent(z)?;
        let z_row = z.to_owned().insert_axis(Axis(0));
        let h0 = self.initial.forward(z_row.view());
        let x0 = h0
            .into_shape_clone((CHANNEL_SCHEDULE[0], INITIAL_FRAMES, 1))
            .expect("projection output reshapes to the seed node");
        let mut x = x0.clone();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let main = block.tconv.forward(x.view())?;
            let bridge = block.res.forward(x.view());
            let sum_pre = main + bridge;
            let act = leaky_relu(&sum_pre, LEAKY_SLOPE);
            let up_out = block.up.forward(act.view())?;
            let (y, gcache) = block.gconv.forward(up_out.view())?;
            blocks.push(BlockTrace { x, sum_pre, act, up_out, gcache });
            x = y;
        }
        let final_in = x;
        let y = self.output.forward(final_in.view());
        let (_, t, v) = y.dim();
        let mut seq = Array3::zeros((t, v, COORD_CHANNELS));
        for m in 0..COORD_CHANNELS {
            for ti in 0..t {
                for vi in 0..v {
                    seq[[ti, vi, m]] = y[[m, ti, vi]];
                }
            }
        }
        Ok((seq, GraphTrace { z_row, x0, blocks, final_in }))
    }

    fn backward(&mut self, trace: &GraphTrace, g_seq: &ExpressionSequence) -> Array1<f64> {
        let (t, v, _) = g_seq.dim();
        let mut gy = Array3::zeros((COORD_CHANNELS, t, v));
        for m in 0..COORD_CHANNELS {
            for ti in 0..t {
                for vi in 0..v {
                    gy[[m, ti, vi]] = g_seq[[ti, vi, m]];
                }
            }
        }
        let mut g = self.output.backward(trace.final_in.view(), gy.view());
        for (block, bt) in self.blocks.iter_mut().zip(&trace.blocks).rev() {
            let g_up = block.gconv.backward(bt.up_out.view(), &bt.gcache, g.view());
            let g_act = block.up.backward(bt.act.view(), g_up.view());
            let g_sum = leaky_relu_backward(&bt.sum_pre, g_act.view(), LEAKY_SLOPE);
            let g_main = block.tconv.backward(bt.x.view(), g_sum.view());
            let g_bridge = block.res.backward(bt.x.view(), g_sum.view());
            g = g_main + g_bridge;
        }
        debug_assert_eq!(g.dim(), trace.x0.dim());
        let g0 = g
            .into_shape_clone((1, CHANNEL_SCHEDULE[0] * INITIAL_FRAMES))
            .expect("seed-node gradient flattens to the projection output");
        let gz = self.initial.backward(trace.z_row.view(), g0.view());
        gz.index_axis(Axis(0), 0).to_owned()
    }
}

impl ParamSet for GraphDecoder {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        self.initial.visit_params(&crate::nn::join(prefix, "init"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_params(&crate::nn::join(prefix, &format!("block{i}")), f);
        }
        self.output.visit_params(&crate::nn::join(prefix, "out"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        self.initial.visit_params_mut(&crate::nn::join(prefix, "init"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_params_mut(&crate::nn::join(prefix, &format!("block{i}")), f);
        }
        self.output.visit_params_mut(&crate::nn::join(prefix, "out"), f);
    }
}

/// Graph-free stand-in with the decoder's exact input/output contract:
/// three fully connected layers (1536 → 512 → 512 → 8832) with leaky
/// rectifiers between them and a linear head.
#[derive(Debug, Clone)]
pub struct MlpDecoder {
    pub l1: Dense,
    pub l2: Dense,
    pub l3: Dense,
}

/// Hidden width of [`MlpDecoder`].
pub const MLP_HIDDEN: usize = 512;

/// Intermediates of one [`MlpDecoder`] forward pass.
pub struct MlpTrace {
    z_row: Array2<f64>,
    h1_pre: Array2<f64>,
    h1: Array2<f64>,
    h2_pre: Array2<f64>,
    h2: Array2<f64>,
}

impl MlpDecoder {
    pub fn new(rng: &mut impl Rng) -> Self {
        let out = FRAME_COUNT * 69 * COORD_CHANNELS;
        MlpDecoder {
            l1: Dense::new(LATENT_DIM, MLP_HIDDEN, rng),
            l2: Dense::new(MLP_HIDDEN, MLP_HIDDEN, rng),
            l3: Dense::new(MLP_HIDDEN, out, rng),
        }
    }

    fn forward(&self, z: ArrayView1<'_, f64>) -> Result<(ExpressionSequence, MlpTrace)> {
        validate_latent(z)?;
        let z_row = z.to_owned().insert_axis(Axis(0));
        let h1_pre = self.l1.forward(z_row.view());
        let h1 = leaky_relu(&h1_pre, LEAKY_SLOPE);
        let h2_pre = self.l2.forward(h1.view());
        let h2 = leaky_relu(&h2_pre, LEAKY_SLOPE);
        let y = self.l3.forward(h2.view());
        let seq = y
            .into_shape_clone((FRAME_COUNT, 69, COORD_CHANNELS))
            .expect("head output reshapes to a sequence");
        Ok((seq, MlpTrace { z_row, h1_pre, h1, h2_pre, h2 }))
    }

    fn backward(&mut self, trace: &MlpTrace, g_seq: &ExpressionSequence) -> Array1<f64> {
        let gy = g_seq
            .to_owned()
            .into_shape_clone((1, FRAME_COUNT * 69 * COORD_CHANNELS))
            .expect("sequence gradient flattens to the head output");
        let g2 = self.l3.backward(trace.h2.view(), gy.view());
        let g2 = leaky_relu_backward(&trace.h2_pre, g2.view(), LEAKY_SLOPE);
        let g1 = self.l2.backward(trace.h1.view(), g2.view());
        let g1 = leaky_relu_backward(&trace.h1_pre, g1.view(), LEAKY_SLOPE);
        let gz = self.l1.backward(trace.z_row.view(), g1.view());
        gz.index_axis(Axis(0), 0).to_owned()
    }
}

impl ParamSet for MlpDecoder {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        self.l1.visit_params(&crate::nn::join(prefix, "l1"), f);
        self.l2.visit_params(&crate::nn::join(prefix, "l2"), f);
        self.l3.visit_params(&crate::nn::join(prefix, "l3"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        self.l1.visit_params_mut(&crate::nn::join(prefix, "l1"), f);
        self.l2.visit_params_mut(&crate::nn::join(prefix, "l2"), f);
        self.l3.visit_params_mut(&crate::nn::join(prefix, "l3"), f);
    }
}

/// Either decoder behind one training/inference surface.
#[derive(Debug, Clone)]
pub enum Decoder {
    Graph(GraphDecoder),
    Mlp(MlpDecoder),
}

/// Forward-pass intermediates for [`Decoder::backward`].
pub enum DecodeTrace {
    Graph(GraphTrace),
    Mlp(MlpTrace),
}

impl Decoder {
    pub fn graph(pyramid: &GraphPyramid, rng: &mut impl Rng) -> Result<Self> {
        Ok(Decoder::Graph(GraphDecoder::new(pyramid, rng)?))
    }

    pub fn mlp(rng: &mut impl Rng) -> Self {
        Decoder::Mlp(MlpDecoder::new(rng))
    }

    /// Checkpoint `kind` string for this decoder family.
    pub fn kind(&self) -> &'static str {
        match self {
            Decoder::Graph(_) => "decoder/graph",
            Decoder::Mlp(_) => "decoder/mlp",
        }
    }

    /// Channel schedule recorded into checkpoints.
    pub fn channel_schedule(&self) -> Vec<usize> {
        match self {
            Decoder::Graph(_) => CHANNEL_SCHEDULE.to_vec(),
            Decoder::Mlp(_) => vec![LATENT_DIM, MLP_HIDDEN, MLP_HIDDEN, FRAME_COUNT * 69 * 2],
        }
    }

    /// Decode without keeping intermediates.
    pub fn decode(&self, z: ArrayView1<'_, f64>) -> Result<ExpressionSequence> {
        Ok(self.decode_traced(z)?.0)
    }

    /// Decode and keep everything [`Decoder::backward`] needs.
    pub fn decode_traced(
        &self,
        z: ArrayView1<'_, f64>,
    ) -> Result<(ExpressionSequence, DecodeTrace)> {
        match self {
            Decoder::Graph(d) => {
                let (y, t) = d.forward(z)?;
                Ok((y, DecodeTrace::Graph(t)))
            }
            Decoder::Mlp(d) => {
                let (y, t) = d.forward(z)?;
                Ok((y, DecodeTrace::Mlp(t)))
            }
        }
    }

    /// Accumulates parameter gradients for the pass recorded in `trace` and
    /// returns ∂loss/∂z.
    pub fn backward(&mut self, trace: &DecodeTrace, g_seq: &ExpressionSequence) -> Array1<f64> {
        match (self, trace) {
            (Decoder::Graph(d), DecodeTrace::Graph(t)) => d.backward(t, g_seq),
            (Decoder::Mlp(d), DecodeTrace::Mlp(t)) => d.backward(t, g_seq),
            _ => unreachable!("trace produced by a different decoder family"),
        }
    }

    /// Validates that masked lift weights are exactly zero off-mask; loaded
    /// checkpoints must re-establish this invariant.
    pub fn check_mask_invariant(&self) -> Result<()> {
        if let Decoder::Graph(d) = self {
            for (i, b) in d.blocks.iter().enumerate() {
                let violated = b
                    .up
                    .w
                    .v
                    .iter()
                    .zip(b.up.mask.iter())
                    .any(|(&w, &m)| m == 0.0 && w != 0.0);
                if violated {
                    return Err(Error::ArtifactMismatch(format!(
                        "block {i} carries nonzero lift weights outside the topology mask"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl ParamSet for Decoder {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        match self {
            Decoder::Graph(d) => d.visit_params(prefix, f),
            Decoder::Mlp(d) => d.visit_params(prefix, f),
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        match self {
            Decoder::Graph(d) => d.visit_params_mut(prefix, f),
            Decoder::Mlp(d) => d.visit_params_mut(prefix, f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::default_pyramid;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_latent(rng: &mut ChaCha8Rng) -> Array1<f64> {
        let mut z = Array1::from_shape_fn(LATENT_DIM, |_| {
            let v: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            v
        });
        let norm = z.dot(&z).sqrt();
        z.mapv_inplace(|e| e / norm);
        z
    }

    #[test]
    fn graph_decoder_output_shape_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pyramid = default_pyramid(3).unwrap();
        let dec = Decoder::graph(&pyramid, &mut rng).unwrap();
        let z = unit_latent(&mut rng);
        let a = dec.decode(z.view()).unwrap();
        assert_eq!(a.dim(), (FRAME_COUNT, 69, COORD_CHANNELS));
        assert!(a.iter().all(|e| e.is_finite()));
        let b = dec.decode(z.view()).unwrap();
        assert_eq!(a, b, "same latent and parameters must decode identically");
    }

    #[test]
    fn mlp_decoder_output_shape_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dec = Decoder::mlp(&mut rng);
        let z = unit_latent(&mut rng);
        let a = dec.decode(z.view()).unwrap();
        assert_eq!(a.dim(), (FRAME_COUNT, 69, COORD_CHANNELS));
        assert_eq!(a, dec.decode(z.view()).unwrap());
    }

    #[test]
    fn non_unit_latents_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pyramid = default_pyramid(3).unwrap();
        let dec = Decoder::graph(&pyramid, &mut rng).unwrap();
        let z = unit_latent(&mut rng) * 1.1;
        assert!(matches!(dec.decode(z.view()), Err(Error::InvalidParameter(_))));
        let short = Array1::zeros(7);
        assert!(matches!(dec.decode(short.view()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zeroing_non_bias_parameters_collapses_to_a_constant_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pyramid = default_pyramid(3).unwrap();
        let mut dec = Decoder::graph(&pyramid, &mut rng).unwrap();
        dec.visit_params_mut("", &mut |name, p| {
            let mut v = p.v;
            if name.ends_with(".b") {
                v.fill(0.25);
            } else {
                v.fill(0.0);
            }
        });
        let z = unit_latent(&mut rng);
        let y = dec.decode(z.view()).unwrap();
        let reference = y[[0, 0, 0]];
        assert!(
            y.iter().all(|&e| (e - reference).abs() < 1e-12),
            "bias-only decoder must emit one constant over frames and vertices"
        );
    }

    #[test]
    fn masked_lift_weights_never_reach_the_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pyramid = default_pyramid(3).unwrap();
        let mut dec = Decoder::graph(&pyramid, &mut rng).unwrap();
        let z = unit_latent(&mut rng);
        let before = dec.decode(z.view()).unwrap();
        if let Decoder::Graph(d) = &mut dec {
            let block = &mut d.blocks[2];
            let hole = block
                .up
                .mask
                .indexed_iter()
                .find(|(_, &m)| m == 0.0)
                .map(|(idx, _)| idx)
                .expect("every lift mask has zero positions");
            block.up.w.v[hole] = 42.0;
        }
        assert!(dec.check_mask_invariant().is_err());
        let after = dec.decode(z.view()).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn latent_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pyramid = default_pyramid(3).unwrap();
        let mut dec = Decoder::graph(&pyramid, &mut rng).unwrap();
        let z = unit_latent(&mut rng);
        // Scalar probe loss: inner product with a fixed random direction.
        let dir = Array3::from_shape_fn((FRAME_COUNT, 69, COORD_CHANNELS), |_| {
            rng.random_range(-1.0..1.0)
        });
        let (_, trace) = dec.decode_traced(z.view()).unwrap();
        let gz = dec.backward(&trace, &dir);

        let step = 1e-5;
        for &i in &[0usize, 1, 97, 512, 768, 1033, 1535] {
            // Perturbed latents briefly leave the sphere; evaluate the raw
            // network instead of the validating entry point.
            let eval = |zi: &Array1<f64>| -> f64 {
                match &dec {
                    Decoder::Graph(d) => {
                        let z_row = zi.clone().insert_axis(Axis(0));
                        let h0 = d.initial.forward(z_row.view());
                        let x0 = h0
                            .into_shape_clone((CHANNEL_SCHEDULE[0], INITIAL_FRAMES, 1))
                            .unwrap();
                        let mut x = x0;
                        for block in &d.blocks {
                            let main = block.tconv.forward(x.view()).unwrap();
                            let bridge = block.res.forward(x.view());
                            let act = leaky_relu(&(main + bridge), LEAKY_SLOPE);
                            let up = block.up.forward(act.view()).unwrap();
                            x = block.gconv.forward(up.view()).unwrap().0;
                        }
                        let y = d.output.forward(x.view());
                        let mut acc = 0.0;
                        for m in 0..COORD_CHANNELS {
                            for t in 0..FRAME_COUNT {
                                for v in 0..69 {
                                    acc += y[[m, t, v]] * dir[[t, v, m]];
                                }
                            }
                        }
                        acc
                    }
                    Decoder::Mlp(_) => unreachable!(),
                }
            };
            let mut zp = z.clone();
            zp[i] += step;
            let mut zm = z.clone();
            zm[i] -= step;
            let fd = (eval(&zp) - eval(&zm)) / (2.0 * step);
            let rel = (gz[i] - fd).abs() / gz[i].abs().max(fd.abs()).max(1e-4);
            assert!(rel < 1e-4, "latent coordinate {i}: analytic {} vs fd {fd}", gz[i]);
        }
    }

    #[test]
    fn nearby_latents_decode_to_nearby_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pyramid = default_pyramid(3).unwrap();
        let dec = Decoder::graph(&pyramid, &mut rng).unwrap();
        let z1 = unit_latent(&mut rng);
        let dir = unit_latent(&mut rng);
        let perturbed = |eps: f64| -> Array1<f64> {
            let mut z = &z1 + &(&dir * eps);
            let n = z.dot(&z).sqrt();
            z.mapv_inplace(|e| e / n);
            z
        };
        let y1 = dec.decode(z1.view()).unwrap();
        let diff = |eps: f64| -> f64 {
            let y2 = dec.decode(perturbed(eps).view()).unwrap();
            (&y2 - &y1).iter().fold(0.0f64, |m, &e| m.max(e.abs()))
        };
        let d3 = diff(1e-3);
        let d4 = diff(1e-4);
        assert!(d3.is_finite() && d3 > 0.0);
        assert!(
            d4 < 0.5 * d3,
            "shrinking the latent perturbation must shrink the output change ({d4} vs {d3})"
        );
    }

    #[test]
    fn parameter_names_are_stable_and_loadable() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let pyramid = default_pyramid(3).unwrap();
        let dec = Decoder::graph(&pyramid, &mut rng).unwrap();
        let named = dec.named_tensors();
        assert!(named.iter().any(|(n, _)| n == "init.w"));
        assert!(named.iter().any(|(n, _)| n == "block0.tup.w"));
        assert!(named.iter().any(|(n, _)| n == "block3.gcn.t.b"));
        assert!(named.iter().any(|(n, _)| n == "out.b"));
        // block3 keeps 64 channels, so its residual bridge has no projection
        assert!(named.iter().all(|(n, _)| n != "block3.res.w"));

        // Round-trip through the named-tensor map into a fresh decoder.
        let mut rng2 = ChaCha8Rng::seed_from_u64(999);
        let mut other = Decoder::graph(&pyramid, &mut rng2).unwrap();
        let map: std::collections::BTreeMap<String, ndarray::ArrayD<f64>> =
            named.into_iter().collect();
        other.load_tensors(&map).unwrap();
        let z = unit_latent(&mut rng);
        assert_eq!(dec.decode(z.view()).unwrap(), other.decode(z.view()).unwrap());
    }
}
