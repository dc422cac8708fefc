//! Evaluation: a learned expression-feature distance plus landmark-space
//! diagnostics.
//!
//! The headline metric is a Fréchet distance between Gaussians fitted to
//! autoencoder features of generated and reference sequences. A small
//! temporal-convolution autoencoder is trained on reference data with a
//! mean-squared reconstruction loss; its encoder — two strided temporal
//! convolutions and a linear bottleneck of width 32 — then maps every
//! 64-frame landmark sequence to a feature vector, and the score is
//! `‖μ₁−μ₂‖² + Tr(Σ₁+Σ₂−2(Σ₁Σ₂)^{1/2})` between the two feature clouds.
//! Because desk-scale sample counts (8–32 sequences against a 32-dim
//! feature space) yield rank-deficient sample covariances, [`fed`] adds
//! `1e-6·I` to each fitted covariance before the matrix square root;
//! [`frechet_distance`] itself is the exact formula, so analytic cases
//! match closed forms to full precision.
//!
//! Alongside the learned metric, [`region_distances`] reports mean
//! Euclidean landmark error restricted to anatomical index sets (mouth,
//! eyebrows, jaw-plus-lips under the 68-landmark convention; the appended
//! centroid vertex belongs to no region), and
//! [`avg_landmark_distance_distribution`] bins per-pair mean landmark
//! distances into the histogram reported alongside the scalar scores.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{
    hex_sha256, read_checkpoint, write_atomic, write_checkpoint, CheckpointHeader,
};
use crate::decoder::{ExpressionSequence, COORD_CHANNELS, FRAME_COUNT, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::glo::TrainingConfig;
use crate::nn::layers::{Dense, TemporalConv, TemporalConvCache, TemporalTransposedConv};
use crate::nn::{leaky_relu, leaky_relu_backward, ParamMut, ParamSet};
use crate::topology::{LEVEL_SIZES, TOPOLOGY_VERSION};

/// Width of the autoencoder bottleneck; every feature vector has this length.
pub const FEATURE_DIM: usize = 32;

/// Channels of the flattened per-frame landmark vector (69 vertices × 2).
pub const FRAME_CHANNELS: usize = LEVEL_SIZES[4] * COORD_CHANNELS;

/// Ridge added to each fitted covariance before the matrix square root.
pub const STABILIZATION_EPS: f64 = 1e-6;

/// Largest imaginary magnitude the square root may silently discard. The
/// product of two PSD matrices can acquire slightly negative eigenvalues
/// from rounding; their square roots would be imaginary, and anything above
/// this bound indicates genuinely non-PSD input rather than noise.
const IMAGINARY_RESIDUE_LIMIT: f64 = 1e-6;

/// Encoder widths between the landmark channels and the bottleneck.
const HIDDEN_CHANNELS: [usize; 2] = [64, 32];

/// Mouth landmarks (outer and inner lips).
pub const MOUTH: Range<usize> = 48..68;
/// Eyebrow landmarks, both brows.
pub const EYEBROWS: Range<usize> = 17..27;
/// Jawline landmarks; [`region_distances`] reports them joined with the
/// mouth set.
pub const JAW: Range<usize> = 0..17;

/// Reconstruction autoencoder whose encoder doubles as the feature
/// extractor. Both halves are mirrored stacks: strided temporal
/// convolutions (kernel 4, stride 2) between the landmark channels and a
/// compact map, and one fully connected layer between that map and the
/// bottleneck vector.
#[derive(Debug, Clone)]
pub struct FedAutoencoder {
    enc1: TemporalConv,
    enc2: TemporalConv,
    enc_fc: Dense,
    dec_fc: Dense,
    dec1: TemporalTransposedConv,
    dec2: TemporalTransposedConv,
    channels: usize,
    frames: usize,
    feature_dim: usize,
}

/// Intermediates of one [`FedAutoencoder::forward_map`] pass.
pub struct FedTrace {
    x: Array3<f64>,
    e1_pre: Array3<f64>,
    e1: Array3<f64>,
    c1: TemporalConvCache,
    e2_pre: Array3<f64>,
    c2: TemporalConvCache,
    flat: Array2<f64>,
    feat: Array2<f64>,
    h_pre: Array2<f64>,
    h: Array3<f64>,
    d1_pre: Array3<f64>,
    d1: Array3<f64>,
}

impl FedAutoencoder {
    /// The production architecture: 138 landmark channels, 64 frames,
    /// bottleneck 32.
    pub fn new(rng: &mut impl rand::Rng) -> FedAutoencoder {
        FedAutoencoder::with_dims(
            FRAME_CHANNELS,
            HIDDEN_CHANNELS[0],
            HIDDEN_CHANNELS[1],
            FEATURE_DIM,
            FRAME_COUNT,
            rng,
        )
        .expect("production dimensions are valid")
    }

    /// Same architecture at arbitrary widths; gradient certification runs
    /// it narrow so every parameter can be perturbed individually.
    pub fn with_dims(
        channels: usize,
        hidden1: usize,
        hidden2: usize,
        feature_dim: usize,
        frames: usize,
        rng: &mut impl rand::Rng,
    ) -> Result<FedAutoencoder> {
        if channels == 0 || hidden1 == 0 || hidden2 == 0 || feature_dim == 0 {
            return Err(Error::InvalidParameter(
                "autoencoder widths must all be positive".into(),
            ));
        }
        if frames < 4 || frames % 4 != 0 {
            return Err(Error::InvalidParameter(format!(
                "two stride-2 stages need a frame count divisible by 4, got {frames}"
            )));
        }
        let pooled = hidden2 * (frames / 4);
        Ok(FedAutoencoder {
            enc1: TemporalConv::new(channels, hidden1, 4, 2, 1, rng),
            enc2: TemporalConv::new(hidden1, hidden2, 4, 2, 1, rng),
            enc_fc: Dense::new(pooled, feature_dim, rng),
            dec_fc: Dense::new(feature_dim, pooled, rng),
            dec1: TemporalTransposedConv::new(hidden2, hidden1, 4, 2, 1, rng),
            dec2: TemporalTransposedConv::new(hidden1, channels, 4, 2, 1, rng),
            channels,
            frames,
            feature_dim,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn check_sequence(&self, seq: &ExpressionSequence) -> Result<()> {
        let want = (self.frames, self.channels / COORD_CHANNELS, COORD_CHANNELS);
        if seq.dim() != want {
            return Err(Error::ShapeMismatch(format!(
                "sequence shape {:?}, autoencoder expects {:?}",
                seq.dim(),
                want
            )));
        }
        Ok(())
    }

    /// (T, V, 2) sequence → (V·2, T, 1) channel map, vertex-major.
    fn to_map(&self, seq: &ExpressionSequence) -> Array3<f64> {
        let (t, v, c) = seq.dim();
        let flat = seq
            .view()
            .into_shape_with_order((t, v * c))
            .expect("sequences are standard layout");
        flat.t()
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((v * c, t, 1))
            .expect("transposed copy is standard layout")
    }

    /// Inverse of [`FedAutoencoder::to_map`].
    fn from_map(&self, map: &Array3<f64>) -> ExpressionSequence {
        let (ch, t, _) = map.dim();
        let m2 = map
            .view()
            .into_shape_with_order((ch, t))
            .expect("maps are standard layout");
        m2.t()
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((t, ch / COORD_CHANNELS, COORD_CHANNELS))
            .expect("transposed copy is standard layout")
    }

    /// Run the full autoencoder on a channel map, keeping intermediates.
    fn forward_map(&self, x: Array3<f64>) -> Result<(Array3<f64>, FedTrace)> {
        let (e1_pre, c1) = self.enc1.forward(x.view())?;
        let e1 = leaky_relu(&e1_pre, LEAKY_SLOPE);
        let (e2_pre, c2) = self.enc2.forward(e1.view())?;
        let e2 = leaky_relu(&e2_pre, LEAKY_SLOPE);
        let (h2, t4, _) = e2.dim();
        let flat = e2
            .into_shape_with_order((1, h2 * t4))
            .expect("encoder map is standard layout");
        let feat = self.enc_fc.forward(flat.view());
        let h_pre = self.dec_fc.forward(feat.view());
        let h = leaky_relu(&h_pre, LEAKY_SLOPE)
            .into_shape_with_order((h2, t4, 1))
            .expect("decoder input is standard layout");
        let d1_pre = self.dec1.forward(h.view())?;
        let d1 = leaky_relu(&d1_pre, LEAKY_SLOPE);
        let y = self.dec2.forward(d1.view())?;
        let trace = FedTrace { x, e1_pre, e1, c1, e2_pre, c2, flat, feat, h_pre, h, d1_pre, d1 };
        Ok((y, trace))
    }

    /// Accumulate parameter gradients given the gradient at the
    /// reconstruction.
    fn backward_map(&mut self, trace: &FedTrace, gy: ArrayView3<'_, f64>) {
        let (h2, t4, _) = trace.h.dim();
        let g_d1 = self.dec2.backward(trace.d1.view(), gy);
        let g_d1 = leaky_relu_backward(&trace.d1_pre, g_d1.view(), LEAKY_SLOPE);
        let g_h = self.dec1.backward(trace.h.view(), g_d1.view());
        let g_h = g_h
            .into_shape_with_order((1, h2 * t4))
            .expect("gradient map is standard layout");
        let g_h = leaky_relu_backward(&trace.h_pre, g_h.view(), LEAKY_SLOPE);
        let g_feat = self.dec_fc.backward(trace.feat.view(), g_h.view());
        let g_flat = self.enc_fc.backward(trace.flat.view(), g_feat.view());
        let g_e2 = g_flat
            .into_shape_with_order((h2, t4, 1))
            .expect("gradient row is standard layout");
        let g_e2 = leaky_relu_backward(&trace.e2_pre, g_e2.view(), LEAKY_SLOPE);
        let g_e1 = self.enc2.backward(trace.e1.view(), &trace.c2, g_e2.view());
        let g_e1 = leaky_relu_backward(&trace.e1_pre, g_e1.view(), LEAKY_SLOPE);
        let _ = self.enc1.backward(trace.x.view(), &trace.c1, g_e1.view());
    }

    /// Feature vector for one sequence — the encoder half only.
    pub fn encode(&self, seq: &ExpressionSequence) -> Result<Array1<f64>> {
        self.check_sequence(seq)?;
        let x = self.to_map(seq);
        let (e1_pre, _) = self.enc1.forward(x.view())?;
        let e1 = leaky_relu(&e1_pre, LEAKY_SLOPE);
        let (e2_pre, _) = self.enc2.forward(e1.view())?;
        let e2 = leaky_relu(&e2_pre, LEAKY_SLOPE);
        let (h2, t4, _) = e2.dim();
        let flat = e2
            .into_shape_with_order((1, h2 * t4))
            .expect("encoder map is standard layout");
        let feat = self.enc_fc.forward(flat.view());
        Ok(feat.index_axis_move(Axis(0), 0))
    }

    /// Round-trip a sequence through the bottleneck.
    pub fn reconstruct(&self, seq: &ExpressionSequence) -> Result<ExpressionSequence> {
        self.check_sequence(seq)?;
        let (y, _) = self.forward_map(self.to_map(seq))?;
        Ok(self.from_map(&y))
    }
}

impl ParamSet for FedAutoencoder {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        self.enc1.visit_params(&crate::nn::join(prefix, "enc1"), f);
        self.enc2.visit_params(&crate::nn::join(prefix, "enc2"), f);
        self.enc_fc.visit_params(&crate::nn::join(prefix, "enc_fc"), f);
        self.dec_fc.visit_params(&crate::nn::join(prefix, "dec_fc"), f);
        self.dec1.visit_params(&crate::nn::join(prefix, "dec1"), f);
        self.dec2.visit_params(&crate::nn::join(prefix, "dec2"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        self.enc1.visit_params_mut(&crate::nn::join(prefix, "enc1"), f);
        self.enc2.visit_params_mut(&crate::nn::join(prefix, "enc2"), f);
        self.enc_fc.visit_params_mut(&crate::nn::join(prefix, "enc_fc"), f);
        self.dec_fc.visit_params_mut(&crate::nn::join(prefix, "dec_fc"), f);
        self.dec1.visit_params_mut(&crate::nn::join(prefix, "dec1"), f);
        self.dec2.visit_params_mut(&crate::nn::join(prefix, "dec2"), f);
    }
}

/// A trained feature extractor and the provenance needed to trust it.
pub struct FedModel {
    pub ae: FedAutoencoder,
    /// Fingerprint of the training set (hash over its sample ids).
    pub dataset_id: String,
    pub seed: u64,
    pub iterations: u64,
    /// Mean reconstruction error per entry at the end of training.
    pub final_mse: Option<f64>,
    /// `(iteration, batch mse)` curve of the training run.
    pub history: Vec<(u64, f64)>,
}

impl FedModel {
    pub fn encode(&self, seq: &ExpressionSequence) -> Result<Array1<f64>> {
        self.ae.encode(seq)
    }

    /// Persist the model; returns the checkpoint id.
    pub fn save(&self, path: &Path) -> Result<String> {
        let mut header = CheckpointHeader::new("fed", TOPOLOGY_VERSION, self.seed);
        header.iteration = self.iterations;
        header.final_loss = self.final_mse;
        header.channel_schedule = vec![
            self.ae.channels,
            self.ae.enc1.out_channels(),
            self.ae.enc2.out_channels(),
            self.ae.feature_dim,
            self.ae.frames,
        ];
        header.notes.insert("dataset_id".into(), self.dataset_id.clone());
        write_checkpoint(path, &header, &self.ae.named_tensors())
    }

    pub fn load(path: &Path) -> Result<FedModel> {
        let (header, tensors, _) = read_checkpoint(path)?;
        if header.kind != "fed" {
            return Err(Error::ArtifactMismatch(format!(
                "checkpoint {} holds a '{}' artifact, expected 'fed'",
                path.display(),
                header.kind
            )));
        }
        let dims = &header.channel_schedule;
        if dims.len() != 5 {
            return Err(Error::CorruptData(
                "feature-extractor checkpoint lacks its five architecture dimensions".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(header.seed);
        let mut ae =
            FedAutoencoder::with_dims(dims[0], dims[1], dims[2], dims[3], dims[4], &mut rng)?;
        ae.load_tensors(&tensors)?;
        Ok(FedModel {
            ae,
            dataset_id: header.notes.get("dataset_id").cloned().unwrap_or_default(),
            seed: header.seed,
            iterations: header.iteration,
            final_mse: header.final_loss,
            history: Vec::new(),
        })
    }
}

/// Mean squared error over all entries, with its gradient scale.
fn mse(recon: ArrayView3<'_, f64>, target: ArrayView3<'_, f64>) -> f64 {
    let n = recon.len() as f64;
    let mut acc = 0.0;
    ndarray::Zip::from(recon).and(target).for_each(|&r, &t| acc += (r - t) * (r - t));
    acc / n
}

/// Fit the reconstruction autoencoder to the given sequences.
///
/// Reuses the shared training-configuration block: `lr_theta`, `batch_size`,
/// `iterations`, `seed`, and `target_loss` apply; the latent rate and loss
/// name are ignored (this trainer is always mean-squared error).
pub fn train_fed_autoencoder(
    dataset: &[(String, ExpressionSequence)],
    config: &TrainingConfig,
) -> Result<FedModel> {
    if dataset.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "feature-extractor training needs at least 2 sequences, got {}",
            dataset.len()
        )));
    }
    if config.batch_size == 0 || config.batch_size > dataset.len() {
        return Err(Error::InvalidParameter(format!(
            "batch size {} outside 1..={} samples",
            config.batch_size,
            dataset.len()
        )));
    }
    if !(config.lr_theta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be positive, got {}",
            config.lr_theta
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ae = FedAutoencoder::new(&mut rng);
    let mut maps = Vec::with_capacity(dataset.len());
    for (id, seq) in dataset {
        ae.check_sequence(seq)
            .map_err(|e| Error::ShapeMismatch(format!("sample '{id}': {e}")))?;
        maps.push(ae.to_map(seq));
    }
    let dataset_id = {
        let joined: Vec<&str> = dataset.iter().map(|(id, _)| id.as_str()).collect();
        hex_sha256(joined.join("\n").as_bytes())
    };
    let mut opt = crate::nn::adam::Adam::new(config.lr_theta);
    let mut history = Vec::with_capacity(config.iterations as usize);
    let mut pending: Vec<usize> = Vec::new();
    let scale = 1.0 / config.batch_size as f64;
    for iteration in 1..=config.iterations {
        while pending.len() < config.batch_size {
            let mut order: Vec<usize> = (0..maps.len()).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            pending.extend(order);
        }
        let ids: Vec<usize> = pending.drain(..config.batch_size).collect();
        ae.zero_grads();
        let mut batch_mse = 0.0;
        for &i in &ids {
            let (recon, trace) = ae.forward_map(maps[i].clone())?;
            batch_mse += scale * mse(recon.view(), maps[i].view());
            let n = recon.len() as f64;
            let mut gy = recon;
            gy -= &maps[i];
            gy *= 2.0 * scale / n;
            ae.backward_map(&trace, gy.view());
        }
        if !batch_mse.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "reconstruction loss became non-finite at iteration {iteration}"
            )));
        }
        opt.step(&mut ae);
        history.push((iteration, batch_mse));
        if config.target_loss.is_some_and(|t| batch_mse < t) {
            break;
        }
    }
    let final_mse = history.last().map(|&(_, l)| l);
    Ok(FedModel {
        ae,
        dataset_id,
        seed: config.seed,
        iterations: history.last().map(|&(i, _)| i).unwrap_or(0),
        final_mse,
        history,
    })
}

/// Sample mean and unbiased covariance of feature rows.
pub fn fit_gaussian(features: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (n, d) = features.dim();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "covariance estimation needs at least 2 feature vectors, got {n}"
        )));
    }
    let mu = features.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &features - &mu;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    debug_assert_eq!(cov.dim(), (d, d));
    Ok((mu, cov))
}

/// Symmetric PSD square root via eigendecomposition. Returns the root and
/// the largest imaginary magnitude that flooring negative eigenvalues
/// discarded.
fn sqrt_psd(c: ArrayView2<'_, f64>) -> Result<(DMatrix<f64>, f64)> {
    let d = c.nrows();
    let m = DMatrix::from_fn(d, d, |i, j| c[[i, j]]);
    let eig = SymmetricEigen::try_new(m, 1e-12, 100_000).ok_or_else(|| {
        Error::NumericalFailure(format!(
            "eigendecomposition of a {d}×{d} covariance did not converge"
        ))
    })?;
    sqrt_from_eigen(&eig)
}

fn sqrt_from_eigen(eig: &SymmetricEigen<f64, nalgebra::Dyn>) -> Result<(DMatrix<f64>, f64)> {
    let mut residue = 0.0f64;
    let roots = eig.eigenvalues.map(|l| {
        if l < 0.0 {
            residue = residue.max((-l).sqrt());
            0.0
        } else {
            l.sqrt()
        }
    });
    let v = &eig.eigenvectors;
    let s = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok((s, residue))
}

fn check_covariance(name: &str, c: ArrayView2<'_, f64>, d: usize) -> Result<()> {
    if c.dim() != (d, d) {
        return Err(Error::ShapeMismatch(format!(
            "{name}: covariance shape {:?} does not match mean length {d}",
            c.dim()
        )));
    }
    let mut max_abs = 0.0f64;
    let mut max_asym = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let x = c[[i, j]];
            if !x.is_finite() {
                return Err(Error::DegenerateInput(format!(
                    "{name}: covariance contains non-finite entries"
                )));
            }
            max_abs = max_abs.max(x.abs());
            max_asym = max_asym.max((x - c[[j, i]]).abs());
        }
    }
    if max_asym > 1e-8 * (1.0 + max_abs) {
        return Err(Error::InvalidParameter(format!(
            "{name}: covariance is asymmetric (max |C−Cᵀ| = {max_asym:.3e})"
        )));
    }
    Ok(())
}

/// Fréchet distance between two Gaussians:
/// `‖μ₁−μ₂‖² + Tr(Σ₁+Σ₂−2(Σ₁Σ₂)^{1/2})`.
///
/// Inputs must be symmetric and positive semi-definite (callers fitting
/// covariances from few samples should ridge them first — see
/// [`STABILIZATION_EPS`]). Rounding-level negative eigenvalues are floored
/// at zero; if the imaginary part that flooring discards exceeds `1e-6`,
/// the matrices are treated as genuinely indefinite and an error is
/// returned instead of a silently wrong score.
pub fn frechet_distance(
    mu1: ArrayView1<'_, f64>,
    cov1: ArrayView2<'_, f64>,
    mu2: ArrayView1<'_, f64>,
    cov2: ArrayView2<'_, f64>,
) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "mean lengths differ: {d} vs {}",
            mu2.len()
        )));
    }
    if mu1.iter().chain(mu2.iter()).any(|x| !x.is_finite()) {
        return Err(Error::DegenerateInput("means contain non-finite entries".into()));
    }
    check_covariance("first set", cov1, d)?;
    check_covariance("second set", cov2, d)?;

    let (s1, r1) = sqrt_psd(cov1)?;
    let c2 = DMatrix::from_fn(d, d, |i, j| (cov2[[i, j]] + cov2[[j, i]]) / 2.0);
    let mut m = &s1 * c2 * &s1;
    // The triple product is symmetric in exact arithmetic; restore that
    // before the second eigendecomposition.
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = (m[(i, j)] + m[(j, i)]) / 2.0;
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let eig = SymmetricEigen::try_new(m, 1e-12, 100_000).ok_or_else(|| {
        Error::NumericalFailure(format!(
            "eigendecomposition of the {d}×{d} cross-covariance product did not converge"
        ))
    })?;
    let mut residue = r1;
    let mut tr_sqrt = 0.0;
    let mut min_lambda = f64::INFINITY;
    for &l in eig.eigenvalues.iter() {
        min_lambda = min_lambda.min(l);
        if l < 0.0 {
            residue = residue.max((-l).sqrt());
        } else {
            tr_sqrt += l.sqrt();
        }
    }
    if residue > IMAGINARY_RESIDUE_LIMIT {
        return Err(Error::NumericalFailure(format!(
            "matrix square root has imaginary residue {residue:.3e} (dim {d}, smallest product \
             eigenvalue {min_lambda:.3e}); inputs are not positive semi-definite"
        )));
    }
    let mean_term: f64 = mu1
        .iter()
        .zip(mu2.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let trace_term = (0..d).map(|i| cov1[[i, i]] + cov2[[i, i]]).sum::<f64>() - 2.0 * tr_sqrt;
    Ok((mean_term + trace_term).max(0.0))
}

/// Encode every sequence in a set into a feature matrix.
fn encode_set(set: &[ExpressionSequence], model: &FedModel) -> Result<Array2<f64>> {
    if set.is_empty() {
        return Err(Error::InvalidParameter(
            "feature distance over an empty sequence set".into(),
        ));
    }
    let d = model.ae.feature_dim();
    let mut features = Array2::zeros((set.len(), d));
    for (i, seq) in set.iter().enumerate() {
        features.row_mut(i).assign(&model.encode(seq)?);
    }
    Ok(features)
}

/// Feature-space Fréchet distance between two sets of sequences.
///
/// Each set is encoded, fitted with a Gaussian, ridged by
/// [`STABILIZATION_EPS`], and compared with [`frechet_distance`]. Sets
/// smaller than the feature dimension are accepted with a warning — the
/// fitted covariance is then rank-deficient and the ridge carries it.
pub fn fed(
    generated: &[ExpressionSequence],
    reference: &[ExpressionSequence],
    model: &FedModel,
) -> Result<f64> {
    let d = model.ae.feature_dim();
    for (name, set) in [("generated", generated), ("reference", reference)] {
        if set.len() < d {
            log::warn!(
                "{name} set has {} sequences against a {d}-dim feature space; \
                 covariance is rank-deficient and ridge-stabilized",
                set.len()
            );
        }
    }
    let fg = encode_set(generated, model)?;
    let fr = encode_set(reference, model)?;
    let (mu_g, mut cov_g) = fit_gaussian(fg.view())?;
    let (mu_r, mut cov_r) = fit_gaussian(fr.view())?;
    for i in 0..d {
        cov_g[[i, i]] += STABILIZATION_EPS;
        cov_r[[i, i]] += STABILIZATION_EPS;
    }
    frechet_distance(mu_g.view(), cov_g.view(), mu_r.view(), cov_r.view())
}

/// Mean landmark distances restricted to anatomical regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDistances {
    pub mouth: f64,
    pub eyebrows: f64,
    /// Jawline and mouth landmarks taken together.
    pub jaw_lips: f64,
}

fn region_mean(
    generated: ArrayView3<'_, f64>,
    reference: ArrayView3<'_, f64>,
    indices: &[usize],
) -> f64 {
    let t = generated.dim().0;
    let mut acc = 0.0;
    for f in 0..t {
        for &v in indices {
            let du = generated[[f, v, 0]] - reference[[f, v, 0]];
            let dv = generated[[f, v, 1]] - reference[[f, v, 1]];
            acc += (du * du + dv * dv).sqrt();
        }
    }
    acc / (t * indices.len()) as f64
}

/// Mean per-landmark Euclidean distance over frames, restricted to the
/// mouth, eyebrow, and jaw-plus-mouth index sets.
pub fn region_distances(
    generated: &ExpressionSequence,
    reference: &ExpressionSequence,
) -> Result<RegionDistances> {
    if generated.dim() != reference.dim() {
        return Err(Error::ShapeMismatch(format!(
            "sequence shapes differ: {:?} vs {:?}",
            generated.dim(),
            reference.dim()
        )));
    }
    if generated.dim().1 < MOUTH.end {
        return Err(Error::ShapeMismatch(format!(
            "sequences have {} vertices, region indices need at least {}",
            generated.dim().1,
            MOUTH.end
        )));
    }
    let mouth: Vec<usize> = MOUTH.collect();
    let eyebrows: Vec<usize> = EYEBROWS.collect();
    let jaw_lips: Vec<usize> = JAW.chain(MOUTH).collect();
    Ok(RegionDistances {
        mouth: region_mean(generated.view(), reference.view(), &mouth),
        eyebrows: region_mean(generated.view(), reference.view(), &eyebrows),
        jaw_lips: region_mean(generated.view(), reference.view(), &jaw_lips),
    })
}

/// Binned distribution of per-pair mean landmark distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` boundaries; bin `i` spans `edges[i]..edges[i+1]`
    /// (the final bin is closed). All edges coincide when every value is
    /// identical.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// The raw per-pair values, in input order.
    pub values: Vec<f64>,
    /// Arithmetic mean of `values`.
    pub mean: f64,
}

const HISTOGRAM_BINS: usize = 10;

/// Per pair, the mean Euclidean distance over every frame and landmark;
/// returned as raw values plus a fixed-width histogram.
pub fn avg_landmark_distance_distribution(
    pairs: &[(ExpressionSequence, ExpressionSequence)],
) -> Result<Histogram> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter(
            "distance distribution over an empty pair list".into(),
        ));
    }
    let mut values = Vec::with_capacity(pairs.len());
    for (g, r) in pairs {
        if g.dim() != r.dim() {
            return Err(Error::ShapeMismatch(format!(
                "pair shapes differ: {:?} vs {:?}",
                g.dim(),
                r.dim()
            )));
        }
        let (t, v, _) = g.dim();
        let mut acc = 0.0;
        for f in 0..t {
            for p in 0..v {
                let du = g[[f, p, 0]] - r[[f, p, 0]];
                let dv = g[[f, p, 1]] - r[[f, p, 1]];
                acc += (du * du + dv * dv).sqrt();
            }
        }
        values.push(acc / (t * v) as f64);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span == 0.0 {
        return Ok(Histogram {
            edges: vec![lo, hi],
            counts: vec![values.len()],
            values,
            mean,
        });
    }
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &x in &values {
        let bin = (((x - lo) / span) * HISTOGRAM_BINS as f64) as usize;
        counts[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    let edges = (0..=HISTOGRAM_BINS)
        .map(|i| lo + span * i as f64 / HISTOGRAM_BINS as f64)
        .collect();
    Ok(Histogram { edges, counts, values, mean })
}

/// Everything one evaluation run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fed: f64,
    pub regions: RegionDistances,
    pub histogram: Histogram,
    pub sample_count: usize,
    /// Checkpoint and dataset ids the numbers were computed against.
    pub artifact_ids: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("fed", self.fed),
            ("mouth", self.regions.mouth),
            ("eyebrows", self.regions.eyebrows),
            ("jaw_lips", self.regions.jaw_lips),
            ("histogram mean", self.histogram.mean),
        ];
        for (name, x) in scalars {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::CorruptData(format!(
                    "evaluation report field '{name}' is {x}, expected a finite non-negative value"
                )));
            }
        }
        if self.histogram.counts.iter().sum::<usize>() != self.histogram.values.len() {
            return Err(Error::CorruptData(
                "histogram counts do not sum to the number of raw values".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let json = serde_json::to_string_pretty(self)?;
        write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<EvalReport> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MissingArtifact(format!("report {}: {e}", path.display())))?;
        let report: EvalReport = serde_json::from_str(&text)?;
        report.validate()?;
        Ok(report)
    }
}

/// Score paired generated/reference sequences into one [`EvalReport`].
pub fn build_report(
    generated: &[ExpressionSequence],
    reference: &[ExpressionSequence],
    model: &FedModel,
    artifact_ids: BTreeMap<String, String>,
) -> Result<EvalReport> {
    if generated.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "paired evaluation needs equal set sizes, got {} vs {}",
            generated.len(),
            reference.len()
        )));
    }
    let start = Instant::now();
    let fed_score = fed(generated, reference, model)?;
    let mut mouth = 0.0;
    let mut eyebrows = 0.0;
    let mut jaw_lips = 0.0;
    let mut pairs = Vec::with_capacity(generated.len());
    for (g, r) in generated.iter().zip(reference) {
        let rd = region_distances(g, r)?;
        mouth += rd.mouth;
        eyebrows += rd.eyebrows;
        jaw_lips += rd.jaw_lips;
        pairs.push((g.clone(), r.clone()));
    }
    let n = generated.len() as f64;
    let histogram = avg_landmark_distance_distribution(&pairs)?;
    log::debug!(
        "evaluated {} pairs in {:.2}s",
        generated.len(),
        start.elapsed().as_secs_f64()
    );
    let report = EvalReport {
        fed: fed_score,
        regions: RegionDistances {
            mouth: mouth / n,
            eyebrows: eyebrows / n,
            jaw_lips: jaw_lips / n,
        },
        histogram,
        sample_count: generated.len(),
        artifact_ids,
    };
    report.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_gradients;
    use ndarray::{array, s};
    use rand::Rng;

    fn toy_sequences(n: usize, seed: u64) -> Vec<(String, ExpressionSequence)> {
        let (_, seqs) = crate::preprocess::generate_synthetic_dataset(n, seed).unwrap();
        seqs.into_iter().map(|s| (s.sample_id, s.coords)).collect()
    }

    #[test]
    fn frechet_matches_one_dimensional_closed_forms() {
        // (μ₁−μ₂)² + (σ₁−σ₂)² in one dimension.
        let d = |m1: f64, v1: f64, m2: f64, v2: f64| {
            frechet_distance(
                array![m1].view(),
                array![[v1]].view(),
                array![m2].view(),
                array![[v2]].view(),
            )
            .unwrap()
        };
        assert!((d(0.0, 1.0, 1.0, 1.0) - 1.0).abs() < 1e-9);
        assert!((d(0.0, 1.0, 0.0, 4.0) - 1.0).abs() < 1e-9);
        assert!(d(0.3, 0.7, 0.3, 0.7) < 1e-12);
        // Diagonal 2-D case: terms add per coordinate.
        let dd = frechet_distance(
            array![0.0, 1.0].view(),
            array![[1.0, 0.0], [0.0, 9.0]].view(),
            array![2.0, 1.0].view(),
            array![[4.0, 0.0], [0.0, 1.0]].view(),
        )
        .unwrap();
        // (0−2)² + (1−2)² + (3−1)² = 4 + 1 + 4.
        assert!((dd - 9.0).abs() < 1e-9, "diagonal case gave {dd}");
    }

    fn random_spd(d: usize, rng: &mut impl Rng) -> Array2<f64> {
        let a = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
        let mut c = a.t().dot(&a);
        for i in 0..d {
            c[[i, i]] += 0.1;
        }
        c
    }

    #[test]
    fn frechet_self_distance_vanishes_for_random_gaussians() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for d in [2usize, 8, 32] {
            let c = random_spd(d, &mut rng);
            let mu = Array1::from_shape_fn(d, |_| rng.random_range(-2.0..2.0));
            let dist = frechet_distance(mu.view(), c.view(), mu.view(), c.view()).unwrap();
            assert!(dist < 1e-8, "dim {d}: self distance {dist}");
        }
    }

    #[test]
    fn frechet_is_symmetric_in_its_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for d in [3usize, 16] {
            let c1 = random_spd(d, &mut rng);
            let c2 = random_spd(d, &mut rng);
            let m1 = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
            let m2 = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
            let ab = frechet_distance(m1.view(), c1.view(), m2.view(), c2.view()).unwrap();
            let ba = frechet_distance(m2.view(), c2.view(), m1.view(), c1.view()).unwrap();
            assert!((ab - ba).abs() < 1e-8, "dim {d}: {ab} vs {ba}");
            assert!(ab >= 0.0);
        }
    }

    #[test]
    fn frechet_rejects_malformed_inputs() {
        let mu = array![0.0, 0.0];
        let c = array![[1.0, 0.0], [0.0, 1.0]];
        let short = array![0.0];
        assert!(matches!(
            frechet_distance(short.view(), c.view(), mu.view(), c.view()),
            Err(Error::ShapeMismatch(_))
        ));
        let rect = array![[1.0, 0.0]];
        assert!(matches!(
            frechet_distance(mu.view(), rect.view(), mu.view(), c.view()),
            Err(Error::ShapeMismatch(_))
        ));
        let asym = array![[1.0, 0.5], [-0.5, 1.0]];
        assert!(matches!(
            frechet_distance(mu.view(), asym.view(), mu.view(), c.view()),
            Err(Error::InvalidParameter(_))
        ));
        // A genuinely indefinite matrix must be refused, not silently
        // floored: its imaginary residue is far above the rounding bound.
        let indefinite = array![[1.0, 0.0], [0.0, -0.5]];
        assert!(matches!(
            frechet_distance(mu.view(), indefinite.view(), mu.view(), c.view()),
            Err(Error::NumericalFailure(_))
        ));
        let nan = array![[f64::NAN, 0.0], [0.0, 1.0]];
        assert!(matches!(
            frechet_distance(mu.view(), nan.view(), mu.view(), c.view()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn autoencoder_gradients_pass_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ae = FedAutoencoder::with_dims(4, 6, 4, 3, 8, &mut rng).unwrap();
        let x = Array3::from_shape_fn((4, 8, 1), |(c, t, _)| ((c * 8 + t) as f64 * 0.23).sin());
        let target =
            Array3::from_shape_fn((4, 8, 1), |(c, t, _)| ((c * 8 + t) as f64 * 0.31).cos());
        let loss = |m: &FedAutoencoder| {
            let (y, _) = m.forward_map(x.clone()).unwrap();
            mse(y.view(), target.view())
        };
        check_gradients(
            &mut ae,
            |m| {
                m.zero_grads();
                let (y, trace) = m.forward_map(x.clone()).unwrap();
                let l = mse(y.view(), target.view());
                let n = y.len() as f64;
                let mut gy = y;
                gy -= &target;
                gy *= 2.0 / n;
                m.backward_map(&trace, gy.view());
                l
            },
            loss,
            1e-5,
            1e-4,
        )
        .expect("autoencoder gradients must match finite differences");
    }

    #[test]
    fn encoder_is_deterministic_with_fixed_width_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ae = FedAutoencoder::new(&mut rng);
        let seqs = toy_sequences(2, 5);
        let f1 = ae.encode(&seqs[0].1).unwrap();
        let f2 = ae.encode(&seqs[0].1).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(f1.len(), FEATURE_DIM);
        let other = ae.encode(&seqs[1].1).unwrap();
        assert_ne!(f1, other, "different sequences should get different features");
        let bad = ExpressionSequence::zeros((63, 69, 2));
        assert!(matches!(ae.encode(&bad), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn short_training_run_reduces_reconstruction_error() {
        let data = toy_sequences(3, 11);
        let config = TrainingConfig {
            iterations: 150,
            batch_size: 3,
            lr_theta: 2e-3,
            seed: 2,
            ..TrainingConfig::default()
        };
        let model = train_fed_autoencoder(&data, &config).unwrap();
        let first = model.history.first().unwrap().1;
        let last = model.history.last().unwrap().1;
        assert!(
            last < first / 5.0,
            "reconstruction error should drop: {first} → {last}"
        );
        let again = train_fed_autoencoder(&data, &config).unwrap();
        assert_eq!(
            model.ae.named_tensors(),
            again.ae.named_tensors(),
            "same seed must reproduce the model bit-for-bit"
        );
        assert_eq!(model.dataset_id, again.dataset_id);
        // Too-small datasets and batches are rejected up front.
        assert!(matches!(
            train_fed_autoencoder(&data[..1], &config),
            Err(Error::InvalidParameter(_))
        ));
        let big_batch = TrainingConfig { batch_size: 9, ..config.clone() };
        assert!(matches!(
            train_fed_autoencoder(&data, &big_batch),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn fed_separates_identical_and_perturbed_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = FedModel {
            ae: FedAutoencoder::new(&mut rng),
            dataset_id: "test".into(),
            seed: 3,
            iterations: 0,
            final_mse: None,
            history: Vec::new(),
        };
        let x: Vec<ExpressionSequence> =
            toy_sequences(8, 21).into_iter().map(|(_, s)| s).collect();
        let self_distance = fed(&x, &x, &model).unwrap();
        assert!(self_distance < 1e-6, "self distance {self_distance}");
        // Noise injections at growing amplitude move the score monotonically.
        let mut noise_rng = ChaCha8Rng::seed_from_u64(1234);
        let noise: Vec<Array3<f64>> = x
            .iter()
            .map(|s| {
                Array3::from_shape_fn(s.dim(), |_| {
                    noise_rng.sample::<f64, _>(rand_distr::StandardNormal)
                })
            })
            .collect();
        let mut prev = self_distance;
        for eps in [0.01, 0.05, 0.1] {
            let noisy: Vec<ExpressionSequence> = x
                .iter()
                .zip(&noise)
                .map(|(s, n)| s + &(n * eps))
                .collect();
            let d = fed(&x, &noisy, &model).unwrap();
            assert!(d > prev, "noise {eps}: {d} not above {prev}");
            prev = d;
        }
        // Two-sample minimum per set.
        assert!(matches!(
            fed(&x[..1], &x, &model),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(fed(&[], &x, &model), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn fed_contrasts_disjoint_generator_regimes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = FedModel {
            ae: FedAutoencoder::new(&mut rng),
            dataset_id: "test".into(),
            seed: 6,
            iterations: 0,
            final_mse: None,
            history: Vec::new(),
        };
        let all = crate::preprocess::generate_synthetic_dataset(24, 33).unwrap().1;
        let joy: Vec<ExpressionSequence> = all
            .iter()
            .filter(|s| s.sentiment_label.as_deref() == Some("joy"))
            .map(|s| s.coords.clone())
            .collect();
        let anger: Vec<ExpressionSequence> = all
            .iter()
            .filter(|s| s.sentiment_label.as_deref() == Some("anger"))
            .map(|s| s.coords.clone())
            .collect();
        assert_eq!(joy.len(), 8);
        assert_eq!(anger.len(), 8);
        let within = fed(&joy, &joy, &model).unwrap();
        let across = fed(&joy, &anger, &model).unwrap();
        assert!(
            across > within + 1e-6,
            "regime contrast: within {within}, across {across}"
        );
    }

    #[test]
    fn model_checkpoints_round_trip() {
        let data = toy_sequences(2, 13);
        let config = TrainingConfig {
            iterations: 10,
            batch_size: 2,
            seed: 8,
            ..TrainingConfig::default()
        };
        let model = train_fed_autoencoder(&data, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fed.ckpt");
        let id = model.save(&path).unwrap();
        assert_eq!(id.len(), 64);
        let loaded = FedModel::load(&path).unwrap();
        assert_eq!(loaded.ae.named_tensors(), model.ae.named_tensors());
        assert_eq!(loaded.dataset_id, model.dataset_id);
        assert_eq!(loaded.iterations, 10);
        let f = model.encode(&data[0].1).unwrap();
        let g = loaded.encode(&data[0].1).unwrap();
        assert_eq!(f, g);
        // Foreign checkpoint kinds are refused.
        let mut header = CheckpointHeader::new("sampler", TOPOLOGY_VERSION, 0);
        header.channel_schedule = vec![1, 1, 1, 1, 4];
        let other = dir.path().join("other.ckpt");
        write_checkpoint(&other, &header, &[]).unwrap();
        assert!(matches!(
            FedModel::load(&other),
            Err(Error::ArtifactMismatch(_))
        ));
    }

    #[test]
    fn region_distances_follow_masked_offsets() {
        let base = ExpressionSequence::from_shape_fn((4, 69, 2), |(t, v, c)| {
            0.01 * (t as f64) + 0.001 * (v as f64) + 0.5 * (c as f64)
        });
        let same = region_distances(&base, &base).unwrap();
        assert_eq!(same.mouth, 0.0);
        assert_eq!(same.eyebrows, 0.0);
        assert_eq!(same.jaw_lips, 0.0);

        // A uniform (0.1, 0) offset shifts every region by exactly 0.1.
        let mut shifted = base.clone();
        shifted.slice_mut(s![.., .., 0]).mapv_inplace(|x| x + 0.1);
        let uniform = region_distances(&shifted, &base).unwrap();
        for d in [uniform.mouth, uniform.eyebrows, uniform.jaw_lips] {
            assert!((d - 0.1).abs() < 1e-12, "uniform offset gave {d}");
        }

        // An offset restricted to the mouth leaves the eyebrows untouched
        // and dilutes jaw_lips by exactly the mouth's share of its indices.
        let mut mouth_only = base.clone();
        mouth_only
            .slice_mut(s![.., MOUTH.start..MOUTH.end, 1])
            .mapv_inplace(|x| x + 0.2);
        let masked = region_distances(&mouth_only, &base).unwrap();
        assert!((masked.mouth - 0.2).abs() < 1e-12);
        assert_eq!(masked.eyebrows, 0.0);
        let mouth_share = MOUTH.len() as f64 / (JAW.len() + MOUTH.len()) as f64;
        assert!((masked.jaw_lips - 0.2 * mouth_share).abs() < 1e-12);

        let short = ExpressionSequence::zeros((4, 68, 2));
        assert!(matches!(
            region_distances(&short, &base),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn distance_distribution_reports_raw_values_and_bins() {
        let a = ExpressionSequence::zeros((4, 69, 2));
        // Identical pairs: every value 0, all mass in one degenerate bin.
        let identical = vec![(a.clone(), a.clone()); 3];
        let h = avg_landmark_distance_distribution(&identical).unwrap();
        assert_eq!(h.values, vec![0.0; 3]);
        assert_eq!(h.counts, vec![3]);
        assert_eq!(h.mean, 0.0);

        // A single pair is a one-sample histogram.
        let mut b = a.clone();
        b.slice_mut(s![.., .., 0]).fill(0.3);
        let single = avg_landmark_distance_distribution(&[(a.clone(), b.clone())]).unwrap();
        assert_eq!(single.values.len(), 1);
        assert_eq!(single.counts.iter().sum::<usize>(), 1);
        assert!((single.mean - 0.3).abs() < 1e-12);

        // Mixed distances: counts cover all values and the mean matches the
        // arithmetic mean of the raw list.
        let mut c = a.clone();
        c.slice_mut(s![.., .., 1]).fill(0.1);
        let mixed = avg_landmark_distance_distribution(&[
            (a.clone(), b.clone()),
            (a.clone(), c.clone()),
            (a.clone(), a.clone()),
        ])
        .unwrap();
        assert_eq!(mixed.counts.iter().sum::<usize>(), 3);
        assert_eq!(mixed.edges.len(), mixed.counts.len() + 1);
        let raw_mean = mixed.values.iter().sum::<f64>() / 3.0;
        assert!((mixed.mean - raw_mean).abs() < 1e-15);

        assert!(matches!(
            avg_landmark_distance_distribution(&[]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn reports_serialize_and_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let model = FedModel {
            ae: FedAutoencoder::new(&mut rng),
            dataset_id: "test".into(),
            seed: 14,
            iterations: 0,
            final_mse: None,
            history: Vec::new(),
        };
        let x: Vec<ExpressionSequence> =
            toy_sequences(4, 17).into_iter().map(|(_, s)| s).collect();
        let mut ids = BTreeMap::new();
        ids.insert("fed_model".to_string(), "deadbeef".to_string());
        let report = build_report(&x, &x, &model, ids).unwrap();
        assert_eq!(report.sample_count, 4);
        assert!(report.fed < 1e-6);
        assert_eq!(report.regions.mouth, 0.0);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        let loaded = EvalReport::load(&path).unwrap();
        assert_eq!(loaded, report);

        let mut bad = report.clone();
        bad.fed = f64::NAN;
        assert!(matches!(bad.validate(), Err(Error::CorruptData(_))));
        assert!(bad.save(&path).is_err());
        let mut negative = report;
        negative.regions.eyebrows = -0.1;
        assert!(matches!(negative.validate(), Err(Error::CorruptData(_))));

        // Mismatched set sizes cannot form a paired report.
        assert!(matches!(
            build_report(&x[..2], &x, &model, BTreeMap::new()),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
