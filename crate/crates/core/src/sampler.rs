//! The sampling network: from sentence features to a latent code.
//!
//! Latent optimization gives every training sample a point on the unit
//! sphere, but says nothing about how to pick a point for a *new* sentence.
//! This module learns that mapping: a four-layer fully connected network
//! (1536 → 1536 → 1536 → 1536 → 1536, hyperbolic tangent after each hidden
//! layer, linear output) regresses the concatenated semantic and sentiment
//! embeddings of each training sentence onto its optimized latent, trained
//! with cosine distance — only the *direction* of the prediction matters,
//! since inference re-projects onto the sphere before decoding.
//!
//! Inference is four steps: embed the sentence, run the network, project
//! the output to unit norm, decode. A trained sampler is only meaningful
//! next to the latent table it was fitted to, so its checkpoint records the
//! exact training checkpoint id it was paired with, and loaders refuse
//! mismatches.
//!
//! [`nearest_neighbor_heuristic`] is the non-learned fallback (the `wo_sn`
//! ablation): find the two features-space nearest training sentences and
//! take the spherical midpoint of their latents.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ablation::AblationSet;
use crate::checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
use crate::decoder::{Decoder, ExpressionSequence, LATENT_DIM};
use crate::error::{Error, Result};
use crate::glo::{interpolate_latents, project_to_sphere};
use crate::nn::adam::Adam;
use crate::nn::layers::Dense;
use crate::nn::{ParamMut, ParamSet};
use crate::text::{extract_features, Backend, SentenceFeatures, EMBED_DIM};

/// The regression network. All four layers share one width so the input
/// (two stacked 768-dimensional embeddings) and the output (one latent)
/// agree with the latent dimension.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub layers: [Dense; 4],
}

/// Per-layer inputs kept from a forward pass for backpropagation.
pub struct SamplerTrace {
    a: [Array2<f64>; 4],
}

impl Sampler {
    pub fn new(rng: &mut impl rand::Rng) -> Sampler {
        Sampler::with_width(LATENT_DIM, rng)
    }

    /// A reduced-width clone of the architecture. Gradient certification
    /// perturbs every parameter entry, which is only affordable on a narrow
    /// network; the backward pass is width-independent.
    pub fn with_width(width: usize, rng: &mut impl rand::Rng) -> Sampler {
        Sampler {
            layers: [
                Dense::new(width, width, rng),
                Dense::new(width, width, rng),
                Dense::new(width, width, rng),
                Dense::new(width, width, rng),
            ],
        }
    }

    pub fn width(&self) -> usize {
        self.layers[0].in_features()
    }

    /// Batched forward pass: rows in, rows out.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, SamplerTrace) {
        let a0 = x.to_owned();
        let a1 = self.layers[0].forward(a0.view()).mapv(f64::tanh);
        let a2 = self.layers[1].forward(a1.view()).mapv(f64::tanh);
        let a3 = self.layers[2].forward(a2.view()).mapv(f64::tanh);
        let y = self.layers[3].forward(a3.view());
        (y, SamplerTrace { a: [a0, a1, a2, a3] })
    }

    /// Single-vector forward pass without a trace.
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let row = x.insert_axis(ndarray::Axis(0));
        let (y, _) = self.forward(row);
        y.index_axis_move(ndarray::Axis(0), 0)
    }

    /// Accumulate parameter gradients for the batch; `gy` is the gradient
    /// at the network output.
    pub fn backward(&mut self, trace: &SamplerTrace, gy: ArrayView2<'_, f64>) {
        let g3 = self.layers[3].backward(trace.a[3].view(), gy);
        let g3 = tanh_backward(&trace.a[3], g3);
        let g2 = self.layers[2].backward(trace.a[2].view(), g3.view());
        let g2 = tanh_backward(&trace.a[2], g2);
        let g1 = self.layers[1].backward(trace.a[1].view(), g2.view());
        let g1 = tanh_backward(&trace.a[1], g1);
        let _ = self.layers[0].backward(trace.a[0].view(), g1.view());
    }
}

/// Gradient through `tanh` given its *output* `a = tanh(pre)`.
fn tanh_backward(a: &Array2<f64>, mut g: Array2<f64>) -> Array2<f64> {
    ndarray::Zip::from(&mut g).and(a).for_each(|g, &a| *g *= 1.0 - a * a);
    g
}

impl ParamSet for Sampler {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, f64>)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_params(&crate::nn::join(prefix, &format!("l{i}")), f);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_params_mut(&crate::nn::join(prefix, &format!("l{i}")), f);
        }
    }
}

const DEGENERATE_NORM: f64 = 1e-12;

/// Cosine distance `1 − p·z / (‖p‖‖z‖)`, in `[0, 2]`.
pub fn cosine_loss(predicted: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>) -> Result<f64> {
    let (np, nz) = cosine_norms(predicted, target)?;
    Ok(1.0 - predicted.dot(&target) / (np * nz))
}

/// Gradient of [`cosine_loss`] with respect to the prediction.
pub fn cosine_loss_backward(
    predicted: ArrayView1<'_, f64>,
    target: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    let (np, nz) = cosine_norms(predicted, target)?;
    let dot = predicted.dot(&target);
    let mut g = predicted.to_owned();
    g *= dot / (np * np * np * nz);
    g.scaled_add(-1.0 / (np * nz), &target);
    Ok(g)
}

fn cosine_norms(p: ArrayView1<'_, f64>, z: ArrayView1<'_, f64>) -> Result<(f64, f64)> {
    if p.len() != z.len() {
        return Err(Error::ShapeMismatch(format!(
            "cosine distance between vectors of length {} and {}",
            p.len(),
            z.len()
        )));
    }
    let np = p.dot(&p).sqrt();
    let nz = z.dot(&z).sqrt();
    if np < DEGENERATE_NORM || nz < DEGENERATE_NORM {
        return Err(Error::DegenerateInput(
            "cosine distance is undefined for zero-norm vectors".into(),
        ));
    }
    Ok((np, nz))
}

/// Sampler training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub seed: u64,
    /// Stop early once the batch cosine loss falls below this.
    pub target_loss: Option<f64>,
    /// Ablation switch names (the sampler honors `wo_sem` and `wo_sent`).
    pub ablation: Vec<String>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            lr: 1e-4,
            batch_size: 32,
            iterations: 2000,
            seed: 7,
            target_loss: None,
            ablation: Vec::new(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!(
                "sampler learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("sampler batch size must be at least 1".into()));
        }
        if let Some(t) = self.target_loss {
            if !(t > 0.0) {
                return Err(Error::Config(format!(
                    "target loss must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// One iteration's record in the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerLossRecord {
    pub iteration: u64,
    pub batch_cosine: f64,
    pub wallclock_s: f64,
}

/// Append-style CSV of a sampler training history.
pub fn write_sampler_history(path: &Path, history: &[SamplerLossRecord]) -> Result<()> {
    let mut text = String::from("iteration,batch_cosine,wallclock_s\n");
    for r in history {
        text.push_str(&format!("{},{},{}\n", r.iteration, r.batch_cosine, r.wallclock_s));
    }
    crate::checkpoint::write_atomic(path, text.as_bytes())
}

/// One training pair: a sentence's features and its optimized latent.
pub type TrainingPair = (SentenceFeatures, Array1<f64>);

/// A sampler mid-training, with everything needed to continue or persist.
pub struct SamplerState {
    pub sampler: Sampler,
    pub opt: Adam,
    pub iteration: u64,
    pub seed: u64,
    pub ablation: Vec<String>,
    /// Checkpoint id of the latent-optimization run the training latents
    /// came from, when known; pairing is enforced at inference time.
    pub trained_against: Option<String>,
    /// Topology fingerprint carried over from that run.
    pub topology_version: String,
    pub history: Vec<SamplerLossRecord>,
    rng: ChaCha8Rng,
    pending: Vec<usize>,
}

fn validate_pairs(pairs: &[TrainingPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter(
            "sampler training needs at least one (features, latent) pair".into(),
        ));
    }
    for (features, latent) in pairs {
        features.validate()?;
        if latent.len() != LATENT_DIM {
            return Err(Error::ShapeMismatch(format!(
                "latent for '{}' has {} entries, expected {LATENT_DIM}",
                features.source_text,
                latent.len()
            )));
        }
        if latent.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateInput(format!(
                "latent for '{}' contains non-finite entries",
                features.source_text
            )));
        }
    }
    Ok(())
}

/// The network input for one sentence: concatenated embeddings with the
/// ablated branch (if any) zeroed.
pub fn assemble_input(features: &SentenceFeatures, ablation: &AblationSet) -> Array1<f64> {
    let mut x = features.concatenated();
    if ablation.wo_sem {
        x.slice_mut(s![..EMBED_DIM]).fill(0.0);
    }
    if ablation.wo_sent {
        x.slice_mut(s![EMBED_DIM..]).fill(0.0);
    }
    x
}

/// Fresh training state: seeded parameters, empty history, no steps taken.
pub fn init_sampler(
    pairs: &[TrainingPair],
    config: &SamplerConfig,
    topology_version: &str,
) -> Result<SamplerState> {
    config.validate()?;
    validate_pairs(pairs)?;
    let ablation = AblationSet::from_names(&config.ablation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sampler = Sampler::new(&mut rng);
    Ok(SamplerState {
        sampler,
        opt: Adam::new(config.lr),
        iteration: 0,
        seed: config.seed,
        ablation: ablation.to_names(),
        trained_against: None,
        topology_version: topology_version.to_string(),
        history: Vec::new(),
        rng,
        pending: Vec::new(),
    })
}

/// Fit the sampler to the given pairs for `config.iterations` steps.
pub fn train_sampler(
    pairs: &[TrainingPair],
    config: &SamplerConfig,
    topology_version: &str,
) -> Result<SamplerState> {
    let mut state = init_sampler(pairs, config, topology_version)?;
    state.continue_training(pairs, config)?;
    Ok(state)
}

impl SamplerState {
    /// Train for `config.iterations` further steps on the same pairs.
    /// Batches are drawn uniformly without replacement per epoch; datasets
    /// smaller than the batch size are consumed whole each iteration.
    pub fn continue_training(&mut self, pairs: &[TrainingPair], config: &SamplerConfig) -> Result<()> {
        config.validate()?;
        validate_pairs(pairs)?;
        let ablation = AblationSet::from_names(&self.ablation)?;
        self.opt.lr = config.lr;
        let batch = config.batch_size.min(pairs.len());
        // Pre-assemble the input and target matrices once.
        let mut inputs = Array2::zeros((pairs.len(), LATENT_DIM));
        let mut targets = Array2::zeros((pairs.len(), LATENT_DIM));
        for (i, (features, latent)) in pairs.iter().enumerate() {
            inputs.row_mut(i).assign(&assemble_input(features, &ablation));
            targets.row_mut(i).assign(latent);
        }
        let started = Instant::now();
        for _ in 0..config.iterations {
            let ids = self.next_batch(pairs.len(), batch);
            let mut x = Array2::zeros((batch, LATENT_DIM));
            for (row, &i) in ids.iter().enumerate() {
                x.row_mut(row).assign(&inputs.row(i));
            }
            self.sampler.zero_grads();
            let (predicted, trace) = self.sampler.forward(x.view());
            let mut batch_cosine = 0.0;
            let mut gy = Array2::zeros((batch, LATENT_DIM));
            let scale = 1.0 / batch as f64;
            for (row, &i) in ids.iter().enumerate() {
                let p = predicted.row(row);
                let z = targets.row(i);
                batch_cosine += scale * cosine_loss(p, z)?;
                let mut g = cosine_loss_backward(p, z)?;
                g *= scale;
                gy.row_mut(row).assign(&g);
            }
            if !batch_cosine.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "batch cosine loss became non-finite at iteration {}",
                    self.iteration + 1
                )));
            }
            self.sampler.backward(&trace, gy.view());
            self.opt.step(&mut self.sampler);
            self.iteration += 1;
            self.history.push(SamplerLossRecord {
                iteration: self.iteration,
                batch_cosine,
                wallclock_s: started.elapsed().as_secs_f64(),
            });
            if config.target_loss.is_some_and(|t| batch_cosine < t) {
                break;
            }
        }
        Ok(())
    }

    fn next_batch(&mut self, n: usize, batch: usize) -> Vec<usize> {
        while self.pending.len() < batch {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut self.rng);
            self.pending.extend(order);
        }
        self.pending.drain(..batch).collect()
    }

    /// Mean cosine loss over all pairs; pure.
    pub fn evaluate(&self, pairs: &[TrainingPair]) -> Result<f64> {
        validate_pairs(pairs)?;
        let ablation = AblationSet::from_names(&self.ablation)?;
        let mut total = 0.0;
        for (features, latent) in pairs {
            let x = assemble_input(features, &ablation);
            let p = self.sampler.predict(x.view());
            total += cosine_loss(p.view(), latent.view())?;
        }
        Ok(total / pairs.len() as f64)
    }

    /// The unit-norm latent the sampler assigns to these features.
    pub fn predict_latent(&self, features: &SentenceFeatures) -> Result<Array1<f64>> {
        features.validate()?;
        let ablation = AblationSet::from_names(&self.ablation)?;
        let x = assemble_input(features, &ablation);
        let p = self.sampler.predict(x.view());
        project_to_sphere(p.view())
    }

    /// Persist parameters, optimizer state, and training metadata. Returns
    /// the checkpoint id (content hash).
    pub fn save(&self, path: &Path) -> Result<String> {
        let mut header = CheckpointHeader::new("sampler", &self.topology_version, self.seed);
        header.iteration = self.iteration;
        header.opt_step_count = self.opt.step_count;
        header.ablation = self.ablation.clone();
        header.trained_against = self.trained_against.clone();
        header.final_loss = self.history.last().map(|r| r.batch_cosine);
        header.notes.insert("lr".into(), format!("{}", self.opt.lr));
        header
            .notes
            .insert("rng_word_pos".into(), format!("{}", self.rng.get_word_pos()));
        header
            .notes
            .insert("pending".into(), serde_json::to_string(&self.pending)?);
        let mut tensors = Vec::new();
        self.sampler.visit_params("", &mut |name, view| {
            tensors.push((name.to_string(), view.to_owned()));
        });
        for (name, t) in self.opt.export_state() {
            tensors.push((format!("opt.{name}"), t));
        }
        write_checkpoint(path, &header, &tensors)
    }

    /// Restore a state saved by [`SamplerState::save`].
    pub fn load(path: &Path) -> Result<SamplerState> {
        let (header, tensors, _) = read_checkpoint(path)?;
        if header.kind != "sampler" {
            return Err(Error::ArtifactMismatch(format!(
                "checkpoint {} holds a '{}' artifact, expected 'sampler'",
                path.display(),
                header.kind
            )));
        }
        let ablation = AblationSet::from_names(&header.ablation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(header.seed);
        let mut sampler = Sampler::new(&mut rng);
        let mut params = BTreeMap::new();
        let mut opt_tensors = Vec::new();
        for (name, t) in tensors {
            match name.strip_prefix("opt.") {
                Some(rest) => opt_tensors.push((rest.to_string(), t)),
                None => {
                    params.insert(name, t);
                }
            }
        }
        sampler.load_tensors(&params)?;
        let mut opt = Adam::new(parse_note(&header, "lr")?);
        opt.import_state(header.opt_step_count, opt_tensors)?;
        rng.set_word_pos(parse_note::<u128>(&header, "rng_word_pos")?);
        let pending: Vec<usize> = serde_json::from_str(
            header
                .notes
                .get("pending")
                .ok_or_else(|| Error::CorruptData("checkpoint lacks the batch queue note".into()))?,
        )?;
        Ok(SamplerState {
            sampler,
            opt,
            iteration: header.iteration,
            seed: header.seed,
            ablation: ablation.to_names(),
            trained_against: header.trained_against.clone(),
            topology_version: header.topology_version.clone(),
            history: Vec::new(),
            rng,
            pending,
        })
    }
}

fn parse_note<T: std::str::FromStr>(header: &CheckpointHeader, key: &str) -> Result<T> {
    header
        .notes
        .get(key)
        .ok_or_else(|| Error::CorruptData(format!("checkpoint lacks the '{key}' note")))?
        .parse::<T>()
        .map_err(|_| Error::CorruptData(format!("checkpoint note '{key}' is unreadable")))
}

/// Full inference: embed the sentence, regress a latent, project it to the
/// sphere, decode.
pub fn infer(
    text: &str,
    backend: &dyn Backend,
    state: &SamplerState,
    decoder: &Decoder,
) -> Result<ExpressionSequence> {
    let features = extract_features(text, backend)?;
    infer_from_features(&features, state, decoder)
}

/// Inference from pre-extracted features (used by sentiment overrides and
/// cached pipelines).
pub fn infer_from_features(
    features: &SentenceFeatures,
    state: &SamplerState,
    decoder: &Decoder,
) -> Result<ExpressionSequence> {
    let z = state.predict_latent(features)?;
    decoder.decode(z.view())
}

/// The learned-sampler bypass: pick the two bank entries nearest to the
/// query in concatenated-feature cosine distance and return the spherical
/// midpoint of their latents (a single-entry bank returns its latent).
pub fn nearest_neighbor_heuristic(
    features: &SentenceFeatures,
    bank: &[TrainingPair],
) -> Result<Array1<f64>> {
    if bank.is_empty() {
        return Err(Error::InvalidParameter(
            "nearest-neighbor lookup over an empty bank".into(),
        ));
    }
    features.validate()?;
    if bank.len() == 1 {
        return Ok(bank[0].1.clone());
    }
    let q = features.concatenated();
    let mut distances: Vec<(f64, usize)> = Vec::with_capacity(bank.len());
    for (i, (entry, _)) in bank.iter().enumerate() {
        let d = cosine_loss(q.view(), entry.concatenated().view())?;
        distances.push((d, i));
    }
    distances.sort_by(|a, b| a.partial_cmp(b).expect("cosine distances are finite"));
    let (za, zb) = (&bank[distances[0].1].1, &bank[distances[1].1].1);
    match interpolate_latents(za.view(), zb.view(), 3) {
        Ok(path) => Ok(path.into_iter().nth(1).expect("three interpolation steps")),
        // Antipodal latents have no unique midpoint; stay with the nearest.
        Err(Error::DegenerateInput(_)) => Ok(za.clone()),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::FRAME_COUNT;
    use crate::glo::{train_glo, TrainingConfig};
    use crate::nn::gradcheck::check_gradients;
    use crate::text::{stub_backend, Sentiment};
    use crate::topology::default_pyramid;
    use ndarray::array;

    fn unit(v: Vec<f64>) -> Array1<f64> {
        let a = Array1::from_vec(v);
        let n = a.dot(&a).sqrt();
        a / n
    }

    /// Deterministic features without touching a backend.
    fn synthetic_features(tag: u64) -> SentenceFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(tag);
        let mut draw = || {
            use rand::Rng;
            let v: Array1<f64> = Array1::from_shape_fn(EMBED_DIM, |_| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            let n = v.dot(&v).sqrt();
            v / n
        };
        SentenceFeatures {
            semantic: draw(),
            sentiment: draw(),
            sentiment_label: None,
            source_text: format!("synthetic features {tag}"),
        }
    }

    fn random_pairs(n: usize, seed: u64) -> Vec<TrainingPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                use rand::Rng;
                let z: Array1<f64> = Array1::from_shape_fn(LATENT_DIM, |_| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal)
                });
                let n = z.dot(&z).sqrt();
                (synthetic_features(1000 + i as u64), z / n)
            })
            .collect()
    }

    #[test]
    fn cosine_loss_matches_the_closed_forms() {
        let p = unit(vec![1.0, 2.0, 3.0]);
        assert!(cosine_loss(p.view(), p.view()).unwrap().abs() < 1e-12);
        let a = array![1.0, 0.0];
        let b = array![0.0, 5.0];
        assert!((cosine_loss(a.view(), b.view()).unwrap() - 1.0).abs() < 1e-12);
        let neg = p.mapv(|x| -x);
        assert!((cosine_loss(p.view(), neg.view()).unwrap() - 2.0).abs() < 1e-12);
        let zero = Array1::zeros(3);
        assert!(matches!(
            cosine_loss(zero.view(), p.view()),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            cosine_loss(a.view(), p.view()),
            Err(Error::ShapeMismatch(_))
        ));
        // Scale invariance in the first argument.
        let q = array![0.3, -1.2, 0.4];
        let base = cosine_loss(q.view(), p.view()).unwrap();
        for alpha in [1e-6, 0.37, 1.0, 42.0, 1e6] {
            let scaled = q.mapv(|x| alpha * x);
            let l = cosine_loss(scaled.view(), p.view()).unwrap();
            assert!((l - base).abs() < 1e-9, "alpha={alpha}: {l} vs {base}");
        }
    }

    #[test]
    fn cosine_gradient_matches_finite_differences() {
        let p = array![0.8, -0.3, 1.7, 0.2, -1.1];
        let z = unit(vec![0.1, 0.9, -0.4, 0.5, 0.3]);
        let g = cosine_loss_backward(p.view(), z.view()).unwrap();
        let h = 1e-6;
        for i in 0..p.len() {
            let mut up = p.clone();
            up[i] += h;
            let mut down = p.clone();
            down[i] -= h;
            let numeric = (cosine_loss(up.view(), z.view()).unwrap()
                - cosine_loss(down.view(), z.view()).unwrap())
                / (2.0 * h);
            assert!(
                (numeric - g[i]).abs() < 1e-7,
                "coordinate {i}: analytic {} vs numeric {numeric}",
                g[i]
            );
        }
    }

    #[test]
    fn network_gradients_pass_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut narrow = Sampler::with_width(6, &mut rng);
        let x = Array2::from_shape_fn((3, 6), |(i, j)| ((i * 6 + j) as f64 * 0.31).sin());
        let z = Array2::from_shape_fn((3, 6), |(i, j)| ((i * 6 + j) as f64 * 0.17).cos());
        let loss = |s: &Sampler| {
            let (p, _) = s.forward(x.view());
            (0..3)
                .map(|r| cosine_loss(p.row(r), z.row(r)).unwrap())
                .sum::<f64>()
                / 3.0
        };
        let report = check_gradients(
            &mut narrow,
            |s| {
                s.zero_grads();
                let (p, trace) = s.forward(x.view());
                let mut gy = Array2::zeros((3, 6));
                for r in 0..3 {
                    let g = cosine_loss_backward(p.row(r), z.row(r)).unwrap();
                    gy.row_mut(r).assign(&(g / 3.0));
                }
                s.backward(&trace, gy.view());
                loss(s)
            },
            loss,
            1e-5,
            1e-4,
        )
        .expect("sampler gradients must match finite differences");
        assert_eq!(report.entries, 4 * (6 * 6 + 6));
    }

    #[test]
    fn zero_iterations_leave_parameters_untouched() {
        let pairs = random_pairs(2, 11);
        let config = SamplerConfig { iterations: 0, ..SamplerConfig::default() };
        let a = train_sampler(&pairs, &config, "t").unwrap();
        let b = init_sampler(&pairs, &config, "t").unwrap();
        assert_eq!(a.sampler.named_tensors(), b.sampler.named_tensors());
        assert!(a.history.is_empty());
        assert_eq!(a.iteration, 0);
    }

    #[test]
    fn short_training_run_descends_and_is_reproducible() {
        let pairs = random_pairs(4, 3);
        let config = SamplerConfig {
            iterations: 80,
            lr: 1e-3,
            seed: 9,
            ..SamplerConfig::default()
        };
        let state = train_sampler(&pairs, &config, "t").unwrap();
        let again = train_sampler(&pairs, &config, "t").unwrap();
        assert_eq!(
            state.sampler.named_tensors(),
            again.sampler.named_tensors(),
            "fixed seed must reproduce bit-identically"
        );
        let first = state.history.first().unwrap().batch_cosine;
        let last = state.history.last().unwrap().batch_cosine;
        assert!(
            last < first / 3.0,
            "cosine loss should drop substantially: {first} → {last}"
        );
        let eval = state.evaluate(&pairs).unwrap();
        assert!(eval < first, "evaluation should reflect the descent");
    }

    #[test]
    fn ablated_branches_are_invisible_to_the_network() {
        let pairs = random_pairs(2, 17);
        let config = SamplerConfig {
            iterations: 5,
            ablation: vec!["wo_sent".into()],
            ..SamplerConfig::default()
        };
        let state = train_sampler(&pairs, &config, "t").unwrap();
        // Same semantic embedding, different sentiment embeddings.
        let mut f1 = synthetic_features(500);
        let mut f2 = synthetic_features(501);
        f2.semantic = f1.semantic.clone();
        let z1 = state.predict_latent(&f1).unwrap();
        let z2 = state.predict_latent(&f2).unwrap();
        assert_eq!(z1, z2, "with wo_sent only the semantic branch may matter");
        assert!((z1.dot(&z1).sqrt() - 1.0).abs() < 1e-9);

        // And the mirror image for wo_sem.
        let config = SamplerConfig {
            iterations: 5,
            ablation: vec!["wo_sem".into()],
            ..SamplerConfig::default()
        };
        let state = train_sampler(&pairs, &config, "t").unwrap();
        f1.sentiment = f2.sentiment.clone();
        let z1 = state.predict_latent(&f1).unwrap();
        let z2 = state.predict_latent(&f2).unwrap();
        assert_eq!(z1, z2, "with wo_sem only the sentiment branch may matter");
    }

    #[test]
    fn training_with_a_semantic_only_input_still_memorizes() {
        let pairs = random_pairs(3, 29);
        let config = SamplerConfig {
            iterations: 120,
            lr: 1e-3,
            ablation: vec!["wo_sem".into()],
            ..SamplerConfig::default()
        };
        let state = train_sampler(&pairs, &config, "t").unwrap();
        let first = state.history.first().unwrap().batch_cosine;
        let last = state.history.last().unwrap().batch_cosine;
        assert!(last < first / 2.0, "{first} → {last}");
    }

    #[test]
    fn nearest_neighbor_blends_the_two_closest_entries() {
        let mut bank = random_pairs(3, 41);
        // Make the latents of entries 0 and 1 orthogonal unit vectors.
        let mut za = Array1::zeros(LATENT_DIM);
        za[0] = 1.0;
        let mut zb = Array1::zeros(LATENT_DIM);
        zb[1] = 1.0;
        bank[0].1 = za.clone();
        bank[1].1 = zb.clone();
        // Query identical to entry 0's features: entry 0 is closest, and
        // the runner-up is whichever of 1/2 is nearer in feature space.
        let query = bank[0].0.clone();
        let blended = nearest_neighbor_heuristic(&query, &bank).unwrap();
        let d1 = cosine_loss(query.concatenated().view(), bank[1].0.concatenated().view()).unwrap();
        let d2 = cosine_loss(query.concatenated().view(), bank[2].0.concatenated().view()).unwrap();
        let runner_up = if d1 <= d2 { &bank[1].1 } else { &bank[2].1 };
        let expected = interpolate_latents(za.view(), runner_up.view(), 3).unwrap()[1].clone();
        assert_eq!(blended, expected);
        // Orthogonal latents: the midpoint has the closed form (a+b)/√2.
        if runner_up == &zb {
            let closed = (&za + &zb) / 2f64.sqrt();
            let err = (&blended - &closed).mapv(f64::abs).sum();
            assert!(err < 1e-9, "closed-form midpoint mismatch: {err}");
        }
        // Single-entry bank returns that latent.
        let single = nearest_neighbor_heuristic(&query, &bank[..1]).unwrap();
        assert_eq!(single, za);
    }

    #[test]
    fn inference_is_deterministic_and_feeds_a_unit_latent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let decoder = Decoder::mlp(&mut rng);
        let pairs = random_pairs(2, 55);
        let config = SamplerConfig { iterations: 10, ..SamplerConfig::default() };
        let state = train_sampler(&pairs, &config, "face/test-v1").unwrap();
        let backend = stub_backend(0);
        let a = infer("a wonderful day", &backend, &state, &decoder).unwrap();
        let b = infer("a wonderful day", &backend, &state, &decoder).unwrap();
        assert_eq!(a, b, "inference must be a pure function of its artifacts");
        assert_eq!(a.dim(), (FRAME_COUNT, 69, 2));
        let z = state
            .predict_latent(&extract_features("a wonderful day", &backend).unwrap())
            .unwrap();
        assert!((z.dot(&z).sqrt() - 1.0).abs() < 1e-6);
        // Forcing different sentiment prototypes must change the output.
        let mut joyful = extract_features("a wonderful day", &backend).unwrap();
        joyful.sentiment = backend.sentiment_prototype(Sentiment::Joy).unwrap();
        let mut angry = joyful.clone();
        angry.sentiment = backend.sentiment_prototype(Sentiment::Anger).unwrap();
        let out_joy = infer_from_features(&joyful, &state, &decoder).unwrap();
        let out_anger = infer_from_features(&angry, &state, &decoder).unwrap();
        let diff = (&out_joy - &out_anger).mapv(f64::abs).sum();
        assert!(diff > 0.0, "sentiment swap must move the output");
    }

    #[test]
    fn checkpoints_round_trip_with_their_pairing_metadata() {
        let pairs = random_pairs(2, 77);
        let config = SamplerConfig { iterations: 6, seed: 13, ..SamplerConfig::default() };
        let mut state = train_sampler(&pairs, &config, "face/test-v1").unwrap();
        state.trained_against = Some("abc123".into());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sampler.ckpt");
        let id = state.save(&path).unwrap();
        assert!(!id.is_empty());
        let loaded = SamplerState::load(&path).unwrap();
        assert_eq!(loaded.sampler.named_tensors(), state.sampler.named_tensors());
        assert_eq!(loaded.trained_against.as_deref(), Some("abc123"));
        assert_eq!(loaded.topology_version, "face/test-v1");
        assert_eq!(loaded.iteration, 6);
        assert_eq!(loaded.ablation, state.ablation);

        // Continuations from disk and from memory agree bit-for-bit.
        let mut resumed = SamplerState::load(&path).unwrap();
        let more = SamplerConfig { iterations: 4, seed: 13, ..SamplerConfig::default() };
        resumed.continue_training(&pairs, &more).unwrap();
        state.continue_training(&pairs, &more).unwrap();
        assert_eq!(resumed.sampler.named_tensors(), state.sampler.named_tensors());

        // A latent-optimization checkpoint is not a sampler checkpoint.
        let glo_config = TrainingConfig {
            iterations: 0,
            batch_size: 1,
            ablation: vec!["wo_gcn".into()],
            ..TrainingConfig::default()
        };
        let data = vec![(
            "s".to_string(),
            ExpressionSequence::from_elem((FRAME_COUNT, 69, 2), 0.5),
        )];
        let pyramid = default_pyramid(3).unwrap();
        let glo = train_glo(&data, &glo_config, &pyramid).unwrap();
        let glo_path = dir.path().join("glo.ckpt");
        glo.save(&glo_path).unwrap();
        assert!(matches!(
            SamplerState::load(&glo_path),
            Err(Error::ArtifactMismatch(_))
        ));
    }
}
