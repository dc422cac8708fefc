//! Generative latent optimization: the decoder and one free latent per
//! training sample are fitted jointly to reconstruct the training set.
//!
//! There is no encoder. Each sample `i` owns a latent vector `z_i` that
//! starts as a random point on the unit sphere; every iteration draws a
//! batch, decodes each latent, measures the mean absolute reconstruction
//! error, and takes one gradient step on the decoder parameters (adaptive
//! moments) and one on the batch's latents (plain gradient descent). Updated
//! latents are re-projected onto the unit sphere, so the latent space stays
//! a sphere throughout — which is what makes spherical interpolation between
//! trained codes meaningful and gives the sampling network a compact target
//! manifold.
//!
//! Batches are drawn uniformly without replacement within an epoch: a fresh
//! permutation of the dataset is consumed in order and reshuffled when it
//! runs out. The whole loop is single-threaded and bit-reproducible for a
//! fixed seed and configuration; checkpoints capture enough state (optimizer
//! moments, RNG position, the unconsumed tail of the current epoch) that a
//! resumed run continues exactly where the original left off.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use log::warn;
use ndarray::{Array1, ArrayView1, Ix1, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ablation::AblationSet;
use crate::checkpoint::{read_checkpoint, write_atomic, write_checkpoint, CheckpointHeader};
use crate::decoder::{
    Decoder, ExpressionSequence, COORD_CHANNELS, FRAME_COUNT, LATENT_DIM, UNIT_NORM_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::nn::adam::Adam;
use crate::nn::ParamSet;
use crate::topology::{GraphPyramid, LEVEL_SIZES};

/// Entries in one expression sequence; the mean absolute error is taken over
/// all of them.
const SEQ_ELEMENTS: usize = FRAME_COUNT * LEVEL_SIZES[4] * COORD_CHANNELS;

/// Norms below this are treated as a degenerate latent that cannot be
/// projected onto the sphere.
const DEGENERATE_NORM: f64 = 1e-12;

/// Hyper-parameters for one training run. The same block shape is reused by
/// the other trainers (sampling network, evaluation autoencoder), which
/// simply ignore the fields that do not apply to them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Step size for the decoder parameters (adaptive moment estimation).
    pub lr_theta: f64,
    /// Step size for the per-sample latents (plain gradient descent).
    pub lr_z: f64,
    pub batch_size: usize,
    /// Iteration budget; zero is a valid no-op budget.
    pub iterations: u64,
    /// Reconstruction loss; only `"l1"` is supported.
    pub loss: String,
    pub seed: u64,
    /// Write an intermediate checkpoint every this many iterations when a
    /// checkpoint directory is supplied; zero disables cadence checkpoints.
    pub checkpoint_every: u64,
    /// Stop early once the batch loss falls below this value, if set.
    pub target_loss: Option<f64>,
    /// Ablation switch names applied at initialization (see
    /// [`AblationSet`]); `wo_gcn` swaps in the fully connected decoder.
    pub ablation: Vec<String>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr_theta: 1e-4,
            lr_z: 1e-2,
            batch_size: 4,
            iterations: 2000,
            loss: "l1".to_string(),
            seed: 7,
            checkpoint_every: 0,
            target_loss: None,
            ablation: Vec::new(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_theta > 0.0) || !(self.lr_z > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rates must be positive (lr_theta={}, lr_z={})",
                self.lr_theta, self.lr_z
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        if self.loss != "l1" {
            return Err(Error::Config(format!(
                "unsupported loss '{}'; this build trains with l1 only",
                self.loss
            )));
        }
        if let Some(t) = self.target_loss {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "target loss must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// One row of the loss history CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub iteration: u64,
    pub batch_l1: f64,
    /// Seconds since the training call started.
    pub wallclock_s: f64,
}

/// Mean absolute difference over all entries of two equally shaped
/// sequences.
pub fn glo_loss(predicted: &ExpressionSequence, target: &ExpressionSequence) -> Result<f64> {
    if predicted.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "loss inputs differ: predicted {:?}, target {:?}",
            predicted.dim(),
            target.dim()
        )));
    }
    let total = Zip::from(predicted)
        .and(target)
        .fold(0.0, |acc, &p, &t| acc + (p - t).abs());
    Ok(total / predicted.len() as f64)
}

/// `v / ‖v‖₂`. Near-zero norms are refused rather than amplified.
pub fn project_to_sphere(v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateInput(
            "cannot project a non-finite vector onto the unit sphere".into(),
        ));
    }
    let norm = v.dot(&v).sqrt();
    if norm < DEGENERATE_NORM {
        return Err(Error::DegenerateInput(format!(
            "cannot project a vector of norm {norm:.3e} onto the unit sphere"
        )));
    }
    Ok(v.mapv(|x| x / norm))
}

/// Spherical linear interpolation between two unit vectors, endpoints
/// included. Every returned sample is re-projected to unit norm, and the
/// endpoints are returned exactly as given.
pub fn interpolate_latents(
    z_a: ArrayView1<'_, f64>,
    z_b: ArrayView1<'_, f64>,
    steps: usize,
) -> Result<Vec<Array1<f64>>> {
    if steps < 2 {
        return Err(Error::InvalidParameter(format!(
            "interpolation needs at least 2 steps, got {steps}"
        )));
    }
    if z_a.len() != z_b.len() {
        return Err(Error::ShapeMismatch(format!(
            "interpolation endpoints differ in length: {} vs {}",
            z_a.len(),
            z_b.len()
        )));
    }
    for (name, z) in [("first", &z_a), ("second", &z_b)] {
        let norm = z.dot(z).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "{name} interpolation endpoint has norm {norm}, expected a unit vector"
            )));
        }
    }
    let cos = z_a.dot(&z_b).clamp(-1.0, 1.0);
    if cos <= -1.0 + 1e-9 {
        return Err(Error::DegenerateInput(
            "antipodal endpoints admit no unique interpolation arc".into(),
        ));
    }
    let theta = cos.acos();
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        if i == 0 {
            out.push(z_a.to_owned());
        } else if i == steps - 1 {
            out.push(z_b.to_owned());
        } else if theta < 1e-9 {
            // Coincident endpoints: the arc degenerates to a point.
            out.push(z_a.to_owned());
        } else {
            let t = i as f64 / (steps - 1) as f64;
            let (sa, sb) = (((1.0 - t) * theta).sin(), (t * theta).sin());
            let sin_theta = theta.sin();
            let mut z = z_a.mapv(|x| x * sa / sin_theta);
            Zip::from(&mut z).and(&z_b).for_each(|z, &b| *z += b * sb / sin_theta);
            out.push(project_to_sphere(z.view())?);
        }
    }
    Ok(out)
}

fn random_unit_latent(rng: &mut ChaCha8Rng) -> Array1<f64> {
    loop {
        let v = Array1::from_shape_fn(LATENT_DIM, |_| rng.sample::<f64, _>(StandardNormal));
        if let Ok(z) = project_to_sphere(v.view()) {
            return z;
        }
    }
}

/// Gradient of the batch-mean l1 loss with respect to one prediction:
/// `sign(pred − target) / (entries · batch)`. Exact zeros get a zero
/// subgradient so a memorized sample stops moving.
fn l1_gradient(
    predicted: &ExpressionSequence,
    target: &ExpressionSequence,
    batch_scale: f64,
) -> ExpressionSequence {
    let scale = batch_scale / SEQ_ELEMENTS as f64;
    let mut g = predicted - target;
    g.mapv_inplace(|d| if d == 0.0 { 0.0 } else { d.signum() * scale });
    g
}

fn validate_dataset(dataset: &[(String, ExpressionSequence)]) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("training dataset is empty".into()));
    }
    let mut ids = BTreeSet::new();
    for (id, seq) in dataset {
        if !ids.insert(id.as_str()) {
            return Err(Error::InvalidParameter(format!("duplicate sample id '{id}'")));
        }
        let want = (FRAME_COUNT, LEVEL_SIZES[4], COORD_CHANNELS);
        if seq.dim() != want {
            return Err(Error::ShapeMismatch(format!(
                "sample '{id}' has shape {:?}, expected {want:?}",
                seq.dim()
            )));
        }
        if seq.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateInput(format!(
                "sample '{id}' contains non-finite coordinates"
            )));
        }
    }
    Ok(())
}

/// Full training state: decoder parameters, the latent table, optimizer
/// moments, and the bookkeeping needed to continue or reproduce a run.
pub struct GloState {
    pub decoder: Decoder,
    /// One unit-norm latent per training sample id.
    pub latents: BTreeMap<String, Array1<f64>>,
    pub opt: Adam,
    pub lr_z: f64,
    pub iteration: u64,
    pub seed: u64,
    pub topology_version: String,
    /// Sorted ablation switch names active in this run.
    pub ablation: Vec<String>,
    /// Per-iteration loss records of training performed by this process
    /// (not persisted in checkpoints; the CSV is the durable artifact).
    pub history: Vec<LossRecord>,
    rng: ChaCha8Rng,
    /// Unconsumed tail of the current epoch's shuffled sample order.
    pending: Vec<String>,
}

/// Initialize a training state without taking any steps: fresh decoder,
/// one random unit latent per sample.
pub fn init_glo(
    dataset: &[(String, ExpressionSequence)],
    config: &TrainingConfig,
    pyramid: &GraphPyramid,
) -> Result<GloState> {
    config.validate()?;
    validate_dataset(dataset)?;
    let ablation = AblationSet::from_names(&config.ablation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let decoder = if ablation.wo_gcn {
        Decoder::mlp(&mut rng)
    } else {
        Decoder::graph(pyramid, &mut rng)?
    };
    let mut latents = BTreeMap::new();
    for (id, _) in dataset {
        latents.insert(id.clone(), random_unit_latent(&mut rng));
    }
    Ok(GloState {
        decoder,
        latents,
        opt: Adam::new(config.lr_theta),
        lr_z: config.lr_z,
        iteration: 0,
        seed: config.seed,
        topology_version: pyramid.topology_version.clone(),
        ablation: ablation.to_names(),
        history: Vec::new(),
        rng,
        pending: Vec::new(),
    })
}

/// Run latent optimization from scratch for `config.iterations` steps.
pub fn train_glo(
    dataset: &[(String, ExpressionSequence)],
    config: &TrainingConfig,
    pyramid: &GraphPyramid,
) -> Result<GloState> {
    let mut state = init_glo(dataset, config, pyramid)?;
    state.continue_training(dataset, config, None)?;
    Ok(state)
}

impl GloState {
    /// Train for `config.iterations` further steps. The dataset must be the
    /// one this state was initialized with (same ids); learning rates are
    /// taken from `config`, while seed and ablations stay as initialized.
    /// With a checkpoint directory and a nonzero cadence, intermediate
    /// checkpoints land in `dir/glo-iter{N}.ckpt`.
    pub fn continue_training(
        &mut self,
        dataset: &[(String, ExpressionSequence)],
        config: &TrainingConfig,
        checkpoint_dir: Option<&Path>,
    ) -> Result<()> {
        config.validate()?;
        validate_dataset(dataset)?;
        if dataset.len() != self.latents.len()
            || dataset.iter().any(|(id, _)| !self.latents.contains_key(id))
        {
            return Err(Error::ArtifactMismatch(
                "dataset sample ids do not match the latent table".into(),
            ));
        }
        if config.batch_size > dataset.len() {
            return Err(Error::InvalidParameter(format!(
                "batch size {} exceeds the {} available samples",
                config.batch_size,
                dataset.len()
            )));
        }
        self.opt.lr = config.lr_theta;
        self.lr_z = config.lr_z;
        let ids: Vec<String> = dataset.iter().map(|(id, _)| id.clone()).collect();
        let index: BTreeMap<&str, &ExpressionSequence> =
            dataset.iter().map(|(id, seq)| (id.as_str(), seq)).collect();
        let started = Instant::now();
        for _ in 0..config.iterations {
            let batch_ids = self.next_batch(&ids, config.batch_size);
            let batch_scale = 1.0 / batch_ids.len() as f64;
            self.decoder.zero_grads();
            let mut batch_l1 = 0.0;
            let mut z_grads: BTreeMap<String, Array1<f64>> = BTreeMap::new();
            for id in &batch_ids {
                let target = index[id.as_str()];
                let z = self.latents[id.as_str()].clone();
                let (predicted, trace) = self.decoder.decode_traced(z.view())?;
                batch_l1 += batch_scale * glo_loss(&predicted, target)?;
                let g_seq = l1_gradient(&predicted, target, batch_scale);
                let gz = self.decoder.backward(&trace, &g_seq);
                match z_grads.entry(id.clone()) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(gz);
                    }
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        *e.get_mut() += &gz;
                    }
                }
            }
            if !batch_l1.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "batch loss became non-finite at iteration {} (batch: {})",
                    self.iteration + 1,
                    batch_ids.join(", ")
                )));
            }
            self.opt.step(&mut self.decoder);
            for (id, gz) in z_grads {
                let mut z = self.latents[id.as_str()].clone();
                z.scaled_add(-self.lr_z, &gz);
                let z = match project_to_sphere(z.view()) {
                    Ok(unit) => unit,
                    Err(_) => {
                        warn!(
                            "latent for sample '{id}' collapsed at iteration {}; re-randomizing",
                            self.iteration + 1
                        );
                        random_unit_latent(&mut self.rng)
                    }
                };
                self.latents.insert(id, z);
            }
            self.iteration += 1;
            self.history.push(LossRecord {
                iteration: self.iteration,
                batch_l1,
                wallclock_s: started.elapsed().as_secs_f64(),
            });
            if let Some(dir) = checkpoint_dir {
                if config.checkpoint_every > 0 && self.iteration % config.checkpoint_every == 0 {
                    self.save(&dir.join(format!("glo-iter{:06}.ckpt", self.iteration)))?;
                }
            }
            if config.target_loss.is_some_and(|t| batch_l1 < t) {
                break;
            }
        }
        Ok(())
    }

    /// Draw the next batch: the tail of the current epoch's permutation,
    /// reshuffling (a new epoch) whenever it runs short.
    fn next_batch(&mut self, ids: &[String], batch_size: usize) -> Vec<String> {
        while self.pending.len() < batch_size {
            let mut order: Vec<usize> = (0..ids.len()).collect();
            order.shuffle(&mut self.rng);
            self.pending.extend(order.into_iter().map(|i| ids[i].clone()));
        }
        self.pending.drain(..batch_size).collect()
    }

    /// Mean reconstruction l1 over the given samples. Pure: calling it twice
    /// on the same state gives bit-identical values.
    pub fn evaluate(&self, dataset: &[(String, ExpressionSequence)]) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::InvalidParameter("evaluation dataset is empty".into()));
        }
        let mut total = 0.0;
        for (id, target) in dataset {
            let predicted = self.reconstruction(id)?;
            total += glo_loss(&predicted, target)?;
        }
        Ok(total / dataset.len() as f64)
    }

    /// Decode the trained latent of one sample.
    pub fn reconstruction(&self, id: &str) -> Result<ExpressionSequence> {
        let z = self
            .latents
            .get(id)
            .ok_or_else(|| Error::IndexOutOfRange(format!("no latent for sample '{id}'")))?;
        self.decoder.decode(z.view())
    }

    /// Write the full state as a checkpoint; returns the content id.
    pub fn save(&self, path: &Path) -> Result<String> {
        let mut header = CheckpointHeader::new("glo", &self.topology_version, self.seed);
        header.channel_schedule = self.decoder.channel_schedule();
        header.iteration = self.iteration;
        header.opt_step_count = self.opt.step_count;
        header.ablation = self.ablation.clone();
        header.final_loss = self.history.last().map(|r| r.batch_l1);
        header.notes.insert("decoder".into(), self.decoder.kind().into());
        header.notes.insert("lr_theta".into(), format!("{}", self.opt.lr));
        header.notes.insert("lr_z".into(), format!("{}", self.lr_z));
        header
            .notes
            .insert("rng_word_pos".into(), self.rng.get_word_pos().to_string());
        header.notes.insert(
            "pending".into(),
            serde_json::to_string(&self.pending).expect("string list serializes"),
        );
        let mut tensors = Vec::new();
        for (name, t) in self.decoder.named_tensors() {
            tensors.push((format!("theta.{name}"), t));
        }
        for (id, z) in &self.latents {
            tensors.push((format!("z.{id}"), z.clone().into_dyn()));
        }
        for (name, t) in self.opt.export_state() {
            tensors.push((format!("opt.{name}"), t));
        }
        write_checkpoint(path, &header, &tensors)
    }

    /// Reload a checkpoint written by [`GloState::save`]. The pyramid must
    /// carry the same topology version the checkpoint was trained against;
    /// the masked-lift invariant and latent norms are re-verified.
    pub fn load(path: &Path, pyramid: &GraphPyramid) -> Result<GloState> {
        let (header, tensors, _id) = read_checkpoint(path)?;
        if header.kind != "glo" {
            return Err(Error::ArtifactMismatch(format!(
                "expected a latent-optimization checkpoint, found kind '{}'",
                header.kind
            )));
        }
        if header.topology_version != pyramid.topology_version {
            return Err(Error::VersionMismatch(format!(
                "checkpoint topology '{}' does not match the loaded topology '{}'",
                header.topology_version, pyramid.topology_version
            )));
        }
        let mut ctor_rng = ChaCha8Rng::seed_from_u64(header.seed);
        let mut decoder = match header.notes.get("decoder").map(String::as_str) {
            Some("decoder/graph") => Decoder::graph(pyramid, &mut ctor_rng)?,
            Some("decoder/mlp") => Decoder::mlp(&mut ctor_rng),
            Some(other) => {
                return Err(Error::CorruptData(format!("unknown decoder kind '{other}'")))
            }
            None => {
                return Err(Error::CorruptData(
                    "checkpoint does not record its decoder kind".into(),
                ))
            }
        };
        if header.channel_schedule != decoder.channel_schedule() {
            return Err(Error::ArtifactMismatch(format!(
                "checkpoint channel schedule {:?} does not match the decoder's {:?}",
                header.channel_schedule,
                decoder.channel_schedule()
            )));
        }
        let mut theta = BTreeMap::new();
        let mut latents = BTreeMap::new();
        let mut opt_tensors = Vec::new();
        for (name, t) in tensors {
            if let Some(rest) = name.strip_prefix("theta.") {
                theta.insert(rest.to_string(), t);
            } else if let Some(id) = name.strip_prefix("z.") {
                let z = t.into_dimensionality::<Ix1>().map_err(|_| {
                    Error::CorruptData(format!("latent for sample '{id}' is not a vector"))
                })?;
                let norm = z.dot(&z).sqrt();
                if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                    return Err(Error::CorruptData(format!(
                        "stored latent for sample '{id}' has norm {norm}"
                    )));
                }
                latents.insert(id.to_string(), z);
            } else if let Some(rest) = name.strip_prefix("opt.") {
                opt_tensors.push((rest.to_string(), t));
            } else {
                return Err(Error::CorruptData(format!(
                    "unexpected tensor '{name}' in a latent-optimization checkpoint"
                )));
            }
        }
        decoder.load_tensors(&theta)?;
        decoder.check_mask_invariant()?;
        let lr_theta: f64 = parse_note(&header, "lr_theta")?;
        let lr_z: f64 = parse_note(&header, "lr_z")?;
        let mut opt = Adam::new(lr_theta);
        opt.import_state(header.opt_step_count, opt_tensors)?;
        let mut rng = ChaCha8Rng::seed_from_u64(header.seed);
        rng.set_word_pos(parse_note(&header, "rng_word_pos")?);
        let pending: Vec<String> = header
            .notes
            .get("pending")
            .map(|s| serde_json::from_str(s))
            .transpose()
            .map_err(|e| Error::CorruptData(format!("pending-batch note is unreadable: {e}")))?
            .unwrap_or_default();
        for id in &pending {
            if !latents.contains_key(id) {
                return Err(Error::CorruptData(format!(
                    "pending batch references unknown sample '{id}'"
                )));
            }
        }
        Ok(GloState {
            decoder,
            latents,
            opt,
            lr_z,
            iteration: header.iteration,
            seed: header.seed,
            topology_version: header.topology_version,
            ablation: header.ablation,
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
        .ok_or_else(|| Error::CorruptData(format!("checkpoint note '{key}' is missing")))?
        .parse()
        .map_err(|_| Error::CorruptData(format!("checkpoint note '{key}' is unreadable")))
}

/// Write the loss history as `iteration,batch_l1,wallclock_s` CSV.
pub fn write_loss_history(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut csv = String::from("iteration,batch_l1,wallclock_s\n");
    for r in history {
        csv.push_str(&format!("{},{},{}\n", r.iteration, r.batch_l1, r.wallclock_s));
    }
    write_atomic(path, csv.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::default_pyramid;
    use ndarray::Array3;

    fn unit(v: Vec<f64>) -> Array1<f64> {
        let a = Array1::from(v);
        project_to_sphere(a.view()).unwrap()
    }

    /// A small deterministic dataset of smooth sequences.
    fn toy_dataset(n: usize) -> Vec<(String, ExpressionSequence)> {
        (0..n)
            .map(|s| {
                let seq = Array3::from_shape_fn(
                    (FRAME_COUNT, LEVEL_SIZES[4], COORD_CHANNELS),
                    |(t, v, m)| {
                        let phase = t as f64 / FRAME_COUNT as f64;
                        let base = 0.5
                            + 0.2 * ((s + 1) as f64 * phase * std::f64::consts::TAU).sin()
                            + 0.001 * v as f64;
                        if m == 0 {
                            base
                        } else {
                            1.0 - base
                        }
                    },
                );
                (format!("sample-{s}"), seq)
            })
            .collect()
    }

    fn mlp_config() -> TrainingConfig {
        TrainingConfig {
            ablation: vec!["wo_gcn".to_string()],
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn l1_loss_matches_hand_computed_values() {
        let a = Array3::zeros((FRAME_COUNT, LEVEL_SIZES[4], COORD_CHANNELS));
        assert_eq!(glo_loss(&a, &a).unwrap(), 0.0);
        let b = a.mapv(|x| x + 0.5);
        assert!((glo_loss(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        let mut c = a.clone();
        c[[0, 0, 0]] = 1.0;
        let expected = 1.0 / SEQ_ELEMENTS as f64; // ≈ 1.132e-4
        assert!((glo_loss(&a, &c).unwrap() - expected).abs() < 1e-18);
        let wrong = Array3::zeros((2, LEVEL_SIZES[4], COORD_CHANNELS));
        assert!(matches!(glo_loss(&a, &wrong), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn projection_handles_plain_unit_and_degenerate_vectors() {
        let p = project_to_sphere(Array1::from(vec![3.0, 4.0]).view()).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.8).abs() < 1e-12);
        let u = unit(vec![1.0, 2.0, -2.0]);
        let again = project_to_sphere(u.view()).unwrap();
        for (a, b) in u.iter().zip(again.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            project_to_sphere(Array1::from(vec![0.0, 0.0]).view()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn slerp_covers_endpoints_midpoints_and_error_cases() {
        let a = unit(vec![1.0, 0.0]);
        let b = unit(vec![0.0, 1.0]);
        let two = interpolate_latents(a.view(), b.view(), 2).unwrap();
        assert_eq!(two[0], a);
        assert_eq!(two[1], b);
        let three = interpolate_latents(a.view(), b.view(), 3).unwrap();
        let mid = &three[1];
        let expected = 1.0 / 2.0_f64.sqrt();
        assert!((mid[0] - expected).abs() < 1e-12 && (mid[1] - expected).abs() < 1e-12);
        let same = interpolate_latents(a.view(), a.view(), 5).unwrap();
        for z in &same {
            assert_eq!(z, &a);
        }
        for z in interpolate_latents(a.view(), b.view(), 16).unwrap() {
            assert!((z.dot(&z).sqrt() - 1.0).abs() < 1e-9);
        }
        let anti = a.mapv(|x| -x);
        assert!(matches!(
            interpolate_latents(a.view(), anti.view(), 4),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            interpolate_latents(a.view(), b.view(), 1),
            Err(Error::InvalidParameter(_))
        ));
        let skewed = Array1::from(vec![2.0, 0.0]);
        assert!(matches!(
            interpolate_latents(skewed.view(), b.view(), 3),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn zero_iteration_budget_is_a_pure_no_op() {
        let data = toy_dataset(2);
        let pyramid = default_pyramid(3).unwrap();
        let config = TrainingConfig { iterations: 0, batch_size: 1, ..mlp_config() };
        let a = train_glo(&data, &config, &pyramid).unwrap();
        let b = train_glo(&data, &config, &pyramid).unwrap();
        assert_eq!(a.iteration, 0);
        assert!(a.history.is_empty());
        for (id, z) in &a.latents {
            assert!((z.dot(z).sqrt() - 1.0).abs() < UNIT_NORM_TOLERANCE);
            assert_eq!(z, &b.latents[id], "latent init must be seed-determined");
        }
        // Pure evaluation: identical values on repeated calls.
        let e1 = a.evaluate(&data).unwrap();
        let e2 = a.evaluate(&data).unwrap();
        assert_eq!(e1.to_bits(), e2.to_bits());
    }

    #[test]
    fn training_is_bit_reproducible_for_a_fixed_seed() {
        let data = toy_dataset(2);
        let pyramid = default_pyramid(3).unwrap();
        let config = TrainingConfig {
            iterations: 6,
            batch_size: 2,
            ..mlp_config()
        };
        let a = train_glo(&data, &config, &pyramid).unwrap();
        let b = train_glo(&data, &config, &pyramid).unwrap();
        assert_eq!(a.iteration, 6);
        for ((na, ta), (nb, tb)) in a
            .decoder
            .named_tensors()
            .into_iter()
            .zip(b.decoder.named_tensors())
        {
            assert_eq!(na, nb);
            assert_eq!(ta, tb, "parameter '{na}' diverged between identical runs");
        }
        for (id, z) in &a.latents {
            assert_eq!(z, &b.latents[id]);
        }
        let la: Vec<u64> = a.history.iter().map(|r| r.batch_l1.to_bits()).collect();
        let lb: Vec<u64> = b.history.iter().map(|r| r.batch_l1.to_bits()).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn single_sample_run_memorizes_its_target() {
        let data = toy_dataset(1);
        let pyramid = default_pyramid(3).unwrap();
        // Two-phase schedule: a coarse pass at a high rate, then a fine pass
        // at a low rate whose noise floor sits safely under the target.
        let coarse = TrainingConfig {
            iterations: 300,
            batch_size: 1,
            lr_theta: 3e-4,
            ..mlp_config()
        };
        let mut state = train_glo(&data, &coarse, &pyramid).unwrap();
        let fine = TrainingConfig {
            iterations: 1200,
            lr_theta: 2e-5,
            target_loss: Some(8.5e-4),
            ..coarse.clone()
        };
        state.continue_training(&data, &fine, None).unwrap();
        assert!(
            state.iteration < 1500,
            "loss never crossed the early-stop threshold within the budget"
        );
        let final_l1 = state.evaluate(&data).unwrap();
        assert!(final_l1 < 1e-3, "memorization stalled at l1 = {final_l1}");
        let head: f64 =
            state.history[..100].iter().map(|r| r.batch_l1).sum::<f64>() / 100.0;
        let n = state.history.len();
        let tail: f64 =
            state.history[n - 100..].iter().map(|r| r.batch_l1).sum::<f64>() / 100.0;
        assert!(
            tail < head / 10.0,
            "loss saturated: first hundred mean {head}, last hundred mean {tail}"
        );
        for z in state.latents.values() {
            assert!((z.dot(z).sqrt() - 1.0).abs() < UNIT_NORM_TOLERANCE);
        }
    }

    #[test]
    fn graph_decoder_steps_reduce_loss_and_keep_invariants() {
        let data = toy_dataset(2);
        let pyramid = default_pyramid(3).unwrap();
        let config = TrainingConfig {
            iterations: 10,
            batch_size: 1,
            seed: 11,
            ..TrainingConfig::default()
        };
        let before = init_glo(&data, &config, &pyramid).unwrap().evaluate(&data).unwrap();
        let state = train_glo(&data, &config, &pyramid).unwrap();
        let after = state.evaluate(&data).unwrap();
        assert!(
            after < before,
            "ten optimization steps did not improve reconstruction ({before} → {after})"
        );
        state.decoder.check_mask_invariant().unwrap();
        for z in state.latents.values() {
            assert!((z.dot(z).sqrt() - 1.0).abs() < UNIT_NORM_TOLERANCE);
        }
    }

    #[test]
    fn checkpoint_resume_continues_bit_exactly() {
        let data = toy_dataset(3);
        let pyramid = default_pyramid(3).unwrap();
        let head = TrainingConfig {
            iterations: 5,
            batch_size: 2,
            ..mlp_config()
        };
        let mut live = train_glo(&data, &head, &pyramid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("glo.ckpt");
        live.save(&path).unwrap();
        let mut restored = GloState::load(&path, &pyramid).unwrap();
        assert_eq!(restored.iteration, 5);
        let tail = TrainingConfig { iterations: 4, ..head };
        live.continue_training(&data, &tail, None).unwrap();
        restored.continue_training(&data, &tail, None).unwrap();
        for ((na, ta), (nb, tb)) in live
            .decoder
            .named_tensors()
            .into_iter()
            .zip(restored.decoder.named_tensors())
        {
            assert_eq!(na, nb);
            assert_eq!(ta, tb, "resumed run diverged at parameter '{na}'");
        }
        for (id, z) in &live.latents {
            assert_eq!(z, &restored.latents[id], "resumed run diverged at latent '{id}'");
        }
    }

    #[test]
    fn checkpoints_refuse_a_different_topology() {
        let data = toy_dataset(1);
        let pyramid = default_pyramid(3).unwrap();
        let config = TrainingConfig {
            iterations: 1,
            batch_size: 1,
            seed: 3,
            ..TrainingConfig::default()
        };
        let state = train_glo(&data, &config, &pyramid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("glo.ckpt");
        state.save(&path).unwrap();
        let mut other = default_pyramid(3).unwrap();
        other.topology_version = "face69/other-v9".to_string();
        assert!(matches!(
            GloState::load(&path, &other),
            Err(Error::VersionMismatch(_))
        ));
        let same = GloState::load(&path, &pyramid).unwrap();
        same.decoder.check_mask_invariant().unwrap();
        assert_eq!(same.ablation, Vec::<String>::new());
    }

    #[test]
    #[ignore]
    fn timing_breakdown() {
        let data = toy_dataset(1);
        let pyramid = default_pyramid(3).unwrap();
        let config = TrainingConfig { batch_size: 1, ..TrainingConfig::default() };
        let mut state = init_glo(&data, &config, &pyramid).unwrap();
        let z = state.latents["sample-0"].clone();
        let target = &data[0].1;
        let reps = 20;
        let t0 = Instant::now();
        for _ in 0..reps {
            let _ = state.decoder.decode_traced(z.view()).unwrap();
        }
        let fwd = t0.elapsed().as_secs_f64() / reps as f64;
        let (predicted, trace) = state.decoder.decode_traced(z.view()).unwrap();
        let t0 = Instant::now();
        for _ in 0..reps {
            let _ = glo_loss(&predicted, target).unwrap();
            let _ = l1_gradient(&predicted, target, 1.0);
        }
        let loss = t0.elapsed().as_secs_f64() / reps as f64;
        let g_seq = l1_gradient(&predicted, target, 1.0);
        let t0 = Instant::now();
        for _ in 0..reps {
            let _ = state.decoder.backward(&trace, &g_seq);
        }
        let bwd = t0.elapsed().as_secs_f64() / reps as f64;
        let t0 = Instant::now();
        for _ in 0..reps {
            state.opt.step(&mut state.decoder);
        }
        let adam = t0.elapsed().as_secs_f64() / reps as f64;
        let t0 = Instant::now();
        for _ in 0..reps {
            state.decoder.zero_grads();
        }
        let zero = t0.elapsed().as_secs_f64() / reps as f64;
        println!(
            "fwd {:.1}ms  loss {:.1}ms  bwd {:.1}ms  adam {:.1}ms  zero {:.1}ms  total {:.1}ms",
            1e3 * fwd, 1e3 * loss, 1e3 * bwd, 1e3 * adam, 1e3 * zero,
            1e3 * (fwd + loss + bwd + adam + zero)
        );
    }

    #[test]
    #[ignore]
    fn eight_sample_pilot() {
        let (_, seqs) = crate::preprocess::generate_synthetic_dataset(8, 21).unwrap();
        let data: Vec<(String, ExpressionSequence)> = seqs
            .into_iter()
            .map(|s| (s.sample_id, s.coords))
            .collect();
        let pyramid = default_pyramid(3).unwrap();
        let schedules: [&[(u64, f64, f64)]; 2] = [
            &[(2000, 2e-3, 1e-3)],
            &[(1400, 2e-3, 1e-2), (400, 8e-4, 2e-3), (200, 3e-4, 5e-4)],
        ];
        for stages in schedules {
            let mut config = TrainingConfig {
                iterations: 0,
                batch_size: 1,
                seed: 5,
                ..TrainingConfig::default()
            };
            let t0 = Instant::now();
            let mut state = init_glo(&data, &config, &pyramid).unwrap();
            for &(iters, lr, lr_z) in stages {
                config.iterations = iters;
                config.lr_theta = lr;
                config.lr_z = lr_z;
                state.continue_training(&data, &config, None).unwrap();
            }
            let dt = t0.elapsed().as_secs_f64();
            let eval = state.evaluate(&data).unwrap();
            let curve: Vec<String> = (0..2000)
                .step_by(200)
                .chain([1999])
                .map(|i| format!("{:.4}", state.history[i].batch_l1))
                .collect();
            println!("{stages:?}: curve {} | eval {eval:.5} | {dt:.0}s", curve.join(" "));
        }
    }

    #[test]
    fn loss_history_csv_round_trips() {
        let history = vec![
            LossRecord { iteration: 1, batch_l1: 0.25, wallclock_s: 0.5 },
            LossRecord { iteration: 2, batch_l1: 0.125, wallclock_s: 1.0 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_history(&path, &history).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iteration,batch_l1,wallclock_s"));
        for (line, rec) in lines.zip(&history) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[0].parse::<u64>().unwrap(), rec.iteration);
            assert_eq!(cells[1].parse::<f64>().unwrap(), rec.batch_l1);
            assert_eq!(cells[2].parse::<f64>().unwrap(), rec.wallclock_s);
        }
    }
}
