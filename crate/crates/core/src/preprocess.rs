//! Landmark conditioning and dataset plumbing.
//!
//! Raw detector tracks arrive as per-frame 2D landmarks with arbitrary head
//! pose, jitter, length, and scale. Training wants none of that variance:
//! the conditioning pipeline removes the rigid component of every frame
//! ([`frontalize`]), smooths detector jitter with an adaptive low-pass
//! ([`one_euro_filter`]), picks a fixed number of frames uniformly across
//! the clip ([`resample_uniform`]), and maps each frame into the unit square
//! by its bounding-box diagonal ([`normalize_bbox`]). On data that is
//! already conditioned the pipeline is idempotent to within numerical
//! noise, so re-running it is harmless.
//!
//! The module also owns the on-disk dataset format — a JSON-lines manifest
//! pointing at per-sample landmark JSON files — and a seeded synthetic
//! generator that animates the canonical face template with smooth
//! displacement fields under per-sentiment regimes (joy raises the mouth
//! corners, sadness lowers corners and upper lids, anger pulls the inner
//! brows down). Synthetic data is what the test suites train on: small,
//! deterministic, and labeled.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::write_atomic;
use crate::decoder::FRAME_COUNT;
use crate::error::{Error, Result};
use crate::topology::{canonical_template, LEVEL_SIZES, STABLE_ANCHORS};

/// Landmark count the pipeline works with (68 detector points + centroid).
pub const LANDMARK_COUNT: usize = LEVEL_SIZES[4];

/// Version stamp of per-sample landmark JSON files.
pub const LANDMARK_FILE_VERSION: &str = "landmarks/v1";

/// Version stamp of dataset manifests.
pub const MANIFEST_VERSION: &str = "manifest/v1";

/// One-euro filter defaults (canonical parameters of the filter).
pub const ONE_EURO_MIN_CUTOFF: f64 = 1.0;
pub const ONE_EURO_BETA: f64 = 0.007;
pub const ONE_EURO_D_CUTOFF: f64 = 1.0;

/// A landmark track with its metadata.
#[derive(Debug, Clone)]
pub struct LandmarkSequence {
    /// `(T, 69, 2)` image coordinates, v growing downward.
    pub coords: Array3<f64>,
    pub fps: f64,
    pub sample_id: String,
    pub speaker_id: String,
    pub text: String,
    pub sentiment_label: Option<String>,
}

impl LandmarkSequence {
    pub fn frames(&self) -> usize {
        self.coords.dim().0
    }

    pub fn validate(&self) -> Result<()> {
        let (t, v, m) = self.coords.dim();
        if t == 0 {
            return Err(Error::ShapeMismatch(format!(
                "sequence '{}' has no frames",
                self.sample_id
            )));
        }
        if v != LANDMARK_COUNT || m != 2 {
            return Err(Error::ShapeMismatch(format!(
                "sequence '{}' has per-frame shape ({v}, {m}), expected ({LANDMARK_COUNT}, 2)",
                self.sample_id
            )));
        }
        if !(self.fps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sequence '{}' has non-positive fps {}",
                self.sample_id, self.fps
            )));
        }
        if self.coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateInput(format!(
                "sequence '{}' contains non-finite coordinates",
                self.sample_id
            )));
        }
        Ok(())
    }

    /// Same metadata, different frames.
    fn with_coords(&self, coords: Array3<f64>, fps: f64) -> LandmarkSequence {
        LandmarkSequence {
            coords,
            fps,
            sample_id: self.sample_id.clone(),
            speaker_id: self.speaker_id.clone(),
            text: self.text.clone(),
            sentiment_label: self.sentiment_label.clone(),
        }
    }
}

/// Train/test tag of a manifest record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One dataset entry: metadata plus the landmark file it points at
/// (relative to the manifest's directory).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub speaker_id: String,
    pub text: String,
    pub sentiment: Option<String>,
    pub landmarks: String,
    pub split: Split,
}

/// An ordered dataset listing; the JSON-lines file starts with a version
/// header line followed by one record per line.
#[derive(Debug, Clone, Default)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    version: String,
}

impl DatasetManifest {
    /// Records carrying the given split tag.
    pub fn split(&self, tag: Split) -> Vec<&ManifestRecord> {
        self.records.iter().filter(|r| r.split == tag).collect()
    }

    /// Records spoken by one person — the person-specific regime.
    pub fn for_speaker(&self, speaker_id: &str) -> DatasetManifest {
        DatasetManifest {
            records: self
                .records
                .iter()
                .filter(|r| r.speaker_id == speaker_id)
                .cloned()
                .collect(),
        }
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !seen.insert(r.sample_id.as_str()) {
                return Err(Error::CorruptData(format!(
                    "manifest repeats sample id '{}'",
                    r.sample_id
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.check_unique_ids()?;
        let mut text = serde_json::to_string(&ManifestHeader {
            version: MANIFEST_VERSION.to_string(),
        })?;
        text.push('\n');
        for r in &self.records {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        write_atomic(path, text.as_bytes())
    }

    /// Load and validate: version header, unique ids, and every landmark
    /// file resolvable relative to the manifest's directory.
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ManifestHeader = match lines.next() {
            Some(line) => serde_json::from_str(line)
                .map_err(|e| Error::CorruptData(format!("manifest header is unreadable: {e}")))?,
            None => return Err(Error::CorruptData("manifest file is empty".into())),
        };
        if header.version != MANIFEST_VERSION {
            return Err(Error::VersionMismatch(format!(
                "manifest version '{}' is not supported (expected '{MANIFEST_VERSION}')",
                header.version
            )));
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let record: ManifestRecord = serde_json::from_str(line).map_err(|e| {
                Error::CorruptData(format!("manifest record {} is unreadable: {e}", n + 1))
            })?;
            records.push(record);
        }
        let manifest = DatasetManifest { records };
        manifest.check_unique_ids()?;
        let base = path.parent().unwrap_or(Path::new("."));
        for r in &manifest.records {
            let p = base.join(&r.landmarks);
            if !p.is_file() {
                return Err(Error::MissingArtifact(format!(
                    "manifest entry '{}' points at missing landmark file {}",
                    r.sample_id,
                    p.display()
                )));
            }
        }
        Ok(manifest)
    }
}

#[derive(Serialize, Deserialize)]
struct LandmarkFile {
    version: String,
    sample_id: String,
    speaker_id: String,
    text: String,
    sentiment: Option<String>,
    fps: f64,
    coords: Vec<Vec<[f64; 2]>>,
}

/// Write one sequence as a landmark JSON file.
pub fn write_landmarks(path: &Path, seq: &LandmarkSequence) -> Result<()> {
    seq.validate()?;
    let coords = seq
        .coords
        .outer_iter()
        .map(|frame| frame.outer_iter().map(|p| [p[0], p[1]]).collect())
        .collect();
    let file = LandmarkFile {
        version: LANDMARK_FILE_VERSION.to_string(),
        sample_id: seq.sample_id.clone(),
        speaker_id: seq.speaker_id.clone(),
        text: seq.text.clone(),
        sentiment: seq.sentiment_label.clone(),
        fps: seq.fps,
        coords,
    };
    write_atomic(path, serde_json::to_string(&file)?.as_bytes())
}

/// Read a landmark JSON file. Frames may carry either the full 69 points or
/// raw 68-point detector output, in which case the centroid is appended as
/// the 69th point.
pub fn read_landmarks(path: &Path) -> Result<LandmarkSequence> {
    let text = std::fs::read_to_string(path)?;
    let file: LandmarkFile = serde_json::from_str(&text)
        .map_err(|e| Error::CorruptData(format!("{}: {e}", path.display())))?;
    if file.version != LANDMARK_FILE_VERSION {
        return Err(Error::VersionMismatch(format!(
            "landmark file version '{}' is not supported (expected '{LANDMARK_FILE_VERSION}')",
            file.version
        )));
    }
    let t = file.coords.len();
    if t == 0 {
        return Err(Error::CorruptData(format!(
            "{}: landmark file has no frames",
            path.display()
        )));
    }
    let mut coords = Array3::zeros((t, LANDMARK_COUNT, 2));
    for (ti, frame) in file.coords.iter().enumerate() {
        match frame.len() {
            LANDMARK_COUNT => {
                for (vi, p) in frame.iter().enumerate() {
                    coords[[ti, vi, 0]] = p[0];
                    coords[[ti, vi, 1]] = p[1];
                }
            }
            // Raw detector output: append the centroid as the root vertex.
            n if n == LANDMARK_COUNT - 1 => {
                let (mut cu, mut cv) = (0.0, 0.0);
                for (vi, p) in frame.iter().enumerate() {
                    coords[[ti, vi, 0]] = p[0];
                    coords[[ti, vi, 1]] = p[1];
                    cu += p[0];
                    cv += p[1];
                }
                coords[[ti, LANDMARK_COUNT - 1, 0]] = cu / n as f64;
                coords[[ti, LANDMARK_COUNT - 1, 1]] = cv / n as f64;
            }
            n => {
                return Err(Error::CorruptData(format!(
                    "{}: frame {ti} has {n} points, expected 68 or 69",
                    path.display()
                )))
            }
        }
    }
    let seq = LandmarkSequence {
        coords,
        fps: file.fps,
        sample_id: file.sample_id,
        speaker_id: file.speaker_id,
        text: file.text,
        sentiment_label: file.sentiment,
    };
    seq.validate()?;
    Ok(seq)
}

/// Result of frontalization: the aligned sequence plus the indices of frames
/// whose anchors were too degenerate to align (those pass through
/// unchanged).
#[derive(Debug, Clone)]
pub struct FrontalizeOutcome {
    pub seq: LandmarkSequence,
    pub flagged_frames: Vec<usize>,
}

/// Remove the rigid (similarity) component of every frame by least-squares
/// alignment of the five stable anchors — outer eye corners, nose tip,
/// mouth corners — to their canonical template positions. Per-person shape
/// residuals survive; only rotation, uniform scale, and translation are
/// removed. Frames whose anchors are collinear or coincident cannot define
/// the transform; they are left unchanged and flagged.
pub fn frontalize(seq: &LandmarkSequence) -> Result<FrontalizeOutcome> {
    seq.validate()?;
    let template = canonical_template();
    let mut target = Array2::zeros((STABLE_ANCHORS.len(), 2));
    for (i, &a) in STABLE_ANCHORS.iter().enumerate() {
        target.row_mut(i).assign(&template.row(a));
    }
    let (ty, tx) = centroid2(target.view());
    let mut coords = seq.coords.clone();
    let mut flagged = Vec::new();
    for (ti, mut frame) in coords.outer_iter_mut().enumerate() {
        let mut anchors = Array2::zeros((STABLE_ANCHORS.len(), 2));
        for (i, &a) in STABLE_ANCHORS.iter().enumerate() {
            anchors.row_mut(i).assign(&frame.row(a));
        }
        let (cu, cv) = centroid2(anchors.view());
        // Second moments of the centered anchors decide degeneracy:
        // coincident or collinear points leave the similarity fit
        // under-determined in a way that flips under noise.
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for r in anchors.outer_iter() {
            let (du, dv) = (r[0] - cu, r[1] - cv);
            sxx += du * du;
            sxy += du * dv;
            syy += dv * dv;
        }
        let trace = sxx + syy;
        let det = sxx * syy - sxy * sxy;
        // Eigenvalues of the 2×2 moment matrix; the smaller one vanishes
        // exactly when the anchors are collinear.
        let half = trace / 2.0;
        let spread = (half * half - det).max(0.0).sqrt();
        let lambda_min = half - spread;
        if trace < 1e-12 || lambda_min <= 1e-9 * trace {
            flagged.push(ti);
            continue;
        }
        // Optimal similarity via the complex least-squares form:
        // treat (u, v) as u + iv; the aligning rotation+scale is
        // Σ ỹᵢ·conj(x̃ᵢ) / Σ |x̃ᵢ|².
        let (mut re, mut im) = (0.0, 0.0);
        for (r, y) in anchors.outer_iter().zip(target.outer_iter()) {
            let (xu, xv) = (r[0] - cu, r[1] - cv);
            let (yu, yv) = (y[0] - ty, y[1] - tx);
            re += yu * xu + yv * xv;
            im += yv * xu - yu * xv;
        }
        let (a, b) = (re / trace, im / trace);
        for mut p in frame.outer_iter_mut() {
            let (du, dv) = (p[0] - cu, p[1] - cv);
            p[0] = a * du - b * dv + ty;
            p[1] = b * du + a * dv + tx;
        }
    }
    Ok(FrontalizeOutcome {
        seq: seq.with_coords(coords, seq.fps),
        flagged_frames: flagged,
    })
}

fn centroid2(points: ArrayView2<'_, f64>) -> (f64, f64) {
    let n = points.dim().0 as f64;
    let sums = points.sum_axis(Axis(0));
    (sums[0] / n, sums[1] / n)
}

/// Adaptive low-pass smoothing: a first-order filter whose cutoff rises
/// with the (smoothed) signal speed, so slow jitter is damped hard while
/// fast deliberate motion passes through. Applied independently to each of
/// the 138 coordinate channels; the first frame passes through unchanged.
pub fn one_euro_filter(
    seq: &LandmarkSequence,
    min_cutoff: f64,
    beta: f64,
    d_cutoff: f64,
) -> Result<LandmarkSequence> {
    seq.validate()?;
    if !(min_cutoff > 0.0) || !(d_cutoff > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "one-euro cutoffs must be positive (min_cutoff={min_cutoff}, d_cutoff={d_cutoff})"
        )));
    }
    if beta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "one-euro beta must be non-negative, got {beta}"
        )));
    }
    let dt = 1.0 / seq.fps;
    let alpha = |cutoff: f64| {
        let tau = 1.0 / (2.0 * std::f64::consts::PI * cutoff);
        1.0 / (1.0 + tau / dt)
    };
    let alpha_d = alpha(d_cutoff);
    let (t, v, m) = seq.coords.dim();
    let mut out = seq.coords.clone();
    for vi in 0..v {
        for mi in 0..m {
            let mut x_hat = seq.coords[[0, vi, mi]];
            let mut dx_hat = 0.0;
            for ti in 1..t {
                let x = seq.coords[[ti, vi, mi]];
                let dx = (x - x_hat) / dt;
                dx_hat = alpha_d * dx + (1.0 - alpha_d) * dx_hat;
                let a = alpha(min_cutoff + beta * dx_hat.abs());
                x_hat = a * x + (1.0 - a) * x_hat;
                out[[ti, vi, mi]] = x_hat;
            }
        }
    }
    Ok(seq.with_coords(out, seq.fps))
}

/// Pick `n` frames at indices `round(i·(T−1)/(n−1))` — no interpolation,
/// first and last frames always kept (for n ≥ 2). A single-frame target
/// picks frame 0; a single-frame source repeats it.
pub fn resample_uniform(seq: &LandmarkSequence, n: usize) -> Result<LandmarkSequence> {
    seq.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter(
            "cannot resample to zero frames".into(),
        ));
    }
    let t = seq.frames();
    let mut out = Array3::zeros((n, LANDMARK_COUNT, 2));
    for i in 0..n {
        let src = if n == 1 {
            0
        } else {
            ((i as f64) * ((t - 1) as f64) / ((n - 1) as f64)).round() as usize
        };
        out.slice_mut(s![i, .., ..]).assign(&seq.coords.slice(s![src, .., ..]));
    }
    // Same clip duration, new frame count.
    let fps = seq.fps * n as f64 / t as f64;
    Ok(seq.with_coords(out, fps))
}

/// Map one frame into the unit square: translate the bounding box to the
/// origin, subtract half the box extents, divide by the box diagonal, and
/// recenter at (0.5, 0.5). The output's bounding-box diagonal is exactly 1,
/// and the result is invariant to translation and uniform scaling of the
/// input.
pub fn normalize_bbox(frame: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (k, m) = frame.dim();
    if m != 2 || k == 0 {
        return Err(Error::ShapeMismatch(format!(
            "bounding-box normalization expects (k, 2) coordinates, got ({k}, {m})"
        )));
    }
    let (mut min_u, mut max_u) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_v, mut max_v) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in frame.outer_iter() {
        min_u = min_u.min(p[0]);
        max_u = max_u.max(p[0]);
        min_v = min_v.min(p[1]);
        max_v = max_v.max(p[1]);
    }
    let (du, dv) = (max_u - min_u, max_v - min_v);
    let diag = (du * du + dv * dv).sqrt();
    if !(diag > 0.0) || !diag.is_finite() {
        return Err(Error::DegenerateInput(
            "frame bounding box has zero extent; cannot normalize".into(),
        ));
    }
    let mut out = frame.to_owned();
    for mut p in out.outer_iter_mut() {
        p[0] = (p[0] - min_u - du / 2.0) / diag + 0.5;
        p[1] = (p[1] - min_v - dv / 2.0) / diag + 0.5;
    }
    Ok(out)
}

/// Bounding-box normalization of every frame.
pub fn normalize_sequence(seq: &LandmarkSequence) -> Result<LandmarkSequence> {
    seq.validate()?;
    let mut coords = seq.coords.clone();
    for ti in 0..seq.frames() {
        let frame = normalize_bbox(seq.coords.index_axis(Axis(0), ti))?;
        coords.index_axis_mut(Axis(0), ti).assign(&frame);
    }
    Ok(seq.with_coords(coords, seq.fps))
}

/// The whole conditioning pipeline: frontalize, smooth (default one-euro
/// parameters), resample to `n_frames`, normalize. Flagged frames are
/// reported but kept.
pub fn condition(seq: &LandmarkSequence, n_frames: usize) -> Result<FrontalizeOutcome> {
    let front = frontalize(seq)?;
    let smoothed = one_euro_filter(
        &front.seq,
        ONE_EURO_MIN_CUTOFF,
        ONE_EURO_BETA,
        ONE_EURO_D_CUTOFF,
    )?;
    let resampled = resample_uniform(&smoothed, n_frames)?;
    let normalized = normalize_sequence(&resampled)?;
    Ok(FrontalizeOutcome {
        seq: normalized,
        flagged_frames: front.flagged_frames,
    })
}

/// Deterministic sentiment-labeled synthetic data.
///
/// Each sample animates the canonical template with a handful of smooth,
/// seeded sinusoidal displacement fields, plus a sentiment-specific offset
/// regime, then normalizes every frame. Sentiments rotate joy → sadness →
/// anger. The manifest points at `landmarks/{sample_id}.json` relative to a
/// dataset root; [`write_dataset`] materializes the files.
pub fn generate_synthetic_dataset(
    n_samples: usize,
    seed: u64,
) -> Result<(DatasetManifest, Vec<LandmarkSequence>)> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter(
            "synthetic datasets need at least one sample".into(),
        ));
    }
    let template = canonical_template();
    let sentiments = ["joy", "sadness", "anger"];
    let texts: [&[&str]; 3] = [
        &[
            "What wonderful news you bring today",
            "I am so happy to see you again",
            "This celebration fills everyone with delight",
        ],
        &[
            "I am sorry for the loss you suffered",
            "The farewell left everyone quiet and heavy",
            "Nothing feels right since the sad news came",
        ],
        &[
            "Stop ignoring the warnings I gave you",
            "This broken promise makes me furious",
            "How dare they dismiss the complaint again",
        ],
    ];
    // Mouth corners, upper lids, inner brows — the vertices each regime
    // displaces on top of the shared ambient motion.
    const MOUTH_CORNERS: [usize; 2] = [48, 54];
    const UPPER_LIDS: [usize; 4] = [37, 38, 43, 44];
    const INNER_BROWS: [usize; 2] = [21, 22];
    let mut manifest = DatasetManifest::default();
    let mut sequences = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let sentiment = sentiments[i % 3];
        let text_pool = texts[i % 3];
        let text = text_pool[rng.random_range(0..text_pool.len())].to_string();
        let sample_id = format!("synth-{seed:04}-{i:03}");
        // Shared ambient motion: three global sinusoidal fields with random
        // per-vertex spatial weighting.
        let fields: Vec<(f64, f64, f64, Array2<f64>)> = (0..3)
            .map(|_| {
                let cycles = rng.random_range(1..4) as f64;
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let amp = rng.random_range(0.004..0.012);
                let weights =
                    Array2::from_shape_fn((LANDMARK_COUNT, 2), |_| rng.random_range(0.2..1.0));
                (cycles, phase, amp, weights)
            })
            .collect();
        // Sentiment regime magnitude, seeded but bounded away from zero.
        let regime = rng.random_range(0.015..0.025);
        let wobble = rng.random_range(0.5..1.5);
        let mut coords = Array3::zeros((FRAME_COUNT, LANDMARK_COUNT, 2));
        for t in 0..FRAME_COUNT {
            let phase_t = t as f64 / FRAME_COUNT as f64;
            let mut frame = template.clone();
            for (cycles, phase, amp, weights) in &fields {
                let osc = (std::f64::consts::TAU * cycles * phase_t + phase).sin();
                frame
                    .iter_mut()
                    .zip(weights.iter())
                    .for_each(|(c, w)| *c += amp * w * osc);
            }
            // Expression envelope: rises and falls once over the clip.
            let envelope =
                0.5 + 0.5 * (std::f64::consts::TAU * wobble * phase_t).sin().powi(2);
            let shift = regime * envelope;
            match sentiment {
                "joy" => {
                    for v in MOUTH_CORNERS {
                        frame[[v, 1]] -= shift; // corners up (v grows downward)
                    }
                }
                "sadness" => {
                    for v in MOUTH_CORNERS {
                        frame[[v, 1]] += shift;
                    }
                    for v in UPPER_LIDS {
                        frame[[v, 1]] += 0.5 * shift; // lids droop
                    }
                }
                _ => {
                    for v in INNER_BROWS {
                        frame[[v, 1]] += shift; // inner brows pulled down
                    }
                }
            }
            let normalized = normalize_bbox(frame.view())?;
            coords.index_axis_mut(Axis(0), t).assign(&normalized);
        }
        manifest.records.push(ManifestRecord {
            sample_id: sample_id.clone(),
            speaker_id: "synthetic-01".to_string(),
            text: text.clone(),
            sentiment: Some(sentiment.to_string()),
            landmarks: format!("landmarks/{sample_id}.json"),
            split: Split::Train,
        });
        sequences.push(LandmarkSequence {
            coords,
            fps: 25.0,
            sample_id,
            speaker_id: "synthetic-01".to_string(),
            text,
            sentiment_label: Some(sentiment.to_string()),
        });
    }
    Ok((manifest, sequences))
}

/// Materialize a dataset under `root`: landmark files at the paths the
/// manifest records name, then the manifest itself at `root/manifest.jsonl`.
/// Returns the manifest path.
pub fn write_dataset(
    root: &Path,
    manifest: &DatasetManifest,
    sequences: &[LandmarkSequence],
) -> Result<PathBuf> {
    if manifest.records.len() != sequences.len() {
        return Err(Error::InvalidParameter(format!(
            "manifest lists {} records but {} sequences were supplied",
            manifest.records.len(),
            sequences.len()
        )));
    }
    for (record, seq) in manifest.records.iter().zip(sequences) {
        if record.sample_id != seq.sample_id {
            return Err(Error::InvalidParameter(format!(
                "manifest order diverges from sequences at '{}' vs '{}'",
                record.sample_id, seq.sample_id
            )));
        }
        let path = root.join(&record.landmarks);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        write_landmarks(&path, seq)?;
    }
    let manifest_path = root.join("manifest.jsonl");
    manifest.save(&manifest_path)?;
    Ok(manifest_path)
}

/// Load every record of one split, reading each landmark file.
pub fn load_split(manifest_path: &Path, tag: Split) -> Result<Vec<LandmarkSequence>> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .split(tag)
        .into_iter()
        .map(|r| read_landmarks(&base.join(&r.landmarks)))
        .collect()
}
