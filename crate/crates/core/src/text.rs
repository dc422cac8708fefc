//! Sentence features: semantic and sentiment embeddings of input text.
//!
//! The sampling network conditions on two 768-dimensional sentence
//! embeddings — one capturing what a sentence says, one capturing how it
//! feels. Real deployments obtain both from pretrained language models
//! served behind a local inference endpoint; this module owns the seam.
//! [`Backend`] is the pluggable interface, [`HttpBackend`] the external
//! client (30-second timeout, three retries with exponential backoff), and
//! [`StubBackend`] a fully offline, deterministic stand-in that hashes text
//! into embeddings and classifies sentiment with a keyword table over three
//! exactly-orthogonal prototype directions. Every test in the workspace
//! runs against the stub.
//!
//! Because embedding calls are referentially transparent per
//! `(backend id, text)`, results can be memoized on disk: [`FeatureCache`]
//! stores little-endian `f32` records under content-hash file names, and
//! quantizes backend output through `f32` *before* first use so a cache hit
//! is bit-identical to the miss that created it.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Duration;

use byteorder::{ByteOrder, LittleEndian};
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};

/// Dimension of each sentence embedding.
pub const EMBED_DIM: usize = 768;

/// Magic-plus-version prefix of on-disk feature cache records.
pub const CACHE_MAGIC: &[u8; 8] = b"SFEMB001";

/// The sentiment vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Joy,
    Sadness,
    Anger,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Joy, Sentiment::Sadness, Sentiment::Anger];

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Joy => "joy",
            Sentiment::Sadness => "sadness",
            Sentiment::Anger => "anger",
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            Sentiment::Joy => 0,
            Sentiment::Sadness => 1,
            Sentiment::Anger => 2,
        }
    }

    fn from_byte(b: u8) -> Option<Sentiment> {
        Sentiment::ALL.into_iter().find(|s| s.to_byte() == b)
    }
}

impl std::str::FromStr for Sentiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Sentiment> {
        Sentiment::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown sentiment '{s}' (expected joy, sadness, or anger)"
                ))
            })
    }
}

impl std::fmt::Display for Sentiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The embedding pair for one sentence.
#[derive(Debug, Clone)]
pub struct SentenceFeatures {
    pub semantic: Array1<f64>,
    pub sentiment: Array1<f64>,
    pub sentiment_label: Option<Sentiment>,
    pub source_text: String,
}

impl SentenceFeatures {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("semantic", &self.semantic), ("sentiment", &self.sentiment)] {
            if v.len() != EMBED_DIM {
                return Err(Error::ShapeMismatch(format!(
                    "{name} embedding has dimension {}, expected {EMBED_DIM}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::DegenerateInput(format!(
                    "{name} embedding contains non-finite entries"
                )));
            }
        }
        Ok(())
    }

    /// Semantic then sentiment, concatenated — the sampler's input layout.
    pub fn concatenated(&self) -> Array1<f64> {
        let mut out = Array1::zeros(2 * EMBED_DIM);
        out.slice_mut(ndarray::s![..EMBED_DIM]).assign(&self.semantic);
        out.slice_mut(ndarray::s![EMBED_DIM..]).assign(&self.sentiment);
        out
    }
}

/// A sentence-embedding provider. Implementations must be referentially
/// transparent: the same `(id, text)` pair always yields the same vectors.
pub trait Backend: Send + Sync {
    /// Stable identity used as the cache key component.
    fn id(&self) -> String;

    /// The semantic sentence embedding.
    fn semantic(&self, text: &str) -> Result<Array1<f64>>;

    /// The sentiment embedding plus the predicted label.
    fn sentiment(&self, text: &str) -> Result<(Array1<f64>, Sentiment)>;

    /// The pure embedding of one sentiment class, used to force a label at
    /// inference time.
    fn sentiment_prototype(&self, label: Sentiment) -> Result<Array1<f64>>;
}

fn check_vector(kind: &str, v: Array1<f64>) -> Result<Array1<f64>> {
    if v.len() != EMBED_DIM {
        return Err(Error::ShapeMismatch(format!(
            "backend returned a {kind} vector of dimension {}, expected {EMBED_DIM}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateInput(format!(
            "backend returned a {kind} vector with non-finite entries"
        )));
    }
    Ok(v)
}

fn check_text(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        return Err(Error::InvalidParameter(
            "cannot embed an empty sentence".into(),
        ));
    }
    Ok(())
}

/// Dimension- and finiteness-checked semantic embedding.
pub fn extract_semantic(text: &str, backend: &dyn Backend) -> Result<Array1<f64>> {
    check_text(text)?;
    check_vector("semantic", backend.semantic(text)?)
}

/// Dimension- and finiteness-checked sentiment embedding with its label.
pub fn extract_sentiment(text: &str, backend: &dyn Backend) -> Result<(Array1<f64>, Sentiment)> {
    check_text(text)?;
    let (v, label) = backend.sentiment(text)?;
    Ok((check_vector("sentiment", v)?, label))
}

/// Both embeddings of one sentence.
pub fn extract_features(text: &str, backend: &dyn Backend) -> Result<SentenceFeatures> {
    let semantic = extract_semantic(text, backend)?;
    let (sentiment, label) = extract_sentiment(text, backend)?;
    Ok(SentenceFeatures {
        semantic,
        sentiment,
        sentiment_label: Some(label),
        source_text: text.to_string(),
    })
}

/// Word-prefix stems that vote for each sentiment class.
const KEYWORDS: [(&[&str], Sentiment); 3] = [
    (
        &["happ", "joy", "wonderful", "delight", "celebrat", "glad", "cheer", "smil", "love"],
        Sentiment::Joy,
    ),
    (
        &["sad", "sorr", "loss", "lost", "grie", "farewell", "mourn", "cry", "tear", "weep"],
        Sentiment::Sadness,
    ),
    (
        &["anger", "angr", "furious", "fury", "rage", "stop", "dare", "complain", "annoy", "hate"],
        Sentiment::Anger,
    ),
];

/// Deterministic offline backend: embeddings are seeded hashes of the text,
/// and sentiment vectors sit near one of three exactly-orthogonal prototype
/// directions chosen by keyword vote.
pub struct StubBackend {
    seed: u64,
    prototypes: [Array1<f64>; 3],
}

/// Build the deterministic stand-in backend for a given seed.
pub fn stub_backend(seed: u64) -> StubBackend {
    // Three Gaussian draws made exactly orthogonal by Gram-Schmidt; in
    // 768 dimensions they start out nearly orthogonal, so the projection
    // subtracts little and cannot degenerate.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70726f746f5f7631); // domain tag
    let mut raw: Vec<Array1<f64>> = (0..3).map(|_| gaussian_vector(&mut rng)).collect();
    for i in 0..3 {
        for j in 0..i {
            let (prev, rest) = raw.split_at_mut(i);
            let proj = rest[0].dot(&prev[j]);
            rest[0].scaled_add(-proj, &prev[j]);
        }
        let norm = raw[i].dot(&raw[i]).sqrt();
        raw[i] /= norm;
    }
    let mut it = raw.into_iter();
    let prototypes = [
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ];
    StubBackend { seed, prototypes }
}

fn gaussian_vector(rng: &mut ChaCha8Rng) -> Array1<f64> {
    use rand::Rng;
    Array1::from_shape_fn(EMBED_DIM, |_| rng.sample(rand_distr::StandardNormal))
}

/// First eight bytes of a domain-separated SHA-256, as an RNG seed.
fn text_seed(seed: u64, domain: &str, text: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(domain.as_bytes());
    h.update([0]);
    h.update(text.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

impl StubBackend {
    /// Keyword vote; ties and empty votes fall back to a text hash so the
    /// label is still deterministic.
    fn keyword_label(&self, text: &str) -> Sentiment {
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphabetic())
            .filter(|w| !w.is_empty())
            .map(|w| w.to_lowercase())
            .collect();
        let mut votes = [0usize; 3];
        for (i, (stems, _)) in KEYWORDS.iter().enumerate() {
            votes[i] = words
                .iter()
                .filter(|w| stems.iter().any(|s| w.starts_with(s)))
                .count();
        }
        let best = *votes.iter().max().expect("three classes");
        if best == 0 {
            let idx = (text_seed(self.seed, "label", text) % 3) as usize;
            return KEYWORDS[idx].1;
        }
        let idx = votes.iter().position(|&v| v == best).expect("max exists");
        KEYWORDS[idx].1
    }
}

impl Backend for StubBackend {
    fn id(&self) -> String {
        format!("stub/{}", self.seed)
    }

    fn semantic(&self, text: &str) -> Result<Array1<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(text_seed(self.seed, "semantic", text));
        let mut v = gaussian_vector(&mut rng);
        let norm = v.dot(&v).sqrt();
        v /= norm;
        Ok(v)
    }

    fn sentiment(&self, text: &str) -> Result<(Array1<f64>, Sentiment)> {
        let label = self.keyword_label(text);
        let mut rng = ChaCha8Rng::seed_from_u64(text_seed(self.seed, "sentiment", text));
        let mut noise = gaussian_vector(&mut rng);
        let norm = noise.dot(&noise).sqrt();
        noise /= norm;
        // Prototype plus a 5% text-dependent offset: different sentences of
        // one class get distinct vectors that still cluster tightly.
        let mut v = self.prototypes[label.to_byte() as usize].clone();
        v.scaled_add(0.05, &noise);
        Ok((v, label))
    }

    fn sentiment_prototype(&self, label: Sentiment) -> Result<Array1<f64>> {
        Ok(self.prototypes[label.to_byte() as usize].clone())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    kind: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
    #[serde(default)]
    label: Option<String>,
}

/// Client for a local inference endpoint speaking a one-shot JSON protocol:
/// `{"kind": "semantic"|"sentiment", "text": …}` in, `{"vector": […],
/// "label": …}` out. Transient failures are retried with exponential
/// backoff before surfacing as transport errors.
pub struct HttpBackend {
    endpoint: String,
    agent: ureq::Agent,
    retries: u32,
    backoff: Duration,
}

impl HttpBackend {
    /// Production policy: 30-second timeout, three retries, backoff
    /// starting at half a second and doubling.
    pub fn new(endpoint: &str) -> HttpBackend {
        HttpBackend::with_policy(
            endpoint,
            Duration::from_secs(30),
            3,
            Duration::from_millis(500),
        )
    }

    pub fn with_policy(
        endpoint: &str,
        timeout: Duration,
        retries: u32,
        backoff: Duration,
    ) -> HttpBackend {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpBackend {
            endpoint: endpoint.to_string(),
            agent,
            retries,
            backoff,
        }
    }

    fn request(&self, kind: &str, text: &str) -> Result<EmbedResponse> {
        let body = serde_json::to_string(&EmbedRequest { kind, text })?;
        let mut wait = self.backoff;
        let mut last_error = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(wait);
                wait *= 2;
            }
            let sent = self
                .agent
                .post(&self.endpoint)
                .header("content-type", "application/json")
                .send(body.as_str());
            match sent {
                Ok(mut response) => {
                    let text = response.body_mut().read_to_string().map_err(|e| {
                        Error::Transport(format!(
                            "embedding endpoint {} sent an unreadable body: {e}",
                            self.endpoint
                        ))
                    })?;
                    return serde_json::from_str(&text).map_err(|e| {
                        Error::Transport(format!(
                            "embedding endpoint {} sent malformed JSON: {e}",
                            self.endpoint
                        ))
                    });
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(Error::Transport(format!(
            "embedding endpoint {} unreachable after {} attempts: {last_error}",
            self.endpoint,
            self.retries + 1
        )))
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http/{}", self.endpoint)
    }

    fn semantic(&self, text: &str) -> Result<Array1<f64>> {
        Ok(Array1::from_vec(self.request("semantic", text)?.vector))
    }

    fn sentiment(&self, text: &str) -> Result<(Array1<f64>, Sentiment)> {
        let response = self.request("sentiment", text)?;
        let label = response
            .label
            .as_deref()
            .ok_or_else(|| {
                Error::Transport(format!(
                    "embedding endpoint {} omitted the sentiment label",
                    self.endpoint
                ))
            })?
            .parse::<Sentiment>()
            .map_err(|e| Error::Transport(format!("embedding endpoint sent {e}")))?;
        Ok((Array1::from_vec(response.vector), label))
    }

    fn sentiment_prototype(&self, label: Sentiment) -> Result<Array1<f64>> {
        // The class name itself is the purest text of that sentiment the
        // protocol can express.
        Ok(Array1::from_vec(
            self.request("sentiment", label.as_str())?.vector,
        ))
    }
}

/// On-disk memo of embedding calls, keyed by content hash of
/// `(kind, backend id, text)`. Records are written atomically; hits and
/// misses return bit-identical vectors because misses are quantized through
/// `f32` before first use.
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: &Path) -> Result<FeatureCache> {
        std::fs::create_dir_all(dir)?;
        Ok(FeatureCache { dir: dir.to_path_buf() })
    }

    fn record_path(&self, kind: &str, backend_id: &str, text: &str) -> PathBuf {
        let mut h = Sha256::new();
        h.update(kind.as_bytes());
        h.update([0]);
        h.update(backend_id.as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        let digest = h.finalize();
        let mut name = String::with_capacity(68);
        for b in digest {
            name.push_str(&format!("{b:02x}"));
        }
        name.push_str(".emb");
        self.dir.join(name)
    }

    /// Memoized semantic embedding.
    pub fn semantic(&self, backend: &dyn Backend, text: &str) -> Result<Array1<f64>> {
        let path = self.record_path("semantic", &backend.id(), text);
        if path.is_file() {
            let (v, _) = read_record(&path, false)?;
            return Ok(v);
        }
        let v = quantize(extract_semantic(text, backend)?);
        write_record(&path, &v, None)?;
        Ok(v)
    }

    /// Memoized sentiment embedding and label.
    pub fn sentiment(&self, backend: &dyn Backend, text: &str) -> Result<(Array1<f64>, Sentiment)> {
        let path = self.record_path("sentiment", &backend.id(), text);
        if path.is_file() {
            let (v, label) = read_record(&path, true)?;
            return Ok((v, label.expect("sentiment records carry a label")));
        }
        let (v, label) = extract_sentiment(text, backend)?;
        let v = quantize(v);
        write_record(&path, &v, Some(label))?;
        Ok((v, label))
    }

    /// Memoized full feature pair.
    pub fn features(&self, backend: &dyn Backend, text: &str) -> Result<SentenceFeatures> {
        let semantic = self.semantic(backend, text)?;
        let (sentiment, label) = self.sentiment(backend, text)?;
        Ok(SentenceFeatures {
            semantic,
            sentiment,
            sentiment_label: Some(label),
            source_text: text.to_string(),
        })
    }
}

/// Round every entry through the cache's storage precision.
fn quantize(v: Array1<f64>) -> Array1<f64> {
    v.mapv(|x| x as f32 as f64)
}

fn write_record(path: &Path, v: &Array1<f64>, label: Option<Sentiment>) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 4 * EMBED_DIM + 1);
    bytes.extend_from_slice(CACHE_MAGIC);
    let mut floats = [0u8; 4 * EMBED_DIM];
    for (i, &x) in v.iter().enumerate() {
        LittleEndian::write_f32(&mut floats[4 * i..4 * i + 4], x as f32);
    }
    bytes.extend_from_slice(&floats);
    if let Some(label) = label {
        bytes.push(label.to_byte());
    }
    write_atomic(path, &bytes)
}

fn read_record(path: &Path, labeled: bool) -> Result<(Array1<f64>, Option<Sentiment>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let expected = 8 + 4 * EMBED_DIM + usize::from(labeled);
    if bytes.len() != expected {
        return Err(Error::CorruptData(format!(
            "feature cache record {} has {} bytes, expected {expected}",
            path.display(),
            bytes.len()
        )));
    }
    if &bytes[..8] != CACHE_MAGIC {
        return Err(Error::CorruptData(format!(
            "feature cache record {} has an unknown magic prefix",
            path.display()
        )));
    }
    let mut v = Array1::zeros(EMBED_DIM);
    for i in 0..EMBED_DIM {
        v[i] = LittleEndian::read_f32(&bytes[8 + 4 * i..12 + 4 * i]) as f64;
    }
    let label = if labeled {
        let b = bytes[8 + 4 * EMBED_DIM];
        Some(Sentiment::from_byte(b).ok_or_else(|| {
            Error::CorruptData(format!(
                "feature cache record {} carries unknown sentiment tag {b}",
                path.display()
            ))
        })?)
    } else {
        None
    };
    Ok((v, label))
}
