//! Crate-wide error type.
//!
//! Every fallible operation in the library returns [`Error`]. The variants
//! are grouped by how a caller should react: configuration and input-contract
//! problems (fix your arguments), numerical failures (the math broke down),
//! version/compatibility refusals (artifacts from an incompatible build), and
//! transport failures (a remote embedding backend misbehaved). The CLI maps
//! these groups onto process exit codes.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its documented domain
    /// (e.g. `k >= point count` for k-NN, zero interpolation steps).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Tensor or sequence dimensions do not match the operation's contract.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A vertex / sample / frame index is out of range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Input is degenerate for the requested operation (zero-norm latent,
    /// zero-extent bounding box, collinear anchor landmarks, antipodal
    /// interpolation endpoints, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The computation produced non-finite values or an eigensolve /
    /// square-root step failed beyond recoverable tolerance.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// An artifact (topology file, checkpoint) carries a version or
    /// compatibility stamp this build refuses to load.
    #[error("version mismatch: {0}")]
    VersionMismatch(String),

    /// Two artifacts that must belong together do not (e.g. a sampler
    /// checkpoint paired with a decoder checkpoint it was not trained
    /// against).
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    /// Configuration file problems: unknown keys, missing sections,
    /// unparseable values.
    #[error("config error: {0}")]
    Config(String),

    /// A required input file or artifact is missing.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    /// The remote embedding backend could not be reached or kept answering
    /// with garbage after the retry budget was exhausted.
    #[error("backend transport failure: {0}")]
    Transport(String),

    /// Malformed on-disk data (manifest lines, landmark files, cache
    /// records) that is syntactically broken rather than merely outdated.
    #[error("corrupt data: {0}")]
    CorruptData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Process exit code groups used by the CLI.
///
/// * `1` — user / configuration errors
/// * `2` — numerical failures
/// * `3` — backend transport failures
impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::Config(_)
            | Error::MissingArtifact(_)
            | Error::VersionMismatch(_)
            | Error::ArtifactMismatch(_)
            | Error::CorruptData(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::IndexOutOfRange(_) => 1,
            Error::ShapeMismatch(_)
            | Error::DegenerateInput(_)
            | Error::NumericalFailure(_) => 2,
            Error::Transport(_) => 3,
        }
    }
}
