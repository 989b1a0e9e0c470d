use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    InvalidParams(String),

    #[error("track generation failed after {attempts} attempts")]
    GenerationFailed { attempts: u32 },

    #[error("invalid discrete action {0} (expected 0..=4)")]
    InvalidAction(usize),

    #[error("episode already finished; call reset first")]
    EpisodeFinished,

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("activation cache does not match the current parameters")]
    StaleCache,

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("unsupported format version {found} (reader supports up to {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("corrupt or truncated data: {0}")]
    CorruptLength(String),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("replay buffer holds {size} transitions, cannot sample {requested}")]
    UnderfullBuffer { size: usize, requested: usize },

    #[error("policy mode does not match action kind")]
    ModeMismatch,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("config digest mismatch: checkpoint {checkpoint}, config {config}")]
    DigestMismatch { checkpoint: String, config: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
