use std::path::PathBuf;

/// Errors produced anywhere in the score-to-audio pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed MIDI at byte offset {offset}: {reason}")]
    MidiParse { offset: usize, reason: String },

    #[error("value {value} does not fit in a MIDI variable-length quantity")]
    VlqOverflow { value: u64 },

    #[error("note {index} has pitch {pitch}, outside the piano range 21-108")]
    PianoRange { index: usize, pitch: u8 },

    #[error("special token {token} found at position {position} in the {feature} stream")]
    SpecialToken {
        feature: &'static str,
        position: usize,
        token: u32,
    },

    #[error("token streams have mismatched lengths: {0}")]
    LengthMismatch(String),

    #[error("{feature} token {token} at position {position} exceeds vocabulary size {vocab}")]
    TokenOutOfRange {
        feature: &'static str,
        position: usize,
        token: u32,
        vocab: usize,
    },

    #[error("performer id {id} out of range (model has {count} performers)")]
    PerformerOutOfRange { id: usize, count: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("segment has no non-pad positions")]
    EmptySegment,

    #[error("initial loss for task {task} is zero; cannot form training-rate ratios")]
    ZeroInitialLoss { task: usize },

    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("empty feature sequence")]
    EmptySequence,

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("no overlapping frames to compare")]
    NoOverlap,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error("no prediction matched a target file ({} unmatched)", unmatched.len())]
    EmptyEvaluation { unmatched: Vec<String> },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    /// Process exit status for the command-line tool: 1 for usage problems,
    /// 3 when an evaluation matched nothing, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::EmptyEvaluation { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
