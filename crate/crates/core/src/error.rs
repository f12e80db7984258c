use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate expression: {0}")]
    Degenerate(&'static str),

    #[error("parameter exponent {exponent} for p{index} is outside +/-300")]
    Overflow { index: usize, exponent: f64 },

    #[error("model produced a non-physical reflection magnitude {0}")]
    NonPhysical(f64),

    #[error("normal equations are singular even at maximum damping")]
    Singular,

    #[error("residual evaluation failed: {0}")]
    Evaluation(String),

    #[error("band {band} has {samples} samples but {params} parameters")]
    UnderDetermined { band: usize, samples: usize, params: usize },

    #[error("only {converged} band fits usable, at least {required} required")]
    InsufficientBands { converged: usize, required: usize },

    #[error("empty frequency range [{start}, {end}]")]
    EmptyRange { start: f64, end: f64 },

    #[error("frequency grids differ at angle {angle_deg} deg (index {index})")]
    GridMismatch { angle_deg: f64, index: usize },

    #[error("every sample fell below the reference noise floor")]
    AllDropped,

    #[error("unknown material '{name}', valid names: {valid}")]
    UnknownMaterial { name: String, valid: String },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("{path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the input data rather than the solver.
    pub fn is_ingestion(&self) -> bool {
        matches!(
            self,
            Error::GridMismatch { .. }
                | Error::AllDropped
                | Error::InvalidData(_)
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Empty(_)
                | Error::EmptyRange { .. }
                | Error::UnknownMaterial { .. }
        )
    }
}
