use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid group partition: {0}")]
    Partition(String),

    #[error("invalid dictionary: {0}")]
    Dictionary(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("enumeration of {needed} subsets exceeds the cap of {cap}")]
    EnumerationCap { needed: u128, cap: u128 },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
