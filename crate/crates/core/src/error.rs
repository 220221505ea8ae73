use thiserror::Error;

/// Errors raised by the trial engine and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("acquisition error: {0}")]
    Acquisition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("test error: {0}")]
    Test(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("trial error: {0}")]
    Trial(String),

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
