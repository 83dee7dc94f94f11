//! Error classification: configuration (exit 2), data (exit 3), numerical
//! domain (exit 4).

use std::fmt;

use cp2d_core::corpus::CorpusError;
use cp2d_core::pdmodel::{PdError, StoreError};
use cp2d_core::special::DomainError;
use cp2d_core::tokenizer::TokenizeError;
use cp2d_core::tuner::TunerError;
use cp2d_core::umtsim::SimError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Numeric(m) => write!(f, "numerical domain: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::BadFoldCount(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TokenizeError> for CliError {
    fn from(e: TokenizeError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PdError> for CliError {
    fn from(e: PdError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<DomainError> for CliError {
    fn from(e: DomainError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NegativeWeight => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TunerError> for CliError {
    fn from(e: TunerError) -> Self {
        match e {
            TunerError::Tokenize(inner) => inner.into(),
            TunerError::Corpus(inner) => inner.into(),
            TunerError::Base(inner) => inner.into(),
            TunerError::BadDelta(_) | TunerError::EmptyGrid => CliError::Config(e.to_string()),
            TunerError::NoDocs | TunerError::TooFewDocs(..) => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
