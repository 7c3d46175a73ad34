//! Error type shared across the crate.
//!
//! Numerical blow-ups name the offending particle so a diverging run points
//! at data instead of at a generic NaN panic somewhere downstream.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SphError {
    /// A particle position stopped being finite (NaN/inf), usually the first
    /// visible symptom of a diverging integration.
    #[error("non-finite position for particle {index} at step {step}")]
    NonFinitePosition { index: usize, step: u64 },

    /// A computed density stopped being finite.
    #[error("non-finite density for particle {index} at step {step}")]
    NonFiniteDensity { index: usize, step: u64 },

    /// A neighbor query was issued against a grid built for an older
    /// arrangement of the particles.
    #[error("neighbor grid is stale: built for generation {built}, particles are at {current}")]
    StaleGrid { built: u64, current: u64 },

    /// Positions handed to the neighbor grid must be finite.
    #[error("non-finite position for particle {index} handed to neighbor grid")]
    NonFiniteGridInput { index: usize },

    /// Statistics over an empty particle population are undefined.
    #[error("diagnostic '{what}' requested over an empty population")]
    EmptyPopulation { what: &'static str },

    /// Configuration file problems, with 1-based line number where known.
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    /// Configuration value out of its documented range.
    #[error("invalid config value for '{key}': {message}")]
    InvalidValue { key: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SphError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SphError::Io { path: path.into(), source }
    }
}
