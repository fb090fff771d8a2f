use std::io;
use std::path::PathBuf;

use crate::coincidence::CoincidenceFit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("empty histogram: {0}")]
    EmptyHistogram(&'static str),

    #[error("no coincidence peak: best coarse bin holds {peak} counts over a background of {background:.3} counts/bin")]
    NoPeak { peak: u32, background: f64 },

    #[error("peak fit did not converge after {iterations} iterations")]
    FitNotConverged {
        iterations: usize,
        /// Moment-based estimate of the same peak.
        fallback: Box<CoincidenceFit>,
    },

    #[error("directional series are misaligned at epochs {epochs:?}")]
    Alignment { epochs: Vec<u64> },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: malformed tag file: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
