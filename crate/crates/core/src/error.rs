use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Samples arrived out of order.
    #[error("stream error: timestamp {t} does not follow {prev}")]
    Stream { prev: f64, t: f64 },

    /// Two consecutive samples are too far apart to integrate across.
    #[error("gap error: {dt} s between samples exceeds {max} s")]
    Gap { dt: f64, max: f64 },

    /// Field evaluation too close to the dipole source.
    #[error("proximity error: {distance_mm} mm from magnet is inside the {guard_mm} mm guard")]
    Proximity { distance_mm: f64, guard_mm: f64 },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// A malformed record in a line-oriented or structured input.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
