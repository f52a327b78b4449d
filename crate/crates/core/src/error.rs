use thiserror::Error;

/// Errors raised by the layout library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera model: {0}")]
    Camera(String),

    #[error("invariant violated at column {column}: {what}")]
    Column { column: usize, what: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("length mismatch in {context}: expected {expected}, got {actual}")]
    Length {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("pixel ({col}, {row}) outside the {width}x{height} panorama")]
    PixelOutOfRange {
        col: f64,
        row: f64,
        width: usize,
        height: usize,
    },

    #[error("row {row} is not below the horizon (latitude {v} rad)")]
    AboveHorizon { row: f64, v: f64 },

    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{0}")]
    Domain(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64, trace: Vec<f64> },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape {
            op,
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
