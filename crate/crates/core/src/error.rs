use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("no silhouette: carving removed every voxel")]
    NoSilhouette,
    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("no visible texels")]
    NoVisibleTexels,
    #[error("atlas packing overflow at resolution {0}")]
    PackOverflow(usize),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
