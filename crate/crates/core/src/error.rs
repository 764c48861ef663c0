use std::path::PathBuf;

/// Errors produced by every stage of the simulation and evaluation chain.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in band `{band}`: {msg}")]
    Format { band: String, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("noise model error: {0}")]
    Noise(String),

    #[error("weight file error: {0}")]
    WeightFile(String),

    #[error("missing band `{0}`")]
    MissingBand(String),

    #[error("invalid input data: {0}")]
    Data(String),

    #[error("unknown class ids in detections: {0:?}")]
    UnknownClasses(Vec<u32>),

    #[error("stage `{stage}` failed on `{band}`: {source}")]
    Stage {
        stage: String,
        band: String,
        #[source]
        source: Box<Error>,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &str, band: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            band: band.to_string(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by user configuration rather than data content.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
