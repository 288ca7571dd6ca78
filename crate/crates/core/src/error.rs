use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("meshes do not share connectivity: {0}")]
    ConnectivityMismatch(String),

    #[error("cannot fit {requested} modes from {meshes} meshes (at most {max} independent directions)")]
    TooManyModes {
        requested: usize,
        meshes: usize,
        max: usize,
    },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("point at or behind the camera plane (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("sketch contains no stroke pixels")]
    EmptySketch,

    #[error("mask contains no foreground pixels")]
    EmptyMask,

    #[error("mask touches the image border at ({x}, {y})")]
    MaskTouchesBorder { x: usize, y: usize },

    #[error("sketch contour is open: {0}")]
    OpenContour(String),

    #[error("contour pixel ({x}, {y}) is not covered by the mesh")]
    UncoveredContourPixel { x: usize, y: usize },

    #[error("point set is empty: {0}")]
    EmptyPointSet(&'static str),

    #[error("no mesh contour lies within {radius} px of the stroke")]
    NoContourNearStroke { radius: f64 },

    #[error("mesh has zero surface area")]
    ZeroArea,

    #[error("the two renders share no covered pixel")]
    NoJointCoverage,

    #[error("empty shape list")]
    EmptyShapeList,

    #[error("image size mismatch: {0}")]
    ImageSize(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
