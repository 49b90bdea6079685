use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("point {index} has a non-finite coordinate")]
    NonFinitePoint { index: usize },

    #[error("{colors} colors supplied for {points} points")]
    ColorLengthMismatch { points: usize, colors: usize },

    #[error("{labels} labels supplied for {points} points")]
    LabelLengthMismatch { points: usize, labels: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("every sampled point triple was collinear")]
    AllSamplesCollinear,

    #[error("best plane has {inliers} inliers, below the required {required}")]
    InsufficientInliers { inliers: usize, required: usize },

    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),

    #[error("no correspondences within the rejection radius at iteration {iteration}")]
    NoCorrespondences { iteration: usize },

    #[error("unknown defect target: {0}")]
    UnknownTarget(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
