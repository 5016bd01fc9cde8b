use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sampling grid too coarse: pulse width {width:e} s needs T_s <= {max_dt:e} s")]
    GridTooCoarse { width: f64, max_dt: f64 },

    #[error("invalid frame configuration: {0}")]
    InvalidFrame(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("delay {delay:e} s outside frame [0, {frame:e})")]
    DelayOutOfFrame { delay: f64, frame: f64 },

    #[error("sample grid mismatch: {left:e} s vs {right:e} s")]
    GridMismatch { left: f64, right: f64 },

    #[error("profile length {profile} does not match window length {window}")]
    ProfileMismatch { profile: usize, window: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("covariance is not positive semi-definite")]
    NotPsd,

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("channel file line {line}: {msg}")]
    ChannelFile { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
