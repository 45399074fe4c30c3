//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dipole spec: {0}")]
    InvalidSpec(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error(
        "time quadrature not converged at k={k}, cos_theta={cos_theta}, t={t}: \
         refinement difference {diff:e} exceeds {allowed:e}"
    )]
    QuadratureNotConverged {
        k: f64,
        cos_theta: f64,
        t: f64,
        diff: f64,
        allowed: f64,
    },

    #[error("aliasing risk at |R|={r}: {detail}")]
    AliasingRisk { r: f64, detail: String },

    #[error("field point lies {distance:e} from a charge (minimum {min:e})")]
    SingularPoint { distance: f64, min: f64 },

    #[error("unsupported configuration: {0}")]
    UnsupportedConfig(String),

    #[error("charge speed bound {speed} reaches c = {c}")]
    SuperluminalSpec { speed: f64, c: f64 },

    #[error("ladder dimension {dim} is below 2")]
    DimensionTooSmall { dim: usize },

    #[error("t = {t} is not after emission end t1 = {t_stop}")]
    PreEmissionTime { t: f64, t_stop: f64 },

    #[error("theta bin {bin} holds no quadrature nodes")]
    EmptyBin { bin: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
