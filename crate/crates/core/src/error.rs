use thiserror::Error;

/// Errors raised across the crate.
///
/// Numerical failures (series divergence, unreachable densities, CFL) are kept
/// apart from configuration and I/O failures so the CLI can map them onto
/// distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("partition function diverges at fugacity {phi} (radius of convergence {radius})")]
    DivergentPartition { phi: f64, radius: f64 },

    #[error("density {rho} exceeds the critical density {critical} at u = {u:?}")]
    DensityUnreachable { rho: f64, critical: f64, u: Vec<f64> },

    #[error("canonical enumeration too large: {sites} sites, {particles} particles (caps {max_sites}/{max_particles})")]
    EnumerationTooLarge {
        sites: usize,
        particles: u32,
        max_sites: usize,
        max_particles: u32,
    },

    #[error("rate p = {value} at site {site} lies outside [{a}, {b}]")]
    RateOutOfBounds { site: usize, value: f64, a: f64, b: f64 },

    #[error("invalid rate function: {0}")]
    InvalidRate(String),

    #[error("process is frozen: total exit rate is zero")]
    Frozen,

    #[error("timestep too large: dt * max exit rate = {product} > {limit}")]
    TimestepTooLarge { product: f64, limit: f64 },

    #[error("CFL violated: dt = {dt} exceeds stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("negative density {value} at cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("malformed grid file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that stem from numerics rather than input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DivergentPartition { .. }
                | Error::DensityUnreachable { .. }
                | Error::EnumerationTooLarge { .. }
                | Error::Frozen
                | Error::TimestepTooLarge { .. }
                | Error::CflViolation { .. }
                | Error::NegativeDensity { .. }
                | Error::GridMismatch(_)
        )
    }

    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::InvalidRate(_)
                | Error::RateOutOfBounds { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
