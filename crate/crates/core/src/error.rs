use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("wavepacket width {sigma} is under-resolved by grid spacing {dz} (need sigma >= 4 dz)")]
    UnderResolved { sigma: f64, dz: f64 },

    #[error("states live on different grids")]
    GridMismatch,

    #[error("state is not normalized (norm = {norm})")]
    Unnormalized { norm: f64 },

    #[error("edge density {fraction:.3e} exceeds limit {limit:.1e}; periodic wrap-around would corrupt the run")]
    EdgeViolation { fraction: f64, limit: f64 },

    #[error("norm drifted by {drift:.3e} during the run")]
    NormDrift { drift: f64 },

    #[error("time step too coarse: rabi phase per step {phase:.3e} rad exceeds 0.1 rad")]
    StepTooCoarse { phase: f64 },

    #[error("resolution kernel spans {kernel_bins} bins but the distribution only has {bins}")]
    KernelTooWide { kernel_bins: usize, bins: usize },

    #[error("{0}")]
    Unsupported(String),
}
