use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    Lattice(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error(
        "initial data violates the simplex constraint at x = {x}, type {channel}: sum = {sum}"
    )]
    Simplex { x: f64, channel: usize, sum: f64 },

    #[error("rate A[{channel}]({from}->{to}) is {value} at v = {v}")]
    NegativeRate {
        channel: usize,
        from: usize,
        to: usize,
        v: f64,
        value: f64,
    },

    #[error("rate bound is not finite over [{v_min}, {v_max}] for channel type {channel}")]
    UnboundedRate {
        channel: usize,
        v_min: f64,
        v_max: f64,
    },

    #[error(
        "thinning probability {probability} > 1 at t = {t}, compartment {compartment}, channel type {channel} (v = {v})"
    )]
    BoundViolation {
        t: f64,
        compartment: usize,
        channel: usize,
        v: f64,
        probability: f64,
    },

    #[error("integration produced a non-finite voltage at t = {t}")]
    NonFinite { t: f64 },

    #[error(
        "mean-field occupancy left the simplex at t = {t} (deviation {deviation:e}); reduce dt"
    )]
    SimplexDrift { t: f64, deviation: f64 },

    #[error("oracle step dt = {dt} too large: max exit rate * dt = {product} > 0.1")]
    OracleStep { dt: f64, product: f64 },

    #[error("corrector right-hand side does not sum to zero (slice {slice}: {sum:e})")]
    Inconsistent { slice: usize, sum: f64 },

    #[error("window size {0} must be odd")]
    EvenWindow(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
