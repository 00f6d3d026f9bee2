use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate aperture: at least 2 antennas are required, got {0}")]
    DegenerateAperture(usize),
    #[error("invalid array parameter: {0}")]
    InvalidArray(String),
    #[error("invalid range {0} m: range must be positive and finite")]
    InvalidRange(f64),
    #[error("invalid location (range {range} m, angle {angle}): need range > 0 and |angle| < 1")]
    InvalidLocation { range: f64, angle: f64 },
    #[error("invalid beamspace coordinate: {0}")]
    InvalidCoordinate(String),
    #[error("shape mismatch: expected {expected} elements, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("resolution error: {angles} angle samples cannot resolve {antennas} antennas")]
    Resolution { angles: usize, antennas: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("span too narrow: {0}")]
    SpanTooNarrow(String),
    #[error("rank deficient fit: {0}")]
    Rank(String),
    #[error("empty contour: level {level} is not below the peak {peak}")]
    EmptyContour { level: f64, peak: f64 },
    #[error("outside validity range: {0}")]
    Validity(String),
    #[error("stencil error: centre gain is not the stencil maximum")]
    Stencil,
    #[error("numeric domain error: {0}")]
    NumericDomain(String),
    #[error("over-resolved codebook: {coarse} coarse beams for {antennas} antennas")]
    OverResolved { coarse: usize, antennas: usize },
    #[error("duplicate atom: grid cell ({row}, {col}) selected twice")]
    DuplicateAtom { row: usize, col: usize },
    #[error("undefined reference: reference channel has zero norm")]
    UndefinedReference,
    #[error("tracking lost at slot {slot}")]
    TrackingLost { slot: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
