//! Near-field beamspace processing for extremely large uniform linear arrays.
//!
//! Antenna-space vectors are mapped to a two-dimensional beamspace indexed by
//! angle (direction sine) and surrogate distance (the quadratic phase
//! coefficient of the Fresnel steering model) using a chirp-basis fractional
//! Fourier transform. On top of the transform the crate provides
//! high/low-mainlobe analytics, beam training and tracking procedures, and
//! sparse channel estimation.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64` / `*32`
//! aliases below name the common instantiations.

pub mod array;
pub mod beamspace;
pub mod error;
pub mod estimation;
pub mod mainlobe;
pub mod output;
pub mod procedures;
pub mod scalar;

pub use num_complex::Complex;

pub use array::{ArrayConfig, FieldBoundaries, Region, SourceLocation, SteeringKind, SteeringVector};
pub use beamspace::{
    beamspace_direct, beamspace_fast, focus_kernel, frft_basis, synthesize, BeamspaceAtom, BeamspaceGrid,
    BeamspaceMap,
};
pub use error::{Error, Result};
pub use estimation::{
    build_channel, nmse, omp_estimate, ChannelModel, EstimationRecord, EstimationReport, MultipathChannel,
    PathPosition, PathSpec, StopRule,
};
pub use mainlobe::{
    contour_ellipse, cross_section, energy_split, gaussian_fit, low_mainlobe_measure, predict_high_mainlobe_widths,
    psp_predict, sample_high_mainlobe, width_3db, Axis, Ellipse, MainlobeFit,
};
pub use procedures::{
    chirp_codebook, polar_codebook, refine_gaussian, refine_search, train_and_refine, train_exhaustive,
    train_hierarchical, track, Codebook, HierarchicalPlan, MeasurementModel, PolarLattice, Stencil, TrackingPolicy,
    TrainingResult,
};
pub use scalar::Real;

pub type ArrayConfig64 = ArrayConfig<f64>;
pub type ArrayConfig32 = ArrayConfig<f32>;
pub type SourceLocation64 = SourceLocation<f64>;
pub type SourceLocation32 = SourceLocation<f32>;
pub type SteeringVector64 = SteeringVector<f64>;
pub type SteeringVector32 = SteeringVector<f32>;
pub type BeamspaceGrid64 = BeamspaceGrid<f64>;
pub type BeamspaceGrid32 = BeamspaceGrid<f32>;
pub type BeamspaceMap64 = BeamspaceMap<f64>;
pub type BeamspaceMap32 = BeamspaceMap<f32>;
pub type C64 = Complex<f64>;
pub type C32 = Complex<f32>;
