//! Phase retrieval from axial intensity and event-camera measurements.
//!
//! Simulates a coherent wavefront with a Zernike-described phase, propagates
//! it to two defocus planes, degrades it through frame-sensor or
//! event-sensor models, and recovers the phase by solving the transport of
//! intensity equation (linear axial derivative) or its event counterpart
//! (logarithmic axial derivative from signed event counts).
//!
//! Everything grid-valued is generic over [`Scalar`] (`f32` or `f64`);
//! the `*64` aliases name the usual double-precision instantiations.

// NaN must fail validation, hence `!(x > 0)` rather than `x <= 0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod events;
pub mod grid;
pub mod metrics;
pub mod retrieval;
pub mod rng;
pub mod scalar;
pub mod sensor;
mod transform;
pub mod wavefield;
pub mod zernike;

pub use error::{Error, Result};
pub use events::{accumulate, parse_event_csv, write_event_csv, EventStream};
pub use grid::{IntensityMap, Mask, PhaseMap, Plane};
pub use metrics::{full_frame_rmse, rmse, weight_errors, EvalReport};
pub use retrieval::{
    discrete_laplacian, inverse_laplacian, linear_derivative, log_derivative,
    select_regularization, solve_tee, solve_tie, DerivativeKind, DerivativeMap, NeumannSolver,
    Reference, Regularization, SolveConfig,
};
pub use rng::derive_seed;
pub use scalar::Scalar;
pub use sensor::{
    simulate_event_plane, simulate_event_stream, simulate_frame, EventPlane, EventRecord,
    EvsConfig, FrameSensorConfig, Polarity,
};
pub use wavefield::{
    field_from_phase, fresnel_propagate, intensity_of, ComplexField, FresnelPropagator,
};
pub use zernike::{
    fit_weights, synthesize_phase, zernike_basis, PupilGrid, ZernikeFitter, ZernikeWeights,
};

pub type PhaseMap64 = PhaseMap<f64>;
pub type IntensityMap64 = IntensityMap<f64>;
pub type ComplexField64 = ComplexField<f64>;
pub type ZernikeWeights64 = ZernikeWeights<f64>;
pub type PupilGrid64 = PupilGrid<f64>;
pub type EventPlane64 = EventPlane<f64>;
pub type SolveConfig64 = SolveConfig<f64>;
