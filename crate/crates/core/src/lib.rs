//! Radiating near-field (Fresnel region) link simulator.
//!
//! Exact spherical-wavefront channels for large planar arrays, conjugate
//! beam focusing, far-field beam steering, a sum-rate maximizing multi-user
//! precoder, and the metrics and experiment runners used to compare them.

pub mod channel;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod metrics;
pub mod precoding;

pub use channel::{farfield_steering, nearfield_los, wideband, ChannelVector, WidebandChannel};
pub use error::{Error, Result, ScenarioErrorKind};
pub use geometry::{
    build_upa, classify_point, fraunhofer_distance, max_phase_deviation, reactive_bound,
    ArrayGeometry, Carrier, Plane, Region, RegionClass, Vec3, SPEED_OF_LIGHT,
};
pub use metrics::{
    field_scan, focal_drift, received_power, sinr, spectral_efficiency, FieldScan, LinkBudget,
    ScanSpec, SearchAxis,
};
pub use num_complex::Complex64;
pub use precoding::{
    conjugate_focus, frequency_flat_focus, steer, steer_multiuser, sum_rate_precoder,
    OptimizerConfig, OptimizerReport, Precoder,
};
