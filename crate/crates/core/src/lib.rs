//! Data association and multi-object tracking with marginal matching
//! probabilities.
//!
//! Instead of thresholding raw appearance distances, the association stage
//! collects a set of high-scoring assignment structures, softmax-weights them
//! by total cost and reads off per-pair marginal probabilities. The marginal
//! acts as a normalized distance that stays comparable across videos with
//! different feature-distance statistics, so a single matching threshold
//! works everywhere.
//!
//! The crate ships the full pipeline around that idea: an exact rectangular
//! assignment solver, the structure-marginal machinery with an exact
//! enumeration oracle and softmax baselines, a constant-velocity Kalman
//! filter with Mahalanobis gating, the hierarchical two-stage tracker,
//! CLEAR/IDF1 metrics, a synthetic benchmark generator with scripted
//! occlusions, and MOT-format file I/O.
//!
//! All numeric code is generic over the scalar type via [`num::Real`]
//! (f32 or f64); the `*64` aliases below are the instantiations the CLI and
//! most applications use.

pub mod affinity;
pub mod io;
pub mod lap;
pub mod marginal;
pub mod mat;
pub mod metrics;
pub mod motion;
pub mod num;
pub mod scenario;
pub mod tracker;

pub use mat::Mat;

/// f64 instantiations of the core types.
pub type Mat64 = Mat<f64>;
pub type Assignment64 = lap::Assignment<f64>;
pub type ScoreVector64 = marginal::ScoreVector<f64>;
pub type StructureSet64 = marginal::StructureSet<f64>;
pub type BoundingBox64 = affinity::BoundingBox<f64>;
pub type Embedding64 = affinity::Embedding<f64>;
pub type KalmanState64 = motion::KalmanState<f64>;
pub type MotionModel64 = motion::MotionModel<f64>;
pub type TrackerConfig64 = tracker::TrackerConfig<f64>;
pub type Tracker64 = tracker::Tracker<f64>;
pub type Detection64 = tracker::Detection<f64>;
pub type TrackTable64 = metrics::TrackTable<f64>;
pub type MetricsReport64 = metrics::MetricsReport<f64>;
