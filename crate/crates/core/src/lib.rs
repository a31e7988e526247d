//! Measures representational similarity between layered model activations
//! and brain-like recordings.
//!
//! The pipeline: activations and responses are loaded and aligned by stimulus
//! ([`data`]), mapped through cross-validated ridge regression ([`ridge`]),
//! and summarized into encoding, spatial-hierarchy, temporal-hierarchy and
//! half-time metrics ([`metrics`]) with their significance machinery
//! ([`stats`]). A planted-ground-truth generator ([`synth`]) provides the
//! verification oracle for all of it. [`numeric`] holds the deterministic
//! dense kernels everything else is built on.

pub mod data;
pub mod metrics;
pub mod numeric;
pub mod ridge;
pub mod stats;
pub mod synth;
