//! Batch library for reconstructing drivers'-gaze ground truth from raw
//! eye-tracker and vehicle recordings, and for benchmarking gaze-prediction
//! models against it.
//!
//! The pipeline covers:
//!
//! - [`ingest`] — parsers for eye-tracker logs, telemetry, and annotations
//! - [`align`] — temporal mapping between the driver-view (ETG) and rooftop
//!   (GAR) frame streams
//! - [`geometry`] — homography estimation (normalized DLT + RANSAC) and gaze
//!   projection between views
//! - [`flowprop`] — optical-flow propagation of fixations to a key frame
//! - [`heatmap`] — per-key-frame fixation filtering, rasterization, and
//!   Gaussian ground-truth synthesis (plus the legacy max-of-Gaussians mode)
//! - [`metrics`] — KLD / CC / NSS / SIM saliency metrics
//! - [`tasklab`] — action labeling from telemetry, context records, dataset
//!   statistics, and per-sample weights
//! - [`bench`] — the evaluation harness with per-action / per-context
//!   aggregation and CSV/markdown reports

pub mod align;
pub mod bench;
pub mod config;
pub mod flowprop;
pub mod geometry;
pub mod heatmap;
pub mod ingest;
pub mod metrics;
pub mod numeric;
pub mod raster;
pub mod synthetic;
pub mod tasklab;
