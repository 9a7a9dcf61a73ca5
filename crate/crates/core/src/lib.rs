//! Detection post-processing toolkit for tracking-by-detection identification.
//!
//! The pipeline turns per-frame detector outputs into identity decisions:
//!
//! 1. [`association`] links detections across frames into tracklets by
//!    greedy intersection-over-union matching.
//! 2. [`voting`] assigns one identity per tracklet (average or maximum
//!    voting over the member class-score vectors) and relabels every
//!    detection with its tracklet's identity.
//! 3. [`eval`] matches labeled detections against ground truth and computes
//!    per-class AP, precision, recall, and mAP, for single-frame and
//!    multi-frame systems alike.
//!
//! Supporting modules: [`geometry`] (box arithmetic), [`model`] (shared data
//! types), [`ingest`] (file formats), [`partition`] (stratified splits and
//! k-fold), and [`simulate`] (synthetic detection streams for benchmarking
//! the multi-frame improvement without real footage).

pub mod association;
pub mod eval;
pub mod geometry;
pub mod ingest;
pub mod model;
pub mod partition;
pub mod simulate;
pub mod voting;

pub use association::{build_tracklets, Tracklet, TrackletParams};
pub use eval::{evaluate_multi_frame, evaluate_single_frame, MetricsReport};
pub use geometry::BBox;
pub use model::{Annotation, ClassRegistry, Detection, FrameRecord, Sequence};
pub use voting::{LabeledDetection, VoteScheme};
