//! Saliency explanations for object detectors and the metrics that score them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detectors;
pub mod explainers;
pub mod geometry;
pub mod harness;
pub mod imageproc;
pub mod metrics;
pub mod types;

pub use geometry::{cosine_sim, iou, GeometryError};
pub use types::{BBox, Detection, GroundTruthInstance, ImageBuffer, SaliencyMap, TypeError};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/types.md")]
    pub struct Types;
    #[doc = include_str!("../../../book/src/backends.md")]
    pub struct Backends;
    #[doc = include_str!("../../../book/src/explainers.md")]
    pub struct Explainers;
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub struct Metrics;
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    pub struct Benchmarks;
    #[doc = include_str!("../../../book/src/service.md")]
    pub struct Service;
}
