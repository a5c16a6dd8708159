//! Bootstrapping sparse manual 2D landmark labels across synchronized
//! views with a learned non-rigid shape prior.

// `!(x >= 0.0)` deliberately rejects NaN; numeric kernels index several
// arrays per loop.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod perception;
pub mod pipeline;
pub mod prior;
pub mod seed;
pub mod synth;

pub use error::{MbwError, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/overview.md")]
pub struct OverviewChapter;
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/geometry.md")]
pub struct GeometryChapter;
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/shape_prior.md")]
pub struct ShapePriorChapter;
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/perception.md")]
pub struct PerceptionChapter;
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/pipeline.md")]
pub struct PipelineChapter;
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/metrics.md")]
pub struct MetricsChapter;
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/synthetic.md")]
pub struct SyntheticChapter;
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub struct CliChapter;
