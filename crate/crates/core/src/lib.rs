//! Multiscale structure graphs (MSGs) and similarity-invariant point cloud
//! generation.
//!
//! An MSG abstracts a point cloud as a set of vertices, each carrying a
//! location and a *capacity* (the number of points it stands for), joined by
//! spatial-proximity edges. This crate covers the whole loop around that
//! representation:
//!
//! * [`geom`]: point clouds, similarity transforms, Chamfer metrics, FPS.
//! * [`graph`]: the MSG data model, edits and its JSON format.
//! * [`extract`]: MSG extraction via mixed-precision random k-means.
//! * [`frame`]: per-vertex canonical rotation, scale factor and relative
//!   capacity ratio.
//! * [`autodiff`]: a small reverse-mode tape, the neural primitives and Adam.
//! * [`model`]: the graph-attention encoder, latent sampler and generator.
//! * [`baselines`]: non-learned generators used as reference points.
//! * [`train`]: synthetic corpus, training loop, evaluation and checkpoints.
//!
//! Data-parallel inner loops go through [`par`], which uses rayon when the
//! `parallel` feature is on and runs sequentially otherwise.

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod extract;
pub mod frame;
pub mod geom;
pub mod graph;
pub mod model;
pub mod par;
pub mod train;

pub use error::{Error, Result};
pub use geom::{PointCloud, SimilarityTransform, Vec3};
pub use graph::{GraphEdit, MsgGraph, MsgVertex};

/// Crate version, reported by the generation service.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
