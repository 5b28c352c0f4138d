//! Explanation-regularized training for spurious-correlation mitigation.
//!
//! A label classifier and a confounder classifier are trained side by side on
//! the same images. Each step computes Grad-CAM heatmaps for both models and
//! penalizes their spatial similarity, pushing the label model away from the
//! pixels the confounder model relies on. ERM and GroupDRO baselines, group
//! samplers, worst-group evaluation and a linear-MMD latent diagnostic are
//! included so the method can be compared end to end on synthetic data.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`autodiff`]: dense arrays and a reverse-mode graph.
//! * [`nn`]: the small CNN, parameters and SGD.
//! * [`gradcam`] and [`similarity`]: heatmaps and the eleven heatmap scores.
//! * [`data`]: synthetic CMNIST, group-table datasets, IDX loading, samplers.
//! * [`train`] and [`metrics`]: training loops, model selection, evaluation.
//! * [`experiment`]: config files, output files and the `ex2l` commands.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcam;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod similarity;
pub mod tensor;
pub mod train;

pub use autodiff::{Graph, NodeId};
pub use error::{Error, Result};
pub use nn::{HeadKind, LayerSpec, Network, Parameter};
pub use tensor::NdArray;

/// Floating point type used by every array in the crate.
#[cfg(not(feature = "single-precision"))]
pub type Scalar = f64;
/// Floating point type used by every array in the crate.
#[cfg(feature = "single-precision")]
pub type Scalar = f32;
