//! Short-and-sparse blind deconvolution on the sphere.
//!
//! Given `y = a0 * x0` (cyclic convolution of a short kernel with a sparse
//! map), recover `a0` up to a signed cyclic shift by minimising a smoothed,
//! marginalised sparsity objective over the sphere, then polish the estimate
//! with a homotopy of reweighted Lasso and least-squares updates.

pub mod datagen;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod io;
pub mod minimize;
pub mod objective;
pub mod refine;
pub mod shiftspace;
pub mod signal;
mod spectral;
pub mod surrogate;

pub use error::{Error, Result};
pub use objective::{EvalBundle, Linearization, ObjectiveContext};
pub use signal::{cconv, ccorr, project_sphere, shift, zero_pad_window, Kernel, Observation, SparseMap};
pub use surrogate::SurrogateParams;
