//! Lorentz-model hyperbolic geometry, entailment cones, analytic gradients,
//! Gromov hyperbolicity and small segmentation heads built on top of them.

// `!(x > t)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod entailment;
pub mod error;
pub mod grad;
pub mod hyperbolicity;
pub mod io;
pub mod landscape;
pub mod linalg;
pub mod lorentz;
pub mod maskhead;
pub mod model_maps;
pub mod par;
pub mod rng;
pub mod segtoy;
pub mod uncertainty;

pub use error::{Error, Result};
pub use lorentz::{Curvature, LorentzPoint, PointBatch, TangentVector};
pub use par::Exec;
