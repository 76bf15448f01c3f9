//! Robust principal component analysis on flag manifolds.
//!
//! A flag is a nested sequence of subspaces of increasing dimension. Fitting
//! a flag instead of a single subspace lets one estimator interpolate between
//! the classical L2 formulations (one subspace, Grassmannian) and the L1-style
//! formulations (a full chain of one-dimensional increments, Stiefel). The
//! crate provides:
//!
//! * [`flag`]: flag signatures, representatives and the chordal metric;
//! * [`stiefel`]: Stiefel-manifold optimization (projection, retraction,
//!   Procrustes, conjugate gradient descent) and the weighted flag objective;
//! * [`robust`]: the four IRLS estimators (fRPCA, fWPCA, fDPCP, fWDPCP);
//! * [`manifolds`]: exp/log/dist backends for spheres, Grassmannians and
//!   planar pre-shapes, plus Karcher means and medians;
//! * [`tangent`]: lifting the estimators to curved data through a tangent
//!   space at a robust center, with reconstruction and outlier scores;
//! * [`eval`]: ROC/AUC and subspace-error metrics;
//! * [`synth`]: the seeded benchmark generators used by the test suite;
//! * [`io`]: the plain-text dataset/fit/score formats of the `flagpca` CLI.

pub mod cli;
pub mod error;
pub mod eval;
pub mod flag;
pub mod io;
pub mod manifolds;
pub mod robust;
pub mod stiefel;
pub mod synth;
pub mod tangent;

pub use error::{Error, Result};
