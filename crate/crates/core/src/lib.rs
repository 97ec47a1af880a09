//! Phantom distribution functions for stationary random fields on `Z^d`.
//!
//! The crate simulates stationary fields (a separable Gaussian example with
//! Polya-type covariance, i.i.d. fields, moving maxima), estimates laws of
//! rectangle maxima along monotone curves, and measures how far those laws
//! are from `G^{n^*}` for candidate phantom distribution functions `G`.
//! Dependence diagnostics cover the block-mixing functional and a Berman
//! comparison bound.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod lattice;
pub mod normal;
pub mod phantom;
pub mod quadrature;
pub mod rng;
pub mod sampling;

pub use covariance::{CharacteristicPolygon, CovarianceSpec, GammaPair, SeparableCovariance};
pub use diagnostics::{BetaReport, BlockSplit, LRule, ProbabilityMode};
pub use error::{Error, Result};
pub use lattice::{CurveSpec, MonotoneCurve, Rectangle};
pub use phantom::{EmpiricalLaw, GPsi, LevelSequence, MaxLaw, PhantomCandidate};
pub use sampling::{FieldModel, FieldSample, Marginal};
