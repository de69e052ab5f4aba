//! Streaming covariate-balancing treatment assignment.
//!
//! The core object is a weighted balancing walk ([`walk::WalkState`]): units
//! arrive one at a time with a covariate vector, receive +1/-1 with a
//! controlled marginal q, and the walk steers each draw against the running
//! signed covariate sum so treated and control groups stay balanced in every
//! coordinate. A robustness knob phi in [0, 1) interpolates between pure
//! balancing (0) and independent coin flips (as phi -> 1).
//!
//! On top of it sit k-arm assignment over a tree of walks ([`tree`]),
//! classical comparator designs ([`baselines`]), synthetic data generators
//! ([`dgp`]), and the estimator plus scoring metrics ([`estimators`]).
//! [`reference`] carries deliberately naive re-implementations used to
//! validate the fast paths.

pub mod baselines;
pub mod design;
pub mod dgp;
pub mod estimators;
pub mod reference;
pub mod rng;
pub mod tree;
pub mod walk;

pub use design::{ConcentrationConstants, DesignError, DesignParams, OverflowPolicy};
pub use walk::{Assignment, WalkError, WalkSnapshot, WalkState};
