//! Laboratory for fair domain generalization at desk scale.
//!
//! The crate has three layers:
//!
//! * exact discrete probability ([`prob`]) and executable verification of the
//!   risk / equalized-odds bounds ([`bounds`]),
//! * empirical estimators: conditional distance correlation and HSIC
//!   ([`dependence`]), group-fairness metrics ([`fairness`]), Pareto-front and
//!   hypervolume evaluation ([`pareto`]),
//! * a minimal differentiable stack ([`nn`]) plus synthetic data generation
//!   and the two-stage training procedure ([`synth`], [`trainer`]).

pub mod bounds;
pub mod dependence;
pub mod error;
pub mod fairness;
pub mod nn;
pub mod pareto;
pub mod prob;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
