//! The regularization field `u^λ`, the transform `Θ` and Galerkin comparisons.

pub mod galerkin;
pub mod grid;
pub mod resolvent;
pub mod solver;
pub mod transform;

pub use galerkin::{galerkin_compare, solve_modes, GalerkinGap, ModeFields};
pub use grid::{Axis, FieldGrid, GridSpec};
pub use resolvent::{resolvent_apply, ResolventValue};
pub use solver::{apply_gamma, lambda_sweep, picard_solve, search_lambda, LambdaSearch, LambdaSweep, PicardReport};
pub use transform::{field_grad2, holder_diagnostic, theta_forward, theta_inverse, Grad2, HolderReport};
