//! Mild solutions of the nonlinear system and the experiments built on them.

pub mod bihari;
pub mod cutoff;
pub mod integrate;
pub mod representation;
pub mod uniqueness;

pub use bihari::{bihari_bound, envelope_check, envelope_constant, BihariCurve, EnvelopeReport};
pub use cutoff::{cutoff_drift, psi};
pub use integrate::{integrate_mild, integrate_paths, self_convergence, BlowUp, ConvergenceStudy, MildTrajectory, Noise, RecordedNoise, BLOW_UP};
pub use representation::{representation_residual, residual_sweep, ResidualReport, ResidualSweep};
pub use uniqueness::{uniqueness_experiment, GapRow, GapTable};
