//! The degenerate system: operators, noise, drift and continuity moduli.

pub mod drift;
pub mod examples;
pub mod modulus;
pub mod spectral;

pub use drift::{validate_drift_regularity, DriftSpec, Growth};
pub use examples::{build_example, DriftFamily, ExampleKind, ExampleParams, RoughProfile};
pub use modulus::{classify_modulus, ClassReport, Modulus};
pub use spectral::{validate_hypotheses, Sigma, SpectralModel, TailRule, ValidationReport};
