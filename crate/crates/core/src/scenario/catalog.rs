//! Built-in scenarios and the fixed table of result anchors they cite.

use serde::{Deserialize, Serialize};

use super::config::rough_profile;
use crate::error::{Error, Result};
use crate::model::{DriftFamily, ExampleKind, Modulus, RoughProfile};

/// The statements numbers in a summary are checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    GramianScaling,
    BismutFormula,
    ControlledCoupling,
    GradientScaling,
    NoiseBound,
    PicardContraction,
    ResolventDecay,
    TransformInverse,
    GalerkinLimit,
    RepresentationIdentity,
    PathwiseUniqueness,
    NonExplosion,
}

impl Anchor {
    pub const ALL: [Anchor; 12] = [
        Anchor::GramianScaling,
        Anchor::BismutFormula,
        Anchor::ControlledCoupling,
        Anchor::GradientScaling,
        Anchor::NoiseBound,
        Anchor::PicardContraction,
        Anchor::ResolventDecay,
        Anchor::TransformInverse,
        Anchor::GalerkinLimit,
        Anchor::RepresentationIdentity,
        Anchor::PathwiseUniqueness,
        Anchor::NonExplosion,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Anchor::GramianScaling => "gramian-scaling",
            Anchor::BismutFormula => "bismut-formula",
            Anchor::ControlledCoupling => "controlled-coupling",
            Anchor::GradientScaling => "gradient-scaling",
            Anchor::NoiseBound => "noise-bound",
            Anchor::PicardContraction => "picard-contraction",
            Anchor::ResolventDecay => "resolvent-decay",
            Anchor::TransformInverse => "transform-inverse",
            Anchor::GalerkinLimit => "galerkin-limit",
            Anchor::RepresentationIdentity => "representation-identity",
            Anchor::PathwiseUniqueness => "pathwise-uniqueness",
            Anchor::NonExplosion => "non-explosion",
        }
    }

    pub fn statement(&self) -> &'static str {
        match self {
            Anchor::GramianScaling => "Q_t is invertible with |Q_t^{-1}| t^3 bounded (= 6 for the scalar kinetic model)",
            Anchor::BismutFormula => "grad_v P0_{s,T} f(z) = E[f(Z_T) int <sigma^{-1} Phi, dW>]",
            Anchor::ControlledCoupling => "the controlled perturbation vanishes at T and the Girsanov weight has mean 1",
            Anchor::GradientScaling => "|grad_x P0_{s,t} f| ~ (t-s)^{-3(1-a)/2}, |grad_y P0_{s,t} f| ~ (t-s)^{-(1-a)/2}",
            Anchor::NoiseBound => "HS size of the stochastic convolution <= c2 (t-s)^delta",
            Anchor::PicardContraction => "the fixed-point map contracts by 1/2 for lambda large",
            Anchor::ResolventDecay => "the fixed point decays in lambda at rate -1/2 in the sup + gradient norm",
            Anchor::TransformInverse => "Theta_s is invertible when sup |grad_y u| < 1",
            Anchor::GalerkinLimit => "truncated fixed points converge as the number of modes grows",
            Anchor::RepresentationIdentity => "the mild representation of Y through u holds along every path",
            Anchor::PathwiseUniqueness => "solutions driven by the same noise from nearby data stay close",
            Anchor::NonExplosion => "sup |Y - xi|^2 stays below the Bihari envelope; no explosion before T",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    KineticBismut,
    GradientScaling,
    GramianSweep,
    PicardLambdaSweep,
    GalerkinWave,
    UniquenessRough,
    RepresentationResidual,
    BihariEnvelope,
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config("scenario.name", format!("unknown scenario `{s}`; see list-scenarios")))
    }
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::KineticBismut,
        Scenario::GradientScaling,
        Scenario::GramianSweep,
        Scenario::PicardLambdaSweep,
        Scenario::GalerkinWave,
        Scenario::UniquenessRough,
        Scenario::RepresentationResidual,
        Scenario::BihariEnvelope,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::KineticBismut => "kinetic_bismut",
            Scenario::GradientScaling => "gradient_scaling",
            Scenario::GramianSweep => "gramian_sweep",
            Scenario::PicardLambdaSweep => "picard_lambda_sweep",
            Scenario::GalerkinWave => "galerkin_wave",
            Scenario::UniquenessRough => "uniqueness_rough",
            Scenario::RepresentationResidual => "representation_residual",
            Scenario::BihariEnvelope => "bihari_envelope",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Scenario::KineticBismut => "Bismut gradients of polynomial observables against exact Gaussian derivatives; coupling check",
            Scenario::GradientScaling => "small-gap blow-up rate of x- and y-gradients of a bounded observable",
            Scenario::GramianSweep => "Gramian inverse scaling and control-energy ratios over dyadic gaps",
            Scenario::PicardLambdaSweep => "lambda search, contraction factors and lambda-decay of the regularizing field",
            Scenario::GalerkinWave => "Galerkin truncation gaps and the noise bound for the stochastic wave model",
            Scenario::UniquenessRough => "common-noise gap tables for a rough D1 drift",
            Scenario::RepresentationResidual => "residual of the representation identity as the step count doubles",
            Scenario::BihariEnvelope => "simulated paths of a dissipative drift against the Bihari envelope",
        }
    }

    pub fn anchors(&self) -> &'static [Anchor] {
        match self {
            Scenario::KineticBismut => &[Anchor::BismutFormula, Anchor::ControlledCoupling],
            Scenario::GradientScaling => &[Anchor::GradientScaling],
            Scenario::GramianSweep => &[Anchor::GramianScaling],
            Scenario::PicardLambdaSweep => &[Anchor::PicardContraction, Anchor::ResolventDecay, Anchor::TransformInverse],
            Scenario::GalerkinWave => &[Anchor::GalerkinLimit, Anchor::NoiseBound],
            Scenario::UniquenessRough => &[Anchor::PathwiseUniqueness],
            Scenario::RepresentationResidual => &[Anchor::RepresentationIdentity],
            Scenario::BihariEnvelope => &[Anchor::NonExplosion],
        }
    }

    pub fn default_kind(&self) -> ExampleKind {
        match self {
            Scenario::GalerkinWave => ExampleKind::Wave,
            _ => ExampleKind::Kinetic,
        }
    }

    pub fn default_drift(&self) -> DriftFamily {
        match self {
            Scenario::KineticBismut | Scenario::GradientScaling | Scenario::GramianSweep => DriftFamily::Zero,
            Scenario::PicardLambdaSweep => DriftFamily::TanhY { eps: 5e-4 },
            Scenario::GalerkinWave => DriftFamily::Modewise {
                decay: 1.0,
                profile: RoughProfile { saturate: Some(3.0), ..rough_profile() },
            },
            Scenario::UniquenessRough => DriftFamily::Rough(rough_profile()),
            Scenario::RepresentationResidual => DriftFamily::Rough(RoughProfile {
                alpha: 0.75,
                k: 0.0,
                modulus: Modulus::log_power(1.0, std::f64::consts::E, 1.0),
                saturate: Some(6.0),
            }),
            Scenario::BihariEnvelope => DriftFamily::Dissipative,
        }
    }
}

pub const CATALOG_CSV_HEADER: &str = "name,anchors,description";

/// One line per scenario: name, anchor tags and a description.
pub fn catalog_lines() -> Vec<String> {
    Scenario::ALL
        .iter()
        .map(|s| {
            let tags: Vec<&str> = s.anchors().iter().map(|a| a.tag()).collect();
            format!("{:<24} [{}] {}", s.name(), tags.join(", "), s.description())
        })
        .collect()
}

pub fn catalog_csv() -> String {
    let mut out = String::from(CATALOG_CSV_HEADER);
    out.push('\n');
    for s in Scenario::ALL {
        let tags: Vec<&str> = s.anchors().iter().map(|a| a.tag()).collect();
        out.push_str(&format!("{},{},\"{}\"\n", s.name(), tags.join(";"), s.description()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("nope".parse::<Scenario>().is_err());
    }

    #[test]
    fn every_scenario_cites_an_anchor() {
        for s in Scenario::ALL {
            assert!(!s.anchors().is_empty());
        }
        assert_eq!(catalog_csv().lines().count(), 9);
    }

    #[test]
    fn default_drifts_build() {
        for s in Scenario::ALL {
            let d = if s == Scenario::GalerkinWave { 16 } else { 1 };
            s.default_drift().build(d, d).unwrap();
        }
    }
}
