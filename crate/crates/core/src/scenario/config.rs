//! Scenario configuration files (TOML).
//!
//! ```toml
//! [scenario]
//! name = "kinetic_bismut"
//! seed = 7
//!
//! [model]
//! kind = "kinetic"
//!
//! [drift]
//! family = "zero"
//!
//! [experiment]
//! n_paths = 100000
//!
//! [output]
//! dir = "out/kinetic_bismut"
//! formats = ["csv", "bin"]
//! ```

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::catalog::Scenario;
use crate::error::{Error, Result};
use crate::model::{build_example, DriftFamily, DriftSpec, ExampleKind, ExampleParams, Modulus, RoughProfile, SpectralModel};
use crate::regularization::{Axis, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub kind: ExampleKind,
    pub params: ExampleParams,
    pub drift: DriftFamily,
    pub experiment: Experiment,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&src)
    }

    pub fn parse(src: &str) -> Result<Self> {
        let mut root: Table = src.parse().map_err(|e: toml::de::Error| Error::config("<toml>", e.message().to_string()))?;
        for key in root.keys() {
            if !["scenario", "model", "drift", "experiment", "output"].contains(&key.as_str()) {
                return Err(Error::config(key.clone(), "unknown section"));
            }
        }
        let mut head = take_table(&mut root, "scenario")?.ok_or_else(|| Error::config("scenario", "missing section"))?;
        let name = match head.remove("name") {
            Some(Value::String(s)) => s,
            Some(_) => return Err(Error::config("scenario.name", "must be a string")),
            None => return Err(Error::config("scenario.name", "missing")),
        };
        let scenario: Scenario = name.parse()?;
        let seed = match head.remove("seed") {
            Some(Value::Integer(s)) if s >= 0 => s as u64,
            Some(_) => return Err(Error::config("scenario.seed", "must be a nonnegative integer")),
            None => return Err(Error::config("scenario.seed", "missing; every run needs an explicit seed")),
        };
        if let Some(k) = head.keys().next() {
            return Err(Error::config(format!("scenario.{k}"), "unknown key"));
        }

        let mut model = take_table(&mut root, "model")?.unwrap_or_default();
        let kind: ExampleKind = match model.remove("kind") {
            Some(Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::config("model.kind", "must be a string")),
            None => scenario.default_kind(),
        };
        let params: ExampleParams = decode("model", model)?;

        let drift = match take_table(&mut root, "drift")? {
            Some(t) => decode("drift", t)?,
            None => scenario.default_drift(),
        };
        let experiment = Experiment::decode(scenario, take_table(&mut root, "experiment")?.unwrap_or_default())?;
        let output: OutputConfig = decode("output", take_table(&mut root, "output")?.unwrap_or_default())?;
        Ok(ScenarioConfig { scenario, seed, kind, params, drift, experiment, output })
    }

    /// Builds the model and drift; hypothesis violations surface here.
    pub fn build(&self) -> Result<(SpectralModel, DriftSpec)> {
        build_example(self.kind, &self.params, &self.drift)
    }

    /// Checks the config fully without running the experiment.
    pub fn validate(&self) -> Result<()> {
        let (model, _) = self.build()?;
        self.experiment.validate(&model)
    }

    /// The configured directory, or `out/<scenario>`. An override keeps the
    /// last component: `dir = "out/foo"` with override `/tmp` gives `/tmp/foo`.
    pub fn output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        let own = self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out").join(self.scenario.name()));
        match override_dir {
            Some(d) => d.join(own.file_name().map_or_else(|| self.scenario.name().into(), |n| n.to_os_string())),
            None => own,
        }
    }
}

fn take_table(root: &mut Table, key: &str) -> Result<Option<Table>> {
    match root.remove(key) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(Error::config(key, "must be a section")),
    }
}

fn decode<T: DeserializeOwned>(section: &str, table: Table) -> Result<T> {
    Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::config(section, e.message().trim().to_string()))
}

fn positive(field: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::config(field, "must be positive"));
    }
    Ok(())
}

fn positive_f(field: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::config(field, "must be positive and finite"));
    }
    Ok(())
}

fn state_len(field: &str, z: &[f64], model: &SpectralModel) -> Result<()> {
    if z.len() != model.dim() {
        return Err(Error::config(field, format!("expected {} entries, got {}", model.dim(), z.len())));
    }
    Ok(())
}

fn fits_grid(field: &str, grid: &GridSpec, model: &SpectralModel) -> Result<()> {
    grid.validate(model.dim()).map_err(|e| Error::config(field, e.to_string()))
}

fn default_horizon() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BismutParams {
    #[serde(default = "default_bismut_point")]
    pub point: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_bismut_observables")]
    pub observables: Vec<String>,
    #[serde(default = "default_bismut_paths")]
    pub n_paths: usize,
    #[serde(default = "default_bismut_steps")]
    pub n_steps: usize,
    /// Perturbation size for the coupling and Girsanov check.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Paths written to the binary bundle.
    #[serde(default = "default_bundle_paths")]
    pub bundle_paths: usize,
}

fn default_bismut_point() -> Vec<f64> {
    vec![0.5, -0.3]
}
fn default_bismut_observables() -> Vec<String> {
    ["x0", "y0", "x0^2", "y0^2", "x0*y0"].iter().map(|s| s.to_string()).collect()
}
fn default_bismut_paths() -> usize {
    100_000
}
fn default_bismut_steps() -> usize {
    64
}
fn default_eps() -> f64 {
    0.5
}
fn default_bundle_paths() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingParams {
    #[serde(default = "default_x_observable")]
    pub x_observable: String,
    #[serde(default = "default_y_observable")]
    pub y_observable: String,
    /// Gaps are `2^k` for `k` in this range (inclusive).
    #[serde(default = "default_gap_exponents")]
    pub gap_exponents: [i32; 2],
    #[serde(default = "default_scaling_paths")]
    pub n_paths: usize,
    #[serde(default = "default_scaling_steps")]
    pub n_steps: usize,
    /// Hölder exponent of the observable in the predicted slopes.
    #[serde(default)]
    pub alpha: f64,
}

fn default_x_observable() -> String {
    "tanh(x0/1e-6)".into()
}
fn default_y_observable() -> String {
    "tanh(y0/1e-6)".into()
}
fn default_gap_exponents() -> [i32; 2] {
    [-8, -3]
}
fn default_scaling_paths() -> usize {
    20_000
}
fn default_scaling_steps() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramianParams {
    #[serde(default = "default_gramian_exponents")]
    pub exponents: [i32; 2],
}

fn default_gramian_exponents() -> [i32; 2] {
    [-6, 0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardParams {
    #[serde(default = "default_picard_grid")]
    pub grid: GridSpec,
    /// The sweep uses `λ = 2^k` for `k` in this range (inclusive).
    #[serde(default = "default_lambda_exponents")]
    pub lambda_exponents: [i32; 2],
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Probe points for the transform round trip.
    #[serde(default = "default_round_trip_probes")]
    pub round_trip_probes: usize,
}

fn default_picard_grid() -> GridSpec {
    GridSpec { axes: vec![Axis::uniform(-4.0, 4.0, 65), Axis::stretched(-4.0, 4.0, 65, 8.0)], time_nodes: 33, horizon: 1.0 }
}
fn default_lambda_exponents() -> [i32; 2] {
    [4, 10]
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    200
}
fn default_round_trip_probes() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinParams {
    #[serde(default = "default_galerkin_levels")]
    pub levels: Vec<usize>,
    #[serde(default = "default_galerkin_lambda")]
    pub lambda: f64,
    /// Grid of each per-mode problem.
    #[serde(default = "default_galerkin_grid")]
    pub grid: GridSpec,
}

fn default_galerkin_levels() -> Vec<usize> {
    vec![2, 4, 8]
}
fn default_galerkin_lambda() -> f64 {
    32.0
}
fn default_galerkin_grid() -> GridSpec {
    GridSpec::uniform(2, -3.0, 3.0, 33, 17, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessParams {
    #[serde(default)]
    pub z0: Option<Vec<f64>>,
    #[serde(default = "default_perturbations")]
    pub perturbations: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_uniqueness_steps")]
    pub n_steps: Vec<usize>,
}

fn default_perturbations() -> Vec<f64> {
    vec![0.0, 1e-2, 1e-3, 1e-4]
}
fn default_uniqueness_steps() -> Vec<usize> {
    vec![256, 1024, 4096]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualParams {
    #[serde(default)]
    pub z0: Option<Vec<f64>>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_residual_steps")]
    pub n_steps: Vec<usize>,
    #[serde(default = "default_residual_paths")]
    pub n_paths: usize,
    /// `None` runs the doubling search.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_residual_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_residual_steps() -> Vec<usize> {
    vec![128, 256, 512, 1024, 2048]
}
fn default_residual_paths() -> usize {
    64
}
fn default_residual_grid() -> GridSpec {
    GridSpec { axes: vec![Axis::uniform(-6.0, 6.0, 3), Axis::uniform(-6.0, 6.0, 257)], time_nodes: 2049, horizon: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeParams {
    #[serde(default)]
    pub z0: Option<Vec<f64>>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_envelope_steps")]
    pub n_steps: usize,
    #[serde(default = "default_envelope_paths")]
    pub n_paths: usize,
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
}

fn default_envelope_steps() -> usize {
    512
}
fn default_envelope_paths() -> usize {
    1000
}
fn default_curve_points() -> usize {
    65
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    KineticBismut(BismutParams),
    GradientScaling(ScalingParams),
    GramianSweep(GramianParams),
    PicardLambdaSweep(PicardParams),
    GalerkinWave(GalerkinParams),
    UniquenessRough(UniquenessParams),
    RepresentationResidual(ResidualParams),
    BihariEnvelope(EnvelopeParams),
}

impl Experiment {
    fn decode(s: Scenario, t: Table) -> Result<Self> {
        Ok(match s {
            Scenario::KineticBismut => Experiment::KineticBismut(decode("experiment", t)?),
            Scenario::GradientScaling => Experiment::GradientScaling(decode("experiment", t)?),
            Scenario::GramianSweep => Experiment::GramianSweep(decode("experiment", t)?),
            Scenario::PicardLambdaSweep => Experiment::PicardLambdaSweep(decode("experiment", t)?),
            Scenario::GalerkinWave => Experiment::GalerkinWave(decode("experiment", t)?),
            Scenario::UniquenessRough => Experiment::UniquenessRough(decode("experiment", t)?),
            Scenario::RepresentationResidual => Experiment::RepresentationResidual(decode("experiment", t)?),
            Scenario::BihariEnvelope => Experiment::BihariEnvelope(decode("experiment", t)?),
        })
    }

    fn validate(&self, model: &SpectralModel) -> Result<()> {
        match self {
            Experiment::KineticBismut(p) => {
                state_len("experiment.point", &p.point, model)?;
                positive_f("experiment.horizon", p.horizon)?;
                if p.n_paths < 2 {
                    return Err(Error::config("experiment.n_paths", "need at least 2 paths"));
                }
                positive("experiment.n_steps", p.n_steps)?;
                if !(0.0..1.0).contains(&p.eps) {
                    return Err(Error::config("experiment.eps", "must lie in [0, 1)"));
                }
                if p.observables.is_empty() {
                    return Err(Error::config("experiment.observables", "must not be empty"));
                }
                for o in &p.observables {
                    crate::observable::Observable::parse(o, model.m(), model.d())
                        .map_err(|e| Error::config("experiment.observables", e.to_string()))?;
                }
            }
            Experiment::GradientScaling(p) => {
                for (field, src) in [("experiment.x_observable", &p.x_observable), ("experiment.y_observable", &p.y_observable)] {
                    crate::observable::Observable::parse(src, model.m(), model.d()).map_err(|e| Error::config(field, e.to_string()))?;
                }
                if p.gap_exponents[1] - p.gap_exponents[0] < 3 || p.gap_exponents[1] > 0 {
                    return Err(Error::config("experiment.gap_exponents", "need at least 4 gaps, all at most 1"));
                }
                if p.n_paths < 2 {
                    return Err(Error::config("experiment.n_paths", "need at least 2 paths"));
                }
                positive("experiment.n_steps", p.n_steps)?;
            }
            Experiment::GramianSweep(p) => {
                if p.exponents[0] > p.exponents[1] {
                    return Err(Error::config("experiment.exponents", "range is empty"));
                }
            }
            Experiment::PicardLambdaSweep(p) => {
                fits_grid("experiment.grid", &p.grid, model)?;
                if p.lambda_exponents[1] <= p.lambda_exponents[0] {
                    return Err(Error::config("experiment.lambda_exponents", "need at least two values"));
                }
                positive_f("experiment.tol", p.tol)?;
                positive("experiment.max_iter", p.max_iter)?;
            }
            Experiment::GalerkinWave(p) => {
                if model.eigenvalues.is_none() {
                    return Err(Error::config("model.kind", "galerkin_wave needs the wave family"));
                }
                let n = model.m();
                if p.levels.is_empty() || p.levels.windows(2).any(|w| w[0] >= w[1]) || p.levels[0] == 0 {
                    return Err(Error::config("experiment.levels", "must be positive and strictly increasing"));
                }
                if *p.levels.last().unwrap() >= n {
                    return Err(Error::config("experiment.levels", format!("largest level must be below n_modes = {n}")));
                }
                positive_f("experiment.lambda", p.lambda)?;
                fits_grid("experiment.grid", &p.grid, &SpectralModel::kinetic_scalar())?;
            }
            Experiment::UniquenessRough(p) => {
                if let Some(z) = &p.z0 {
                    state_len("experiment.z0", z, model)?;
                }
                if p.perturbations.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
                    return Err(Error::config("experiment.perturbations", "must be finite and nonnegative"));
                }
                positive_f("experiment.horizon", p.horizon)?;
                if p.n_steps.is_empty() || p.n_steps.contains(&0) {
                    return Err(Error::config("experiment.n_steps", "must be a non-empty list of positive counts"));
                }
            }
            Experiment::RepresentationResidual(p) => {
                if let Some(z) = &p.z0 {
                    state_len("experiment.z0", z, model)?;
                }
                positive_f("experiment.horizon", p.horizon)?;
                positive("experiment.n_paths", p.n_paths)?;
                let n_max = p.n_steps.iter().copied().max().unwrap_or(0);
                if n_max == 0 || p.n_steps.iter().any(|n| *n == 0 || n_max % n != 0) {
                    return Err(Error::config("experiment.n_steps", "each count must divide the largest"));
                }
                if let Some(l) = p.lambda {
                    positive_f("experiment.lambda", l)?;
                }
                fits_grid("experiment.grid", &p.grid, model)?;
                if p.grid.horizon < p.horizon {
                    return Err(Error::config("experiment.grid.horizon", "must cover the trajectory horizon"));
                }
            }
            Experiment::BihariEnvelope(p) => {
                if let Some(z) = &p.z0 {
                    state_len("experiment.z0", z, model)?;
                }
                positive_f("experiment.horizon", p.horizon)?;
                positive("experiment.n_steps", p.n_steps)?;
                positive("experiment.n_paths", p.n_paths)?;
                if p.curve_points < 2 {
                    return Err(Error::config("experiment.curve_points", "need at least 2"));
                }
            }
        }
        Ok(())
    }
}

/// Rough profile of the uniqueness scenario: `sgn(x)|x|^{3/4} + sgn(y) φ(|y|)`
/// with `φ(s) = 1/log(e + 1/s)^2` in `D1`.
pub fn rough_profile() -> RoughProfile {
    RoughProfile { alpha: 0.75, k: 1.0, modulus: Modulus::log_power(1.0, std::f64::consts::E, 1.0), saturate: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ScenarioConfig::parse("[scenario]\nname = \"gramian_sweep\"\nseed = 3\n").unwrap();
        assert_eq!(c.scenario, Scenario::GramianSweep);
        assert_eq!(c.seed, 3);
        assert_eq!(c.kind, ExampleKind::Kinetic);
        assert!(c.output.wants(Format::Csv));
        c.validate().unwrap();
    }

    #[test]
    fn missing_seed_names_the_field() {
        match ScenarioConfig::parse("[scenario]\nname = \"gramian_sweep\"\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "scenario.seed"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let src = "[scenario]\nname = \"bihari_envelope\"\nseed = 1\n[experiment]\nn_path = 3\n";
        match ScenarioConfig::parse(src) {
            Err(Error::Config { field, detail }) => {
                assert_eq!(field, "experiment");
                assert!(detail.contains("n_path"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn model_parameters_reach_the_builder() {
        let src = "[scenario]\nname = \"galerkin_wave\"\nseed = 1\n[model]\nkind = \"wave\"\ntheta = 0.4\n";
        let c = ScenarioConfig::parse(src).unwrap();
        assert_eq!(c.params.theta, 0.4);
        assert!(matches!(c.validate(), Err(Error::HypothesisViolation { .. })));
    }

    #[test]
    fn wrong_state_length_is_a_config_error() {
        let src = "[scenario]\nname = \"bihari_envelope\"\nseed = 1\n[experiment]\nz0 = [1.0]\n";
        match ScenarioConfig::parse(src).unwrap().validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "experiment.z0"),
            other => panic!("{other:?}"),
        }
    }
}
