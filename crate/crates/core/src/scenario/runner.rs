//! Executes a scenario: computes every table in memory, then writes the
//! files once at the end.

use std::path::{Path, PathBuf};

use super::catalog::{Anchor, Scenario};
use super::config::*;
use crate::bismut::{bismut_gradient, gramian_q, scaling_exponent, variance_bound_check, verify_coupling, Component};
use crate::error::Result;
use crate::io;
use crate::linalg;
use crate::linear_flow::{gaussian_expectation, hs_noise_integral, sample_linear, transition_law, P0Method, GAUSS_HERMITE_MAX_DIM};
use crate::model::{DriftSpec, SpectralModel};
use crate::observable::Observable;
use crate::regularization::{
    galerkin::probe_radius, lambda_sweep, picard_solve, search_lambda, solve_modes, theta_forward, theta_inverse, FieldGrid, GridSpec,
    LambdaSweep, PicardReport,
};
use crate::rng::probe_points;
use crate::sde::{envelope_check, integrate_mild, residual_sweep, uniqueness_experiment, GapTable, Noise, ResidualSweep};
use crate::stats::dyadic;

/// Step of the central difference used for the exact Gaussian derivative.
const FD_STEP: f64 = 1e-3;
const GH_NODES: usize = 10;
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// One verdict the scenario can state about its own numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub anchor: Anchor,
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub summary: Vec<String>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

impl RunOutput {
    fn new(scenario: Scenario) -> Self {
        RunOutput { scenario, summary: Vec::new(), checks: Vec::new(), artifacts: Vec::new() }
    }

    fn line(&mut self, anchor: Anchor, text: String) {
        self.summary.push(format!("[{}] {}", anchor.tag(), text));
    }

    fn note(&mut self, text: String) {
        self.summary.push(text);
    }

    fn check(&mut self, anchor: Anchor, name: &str, passed: bool) {
        self.checks.push(Check { anchor, name: name.into(), passed });
        self.line(anchor, format!("check {name}: {}", if passed { "ok" } else { "FAILED" }));
    }

    fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) {
        let mut s = String::from(header);
        s.push('\n');
        for r in rows {
            s.push_str(&r);
            s.push('\n');
        }
        self.artifacts.push(Artifact { name: name.into(), bytes: s.into_bytes() });
    }

    fn bin(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push(Artifact { name: name.into(), bytes });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary_text(&self) -> String {
        let mut s = format!("scenario {}\n", self.scenario.name());
        for l in &self.summary {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    pub fn artifact(&self, name: &str) -> Option<&[u8]> {
        self.artifacts.iter().find(|a| a.name == name).map(|a| a.bytes.as_slice())
    }

    /// Writes all artifacts and the summary into `dir`, each atomically.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for a in &self.artifacts {
            let p = dir.join(&a.name);
            io::write_atomic(&p, &a.bytes)?;
            written.push(p);
        }
        let p = dir.join(SUMMARY_FILE);
        io::write_atomic(&p, self.summary_text().as_bytes())?;
        written.push(p);
        Ok(written)
    }
}

/// Runs the experiment without touching the file system.
pub fn execute(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (model, b) = cfg.build()?;
    let mut out = RunOutput::new(cfg.scenario);
    out.note(format!("model {:?}, drift {}, seed {}", cfg.kind, cfg.drift.tag(), cfg.seed));
    match &cfg.experiment {
        Experiment::KineticBismut(p) => kinetic_bismut(&mut out, cfg, &model, p)?,
        Experiment::GradientScaling(p) => gradient_scaling(&mut out, cfg, &model, p)?,
        Experiment::GramianSweep(p) => gramian_sweep(&mut out, &model, p)?,
        Experiment::PicardLambdaSweep(p) => picard_lambda(&mut out, cfg, &model, &b, p)?,
        Experiment::GalerkinWave(p) => galerkin_wave(&mut out, &model, &b, p)?,
        Experiment::UniquenessRough(p) => uniqueness(&mut out, cfg, &model, &b, p)?,
        Experiment::RepresentationResidual(p) => representation(&mut out, cfg, &model, &b, p)?,
        Experiment::BihariEnvelope(p) => envelope(&mut out, cfg, &model, &b, p)?,
    }
    Ok(out)
}

/// Runs the experiment and writes its outputs under the configured directory
/// (or `override_dir/<scenario>`).
pub fn run(cfg: &ScenarioConfig, override_dir: Option<&Path>) -> Result<(RunOutput, PathBuf)> {
    let out = execute(cfg)?;
    let dir = cfg.output_dir(override_dir);
    out.write(&dir)?;
    Ok((out, dir))
}

fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

/// `∇_v E f(Z_T^z)` by central differences of the exact Gaussian expectation.
fn exact_gradient(model: &SpectralModel, t: f64, f: &Observable, z: &[f64], v: &[f64]) -> Result<f64> {
    let method = P0Method::GaussHermite { nodes: GH_NODES };
    let shifted = |sign: f64| -> Result<f64> {
        let zs: Vec<f64> = z.iter().zip(v).map(|(a, b)| a + sign * FD_STEP * b).collect();
        let law = transition_law(model, 0.0, t, &zs)?;
        Ok(gaussian_expectation(&law, &|x| f.eval(x), method)?.value)
    };
    Ok((shifted(1.0)? - shifted(-1.0)?) / (2.0 * FD_STEP))
}

fn kinetic_bismut(out: &mut RunOutput, cfg: &ScenarioConfig, model: &SpectralModel, p: &BismutParams) -> Result<()> {
    let (m, dim) = (model.m(), model.dim());
    let dirs = [(Component::X, unit(dim, 0)), (Component::Y, unit(dim, m))];
    let exact_available = dim <= GAUSS_HERMITE_MAX_DIM;
    let mut rows = Vec::new();
    let mut within = 0;
    let mut total = 0;
    for src in &p.observables {
        let f = Observable::parse(src, m, model.d())?;
        for (comp, v) in &dirs {
            let est = bismut_gradient(model, 0.0, p.horizon, &f, &p.point, v, p.n_paths, p.n_steps, cfg.seed)?;
            let exact = if exact_available { exact_gradient(model, p.horizon, &f, &p.point, v)? } else { f64::NAN };
            let z = (est.value - exact) / est.stderr.max(f64::MIN_POSITIVE);
            if exact_available {
                total += 1;
                if est.within(exact, 5.0) {
                    within += 1;
                }
                out.line(
                    Anchor::BismutFormula,
                    format!("f = {src}, v = e_{}: {} ± {} vs exact {} (z = {:.2})", comp.label(), est.value, est.stderr, exact, z),
                );
            }
            rows.push(format!("{},{},{},{}", src, est.csv_row(comp.label()), exact, z));
        }
    }
    out.csv("gradients.csv", "observable,s,T,component,direction,value,stderr,n_paths,seed,exact,z_score", rows);
    if exact_available {
        out.check(Anchor::BismutFormula, &format!("{within}/{total} estimates within 5 stderr"), within == total);
    }

    let mut rows = Vec::new();
    let mut ok = true;
    for (comp, v) in &dirs {
        let c = verify_coupling(model, 0.0, p.horizon, v, p.eps, p.n_paths, p.n_steps, cfg.seed)?;
        out.line(
            Anchor::ControlledCoupling,
            format!(
                "v = e_{}: terminal gap {:e}, Girsanov mean {} ± {}",
                comp.label(),
                c.terminal_gap,
                c.girsanov.value,
                c.girsanov.stderr
            ),
        );
        ok &= c.terminal_gap <= 1e-8 && c.girsanov.within(1.0, 5.0);
        rows.push(format!("{},{},{},{},{}", comp.label(), p.eps, c.terminal_gap, c.girsanov.value, c.girsanov.stderr));
    }
    out.csv("coupling.csv", "component,eps,terminal_gap,girsanov_mean,girsanov_stderr", rows);
    out.check(Anchor::ControlledCoupling, "terminal gap <= 1e-8 and Girsanov mean 1 within 5 stderr", ok);

    if cfg.output.wants(Format::Bin) {
        let bundle = sample_linear(model, 0.0, p.horizon, &p.point, p.bundle_paths, p.n_steps, cfg.seed)?;
        out.bin("bundle.bin", io::bundle_to_bytes(&bundle)?);
    }
    Ok(())
}

fn gradient_scaling(out: &mut RunOutput, cfg: &ScenarioConfig, model: &SpectralModel, p: &ScalingParams) -> Result<()> {
    let gaps = dyadic(p.gap_exponents[0], p.gap_exponents[1]);
    let mut rows = Vec::new();
    let mut ok = true;
    for (comp, src, predicted) in [
        (Component::X, &p.x_observable, -1.5 * (1.0 - p.alpha)),
        (Component::Y, &p.y_observable, -0.5 * (1.0 - p.alpha)),
    ] {
        let f = Observable::parse(src, model.m(), model.d())?;
        let r = scaling_exponent(model, &f, comp, &gaps, p.n_paths, p.n_steps, cfg.seed)?;
        for ((g, s), e) in r.gaps.iter().zip(&r.sups).zip(&r.stderrs) {
            rows.push(format!("{},{},{},{}", comp.label(), g, s, e));
        }
        out.line(
            Anchor::GradientScaling,
            format!(
                "{}-direction, f = {src}: slope {:.4} vs exponent {predicted}{}",
                comp.label(),
                r.slope,
                if r.wide_confidence { " (wide confidence)" } else { "" }
            ),
        );
        ok &= (r.slope - predicted).abs() <= 0.2;
    }
    out.csv("scaling.csv", "component,gap,sup_gradient,stderr", rows);
    out.check(Anchor::GradientScaling, "slopes within 0.2 of the predicted exponents", ok);
    Ok(())
}

fn gramian_sweep(out: &mut RunOutput, model: &SpectralModel, p: &GramianParams) -> Result<()> {
    let (m, dim) = (model.m(), model.dim());
    let mut rows = Vec::new();
    let mut scaled = Vec::new();
    for t in dyadic(p.exponents[0], p.exponents[1]) {
        let g = gramian_q(model, t)?;
        let s = linalg::op_norm(&g.q_inv) * t.powi(3);
        let vx = variance_bound_check(model, 0.0, t, &unit(dim, 0))?.ratio;
        let vy = variance_bound_check(model, 0.0, t, &unit(dim, m))?.ratio;
        rows.push(format!("{t},{s},{vx},{vy}"));
        scaled.push(s);
    }
    out.csv("gramian.csv", "t,q_inv_norm_t3,energy_ratio_x,energy_ratio_y", rows);
    let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().copied().fold(0.0, f64::max);
    out.line(Anchor::GramianScaling, format!("|Q_t^-1| t^3 ranges over [{lo}, {hi}]"));
    out.check(Anchor::GramianScaling, "|Q_t^-1| t^3 bounded", hi.is_finite() && lo > 0.0);
    Ok(())
}

fn picard_lambda(out: &mut RunOutput, cfg: &ScenarioConfig, model: &SpectralModel, b: &DriftSpec, p: &PicardParams) -> Result<()> {
    let search = search_lambda(model, b, &p.grid, p.tol, p.max_iter)?;
    out.line(
        Anchor::PicardContraction,
        format!(
            "lambda = {} after {} attempts; largest factor {}",
            search.lambda,
            search.attempts.len(),
            search.report.max_factor().map_or("-".into(), |f| f.to_string())
        ),
    );
    out.check(Anchor::PicardContraction, "contraction factor <= 1/2 at the searched lambda", search.report.contracts_by_half());
    out.csv(
        "lambda_search.csv",
        "lambda,max_factor",
        search.attempts.iter().map(|(l, f)| format!("{l},{}", f.map_or(String::new(), |f| f.to_string()))),
    );
    out.artifacts.push(Artifact { name: "picard.csv".into(), bytes: search.report.to_csv().into_bytes() });

    let lambdas = dyadic(p.lambda_exponents[0], p.lambda_exponents[1]);
    let sweep: LambdaSweep = lambda_sweep(model, b, &p.grid, &lambdas, p.tol, p.max_iter)?;
    out.csv("lambda_sweep.csv", LambdaSweep::CSV_HEADER, sweep.csv_rows());
    out.line(Anchor::ResolventDecay, format!("slope of sup|u| + sup|grad u|: {:.4} vs -0.5", sweep.h_norm_slope));
    out.note(format!("slope of sup|u|: {:.4}; slope of sup|grad_y u|: {:.4}", sweep.sup_slope, sweep.grad2_slope));
    out.check(Anchor::ResolventDecay, "norm slope within [-0.6, -0.4]", (-0.6..=-0.4).contains(&sweep.h_norm_slope));

    round_trip(out, &search.field, &search.report, p.round_trip_probes)?;
    if cfg.output.wants(Format::Bin) {
        let desc = format!("lambda = {}, drift {}", search.lambda, b.name);
        out.bin("field.bin", io::field_to_bytes(&search.field, &desc)?);
    }
    Ok(())
}

fn round_trip(out: &mut RunOutput, field: &FieldGrid, report: &PicardReport, n: usize) -> Result<()> {
    if !(report.grad2_sup < 1.0) {
        out.line(Anchor::TransformInverse, format!("sup |grad_y u| = {} >= 1; round trip skipped", report.grad2_sup));
        return Ok(());
    }
    let (lo, hi) = (field.lo(), field.hi());
    let radius = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min) * 0.8;
    let centre: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut rows = Vec::new();
    let mut worst = 0.0_f64;
    for (i, q) in probe_points(n, field.dim(), radius).into_iter().enumerate() {
        let z: Vec<f64> = q.iter().zip(&centre).map(|(a, c)| a + c).collect();
        let back = theta_inverse(field, 0.0, &theta_forward(field, 0.0, &z))?;
        let err = back.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        rows.push(format!("{i},{err}"));
    }
    out.csv("round_trip.csv", "probe,error", rows);
    out.line(Anchor::TransformInverse, format!("sup |grad_y u| = {}, round-trip error {worst:e}", report.grad2_sup));
    out.check(Anchor::TransformInverse, "round-trip error <= 1e-9", worst <= 1e-9);
    Ok(())
}

fn galerkin_wave(out: &mut RunOutput, model: &SpectralModel, b: &DriftSpec, p: &GalerkinParams) -> Result<()> {
    let n_ref = model.m();
    let modes = solve_modes(model, b, p.lambda, n_ref, &p.grid)?;
    let radius = probe_radius(&p.grid);
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for &n in &p.levels {
        let g = modes.gap(n, n_ref, radius)?;
        out.line(Anchor::GalerkinLimit, format!("n = {n} vs {n_ref}: value gap {}, gradient gap {}", g.value_gap, g.grad_gap));
        rows.push(format!("{n},{n_ref},{},{},{}", p.lambda, g.value_gap, g.grad_gap));
        gaps.push(g);
    }
    out.csv("galerkin.csv", "n,n_reference,lambda,value_gap,grad_gap", rows);
    let monotone = gaps.windows(2).all(|w| w[1].value_gap < w[0].value_gap && w[1].grad_gap < w[0].grad_gap);
    out.check(Anchor::GalerkinLimit, "value and gradient gaps decrease with n", monotone);

    let hs = hs_noise_integral(model, 0.0, 1.0)?;
    let mut rows = Vec::new();
    let mut below = true;
    for (g, v) in hs.gaps.iter().zip(&hs.values) {
        let bound = hs.bound_c2 * g.powf(model.delta);
        below &= *v <= bound;
        rows.push(format!("{g},{v},{bound}"));
    }
    out.csv("noise_bound.csv", "gap,value,bound", rows);
    out.line(
        Anchor::NoiseBound,
        format!("c2 = {}, delta = {}, fitted exponent {:.4}", hs.bound_c2, model.delta, hs.exponent_check),
    );
    out.check(Anchor::NoiseBound, "value <= c2 gap^delta at every gap", below);
    Ok(())
}

fn start(z0: &Option<Vec<f64>>, model: &SpectralModel, fill: f64) -> Vec<f64> {
    z0.clone().unwrap_or_else(|| vec![fill; model.dim()])
}

fn uniqueness(out: &mut RunOutput, cfg: &ScenarioConfig, model: &SpectralModel, b: &DriftSpec, p: &UniquenessParams) -> Result<()> {
    let z0 = start(&p.z0, model, 0.0);
    let tables: Vec<GapTable> = p
        .perturbations
        .iter()
        .map(|&e| uniqueness_experiment(model, b, &z0, e, p.horizon, &p.n_steps, cfg.seed))
        .collect::<Result<_>>()?;
    out.csv("gaps.csv", GapTable::CSV_HEADER, tables.iter().flat_map(|t| t.csv_rows()));
    for t in &tables {
        let cells: Vec<String> = t
            .rows
            .iter()
            .map(|r| format!("n={}: {}", r.n_steps, r.terminal_gap.map_or("blow-up".into(), |g| g.to_string())))
            .collect();
        out.line(Anchor::PathwiseUniqueness, format!("perturbation {}: terminal gap {}", t.perturbation, cells.join(", ")));
    }
    if let Some(t) = tables.iter().find(|t| t.perturbation == 0.0) {
        out.check(Anchor::PathwiseUniqueness, "zero perturbation gives gap exactly 0", t.rows.iter().all(|r| r.sup_gap == 0.0));
    }
    let mut positive: Vec<&GapTable> = tables.iter().filter(|t| t.perturbation > 0.0).collect();
    positive.sort_by(|a, b| b.perturbation.total_cmp(&a.perturbation));
    if positive.len() >= 2 {
        let monotone = (0..p.n_steps.len()).all(|k| {
            positive.windows(2).all(|w| match (w[0].rows[k].terminal_gap, w[1].rows[k].terminal_gap) {
                (Some(a), Some(b)) => b < a,
                _ => false,
            })
        });
        out.check(Anchor::PathwiseUniqueness, "terminal gap decreases with the perturbation", monotone);
    }
    Ok(())
}

fn representation(out: &mut RunOutput, cfg: &ScenarioConfig, model: &SpectralModel, b: &DriftSpec, p: &ResidualParams) -> Result<()> {
    let z0 = start(&p.z0, model, 0.0);
    let (lambda, field) = solve_field(model, b, p.lambda, &p.grid, p.tol, p.max_iter)?;
    out.note(format!("lambda = {lambda}, sup |grad_y u| = {}", field.1.grad2_sup));
    let sweep = residual_sweep(model, b, &field.0, lambda, &z0, p.horizon, &p.n_steps, p.n_paths, cfg.seed)?;
    out.csv("residual.csv", ResidualSweep::CSV_HEADER, sweep.csv_rows());
    let cells: Vec<String> = sweep.csv_rows().iter().map(|r| r.replace(',', ": ")).collect();
    out.line(Anchor::RepresentationIdentity, format!("rms max residual per step count {}", cells.join(", ")));
    out.line(Anchor::RepresentationIdentity, format!("smallest ratio per doubling {:.4}", sweep.min_ratio()));
    out.check(Anchor::RepresentationIdentity, "residual ratio per doubling >= 1.3", sweep.min_ratio() >= 1.3);
    if cfg.output.wants(Format::Bin) {
        let n = *p.n_steps.iter().max().expect("validated");
        let traj = integrate_mild(model, b, &z0, p.horizon, n, Noise::Seed { seed: cfg.seed, index: 0 })?;
        out.bin("trajectory.bin", io::trajectory_to_bytes(&traj)?);
    }
    Ok(())
}

type Solved = (FieldGrid, PicardReport);

fn solve_field(model: &SpectralModel, b: &DriftSpec, lambda: Option<f64>, grid: &GridSpec, tol: f64, max_iter: usize) -> Result<(f64, Solved)> {
    match lambda {
        Some(l) => Ok((l, picard_solve(model, b, l, grid, tol, max_iter)?)),
        None => {
            let s = search_lambda(model, b, grid, tol, max_iter)?;
            Ok((s.lambda, (s.field, s.report)))
        }
    }
}

fn envelope(out: &mut RunOutput, cfg: &ScenarioConfig, model: &SpectralModel, b: &DriftSpec, p: &EnvelopeParams) -> Result<()> {
    let z0 = start(&p.z0, model, 0.5);
    let r = envelope_check(model, b, &z0, p.horizon, p.n_steps, p.n_paths, p.curve_points, cfg.seed)?;
    out.csv("envelope.csv", crate::sde::EnvelopeReport::CSV_HEADER, [r.csv_row()]);
    out.line(
        Anchor::NonExplosion,
        format!(
            "{} paths: {} blow-ups, {} envelope violations, largest ratio {:.4}, {} non-Osgood curves",
            r.n_paths, r.blow_ups, r.violations, r.max_ratio, r.non_osgood
        ),
    );
    out.check(Anchor::NonExplosion, "no blow-up and no path above its envelope", r.blow_ups == 0 && r.violations == 0);
    Ok(())
}
