//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use degsde::bismut::{bismut_gradient, gramian_q, scaling_exponent, verify_coupling, Component};
use degsde::linalg::{self, Mat};
use degsde::linear_flow::hs_noise_integral;
use degsde::model::{build_example, DriftFamily, DriftSpec, ExampleKind, ExampleParams, Modulus, RoughProfile, Sigma, SpectralModel, TailRule};
use degsde::observable::Observable;
use degsde::regularization::{
    galerkin_compare, lambda_sweep, picard_solve, search_lambda, theta_forward, theta_inverse, Axis, FieldGrid, GridSpec,
};
use degsde::rng::probe_points;
use degsde::sde::{envelope_check, residual_sweep, uniqueness_experiment};
use degsde::stats::dyadic;

const GRAMIAN_REL_TOL: f64 = 1e-9;
const GRAMIAN_BUDGET: Duration = Duration::from_secs(1);
const BISMUT_PATHS: usize = 100_000;
const BISMUT_STEPS: usize = 64;
const STDERR_K: f64 = 5.0;
const BISMUT_BUDGET: Duration = Duration::from_secs(30);
const COUPLING_GAP_TOL: f64 = 1e-8;
const COUPLING_EPS: f64 = 0.5;
const SLOPE_TOL: f64 = 0.2;
const SCALING_BUDGET: Duration = Duration::from_secs(300);
const HS_CLOSED_FORM_TOL: f64 = 1e-12;
const CONTRACTION: f64 = 0.5;
const CONSTANT_DRIFT_TOL: f64 = 1e-8;
const DECAY_SLOPE: (f64, f64) = (-0.6, -0.4);
const PICARD_BUDGET: Duration = Duration::from_secs(120);
const ROUND_TRIP_TOL: f64 = 1e-9;
const RESIDUAL_RATIO: f64 = 1.3;
const ENVELOPE_PATHS: usize = 1000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let t0 = Instant::now();
    let mut o = f();
    let elapsed = t0.elapsed();
    o.detail.push_str(&format!("; {:.2}s of {}s", elapsed.as_secs_f64(), budget.as_secs()));
    o.passed &= elapsed <= budget;
    o
}

fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

fn gramian_scaling() -> Outcome {
    timed(GRAMIAN_BUDGET, || {
        let model = SpectralModel::kinetic_scalar();
        let mut worst = 0.0_f64;
        for t in dyadic(-6, 0) {
            let q = gramian_q(&model, t).unwrap();
            worst = worst.max((linalg::op_norm(&q.q_inv) * t.powi(3) / 6.0 - 1.0).abs());
        }
        outcome(worst <= GRAMIAN_REL_TOL, format!("max relative deviation from 6: {worst:.2e}"))
    })
}

/// `∇_v E f(Z_T)` for quadratic `f` on the scalar kinetic model, where
/// `E Z_T = (x + yT, y)` and the covariance does not depend on `z`.
fn kinetic_quadratic_gradient(name: &str, z: &[f64], v: &[f64], t: f64) -> f64 {
    let mu = [z[0] + z[1] * t, z[1]];
    let dmu = [v[0] + v[1] * t, v[1]];
    match name {
        "x0" => dmu[0],
        "y0" => dmu[1],
        "x0^2" => 2.0 * mu[0] * dmu[0],
        "y0^2" => 2.0 * mu[1] * dmu[1],
        "x0*y0" => dmu[0] * mu[1] + mu[0] * dmu[1],
        _ => unreachable!(),
    }
}

fn bismut_vs_analytic() -> Outcome {
    timed(BISMUT_BUDGET, || {
        let model = SpectralModel::kinetic_scalar();
        let z = [0.5, -0.3];
        let mut fails = Vec::new();
        let mut worst = 0.0_f64;
        for name in ["x0", "y0", "x0^2", "y0^2", "x0*y0"] {
            let f = Observable::parse(name, 1, 1).unwrap();
            for v in [unit(2, 0), unit(2, 1)] {
                let est = bismut_gradient(&model, 0.0, 1.0, &f, &z, &v, BISMUT_PATHS, BISMUT_STEPS, 11).unwrap();
                let exact = kinetic_quadratic_gradient(name, &z, &v, 1.0);
                worst = worst.max((est.value - exact).abs() / est.stderr);
                if !est.within(exact, STDERR_K) {
                    fails.push(format!("{name} along {v:?}"));
                }
            }
        }
        outcome(fails.is_empty(), format!("10 probes, largest |z| = {worst:.2}; failing {fails:?}"))
    })
}

fn coupling_and_girsanov() -> Outcome {
    let model = SpectralModel::kinetic_scalar();
    let mut passed = true;
    let mut parts = Vec::new();
    for v in [unit(2, 0), unit(2, 1)] {
        let r = verify_coupling(&model, 0.0, 1.0, &v, COUPLING_EPS, BISMUT_PATHS, BISMUT_STEPS, 13).unwrap();
        passed &= r.terminal_gap <= COUPLING_GAP_TOL && r.girsanov.within(1.0, STDERR_K);
        parts.push(format!("gap {:.1e}, mean {:.4} ± {:.4}", r.terminal_gap, r.girsanov.value, r.girsanov.stderr));
    }
    outcome(passed, parts.join("; "))
}

fn gradient_scaling() -> Outcome {
    timed(SCALING_BUDGET, || {
        let model = SpectralModel::kinetic_scalar();
        let gaps = dyadic(-8, -3);
        let fx = Observable::parse("tanh(x0/1e-6)", 1, 1).unwrap();
        let fy = Observable::parse("tanh(y0/1e-6)", 1, 1).unwrap();
        let sx = scaling_exponent(&model, &fx, Component::X, &gaps, 20_000, 16, 31).unwrap().slope;
        let sy = scaling_exponent(&model, &fy, Component::Y, &gaps, 20_000, 16, 31).unwrap().slope;
        let passed = (sx + 1.5).abs() <= SLOPE_TOL && (sy + 0.5).abs() <= SLOPE_TOL;
        outcome(passed, format!("x slope {sx:.4} (want -1.5), y slope {sy:.4} (want -0.5)"))
    })
}

fn noise_bound() -> Outcome {
    let (wave, _) = build_example(ExampleKind::Wave, &ExampleParams::wave(1.0, 1, 16), &DriftFamily::Zero).unwrap();
    let r = hs_noise_integral(&wave, 0.0, 1.0).unwrap();
    let below = r.gaps.iter().zip(&r.values).all(|(g, v)| *v <= r.bound_c2 * g.powf(wave.delta));
    let single = SpectralModel::spectral(vec![1.0], Sigma::Constant(Mat::identity(1, 1)), 0.4, TailRule::None).unwrap();
    let value = hs_noise_integral(&single, 0.0, 0.5).unwrap().value;
    let err = (value - (1.0 - (-1.0f64).exp()) / 2.0).abs();
    outcome(
        below && err <= HS_CLOSED_FORM_TOL,
        format!("{} gaps below c2 (t-s)^delta = {:.3} (t-s)^{}: {below}; single-mode error {err:.1e}", r.gaps.len(), r.bound_c2, wave.delta),
    )
}

fn sharp_grid() -> GridSpec {
    GridSpec { axes: vec![Axis::uniform(-4.0, 4.0, 65), Axis::stretched(-4.0, 4.0, 65, 8.0)], time_nodes: 33, horizon: 1.0 }
}

fn picard_fixed_point(field_out: &mut Option<(FieldGrid, f64)>) -> Outcome {
    timed(PICARD_BUDGET, || {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftFamily::TanhY { eps: 5e-4 }.build(1, 1).unwrap();
        let spec = sharp_grid();
        let search = search_lambda(&model, &b, &spec, 1e-10, 200).unwrap();
        let factor = search.report.max_factor().unwrap_or(0.0);
        let contracts = search.report.contracts_by_half() && factor <= CONTRACTION;

        let c = 0.7;
        let lambda = 32.0;
        let (u, _) = picard_solve(&model, &DriftSpec::constant(1, vec![c]), lambda, &GridSpec::uniform(2, -4.0, 4.0, 65, 33, 1.0), 1e-12, 50).unwrap();
        let mut const_err = 0.0_f64;
        for (ti, s) in u.times.iter().enumerate() {
            let exact = c * (1.0 - (-lambda * (1.0 - s)).exp()) / lambda;
            const_err = u.slice(ti).iter().fold(const_err, |e, v| e.max((v - exact).abs()));
        }

        let sweep = lambda_sweep(&model, &b, &spec, &dyadic(4, 10), 1e-10, 200).unwrap();
        let slope_ok = (DECAY_SLOPE.0..=DECAY_SLOPE.1).contains(&sweep.h_norm_slope);
        let detail = format!(
            "lambda {} with factor {factor:.3}; constant-drift error {const_err:.1e}; norm slope {:.4} (sup-norm slope {:.4})",
            search.lambda, sweep.h_norm_slope, sweep.sup_slope
        );
        *field_out = Some((search.field, search.report.grad2_sup));
        outcome(contracts && const_err <= CONSTANT_DRIFT_TOL && slope_ok, detail)
    })
}

fn transform_round_trip(field: &Option<(FieldGrid, f64)>) -> Outcome {
    let Some((field, grad_sup)) = field else {
        return outcome(false, "no field from the fixed-point criterion".into());
    };
    if grad_sup.is_nan() || *grad_sup >= 1.0 {
        return outcome(false, format!("sup |grad_y u| = {grad_sup} >= 1"));
    }
    let mut worst = 0.0_f64;
    for s in [0.0, 0.5] {
        for z in probe_points(128, 2, 3.2) {
            let back = theta_inverse(field, s, &theta_forward(field, s, &z)).unwrap();
            worst = back.iter().zip(&z).fold(worst, |w, (a, b)| w.max((a - b).abs()));
        }
    }
    outcome(worst <= ROUND_TRIP_TOL, format!("sup |grad_y u| = {grad_sup:.3}, max error {worst:.1e} over 256 probes"))
}

fn galerkin_convergence() -> Outcome {
    let profile = RoughProfile { alpha: 0.75, k: 1.0, modulus: Modulus::log_power(1.0, std::f64::consts::E, 1.0), saturate: Some(3.0) };
    let (wave, b) = build_example(ExampleKind::Wave, &ExampleParams::wave(1.0, 1, 16), &DriftFamily::Modewise { decay: 1.0, profile }).unwrap();
    let spec = GridSpec::uniform(2, -3.0, 3.0, 33, 17, 1.0);
    let gaps: Vec<_> = [2, 4, 8].iter().map(|&n| galerkin_compare(&wave, &b, 32.0, n, 16, &spec).unwrap()).collect();
    let monotone = gaps.windows(2).all(|w| w[1].value_gap < w[0].value_gap && w[1].grad_gap < w[0].grad_gap);
    let cells: Vec<String> = gaps.iter().map(|g| format!("n={}: {:.2e}/{:.2e}", g.n_small, g.value_gap, g.grad_gap)).collect();
    outcome(monotone, format!("value/gradient gaps vs 16 modes {}", cells.join(", ")))
}

fn representation_identity() -> Outcome {
    let model = SpectralModel::kinetic_scalar();
    let steps = [128, 256, 512, 1024, 2048];
    let constant = DriftSpec::constant(1, vec![0.7]);
    let small = GridSpec::uniform(2, -8.0, 8.0, 9, 2049, 1.0);
    let (u, _) = picard_solve(&model, &constant, 8.0, &small, 1e-12, 100).unwrap();
    let a = residual_sweep(&model, &constant, &u, 8.0, &[0.0, 0.0], 1.0, &steps, 16, 7).unwrap();

    let rough = DriftFamily::Rough(RoughProfile {
        alpha: 0.75,
        k: 0.0,
        modulus: Modulus::log_power(1.0, std::f64::consts::E, 1.0),
        saturate: Some(6.0),
    })
    .build(1, 1)
    .unwrap();
    let grid = GridSpec { axes: vec![Axis::uniform(-6.0, 6.0, 3), Axis::uniform(-6.0, 6.0, 257)], time_nodes: 2049, horizon: 1.0 };
    let (u, _) = picard_solve(&model, &rough, 16.0, &grid, 1e-10, 200).unwrap();
    let r = residual_sweep(&model, &rough, &u, 16.0, &[0.0, 0.0], 1.0, &steps, 64, 7).unwrap();
    outcome(
        a.min_ratio() >= RESIDUAL_RATIO && r.min_ratio() >= RESIDUAL_RATIO,
        format!("smallest ratio per doubling: constant {:.3}, rough {:.3}", a.min_ratio(), r.min_ratio()),
    )
}

fn pathwise_uniqueness() -> Outcome {
    let model = SpectralModel::kinetic_scalar();
    let b = DriftFamily::Rough(RoughProfile { alpha: 0.75, k: 1.0, modulus: Modulus::log_power(1.0, std::f64::consts::E, 1.0), saturate: None })
        .build(1, 1)
        .unwrap();
    let steps = [256, 1024, 4096];
    let run = |e: f64| uniqueness_experiment(&model, &b, &[0.0, 0.0], e, 1.0, &steps, 17).unwrap();
    let zero = run(0.0).rows.iter().all(|r| r.sup_gap == 0.0 && r.terminal_gap == Some(0.0));
    let tables: Vec<_> = [1e-2, 1e-3, 1e-4].iter().map(|&e| run(e)).collect();
    let monotone = (0..steps.len()).all(|k| {
        tables.windows(2).all(|w| match (w[0].rows[k].terminal_gap, w[1].rows[k].terminal_gap) {
            (Some(a), Some(b)) => b < a,
            _ => false,
        })
    });
    let at_1024: Vec<String> = tables.iter().map(|t| format!("{:.2e}", t.rows[1].terminal_gap.unwrap_or(f64::NAN))).collect();
    outcome(zero && monotone, format!("zero gap exact: {zero}; terminal gaps at n=1024 {}", at_1024.join(" > ")))
}

fn non_explosion() -> Outcome {
    let (model, b) = build_example(ExampleKind::Kinetic, &ExampleParams::default(), &DriftFamily::Dissipative).unwrap();
    let r = envelope_check(&model, &b, &[0.5, 0.5], 1.0, 512, ENVELOPE_PATHS, 65, 3).unwrap();
    outcome(
        r.blow_ups == 0 && r.violations == 0 && r.n_paths == ENVELOPE_PATHS,
        format!("{} paths, {} blow-ups, {} violations, largest ratio {:.3}", r.n_paths, r.blow_ups, r.violations, r.max_ratio),
    )
}

fn main() -> ExitCode {
    let mut field = None;
    let results = [
        ("1 gramian scaling", gramian_scaling()),
        ("2 bismut vs analytic", bismut_vs_analytic()),
        ("3 coupling and girsanov", coupling_and_girsanov()),
        ("4 gradient scaling exponents", gradient_scaling()),
        ("5 noise bound", noise_bound()),
        ("6 picard fixed point", picard_fixed_point(&mut field)),
        ("7 transform invertibility", transform_round_trip(&field)),
        ("8 galerkin convergence", galerkin_convergence()),
        ("9 representation identity", representation_identity()),
        ("10 pathwise uniqueness evidence", pathwise_uniqueness()),
        ("11 non-explosion envelope", non_explosion()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
