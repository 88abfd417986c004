//! Built-in model families and drift families.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::drift::{DriftSpec, Growth, ModeSeparable};
use super::modulus::Modulus;
use super::spectral::{validate_hypotheses, Sigma, SpectralModel, TailRule};
use crate::error::{Error, Hypothesis, Result};
use crate::linalg::Mat;
use crate::observable::Expression;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    Kinetic,
    SecondOrder,
    Wave,
}

impl std::str::FromStr for ExampleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kinetic" => Ok(ExampleKind::Kinetic),
            "second_order" => Ok(ExampleKind::SecondOrder),
            "wave" => Ok(ExampleKind::Wave),
            other => Err(Error::config("model.kind", format!("unknown model family `{other}`"))),
        }
    }
}

fn default_one() -> f64 {
    1.0
}
fn default_dim() -> usize {
    1
}
fn default_modes() -> usize {
    16
}

/// Parameters of the built-in model families. Matrices are given row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleParams {
    /// Dimension of the noisy component for the kinetic and second-order families.
    #[serde(default = "default_dim")]
    pub d: usize,
    #[serde(default = "default_one")]
    pub theta: f64,
    #[serde(default = "default_dim")]
    pub d_space: usize,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub a1: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub a2: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub a0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_one")]
    pub sigma_scale: f64,
}

impl Default for ExampleParams {
    fn default() -> Self {
        ExampleParams {
            d: 1,
            theta: 1.0,
            d_space: 1,
            n_modes: 16,
            delta: None,
            a1: None,
            a2: None,
            b: None,
            a0: None,
            sigma: None,
            sigma_scale: 1.0,
        }
    }
}

impl ExampleParams {
    pub fn wave(theta: f64, d_space: usize, n_modes: usize) -> Self {
        ExampleParams { theta, d_space, n_modes, ..Default::default() }
    }
}

fn to_mat(name: &'static str, rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if r == 0 || c == 0 || rows.iter().any(|x| x.len() != c) {
        return Err(Error::param(name, "matrix rows must be non-empty and of equal length"));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

/// Scalar rough profile `K sgn(x)|x|^α + sgn(y) φ(|y|)` with arguments
/// saturated at `±R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughProfile {
    pub alpha: f64,
    #[serde(default = "default_one")]
    pub k: f64,
    pub modulus: Modulus,
    #[serde(default)]
    pub saturate: Option<f64>,
}

impl RoughProfile {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let r = self.saturate.unwrap_or(f64::INFINITY);
        let (ax, ay) = (x.abs().min(r), y.abs().min(r));
        self.k * x.signum() * ax.powf(self.alpha)
            + y.signum() * self.modulus.eval(ay)
    }

    pub fn bound(&self) -> Option<f64> {
        self.saturate.map(|r| self.k * r.powf(self.alpha) + self.modulus.eval(r))
    }

    /// Hölder constant of `sgn(x)|x|^α`.
    fn x_constant(&self) -> f64 {
        self.k * 2f64.powf(1.0 - self.alpha)
    }
}

/// Scales a modulus by a positive factor.
pub fn scale_modulus(phi: &Modulus, factor: f64) -> Modulus {
    match phi.clone() {
        Modulus::Power { k, alpha } => Modulus::Power { k: k * factor, alpha },
        Modulus::LogPower { k, c, r } => Modulus::LogPower { k: k * factor, c, r },
        Modulus::LogSqrt { k, c } => Modulus::LogSqrt { k: k * factor, c },
        Modulus::Table { points } => Modulus::Table { points: points.into_iter().map(|(s, v)| (s, v * factor)).collect() },
    }
}

fn default_eps() -> f64 {
    1e-1
}
fn default_decay() -> f64 {
    1.0
}

/// Built-in drift families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DriftFamily {
    Zero,
    /// `b ≡ value` (a single entry is broadcast to every component).
    Constant { value: Vec<f64> },
    /// `b_i = sin(x_i)`.
    SinX,
    /// `b_i = tanh(y_i / eps)`.
    TanhY {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    /// Componentwise rough profile `b_i = g(x_i, y_i)`.
    Rough(RoughProfile),
    /// `b = -y + sin(x) / sqrt(d)`, satisfying the one-sided growth bound with
    /// `ℓ(r) = 1 + r`, `h(r) = r^2 / 2`.
    Dissipative,
    /// `b_i = g(x_i, y_i) / i^decay` for the spectral family.
    Modewise {
        #[serde(default = "default_decay")]
        decay: f64,
        #[serde(flatten)]
        profile: RoughProfile,
    },
    /// Pointwise (Nemytskii) drift of the one-dimensional wave model:
    /// `b_j = ∫_0^1 g(X(ξ), Y(ξ)) e_j(ξ) dξ` with `e_j = √2 sin(jπξ)`.
    Nemytskii(RoughProfile),
    /// One expression per component in `t, x0.., y0..`, with declared regularity.
    Expr {
        components: Vec<String>,
        #[serde(default = "default_one")]
        alpha: f64,
        #[serde(default = "default_one")]
        k: f64,
        modulus: Modulus,
        #[serde(default)]
        bound: Option<f64>,
    },
}

impl DriftFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            DriftFamily::Zero => "zero",
            DriftFamily::Constant { .. } => "constant",
            DriftFamily::SinX => "sin_x",
            DriftFamily::TanhY { .. } => "tanh_y",
            DriftFamily::Rough(_) => "rough",
            DriftFamily::Dissipative => "dissipative",
            DriftFamily::Modewise { .. } => "modewise",
            DriftFamily::Nemytskii(_) => "nemytskii",
            DriftFamily::Expr { .. } => "expr",
        }
    }

    /// Instantiates the drift for state dimensions `(m, d)`.
    pub fn build(&self, m: usize, d: usize) -> Result<DriftSpec> {
        let sd = (d as f64).sqrt();
        let xi = move |i: usize| i % m.max(1);
        let spec = match self.clone() {
            DriftFamily::Zero => DriftSpec::zero(m, d),
            DriftFamily::Constant { value } => {
                let c = match value.len() {
                    1 => vec![value[0]; d],
                    n if n == d => value,
                    n => return Err(Error::config("drift.value", format!("expected 1 or {d} entries, got {n}"))),
                };
                DriftSpec::constant(m, c)
            }
            DriftFamily::SinX => {
                if m == 0 {
                    return Err(Error::config("drift.family", "sin_x needs a position component"));
                }
                DriftSpec::new(
                    "sin_x",
                    m,
                    d,
                    Arc::new(move |_, z: &[f64], out: &mut [f64]| {
                        for (i, o) in out.iter_mut().enumerate() {
                            *o = z[xi(i)].sin();
                        }
                    }),
                )
                .with_regularity(0.75, sd, Modulus::power(1.0, 0.5))
                .with_bound(sd)
                .with_lipschitz(sd)
            }
            DriftFamily::TanhY { eps } => {
                if !(eps > 0.0) {
                    return Err(Error::config("drift.eps", "must be positive"));
                }
                DriftSpec::new(
                    "tanh_y",
                    m,
                    d,
                    Arc::new(move |_, z: &[f64], out: &mut [f64]| {
                        for (i, o) in out.iter_mut().enumerate() {
                            *o = (z[m + i] / eps).tanh();
                        }
                    }),
                )
                .with_regularity(1.0, 0.0, Modulus::power(1.0 / eps, 1.0))
                .with_bound(sd)
                .with_lipschitz(1.0 / eps)
            }
            DriftFamily::Rough(p) => {
                p.modulus.validate()?;
                let (kx, phi, bound) = (p.x_constant() * sd, scale_modulus(&p.modulus, 2.0 * sd), p.bound().map(|b| b * sd));
                let mut s = DriftSpec::new(
                    "rough",
                    m,
                    d,
                    Arc::new(move |_, z: &[f64], out: &mut [f64]| {
                        for (i, o) in out.iter_mut().enumerate() {
                            *o = p.eval(if m > 0 { z[xi(i)] } else { 0.0 }, z[m + i]);
                        }
                    }),
                )
                .with_regularity(self.alpha_hint(), kx, phi);
                s.sup_bound = bound;
                s
            }
            DriftFamily::Dissipative => DriftSpec::new(
                "dissipative",
                m,
                d,
                Arc::new(move |_, z: &[f64], out: &mut [f64]| {
                    for (i, o) in out.iter_mut().enumerate() {
                        let s = if m > 0 { z[xi(i)].sin() / sd } else { 0.0 };
                        *o = -z[m + i] + s;
                    }
                }),
            )
            .with_regularity(1.0, 1.0, Modulus::power(1.0, 1.0))
            .with_lipschitz(2.0)
            .with_growth(Growth::Affine { a: 1.0, b: 1.0 }, Growth::Power { c: 0.5, p: 2.0 }),
            DriftFamily::Modewise { decay, profile } => {
                if m != d {
                    return Err(Error::Capability("modewise drifts need m = d".into()));
                }
                profile.modulus.validate()?;
                let coeffs: Vec<f64> = (1..=d).map(|i| (i as f64).powf(-decay)).collect();
                let norm_a = crate::linalg::norm(&coeffs);
                let (kx, phi, bound) = (
                    profile.x_constant() * norm_a,
                    scale_modulus(&profile.modulus, 2.0 * norm_a),
                    profile.bound().map(|b| b * norm_a),
                );
                let pr = profile.clone();
                let g: super::drift::ModeProfile = Arc::new(move |_, x, y| pr.eval(x, y));
                let (gg, cc) = (g.clone(), coeffs.clone());
                let mut s = DriftSpec::new(
                    "modewise",
                    m,
                    d,
                    Arc::new(move |t, z: &[f64], out: &mut [f64]| {
                        for (i, o) in out.iter_mut().enumerate() {
                            *o = cc[i] * gg(t, z[i], z[m + i]);
                        }
                    }),
                )
                .with_regularity(profile.alpha, kx, phi);
                s.sup_bound = bound;
                s.modewise = Some(ModeSeparable { coeffs, profile: g });
                s
            }
            DriftFamily::Nemytskii(p) => {
                if m != d {
                    return Err(Error::Capability("pointwise drifts need the wave model (m = d)".into()));
                }
                p.modulus.validate()?;
                let nq = (8 * d).max(64);
                let nodes: Vec<f64> = (0..nq).map(|q| (q as f64 + 0.5) / nq as f64).collect();
                let basis: Vec<Vec<f64>> = (1..=d)
                    .map(|j| nodes.iter().map(|xi| 2f64.sqrt() * (j as f64 * std::f64::consts::PI * xi).sin()).collect())
                    .collect();
                let (kx, phi, bound) = (p.x_constant(), scale_modulus(&p.modulus, 2.0), p.bound());
                let alpha = p.alpha;
                let mut s = DriftSpec::new(
                    "nemytskii",
                    m,
                    d,
                    Arc::new(move |_, z: &[f64], out: &mut [f64]| {
                        out.fill(0.0);
                        for q in 0..nq {
                            let (mut xv, mut yv) = (0.0, 0.0);
                            for j in 0..d {
                                xv += z[j] * basis[j][q];
                                yv += z[m + j] * basis[j][q];
                            }
                            let g = p.eval(xv, yv) / nq as f64;
                            for (j, o) in out.iter_mut().enumerate() {
                                *o += g * basis[j][q];
                            }
                        }
                    }),
                )
                .with_regularity(alpha, kx, phi);
                s.sup_bound = bound;
                s
            }
            DriftFamily::Expr { components, alpha, k, modulus, bound } => {
                if components.len() != d {
                    return Err(Error::config("drift.components", format!("expected {d} expressions")));
                }
                modulus.validate()?;
                let exprs = components
                    .iter()
                    .map(|c| Expression::parse(c, m, d))
                    .collect::<Result<Vec<_>>>()?;
                let mut s = DriftSpec::new(
                    "expr",
                    m,
                    d,
                    Arc::new(move |t, z: &[f64], out: &mut [f64]| {
                        for (o, e) in out.iter_mut().zip(&exprs) {
                            *o = e.eval(t, z);
                        }
                    }),
                )
                .with_regularity(alpha, k, modulus);
                s.sup_bound = bound;
                s
            }
        };
        Ok(spec)
    }

    fn alpha_hint(&self) -> f64 {
        match self {
            DriftFamily::Rough(p) | DriftFamily::Nemytskii(p) => p.alpha,
            DriftFamily::Modewise { profile, .. } => profile.alpha,
            _ => 1.0,
        }
    }
}

/// Volume of the unit ball in `d` dimensions.
fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// First `n` Dirichlet Laplacian eigenvalues on the unit cube `(0,1)^d_space`.
pub fn dirichlet_eigenvalues(d_space: usize, n: usize) -> Vec<f64> {
    let pi2 = std::f64::consts::PI.powi(2);
    if d_space == 1 {
        return (1..=n).map(|i| pi2 * (i * i) as f64).collect();
    }
    let k0 = (n as f64).powf(1.0 / d_space as f64).ceil() as usize;
    let kmax = ((d_space as f64).sqrt() * k0 as f64).ceil() as usize;
    let mut out = Vec::new();
    let mut idx = vec![1usize; d_space];
    loop {
        out.push(pi2 * idx.iter().map(|k| (k * k) as f64).sum::<f64>());
        let mut p = 0;
        loop {
            if p == d_space {
                out.sort_by(|a, b| a.total_cmp(b));
                out.truncate(n);
                return out;
            }
            idx[p] += 1;
            if idx[p] <= kmax {
                break;
            }
            idx[p] = 1;
            p += 1;
        }
    }
}

/// Builds a model and drift from a built-in family.
///
/// * `wave`: `λ_i` are the Dirichlet eigenvalues of the unit cube raised to
///   `θ`, `A1 = A2 = -diag(λ)`, `B = I`, `σ = I`, `A0 = 0`; requires
///   `θ > d_space/2` and `δ < 1 - d_space/(2θ)`.
/// * `second_order`: `m = d`, `A1 = 0`, `B = I`, `A2 = I`, `A0 = I`; the drift
///   is shifted by `-y` so the `Y` equation keeps its original drift.
/// * `kinetic`: user matrices (defaults `A1 = A2 = 0`, `B = I`, `σ = I`);
///   without an explicit `A0` and with `A2 = 0` the witness `A0 = -A1` is used.
pub fn build_example(kind: ExampleKind, params: &ExampleParams, drift: &DriftFamily) -> Result<(SpectralModel, DriftSpec)> {
    let model = match kind {
        ExampleKind::Wave => wave_model(params)?,
        ExampleKind::SecondOrder => {
            let d = params.d;
            let sigma = match &params.sigma {
                Some(s) => to_mat("sigma", s)?,
                None => Mat::identity(d, d) * params.sigma_scale,
            };
            SpectralModel::new(Mat::zeros(d, d), Mat::identity(d, d), Mat::identity(d, d), Some(Mat::identity(d, d)), Sigma::Constant(sigma))?
        }
        ExampleKind::Kinetic => kinetic_model(params)?,
    };
    validate_hypotheses(&model).require()?;
    let mut spec = drift.build(model.m(), model.d())?;
    if kind == ExampleKind::SecondOrder {
        spec = shift_by_minus_y(spec);
    }
    Ok((model, spec))
}

fn wave_model(p: &ExampleParams) -> Result<SpectralModel> {
    let dd = p.d_space as f64;
    if p.d_space == 0 || p.n_modes == 0 {
        return Err(Error::param("wave", "d_space and n_modes must be positive"));
    }
    if !(p.theta > dd / 2.0) {
        return Err(Error::violation(
            Hypothesis::H3,
            format!("wave model needs theta > d_space/2 (theta = {}, d_space = {})", p.theta, p.d_space),
        ));
    }
    let gap = 1.0 - dd / (2.0 * p.theta);
    let delta = p.delta.unwrap_or(gap - (0.02f64).min(0.1 * gap));
    if !(delta > 0.0 && delta < gap) {
        return Err(Error::violation(
            Hypothesis::H3,
            format!("wave model needs 0 < delta < 1 - d_space/(2 theta) = {gap} (delta = {delta})"),
        ));
    }
    let lambdas: Vec<f64> = dirichlet_eigenvalues(p.d_space, p.n_modes).into_iter().map(|l| l.powf(p.theta)).collect();
    let weyl = std::f64::consts::PI.powi(2) * (2f64.powi(p.d_space as i32) / unit_ball_volume(p.d_space)).powf(2.0 / dd);
    let tail = TailRule::PowerLaw { coeff: weyl.powf(p.theta), exponent: 2.0 * p.theta / dd };
    let n = p.n_modes;
    let sigma = match &p.sigma {
        Some(s) => to_mat("sigma", s)?,
        None => Mat::identity(n, n) * p.sigma_scale,
    };
    SpectralModel::spectral(lambdas, Sigma::Constant(sigma), delta, tail)
}

fn kinetic_model(p: &ExampleParams) -> Result<SpectralModel> {
    let a1 = match &p.a1 {
        Some(a) => to_mat("a1", a)?,
        None => Mat::zeros(p.d, p.d),
    };
    let m = a1.nrows();
    let a2 = match &p.a2 {
        Some(a) => to_mat("a2", a)?,
        None => Mat::zeros(p.d, p.d),
    };
    let d = a2.nrows();
    let b = match &p.b {
        Some(b) => to_mat("b", b)?,
        None if m == d => Mat::identity(m, d),
        None => return Err(Error::param("b", "must be given when m != d")),
    };
    let sigma = match &p.sigma {
        Some(s) => to_mat("sigma", s)?,
        None => Mat::identity(d, d) * p.sigma_scale,
    };
    let a0 = match &p.a0 {
        Some(a) => Some(to_mat("a0", a)?),
        None if a2.iter().all(|v| *v == 0.0) => Some(-a1.clone()),
        None => None,
    };
    let mut model = SpectralModel::new(a1, a2, b, a0, Sigma::Constant(sigma))?;
    if let Some(delta) = p.delta {
        model.delta = delta;
    }
    Ok(model)
}

fn shift_by_minus_y(spec: DriftSpec) -> DriftSpec {
    let inner = spec.evaluator();
    let m = spec.m;
    let mut out = DriftSpec::new(
        format!("{}-y", spec.name),
        spec.m,
        spec.d,
        Arc::new(move |t, z: &[f64], o: &mut [f64]| {
            inner(t, z, o);
            for (i, v) in o.iter_mut().enumerate() {
                *v -= z[m + i];
            }
        }),
    )
    .with_regularity(spec.alpha, spec.k, spec.modulus.clone());
    out.y_lipschitz = spec.y_lipschitz + 1.0;
    out.lipschitz = spec.lipschitz.map(|l| l + 1.0);
    out.ell = spec.ell;
    out.h = spec.h;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::drift::validate_drift_regularity;

    #[test]
    fn wave_eigenvalues_theta_one() {
        let (model, _) = build_example(ExampleKind::Wave, &ExampleParams::wave(1.0, 1, 4), &DriftFamily::Zero).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        let l = model.eigenvalues.unwrap();
        for (i, v) in l.iter().enumerate() {
            assert!((v - pi2 * ((i + 1) * (i + 1)) as f64).abs() < 1e-12 * v);
        }
    }

    #[test]
    fn wave_rejects_low_theta() {
        let e = build_example(ExampleKind::Wave, &ExampleParams::wave(0.4, 1, 4), &DriftFamily::Zero).unwrap_err();
        assert!(matches!(e, Error::HypothesisViolation { hypothesis: Hypothesis::H3, .. }));
    }

    #[test]
    fn second_order_passes_hypotheses() {
        let p = ExampleParams { d: 2, ..Default::default() };
        let (model, drift) = build_example(ExampleKind::SecondOrder, &p, &DriftFamily::Zero).unwrap();
        assert!(validate_hypotheses(&model).all_pass());
        assert_eq!(drift.eval(0.0, &[0.0, 0.0, 1.0, -2.0]), vec![-1.0, 2.0]);
    }

    #[test]
    fn cube_eigenvalues_are_sorted_lattice_values() {
        let l = dirichlet_eigenvalues(2, 3);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((l[0] - 2.0 * pi2).abs() < 1e-12);
        assert!((l[1] - 5.0 * pi2).abs() < 1e-12);
        assert!((l[2] - 5.0 * pi2).abs() < 1e-12);
    }

    #[test]
    fn declared_regularity_of_built_in_drifts_holds() {
        let rough = RoughProfile { alpha: 0.75, k: 1.0, modulus: Modulus::log_power(1.0, std::f64::consts::E.powi(3), 1.0), saturate: Some(2.0) };
        for fam in [DriftFamily::Rough(rough.clone()), DriftFamily::Nemytskii(rough.clone()), DriftFamily::Modewise { decay: 1.0, profile: rough }] {
            let (_, b) = build_example(ExampleKind::Wave, &ExampleParams::wave(1.0, 1, 3), &fam).unwrap();
            let v = validate_drift_regularity(&b, 1.0, 3000, 11).unwrap();
            assert!(v <= 1e-12, "{}: violation {v}", fam.tag());
        }
    }

    #[test]
    fn kinetic_defaults_use_minus_a1_witness() {
        let p = ExampleParams { a1: Some(vec![vec![-0.5]]), ..Default::default() };
        let (model, _) = build_example(ExampleKind::Kinetic, &p, &DriftFamily::Zero).unwrap();
        assert_eq!(model.a0.unwrap()[(0, 0)], 0.5);
    }

    #[test]
    fn drift_family_parses_from_toml() {
        let f: DriftFamily = toml::from_str("family = \"tanh_y\"\neps = 0.01").unwrap();
        assert_eq!(f, DriftFamily::TanhY { eps: 0.01 });
        let f: DriftFamily = toml::from_str(
            "family = \"rough\"\nalpha = 0.75\nmodulus = { family = \"log_power\", k = 1.0, c = 20.0, r = 1.0 }",
        )
        .unwrap();
        assert_eq!(f.tag(), "rough");
    }
}
