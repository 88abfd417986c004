//! Two trajectories from nearby initial states driven by the same noise.

use serde::{Deserialize, Serialize};

use super::integrate::{integrate_mild, MildTrajectory, Noise, RecordedNoise};
use crate::error::{Error, Result};
use crate::model::{DriftSpec, SpectralModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n_steps: usize,
    /// `sup_t |Z_t - Z̃_t|` over the steps both trajectories reached.
    pub sup_gap: f64,
    /// `|Z_T - Z̃_T|`, `None` if either trajectory blew up.
    pub terminal_gap: Option<f64>,
    pub blow_up: Option<f64>,
    pub blow_up_perturbed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub perturbation: f64,
    pub rows: Vec<GapRow>,
}

impl GapTable {
    pub const CSV_HEADER: &'static str = "perturbation,n_steps,sup_gap,terminal_gap,blow_up,blow_up_perturbed";

    pub fn csv_rows(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    self.perturbation,
                    r.n_steps,
                    r.sup_gap,
                    opt(r.terminal_gap),
                    opt(r.blow_up),
                    opt(r.blow_up_perturbed)
                )
            })
            .collect()
    }
}

fn gap_row(a: &MildTrajectory, b: &MildTrajectory) -> GapRow {
    let n = a.len().min(b.len());
    let sup_gap = (0..n)
        .map(|i| crate::linalg::norm(&a.state(i).iter().zip(b.state(i)).map(|(x, y)| x - y).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    let terminal_gap = match (a.terminal(), b.terminal()) {
        (Some(x), Some(y)) => Some(crate::linalg::norm(&x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>())),
        _ => None,
    };
    GapRow {
        n_steps: a.n_steps(),
        sup_gap,
        terminal_gap,
        blow_up: a.blow_up.map(|b| b.time),
        blow_up_perturbed: b.blow_up.map(|b| b.time),
    }
}

/// Integrates from `z0` and from `z0 + perturbation·(1, …, 1)/√dim` with the
/// same recorded noise, once per step count.
pub fn uniqueness_experiment(
    model: &SpectralModel,
    b: &DriftSpec,
    z0: &[f64],
    perturbation: f64,
    horizon: f64,
    n_steps: &[usize],
    seed: u64,
) -> Result<GapTable> {
    if !(perturbation >= 0.0) {
        return Err(Error::param("perturbation", "must be nonnegative"));
    }
    let shift = perturbation / (z0.len() as f64).sqrt();
    let z1: Vec<f64> = z0.iter().map(|v| v + shift).collect();
    let rows = n_steps
        .iter()
        .map(|&n| {
            let noise = RecordedNoise::generate(model, horizon, n, seed, 0)?;
            let a = integrate_mild(model, b, z0, horizon, n, Noise::Recorded(&noise))?;
            let p = integrate_mild(model, b, &z1, horizon, n, Noise::Recorded(&noise))?;
            Ok(gap_row(&a, &p))
        })
        .collect::<Result<_>>()?;
    Ok(GapTable { perturbation, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn sin_drift() -> DriftSpec {
        DriftSpec::new("sin", 1, 1, Arc::new(|_, z: &[f64], o: &mut [f64]| o[0] = z[0].sin() + z[1].cos())).with_lipschitz(2f64.sqrt())
    }

    #[test]
    fn zero_perturbation_gives_zero_gap() {
        let model = SpectralModel::kinetic_scalar();
        let t = uniqueness_experiment(&model, &sin_drift(), &[0.1, -0.2], 0.0, 1.0, &[16, 64, 256], 5).unwrap();
        for r in &t.rows {
            assert_eq!(r.sup_gap, 0.0);
            assert_eq!(r.terminal_gap, Some(0.0));
        }
    }

    #[test]
    fn lipschitz_gap_obeys_gronwall() {
        let model = SpectralModel::kinetic_scalar();
        let b = sin_drift();
        let t = uniqueness_experiment(&model, &b, &[0.1, -0.2], 1e-3, 1.0, &[64, 256], 5).unwrap();
        // |𝔸| = 1 for the kinetic generator
        let envelope = ((1.0 + b.lipschitz.unwrap()) * 1.0_f64).exp() * 1e-3;
        for r in &t.rows {
            assert!(r.sup_gap <= envelope, "{} > {envelope}", r.sup_gap);
            assert!(r.sup_gap >= 1e-3 * (1.0 - 1e-12));
        }
    }

    #[test]
    fn negative_perturbation_is_rejected() {
        let model = SpectralModel::kinetic_scalar();
        assert!(uniqueness_experiment(&model, &sin_drift(), &[0.0, 0.0], -1.0, 1.0, &[4], 1).is_err());
    }
}
