use degsde::bismut::gramian_q;
use degsde::linalg;
use degsde::linear_flow::transition_law;
use degsde::model::{DriftFamily, Modulus, RoughProfile, SpectralModel};
use degsde::sde::{bihari_bound, integrate_mild, uniqueness_experiment, Noise, RecordedNoise};
use proptest::prelude::*;

fn rough() -> DriftFamily {
    DriftFamily::Rough(RoughProfile { alpha: 0.75, k: 1.0, modulus: Modulus::log_power(1.0, std::f64::consts::E, 1.0), saturate: None })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scalar_gramian_inverse_scales_exactly(t in 1e-3f64..4.0) {
        let q = gramian_q(&SpectralModel::kinetic_scalar(), t).unwrap();
        prop_assert!((linalg::op_norm(&q.q_inv) * t.powi(3) / 6.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_perturbation_gives_zero_gap(seed in any::<u64>(), x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let model = SpectralModel::kinetic_scalar();
        let b = rough().build(1, 1).unwrap();
        let t = uniqueness_experiment(&model, &b, &[x, y], 0.0, 1.0, &[32, 128], seed).unwrap();
        for r in t.rows {
            prop_assert_eq!(r.sup_gap, 0.0);
        }
    }

    #[test]
    fn zero_drift_flow_is_affine_in_the_initial_state(seed in any::<u64>(), w0 in -3.0f64..3.0, w1 in -3.0f64..3.0) {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftFamily::Zero.build(1, 1).unwrap();
        let noise = RecordedNoise::generate(&model, 1.0, 64, seed, 0).unwrap();
        let a = integrate_mild(&model, &b, &[0.0, 0.0], 1.0, 64, Noise::Recorded(&noise)).unwrap();
        let c = integrate_mild(&model, &b, &[w0, w1], 1.0, 64, Noise::Recorded(&noise)).unwrap();
        let shift = transition_law(&model, 0.0, 1.0, &[w0, w1]).unwrap().mean;
        let (za, zc) = (a.terminal().unwrap(), c.terminal().unwrap());
        for i in 0..2 {
            prop_assert!((zc[i] - za[i] - shift[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn coarsened_noise_reproduces_linear_paths(seed in any::<u64>(), factor in prop::sample::select(vec![2usize, 4, 8])) {
        let model = SpectralModel::kinetic_scalar();
        let b = DriftFamily::Zero.build(1, 1).unwrap();
        let fine = RecordedNoise::generate(&model, 1.0, 64, seed, 3).unwrap();
        let coarse = fine.coarsen(&model, factor).unwrap();
        let n = 64 / factor;
        let dw_fine: f64 = fine.dw.iter().sum();
        let dw_coarse: f64 = coarse.dw.iter().sum();
        prop_assert!((dw_fine - dw_coarse).abs() < 1e-12);
        let zf = integrate_mild(&model, &b, &[0.3, -0.2], 1.0, 64, Noise::Recorded(&fine)).unwrap();
        let zc = integrate_mild(&model, &b, &[0.3, -0.2], 1.0, n, Noise::Recorded(&coarse)).unwrap();
        for k in 0..=n {
            let (a, c) = (zf.state(k * factor), zc.state(k));
            prop_assert!(a.iter().zip(c).all(|(u, v)| (u - v).abs() < 1e-12));
        }
    }

    #[test]
    fn bihari_envelope_is_monotone(eta in 0.0f64..5.0, bump in 0.01f64..2.0, c_env in 1.5f64..4.0) {
        let ell = |r: f64| 1.0 + r;
        let lo = bihari_bound(&ell, eta, 1.0, c_env, 17).unwrap();
        let hi = bihari_bound(&ell, eta + bump, 1.0, c_env, 17).unwrap();
        prop_assert!(lo.values.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(lo.values.iter().zip(&hi.values).all(|(a, b)| b >= a));
        prop_assert!(lo.values[0] >= eta * (1.0 - 1e-9));
    }
}
