use degsde::model::{DriftFamily, SpectralModel};
use degsde::sde::self_convergence;

fn errors(drift: &DriftFamily) -> Vec<f64> {
    let model = SpectralModel::kinetic_scalar();
    let b = drift.build(1, 1).unwrap();
    let s = self_convergence(&model, &b, &[0.4, -0.2], 1.0, 16, 4, 8, 64, 5).unwrap();
    assert_eq!(s.blow_ups, 0);
    s.errors
}

fn study(drift: DriftFamily) -> Vec<f64> {
    let e = errors(&drift);
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{}: {e:?}", drift.tag());
    e
}

#[test]
fn constant_drift_is_exact() {
    assert!(errors(&DriftFamily::Constant { value: vec![0.7] }).iter().all(|e| *e < 1e-12));
}

#[test]
fn lipschitz_drifts_converge_at_first_order() {
    for drift in [DriftFamily::SinX, DriftFamily::TanhY { eps: 0.5 }, DriftFamily::Dissipative] {
        let e = study(drift.clone());
        let rate = (e[0] / e[e.len() - 1]).log2() / (e.len() - 1) as f64;
        assert!(rate > 0.8, "{}: rate {rate}, errors {e:?}", drift.tag());
    }
}

#[test]
fn rough_drift_still_converges() {
    let profile = degsde::scenario::config::rough_profile();
    study(DriftFamily::Rough(profile));
}
