"""Smoke test for the degsde extension module.

Build and install first, e.g. `maturin build --release -m crates/py/Cargo.toml`
followed by `pip install target/wheels/degsde-*.whl`.
"""

import json
import math

import degsde


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    names = [name for name, _, _ in degsde.list_scenarios()]
    assert len(names) == 8 and "kinetic_bismut" in names

    model = degsde.Model.kinetic()
    assert model.dim == 2
    mean, cov = model.transition_law(0.0, 1.0, [0.5, -0.3])
    close(mean[0], 0.2, 1e-12)
    close(cov[0][0], 1.0 / 3.0, 1e-12)
    for t in (0.25, 0.5, 1.0):
        close(model.gramian_inverse_norm(t) * t**3, 6.0, 1e-9)

    value, stderr = model.bismut_gradient("x0", [0.5, -0.3], [1.0, 0.0], n_paths=20000, seed=1)
    assert abs(value - 1.0) <= 5 * stderr, (value, stderr)

    drift = model.drift(json.dumps({"family": "tanh_y", "eps": 0.5}))
    close(drift(0.0, [0.0, 0.5])[0], math.tanh(1.0), 1e-15)
    path = model.integrate(drift, [0.0, 0.0], n_steps=64, seed=3)
    assert len(path) == 65 and path[0] == [0.0, 0.0]

    rows = model.uniqueness_gaps(drift, [0.0, 0.0], 0.0, [32, 64], seed=4)
    assert all(sup == 0.0 for _, sup, _ in rows)

    field = model.solve_field(degsde.Drift.constant(1, [0.7]), 8.0, nodes=9, time_nodes=9)
    assert field.converged
    close(field(0.0, [0.0, 0.0])[0], 0.7 * (1 - math.exp(-8.0)) / 8.0, 1e-8)
    z = [0.3, -0.4]
    back = field.theta_inverse(0.5, field.theta(0.5, z))
    close(back[1], z[1], 1e-9)

    times, values = degsde.bihari_bound(lambda r: 1.0 + r, 1.0, n_points=9)
    assert len(times) == 9 and all(b >= a for a, b in zip(values, values[1:]))

    value, c2 = degsde.Model.wave(1.0).noise_integral(0.0, 0.5)
    assert 0.0 < value <= c2 * 0.5**0.48

    try:
        degsde.Model.wave(0.4)
    except degsde.HypothesisError as e:
        assert "H3" in str(e)
    else:
        raise AssertionError("theta = 0.4 should be rejected")

    print("smoke test passed")


if __name__ == "__main__":
    main()
