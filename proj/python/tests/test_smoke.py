import numpy as np
import pytest

import mfg_lattice as ml


def small_config(n=16):
    cfg = ml.parse_config("grid.n = %d\nsolver.T = 0.3\n" % n)
    assert cfg.n == n
    return cfg


def test_solve_conserves_mass():
    eq = ml.solve_mfg(small_config())
    assert eq.converged
    assert eq.residuals[-1] <= 1e-8
    mu = eq.mu
    assert mu.shape == (len(eq.times), 16)
    np.testing.assert_allclose(mu.sum(axis=1), 1.0, atol=1e-10)
    assert eq.alpha_plus.shape == (len(eq.times) - 1, 16)
    assert (eq.alpha_plus >= 0).all() and (eq.alpha_minus >= 0).all()


def test_master_field_at_terminal_time_is_finite():
    cfg = small_config()
    m = ml.project_density("cosine(0.5)", 16)
    U0 = ml.eval_master(cfg, 0.0, m)
    UT = ml.eval_master(cfg, cfg.T, m)
    assert U0.shape == (16,) and np.isfinite(U0).all()
    assert not np.allclose(U0, UT)


def test_simulation_is_seeded():
    eq = ml.solve_mfg(small_config())
    t, a, ja = ml.simulate(eq, 500, 7, [0.1, 0.3])
    _, b, jb = ml.simulate(eq, 500, 7, [0.1, 0.3])
    _, c, _ = ml.simulate(eq, 500, 8, [0.1, 0.3])
    assert list(t) == [0.1, 0.3]
    assert a.shape == (500, 2)
    assert (a == b).all() and (ja == jb).all()
    assert (a != c).any()
    assert a.max() < 16


def test_w1_and_rates():
    a = np.zeros(4)
    b = np.zeros(4)
    a[0] = b[2] = 1.0
    assert ml.w1_circle(a, b) == pytest.approx(0.5)
    slope, _, r2 = ml.fit_rate([16, 32, 64], [0.1, 0.05, 0.025])
    assert slope == pytest.approx(1.0)
    assert r2 == pytest.approx(1.0)


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        ml.parse_config("grid.bogus = 1\n")
    cfg = ml.Config()
    with pytest.raises(ValueError):
        cfg.scheme = "lax"


def test_cli_entry(tmp_path):
    assert ml.run(["solve-mfg", "--out", str(tmp_path), "--no-assert"]) == 0
    assert (tmp_path / "equilibrium.csv").exists()
