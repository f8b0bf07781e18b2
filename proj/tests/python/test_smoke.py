import math

import numpy as np
import pytest

import pdirichlet as pd


def test_version():
    assert pd.__version__.count(".") == 2


def test_chebyshev_derivative_of_cubic():
    x = np.array(pd.chebyshev_nodes(6))
    d = pd.chebyshev_diff_matrix(6)
    assert x[0] == 1.0 and x[-1] == -1.0
    np.testing.assert_allclose(d @ x**3, 3 * x**2, atol=1e-12)
    w = pd.clenshaw_curtis_weights(6)
    assert w.sum() == pytest.approx(2.0, abs=1e-14)


def test_sampling_is_deterministic():
    a = pd.sample_density("rho2", 500, 3)
    b = pd.sample_density("rho2", 500, 3)
    assert a.shape == (500, 2)
    assert np.array_equal(a, b)
    assert ((a >= 0) & (a <= 1)).all()


def test_sigma_eta_indicator():
    assert pd.sigma_eta("indicator", 2.0, 2) == pytest.approx(math.pi / 4, abs=1e-10)
    assert pd.sigma_eta("indicator", 2.0, 1) == pytest.approx(2.0 / 3.0, abs=1e-10)


def test_kde_matches_direct_sum():
    rng = np.random.default_rng(0)
    s = rng.random((50, 2))
    q = np.array([[0.5, 0.5], [0.2, 0.7]])
    h = 0.2
    got = pd.kde(s, h, q)
    r2 = ((q[:, None, :] - s[None, :, :]) ** 2).sum(-1)
    want = np.exp(-r2 / (2 * h * h)).sum(1) / (2 * math.pi * h * h * len(s))
    np.testing.assert_allclose(got, want, rtol=1e-5)


def test_discrete_p2_matches_direct():
    pts = pd.sample_density("rho1", 200, 5)
    eps = 0.2
    nodes, labels = [0, 1, 2], [0.0, 1.0, 0.5]
    gd = pd.minimize_discrete(pts, eps, nodes, labels, p=2.0, tol=1e-10)
    direct = pd.solve_p2_direct(pts, eps, nodes, labels)
    assert gd["converged"]
    np.testing.assert_allclose(gd["values"], direct, atol=1e-6)
    hist = np.array(gd["energy_history"])
    assert (np.diff(hist) <= 1e-12 * hist[:-1]).all()


def test_continuum_solve_respects_labels():
    points, labels = pd.constraint_labels()
    assert points.shape == (16, 2)
    res = pd.solve_continuum(points_per_patch=10, mesh=4)
    assert res["converged"]
    mesh = np.array(res["mesh"])
    vals = res["mesh_values"]
    # the mesh 0, 1/3, 2/3, 1 hits the labelled lattice; labels at interior patch corners are
    # held at the neighbouring interface nodes instead
    for (x, y), label in zip(points, labels):
        i = int(np.argmin(abs(mesh - x)))
        j = int(np.argmin(abs(mesh - y)))
        on_boundary = x in (0.0, 1.0) or y in (0.0, 1.0)
        assert vals[i, j] == pytest.approx(label, abs=1e-12 if on_boundary else 0.05)
    # the free interior corner nodes undershoot by O(1/points_per_patch)
    assert min(labels) - 0.01 <= vals.min() and vals.max() <= max(labels) + 0.01


def test_nonlocal_constant_is_zero():
    assert pd.nonlocal_energy(lambda x, y: 0.3, 0.1, 3.0, region=(0.2, 0.8, 0.2, 0.8)) == 0.0


def test_error_metrics():
    xs = pd.uniform_mesh(11)
    a = np.zeros((11, 11))
    l2, linf = pd.error_metrics(a, a + 2.0, xs, xs)
    assert linf == 2.0
    assert l2 == pytest.approx(2.0 * 9 / 11)


def test_errors_carry_category():
    with pytest.raises(pd.PdirichletError, match=r"\[invalid-argument\]"):
        pd.sample_density("rho9", 10, 1)
    with pytest.raises(pd.PdirichletError, match=r"\[parse\]"):
        pd.run({"command": "sample", "colour": "red"})


def test_run_sample(tmp_path):
    out = pd.run({"command": "sample", "n": "100", "seed": "1", "out": str(tmp_path)})
    assert out["converged"]
    rows = (tmp_path / "samples_seed1.csv").read_text().splitlines()
    assert rows[0] == "x,y" and len(rows) == 101
