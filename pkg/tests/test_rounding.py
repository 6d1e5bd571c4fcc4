import csv
import itertools

import numpy as np
import pytest

from robust_halfspace.dist import DataSpec, Halfspace, PlantedSource
from robust_halfspace.poly import Polynomial, make_basis
from robust_halfspace.rounding import (
    Mixture,
    NoMixtureFound,
    RoundingConfig,
    ThresholdStats,
    compute_rounding_thresholds,
    find_mixture,
    threshold_stats,
    threshold_stats_many,
    write_diagnostics,
)
from robust_halfspace.sensitivity import PerturbationSet


def x1_poly(d):
    u = np.zeros(d)
    u[0] = 1.0
    return Polynomial.linear(make_basis(d, 1), u)


def feasible(Q, w, bounds, tol=1e-9):
    return np.all(np.asarray(w) @ np.asarray(Q) <= bounds + tol)


def brute_exists(Q, bounds):
    from scipy.optimize import linprog

    for idx in itertools.combinations(range(len(Q)), 4):
        res = linprog(np.zeros(4), A_ub=Q[list(idx)].T, b_ub=bounds, A_eq=np.ones((1, 4)),
                      b_eq=[1.0], bounds=(0, None), method="highs")
        if res.status == 0:
            return True
    return False


def test_types_validate():
    with pytest.raises(ValueError):
        ThresholdStats(0.0, 1.2, 0.0, 0.0)
    with pytest.raises(ValueError):
        Mixture((0, 0, 0, 0), (0.5, 0.5, 0.5, 0.0))
    with pytest.raises(ValueError):
        Mixture((0, 0, 0), (0.5, 0.5, 0.0))
    with pytest.raises(ValueError):
        Mixture((0, 0, 0, 2.0), (1, 0, 0, 0))
    m = Mixture((0.1, 0.2, 0.3, 0.4), (0.25, 0.25, 0.25, 0.25 + 1e-10))
    assert sum(m.weights) == pytest.approx(1.0)


def test_config_defaults():
    cfg = RoundingConfig(r=0.05, eps=0.1, delta=0.1)
    assert cfg.n_thresholds == 400 and cfg.attempts == 4
    assert RoundingConfig(eps=0.9).n_thresholds == 124
    np.testing.assert_allclose(cfg.bounds(0.1), [0.5, 10.4, 0.4])


def test_stats_constant_polynomial():
    d = 3
    X = np.random.default_rng(0).standard_normal((500, d))
    y = np.random.default_rng(1).choice([-1, 1], 500)
    T = PerturbationSet(0, 128, d, 0.5)
    s = threshold_stats(Polynomial.zero(make_basis(d, 2)), -0.5, X, y, T)
    assert s.err == np.mean(y == -1)
    assert s.ns == 0.0 and s.iso == 0.0
    with pytest.raises(ValueError):
        threshold_stats(x1_poly(d), 0.0, np.zeros((0, d)), [], T)


def test_stats_linear_polynomial():
    d = 3
    X = np.random.default_rng(2).standard_normal((4000, d))
    y = np.where(X[:, 0] >= 0, 1, -1)
    T = PerturbationSet.for_radius(3, 2048, d, 0.05)
    s = threshold_stats(x1_poly(d), 0.0, X, y, T)
    assert s.err == 0.0
    assert abs(s.ns - np.arctan(T.eta) / np.pi) <= 0.01
    assert s.iso == 0.0
    again = threshold_stats_many(x1_poly(d), [0.0], X, y, T)[0]
    assert again == s


def test_identical_points_take_first():
    Q = np.tile([0.1, 0.2, 0.0], (10, 1))
    idx, w = find_mixture(Q, np.array([0.2, 0.3, 0.1]))
    assert w == (1.0, 0.0, 0.0, 0.0)
    assert all(0 <= i < 10 for i in idx)


def test_small_batches_are_padded():
    idx, w = find_mixture(np.array([[0.1, 0.1, 0.1]]), np.array([0.2, 0.2, 0.2]))
    assert idx == (0, 0, 0, 0) and sum(w) == pytest.approx(1.0)
    assert find_mixture(np.zeros((0, 3)), np.ones(3)) is None


def test_symmetric_centroid():
    c = np.array([0.3, 0.3, 0.3])
    # pairs symmetric about c inside the plane through c with zero coordinate
    # sum; each point breaks a bound on its own and any decoy weight pushes
    # the coordinate sum above that of c
    special = c + 0.1 * np.array([[1, -1, 0], [-1, 1, 0], [0, 1, -1], [0, -1, 1.0]])
    rng = np.random.default_rng(4)
    decoys = c + rng.uniform(0.05, 0.3, (20, 3))  # every decoy exceeds every bound
    Q = np.vstack([decoys[:10], special, decoys[10:]])
    assert feasible(special, np.full(4, 0.25), c)
    assert not any(feasible(q[None, :], [1.0], c) for q in special)
    idx, w = find_mixture(Q, c)
    assert set(i for i, wi in zip(idx, w) if wi > 0) <= set(range(10, 14))
    assert feasible(Q[list(idx)], w, c)


def test_caratheodory_clouds():
    rng = np.random.default_rng(5)
    for trial in range(100):
        n = 10 if trial < 20 else 60
        Q = rng.uniform(0, 1, (n, 3))
        bounds = Q.mean(axis=0)
        found = find_mixture(Q, bounds, np.random.default_rng(trial))
        assert found is not None
        idx, w = found
        assert feasible(Q[list(idx)], w, bounds)
        if n == 10:
            assert brute_exists(Q, bounds)


def test_staged_search_matches_enumeration():
    rng = np.random.default_rng(6)
    outcomes = set()
    for trial in range(150):
        n = int(rng.integers(4, 13))
        Q = rng.uniform(0, 1, (n, 3))
        bounds = Q.mean(axis=0) + rng.normal(0, 0.15, 3)
        staged = find_mixture(Q, bounds, np.random.default_rng(trial))
        full = find_mixture(Q, bounds, full=True)
        assert (staged is None) == (full is None)
        outcomes.add(staged is None)
        for res in (staged, full):
            if res is not None:
                assert feasible(Q[list(res[0])], res[1], bounds)
    assert outcomes == {True, False}


def test_equal_mixture_identity():
    rng = np.random.default_rng(7)
    Q = rng.uniform(0, 1, (400, 3))
    means = Q.mean(axis=0)
    np.testing.assert_allclose(np.full(400, 1 / 400) @ Q, means, atol=1e-12)
    cfg = RoundingConfig(r=0.05, eps=0.1)
    bounds = cfg.bounds(float(means[0]))
    # err bound holds by construction of opt_hat; the rest is arithmetic
    assert means[0] <= bounds[0]
    if means[1] <= bounds[1] and means[2] <= bounds[2]:
        assert find_mixture(Q, bounds) is not None


def planted_setup(seed=0):
    d = 4
    spec = DataSpec(d, Halfspace(np.eye(d)[0], 0.1), rho=0.05)
    p = Polynomial.linear(make_basis(d, 1), np.eye(d)[0], -0.1)
    return spec, p, PerturbationSet.for_radius(seed, 512, d, 0.05)


def test_driver_output_satisfies_bounds_recomputed():
    spec, p, T = planted_setup()
    cfg = RoundingConfig(r=0.05, eps=0.1, n_thresholds=60, n_eval=800, seed=3)
    res = compute_rounding_thresholds(p, PlantedSource(spec, 1), T, cfg)
    X, y = PlantedSource(spec, 1).draw(cfg.n_eval)
    stats = threshold_stats_many(p, res.mixture.thresholds, X, y, T)
    mixed = np.asarray(res.mixture.weights) @ np.array([s.q for s in stats])
    assert np.all(mixed <= res.bounds + 1e-6)
    assert res.opt_hat == pytest.approx(np.mean([s.err for s in res.stats]))
    # deterministic replay
    again = compute_rounding_thresholds(p, PlantedSource(spec, 1), T, cfg)
    assert again.mixture == res.mixture


def test_driver_failure_raises():
    spec, p, T = planted_setup()
    cfg = RoundingConfig(r=0.0, eps=0.1, slack=0.0, n_thresholds=20, n_eval=200, attempts=2)
    with pytest.raises(NoMixtureFound) as info:
        compute_rounding_thresholds(p, PlantedSource(spec, 2), T, cfg)
    assert info.value.stage == "rounding"


def test_diagnostics_csv(tmp_path):
    spec, p, T = planted_setup()
    cfg = RoundingConfig(n_thresholds=30, n_eval=300)
    res = compute_rounding_thresholds(p, PlantedSource(spec, 4), T, cfg)
    write_diagnostics(tmp_path / "r.csv", res)
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["kind", "t", "err", "ns", "iso", "weight"]
    assert len(rows) == 32 and rows[-1][0] == "mixture"
    assert [float(v) for v in rows[-1][5].split()] == list(res.mixture.weights)
