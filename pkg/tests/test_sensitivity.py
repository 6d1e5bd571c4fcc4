import numpy as np
import pytest

from robust_halfspace.dist import gaussian_cdf
from robust_halfspace.poly import PTF, DimensionError, Polynomial, make_basis
from robust_halfspace.sensitivity import (
    PerturbationSet,
    ThresholdSweep,
    iso_hat,
    ns_hat,
    perturbed_values,
    phi_hat,
    phi_hat_many,
    psi_from_phi,
    psi_hat,
    ptf_phi_hat,
)


def halfspace_ptf(d, u, tau=0.0):
    return PTF(Polynomial.linear(make_basis(d, 1), u), tau)


def e1(d):
    u = np.zeros(d)
    u[0] = 1.0
    return u


def test_perturbation_set_regenerates():
    a = PerturbationSet(7, 64, 3, 0.5)
    b = PerturbationSet(7, 64, 3, 0.5)
    assert np.array_equal(a.vectors, b.vectors)
    assert a.vectors.shape == (64, 3)
    assert PerturbationSet.for_radius(7, 64, 3, 0.05).eta == pytest.approx(0.5)
    assert a.descriptor() == {"phi_seed": 7, "phi_m": 64, "eta": 0.5}
    with pytest.raises(ValueError):
        PerturbationSet(1, 0, 3, 0.5)
    with pytest.raises(ValueError):
        PerturbationSet(1, 4, 3, 0.0)


def test_perturbed_values_fast_path_matches_direct():
    rng = np.random.default_rng(0)
    b = make_basis(3, 3)
    p = Polynomial(b, rng.standard_normal(len(b)))
    T = PerturbationSet(1, 50, 3, 0.4)
    X = rng.standard_normal((9, 3))
    base, vals = perturbed_values(p, T, X)
    direct = np.stack([p(x + T.eta * T.vectors) for x in X])
    np.testing.assert_allclose(vals, direct, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(base, p(X), rtol=1e-12, atol=1e-12)
    # generic callables go through the blockwise path
    _, vals2 = perturbed_values(lambda Y: p(Y), T, X)
    np.testing.assert_allclose(vals2, direct, rtol=1e-12, atol=1e-12)


def test_phi_constant_is_zero():
    d = 4
    f = PTF(Polynomial.zero(make_basis(d, 2)), -0.5)
    T = PerturbationSet(2, 256, d, 0.5)
    X = np.random.default_rng(1).standard_normal((50, d))
    assert np.all(phi_hat_many(f, T, X) == 0.0)
    assert ns_hat(f, T, X) == 0.0
    assert iso_hat(f, T, X, 0.3) == 0.0


def test_phi_at_origin_is_half():
    m = 4096
    T = PerturbationSet(3, m, 3, 0.5)
    assert abs(phi_hat(halfspace_ptf(3, e1(3)), T, np.zeros(3)) - 0.5) <= 3 / np.sqrt(m)


def test_phi_one_eta_from_boundary():
    m, eta, tau = 10**5, 0.3, 0.2
    T = PerturbationSet(4, m, 2, eta)
    x = np.array([tau + eta, 0.7])
    got = phi_hat(halfspace_ptf(2, e1(2), tau), T, x)
    assert abs(got - gaussian_cdf(-1.0)) <= 4 / np.sqrt(m)
    assert gaussian_cdf(-1.0) == pytest.approx(0.1587, abs=1e-4)


def test_ns_halfspace_closed_form():
    eta = 0.5
    T = PerturbationSet(5, 10**4, 3, eta)
    S = np.random.default_rng(2).standard_normal((10**4, 3))
    got = ns_hat(halfspace_ptf(3, e1(3)), T, S)
    # arccos(1/sqrt(1+eta^2))/pi equals arctan(eta)/pi
    assert np.arccos(1 / np.sqrt(1 + eta**2)) == pytest.approx(np.arctan(eta))
    assert abs(got - np.arctan(eta) / np.pi) <= 0.01


def test_ns_halfspace_below_60r():
    rng = np.random.default_rng(3)
    for r in [0.01, 0.02, 0.05]:
        u = rng.standard_normal(5)
        u /= np.linalg.norm(u)
        T = PerturbationSet.for_radius(6, 2048, 5, r)
        S = rng.standard_normal((4000, 5))
        assert ns_hat(halfspace_ptf(5, u, rng.uniform(-1, 1)), T, S) <= 60 * r


def test_phi_monte_carlo_accuracy():
    m, eta = 4096, 0.5
    rng = np.random.default_rng(4)
    u = rng.standard_normal(4)
    u /= np.linalg.norm(u)
    f = halfspace_ptf(4, u, 0.3)
    T = PerturbationSet(7, m, 4, eta)
    X = rng.standard_normal((1000, 4))
    exact = gaussian_cdf(-np.abs(X @ u - 0.3) / eta)
    assert np.mean(np.abs(phi_hat_many(f, T, X) - exact) <= 4 / np.sqrt(m)) >= 0.99


def pocket_ptf(d):
    # 0.0001 - (x1 - 3)^2 = -8.9999 + 6 x1 - x1^2
    b = make_basis(d, 2)
    c = np.zeros(len(b))
    c[0], c[1] = -8.9999, 6.0
    c[d + 1] = -1.0  # x1^2 comes first among degree-2 monomials
    assert b.exponents[d + 1].tolist() == [2] + [0] * (d - 1)
    return PTF(Polynomial(b, c), 0.0)


def test_isolated_pocket():
    d = 3
    f = pocket_ptf(d)
    T = PerturbationSet.for_radius(8, 10**5, d, 0.05)
    x = np.array([3.0, 0.0, 0.0])
    assert f(x[None, :])[0] == 1
    # stays inside the pocket iff |eta z1| <= 0.01
    exact = 1 - (2 * gaussian_cdf(0.01 / T.eta) - 1)
    assert abs(phi_hat(f, T, x) - exact) <= 4 / np.sqrt(T.m)
    assert iso_hat(f, T, x[None, :], 0.8) == 1.0


def test_iso_halfspace_is_zero():
    T = PerturbationSet(9, 1024, 3, 0.1)
    S = np.random.default_rng(5).standard_normal((2000, 3))
    assert iso_hat(halfspace_ptf(3, e1(3)), T, S, 0.7) == 0.0


def test_psi_examples():
    T = PerturbationSet(10, 4096, 3, 0.5)
    S = np.random.default_rng(6).standard_normal((2000, 3))
    phi = phi_hat_many(halfspace_ptf(3, e1(3)), T, S)
    assert np.all(phi <= 0.5 + 4 / np.sqrt(T.m))
    assert psi_hat(halfspace_ptf(3, e1(3)), T, S) == 0.0
    assert np.mean(psi_from_phi(np.full(10, 0.7))) == pytest.approx(1.0)


def test_psi_bounds_iso_on_random_ptfs():
    rng = np.random.default_rng(7)
    b = make_basis(2, 4)
    T = PerturbationSet(11, 512, 2, 0.5)
    for _ in range(10):
        f = PTF(Polynomial(b, rng.standard_normal(len(b))), rng.uniform(-1, 1))
        S = rng.standard_normal((500, 2))
        assert psi_hat(f, T, S) >= 10 * 0.1 * iso_hat(f, T, S, 0.7) - 1e-12


def test_convexity_in_p():
    rng = np.random.default_rng(8)
    b = make_basis(3, 3)
    T = PerturbationSet(12, 256, 3, 0.3)
    X = rng.standard_normal((40, 3))
    for _ in range(10):
        p1 = Polynomial(b, rng.standard_normal(len(b)))
        p2 = Polynomial(b, rng.standard_normal(len(b)))
        a = rng.uniform()
        mix = phi_hat_many(a * p1 + (1 - a) * p2, T, X)
        f1, f2 = phi_hat_many(p1, T, X), phi_hat_many(p2, T, X)
        assert np.all(mix <= a * f1 + (1 - a) * f2 + 1e-10)
        assert np.all(psi_from_phi(mix) <= a * psi_from_phi(f1) + (1 - a) * psi_from_phi(f2) + 1e-10)


def test_rounding_bound_per_point():
    # averaging sign(p - t) sensitivity over t in [-1, 1] recovers the
    # sensitivity of p clipped to [-1, 1]
    rng = np.random.default_rng(9)
    b = make_basis(2, 3)
    T = PerturbationSet(13, 256, 2, 0.5)
    X = rng.standard_normal((30, 2))
    grid = np.linspace(-1, 1, 2001)
    for _ in range(5):
        p = Polynomial(b, 0.5 * rng.standard_normal(len(b)))
        base, vals = perturbed_values(p, T, X)
        clipped = np.mean(np.abs(np.clip(base, -1, 1)[:, None] - np.clip(vals, -1, 1)), axis=1) / 2
        avg = ThresholdSweep(p, T, X).phi_matrix(grid).mean(axis=1)
        assert np.all(avg <= clipped + 0.01)


def test_threshold_sweep_matches_direct():
    rng = np.random.default_rng(10)
    b = make_basis(3, 2)
    p = Polynomial(b, rng.standard_normal(len(b)))
    T = PerturbationSet(14, 300, 3, 0.4)
    X = rng.standard_normal((25, 3))
    ts = np.array([-0.7, 0.0, 0.25, 0.9])
    sweep = ThresholdSweep(p, T, X)
    M = sweep.phi_matrix(ts)
    for k, t in enumerate(ts):
        np.testing.assert_array_equal(M[:, k], phi_hat_many(PTF(p, t), T, X))
        np.testing.assert_array_equal(M[:, k], ptf_phi_hat(p, t, T, X)[0])
        np.testing.assert_array_equal(sweep.labels(t), PTF(p, t)(X))
    # per-point thresholds
    tt = rng.choice(ts, 25)
    got, _ = ptf_phi_hat(p, tt, T, X)
    want = np.array([M[j, list(ts).index(tt[j])] for j in range(25)])
    np.testing.assert_array_equal(got, want)


def test_seed_determinism_and_errors():
    b = make_basis(2, 2)
    p = Polynomial(b, np.arange(6.0) / 6)
    X = np.random.default_rng(11).standard_normal((10, 2))
    a = phi_hat_many(p, PerturbationSet(15, 128, 2, 0.5), X)
    c = phi_hat_many(p, PerturbationSet(15, 128, 2, 0.5), X)
    assert np.array_equal(a, c)
    T = PerturbationSet(15, 128, 2, 0.5)
    with pytest.raises(ValueError):
        ns_hat(p, T, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        psi_hat(p, T, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        iso_hat(p, T, X, 1.0)
    with pytest.raises(DimensionError):
        phi_hat(p, T, np.zeros(3))
