import json
import warnings

import numpy as np
import pytest
from scipy import stats

from builders import make_hypothesis
from robust_halfspace.corrector import lca_labels
from robust_halfspace.dist import DataSpec, Halfspace, PlantedSource
from robust_halfspace.errors import HypothesisValidationError
from robust_halfspace.partition import (
    ClassifierConfig,
    ComplementEmpty,
    HypothesisData,
    PartitionFailed,
    boundaries_from_weights,
    compute_classifier,
    estimate_indicator_means,
    evaluate_detail,
    hypothesis_eval,
    indicator_mean,
    interval_index,
    interval_masses,
    orthonormal_complement_direction,
    partition_discrepancy,
    predict,
    validate_partition,
)
from robust_halfspace.poly import PTF, DimensionError, Polynomial, make_basis
from robust_halfspace.rounding import Mixture
from robust_halfspace.sensitivity import PerturbationSet


def test_boundaries_examples():
    np.testing.assert_allclose(boundaries_from_weights([0.25] * 4), [-0.6744897502, 0.0, 0.6744897502],
                               atol=1e-6)
    c = boundaries_from_weights([1, 0, 0, 0])
    assert c[0] == c[1] == c[2] > 7.0
    np.testing.assert_allclose(interval_masses(c), [1, 0, 0, 0], atol=1e-8)
    c = boundaries_from_weights([0.5, 0.5, 0, 0])
    assert abs(c[0]) <= 1e-12 and c[1] == c[2] > 7.0
    with pytest.raises(ValueError):
        boundaries_from_weights([0.5, 0.6, 0.0, 0.0])
    with pytest.raises(ValueError):
        boundaries_from_weights([0.5, 0.5])


def test_interval_masses_match_weights():
    rng = np.random.default_rng(0)
    for _ in range(200):
        w = rng.dirichlet(np.ones(4))
        w[rng.uniform(size=4) < 0.2] = 0.0
        if w.sum() == 0:
            continue
        w /= w.sum()
        c = boundaries_from_weights(w)
        assert np.all(np.diff(c) >= 0)
        assert np.max(np.abs(interval_masses(c) - w)) <= 1e-8


def test_interval_index_right_closed():
    c = np.array([-1.0, 0.0, 1.0])
    assert interval_index([-1.0, -0.5, 0.0, 1e-12, 1.0, 5.0], c).tolist() == [0, 1, 1, 2, 2, 3]


def test_indicator_mean_examples():
    rng = np.random.default_rng(1)
    n, d = 20000, 4
    X = rng.standard_normal((n, d))
    assert np.linalg.norm(indicator_mean(X, np.ones(n))) <= 4 * np.sqrt(d / n)
    assert np.array_equal(indicator_mean(X, np.zeros(n)), np.zeros(d))
    m = indicator_mean(X, X[:, 0] > 0)
    assert m[0] == pytest.approx(1 / np.sqrt(2 * np.pi), abs=4 / np.sqrt(n))
    assert np.all(np.abs(m[1:]) <= 4 / np.sqrt(n))
    with pytest.raises(ValueError):
        indicator_mean(np.zeros((0, d)), [])


def test_estimate_indicator_means_against_direct():
    rng = np.random.default_rng(2)
    d = 3
    X = rng.standard_normal((300, d))
    y = np.where(X[:, 0] + 0.3 * rng.standard_normal(300) >= 0, 1, -1)
    p = Polynomial.linear(make_basis(d, 1), [1.0, 0.0, 0.0])
    mix = Mixture((-0.2, 0.0, 0.2, 0.5), (0.25,) * 4)
    T = PerturbationSet.for_radius(3, 256, d, 0.05)
    mis, rob = estimate_indicator_means(p, mix, X, y, T)
    assert mis.shape == rob.shape == (4, d)
    for i, t in enumerate(mix.thresholds):
        g = PTF(p, t)
        h = lca_labels(X, g, 0.05, T)
        np.testing.assert_allclose(mis[i], indicator_mean(X, h != y), atol=1e-12)


def test_complement_direction_examples():
    rng = np.random.default_rng(3)
    u = orthonormal_complement_direction([np.eye(3)[0]], rng)
    assert abs(u[0]) <= 1e-8 and np.linalg.norm(u) == pytest.approx(1.0, abs=1e-12)
    u = orthonormal_complement_direction([], rng, d=5)
    assert np.linalg.norm(u) == pytest.approx(1.0, abs=1e-12)
    means = list(rng.standard_normal((8, 12)))
    means.append(means[0] * 2)  # dependent, dropped by Gram-Schmidt
    u = orthonormal_complement_direction(means, rng)
    assert max(abs(float(m @ u)) for m in means) <= 1e-8
    with pytest.raises(ComplementEmpty):
        orthonormal_complement_direction(list(np.eye(3)), rng)


def test_complement_direction_is_uniform():
    rng = np.random.default_rng(4)
    angles = []
    for _ in range(10**4):
        u = orthonormal_complement_direction([np.eye(3)[0]], rng)
        angles.append(np.arctan2(u[2], u[1]))
    res = stats.kstest((np.array(angles) + np.pi) / (2 * np.pi), "uniform")
    assert res.pvalue >= 0.01


def line_setup(n=4000, seed=5):
    # p = x1 with all t_i = 0 and y = -1 everywhere: the misclassified set
    # is {x1 >= 0}
    d = 4
    X = np.random.default_rng(seed).standard_normal((n, d))
    y = -np.ones(n, dtype=int)
    p = Polynomial.linear(make_basis(d, 1), np.eye(d)[0])
    T = PerturbationSet.for_radius(6, 512, d, 0.05)
    return X, y, p, T


def test_validate_examples():
    X, y, p, T = line_setup()
    n = len(X)
    mix = Mixture((0.0,) * 4, (0.5, 0.5, 0.0, 0.0))
    c = boundaries_from_weights(mix.weights)
    zero = np.zeros((n, 4), dtype=bool)
    assert np.array_equal(partition_discrepancy(np.eye(4)[1], c, mix.weights, zero, X), np.zeros(4))
    # direction aligned with the indicator: all misclassified mass sits in J2
    gap = partition_discrepancy(np.eye(4)[0], c, mix.weights, (X[:, :1] >= 0).repeat(4, 1), X)
    assert gap[0] == pytest.approx(-0.25, abs=0.02)
    assert not validate_partition(np.eye(4)[0], c, mix, p, T, X, y, tol=0.2)
    # a direction independent of x1 passes on reruns
    rng = np.random.default_rng(7)
    ok = [validate_partition(orthonormal_complement_direction([np.eye(4)[0]], rng), c, mix, p, T,
                             *line_setup(seed=100 + k)[:2], tol=0.2) for k in range(10)]
    assert np.mean(ok) >= 0.9
    with pytest.raises(ValueError):
        validate_partition(np.eye(4)[0], c, mix, p, T, np.zeros((0, 4)), [], tol=0.2)


def test_projection_concentration_soft():
    # reported, not failed: a fixed set projected on random directions
    d, n = 50, 20000
    rng = np.random.default_rng(8)
    X = rng.standard_normal((n, d))
    ind = X[:, 0] + 0.5 * X[:, 1] > 0.4
    mean = indicator_mean(X, ind)
    c = boundaries_from_weights([0.25] * 4)
    worst = []
    for _ in range(20):
        u = orthonormal_complement_direction([mean], rng)
        share = np.bincount(interval_index(X[ind] @ u, c), minlength=4) / ind.sum()
        worst.append(np.max(np.abs(share - 0.25)))
    if np.mean(worst) > 0.05:
        warnings.warn(f"projection masses off by {np.mean(worst):.3f} on average")
    assert len(worst) == 20


def test_hypothesis_json_roundtrip(tmp_path):
    h = make_hypothesis(d=3, k=2, coefficients=np.arange(10) / 10, thresholds=(-0.1, 0.2, 0.3, 0.9),
                        weights=(0.1, 0.2, 0.3, 0.4), direction=np.ones(3) / np.sqrt(3))
    text = h.to_json()
    assert list(json.loads(text)) == ["version", "d", "k", "coefficients", "thresholds", "weights",
                                      "direction", "boundaries", "r", "phi_seed", "phi_m"]
    h2 = HypothesisData.from_json(text)
    assert h2.to_dict() == h.to_dict() and h2.to_json() == text
    h.save(tmp_path / "m.json")
    assert HypothesisData.load(tmp_path / "m.json") == h
    X = np.random.default_rng(9).standard_normal((50, 3))
    assert np.array_equal(predict(h, X), predict(h2, X))


@pytest.mark.parametrize("field,value", [
    ("direction", [1.0, 1.0, 0.0]),
    ("weights", [0.5, 0.5, 0.5, 0.0]),
    ("thresholds", [0, 0, 0, 2]),
    ("coefficients", [1.0]),
    ("boundaries", [0.0, 1.0, 2.0]),
    ("r", 0.0),
    ("version", 2),
])
def test_hypothesis_validation_names_field(field, value):
    obj = make_hypothesis().to_dict()
    obj[field] = value
    with pytest.raises(HypothesisValidationError) as info:
        HypothesisData.from_dict(obj)
    assert info.value.field == field


def test_missing_key_named():
    obj = make_hypothesis().to_dict()
    del obj["phi_m"]
    with pytest.raises(HypothesisValidationError) as info:
        HypothesisData.from_dict(obj)
    assert info.value.field == "phi_m"


def test_tie_goes_to_lower_interval():
    # p = x2 with the partition along x1 and c1 at the median
    d = 3
    coef = np.zeros(4)
    coef[2] = 1.0
    h = make_hypothesis(d=d, coefficients=coef, thresholds=(-0.9, 0.9, 0.9, 0.9),
                        weights=(0.5, 0.5, 0, 0), direction=np.eye(d)[0])
    c1 = h.boundaries[0]
    assert abs(c1) <= 1e-12
    x = np.array([c1, 0.0, 0.0])
    assert evaluate_detail(h, x[None, :]).interval[0] == 0
    assert hypothesis_eval(h, x) == 1  # p = 0 >= t1 = -0.9
    assert hypothesis_eval(h, np.array([np.nextafter(c1, 1), 0, 0])) == -1  # t2 = 0.9 applies
    with pytest.raises(DimensionError):
        hypothesis_eval(h, np.zeros(2))


def test_equal_thresholds_ignore_partition():
    d = 3
    rng = np.random.default_rng(10)
    coef = rng.standard_normal(10)
    X = rng.standard_normal((200, d))
    a = make_hypothesis(d=d, k=2, coefficients=coef, thresholds=(0.1,) * 4, weights=(0.25,) * 4,
                        direction=np.eye(d)[0])
    b = make_hypothesis(d=d, k=2, coefficients=coef, thresholds=(0.1,) * 4, weights=(1, 0, 0, 0),
                        direction=np.eye(d)[1])
    assert np.array_equal(predict(a, X), predict(b, X))
    g = PTF(a.poly, 0.1)
    assert np.array_equal(predict(a, X), lca_labels(X, g, a.r, a.perturbations))


def test_classifier_config():
    assert ClassifierConfig(delta=0.5).attempts() == 1
    assert ClassifierConfig(delta=0.1).attempts() == 4
    assert ClassifierConfig().mean_sample_size(8) == 5120
    assert ClassifierConfig().mean_sample_size(20) == 20000


def classifier_setup():
    d = 4
    spec = DataSpec(d, Halfspace(np.eye(d)[0], 0.1), rho=0.05)
    p = Polynomial.linear(make_basis(d, 1), np.eye(d)[0], -0.1)
    cfg = ClassifierConfig(r=0.05, eps=0.1, delta=0.5, n_thresholds=40, n_eval=600,
                           n_mean=800, n_test=800, phi_m=256, seed=2)
    return spec, p, cfg


def test_compute_classifier_end_to_end():
    spec, p, cfg = classifier_setup()
    diag = {}
    h = compute_classifier(p, PlantedSource(spec, 3), cfg, diag)
    h.validate()
    assert len(diag["attempts"]) == 1 and diag["attempts"][0]["valid"]
    assert h.phi_m == cfg.phi_m and h.r == cfg.r
    np.testing.assert_allclose(h.coefficients, p.coefficients)
    assert np.max(np.abs(interval_masses(h.boundaries) - np.array(h.weights))) <= 1e-8
    again = compute_classifier(p, PlantedSource(spec, 3), cfg)
    assert again.to_json() == h.to_json()
    X, y = PlantedSource(spec, 11).draw(2000)
    assert np.mean(predict(h, X) != y) <= 0.15


def test_compute_classifier_failure():
    spec, p, cfg = classifier_setup()
    from dataclasses import replace

    with pytest.raises(PartitionFailed) as info:
        compute_classifier(p, PlantedSource(spec, 3), replace(cfg, partition_slack=-1.0))
    assert info.value.stage == "partition"
