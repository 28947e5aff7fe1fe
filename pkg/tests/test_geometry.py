import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from offgrid.errors import InvalidArgument, PreconditionError
from offgrid.geometry import (DiscreteMeasure, MetricTensor, ParameterBox, classify_regions, fisher_rao_distance,
                              min_separation, model_membership, pairwise_distances, region_statistics)
from offgrid.kernels import GaussianKernel, Sinc4Kernel

coords = st.floats(-50, 50, allow_nan=False)
triples = st.lists(st.tuples(coords, coords), min_size=3, max_size=3)


def test_sinc4_metric_distance_unit():
    g = MetricTensor.isotropic(1 / 12, 3)
    assert fisher_rao_distance(g, [0, 0, 0], [2 * math.sqrt(3), 0, 0]) == pytest.approx(1.0, abs=1e-14)


def test_distance_identity():
    g = MetricTensor(np.array([[2.0, 0.3], [0.3, 1.0]]))
    assert fisher_rao_distance(g, [0.4, -1.2], [0.4, -1.2]) == 0.0


def test_gaussian_metric_distance():
    g = GaussianKernel(np.eye(2)).metric
    assert fisher_rao_distance(g, [1, 0], [0, 0]) == pytest.approx(1.0, abs=1e-12)


def test_gaussian_metric_matches_finite_differences():
    k = GaussianKernel(np.eye(2))
    h = 1e-4
    fd = np.zeros((2, 2))
    e = np.eye(2)
    for i in range(2):
        for j in range(2):
            fd[i, j] = -(k.profile(h * (e[i] + e[j])) - k.profile(h * (e[i] - e[j]))
                         - k.profile(h * (e[j] - e[i])) + k.profile(-h * (e[i] + e[j]))) / (4 * h * h)
    assert np.allclose(k.metric.matrix, fd, atol=1e-6)


def test_dimension_mismatch_rejected():
    with pytest.raises(InvalidArgument):
        fisher_rao_distance(MetricTensor.isotropic(1.0, 2), [0, 0], [0, 0, 0])


@given(triples)
def test_distance_is_a_metric(pts):
    g = MetricTensor(np.array([[1.5, 0.4], [0.4, 0.7]]))
    a, b, c = (np.array(p) for p in pts)
    dab, dba = fisher_rao_distance(g, a, b), fisher_rao_distance(g, b, a)
    assert dab >= 0 and dab == pytest.approx(dba, rel=1e-12, abs=1e-12)
    assert dab <= fisher_rao_distance(g, a, c) + fisher_rao_distance(g, c, b) + 1e-9


def test_min_separation_examples():
    g = Sinc4Kernel(1.0, 1).metric
    mu = DiscreteMeasure([1, 1], [[0.0], [2 * math.sqrt(3)]])
    assert min_separation(mu, g) == pytest.approx(1.0, abs=1e-14)
    h = 0.7
    mu3 = DiscreteMeasure([1, 2, 3], [[0.0], [h], [2 * h]])
    assert min_separation(mu3, g) == pytest.approx(h * math.sqrt(g.matrix[0, 0]), rel=1e-14)


def test_min_separation_brute_force(rng):
    g = MetricTensor(np.array([[2.0, 0.5], [0.5, 1.0]]))
    x = rng.uniform(-3, 3, (5, 2))
    mu = DiscreteMeasure(np.ones(5), x)
    brute = min(fisher_rao_distance(g, x[i], x[j]) for i in range(5) for j in range(i + 1, 5))
    assert min_separation(mu, g) == pytest.approx(brute, rel=1e-13)


def test_min_separation_needs_two_atoms():
    with pytest.raises(PreconditionError):
        min_separation(DiscreteMeasure([1.0], [[0.0]]), MetricTensor.isotropic(1.0, 1))


def test_membership_examples():
    g = MetricTensor.isotropic(1.0, 1)
    spaced = lambda s: DiscreteMeasure([1, 1, 1], [[0.0], [s], [2 * s]])
    assert model_membership(spaced(5), 3, 4, g)
    assert not model_membership(spaced(3), 3, 4, g)
    assert model_membership(DiscreteMeasure([1.0], [[0.0]]), 1, 10, g)
    assert not model_membership(spaced(5), 2, 4, g)


@given(st.floats(0.1, 10), st.floats(0.0, 1.0), st.integers(1, 5))
def test_membership_monotone(sep, shrink, extra):
    g = MetricTensor.isotropic(1.0, 1)
    mu = DiscreteMeasure([1, 1, 1], [[0.0], [sep], [2 * sep]])
    for delta in (0.5, 2.0, 6.0):
        if model_membership(mu, 3, delta, g):
            assert model_membership(mu, 3 + extra, delta * shrink, g)


def test_classify_examples():
    g = MetricTensor.isotropic(1.0, 1)
    spikes = np.array([[0.0], [10.0]])
    lab = classify_regions(spikes, 0.5, g, [[0.0], [10.0], [5.0], [-1.0]])
    assert list(lab.labels) == [0, 1, -1, -1]


def test_classify_tie_goes_to_smallest_index():
    g = MetricTensor.isotropic(1.0, 1)
    lab = classify_regions([[0.0], [2.0]], 1.0, g, [[1.0]])
    assert list(lab.labels) == [0]


def test_classify_matches_brute_force(rng):
    g = MetricTensor(np.array([[1.0, 0.2], [0.2, 0.5]]))
    spikes = np.array([[0.0, 0.0], [1.5, 0.5]])
    q = rng.uniform(-2, 3, (100, 2))
    r = 0.8
    lab = classify_regions(spikes, r, g, q)
    for x, l in zip(q, lab.labels):
        dist = [fisher_rao_distance(g, x, s) for s in spikes]
        expect = int(np.argmin(dist)) if min(dist) <= r else -1
        assert l == expect
    assert np.all(lab.far | lab.near(0) | lab.near(1))
    assert not np.any(lab.near(0) & lab.near(1))


def test_region_statistics_examples():
    g = MetricTensor.isotropic(1.0, 1)
    x0, a0 = np.array([[0.0], [5.0]]), np.array([0.4, 0.6])
    mu0 = DiscreteMeasure(a0, x0)
    far, near = region_statistics(mu0, x0, a0, 1.0, g)
    assert far == 0 and np.all(near == 0)
    far, near = region_statistics(mu0.plus(DiscreteMeasure([0.3], [[2.5]])), x0, a0, 1.0, g)
    assert far == pytest.approx(0.3) and np.all(near == 0)


def test_region_statistics_brute_force(rng):
    g = MetricTensor.isotropic(0.5, 1)
    x0, a0 = np.array([[0.0], [4.0]]), np.array([1.0, -0.5])
    w, x = rng.normal(size=10), rng.uniform(-2, 6, (10, 1))
    far, near = region_statistics(DiscreteMeasure(w, x), x0, a0, 1.0, g)
    d = pairwise_distances(g, x, x0)
    lab = np.where(d.min(axis=1) <= 1.0, d.argmin(axis=1), -1)
    assert far == pytest.approx(np.abs(w[lab < 0]).sum(), rel=1e-13)
    for k in range(2):
        assert near[k] == pytest.approx(abs(w[lab == k].sum() - a0[k]), rel=1e-12, abs=1e-14)


def test_zero_weight_atoms_count_for_separation():
    g = MetricTensor.isotropic(1.0, 1)
    mu = DiscreteMeasure([1.0, 0.0], [[0.0], [0.5]])
    assert mu.tv_norm == 1.0
    assert min_separation(mu, g) == pytest.approx(0.5)


def test_measure_json_round_trip():
    mu = DiscreteMeasure([0.25, -1.5], [[0.1, 0.2], [3.0, -4.0]])
    back = DiscreteMeasure.from_json(mu.to_json())
    assert np.array_equal(back.weights, mu.weights) and np.array_equal(back.positions, mu.positions)


def test_closed_box_accepts_boundary_atoms():
    box = ParameterBox([0.0], [1.0])
    DiscreteMeasure([1.0, 1.0], [[0.0], [1.0]], box)
    with pytest.raises(InvalidArgument):
        DiscreteMeasure([1.0], [[1.5]], box)
