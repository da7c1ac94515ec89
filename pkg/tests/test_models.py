import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netctl import models
from netctl.integrate import Scheme, simulate


def fd_jacobian(model, x, eps=1e-6):
    J = np.empty((model.dim, model.dim))
    for j in range(model.dim):
        e = np.zeros(model.dim)
        e[j] = eps
        J[:, j] = (model.drift(x + e) - model.drift(x - e)) / (2 * eps)
    return J


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))


def test_grg_radius():
    assert models.grg_radius(10) == pytest.approx(0.37947, abs=1e-5)


def test_far_apart_nodes_are_not_connected():
    g = models.graph_from_coords([[0, 0], [1, 1]], models.grg_radius(2))
    assert len(g.edges) == 0


def test_radius_is_strict():
    g = models.graph_from_coords([[0, 0], [0.5, 0]], 0.5)
    assert len(g.edges) == 0


def test_grg_graph_connected_and_reproducible():
    a = models.grg_graph(10, 42)
    b = models.grg_graph(10, 42)
    assert a.is_connected()
    assert np.array_equal(a.edges, b.edges) and np.array_equal(a.coords, b.coords)
    i, j = a.edges.T
    assert np.all(i < j)
    assert len({tuple(e) for e in a.edges}) == len(a.edges)
    d = np.linalg.norm(a.coords[i] - a.coords[j], axis=1)
    assert np.all(d < a.radius)


def test_grg_graph_gives_up():
    with pytest.raises(RuntimeError):
        models.grg_graph(30, 0, radius=1e-3, max_attempts=3)
    with pytest.raises(ValueError):
        models.grg_graph(1, 0)


def test_sample_duffing_ranges_and_symmetry():
    g = models.grg_graph(12, 1)
    p = models.sample_duffing(g, 7)
    q = models.sample_duffing(g, 7)
    A = g.adjacency() | np.eye(12, dtype=bool)
    for name, (lo, hi) in [("alpha", (10, 20)), ("beta", (1, 2)), ("gamma", (1, 2))]:
        M = getattr(p, name)
        assert np.array_equal(M, getattr(q, name))
        assert np.array_equal(M, M.T)
        assert np.all((M[A] >= lo) & (M[A] <= hi))
        assert np.all(M[~A] == 0)


def test_sample_duffing_without_edges():
    g = models.Graph(3, np.zeros((0, 2), int), np.zeros((3, 2)), 0.1)
    p = models.sample_duffing(g, 0)
    assert np.count_nonzero(p.alpha - np.diag(np.diag(p.alpha))) == 0
    assert np.all(np.diag(p.alpha) > 0)


def single_duffing(a, b, c):
    g = models.Graph(1, np.zeros((0, 2), int), np.zeros((1, 2)), 1.0)
    return models.duffing_model(models.DuffingParams(g, np.array([[a]]), np.array([[b]]),
                                                     np.array([[c]])))


def test_duffing_drift_examples(duffing10):
    assert np.all(duffing10.drift(np.zeros(20)) == 0)
    m = single_duffing(1.0, 0.0, 0.0)
    assert np.array_equal(m.drift(np.array([1.0, 0.0])), [0.0, -1.0])


def test_duffing_drift_against_loops():
    g = models.grg_graph(6, 5)
    p = models.sample_duffing(g, 6)
    m = models.duffing_model(p)
    x = np.random.default_rng(0).normal(size=12)
    A = g.adjacency()
    expect = np.empty(12)
    for i in range(6):
        x1, x2 = x[2 * i], x[2 * i + 1]
        acc = -p.alpha[i, i] * x1 + p.beta[i, i] * x1 ** 3 - p.gamma[i, i] * x2
        for j in range(6):
            if A[i, j]:
                dx = x1 - x[2 * j]
                acc += (-p.alpha[i, j] * dx + p.beta[i, j] * dx ** 3
                        - p.gamma[i, j] * (x2 - x[2 * j + 1]))
        expect[2 * i] = x2
        expect[2 * i + 1] = acc
    assert np.allclose(m.drift(x), expect, rtol=1e-13, atol=1e-12)


def test_duffing_odd_without_cubic_terms():
    g = models.grg_graph(8, 2)
    p = models.sample_duffing(g, 2)
    m = models.duffing_model(models.DuffingParams(g, p.alpha, 0 * p.beta, p.gamma))
    x = np.random.default_rng(1).normal(size=16)
    assert np.allclose(m.drift(-x), -m.drift(x), atol=1e-13)


def test_actuation_structure(duffing10, memory25):
    pi = np.array([1, 0, 1, 0, 0, 1, 0, 0, 0, 1])
    B = duffing10.actuation(pi)
    assert B.shape == (20, 10)
    for i in range(10):
        col = np.zeros(20)
        col[2 * i + 1] = pi[i]
        assert np.array_equal(B[:, i], col)
    pim = np.random.default_rng(0).integers(0, 2, 25)
    assert np.array_equal(memory25.actuation(pim), np.diag(pim))
    Bh = duffing10.reduced_actuation(pi)
    assert np.array_equal(Bh, B[:, pi == 1])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_jacobians_match_finite_differences(seed, duffing10, memory25):
    rng = np.random.default_rng(seed)
    for m, scale in [(duffing10, 1.0), (memory25, np.pi)]:
        x = rng.uniform(-scale, scale, m.dim)
        assert rel_err(m.jacobian(x), fd_jacobian(m, x)) < 1e-6


def test_duffing_jacobian_seed3():
    g = models.grg_graph(10, 3)
    m = models.duffing_model(models.sample_duffing(g, 3))
    x = np.random.default_rng(3).uniform(-1, 1, 20)
    assert rel_err(m.jacobian(x), fd_jacobian(m, x)) < 1e-6


def test_hebb_weights():
    C = models.hebb_weights([[1, -1]])
    assert np.array_equal(C, [[0.5, -0.5], [-0.5, 0.5]])
    with pytest.raises(ValueError):
        models.hebb_weights([[1, 0]])


def test_hebb_letters():
    P = np.array(models.letter_patterns())
    C = models.hebb_weights(P)
    assert np.array_equal(C, C.T)
    assert np.all(np.diag(C) == 3 / 25)
    allowed = {k / 25 for k in (-3, -1, 1, 3)}
    assert set(np.unique(C)) <= allowed
    # direct formula
    expect = sum(np.outer(p, p) for p in P) / 25
    assert np.allclose(C, expect, rtol=0, atol=1e-15)


@given(st.lists(st.lists(st.sampled_from([-1, 1]), min_size=7, max_size=7),
                min_size=1, max_size=5))
def test_hebb_property(pats):
    C = models.hebb_weights(pats)
    assert np.array_equal(C, C.T)
    assert np.allclose(np.diag(C), len(pats) / 7)


def test_memory_drift_examples():
    m = models.memory_model(models.MemoryParams(np.ones((1, 2)), np.zeros((2, 2)), 0.8))
    assert np.allclose(m.drift(np.array([0.0, np.pi / 4])), [0.4, -0.4], atol=1e-15)
    m25 = models.memory_model(models.MemoryParams(
        np.array(models.letter_patterns()), models.hebb_weights(models.letter_patterns()), 0.8))
    assert np.allclose(m25.drift(np.full(25, 1.3)), 0.0, atol=1e-15)


def test_memory_drift_against_loops(memory25):
    x = np.random.default_rng(2).uniform(0, 2 * np.pi, 25)
    C = memory25.C
    expect = [sum(C[i, j] * np.sin(x[j] - x[i]) + 0.8 / 25 * np.sin(2 * (x[j] - x[i]))
                  for j in range(25)) for i in range(25)]
    assert np.allclose(memory25.drift(x), expect, atol=1e-13)


def test_letter_patterns():
    H, T, L = models.letter_patterns()
    assert np.array_equal(T[:5], np.ones(5))
    assert H[12] == 1
    # Hamming distances counted directly on the bitmap strings
    bm = {k: "".join(v) for k, v in models.LETTER_BITMAPS.items()}
    for (a, va), (b, vb) in itertools.combinations(zip("HTL", (H, T, L)), 2):
        assert np.sum(va != vb) == sum(x != y for x, y in zip(bm[a], bm[b]))
    assert np.sum(H != T) == 16
    assert np.sum(H != L) == 10
    assert np.sum(T != L) == 14


def test_letter_attractors_are_equilibria(memory25):
    for xi in models.letter_patterns():
        assert np.allclose(memory25.drift(models.pattern_to_phases(xi)), 0, atol=1e-13)


def test_zero_selection_ignores_controls(duffing10):
    x0 = np.random.default_rng(0).uniform(0, 0.5, 20)
    z = np.random.default_rng(1).normal(size=(6, 10))
    s = Scheme("TI", 1e-3)
    a = simulate(duffing10, s, x0, z, np.zeros(10)).states
    b = simulate(duffing10, s, x0, np.zeros((6, 10)), np.zeros(10)).states
    assert np.array_equal(a, b)


def test_network_text_roundtrip(duffing10, memory25, tmp_path):
    for m in (duffing10, memory25):
        text = models.dump_network(m)
        m2 = models.load_network(text)
        x = np.random.default_rng(0).normal(size=m.dim)
        assert np.array_equal(m.drift(x), m2.drift(x))
        assert models.dump_network(m2) == text
