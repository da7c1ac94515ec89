import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netctl import models
from netctl.integrate import Scheme, simulate, steady_state
from netctl.objective import CostSpec, RelaxedProblem, cost_J
from netctl.optimize import (BudgetMode, MinoOptions, Selection, bounded_min, mino_search,
                             neighbors, projected_grad_norm, quasi_newton_min,
                             round_selection, solve_fixed, write_trace_csv)


def quad(c, A=None):
    c = np.asarray(c, dtype=float)
    A = np.eye(len(c)) if A is None else A

    def f(x):
        r = x - c
        return 0.5 * r @ A @ r, A @ r
    return f


def rosen(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


def test_qn_quadratic():
    c = np.array([1.0, -2.0, 3.0])
    res = quasi_newton_min(quad(c), np.array([10.0, 10.0, -10.0]), tol_grad=1e-10)
    assert res.converged and np.allclose(res.x, c, atol=1e-8)


def test_qn_rosenbrock():
    res = quasi_newton_min(rosen, np.array([-1.2, 1.0]), tol_grad=1e-8, max_iter=1000)
    assert res.converged
    assert np.allclose(res.x, [1, 1], atol=1e-5)
    assert np.max(np.abs(rosen(res.x)[1])) < 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), dim=st.integers(1, 12))
def test_qn_convex_quadratic_iterations(seed, dim):
    rng = np.random.default_rng(seed)
    R = rng.normal(size=(dim, dim))
    A = R @ R.T + np.eye(dim)
    c = rng.normal(size=dim)
    res = quasi_newton_min(quad(c, A), rng.normal(size=dim), tol_grad=1e-8, max_iter=200)
    assert res.converged and res.iterations <= dim + 5


def test_qn_monotone_and_failure_flag():
    vals = []

    def f(x):
        v, g = rosen(x)
        vals.append(v)
        return v, g
    res = quasi_newton_min(f, np.array([-1.2, 1.0]), max_iter=5)
    assert not res.converged and res.fun <= vals[0]
    # inconsistent gradient: no step along -g decreases f
    res = quasi_newton_min(lambda x: (float(x @ x), -x), np.ones(2))
    assert not res.converged and res.fun <= 2.0
    with pytest.raises(ValueError):
        quasi_newton_min(lambda x: (np.inf, x), np.ones(2))


def test_bounded_min_examples():
    f = lambda x: ((x[0] - 2) ** 2, np.array([2 * (x[0] - 2)]))
    res = bounded_min(f, np.array([0.5]), [0.0], [1.0])
    assert res.x[0] == 1.0 and res.converged
    f = lambda x: (float(x @ x), 2 * x)
    res = bounded_min(f, np.full(5, 0.7), -np.ones(5), np.ones(5))
    assert np.allclose(res.x, 0, atol=1e-8)
    with pytest.raises(ValueError):
        bounded_min(f, np.full(5, 2.0), -np.ones(5), np.ones(5))
    assert projected_grad_norm(np.array([1.0]), np.array([-3.0]), [0.0], [1.0]) == 0.0


def test_relaxed_problem_stationary(duffing10):
    s = Scheme("TI", 1e-4)
    rng = np.random.default_rng(0)
    x0, _ = steady_state(duffing10, Scheme("TI", 1e-2), rng.uniform(0, 0.5, 20))
    prob = RelaxedProblem(duffing10, s, x0, CostSpec(rng.uniform(0, 0.5, 20), 10))
    lo, hi = prob.bounds()
    y0 = prob.pack(np.zeros(prob.shape), np.full(10, 0.5))
    res = bounded_min(prob, y0, lo, hi, tol=1e-6, max_iter=1000)
    _, alpha = prob.split(res.x)
    assert np.all((alpha >= 0) & (alpha <= 1))
    assert res.grad_norm < 1e-5
    assert res.fun <= prob(y0)[0]


def brute_round(alpha, M, mode):
    best, arg = np.inf, None
    for bits in itertools.product((0, 1), repeat=len(alpha)):
        p = np.array(bits)
        if (mode == "exactly" and p.sum() != M) or p.sum() > M:
            continue
        v = np.abs(p - alpha).sum()
        if v < best - 1e-12:
            best, arg = v, p
    return best, arg


def test_round_examples():
    s = round_selection([0.9, 0.2, 0.6], 1, "at-most")
    assert list(s.pi) == [1, 0, 0]
    assert list(round_selection([0.4, 0.3], 2, "at-most").pi) == [0, 0]
    assert list(round_selection([0.4, 0.3], 1, "exactly").pi) == [1, 0]
    assert list(round_selection([0.7, 0.7, 0.7], 2, "exactly").pi) == [1, 1, 0]
    assert list(round_selection([1.0, 0.0, 1.0], 2, "at-most").pi) == [1, 0, 1]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 9).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0, 1), min_size=n, max_size=n), st.integers(0, n),
    st.sampled_from(["at-most", "exactly"]))))
def test_round_matches_brute_force(args):
    alpha, M, mode = args
    alpha = np.array(alpha)
    s = round_selection(alpha, M, mode)
    best, _ = brute_round(alpha, M, mode)
    assert s.feasible()
    assert np.abs(s.pi - alpha).sum() <= best + 1e-12


def test_selection():
    s = Selection([1, 0, 1], 2, "exactly")
    assert s.M == 2 and s.feasible() and s.bits == "101" and list(s.nodes) == [0, 2]
    assert not Selection([1, 1, 1], 2, "at-most").feasible()
    assert Selection([0, 0, 1], 2, "at-most").feasible()
    assert not Selection([0, 0, 1], 2, "exactly").feasible()


def test_neighbors():
    nb = neighbors(np.array([1, 1, 1]), 2, BudgetMode.AT_MOST)
    assert [list(q) for q in nb] == [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
    nb = neighbors(np.array([1, 0, 0]), 2, BudgetMode.EXACTLY)
    assert [list(q) for q in nb] == [[1, 1, 0], [1, 0, 1]]
    nb = neighbors(np.array([1, 0, 1, 0]), 2, BudgetMode.EXACTLY)
    assert all(q.sum() == 2 for q in nb) and len(nb) == 4
    nb = neighbors(np.array([1, 0, 0, 0]), 2, BudgetMode.AT_MOST)
    sums = sorted(q.sum() for q in nb)
    assert sums == [0, 1, 1, 1, 2, 2, 2]


def test_solve_fixed_improves_on_zero(duffing10):
    s = Scheme("TI", 1e-4)
    rng = np.random.default_rng(1)
    x0, _ = steady_state(duffing10, Scheme("TI", 1e-2), rng.uniform(0, 0.5, 20))
    spec = CostSpec(rng.uniform(0, 0.5, 20), 10)
    J0 = cost_J(simulate(duffing10, s, x0, np.zeros((11, 10))), spec)
    res, z = solve_fixed(duffing10, s, x0, spec, np.ones(10))
    assert res.converged and res.fun < J0
    assert cost_J(simulate(duffing10, s, x0, z), spec) == pytest.approx(res.fun, rel=1e-12)


class Chain(models.NetworkModel):
    """x1' = -x1 + u1, x2' = x1 - x2 + u2."""
    name = "chain"
    N, n = 2, 1
    A = np.array([[-1.0, 0.0], [1.0, -1.0]])

    def drift(self, x):
        return self.A @ x

    def jacobian(self, x):
        return self.A.copy()


class Scalar(models.NetworkModel):
    name = "scalar"
    N, n = 1, 1

    def drift(self, x):
        return -x

    def jacobian(self, x):
        return -np.eye(1)


def test_mino_trivial_cases():
    s = Scheme("FE", 0.1)
    res = mino_search(Scalar(), s, np.zeros(1), CostSpec(np.ones(1), 5), 1, "at-most")
    assert list(res.pi) == [1] and res.error < 1e-6
    spec = CostSpec(np.ones(2), 10)
    Js = {}
    for p in ([1, 0], [0, 1]):
        Js[tuple(p)] = solve_fixed(Chain(), s, np.zeros(2), spec, np.array(p), tol_grad=1e-8)[0].fun
    best = min(Js, key=Js.get)
    assert best == (1, 0)
    res = mino_search(Chain(), s, np.zeros(2), spec, 1, "exactly")
    assert tuple(res.pi) == best
    res = mino_search(Chain(), s, np.zeros(2), spec, 1, "at-most")
    assert tuple(res.pi) == best


def small_duffing(N=6, seed=11):
    g = models.grg_graph(N, seed)
    return models.duffing_model(models.sample_duffing(g, seed + 1))


def test_mino_monotone_and_consistent():
    m = small_duffing()
    s = Scheme("TI", 1e-3)
    rng = np.random.default_rng(2)
    x0, _ = steady_state(m, Scheme("TI", 1e-2), rng.uniform(0, 0.5, 12))
    spec = CostSpec(rng.uniform(0, 0.5, 12), 10)
    r0, z0 = solve_fixed(m, s, x0, spec, np.ones(6), max_iter=100)
    res = mino_search(m, s, x0, spec, 6, "at-most", init=(np.ones(6), z0))
    assert res.objective <= r0.fun + 1e-12
    tr = simulate(m, s, x0, res.u_hat, res.pi)
    assert cost_J(tr, spec) == pytest.approx(res.objective, rel=1e-10)
    assert res.selection.feasible()


def test_mino_permutation_invariance():
    N = 6
    g = models.grg_graph(N, 21)
    p = models.sample_duffing(g, 22)
    m = models.duffing_model(p)
    perm = np.random.default_rng(0).permutation(N)
    inv = np.argsort(perm)
    coords = g.coords[perm]
    gp = models.graph_from_coords(coords, g.radius)
    pp = models.DuffingParams(gp, *(t[np.ix_(perm, perm)] for t in (p.alpha, p.beta, p.gamma)))
    mp = models.duffing_model(pp)
    rng = np.random.default_rng(3)
    s = Scheme("TI", 1e-3)
    x0, _ = steady_state(m, Scheme("TI", 1e-2), rng.uniform(0, 0.5, 2 * N))
    xd = rng.uniform(0, 0.5, 2 * N)
    sidx = np.column_stack([2 * perm, 2 * perm + 1]).ravel()
    a = mino_search(m, s, x0, CostSpec(xd, 10), 2, "exactly")
    b = mino_search(mp, s, x0[sidx], CostSpec(xd[sidx], 10), 2, "exactly")
    assert np.array_equal(a.pi, b.pi[inv])
    assert a.objective == pytest.approx(b.objective, abs=1e-6)


@pytest.mark.parametrize("M", [2, 5, 8])
def test_mino_beats_random_selections(M, duffing10):
    s = Scheme("TI", 1e-4)
    rng = np.random.default_rng(M)
    x0, _ = steady_state(duffing10, Scheme("TI", 1e-2), rng.uniform(0, 0.5, 20))
    spec = CostSpec(rng.uniform(0, 0.5, 20), 10)
    opts = MinoOptions(tol_grad=1e-8, max_iter=1000)
    res = mino_search(duffing10, s, x0, spec, M, "exactly", options=opts)
    best = np.inf
    for _ in range(200):
        pi = np.zeros(10, int)
        pi[rng.choice(10, M, replace=False)] = 1
        best = min(best, solve_fixed(duffing10, s, x0, spec, pi, tol_grad=1e-8,
                                     max_iter=1000)[0].fun)
    assert res.objective <= best * (1 + 1e-9)


def test_trace_csv(tmp_path):
    write_trace_csv([(0, "101", 1.5, True), (1, "011", np.inf, False)], tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines() == [
        "poll_round,candidate_pi_bitstring,inner_J,accepted", "0,101,1.5,1", "1,011,inf,0"]
