"""Experiment pipelines: the selection algorithm, the relax-and-round
comparison method, and the exhaustive and random selection baselines.

All pipelines take a resolved :class:`Experiment`; :func:`resolve` builds
one from an :class:`~netctl.config.ExperimentSpec` using named random
substreams of the experiment's master seed.
"""
import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import models
from .config import ExperimentSpec
from .integrate import Scheme, SimulationError, simulate, steady_state
from .objective import CostSpec, RelaxedProblem, control_error, cost_J
from .optimize import (BudgetMode, MinoOptions, MinoResult, Selection, _map, bits,
                       bounded_min, mino_search, round_selection, solve_fixed)
from .seeding import seed_sequence, substream

__all__ = [
    "Experiment", "PipelineError", "BaselineTooLarge", "BudgetError", "BaselineDistribution",
    "resolve", "algorithm1", "relax_round_pipeline", "exhaustive_baseline",
    "random_baseline", "error_vs_steps", "verify_result", "uncontrolled_response",
    "gradient_checks",
]

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


class BaselineTooLarge(ValueError):
    pass


class BudgetError(ValueError):
    pass


@dataclass
class Experiment:
    spec: ExperimentSpec
    model: models.NetworkModel
    scheme: Scheme
    x0: np.ndarray
    x_D: np.ndarray
    cost: CostSpec
    M_max: int
    mode: BudgetMode
    graph: models.Graph = None
    settled: bool = True

    @property
    def N(self):
        return self.model.N

    def mino_options(self, workers=1):
        s = self.spec
        return MinoOptions(inner_iters=s.inner_iters, max_poll_rounds=s.max_poll_rounds,
                           tol_grad=s.tol_grad, max_iter=s.max_iter,
                           rel_improve=s.rel_improve, inner_tol=s.inner_tol,
                           workers=workers)


def build_model(spec):
    """Return ``(model, graph)`` for an experiment (graph is None for memory)."""
    if spec.model == "duffing":
        graph = models.grg_graph(spec.N, seed_sequence(spec.seed, "graph"))
        params = models.sample_duffing(graph, seed_sequence(spec.seed, "params"),
                                       spec.alpha_range, spec.beta_range, spec.gamma_range)
        return models.duffing_model(params), graph
    pats = np.array(models.letter_patterns(spec.patterns))
    if pats.shape[1] != spec.N:
        raise ValueError(f"letter patterns have 25 entries, model.N is {spec.N}")
    C = models.hebb_weights(pats)
    return models.memory_model(models.MemoryParams(pats, C, spec.epsilon)), None


def _vector(values, dim, what):
    v = np.asarray(values, dtype=float)
    if v.shape != (dim,):
        raise ValueError(f"{what} needs {dim} values, got {v.size}")
    return v


def start_state(spec, model):
    """State the x0 policy starts from, before any settling."""
    dim = model.dim
    pol = spec.x0_policy
    if pol == "explicit":
        return _vector(spec.x0_values, dim, "x0.values")
    if pol in ("random", "steady-state-from-random"):
        return substream(spec.seed, "init-state").uniform(spec.x0_low, spec.x0_high, dim)
    (xi,) = models.letter_patterns(spec.x0_pattern)
    if model.n != 1 or model.N != len(xi):
        raise ValueError("pattern initial states need a one-dimensional network of 25 nodes")
    noise = substream(spec.seed, "noise").normal(0.0, spec.x0_noise, dim)
    return models.pattern_to_phases(xi) + noise


def initial_state(spec, model):
    """Initial state per the x0 policy; returns ``(x0, settled)``."""
    start = start_state(spec, model)
    if spec.x0_policy in ("explicit", "random"):
        return start, True
    settle = Scheme(spec.settle_scheme, spec.settle_h, spec.newton_tol, spec.newton_max_iter)
    x, ok = steady_state(model, settle, start, spec.settle_tol, spec.settle_max_steps)
    if not ok:
        log.warning("initial state did not settle within %d steps", spec.settle_max_steps)
    return x, ok


def desired_state(spec, model):
    dim = model.dim
    if spec.xd_policy == "explicit":
        return _vector(spec.xd_values, dim, "xd.values")
    if spec.xd_policy == "uniform":
        return substream(spec.seed, "desired-state").uniform(spec.xd_low, spec.xd_high, dim)
    (xi,) = models.letter_patterns(spec.xd_pattern)
    if model.n != 1 or model.N != len(xi):
        raise ValueError("pattern targets need a one-dimensional network of 25 nodes")
    return models.pattern_to_phases(xi)


def resolve(spec):
    """Turn a spec into concrete model, scheme, states and budget."""
    if isinstance(spec, Experiment):
        return spec
    model, graph = build_model(spec)
    scheme = Scheme(spec.scheme, spec.h, spec.newton_tol, spec.newton_max_iter)
    x0, settled = initial_state(spec, model)
    x_D = desired_state(spec, model)
    M = spec.budget
    if not 1 <= M <= spec.N:
        raise BudgetError(f"node budget {M} outside 1..{spec.N}")
    return Experiment(spec, model, scheme, x0, x_D, CostSpec(x_D, spec.T), M,
                      BudgetMode(spec.mode), graph, settled)


def _finish(exp, pi, z_init, method, trace=(), evaluations=0, rounds=0, info=None):
    """Solve the reduced problem for ``pi`` and package the result."""
    s = exp.spec
    res, z = solve_fixed(exp.model, exp.scheme, exp.x0, exp.cost, pi, z_init,
                         tol_grad=s.tol_grad, max_iter=s.max_iter)
    sel = Selection(pi, exp.M_max, exp.mode)
    u = z[:, sel.nodes]
    traj = simulate(exp.model, exp.scheme, exp.x0, u, pi)
    out = MinoResult(sel, u, res.fun, control_error(traj, exp.x_D),
                     evaluations + res.nfev, list(trace), z, rounds, res.converged)
    out.method = method
    out.info = dict(info or {})
    return out


def algorithm1(spec, workers=1):
    """Joint selection of control nodes and control sequence.

    1. Solve the control problem with every node actuated, from zero
       controls.
    2. Run the mixed-variable search from that point.
    3. Re-solve the control problem in the reduced inputs of the selected
       nodes, warm-started from the search's controls.
    """
    exp = resolve(spec)
    s = exp.spec
    ones = np.ones(exp.N, dtype=int)
    try:
        r0, z0 = solve_fixed(exp.model, exp.scheme, exp.x0, exp.cost, ones, None,
                             tol_grad=s.tol_grad, max_iter=s.max_iter)
    except (SimulationError, ValueError) as exc:
        raise PipelineError("initial solution", exc) from exc
    try:
        mres = mino_search(exp.model, exp.scheme, exp.x0, exp.cost, exp.M_max, exp.mode,
                           init=(ones, z0), options=exp.mino_options(workers))
    except (SimulationError, ValueError, RuntimeError) as exc:
        raise PipelineError("selection search", exc) from exc
    try:
        return _finish(exp, mres.selection.pi, mres.z_hat, "algorithm1", mres.trace,
                       mres.evaluations, mres.rounds,
                       {"initial_J": r0.fun, "search_J": mres.objective})
    except (SimulationError, ValueError) as exc:
        raise PipelineError("final solution", exc) from exc


def relax_round_pipeline(spec):
    """Comparison method: relax the selection to ``alpha`` in ``[0, 1]^N``,
    solve jointly for controls and ``alpha``, round ``alpha`` to the closest
    feasible selection, then re-solve the controls."""
    exp = resolve(spec)
    s = exp.spec
    prob = RelaxedProblem(exp.model, exp.scheme, exp.x0, exp.cost)
    y0 = prob.pack(np.zeros(prob.shape), np.full(exp.N, s.relax_alpha_init))
    lo, hi = prob.bounds()
    try:
        res = bounded_min(prob, y0, lo, hi, tol=s.relax_tol, max_iter=s.relax_max_iter)
    except (SimulationError, ValueError) as exc:
        raise PipelineError("relaxed problem", exc) from exc
    z, alpha = prob.split(res.x)
    sel = round_selection(alpha, exp.M_max, exp.mode)
    try:
        return _finish(exp, sel.pi, z * alpha, "relax-round", evaluations=prob.nfev,
                       info={"alpha": alpha, "relaxed_J": res.fun,
                             "relaxed_pg_norm": res.grad_norm})
    except (SimulationError, ValueError) as exc:
        raise PipelineError("final solution", exc) from exc


@dataclass
class BaselineDistribution:
    errors: np.ndarray
    objectives: np.ndarray
    selections: list
    method: str
    M: int = 0
    notes: list = field(default_factory=list)

    def __len__(self):
        return len(self.errors)

    def percentile_rank(self, e):
        """Fraction of baseline errors strictly below ``e``."""
        return float(np.mean(self.errors < e))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "pi", "J", "e"])
            for i, (p, J, e) in enumerate(zip(self.selections, self.objectives, self.errors)):
                w.writerow([i, p, format(J, ".17g"), format(e, ".17g")])


def _baseline_job(args):
    exp, pi = args
    try:
        res, z = solve_fixed(exp.model, exp.scheme, exp.x0, exp.cost, pi, None,
                             tol_grad=exp.spec.tol_grad, max_iter=exp.spec.max_iter)
        traj = simulate(exp.model, exp.scheme, exp.x0, z, pi)
    except (SimulationError, ValueError):
        return np.inf, np.inf
    return res.fun, control_error(traj, exp.x_D)


def _evaluate(exp, pis, method, M, workers):
    out = _map(_baseline_job, [(exp, p) for p in pis], workers)
    return BaselineDistribution(np.array([o[1] for o in out]), np.array([o[0] for o in out]),
                                [bits(p) for p in pis], method, M)


def exhaustive_baseline(spec, M=None, cap=None, workers=1):
    """Final errors of every selection of exactly ``M`` nodes, in
    lexicographic order of the selected index tuples."""
    exp = resolve(spec)
    M = exp.M_max if M is None else int(M)
    cap = exp.spec.baseline_cap if cap is None else cap
    total = math.comb(exp.N, M)
    if total > cap:
        raise BaselineTooLarge(f"C({exp.N},{M}) = {total} selections exceed the cap "
                               f"of {cap}; use random_baseline instead")
    pis = []
    for combo in _combinations(exp.N, M):
        p = np.zeros(exp.N, dtype=int)
        p[list(combo)] = 1
        pis.append(p)
    return _evaluate(exp, pis, "exhaustive", M, workers)


def _combinations(N, M):
    import itertools
    return itertools.combinations(range(N), M)


def random_baseline(spec, count=None, M=None, workers=1):
    """Final errors of ``count`` uniformly drawn selections of ``M`` nodes.

    Draws are distinct unless fewer than ``count`` selections exist.
    """
    exp = resolve(spec)
    M = exp.M_max if M is None else int(M)
    count = exp.spec.baseline_count if count is None else int(count)
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = substream(exp.spec.seed, "baseline-sampling", M)
    distinct = math.comb(exp.N, M) >= count
    seen = set()
    pis = []
    while len(pis) < count:
        p = np.zeros(exp.N, dtype=int)
        p[rng.choice(exp.N, M, replace=False)] = 1
        key = bits(p)
        if distinct and key in seen:
            continue
        seen.add(key)
        pis.append(p)
    return _evaluate(exp, pis, "random", M, workers)


def error_vs_steps(result, spec):
    """Per-step control error ``||x_D - x_k||`` for ``k = 0..T``."""
    exp = resolve(spec)
    traj = simulate(exp.model, exp.scheme, exp.x0, result.u_hat, result.selection.pi)
    return np.linalg.norm(exp.x_D[None, :] - traj.states, axis=1)


def verify_result(result, spec, rtol=1e-10):
    """Re-simulate the returned controls and compare cost and error."""
    exp = resolve(spec)
    traj = simulate(exp.model, exp.scheme, exp.x0, result.u_hat, result.selection.pi)
    J = cost_J(traj, exp.cost)
    e = control_error(traj, exp.x_D)
    ok_J = abs(J - result.objective) <= rtol * max(1.0, abs(J))
    ok_e = abs(e - result.error) <= rtol * max(1.0, abs(e))
    return ok_J and ok_e and result.selection.feasible()


def uncontrolled_response(spec):
    """Free response from the policy's start state (before settling) with
    the ``simulate.*`` scheme settings. Raises SimulationError when the
    discretization blows up."""
    model, _ = build_model(spec)
    x = start_state(spec, model)
    scheme = Scheme(spec.sim_scheme or spec.scheme, spec.sim_h, spec.newton_tol,
                    spec.newton_max_iter)
    return simulate(model, scheme, x, np.zeros((spec.sim_T + 1, model.N)))


def gradient_checks(spec, schemes=("FE", "TI"), newton_tol=1e-13):
    """Adjoint-versus-finite-difference checks on random instances.

    Each instance draws a selection of ``budget`` nodes, controls uniform in
    ``[-1, 1]`` and a target uniform in the ``xd`` range, from the
    ``gradcheck`` substream. The tight Newton tolerance keeps the finite
    differences from resolving the solver's own error. Returns a list of
    ``(scheme, instance, GradientReport)``.
    """
    from .objective import check_gradient
    exp = resolve(spec)
    out = []
    for kind in schemes:
        scheme = Scheme(kind, exp.scheme.h, newton_tol, max(exp.scheme.newton_max_iter, 50))
        for i in range(spec.gradcheck_instances):
            rng = substream(spec.seed, "gradcheck", i)
            pi = np.zeros(exp.N, dtype=int)
            pi[rng.choice(exp.N, exp.M_max, replace=False)] = 1
            u = rng.uniform(-1.0, 1.0, (spec.T + 1, exp.M_max))
            x_D = rng.uniform(spec.xd_low, spec.xd_high, exp.model.dim)
            rep = check_gradient(exp.model, scheme, exp.x0, u, pi, CostSpec(x_D, spec.T),
                                 spec.gradcheck_fd_step)
            out.append((kind, i, rep))
    return out
