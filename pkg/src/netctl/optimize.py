"""Solvers: limited-memory quasi-Newton, box-constrained descent, budgeted
rounding, and the mixed-variable search over actuator selections.
"""
import csv
import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .integrate import simulate
from .objective import ControlProblem, control_error

__all__ = [
    "BudgetMode", "Selection", "NlpResult", "MinoOptions", "MinoResult",
    "quasi_newton_min", "bounded_min", "round_selection", "solve_fixed",
    "neighbors", "mino_search", "write_trace_csv", "bits",
]

log = logging.getLogger(__name__)


class BudgetMode(str, enum.Enum):
    AT_MOST = "at-most"
    EXACTLY = "exactly"


def bits(pi):
    return "".join("1" if p else "0" for p in np.asarray(pi))


@dataclass(frozen=True)
class Selection:
    """Binary actuation vector with its budget."""

    pi: np.ndarray
    M_max: int
    mode: BudgetMode = BudgetMode.AT_MOST

    def __post_init__(self):
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=int))
        object.__setattr__(self, "mode", BudgetMode(self.mode))

    @property
    def M(self):
        return int(self.pi.sum())

    @property
    def nodes(self):
        return np.flatnonzero(self.pi)

    @property
    def bits(self):
        return bits(self.pi)

    def feasible(self):
        if self.mode is BudgetMode.EXACTLY:
            return self.M == self.M_max
        return self.M <= self.M_max


@dataclass
class NlpResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    grad_norm: float
    nfev: int = 0
    message: str = ""


def _two_loop(g, S, Y, rho):
    q = g.copy()
    a = np.empty(len(S))
    for i in range(len(S) - 1, -1, -1):
        a[i] = rho[i] * (S[i] @ q)
        q -= a[i] * Y[i]
    if S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for i in range(len(S)):
        b = rho[i] * (Y[i] @ q)
        q += (a[i] - b) * S[i]
    return -q


def quasi_newton_min(fun, x_init, tol_grad=1e-6, max_iter=500, memory=10,
                     c1=1e-4, max_halvings=60, max_stall=5):
    """Minimize a smooth function with L-BFGS and Armijo backtracking.

    After the Armijo step the step length is refined once by a secant step
    on the directional derivative and the refined point is kept if it is
    lower; on quadratics this makes the line search exact.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> (f, grad)``. A non-finite ``f`` is treated as a failed
        trial point by the line search.
    tol_grad : float
        Stop when the sup norm of the gradient drops below this value.

    Returns
    -------
    NlpResult
        ``converged`` is False when ``max_iter`` is reached or the line
        search fails to find a decrease; the best iterate is returned either
        way. The run also stops, unconverged, after ``max_stall``
        consecutive steps whose decrease is at rounding level.
    """
    x = np.array(x_init, dtype=float).ravel()
    f, g = fun(x)
    nfev = 1
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the initial point")
    S, Y, rho = [], [], []
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    msg = "iteration limit"
    it = 0
    stall = 0
    for it in range(max_iter):
        if gnorm < tol_grad:
            return NlpResult(x, f, it, True, gnorm, nfev, "gradient below tolerance")
        d = _two_loop(g, S, Y, rho)
        gd = g @ d
        if not gd < 0:
            S, Y, rho = [], [], []
            d = -g
            gd = -(g @ g)
        t = 1.0 if S else min(1.0, 1.0 / gnorm)
        for _ in range(max_halvings):
            x_new = x + t * d
            f_new, g_new = fun(x_new)
            nfev += 1
            if np.isfinite(f_new) and f_new <= f + c1 * t * gd:
                break
            t *= 0.5
        else:
            return NlpResult(x, f, it, False, gnorm, nfev, "line search failed")
        # one secant step on the directional derivative; exact on quadratics
        dd = g_new @ d
        if dd != gd:
            t2 = t * gd / (gd - dd)
            if t2 > 0 and abs(t2 - t) > 1e-3 * t:
                f2, g2 = fun(x + t2 * d)
                nfev += 1
                if np.isfinite(f2) and f2 < f_new:
                    x_new, f_new, g_new = x + t2 * d, f2, g2
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            S.append(s)
            Y.append(y)
            rho.append(1.0 / sy)
            if len(S) > memory:
                del S[0], Y[0], rho[0]
        stall = stall + 1 if f - f_new <= 4e-16 * abs(f) else 0
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.max(np.abs(g)))
        if stall >= max_stall and not gnorm < tol_grad:
            msg = "no further decrease"
            it += 1
            break
    else:
        it = max_iter
    converged = gnorm < tol_grad
    return NlpResult(x, f, it, converged, gnorm, nfev,
                     "gradient below tolerance" if converged else msg)


def projected_grad_norm(x, g, lower, upper):
    return float(np.max(np.abs(np.clip(x - g, lower, upper) - x))) if x.size else 0.0


def bounded_min(fun, x_init, lower, upper, tol=1e-6, max_iter=500):
    """Minimize over the box ``lower <= x <= upper``.

    Uses the projected limited-memory quasi-Newton method of L-BFGS-B.
    Stationarity is judged by the sup norm of the projected gradient step
    ``clip(x - g) - x``.
    """
    x0 = np.array(x_init, dtype=float).ravel()
    lower = np.broadcast_to(np.asarray(lower, dtype=float), x0.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), x0.shape)
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise ValueError("initial point violates the bounds")
    f0 = fun(x0)[0]
    bnds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
            for lo, hi in zip(lower, upper)]
    res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bnds,
                   options={"maxiter": max_iter, "gtol": tol, "ftol": 0.0,
                            "maxcor": 10, "maxls": 60})
    x = np.clip(res.x, lower, upper)
    f, g = fun(x)
    if not f <= f0:
        x, (f, g) = x0, fun(x0)
    pg = projected_grad_norm(x, g, lower, upper)
    return NlpResult(x, f, int(res.nit), pg < tol, pg, int(res.nfev) + 2, str(res.message))


def round_selection(alpha, M_max, mode=BudgetMode.AT_MOST):
    """Closest binary selection to ``alpha`` in the L1 sense under the budget.

    Switching node ``i`` on changes ``sum |pi - alpha|`` by ``1 - 2 alpha_i``,
    so the optimum takes the largest entries: only those above one half in
    at-most mode, exactly ``M_max`` of them in exactly mode. Equal values are
    taken in index order.
    """
    alpha = np.asarray(alpha, dtype=float)
    mode = BudgetMode(mode)
    order = np.argsort(-alpha, kind="stable")
    pi = np.zeros(len(alpha), dtype=int)
    if mode is BudgetMode.EXACTLY:
        pi[order[:M_max]] = 1
    else:
        take = [i for i in order[:M_max] if alpha[i] > 0.5]
        pi[take] = 1
    return Selection(pi, M_max, mode)


def solve_fixed(model, scheme, x0, spec, pi, z_init=None, tol_grad=1e-6,
                max_iter=500, scale=None):
    """Optimal controls for a fixed actuation vector.

    ``z_init`` is a full-width warm start; columns of unselected nodes are
    ignored. Returns ``(NlpResult, z)`` with ``z`` full width.
    """
    prob = ControlProblem(model, scheme, x0, spec, pi, scale)
    if z_init is None:
        v0 = np.zeros(prob.size)
    else:
        v0 = prob.variables(np.asarray(z_init)[:, prob.columns])
    res = quasi_newton_min(prob, v0, tol_grad=tol_grad, max_iter=max_iter)
    res.nfev = prob.nfev
    return res, prob.full_controls(res.x)


@dataclass
class MinoOptions:
    inner_iters: int = 100
    max_poll_rounds: int = 50
    tol_grad: float = 1e-6
    max_iter: int = 500
    rel_improve: float = 1e-8
    inner_tol: float = 1e-6
    scale: float = None
    workers: int = 1


@dataclass
class MinoResult:
    selection: Selection
    u_hat: np.ndarray
    objective: float
    error: float
    evaluations: int
    trace: list = field(default_factory=list)
    z_hat: np.ndarray = None
    rounds: int = 0
    converged: bool = True

    @property
    def pi(self):
        return self.selection.pi


def neighbors(pi, M_max, mode):
    """Poll set of ``pi`` in deterministic order.

    A selection over budget (or under budget in exactly mode) gets the
    single flips that move it towards feasibility. A feasible one gets the
    budget-respecting single flips followed by all swaps.
    """
    pi = np.asarray(pi, dtype=int)
    on = np.flatnonzero(pi)
    off = np.flatnonzero(pi == 0)
    M = len(on)
    out = []

    def flip(i):
        q = pi.copy()
        q[i] ^= 1
        return q

    if M > M_max:
        return [flip(i) for i in on]
    if mode is BudgetMode.EXACTLY and M < M_max:
        return [flip(i) for i in off]
    for i in range(len(pi)):
        if pi[i] and mode is BudgetMode.AT_MOST:
            out.append(flip(i))
        elif not pi[i] and M < M_max:
            out.append(flip(i))
    for i in on:
        for j in off:
            q = pi.copy()
            q[i] = 0
            q[j] = 1
            out.append(q)
    return out


def _score(args):
    model, scheme, x0, spec, pi, z, iters, tol, scale = args
    try:
        res, zf = solve_fixed(model, scheme, x0, spec, pi, z, tol_grad=tol,
                              max_iter=iters, scale=scale)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError):
        return np.inf, z, 0
    return res.fun, zf, res.nfev


def _warm(z, pi):
    z = z.copy()
    z[:, np.asarray(pi) == 0] = 0.0
    return z


def _map(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def mino_search(model, scheme, x0, spec, M_max, mode=BudgetMode.AT_MOST,
                init=None, options=None):
    """Mixed-variable local search over selections and controls.

    Each poll round scores every neighbor of the incumbent selection by a
    short quasi-Newton solve of the control problem, warm-started from the
    incumbent controls (new columns start at zero). The best neighbor is
    accepted if it lowers the cost by more than ``rel_improve`` relative;
    a selection that violates the budget accepts its best neighbor
    unconditionally. The search ends with a full solve at the incumbent.

    Parameters
    ----------
    init : tuple (pi0, z0), optional
        Starting selection and full-width controls; defaults to all nodes
        and zero controls.
    """
    opts = options or MinoOptions()
    mode = BudgetMode(mode)
    N = model.N
    if init is None:
        pi = np.ones(N, dtype=int)
        z = np.zeros((spec.T + 1, N))
    else:
        pi = np.asarray(init[0], dtype=int).copy()
        z = np.zeros((spec.T + 1, N)) if init[1] is None else np.array(init[1], dtype=float)
    J, z, nfev = _score((model, scheme, x0, spec, pi, _warm(z, pi), opts.inner_iters, opts.inner_tol, opts.scale))
    if not np.isfinite(J):
        raise RuntimeError("continuous subproblem failed at the initial selection")
    evals = nfev
    trace = [(0, bits(pi), J, True)]
    rnd = 0
    for rnd in range(1, opts.max_poll_rounds + 1):
        cands = neighbors(pi, M_max, mode)
        if not cands:
            break
        restoring = not Selection(pi, M_max, mode).feasible()
        jobs = [(model, scheme, x0, spec, q, _warm(z, q), opts.inner_iters, opts.inner_tol, opts.scale)
                for q in cands]
        scores = _map(_score, jobs, opts.workers)
        evals += sum(s[2] for s in scores)
        Js = np.array([s[0] for s in scores])
        best = int(np.argmin(Js))  # first minimum: lowest position in poll order
        accept = np.isfinite(Js[best]) and (
            restoring or Js[best] < J - opts.rel_improve * abs(J))
        for c, (q, s) in enumerate(zip(cands, scores)):
            trace.append((rnd, bits(q), s[0], bool(accept and c == best)))
        log.debug("poll round %d: best %s J=%.6g (incumbent %.6g)%s", rnd,
                  bits(cands[best]), Js[best], J, " accepted" if accept else "")
        if not accept:
            break
        pi, J, z = cands[best], Js[best], scores[best][1]
    else:
        rnd = opts.max_poll_rounds
    res, z = solve_fixed(model, scheme, x0, spec, pi, z, tol_grad=opts.tol_grad,
                         max_iter=opts.max_iter, scale=opts.scale)
    evals += res.nfev
    sel = Selection(pi, M_max, mode)
    cols = sel.nodes
    u = z[:, cols]
    traj = simulate(model, scheme, x0, u, pi)
    return MinoResult(sel, u, res.fun, control_error(traj, spec.x_D), evals, trace,
                      z, rnd, res.converged)


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["poll_round", "candidate_pi_bitstring", "inner_J", "accepted"])
        for r, b, J, acc in trace:
            w.writerow([r, b, format(J, ".17g"), int(acc)])
