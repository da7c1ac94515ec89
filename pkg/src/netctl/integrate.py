"""Fixed-step discretizations and trajectory simulation.

Two schemes are supported:

* ``FE``, forward Euler: ``x[k+1] = x[k] + h (f(x[k]) + B z[k])``
* ``TI``, implicit trapezoidal rule, solved by Newton's method at every step:
  ``x[k] = x[k-1] + h/2 (f(x[k]) + f(x[k-1]) + B (z[k] + z[k-1]))``

Controls are arrays of shape ``(T + 1, width)`` where ``width`` is either
``N`` (one column per node, masked by ``pi``) or the number of selected
nodes (the reduced input ``u`` acting through ``B_hat``).
"""
import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Scheme", "Trajectory", "SimulationError", "InstabilityError",
    "NewtonError", "LinearSolveError", "fe_step", "ti_step", "simulate",
    "node_inputs", "reference_solve", "steady_state", "write_trajectory_csv",
]


class SimulationError(RuntimeError):
    """A discretized step failed; ``step`` is the index of the state that
    could not be computed."""

    def __init__(self, msg, step=None):
        super().__init__(msg if step is None else f"{msg} (step {step})")
        self.step = step


class InstabilityError(SimulationError):
    pass


class NewtonError(SimulationError):
    def __init__(self, msg, step=None, residual=None):
        super().__init__(msg, step)
        self.residual = residual


class LinearSolveError(SimulationError):
    pass


@dataclass(frozen=True)
class Scheme:
    kind: str = "TI"
    h: float = 1e-2
    newton_tol: float = 1e-10
    newton_max_iter: int = 50

    def __post_init__(self):
        if self.kind not in ("FE", "TI"):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if not self.h > 0:
            raise ValueError("step size h must be positive")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be at least 1")


@dataclass
class Trajectory:
    states: np.ndarray  # (T + 1, N * n)
    scheme: Scheme

    @property
    def T(self):
        return len(self.states) - 1

    @property
    def times(self):
        return np.arange(len(self.states)) * self.scheme.h


def _check_finite(x, k):
    if not np.all(np.isfinite(x)):
        raise InstabilityError("state overflow, the discretization is unstable", k)


def fe_step(model, x, z, pi, h, k=None):
    """One forward Euler step with full-width input ``z``."""
    x_new = x + h * (model.drift(x) + model.apply_input(np.asarray(pi) * z))
    _check_finite(x_new, k)
    return x_new


def _newton(model, x_prev, f_prev, b_sum, scheme, k=None):
    """Solve the trapezoidal step; return ``(x, f(x))``.

    ``b_sum`` is ``B (z[k] + z[k-1])`` already expanded to state space.
    """
    h = scheme.h
    c = x_prev + 0.5 * h * (f_prev + b_sum)
    x = x_prev + h * f_prev + 0.5 * h * b_sum  # FE predictor
    eye = np.eye(len(x))
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(scheme.newton_max_iter + 1):
            fx = model.drift(x)
            r = x - c - 0.5 * h * fx
            rn = np.max(np.abs(r))
            if not np.isfinite(rn):
                raise InstabilityError("non-finite Newton residual", k)
            if rn < scheme.newton_tol:
                return x, fx
            if it == scheme.newton_max_iter:
                break
            A = eye - 0.5 * h * model.jacobian(x)
            try:
                x = x - np.linalg.solve(A, r)
            except np.linalg.LinAlgError as exc:
                raise LinearSolveError(f"singular Newton matrix: {exc}", k) from None
    raise NewtonError(f"Newton did not converge, residual {rn:.3e}", k, rn)


def ti_step(model, x_prev, z_prev, z, pi, scheme, k=None):
    """One trapezoidal step from ``x_prev`` with inputs ``z_prev`` and ``z``."""
    pi = np.asarray(pi)
    b_sum = model.apply_input(pi * (np.asarray(z) + np.asarray(z_prev)))
    x, _ = _newton(model, x_prev, model.drift(x_prev), b_sum, scheme, k)
    return x


def node_inputs(model, controls, pi=None):
    """Expand controls to the per-node inputs ``w = pi * z`` of shape
    ``(T + 1, N)``."""
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    N = model.N
    pi = np.ones(N) if pi is None else np.asarray(pi, dtype=float)
    width = controls.shape[1]
    if width == N:
        return controls * pi
    cols = np.flatnonzero(pi)
    if width != len(cols):
        raise ValueError(f"controls have width {width}; expected {N} or {len(cols)}")
    w = np.zeros((len(controls), N))
    w[:, cols] = controls * pi[cols]
    return w


def _rollout(model, scheme, x0, w):
    T = len(w) - 1
    X = np.empty((T + 1, model.dim))
    X[0] = x0
    f = model.drift(X[0])
    h = scheme.h
    if scheme.kind == "FE":
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(T):
                X[k + 1] = X[k] + h * (f + model.apply_input(w[k]))
                _check_finite(X[k + 1], k + 1)
                f = model.drift(X[k + 1])
    else:
        for k in range(1, T + 1):
            X[k], f = _newton(model, X[k - 1], f, model.apply_input(w[k] + w[k - 1]),
                              scheme, k)
    return X


def simulate(model, scheme, x0, controls, pi=None):
    """Roll the discretized dynamics forward over the control horizon.

    Parameters
    ----------
    controls : array_like, shape (T + 1, N) or (T + 1, M)
        Full-width inputs masked by ``pi``, or reduced inputs for the ``M``
        nonzero entries of ``pi``.
    pi : array_like, optional
        Actuation vector; all ones when omitted.

    Returns
    -------
    Trajectory
        States ``x[0], ..., x[T]``.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.dim,):
        raise ValueError(f"x0 must have length {model.dim}")
    w = node_inputs(model, controls, pi)
    return Trajectory(_rollout(model, scheme, x0, w), scheme)


def reference_solve(model, x0, controls, pi, h, h_fine, T_out=None):
    """Classic RK4 with step ``h_fine`` and zero-order-hold inputs.

    The result is sampled on the grid ``k * h`` for ``k = 0..T_out`` and is
    meant as an accuracy yardstick for the fixed-step schemes.
    """
    ratio = h / h_fine
    sub = int(round(ratio))
    if sub < 1 or abs(ratio - sub) > 1e-9 * ratio:
        raise ValueError("h_fine must divide the output step h")
    x = np.asarray(x0, dtype=float).copy()
    w = node_inputs(model, controls, pi)
    T_out = len(w) - 1 if T_out is None else int(T_out)
    out = np.empty((T_out + 1, model.dim))
    out[0] = x
    hf = h / sub
    f = model.drift
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(T_out):
            b = model.apply_input(w[min(k, len(w) - 1)])
            for _ in range(sub):
                k1 = f(x) + b
                k2 = f(x + 0.5 * hf * k1) + b
                k3 = f(x + 0.5 * hf * k2) + b
                k4 = f(x + hf * k3) + b
                x = x + (hf / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            _check_finite(x, k + 1)
            out[k + 1] = x
    return Trajectory(out, Scheme("FE", h))


def steady_state(model, scheme, x_start, tol=1e-7, max_steps=10**6):
    """Run the uncontrolled dynamics until the per-step change drops below
    ``tol`` in the sup norm.

    Returns ``(state, converged)``; ``converged`` is False when
    ``max_steps`` steps did not settle the state.
    """
    x = np.asarray(x_start, dtype=float).copy()
    zero = np.zeros(model.dim)
    f = model.drift(x)
    h = scheme.h
    for k in range(1, max_steps + 1):
        if scheme.kind == "FE":
            x_new = x + h * f
            _check_finite(x_new, k)
            f = model.drift(x_new)
        else:
            x_new, f = _newton(model, x, f, zero, scheme, k)
        if np.max(np.abs(x_new - x)) < tol:
            return x_new, True
        x = x_new
    return x, False


def write_trajectory_csv(traj, path):
    """Write ``t,x_1,...`` rows with 17 significant digits."""
    states = traj.states
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(states.shape[1])])
        for t, row in zip(traj.times, states):
            w.writerow([format(t, ".17g")] + [format(v, ".17g") for v in row])
