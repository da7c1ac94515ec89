"""Tracking cost, final control error and exact discrete adjoint gradients.

The cost of a trajectory ``x[0..T]`` towards a target ``x_D`` is::

    J = sum_{i=1}^{T} (x_D - x[i])^T Q_i (x_D - x[i])

Gradients are computed by a backward (adjoint) sweep through the same
discretization that produced the trajectory, so they are exact for the
discrete problem up to the Newton tolerance of the forward solve.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .integrate import SimulationError, simulate

__all__ = [
    "CostSpec", "GradientReport", "cost_J", "control_error",
    "input_gradient", "grad_controls", "check_gradient",
    "ControlProblem", "RelaxedProblem",
]


class CostSpec:
    """Target state and stage weights.

    ``Q`` may be None (identity at every stage), one ``(Nn, Nn)`` matrix used
    at every stage, or a ``(T, Nn, Nn)`` stack for stages ``1..T``.
    """

    def __init__(self, x_D, T, Q=None):
        self.x_D = np.asarray(x_D, dtype=float)
        self.T = int(T)
        if self.T < 1:
            raise ValueError("horizon T must be at least 1")
        if Q is not None:
            Q = np.asarray(Q, dtype=float)
            mats = Q if Q.ndim == 3 else Q[None]
            if Q.ndim == 3 and len(Q) != self.T:
                raise ValueError("need one weight matrix per stage 1..T")
            for M in mats:
                if not np.array_equal(M, M.T):
                    raise ValueError("weight matrices must be symmetric")
                if np.linalg.eigvalsh(M).min() < -1e-12 * max(1.0, np.abs(M).max()):
                    raise ValueError("weight matrices must be positive semidefinite")
        self.Q = Q

    def weight(self, i):
        """Weight matrix of stage ``i`` (1-based), or None for identity."""
        if self.Q is None:
            return None
        return self.Q[i - 1] if self.Q.ndim == 3 else self.Q

    def stage(self, i, x):
        """Cost of stage ``i`` and its gradient with respect to ``x``."""
        r = self.x_D - x
        Q = self.weight(i)
        Qr = r if Q is None else Q @ r
        return float(r @ Qr), -2.0 * Qr


def cost_J(traj, spec):
    states = traj.states if hasattr(traj, "states") else np.asarray(traj)
    if len(states) != spec.T + 1:
        raise ValueError(f"trajectory has {len(states) - 1} steps, cost expects {spec.T}")
    return sum(spec.stage(i, states[i])[0] for i in range(1, spec.T + 1))


def control_error(traj, x_D):
    """Final control error ``||x_D - x[T]||_2``."""
    states = traj.states if hasattr(traj, "states") else np.asarray(traj)
    return float(np.linalg.norm(np.asarray(x_D) - states[-1]))


def input_gradient(model, scheme, states, spec):
    """Gradient of the cost with respect to the per-node inputs ``w[0..T]``
    (the input that enters through ``B(1)``), given the forward states."""
    X = states
    T = len(X) - 1
    h = scheme.h
    rows = model.input_rows
    G = np.zeros((T + 1, model.N))
    if scheme.kind == "FE":
        mu = spec.stage(T, X[T])[1]
        for k in range(T, 0, -1):
            G[k - 1] = h * mu[rows]
            if k > 1:
                mu = spec.stage(k - 1, X[k - 1])[1] + mu + h * (model.jacobian(X[k - 1]).T @ mu)
        return G
    lam_next = np.zeros(model.dim)
    for k in range(T, 0, -1):
        F = model.jacobian(X[k])
        mu = spec.stage(k, X[k])[1]
        if k < T:
            mu = mu + lam_next + 0.5 * h * (F.T @ lam_next)
        lam = np.linalg.solve((np.eye(model.dim) - 0.5 * h * F).T, mu)
        G[k] += 0.5 * h * lam[rows]
        G[k - 1] += 0.5 * h * lam[rows]
        lam_next = lam
    return G


def _as_pi(model, pi):
    return np.ones(model.N) if pi is None else np.asarray(pi, dtype=float)


def grad_controls(model, scheme, x0, controls, pi, spec):
    """Exact gradient of ``cost_J(simulate(...))`` with respect to the
    flattened control sequence (row-major over steps)."""
    pi = _as_pi(model, pi)
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    traj = simulate(model, scheme, x0, controls, pi)
    G = input_gradient(model, scheme, traj.states, spec) * pi
    if controls.shape[1] != model.N:
        G = G[:, np.flatnonzero(pi)]
    return G.ravel()


@dataclass
class GradientReport:
    gradient: np.ndarray
    fd_gradient: np.ndarray
    max_rel_error: float

    @property
    def rel_errors(self):
        return np.abs(self.gradient - self.fd_gradient) / np.maximum(1.0, np.abs(self.fd_gradient))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "analytic", "fd", "rel_err"])
            for i, (a, f, r) in enumerate(zip(self.gradient, self.fd_gradient, self.rel_errors)):
                w.writerow([i, format(a, ".17g"), format(f, ".17g"), format(r, ".17g")])


def check_gradient(model, scheme, x0, controls, pi, spec, fd_step=1e-6):
    """Compare :func:`grad_controls` with central finite differences."""
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    g = grad_controls(model, scheme, x0, controls, pi, spec)
    flat = controls.ravel()
    fd = np.empty_like(flat)
    for i in range(flat.size):
        zp = flat.copy()
        zp[i] += fd_step
        zm = flat.copy()
        zm[i] -= fd_step
        Jp = cost_J(simulate(model, scheme, x0, zp.reshape(controls.shape), pi), spec)
        Jm = cost_J(simulate(model, scheme, x0, zm.reshape(controls.shape), pi), spec)
        fd[i] = (Jp - Jm) / (2 * fd_step)
    rep = GradientReport(g, fd, 0.0)
    rep.max_rel_error = float(rep.rel_errors.max()) if flat.size else 0.0
    return rep


def _cum_grad(gv):
    """Pull a gradient with respect to step impulses back to their running
    sums: ``d/dy_k = d/dv_k - d/dv_{k+1}``."""
    gy = gv.copy()
    gy[:-1] -= gv[1:]
    return gy


class ControlProblem:
    """Fixed-selection control design as an unconstrained smooth problem.

    The variable ``y`` holds, per selected node, the running sum over steps
    of the impulses ``scale * u_k`` (``scale`` is the step size by default).
    Both benchmark networks integrate their inputs, so in these coordinates
    the map from variables to states is close to the identity and
    quasi-Newton methods converge in tens of iterations instead of
    thousands. Simulation failures are reported as an infinite cost so that
    line searches back off.
    """

    def __init__(self, model, scheme, x0, spec, pi, scale=None):
        self.model = model
        self.scheme = scheme
        self.x0 = np.asarray(x0, dtype=float)
        self.spec = spec
        self.pi = np.asarray(pi, dtype=float)
        self.columns = np.flatnonzero(self.pi)
        self.scale = scheme.h if scale is None else float(scale)
        self.shape = (spec.T + 1, len(self.columns))
        self.nfev = 0

    @property
    def size(self):
        return self.shape[0] * self.shape[1]

    def controls(self, y):
        """Reduced controls ``u`` for the variable vector ``y``."""
        Y = np.asarray(y, dtype=float).reshape(self.shape)
        return np.diff(Y, axis=0, prepend=0.0) / self.scale

    def variables(self, u):
        return np.cumsum(np.asarray(u, dtype=float) * self.scale, axis=0).ravel()

    def full_controls(self, y):
        """Full-width controls with zero columns for unselected nodes."""
        z = np.zeros((self.shape[0], self.model.N))
        z[:, self.columns] = self.controls(y)
        return z

    def trajectory(self, y):
        return simulate(self.model, self.scheme, self.x0, self.controls(y), self.pi)

    def value(self, y):
        self.nfev += 1
        try:
            return cost_J(self.trajectory(y), self.spec)
        except SimulationError:
            return np.inf

    def value_and_grad(self, y):
        self.nfev += 1
        try:
            traj = self.trajectory(y)
        except SimulationError:
            return np.inf, np.full(self.size, np.nan)
        J = cost_J(traj, self.spec)
        G = input_gradient(self.model, self.scheme, traj.states, self.spec)
        G = G[:, self.columns] * self.pi[self.columns]
        return J, _cum_grad(G / self.scale).ravel()

    __call__ = value_and_grad


class RelaxedProblem:
    """Joint problem over controls for all nodes and the relaxed actuation
    weights ``alpha``; variables are ``concat(y, alpha)`` with ``y`` in the
    running-sum coordinates of :class:`ControlProblem`."""

    def __init__(self, model, scheme, x0, spec, scale=None):
        self.model = model
        self.scheme = scheme
        self.x0 = np.asarray(x0, dtype=float)
        self.spec = spec
        self.scale = scheme.h if scale is None else float(scale)
        self.shape = (spec.T + 1, model.N)
        self.nfev = 0

    @property
    def size(self):
        return self.shape[0] * self.shape[1] + self.model.N

    def split(self, y):
        y = np.asarray(y, dtype=float)
        n = self.shape[0] * self.shape[1]
        Y = y[:n].reshape(self.shape)
        return np.diff(Y, axis=0, prepend=0.0) / self.scale, y[n:]

    def pack(self, z, alpha):
        y = np.cumsum(np.asarray(z, dtype=float) * self.scale, axis=0).ravel()
        return np.concatenate([y, alpha])

    def bounds(self):
        n = self.shape[0] * self.shape[1]
        lo = np.concatenate([np.full(n, -np.inf), np.zeros(self.model.N)])
        hi = np.concatenate([np.full(n, np.inf), np.ones(self.model.N)])
        return lo, hi

    def value_and_grad(self, y):
        self.nfev += 1
        z, alpha = self.split(y)
        try:
            traj = simulate(self.model, self.scheme, self.x0, z, alpha)
        except SimulationError:
            return np.inf, np.full(self.size, np.nan)
        J = cost_J(traj, self.spec)
        G = input_gradient(self.model, self.scheme, traj.states, self.spec)
        gz = _cum_grad(G * alpha / self.scale).ravel()
        ga = (G * z).sum(0)
        return J, np.concatenate([gz, ga])

    __call__ = value_and_grad
