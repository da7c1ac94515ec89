"""Network dynamics and the two benchmark networks.

A network has ``N`` nodes with ``n`` states each, stacked node by node into
a global state of length ``N * n``. Every node receives one scalar input
which enters the last state of that node::

    dx/dt = f(x) + B(pi) z

``B(pi)`` is ``diag(pi)`` for ``n == 1`` and block diagonal with blocks
``(0, ..., 0, pi_i)`` otherwise.
"""
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .seeding import as_generator

__all__ = [
    "NetworkModel", "DuffingNetwork", "MemoryNetwork",
    "Graph", "DuffingParams", "MemoryParams",
    "grg_radius", "grg_graph", "graph_from_coords", "sample_duffing",
    "duffing_model", "hebb_weights", "memory_model", "letter_patterns",
    "pattern_to_phases", "LETTER_BITMAPS", "dump_network", "load_network",
]


class NetworkModel:
    """Base class for network dynamics with one scalar input per node.

    Subclasses set ``N`` and ``n`` and implement :meth:`drift` and
    :meth:`jacobian`. Instances are immutable after construction and can be
    shared between threads or pickled to worker processes.
    """

    N: int
    n: int
    name = "network"

    @property
    def dim(self):
        return self.N * self.n

    @property
    def input_rows(self):
        """Row of the global state driven by each node's input."""
        return np.arange(self.N) * self.n + (self.n - 1)

    def drift(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def actuation(self, pi):
        """Dense ``B(pi)`` of shape ``(N*n, N)``."""
        pi = np.asarray(pi, dtype=float)
        B = np.zeros((self.dim, self.N))
        B[self.input_rows, np.arange(self.N)] = pi
        return B

    def reduced_actuation(self, pi):
        """``B_hat``: the nonzero columns of ``B(pi)``."""
        cols = np.flatnonzero(np.asarray(pi))
        return self.actuation(pi)[:, cols]

    def apply_input(self, w):
        """Return ``B(1) @ w`` without forming the matrix."""
        out = np.zeros(self.dim)
        out[self.input_rows] = w
        return out


# --------------------------------------------------------------------------
# Geometric random graph

@dataclass(frozen=True)
class Graph:
    """Undirected graph on ``N`` nodes placed in the unit square."""

    N: int
    edges: np.ndarray  # (E, 2) int, i < j, lexicographic
    coords: np.ndarray  # (N, 2)
    radius: float

    def adjacency(self):
        A = np.zeros((self.N, self.N), dtype=bool)
        if len(self.edges):
            A[self.edges[:, 0], self.edges[:, 1]] = True
            A[self.edges[:, 1], self.edges[:, 0]] = True
        return A

    def is_connected(self):
        ncomp, _ = connected_components(self.adjacency(), directed=False)
        return ncomp == 1


def grg_radius(N):
    """Connection radius ``sqrt(1.44 / N)`` of the geometric random graph."""
    return float(np.sqrt(1.44 / N))


def graph_from_coords(coords, radius):
    """Connect every pair of points closer than ``radius`` (strictly)."""
    coords = np.asarray(coords, dtype=float)
    N = len(coords)
    d = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    i, j = np.nonzero(np.triu(d < radius, k=1))
    edges = np.column_stack([i, j]).astype(int) if len(i) else np.zeros((0, 2), int)
    return Graph(N=N, edges=edges, coords=coords, radius=float(radius))


def grg_graph(N, seed, radius=None, max_attempts=1000):
    """Sample a connected geometric random graph on the unit square.

    Coordinates are drawn i.i.d. uniform; attempt ``a`` uses child stream
    ``a`` of ``seed``. Disconnected samples are discarded.

    Raises
    ------
    RuntimeError
        If no connected graph is found within ``max_attempts`` draws.
    """
    if N < 2:
        raise ValueError("grg_graph needs N >= 2")
    radius = grg_radius(N) if radius is None else float(radius)
    for attempt in range(max_attempts):
        rng = as_generator(seed, attempt)
        g = graph_from_coords(rng.uniform(size=(N, 2)), radius)
        if g.is_connected():
            return g
    raise RuntimeError(f"no connected geometric graph with N={N} after "
                       f"{max_attempts} attempts")


# --------------------------------------------------------------------------
# Duffing oscillator network

@dataclass(frozen=True)
class DuffingParams:
    """Parameters of a Duffing network.

    ``alpha``, ``beta`` and ``gamma`` are symmetric ``N x N`` tables: the
    diagonal holds the self terms, off-diagonal entries the spring-damper
    coupling of an edge (zero where there is no edge).
    """

    graph: Graph
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray


def sample_duffing(graph, seed, alpha_range=(10.0, 20.0), beta_range=(1.0, 2.0),
                   gamma_range=(1.0, 2.0)):
    """Draw uniform Duffing parameters for ``graph``.

    Self terms are drawn first (all alpha, then beta, then gamma), then one
    (alpha, beta, gamma) triple per edge in edge-list order.
    """
    rng = as_generator(seed)
    N = graph.N
    tables = []
    diag = [rng.uniform(*r, size=N) for r in (alpha_range, beta_range, gamma_range)]
    edge_vals = rng.uniform(size=(len(graph.edges), 3))
    for k, r in enumerate((alpha_range, beta_range, gamma_range)):
        M = np.diag(diag[k])
        if len(graph.edges):
            v = r[0] + (r[1] - r[0]) * edge_vals[:, k]
            M[graph.edges[:, 0], graph.edges[:, 1]] = v
            M[graph.edges[:, 1], graph.edges[:, 0]] = v
        tables.append(M)
    return DuffingParams(graph, *tables)


class DuffingNetwork(NetworkModel):
    """Spring-damper coupled Duffing oscillators, state ``(position, velocity)``
    per node. The input acts on the velocity equation."""

    name = "duffing"

    def __init__(self, params):
        self.params = params
        self.N = params.graph.N
        self.n = 2
        off = ~np.eye(self.N, dtype=bool)
        self._a_self = np.diag(params.alpha).copy()
        self._b_self = np.diag(params.beta).copy()
        self._g_self = np.diag(params.gamma).copy()
        self._a = np.where(off, params.alpha, 0.0)
        self._b = np.where(off, params.beta, 0.0)
        self._g = np.where(off, params.gamma, 0.0)
        self._a_sum = self._a.sum(1)
        self._g_sum = self._g.sum(1)

    def drift(self, x):
        p = x[0::2]
        v = x[1::2]
        d = p[:, None] - p[None, :]
        acc = (-self._a_self * p + self._b_self * p ** 3 - self._g_self * v
               - (self._a_sum * p - self._a @ p)
               + (self._b * d ** 3).sum(1)
               - (self._g_sum * v - self._g @ v))
        out = np.empty_like(x, dtype=float)
        out[0::2] = v
        out[1::2] = acc
        return out

    def jacobian(self, x):
        p = x[0::2]
        d = p[:, None] - p[None, :]
        K = self._a - 3.0 * self._b * d ** 2
        K[np.diag_indices(self.N)] = -self._a_self + 3.0 * self._b_self * p ** 2 - K.sum(1)
        G = self._g.copy()
        G[np.diag_indices(self.N)] = -self._g_self - self._g_sum
        J = np.zeros((self.dim, self.dim))
        idx = np.arange(self.N)
        J[2 * idx, 2 * idx + 1] = 1.0
        J[1::2, 0::2] = K
        J[1::2, 1::2] = G
        return J


def duffing_model(params):
    return DuffingNetwork(params)


# --------------------------------------------------------------------------
# Associative memory network

#: 5x5 letter bitmaps, row-major, 1 is foreground.
LETTER_BITMAPS = {
    "H": ("10001", "10001", "11111", "10001", "10001"),
    "T": ("11111", "00100", "00100", "00100", "00100"),
    "L": ("10000", "10000", "10000", "10000", "11111"),
}


def letter_patterns(letters="HTL"):
    """Return the +-1 vectors (length 25) of the requested letters."""
    out = []
    for ch in letters:
        rows = LETTER_BITMAPS[ch]
        out.append(np.array([1.0 if c == "1" else -1.0 for c in "".join(rows)]))
    return tuple(out)


def pattern_to_phases(xi):
    """Phase encoding of a +-1 pattern: +1 -> 0, -1 -> pi."""
    return (1.0 - np.asarray(xi, dtype=float)) * (np.pi / 2)


def hebb_weights(patterns):
    """Hebbian coupling ``C_ij = (1/N) sum_mu xi_i^mu xi_j^mu``."""
    P = np.atleast_2d(np.asarray(patterns, dtype=float))
    if not np.all(np.abs(P) == 1.0):
        raise ValueError("patterns must contain only +1 and -1 entries")
    N = P.shape[1]
    C = P.T @ P / N
    # P.T @ P is symmetric up to summation order; force it bitwise
    return np.triu(C) + np.triu(C, 1).T


@dataclass(frozen=True)
class MemoryParams:
    patterns: np.ndarray  # (p, N)
    C: np.ndarray
    epsilon: float = 0.8


class MemoryNetwork(NetworkModel):
    """Phase oscillators with Hebbian first-harmonic and uniform
    second-harmonic coupling."""

    name = "memory"

    def __init__(self, params):
        self.params = params
        self.C = np.asarray(params.C, dtype=float)
        self.N = self.C.shape[0]
        self.n = 1
        self.eps = float(params.epsilon)

    def drift(self, x):
        d = x[None, :] - x[:, None]  # d_ij = x_j - x_i
        return (self.C * np.sin(d)).sum(1) + (self.eps / self.N) * np.sin(2 * d).sum(1)

    def jacobian(self, x):
        d = x[None, :] - x[:, None]
        K = self.C * np.cos(d) + (2 * self.eps / self.N) * np.cos(2 * d)
        K[np.diag_indices(self.N)] -= K.sum(1)
        return K


def memory_model(params):
    return MemoryNetwork(params)


# --------------------------------------------------------------------------
# Text serialization

def _g(v):
    return format(float(v), ".17g")


def dump_network(model):
    """Serialize a model to the line-oriented network text format.

    Duffing networks list the graph radius, one ``node`` line per node
    (coordinates and self parameters) and one ``edge`` line per coupling.
    Memory networks list epsilon and the stored patterns; the coupling is
    rebuilt with :func:`hebb_weights` on load.
    """
    out = ["# netctl network", f"kind = {model.name}", f"N = {model.N}"]
    if isinstance(model, DuffingNetwork):
        p = model.params
        g = p.graph
        out.append(f"radius = {_g(g.radius)}")
        out.append("# node i x y alpha beta gamma")
        for i in range(g.N):
            x, y = g.coords[i]
            out.append(" ".join(["node", str(i), _g(x), _g(y), _g(p.alpha[i, i]),
                                 _g(p.beta[i, i]), _g(p.gamma[i, i])]))
        out.append("# edge i j alpha beta gamma")
        for i, j in g.edges:
            out.append(" ".join(["edge", str(i), str(j), _g(p.alpha[i, j]),
                                 _g(p.beta[i, j]), _g(p.gamma[i, j])]))
    else:
        out.append(f"epsilon = {_g(model.eps)}")
        for xi in model.params.patterns:
            out.append("pattern " + "".join("+" if v > 0 else "-" for v in xi))
    return "\n".join(out) + "\n"


def load_network(text):
    """Inverse of :func:`dump_network`."""
    head, nodes, edges, pats = {}, [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            head[k] = v
            continue
        tag, *rest = line.split()
        if tag == "node":
            nodes.append([float(v) for v in rest[1:]])
        elif tag == "edge":
            edges.append((int(rest[0]), int(rest[1]), *map(float, rest[2:])))
        elif tag == "pattern":
            pats.append([1.0 if c == "+" else -1.0 for c in rest[0]])
        else:
            raise ValueError(f"line {lineno}: unknown record {tag!r}")
    N = int(head["N"])
    if head["kind"] == "memory":
        P = np.array(pats)
        return memory_model(MemoryParams(P, hebb_weights(P), float(head["epsilon"])))
    nodes = np.array(nodes)
    E = np.array([e[:2] for e in edges], dtype=int).reshape(-1, 2)
    graph = Graph(N, E, nodes[:, :2], float(head["radius"]))
    tables = [np.diag(nodes[:, 2 + k]) for k in range(3)]
    for i, j, *vals in edges:
        for k in range(3):
            tables[k][i, j] = tables[k][j, i] = vals[k]
    return duffing_model(DuffingParams(graph, *tables))
