"""Electrical networks ``(V, E, c)``: Laplacian, energy form, dipoles, resistance.

Vertex functions are numpy vectors in ``G.vertices`` order; mappings from
vertex to value are accepted wherever a function is expected.

Dipoles are grounded at a base vertex ``o``: ``v_x(o) = 0`` and
``Δ v_x = δ_x − δ_o``.  With that normalization ``v_x`` restricted to
``V' = V \\ {o}`` is the ``x``-column of the inverse of the grounded
Laplacian, which is what every solve below uses.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import (
    BadConductance,
    BadParameter,
    DegenerateDipole,
    DimensionMismatch,
    Disconnected,
    ParseError,
    SelfLoop,
    UnknownPoint,
    VerificationFailed,
)
from .rkhs_core import SOLVE_TOL, FiniteKernel, _as_vector, point_label

GM1_TOL = 1e-10


@dataclass(frozen=True)
class WeightedGraph:
    """Finite connected graph with positive symmetric conductances.

    ``edges`` holds one ``(u, v, c)`` triple per undirected edge, in input order.
    """

    vertices: tuple
    edges: tuple
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)
    _adjacency: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vertices = tuple(point_label(v) for v in self.vertices)
        if len(set(vertices)) != len(vertices):
            raise BadParameter("duplicate vertex")
        index = {v: i for i, v in enumerate(vertices)}
        adj = np.zeros((len(vertices), len(vertices)))
        edges = []
        for u, v, c in self.edges:
            u, v, c = point_label(u), point_label(v), float(c)
            if u == v:
                raise SelfLoop(f"self-loop at {u!r}")
            if not (c > 0 and np.isfinite(c)):
                raise BadConductance(f"conductance of {u}-{v} must be positive and finite, got {c}")
            if u not in index or v not in index:
                raise UnknownPoint(f"edge {u}-{v} uses an unknown vertex")
            i, j = index[u], index[v]
            if adj[i, j] != 0:
                raise BadParameter(f"duplicate edge {u}-{v}")
            adj[i, j] = adj[j, i] = c
            edges.append((u, v, c))
        adj.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_adjacency", adj)
        if len(vertices) == 0:
            raise BadParameter("graph has no vertices")
        if not _connected(adj):
            raise Disconnected("graph is not connected")

    @classmethod
    def from_edges(cls, edges: Iterable[Tuple]) -> "WeightedGraph":
        edges = [(point_label(u), point_label(v), c) for u, v, c in edges]
        vertices = list(dict.fromkeys(x for u, v, _ in edges for x in (u, v)))
        return cls(tuple(vertices), tuple(edges))

    def __len__(self):
        return len(self.vertices)

    def index(self, x) -> int:
        try:
            return self._index[point_label(x)]
        except KeyError:
            raise UnknownPoint(f"vertex {point_label(x)!r} not in graph") from None

    @property
    def conductance_matrix(self) -> np.ndarray:
        return self._adjacency

    def conductance(self, x, y) -> float:
        return float(self._adjacency[self.index(x), self.index(y)])

    def neighbors(self, x) -> Dict[str, float]:
        row = self._adjacency[self.index(x)]
        return {self.vertices[j]: float(row[j]) for j in np.flatnonzero(row)}

    def total_conductance(self, x) -> float:
        """``c(x) = Σ_{y∼x} c_xy``."""
        return float(self._adjacency[self.index(x)].sum())

    def laplacian_matrix(self) -> np.ndarray:
        adj = self._adjacency
        return np.diag(adj.sum(axis=1)) - adj

    def grounded_laplacian(self, o) -> np.ndarray:
        """Laplacian with the row and column of ``o`` removed (order of ``V \\ {o}``)."""
        keep = self._others(o)
        return self.laplacian_matrix()[np.ix_(keep, keep)]

    def vector(self, f) -> np.ndarray:
        return _as_vector(f, self.vertices)

    def _others(self, o):
        io = self.index(o)
        return [i for i in range(len(self.vertices)) if i != io]


def _connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(adj[i]):
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return bool(seen.all())


def load_graph(source: str) -> WeightedGraph:
    """Parse the edge-list format: ``u v c`` per line, ``#`` comments.

    Vertices are ordered by first appearance.
    """
    edges = []
    seen = set()
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(lineno, f"expected 'u v c', got {raw!r}")
        u, v, c = parts
        try:
            c = float(c)
        except ValueError:
            raise ParseError(lineno, f"conductance {c!r} is not a number") from None
        if u == v:
            raise SelfLoop(f"line {lineno}: self-loop at {u!r}")
        if not (c > 0 and np.isfinite(c)):
            raise BadConductance(f"line {lineno}: conductance must be positive, got {c}")
        key = frozenset((u, v))
        if key in seen:
            raise ParseError(lineno, f"duplicate edge {u}-{v}")
        seen.add(key)
        edges.append((u, v, c))
    if not edges:
        raise ParseError(0, "no edges")
    return WeightedGraph.from_edges(edges)


def laplacian_apply(G: WeightedGraph, f) -> np.ndarray:
    """``(Δf)(x) = Σ_{y∼x} c_xy (f(x) − f(y))``."""
    f = G.vector(f)
    adj = G.conductance_matrix
    return adj.sum(axis=1) * f - adj @ f


def energy_inner(G: WeightedGraph, h, f) -> float:
    """``<h, f>_E = ½ Σ_x Σ_y c_xy (h(x) − h(y)) (f(x) − f(y))``, once per edge."""
    h = G.vector(h)
    f = G.vector(f)
    total = 0.0
    for u, v, c in G.edges:
        i, j = G.index(u), G.index(v)
        total += c * (h[i] - h[j]) * (f[i] - f[j])
    return float(total)


def _edge_arrays(G: WeightedGraph):
    u = np.array([G.index(a) for a, _, _ in G.edges], dtype=int)
    w = np.array([G.index(b) for _, b, _ in G.edges], dtype=int)
    c = np.array([c for _, _, c in G.edges])
    return u, w, c


def energy_gram(G: WeightedGraph, functions: np.ndarray) -> np.ndarray:
    """Energy inner products between the rows of ``functions``."""
    u, w, c = _edge_arrays(G)
    diff = functions[:, u] - functions[:, w]
    return (diff * c) @ diff.T


def _energy_rounding_bound(G: WeightedGraph, functions: np.ndarray) -> float:
    u, w, c = _edge_arrays(G)
    size = np.abs(functions[:, u]) + np.abs(functions[:, w])
    return float(np.max((size ** 2) @ c)) * 64 * np.finfo(float).eps


@dataclass(frozen=True)
class _GroundedFactor:
    """``L' = U D Uᵀ`` for the grounded Laplacian, built without subtractions.

    Eliminating a vertex of a grounded network leaves a grounded network on
    the remaining vertices (a Kron reduction), so each pivot is the sum of
    the remaining conductances at that vertex plus its conductance to
    ground.  ``mult[j, k] = c_jk / p_k`` for ``j > k`` are the magnitudes of
    the (nonpositive) multipliers.
    """

    pivots: np.ndarray
    mult: np.ndarray

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        pos = np.clip(rhs, 0, None)
        neg = np.clip(-rhs, 0, None)
        if not neg.any():
            return self._solve_nonneg(pos)
        return self._solve_nonneg(pos) - self._solve_nonneg(neg)

    def _solve_nonneg(self, b: np.ndarray) -> np.ndarray:
        m = self.pivots.size
        y = np.array(b, dtype=float)
        for j in range(1, m):
            y[j] += self.mult[j, :j] @ y[:j]
        x = y / (self.pivots if y.ndim == 1 else self.pivots[:, None])
        for k in range(m - 2, -1, -1):
            x[k] += self.mult[k + 1:, k] @ x[k + 1:]
        return x


def _grounded_factor(G: WeightedGraph, o) -> _GroundedFactor:
    keep = G._others(o)
    io = G.index(o)
    C = np.array(G.conductance_matrix[np.ix_(keep, keep)])
    g = np.array(G.conductance_matrix[keep, io])
    m = len(keep)
    pivots = np.empty(m)
    mult = np.zeros((m, m))
    for k in range(m):
        p = C[k, k + 1:].sum() + g[k]
        pivots[k] = p
        col = C[k + 1:, k] / p
        mult[k + 1:, k] = col
        C[k + 1:, k + 1:] += np.outer(col, C[k, k + 1:])
        np.fill_diagonal(C[k + 1:, k + 1:], 0.0)
        g[k + 1:] += col * g[k]
    return _GroundedFactor(pivots, mult)


def _grounded_solve(G: WeightedGraph, o, rhs: np.ndarray) -> np.ndarray:
    """Solve ``L' v = rhs`` on ``V \\ {o}``; entrywise accurate for ``rhs ≥ 0``."""
    L = G.grounded_laplacian(o)
    if L.shape[0] == 0:
        return np.zeros((0,) + np.shape(rhs)[1:])
    sol = _grounded_factor(G, o).solve(rhs)
    resid = np.max(np.abs(L @ sol - rhs))
    scale = np.max(np.abs(L)) * np.max(np.abs(sol)) + np.max(np.abs(rhs))
    if resid > SOLVE_TOL * scale:
        raise VerificationFailed(f"grounded solve residual {resid:.3e} exceeds tolerance")
    return sol


@dataclass(frozen=True)
class DipoleSystem:
    """Dipoles ``v_x`` for every ``x ≠ o``; ``potentials[k]`` is ``v_{others[k]}``
    as a full vertex function (zero at the base)."""

    base: str
    others: tuple
    potentials: np.ndarray = field(repr=False)

    def __getitem__(self, x) -> np.ndarray:
        label = point_label(x)
        if label == self.base:
            return np.zeros(self.potentials.shape[1])
        try:
            return self.potentials[self.others.index(label)]
        except ValueError:
            raise UnknownPoint(f"vertex {label!r} not in dipole system") from None


def dipole_system(G: WeightedGraph, o) -> DipoleSystem:
    io = G.index(o)
    keep = G._others(o)
    inv = _grounded_solve(G, o, np.eye(len(keep)))
    pots = np.zeros((len(keep), len(G)))
    pots[:, keep] = inv.T
    pots[:, io] = 0.0
    pots.setflags(write=False)
    return DipoleSystem(G.vertices[io], tuple(G.vertices[i] for i in keep), pots)


def dipole(G: WeightedGraph, o, x) -> np.ndarray:
    """The dipole ``v_x``: ``Δ v_x = δ_x − δ_o`` with ``v_x(o) = 0``.

    It reproduces differences of values, ``f(x) − f(o) = <v_x, f>_E``.
    """
    io, ix = G.index(o), G.index(x)
    if io == ix:
        raise DegenerateDipole(f"dipole needs x != o (both {G.vertices[io]!r})")
    keep = G._others(o)
    rhs = np.zeros(len(keep))
    rhs[keep.index(ix)] = 1.0
    v = np.zeros(len(G))
    v[keep] = _grounded_solve(G, o, rhs)
    return v


def network_kernel(G: WeightedGraph, o) -> FiniteKernel:
    """``k(x, y) = <v_x, v_y>_E`` on ``V \\ {o}``; equals ``v_x(y)``."""
    system = dipole_system(G, o)
    energy = energy_gram(G, system.potentials)
    values = system.potentials[:, [G.index(y) for y in system.others]]
    if values.size:
        tol = SOLVE_TOL * max(1.0, float(np.max(np.abs(values))))
        tol += _energy_rounding_bound(G, system.potentials)
    if values.size and np.max(np.abs(energy - values)) > tol:
        raise VerificationFailed("energy Gram of dipoles differs from dipole values")
    gram = (values + values.T) / 2
    return FiniteKernel(system.others, gram)


@dataclass(frozen=True)
class DeltaExpansion:
    """``δ_x`` written as a finite combination of dipoles, plus ``c(x)``."""

    coefficients: Dict[str, float]
    c_of_x: float

    def function(self, system: DipoleSystem) -> np.ndarray:
        out = np.zeros(system.potentials.shape[1])
        for y, a in self.coefficients.items():
            out += a * system[y]
        return out


def delta_expansion(G: WeightedGraph, o, x) -> DeltaExpansion:
    """``δ_x = c(x) v_x − Σ_{y∼x} c_xy v_y`` with ``v_o ≡ 0`` dropped.

    For ``x = o`` the returned combination is ``−Σ_{y∼o} c_yo v_y``, which
    equals ``δ_o − 1``: the same element of the energy space, since energy
    only sees functions modulo constants.
    """
    base = G.vertices[G.index(o)]
    label = G.vertices[G.index(x)]
    coeffs: Dict[str, float] = {}
    if label != base:
        coeffs[label] = G.total_conductance(label)
        for y, c in G.neighbors(label).items():
            if y != base:
                coeffs[y] = -c
    else:
        for y, c in G.neighbors(base).items():
            coeffs[y] = -c
    return DeltaExpansion(coeffs, G.total_conductance(label))


@dataclass(frozen=True)
class ResistanceMatrix:
    vertices: tuple
    values: np.ndarray = field(repr=False)

    def __call__(self, x, y) -> float:
        i = self.vertices.index(point_label(x))
        j = self.vertices.index(point_label(y))
        return float(self.values[i, j])


def resistance_from_kernel(labels: Sequence[str], gram: np.ndarray) -> ResistanceMatrix:
    """``R(x, y) = K(x, x) + K(y, y) − 2 K(x, y)``."""
    d = np.diag(gram)
    R = d[:, None] + d[None, :] - 2 * gram
    R = (R + R.T) / 2
    np.fill_diagonal(R, 0.0)
    R.setflags(write=False)
    return ResistanceMatrix(tuple(labels), R)


def resistance_metric(G: WeightedGraph, o) -> ResistanceMatrix:
    """``R(x, y) = ‖v_x − v_y‖²_E`` over all vertices, with ``v_o ≡ 0``.

    The energy form is compared with ``K(x,x) + K(y,y) − 2K(x,y)`` built
    from dipole values (agreement up to solver and rounding error), and the
    returned metric must reconstruct the kernel through
    ``k(x, y) = (R(o, x) + R(o, y) − R(x, y)) / 2``.
    """
    system = dipole_system(G, o)
    io = G.index(o)
    n = len(G)
    pots = np.zeros((n, n))
    pots[G._others(o)] = system.potentials
    # pots[x, y] = v_x(y) = k(x, y); row and column o vanish
    values = (pots + pots.T) / 2
    from_values = resistance_from_kernel(G.vertices, values)

    energy = energy_gram(G, pots)
    d = np.diag(energy)
    from_energy = d[:, None] + d[None, :] - 2 * energy
    scale = max(1.0, float(np.max(np.abs(values))))
    tol = SOLVE_TOL * scale + 4 * _energy_rounding_bound(G, pots)
    if np.max(np.abs(from_energy - from_values.values)) > tol:
        raise VerificationFailed("energy and kernel-value resistances disagree")

    R = from_values.values
    recon = (R[io][:, None] + R[io][None, :] - R) / 2
    if np.max(np.abs(recon - values)) > GM1_TOL * scale:
        raise VerificationFailed("resistance does not reconstruct the network kernel")
    return from_values


def ladder_graph(R: float, n: int, tail: bool = False) -> WeightedGraph:
    """Ladder on ``0, 1, ..., n`` with ``c_{i,i+1} = R^{-i}``.

    With ``tail=True`` an extra vertex ``"inf"`` is attached to ``n`` with the
    conductance ``(1 − R) R^{-n}`` of the discarded tail ``n → ∞``; grounding
    at ``"inf"`` then reproduces the infinite ladder's kernel exactly.
    """
    _check_ratio(R)
    if n < 1:
        raise BadParameter("ladder needs n >= 1")
    edges = [(str(i), str(i + 1), R ** (-i)) for i in range(n)]
    if tail:
        edges.append((str(n), "inf", (1 - R) * R ** (-n)))
    return WeightedGraph.from_edges(edges)


def _check_ratio(R):
    if not (0 < R < 1):
        raise BadParameter(f"ladder ratio must lie in (0, 1), got {R}")


def ladder_kernel(R: float, n: int) -> FiniteKernel:
    """Reproducing kernel ``R^{i∨j} / (1 − R)`` of the ladder on ``{0, ..., n}``.

    This is the kernel of the energy space of functions vanishing at
    infinity: ``k(i, j)`` is the resistance from ``max(i, j)`` to infinity.
    """
    _check_ratio(R)
    if n < 1:
        raise BadParameter("ladder needs n >= 1")
    idx = np.arange(n + 1)
    gram = R ** np.maximum.outer(idx, idx) / (1 - R)
    return FiniteKernel(tuple(str(i) for i in idx), gram)


def ladder_kernel_value(R: float, i: int, j: int) -> float:
    _check_ratio(R)
    return R ** max(int(i), int(j)) / (1 - R)


def ladder_laplacian_apply(R: float, f) -> np.ndarray:
    """Ladder Laplacian on ``{0, ..., n}`` for ``f`` given as a length ``n + 1`` vector.

    Interior: ``R^{-i+1}(f(i) − f(i−1)) + R^{-i}(f(i) − f(i+1))``; the end
    points keep only their existing neighbour term.
    """
    _check_ratio(R)
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise BadParameter("f must be a vector on at least two ladder vertices")
    i = np.arange(f.size)
    out = np.zeros_like(f)
    out[1:] += R ** (-i[1:] + 1) * (f[1:] - f[:-1])
    out[:-1] += R ** (-i[:-1]) * (f[:-1] - f[1:])
    return out
