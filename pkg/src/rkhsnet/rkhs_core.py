"""Gram-matrix machinery for positive definite kernels on finite point sets.

A kernel ``k`` on a set ``V`` is represented, on any finite ``F ⊂ V``, by
its Gram matrix ``K_F``.  Everything here is a statement about those
matrices: positivity, the RKHS inner product of finite combinations of
kernel sections, and the discrete-mass test ``δ_x ∈ H`` which is decided
by watching ``(K_F^{-1} δ_x)(x)`` along an increasing family of ``F``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Iterator, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    BadParameter,
    DimensionMismatch,
    DuplicatePoint,
    NonFiniteKernelValue,
    NotPositive,
    SingularGram,
    UnknownPoint,
    VerificationFailed,
)

PSD_TOL = 1e-9
PINV_RTOL = 1e-12
SOLVE_TOL = 1e-10
MONO_TOL = 1e-9

CAUCHY_RTOL = 1e-8
CAUCHY_LEVELS = 3
DIVERGE_CEILING = 1e12
DIVERGE_FACTOR = 1.01
DIVERGE_LEVELS = 10
DIVERGE_AFTER = 20

RANGE_RTOL = 1e-8

CONVERGED = "converged"
DIVERGED = "diverged"
UNDECIDED = "undecided"


def point_label(p) -> str:
    """Stable string identifier for a point (number, string or coordinate tuple)."""
    if isinstance(p, str):
        return p
    if isinstance(p, (bool, np.bool_)):
        raise BadParameter(f"not a point: {p!r}")
    if isinstance(p, (int, np.integer)):
        return str(int(p))
    if isinstance(p, (float, np.floating)):
        return repr(float(p))
    if isinstance(p, (tuple, list, np.ndarray)):
        return "(" + ", ".join(point_label(c) for c in p) + ")"
    return str(p)


@dataclass(frozen=True)
class FiniteKernel:
    """An ordered list of point identifiers with the symmetric Gram matrix over it.

    Positive semidefiniteness is *not* enforced on construction, so that
    indefinite matrices can still be inspected with :func:`psd_check`.
    """

    points: tuple
    gram: np.ndarray = field(repr=False)

    def __post_init__(self):
        points = tuple(point_label(p) for p in self.points)
        gram = np.array(self.gram, dtype=float)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
            raise DimensionMismatch(f"gram must be square, got shape {gram.shape}")
        if gram.shape[0] != len(points):
            raise DimensionMismatch(
                f"gram has side {gram.shape[0]} but there are {len(points)} points")
        if len(set(points)) != len(points):
            raise DuplicatePoint(f"duplicate point in {points}")
        if not np.all(np.isfinite(gram)):
            raise NonFiniteKernelValue("gram contains non-finite entries")
        if not np.array_equal(gram, gram.T):
            raise BadParameter("gram must be exactly symmetric as stored")
        gram.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "gram", gram)

    def __len__(self):
        return len(self.points)

    def index(self, x) -> int:
        label = point_label(x)
        try:
            return self.points.index(label)
        except ValueError:
            raise UnknownPoint(f"point {label!r} not in kernel") from None

    def submatrix(self, subset: Iterable) -> "FiniteKernel":
        idx = [self.index(p) for p in subset]
        return FiniteKernel(tuple(self.points[i] for i in idx),
                            self.gram[np.ix_(idx, idx)])

    def coefficients(self, values) -> np.ndarray:
        """Coerce a mapping or sequence of coefficients to a vector in point order."""
        return _as_vector(values, self.points)


def _as_vector(values, labels: Sequence[str]) -> np.ndarray:
    if isinstance(values, dict):
        keyed = {point_label(k): v for k, v in values.items()}
        missing = [p for p in labels if p not in keyed]
        if missing or len(keyed) != len(labels):
            raise DimensionMismatch(f"coefficients do not cover exactly the points; missing {missing}")
        return np.array([keyed[p] for p in labels], dtype=float)
    vec = np.asarray(values, dtype=float)
    if vec.shape != (len(labels),):
        raise DimensionMismatch(f"expected {len(labels)} coefficients, got shape {vec.shape}")
    return vec


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2


def gram_assemble(kernel: Callable, points: Sequence) -> FiniteKernel:
    """Evaluate ``kernel`` on all pairs of ``points`` and store the symmetrized Gram."""
    points = list(points)
    labels = [point_label(p) for p in points]
    if len(set(labels)) != len(labels):
        seen = set()
        dup = next(l for l in labels if l in seen or seen.add(l))
        raise DuplicatePoint(f"duplicate point {dup!r}")
    n = len(points)
    gram = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            v = float(kernel(points[i], points[j]))
            if not math.isfinite(v):
                raise NonFiniteKernelValue(
                    f"k({labels[i]}, {labels[j]}) = {v}")
            gram[i, j] = v
    return FiniteKernel(tuple(labels), _symmetrize(gram))


@dataclass(frozen=True)
class PSDReport:
    min_eigenvalue: float
    max_eigenvalue: float
    is_psd: bool


def psd_check(K: FiniteKernel, tol: float = PSD_TOL) -> PSDReport:
    if len(K) == 0:
        return PSDReport(0.0, 0.0, True)
    w = np.linalg.eigvalsh(K.gram)
    lo, hi = float(w[0]), float(w[-1])
    return PSDReport(lo, hi, lo >= -tol * max(1.0, hi))


def rkhs_inner(K: FiniteKernel, a, b) -> float:
    """``<Σ a_x k_x, Σ b_y k_y>_H = Σ Σ a_x b_y k(x, y)``."""
    a = K.coefficients(a)
    b = K.coefficients(b)
    return float(a @ K.gram @ b)


def pseudo_inverse(gram: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    """Eigen-truncated pseudo-inverse of a symmetric matrix.

    Eigenvalues below ``rtol * λ_max`` (including all negative ones) are
    treated as zero.
    """
    gram = np.asarray(gram, dtype=float)
    if gram.size == 0:
        return np.zeros_like(gram)
    w, U = np.linalg.eigh(gram)
    cutoff = rtol * max(float(w[-1]), 0.0)
    keep = w > cutoff
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    return _symmetrize((U * inv_w) @ U.T)


def _one_hot(n: int, i: int) -> np.ndarray:
    e = np.zeros(n)
    e[i] = 1.0
    return e


def projection_coeffs(K: FiniteKernel, x) -> np.ndarray:
    """Coefficients ``ζ = K⁺ δ_x`` of the projection ``P_F δ_x = Σ ζ(y) k_y``."""
    i = K.index(x)
    return pseudo_inverse(K.gram) @ _one_hot(len(K), i)


def membership_value(K: FiniteKernel, x) -> float:
    """``(K⁺ δ_x)(x) = ‖P_F δ_x‖²_H`` for the span ``F`` of the kernel's points."""
    i = K.index(x)
    return float(pseudo_inverse(K.gram)[i, i])


def _level_stats(K: FiniteKernel, x):
    """Membership value plus whether ``δ_x|_F`` lies in the range of ``K_F``.

    If it does not, some ``ξ ∈ ker K_F`` has ``ξ(x) ≠ 0`` and no constant
    can bound ``|ξ(x)|² ≤ C ξᵀ K_F ξ``, so ``δ_x ∉ H``.
    """
    i = K.index(x)
    n = len(K)
    w, U = np.linalg.eigh(K.gram)
    hi = float(w[-1])
    if w[0] < -PSD_TOL * max(1.0, hi):
        raise NotPositive(f"Gram on {n} points has eigenvalue {w[0]:.3e}")
    keep = w > PINV_RTOL * max(hi, 0.0)
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    zeta = (U * inv_w) @ U[i]
    residual = np.max(np.abs(K.gram @ zeta - _one_hot(n, i)))
    scale = max(1.0, np.max(np.abs(K.gram)) * np.sum(np.abs(zeta)))
    return float(zeta[i]), bool(residual <= RANGE_RTOL * scale)


class Exhaustion:
    """Increasing sequence of finite point subsets.

    Either an explicit list of ``subsets`` (each an ordered point sequence)
    or a ``generator`` mapping a level ``n`` to the ``n``-th subset.  A
    generator whose next subset does not strictly enlarge the previous one
    ends the exhaustion.  ``complete`` marks a finite exhaustion whose last
    subset is the whole space, so the last value is the exact supremum.
    """

    def __init__(self, subsets: Optional[Sequence[Sequence]] = None,
                 generator: Optional[Callable[[int], Sequence]] = None,
                 complete: bool = False):
        if (subsets is None) == (generator is None):
            raise BadParameter("give exactly one of subsets or generator")
        if generator is not None and complete:
            raise BadParameter("a generated exhaustion cannot be complete")
        self.complete = complete
        self._generator = generator
        self._subsets = None
        if subsets is not None:
            subsets = [tuple(s) for s in subsets]
            if not subsets:
                raise BadParameter("empty exhaustion")
            for prev, nxt in zip(subsets, subsets[1:]):
                if not _strictly_grows(prev, nxt):
                    raise BadParameter("subsets must be strictly increasing under inclusion")
            self._subsets = subsets

    @classmethod
    def prefix(cls, points: Sequence, sizes: Optional[Sequence[int]] = None,
               complete: bool = True) -> "Exhaustion":
        """Prefixes of a finite point list, sizes 2, 4, 8, ... capped at the full list."""
        points = list(points)
        if sizes is None:
            sizes, s = [], 2
            while s < len(points):
                sizes.append(s)
                s *= 2
            sizes.append(len(points))
        sizes = [min(int(s), len(points)) for s in sizes]
        if any(s < 1 for s in sizes):
            raise BadParameter("prefix sizes must be positive")
        subsets = [points[:s] for s in dict.fromkeys(sizes)]
        full = complete and sizes[-1] == len(points)
        return cls(subsets=subsets, complete=full)

    @classmethod
    def dyadic(cls, point_at: Callable[[int], object], start: int = 1) -> "Exhaustion":
        """Prefixes ``point_at(0), ..., point_at(2^(n+start) - 1)`` of an infinite sequence."""
        def gen(n):
            return [point_at(i) for i in range(2 ** (n + start))]
        return cls(generator=gen)

    def levels(self, max_levels: int) -> Iterator[tuple]:
        if self._subsets is not None:
            yield from self._subsets[:max_levels]
            return
        prev = None
        for n in range(max_levels):
            cur = tuple(self._generator(n))
            if prev is not None and not _strictly_grows(prev, cur):
                return
            yield cur
            prev = cur

    def is_last(self, level: int) -> bool:
        return self._subsets is not None and level == len(self._subsets) - 1


def _strictly_grows(prev, nxt) -> bool:
    a = {point_label(p) for p in prev}
    b = {point_label(p) for p in nxt}
    return a < b


@dataclass(frozen=True)
class MembershipDiagnostic:
    target: str
    values: tuple
    sizes: tuple
    verdict: str
    limit: Optional[float] = None
    reason: str = ""


def _cauchy_fired(values) -> bool:
    if len(values) <= CAUCHY_LEVELS:
        return False
    tail = values[-(CAUCHY_LEVELS + 1):]
    return all(abs(b - a) <= CAUCHY_RTOL * max(1.0, b) for a, b in zip(tail, tail[1:]))


def _growth_fired(values) -> bool:
    n = len(values) - 1
    if values[-1] > DIVERGE_CEILING:
        return True
    if n - DIVERGE_LEVELS < DIVERGE_AFTER:
        return False
    tail = values[-(DIVERGE_LEVELS + 1):]
    return all(a > 0 and b >= DIVERGE_FACTOR * a for a, b in zip(tail, tail[1:]))


def membership_diagnostic(kernel: Callable, exhaustion: Exhaustion, x,
                          max_levels: int = 12, threads: int = 1) -> MembershipDiagnostic:
    """Track ``(K_F⁺ δ_x)(x)`` along an exhaustion and decide whether ``δ_x ∈ H``.

    Verdicts:

    * converged: three consecutive relative increments ``≤ 1e-8``, or a
      complete finite exhaustion ran to its last subset;
    * diverged: ``δ_x|_F`` left the range of ``K_F`` at some level, the
      value passed ``1e12``, or it grew by ``≥ 1 %`` for ten consecutive
      levels beyond level 20;
    * undecided otherwise.

    ``threads > 1`` evaluates that many levels concurrently; results and
    verdict are identical to the sequential run.
    """
    if max_levels < 1:
        raise BadParameter("max_levels must be positive")
    target = point_label(x)
    subsets = exhaustion.levels(max_levels)
    values, sizes = [], []

    def evaluate(subset):
        labels = [point_label(p) for p in subset]
        if target not in labels:
            raise UnknownPoint(f"target {target!r} missing from exhaustion level of size {len(labels)}")
        return _level_stats(gram_assemble(kernel, subset), target)

    def verdict(reason, v, limit=None):
        return MembershipDiagnostic(target, tuple(values), tuple(sizes), v, limit, reason)

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        level = 0
        while True:
            batch = [s for _, s in zip(range(max(1, threads)), subsets)]
            if not batch:
                break
            if pool is None:
                stats = [evaluate(s) for s in batch]
            else:
                stats = list(pool.map(evaluate, batch))
            for subset, (value, in_range) in zip(batch, stats):
                values.append(value)
                sizes.append(len(subset))
                if not in_range:
                    return verdict("delta restricted to F is not in the range of K_F", DIVERGED)
                if len(values) > 1 and values[-1] < values[-2] - MONO_TOL:
                    raise VerificationFailed(
                        f"membership values decreased at level {level}: {values[-2]} -> {values[-1]}")
                if _growth_fired(values):
                    return verdict("unbounded growth", DIVERGED)
                if exhaustion.complete and exhaustion.is_last(level):
                    return verdict("complete finite exhaustion", CONVERGED, values[-1])
                if _cauchy_fired(values):
                    return verdict("Cauchy criterion", CONVERGED, values[-1])
                level += 1
    finally:
        if pool is not None:
            pool.shutdown()
    if not values:
        raise BadParameter("exhaustion produced no levels")
    return verdict("no decision within the available levels", UNDECIDED)


def _cholesky(gram: np.ndarray):
    n = gram.shape[0]
    if n == 0:
        raise SingularGram("empty Gram")
    w = np.linalg.eigvalsh(gram)
    if w[0] <= PINV_RTOL * max(float(w[-1]), 0.0):
        raise SingularGram(f"Gram is numerically singular (λ_min={w[0]:.3e}, λ_max={w[-1]:.3e})")
    try:
        return scipy.linalg.cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularGram(str(exc)) from None


def finite_laplacian(K: FiniteKernel) -> np.ndarray:
    """The operator ``Δ`` with ``Δ k_x = δ_x`` on the span of the points, i.e. ``K⁻¹``."""
    c = _cholesky(K.gram)
    return _symmetrize(scipy.linalg.cho_solve(c, np.eye(len(K))))


def max_diagonal_perturbation(K: FiniteKernel, x) -> float:
    """Largest ``ε`` with ``K − ε e_x e_xᵀ`` still positive semidefinite.

    By the Schur complement this is ``1 / (K⁻¹)_xx``.
    """
    i = K.index(x)
    c = _cholesky(K.gram)
    col = scipy.linalg.cho_solve(c, _one_hot(len(K), i))
    return 1.0 / float(col[i])


def restriction_min_norm(K_full: FiniteKernel, subset: Sequence, phi) -> float:
    """Squared norm of ``φ`` in the restricted space ``H_V``.

    Computed as ``φᵀ K_V⁻¹ φ`` on the principal submatrix and checked
    against the constrained problem ``min ‖f‖²_H`` over ``f`` in the span of
    all kernel sections with ``f|_V = φ`` (solved through its KKT system).
    """
    subset = list(subset)
    idx = [K_full.index(p) for p in subset]
    if len(set(idx)) != len(idx):
        raise DuplicatePoint("subset lists a point twice")
    labels = [K_full.points[i] for i in idx]
    phi = _as_vector(phi, labels)
    K_sub = K_full.gram[np.ix_(idx, idx)]
    value = float(phi @ scipy.linalg.cho_solve(_cholesky(K_sub), phi))

    _cholesky(K_full.gram)
    n, m = len(K_full), len(idx)
    A = K_full.gram[idx, :]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = K_full.gram
    kkt[:n, n:] = A.T
    kkt[n:, :n] = A
    rhs = np.concatenate([np.zeros(n), phi])
    sol = scipy.linalg.solve(kkt, rhs, assume_a="sym")
    c = sol[:n]
    constrained = float(c @ K_full.gram @ c)
    if abs(constrained - value) > 1e-9 * max(abs(value), 1e-300) and abs(constrained - value) > 1e-15:
        raise VerificationFailed(
            f"submatrix value {value!r} and constrained minimum {constrained!r} disagree")
    return value
