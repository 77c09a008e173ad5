"""Classical continuous kernels and their restrictions to finite point sets.

Kernels: Brownian motion ``s ∧ t`` on ``(0, 10⁶]``, the Brownian bridge
``s ∧ t − st`` on ``(0, 1)``, the Dirichlet Green function of the unit
ball in dimension ``ν ≥ 2`` and the free-space Newton potential.

The Green function and the Newton potential are infinite on the diagonal.
Restricting them to points therefore needs a self-energy: each point is
smeared uniformly over a sphere of radius ``ρ`` (smaller than half the
point separation and the distance to the boundary).  By the mean value
property the off-diagonal entries are unchanged and the diagonal becomes
the finite double average, so the Gram matrix is the Gram of the smeared
measures and is positive semidefinite whenever the kernel is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.special

from .errors import (
    BadParameter,
    NotPositive,
    OutOfDomain,
    SingularPair,
    TooClose,
    VerificationFailed,
)
from .network import ResistanceMatrix, resistance_from_kernel
from .rkhs_core import FiniteKernel, finite_laplacian, gram_assemble, psd_check

SEP_TOL = 1e-8
BM_MAX = 1e6
BOUNDARY_INSET = 1e-6

BROWNIAN_MOTION = "BrownianMotion"
BROWNIAN_BRIDGE = "BrownianBridge"
DISK_GREEN = "DiskGreen"
NEWTON = "NewtonPotential"


@dataclass(frozen=True)
class ContinuousKernel:
    kind: str
    dimension: int = 1

    def __post_init__(self):
        if self.kind in (BROWNIAN_MOTION, BROWNIAN_BRIDGE):
            if self.dimension != 1:
                raise BadParameter(f"{self.kind} lives in dimension 1")
        elif self.kind in (DISK_GREEN, NEWTON):
            if int(self.dimension) != self.dimension or self.dimension < 2:
                raise BadParameter(f"{self.kind} needs an integer dimension >= 2")
        else:
            raise BadParameter(f"unknown kernel kind {self.kind!r}")

    @property
    def singular(self) -> bool:
        return self.kind in (DISK_GREEN, NEWTON)

    def __call__(self, x, y) -> float:
        return kernel_eval(self, x, y)


def brownian_motion() -> ContinuousKernel:
    return ContinuousKernel(BROWNIAN_MOTION)


def brownian_bridge() -> ContinuousKernel:
    return ContinuousKernel(BROWNIAN_BRIDGE)


def disk_green(nu: int = 2) -> ContinuousKernel:
    return ContinuousKernel(DISK_GREEN, nu)


def newton_potential(nu: int = 2) -> ContinuousKernel:
    return ContinuousKernel(NEWTON, nu)


def sphere_area(nu: int) -> float:
    """Surface area of the unit sphere ``S^{ν−1}`` in ``ℝ^ν``."""
    return 2 * math.pi ** (nu / 2) / math.gamma(nu / 2)


def newton_constant(nu: int) -> float:
    """Normalization making ``−∇² G = δ``: ``1/2π`` for ν = 2, ``1/((ν−2)|S^{ν−1}|)`` above."""
    if nu == 2:
        return 1 / (2 * math.pi)
    return 1 / ((nu - 2) * sphere_area(nu))


def _scalar(x, lo, hi, kind, closed_hi=False):
    try:
        x = float(x)
    except (TypeError, ValueError):
        raise OutOfDomain(f"{kind} expects real points, got {x!r}") from None
    if not (lo < x < hi or (closed_hi and x == hi)):
        raise OutOfDomain(f"{x} outside the domain of {kind}")
    return x


def _vector(x, nu, kind, ball=True):
    v = np.asarray(x, dtype=float)
    if v.shape != (nu,):
        raise OutOfDomain(f"{kind} in dimension {nu} expects points of length {nu}, got {x!r}")
    if not np.all(np.isfinite(v)):
        raise OutOfDomain(f"non-finite point {x!r}")
    if ball and v @ v > 1.0:
        raise OutOfDomain(f"{x!r} lies outside the closed unit ball")
    return v


def _disk_green_many(nu: int, x: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Dirichlet Green function ``K(x, ·)`` of the unit ball at the rows of ``Y``.

    Uses ``(|x| |x* − y|)² = |x − y|² + (1 − |x|²)(1 − |y|²)``, which covers
    ``x = 0`` (where ``|x| |x* − y| = 1``) without special casing.
    """
    r2 = np.sum((Y - x) ** 2, axis=-1)
    damp = (1 - x @ x) * (1 - np.sum(Y * Y, axis=-1))
    if nu == 2:
        return np.log1p(damp / r2) / (4 * math.pi)
    q2 = r2 + damp
    return newton_constant(nu) * (r2 ** ((2 - nu) / 2) - q2 ** ((2 - nu) / 2))


def _newton_many(nu: int, x: np.ndarray, Y: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.sum((Y - x) ** 2, axis=-1))
    if nu == 2:
        return -np.log(r) / (2 * math.pi)
    return newton_constant(nu) * r ** (2.0 - nu)


def kernel_eval(K: ContinuousKernel, x, y) -> float:
    if K.kind == BROWNIAN_MOTION:
        s = _scalar(x, 0.0, BM_MAX, K.kind, closed_hi=True)
        t = _scalar(y, 0.0, BM_MAX, K.kind, closed_hi=True)
        return min(s, t)
    if K.kind == BROWNIAN_BRIDGE:
        s = _scalar(x, 0.0, 1.0, K.kind)
        t = _scalar(y, 0.0, 1.0, K.kind)
        return min(s, t) - s * t
    nu = K.dimension
    ball = K.kind == DISK_GREEN
    a = _vector(x, nu, K.kind, ball)
    b = _vector(y, nu, K.kind, ball)
    if np.array_equal(a, b):
        raise SingularPair(f"{K.kind} is singular at coincident points {x!r}")
    if ball:
        return float(_disk_green_many(nu, a, b[None, :])[0])
    return float(_newton_many(nu, a, b[None, :])[0])


def self_energy(K: ContinuousKernel, x, radius: float) -> float:
    """Double average of a singular kernel over the sphere of ``radius`` about ``x``."""
    nu = K.dimension
    if K.kind == DISK_GREEN:
        a = _vector(x, nu, K.kind)
        inner = 1 - a @ a
        if not 0 < radius < inner:
            raise BadParameter(f"radius {radius} must be positive and below 1 - |x|")
        if nu == 2:
            return (math.log(inner) - math.log(radius)) / (2 * math.pi)
        return newton_constant(nu) * (radius ** (2 - nu) - inner ** (2 - nu))
    if K.kind == NEWTON:
        if radius <= 0:
            raise BadParameter("radius must be positive")
        if nu == 2:
            return -math.log(radius) / (2 * math.pi)
        return newton_constant(nu) * radius ** (2 - nu)
    raise BadParameter(f"{K.kind} is finite on the diagonal")


def _smearing_radius(K: ContinuousKernel, pts: np.ndarray, radius: Optional[float]) -> float:
    n = len(pts)
    if n > 1:
        d = np.sqrt(np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1))
        sep = float(np.min(d[np.triu_indices(n, 1)]))
    else:
        sep = math.inf
    if sep < SEP_TOL:
        raise TooClose(f"points closer than {SEP_TOL} (separation {sep:.3e})")
    bound = sep / 2
    if K.kind == DISK_GREEN:
        bound = min(bound, float(np.min(1 - np.sqrt(np.sum(pts ** 2, axis=1)))))
        if bound <= 0:
            raise OutOfDomain("restriction points must lie in the open unit ball")
    if radius is None:
        return bound / 2
    if not 0 < radius <= bound:
        raise BadParameter(f"radius {radius} must lie in (0, {bound:.6g}]")
    return float(radius)


def point_kernel(K: ContinuousKernel, points: Sequence, radius: Optional[float] = None) -> Callable:
    """Two-argument kernel usable on any subset of ``points``.

    Singular kernels get the :func:`self_energy` on the diagonal with one
    smearing radius fixed from the whole point set (default: half the
    largest admissible radius), so nested subsets see the same kernel.
    Points are then passed as coordinate tuples.
    """
    if not K.singular:
        for p in points:
            kernel_eval(K, p, p)
        return K.__call__
    pts = np.array([_vector(p, K.dimension, K.kind, K.kind == DISK_GREEN) for p in points])
    rho = _smearing_radius(K, pts, radius)

    def kern(a, b):
        if tuple(a) == tuple(b):
            return self_energy(K, a, rho)
        return kernel_eval(K, a, b)
    return kern


def as_points(K: ContinuousKernel, points: Sequence) -> list:
    """Points in the form :func:`point_kernel` and :func:`restrict` evaluate them."""
    if K.singular:
        return [tuple(float(c) for c in p) for p in points]
    return [float(p) for p in points]


def restrict(K: ContinuousKernel, points: Sequence, radius: Optional[float] = None) -> FiniteKernel:
    """Gram matrix of ``K`` on ``points``; must be positive semidefinite.

    For singular kernels the diagonal is the :func:`self_energy` at
    ``radius`` (default: half the largest admissible radius).
    """
    points = list(points)
    gram = gram_assemble(point_kernel(K, points, radius), as_points(K, points))
    report = psd_check(gram)
    if not report.is_psd:
        raise NotPositive(
            f"restricted {K.kind} Gram has eigenvalue {report.min_eigenvalue:.3e}")
    return gram


@dataclass(frozen=True)
class BMStructure:
    """Network read off a Brownian-motion restriction: ``inverse`` is tridiagonal."""

    inverse: np.ndarray
    conductances: np.ndarray


def bm_restriction_structure(points: Sequence[float]) -> BMStructure:
    x = np.asarray(points, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise BadParameter("need a non-empty list of points")
    if x[0] <= 0 or np.any(np.diff(x) <= 0):
        raise BadParameter("points must be positive and strictly increasing")
    inv = finite_laplacian(restrict(brownian_motion(), list(x)))
    far = np.triu(np.abs(inv), 2)
    if far.size and np.max(far) > 1e-9 * max(1.0, float(np.max(np.abs(inv)))):
        raise VerificationFailed("inverse of the Brownian-motion Gram is not tridiagonal")
    return BMStructure(inv, -np.diag(inv, 1).copy())


def restriction_resistance(K: ContinuousKernel, points: Sequence,
                           radius: Optional[float] = None) -> ResistanceMatrix:
    """``R(x, y) = K(x,x) + K(y,y) − 2K(x,y)`` on the restriction.

    For Brownian motion this must equal ``|x − y|`` and for the bridge
    ``|x − y| (1 − |x − y|)``.
    """
    gram = restrict(K, points, radius)
    R = resistance_from_kernel(gram.points, gram.gram)
    if K.kind in (BROWNIAN_MOTION, BROWNIAN_BRIDGE):
        x = np.asarray(points, dtype=float)
        d = np.abs(x[:, None] - x[None, :])
        closed = d if K.kind == BROWNIAN_MOTION else d * (1 - d)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(x))))
        if np.max(np.abs(R.values - closed)) > tol:
            raise VerificationFailed(f"{K.kind} resistance departs from its closed form")
    return R


def eigen_expansion_partial(s: float, t: float, N: int) -> float:
    """``2 Σ_{n ≤ N} sin(nπs) sin(nπt) / (nπ)²``, converging to ``s ∧ t − st``."""
    if not (0 < s < 1 and 0 < t < 1):
        raise BadParameter("s and t must lie in (0, 1)")
    if int(N) != N or N < 1:
        raise BadParameter("N must be a positive integer")
    n = np.arange(int(N), 0, -1, dtype=float)
    terms = np.sin(n * math.pi * s) * np.sin(n * math.pi * t) / (n * math.pi) ** 2
    return float(2 * np.sum(terms))


def _derivative(f: Callable, h: float = 1e-3) -> Callable:
    def df(t):
        return (f(t - 2 * h) - 8 * f(t - h) + 8 * f(t + h) - f(t + 2 * h)) / (12 * h)
    return df


def bridge_second_derivative_check(s: float, test_fn: Callable, quadrature_n: int = 200,
                                   derivative: Optional[Callable] = None) -> float:
    """``∫₀¹ k_s'(t) φ'(t) dt`` with ``k_s' = (1 − s) 𝟙(0,s) − s 𝟙(s,1)``.

    For ``φ`` vanishing at 0 and 1 this equals ``φ(s)``: the weak form of
    ``−k_s'' = δ_s``.  Each piece is integrated with ``quadrature_n``-point
    Gauss–Legendre, exact for polynomial ``φ`` of degree ``≤ 2·quadrature_n``.
    ``test_fn`` must accept numpy arrays; without ``derivative`` a
    five-point central difference is used.
    """
    if not 0 < s < 1:
        raise OutOfDomain(f"s = {s} outside (0, 1)")
    if quadrature_n < 100:
        raise BadParameter("quadrature_n must be at least 100")
    ends = np.asarray(test_fn(np.array([0.0, 1.0])), dtype=float)
    if np.max(np.abs(ends)) > 1e-12:
        raise BadParameter("test function must vanish at 0 and 1")
    dphi = derivative if derivative is not None else _derivative(test_fn)
    nodes, weights = np.polynomial.legendre.leggauss(int(quadrature_n))

    def piece(a, b):
        t = (b - a) / 2 * nodes + (a + b) / 2
        return (b - a) / 2 * float(weights @ np.asarray(dphi(t), dtype=float))

    return (1 - s) * piece(0.0, s) - s * piece(s, 1.0)


@dataclass(frozen=True)
class PathSample:
    grid: np.ndarray
    paths: np.ndarray = field(repr=False)
    seed: int

    def csv_text(self) -> str:
        rows = [self.grid] + list(self.paths)
        return "".join(",".join("%.17g" % v for v in row) + "\n" for row in rows)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.csv_text())


def standard_normals(seed: int, size: int) -> np.ndarray:
    """Seeded standard normals with a fixed, documented construction.

    Raw 64-bit words of ``PCG64(seed)`` are cut to their top 53 bits ``k``,
    mapped to ``u = (k + ½) 2⁻⁵³ ∈ (0, 1)`` and pushed through the inverse
    normal CDF.  Only the PCG64 bit stream is relied on, not any numpy
    distribution sampler.
    """
    raw = np.random.PCG64(int(seed)).random_raw(int(size))
    u = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53
    return scipy.special.ndtri(u)


def sample_bridge_paths(grid: Sequence[float], n_paths: int, seed: int = 0) -> PathSample:
    """Brownian-bridge paths ``B_bri(t) = (1 − t) B(t / (1 − t))`` on ``grid``.

    ``B`` is built from independent Gaussian increments on the time-changed
    grid ``τ = t / (1 − t)``.  Normals are consumed path by path, grid
    point by grid point, from :func:`standard_normals`.
    """
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise BadParameter("grid must be a non-empty list")
    if t[0] <= 0 or t[-1] >= 1 or np.any(np.diff(t) <= 0):
        raise BadParameter("grid must be strictly increasing inside (0, 1)")
    if int(n_paths) != n_paths or n_paths < 1:
        raise BadParameter("n_paths must be a positive integer")
    tau = t / (1 - t)
    steps = np.sqrt(np.diff(tau, prepend=0.0))
    z = standard_normals(seed, int(n_paths) * t.size).reshape(int(n_paths), t.size)
    B = np.cumsum(z * steps, axis=1)
    paths = (1 - t) * B
    grid_ro, paths_ro = t.copy(), paths
    grid_ro.setflags(write=False)
    paths_ro.setflags(write=False)
    return PathSample(grid_ro, paths_ro, int(seed))


def bridge_covariance(grid: Sequence[float]) -> np.ndarray:
    t = np.asarray(grid, dtype=float)
    return np.minimum.outer(t, t) - np.outer(t, t)


@dataclass(frozen=True)
class CovarianceDiagnostic:
    empirical: np.ndarray
    analytic: np.ndarray
    standard_error: np.ndarray
    mean: np.ndarray
    mean_standard_error: np.ndarray

    @property
    def z_scores(self) -> np.ndarray:
        return (self.empirical - self.analytic) / self.standard_error

    @property
    def mean_z_scores(self) -> np.ndarray:
        return self.mean / self.mean_standard_error


def covariance_diagnostic(sample: PathSample) -> CovarianceDiagnostic:
    """Empirical second moments against ``s ∧ t − st``.

    The process is centred, so the estimator is ``mean(X_s X_t)`` with
    standard error ``sqrt((σ_ss σ_tt + σ_st²) / N)``.
    """
    X = sample.paths
    N = X.shape[0]
    emp = X.T @ X / N
    cov = bridge_covariance(sample.grid)
    d = np.diag(cov)
    se = np.sqrt((np.outer(d, d) + cov ** 2) / N)
    return CovarianceDiagnostic(emp, cov, se, X.mean(axis=0), np.sqrt(d / N))


def _sphere_points(nu: int, count: int) -> np.ndarray:
    if nu == 2:
        a = 2 * math.pi * np.arange(count) / count
        return np.column_stack([np.cos(a), np.sin(a)])
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    r = np.sqrt(1 - z ** 2)
    phi = math.pi * (1 + math.sqrt(5)) * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


@dataclass(frozen=True)
class DirichletReport:
    boundary_max: float
    harmonic_residual: float
    grid_points: int


def dirichlet_kernel_checks(nu: int, x, grid_h: float, boundary_samples: int = 2000,
                            stencil_h: Optional[float] = None) -> DirichletReport:
    """Boundary vanishing and harmonicity of ``K(x, ·) − G(x, ·)`` on the unit ball.

    ``boundary_max`` is the largest ``|K(x, b (1 − 10⁻⁶))|`` over sample
    points ``b`` of the sphere.  ``harmonic_residual`` is the largest
    ``(2ν+1)``-point discrete Laplacian of ``K(x, ·) − G(x, ·)`` (divided by
    the squared stencil spacing) over lattice points ``y`` of spacing
    ``grid_h`` with ``|y| + grid_h < 1`` and ``|y − x| ≥ 5 grid_h``.

    ``stencil_h`` (at most ``grid_h``, default ``grid_h``) shrinks the
    stencil while keeping the evaluation points, which is what a refinement
    study needs: see :func:`harmonic_refinement_ratio`.
    """
    if nu not in (2, 3):
        raise BadParameter("harmonicity is checked for dimension 2 or 3 only")
    if not grid_h > 0:
        raise BadParameter("grid_h must be positive")
    h = grid_h if stencil_h is None else float(stencil_h)
    if not 0 < h <= grid_h:
        raise BadParameter("stencil_h must lie in (0, grid_h]")
    x = np.asarray(x, dtype=float)
    if x.shape != (nu,):
        raise BadParameter(f"x must have length {nu}")
    if not math.sqrt(x @ x) < 1 - 2 * grid_h:
        raise BadParameter("need |x| < 1 - 2 grid_h")

    b = _sphere_points(nu, boundary_samples) * (1 - BOUNDARY_INSET)
    boundary_max = float(np.max(np.abs(_disk_green_many(nu, x, b))))

    m = int(math.floor(1 / grid_h))
    axis = np.arange(-m, m + 1) * grid_h
    mesh = np.stack(np.meshgrid(*([axis] * nu), indexing="ij"), axis=-1).reshape(-1, nu)
    norms = np.sqrt(np.sum(mesh ** 2, axis=1))
    far = np.sqrt(np.sum((mesh - x) ** 2, axis=1)) >= 5 * grid_h
    Y = mesh[(norms + grid_h < 1) & far]
    if len(Y) == 0:
        raise BadParameter("grid_h too coarse: no admissible interior points")

    def harmonic_part(Z):
        return _disk_green_many(nu, x, Z) - _newton_many(nu, x, Z)

    lap = -2 * nu * harmonic_part(Y)
    for i in range(nu):
        e = np.zeros(nu)
        e[i] = h
        lap = lap + harmonic_part(Y + e) + harmonic_part(Y - e)
    residual = float(np.max(np.abs(lap))) / h ** 2
    return DirichletReport(boundary_max, residual, len(Y))


def harmonic_refinement_ratio(nu: int, x, grid_h: float) -> float:
    """Residual at stencil ``grid_h`` over residual at ``grid_h / 2``, same points.

    A second-order stencil on a smooth harmonic function gives about 4.
    """
    coarse = dirichlet_kernel_checks(nu, x, grid_h, boundary_samples=16)
    fine = dirichlet_kernel_checks(nu, x, grid_h, boundary_samples=16, stencil_h=grid_h / 2)
    return coarse.harmonic_residual / fine.harmonic_residual
