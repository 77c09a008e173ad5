"""``rkhsnet`` command line: every computation as a reproducible batch job.

Each command prints a JSON job result::

    {"schema_version": "rkhsnet.job/1", "command": ..., "inputs_digest": ...,
     "outputs": {...}, "diagnostics": [{"check_name", "passed", "value", "tolerance"}]}

Exit codes: 0 success, 1 computational or domain error (a JSON object
``{"error": {"code", "message"}}`` is printed instead), 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from typing import Any, List, Optional

import numpy as np

from . import continuum, network, rkhs_core, semigroup
from .errors import RKHSError

SCHEMA_VERSION = "rkhsnet.job/1"
THREADS_ENV = "RKHS_THREADS"

CHAPMAN_TOL = 1e-10
GREEN_INVERSE_TOL = 1e-9
QUADRATURE_TOL = 1e-6
LAPLACIAN_TOL = 1e-8
TRIANGLE_TOL = 1e-9
CND_TOL = 1e-9
CND_SAMPLES = 100
COVARIANCE_Z = 4.0


class UsageError(Exception):
    pass


class InputError(RKHSError):
    """A file could not be read or written."""

    @property
    def code(self):
        return "IOError"


@dataclass
class Check:
    check_name: str
    passed: bool
    value: float
    tolerance: float


def check(name, value, tolerance, lower=False) -> Check:
    """``passed`` means ``value <= tolerance`` (``>=`` when ``lower``)."""
    value = float(value)
    ok = value >= tolerance if lower else value <= tolerance
    return Check(name, bool(ok), value, float(tolerance))


@dataclass
class JobResult:
    command: str
    inputs_digest: str
    outputs: Any
    diagnostics: List[Check] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "inputs_digest": self.inputs_digest,
            "outputs": self.outputs,
            "diagnostics": [vars(c) for c in self.diagnostics],
        }


# ---- JSON with 17 significant digits

def _scalar(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "%.17g" % x if math.isfinite(x) else "null"
    return json.dumps(str(x), ensure_ascii=False)


def _is_flat(seq) -> bool:
    return all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in seq)


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text; floats as ``%.17g`` so they round-trip exactly.

    Lists of scalars stay on one line (matrix rows read naturally).
    """
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if _is_flat(obj):
            return "[" + ", ".join(_scalar(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    return _scalar(obj)


def inputs_digest(command: str, inputs: dict) -> str:
    canon = json.dumps({"command": command, "inputs": inputs}, sort_keys=True,
                       separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".rkhsnet-", suffix=".tmp")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise InputError(f"cannot write {path}: {exc.strerror}") from None


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise InputError(f"{path} is not UTF-8 text") from None


def _json_arg(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} is not valid JSON: {exc.msg}") from None


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise UsageError(f"{THREADS_ENV} must be a non-negative integer, got {raw!r}")
    return n or (os.cpu_count() or 1)


# ---- membership

CONTINUOUS = {
    "bm": continuum.brownian_motion,
    "bridge": continuum.brownian_bridge,
    "disk2": lambda: continuum.disk_green(2),
    "disk3": lambda: continuum.disk_green(3),
}


def _parse_kernel_name(name: str):
    """``("continuous", K)``, ``("ladder", R)``, ``("file", path)``; usage error otherwise."""
    if name in CONTINUOUS:
        return "continuous", CONTINUOUS[name]()
    head, _, param = name.partition(":")
    if head == "newton" and param:
        try:
            nu = int(param)
        except ValueError:
            raise UsageError(f"newton dimension must be an integer, got {param!r}") from None
        if nu < 2:
            raise UsageError("newton dimension must be at least 2")
        return "continuous", continuum.newton_potential(nu)
    if head == "ladder" and param:
        try:
            R = float(param)
        except ValueError:
            raise UsageError(f"ladder ratio must be a number, got {param!r}") from None
        if not 0 < R < 1:
            raise UsageError("ladder ratio must lie in (0, 1)")
        return "ladder", R
    if os.path.isfile(name):
        return "file", name
    raise UsageError(f"unknown kernel {name!r} (expected bm, bridge, disk2, disk3, "
                     "newton:<nu>, ladder:<R> or an edge-list file)")


def _schedule(text: str):
    if text in ("dyadic", "full"):
        return text
    sizes = _json_arg(text, "--exhaustion")
    if (not isinstance(sizes, list) or not sizes
            or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 1 for s in sizes)):
        raise UsageError("--exhaustion must be 'dyadic', 'full' or a JSON list of positive sizes")
    return sizes


def _target_first(points: list, target: str) -> list:
    labels = [rkhs_core.point_label(p) for p in points]
    if target not in labels:
        raise UsageError(f"target {target} is not among the points")
    i = labels.index(target)
    return [points[i]] + points[:i] + points[i + 1:]


def _finite_exhaustion(points: list, schedule) -> rkhs_core.Exhaustion:
    if schedule == "full":
        return rkhs_core.Exhaustion(subsets=[points], complete=True)
    sizes = None if schedule == "dyadic" else schedule
    return rkhs_core.Exhaustion.prefix(points, sizes)


def _ladder_exhaustion(target: int, schedule) -> rkhs_core.Exhaustion:
    if schedule == "full":
        raise UsageError("the ladder is infinite; --exhaustion full needs --points")
    if schedule == "dyadic":
        start = max(1, math.ceil(math.log2(target + 1)))
        return rkhs_core.Exhaustion.dyadic(lambda i: i, start=start)
    if schedule[0] <= target:
        raise UsageError(f"first exhaustion size must exceed the target index {target}")
    return rkhs_core.Exhaustion(subsets=[list(range(s)) for s in schedule])


def cmd_membership(args) -> JobResult:
    kind, param = _parse_kernel_name(args.kernel)
    schedule = _schedule(args.exhaustion)
    points = _json_arg(args.points, "--points") if args.points is not None else None
    if points is not None and (not isinstance(points, list) or not points):
        raise UsageError("--points must be a non-empty JSON list")
    inputs = {"kernel": args.kernel, "points": points, "exhaustion": schedule,
              "target": args.target, "levels": args.levels, "base": args.base}

    if kind == "file":
        text = _read_text(param)
        inputs["kernel"] = {"edge_list_sha256": _sha256(text)}
        G = network.load_graph(text)
        base = G.vertices[0] if args.base is None else args.base
        if base not in G.vertices:
            raise UsageError(f"base {base!r} is not a vertex of the graph")
        K = network.network_kernel(G, base)
        gram = K.gram
        kernel = lambda a, b: gram[K.index(a), K.index(b)]  # noqa: E731
        target = args.target
        if points is None:
            points = list(K.points)
        points = [rkhs_core.point_label(p) for p in points]
        for p in points:
            if p not in K.points:
                raise UsageError(f"point {p!r} is not a non-base vertex of the graph")
        exhaustion = _finite_exhaustion(_target_first(points, target), schedule)
    else:
        parsed = _json_arg(args.target, "--target") if args.target is not None else None
        target = rkhs_core.point_label(parsed)
        if kind == "ladder":
            R = param
            kernel = lambda a, b: network.ladder_kernel_value(R, a, b)  # noqa: E731
            if points is None:
                if not (isinstance(parsed, int) and not isinstance(parsed, bool) and parsed >= 0):
                    raise UsageError("ladder target must be a non-negative integer")
                exhaustion = _ladder_exhaustion(parsed, schedule)
            else:
                if not all(isinstance(p, int) and not isinstance(p, bool) and p >= 0 for p in points):
                    raise UsageError("ladder points must be non-negative integers")
                exhaustion = _finite_exhaustion(_target_first(points, target), schedule)
        else:
            K = param
            if points is None:
                raise UsageError(f"kernel {args.kernel} needs --points")
            ordered = _target_first(points, target)
            kernel = continuum.point_kernel(K, ordered)
            exhaustion = _finite_exhaustion(continuum.as_points(K, ordered), schedule)

    diag = rkhs_core.membership_diagnostic(kernel, exhaustion, target,
                                           max_levels=args.levels, threads=_threads())
    values = list(diag.values)
    increments = [b - a for a, b in zip(values, values[1:])]
    outputs = {
        "target": diag.target,
        "sizes": list(diag.sizes),
        "values": values,
        "verdict": diag.verdict,
        "limit": diag.limit,
        "reason": diag.reason,
    }
    largest_drop = max([0.0] + [-d for d in increments])
    checks = [check("monotone_nondecreasing", largest_drop, rkhs_core.MONO_TOL)]
    return JobResult("membership", inputs_digest("membership", inputs), outputs, checks)


# ---- network

def _graph_checks_resistance(G, base, rng) -> tuple:
    R = network.resistance_metric(G, base)
    K = network.network_kernel(G, base)
    vals = R.values
    io = G.index(base)
    keep = [G.index(v) for v in K.points]
    recon = (vals[io][:, None] + vals[io][None, :] - vals) / 2
    scale = max(1.0, float(np.max(np.abs(K.gram)))) if len(K) else 1.0
    gm1 = float(np.max(np.abs(recon[np.ix_(keep, keep)] - K.gram))) if len(K) else 0.0
    n = len(G)
    # R(x,z) - R(x,y) - R(y,z) over all triples
    tri = vals[:, None, :] - vals[:, :, None] - vals[None, :, :]
    tri_violation = max(0.0, float(np.max(tri)))
    xi = rng.standard_normal((CND_SAMPLES, n))
    xi -= xi.mean(axis=1, keepdims=True)
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    quad = np.einsum("ki,ij,kj->k", xi, vals, xi)
    rscale = max(1.0, float(np.max(vals)))
    outputs = {"base": G.vertices[io], "vertices": list(G.vertices), "resistance": vals}
    checks = [
        check("gm1_reconstruction", gm1, network.GM1_TOL * scale),
        check("triangle_inequality", tri_violation, TRIANGLE_TOL * rscale),
        check("conditionally_negative_definite", max(0.0, float(np.max(quad))), CND_TOL * rscale),
    ]
    return outputs, checks


def cmd_network(args) -> JobResult:
    text = _read_text(args.graph)
    G = network.load_graph(text)
    base = G.vertices[0] if args.base is None else args.base
    if base not in G.vertices:
        raise UsageError(f"base {base!r} is not a vertex of the graph")
    inputs = {"edge_list_sha256": _sha256(text), "base": base, "emit": args.emit, "seed": args.seed}
    rng = np.random.default_rng(args.seed)
    io = G.index(base)

    if args.emit == "dipoles":
        system = network.dipole_system(G, base)
        L = G.laplacian_matrix()
        rhs = np.eye(len(G))[[G.index(x) for x in system.others]]
        rhs[:, io] -= 1.0
        resid = system.potentials @ L - rhs
        scale = max(1.0, float(np.max(np.abs(L)))) * max(1.0, float(np.max(np.abs(system.potentials))))
        outputs = {"base": base, "vertices": list(G.vertices),
                   "dipoles": {x: system[x] for x in system.others}}
        checks = [check("dipole_equation", float(np.max(np.abs(resid))) if resid.size else 0.0,
                        rkhs_core.SOLVE_TOL * scale)]
    elif args.emit == "kernel":
        K = network.network_kernel(G, base)
        report = rkhs_core.psd_check(K)
        outputs = {"base": base, "points": list(K.points), "gram": K.gram}
        checks = [check("positive_semidefinite", report.min_eigenvalue,
                        -rkhs_core.PSD_TOL * max(1.0, report.max_eigenvalue), lower=True)]
    elif args.emit == "resistance":
        outputs, checks = _graph_checks_resistance(G, base, rng)
    else:
        grounded = G.grounded_laplacian(base)
        K = network.network_kernel(G, base)
        err = float(np.max(np.abs(rkhs_core.finite_laplacian(K) - grounded))) if len(K) else 0.0
        outputs = {"base": base, "vertices": list(G.vertices), "laplacian": G.laplacian_matrix(),
                   "grounded_vertices": list(K.points), "grounded_laplacian": grounded}
        checks = [check("inverse_of_network_kernel", err, LAPLACIAN_TOL)]
    return JobResult("network", inputs_digest("network", inputs), outputs, checks)


# ---- bridge sampler

def cmd_bridge_sample(args) -> JobResult:
    grid = _json_arg(args.grid, "--grid")
    if not isinstance(grid, list) or not all(isinstance(t, (int, float)) and not isinstance(t, bool)
                                             for t in grid):
        raise UsageError("--grid must be a JSON list of numbers")
    if args.paths < 1:
        raise UsageError("--paths must be at least 1")
    inputs = {"grid": grid, "paths": args.paths, "seed": args.seed}
    sample = continuum.sample_bridge_paths(grid, args.paths, seed=args.seed)
    text = sample.csv_text()
    atomic_write(args.out, text)
    outputs = {"grid": sample.grid, "paths": args.paths, "seed": args.seed,
               "csv": args.out, "csv_sha256": _sha256(text)}
    checks = []
    if args.paths >= 2:
        diag = continuum.covariance_diagnostic(sample)
        checks = [
            check("covariance_within_4se", float(np.max(np.abs(diag.z_scores))), COVARIANCE_Z),
            check("mean_within_4se", float(np.max(np.abs(diag.mean_z_scores))), COVARIANCE_Z),
        ]
    return JobResult("bridge-sample", inputs_digest("bridge-sample", inputs), outputs, checks)


# ---- heat semigroup

def _matrix_arg(text: str):
    stripped = text.lstrip()
    if not stripped.startswith("["):
        text = _read_text(text)
    M = _json_arg(text, "--laplacian")
    try:
        A = np.array(M, dtype=float)
    except (TypeError, ValueError):
        raise UsageError("--laplacian must be a JSON matrix of numbers") from None
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise UsageError("--laplacian must be a non-empty square matrix")
    return M, A


def cmd_heat(args) -> JobResult:
    M, L = _matrix_arg(args.laplacian)
    times = _json_arg(args.times, "--times")
    if isinstance(times, (int, float)) and not isinstance(times, bool):
        times = [times]
    if not isinstance(times, list) or not times or not all(
            isinstance(t, (int, float)) and not isinstance(t, bool) for t in times):
        raise UsageError("--times must be a JSON list of numbers")
    inputs = {"laplacian": M, "times": times, "check": args.check}
    D = semigroup.spectral_decompose(L)
    kernels = [semigroup.heat_kernel(D, t) for t in times]
    outputs = {"times": times, "eigenvalues": D.eigenvalues, "heat_kernels": kernels}
    checks = []
    if args.check == "semigroup":
        n = len(D)
        if 0 in times:
            p0 = kernels[times.index(0)]
            checks.append(check("identity_at_zero", float(np.max(np.abs(p0 - np.eye(n)))), 0.0))
        worst = 0.0
        for i, s in enumerate(times):
            for j, t in enumerate(times[i:], start=i):
                err = kernels[i] @ kernels[j] - semigroup.heat_kernel(D, s + t)
                worst = max(worst, float(np.max(np.abs(err))))
        checks.append(check("chapman_kolmogorov", worst, CHAPMAN_TOL))
    else:
        K = semigroup.green_from_semigroup(D)
        outputs["green"] = K
        scale = max(1.0, float(np.max(np.abs(K))) * float(np.max(np.abs(L))))
        inv_err = float(np.max(np.abs(K @ L - np.eye(len(D)))))
        quad = semigroup.green_quadrature(L, lambda_min=float(D.eigenvalues[0]))
        checks = [
            check("green_inverse", inv_err, GREEN_INVERSE_TOL * scale),
            check("green_quadrature", float(np.max(np.abs(K - quad.matrix))), QUADRATURE_TOL),
        ]
    return JobResult("heat", inputs_digest("heat", inputs), outputs, checks)


# ---- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rkhsnet",
        description="Reproducing-kernel computations on point sets, networks and semigroups.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output", metavar="FILE",
                       help="also write the JSON job result to FILE (atomically)")

    p = sub.add_parser("membership", help="decide whether a Dirac mass lies in the RKHS")
    p.add_argument("--kernel", required=True,
                   help="bm | bridge | disk2 | disk3 | newton:<nu> | ladder:<R> | edge-list file")
    p.add_argument("--points", help="JSON list of points (required except for ladder)")
    p.add_argument("--exhaustion", default="dyadic",
                   help="'dyadic' (default), 'full', or a JSON list of prefix sizes")
    p.add_argument("--target", required=True, help="point to test (JSON value or vertex name)")
    p.add_argument("--levels", type=int, default=12, help="maximum exhaustion levels")
    p.add_argument("--base", help="base vertex for edge-list kernels (default: first vertex)")
    common(p)
    p.set_defaults(func=cmd_membership)

    p = sub.add_parser("network", help="dipoles, kernel, resistance or Laplacian of a network")
    p.add_argument("--graph", required=True, help="edge-list file: 'u v c' per line")
    p.add_argument("--base", help="base vertex (default: first vertex)")
    p.add_argument("--emit", required=True, choices=["dipoles", "kernel", "resistance", "laplacian"])
    p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common(p)
    p.set_defaults(func=cmd_network)

    p = sub.add_parser("bridge-sample", help="sample Brownian-bridge paths to CSV")
    p.add_argument("--grid", required=True, help="JSON list of times in (0, 1)")
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path (first row grid, one row per path)")
    common(p)
    p.set_defaults(func=cmd_bridge_sample)

    p = sub.add_parser("heat", help="heat semigroup and Green matrix of a Laplacian")
    p.add_argument("--laplacian", required=True, help="JSON matrix, or a file containing one")
    p.add_argument("--times", default="[0]", help="JSON list of times")
    p.add_argument("--check", choices=["semigroup", "green"], default="semigroup")
    common(p)
    p.set_defaults(func=cmd_heat)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.func(args)
        text = dumps(result.to_json()) + "\n"
        if args.output:
            atomic_write(args.output, text)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rkhsnet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except RKHSError as exc:
        err = {"schema_version": SCHEMA_VERSION, "command": args.command,
               "error": {"code": exc.code, "message": str(exc)}}
        sys.stdout.write(dumps(err) + "\n")
        return 1
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
