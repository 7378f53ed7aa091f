"""Command-line front end: canned demonstrations, scans and feasibility checks.

Exit codes: 0 ok, 1 a demanded violation witness is absent, 2 usage or data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .ensemble_sim import (
    ExperimentConfig,
    bootstrap,
    bootstrap_preparations,
    certified_violations,
    corollary1_settings,
    ell_hat_with_se,
    noisy_povm_scan,
    plane_tilt_scan,
    quad_from_counts,
    run_lhv_experiment,
    run_oc_experiment,
    run_steering_experiment,
    steering_determinants,
)
from .errors import DirealityError
from .inequalities import (
    C_GRID,
    all_pusey_det_oc,
    ell_terms,
    CorrelationTable,
    SteeringQuad,
    chsh_all_eight,
    chsh_facet_label,
    ell_max,
    lemma2_solve,
    quad_from_csv,
)
from .lhv_oracle import lhv_feasible
from .qubit_core import TOL, QubitObservable, TwoQubitState, singlet, unit, werner
from .steering_geometry import (
    project_to_AB_plane,
    qubit_range_ellipse,
    rect_I,
    rect_R,
    rect_R_tilde,
    necessary_c_window,
    steering_ellipsoid,
)

SCAN_KINDS = ("ellmax-vs-adotb", "eps-threshold", "d-chi-boundary", "c-window")
DATA_DIR = Path(__file__).with_name("data")


class UsageError(Exception):
    """Bad flag value or unreadable input."""


# --- formatting -----------------------------------------------------------------


def fmt(x: float) -> str:
    return "" if x is None or math.isnan(x) else f"{x + 0.0:.9g}"


def clean(obj: Any) -> Any:
    """Round floats to 9 significant digits and map NaN/inf to null."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if not math.isfinite(x) else float(f"{x:.9g}") + 0.0
    return obj


def dump_json(obj: Any) -> str:
    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def dump_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def polyline_csv(points: np.ndarray) -> str:
    return dump_csv(("x", "y"), [tuple(map(float, p)) for p in np.asarray(points)])


# --- input parsing --------------------------------------------------------------


def parse_vec(text: str) -> np.ndarray:
    try:
        v = np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"bad vector {text!r}") from exc
    if v.shape != (3,) or np.linalg.norm(v) < TOL:
        raise UsageError(f"expected a nonzero x,y,z vector, got {text!r}")
    return unit(v)


def load_state(spec: str) -> TwoQubitState:
    if spec == "builtin:singlet":
        return singlet()
    if spec.startswith("builtin:werner:"):
        try:
            w = float(spec.split(":", 2)[2])
        except ValueError as exc:
            raise UsageError(f"bad Werner weight in {spec!r}") from exc
        return werner(w)
    if spec.startswith("builtin:"):
        raise UsageError(f"unknown builtin state {spec!r}")
    try:
        text = Path(spec).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read state file {spec!r}: {exc}") from exc
    try:
        return TwoQubitState.from_json(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"state file {spec!r} is not JSON: {exc}") from exc


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("DIREALITY_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise UsageError(f"DIREALITY_SEED must be an integer, got {env!r}") from exc


def parse_c(text: str | None, default: float) -> np.ndarray:
    if text is None:
        return np.array([default])
    if text == "scan":
        return C_GRID
    try:
        c = float(text)
    except ValueError as exc:
        raise UsageError(f"--c expects a float or 'scan', got {text!r}") from exc
    if not -1 < c < 1:
        raise UsageError("--c must lie in (-1, 1)")
    return np.array([c])


def load_table_input(spec: str) -> tuple[CorrelationTable, SteeringQuad | None, str]:
    """Read a correlation table, a quad record or a count CSV."""
    if spec.startswith("builtin:"):
        name = {"builtin:singlet-optimal": "singlet_optimal_table.json", "builtin:lhv": "lhv_table.json"}.get(spec)
        if name is None:
            raise UsageError(f"unknown builtin table {spec!r}")
        spec = str(DATA_DIR / name)
    try:
        text = Path(spec).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {spec!r}: {exc}") from exc
    if not text.strip():
        raise UsageError(f"{spec!r} is empty")
    if spec.endswith(".csv"):
        try:
            quad = quad_from_csv(text)
        except (KeyError, ValueError) as exc:
            raise UsageError(f"malformed count CSV: {exc}") from exc
        return CorrelationTable.from_quad(quad), quad, "csv"
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{spec!r} is not JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise UsageError("expected a JSON object")
    try:
        if "e_plus" in d:
            quad = SteeringQuad.from_dict(d)
            if not quad.has_weights:
                sol = lemma2_solve(quad)
                quad = quad.with_weights(sol.w_plus, sol.w_prime_plus)
            return CorrelationTable.from_quad(quad), quad, "quad"
        return CorrelationTable.from_dict(d), None, "table"
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed table record: missing or bad field {exc}") from exc


# --- manifest -------------------------------------------------------------------


class Output:
    """Collects files for ``--out`` and writes the run manifest."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.dir = Path(args.out) if args.out else None
        self.files: list[str] = []
        self.started = datetime.now(timezone.utc).isoformat()

    def write(self, name: str, text: str) -> None:
        if self.dir is None:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / name).write_text(text)
        self.files.append(str(self.dir / name))

    def manifest(self, command: str, config: dict[str, Any], seed: int | None) -> None:
        if self.dir is None:
            return
        rec = {
            "command": command,
            "config": config,
            "version": __version__,
            "seed": seed,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "outputs": self.files,
        }
        with open(self.dir / "manifest.jsonl", "a") as fh:
            fh.write(json.dumps(clean(rec), sort_keys=True) + "\n")


def config_echo(args: argparse.Namespace) -> dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k != "func"}


# --- commands -------------------------------------------------------------------


def cmd_ellipsoid(args: argparse.Namespace, out: Output) -> int:
    state = load_state(args.state)
    a, b = parse_vec(args.a), parse_vec(args.b)
    c_val = float(np.clip(a @ b, -1, 1))
    theta = math.acos(c_val)
    ell3 = steering_ellipsoid(state)
    proj = project_to_AB_plane(ell3, a, b)
    polys = {"steering_ellipse": proj.boundary(args.points)}
    regions: dict[str, Any] = {"R": rect_R(c_val)}
    if 0 < theta < math.pi:
        regions["R_tilde"] = rect_R_tilde(c_val, theta)
        regions["I"] = rect_I(c_val, theta)
        range_ellipse = qubit_range_ellipse(a, b)
        polys["qubit_range"] = range_ellipse.boundary(args.points)
    for name, reg in regions.items():
        if not reg.empty:
            v = reg.vertices()
            polys[name] = np.vstack([v, v[:1]])
    for name, pts in polys.items():
        out.write(f"{name}.csv", polyline_csv(pts))
    summary = {
        "c": c_val,
        "theta": theta,
        "ellipsoid": ell3.to_dict(),
        "projection": proj.to_dict(),
        "regions": {k: r.to_dict() for k, r in regions.items()},
        "vertices": {k: (None if r.empty else r.vertices()) for k, r in regions.items()},
    }
    out.write("summary.json", dump_json(summary))
    if args.format == "csv":
        sys.stdout.write(polyline_csv(polys["steering_ellipse"]))
    else:
        sys.stdout.write(dump_json(summary))
    return 0


def _lhv_distribution(seed: int) -> np.ndarray:
    return np.random.default_rng(np.random.SeedSequence([seed, 1])).dirichlet(np.ones(16))


def cmd_steer_demo(args: argparse.Namespace, out: Output) -> int:
    seed = resolve_seed(args.seed)
    a, b = parse_vec(args.a), parse_vec(args.b)
    c_values = parse_c(args.c, float(a @ b))
    if args.lhv_source:
        res = run_lhv_experiment(_lhv_distribution(seed), args.n, seed)
    else:
        state = load_state(args.state)
        dm, dmp = corollary1_settings(a, b)
        cfg = ExperimentConfig(state, QubitObservable(a), QubitObservable(b), dm, dmp, args.n, seed)
        res = run_steering_experiment(cfg)
    ell, se = ell_hat_with_se(res.quad, c_values)
    certified = certified_violations(res.quad, c_values)
    lo, hi = bootstrap(
        res.counts,
        lambda d: ell_hat_with_se(quad_from_counts(d), c_values)[0],
        args.n_boot,
        seed,
    )
    try:
        dets: Any = steering_determinants(res.quad)
    except DirealityError as exc:
        dets = {"error": type(exc).__name__, "message": str(exc)}
    def det_stat(d: np.ndarray) -> np.ndarray:
        try:
            return steering_determinants(quad_from_counts(d))
        except DirealityError:
            return np.full(8, np.nan)

    dlo, dhi = bootstrap(res.counts, det_stat, args.n_boot, seed + 1)
    chsh8 = chsh_all_eight(res.table)
    feasible, cert = lhv_feasible(res.table)
    best = int(np.nanargmax(ell)) if np.any(np.isfinite(ell)) else 0
    report = {
        "source": "lhv" if args.lhv_source else "quantum",
        "n": args.n,
        "seed": seed,
        "adotb": float(a @ b),
        "ell_max_predicted": ell_max(float(a @ b)) if not args.lhv_source else None,
        "c_best": float(c_values[best]),
        "ell_best": float(ell[best]),
        "se_best": float(se[best]),
        "ci_best": [float(lo[best]), float(hi[best])],
        "n_certified_c": int(certified.size),
        "determinants": dets,
        "determinant_ci": np.stack([dlo, dhi], axis=1),
        "chsh": chsh8,
        "chsh_max": float(chsh8.max()),
        "chsh_max_facet": chsh_facet_label(int(np.argmax(chsh8))),
        "lhv_feasible": feasible,
        "lhv_certificate": cert.to_dict(),
    }
    rows = [(float(c), float(e), float(s), float(l), float(h)) for c, e, s, l, h in zip(c_values, ell, se, lo, hi)]
    curve = dump_csv(("c", "ell", "se", "ci_lo", "ci_hi"), rows)
    out.write("ell.csv", curve)
    out.write("report.json", dump_json(report))
    sys.stdout.write(curve if args.format == "csv" else dump_json(report))
    out.manifest("steer-demo", config_echo(args), seed)
    if args.expect_violation and certified.size == 0:
        return 1
    return 0


def cmd_oc_demo(args: argparse.Namespace, out: Output) -> int:
    seed = resolve_seed(args.seed)
    a, b = parse_vec(args.a), parse_vec(args.b)
    eps = 1.0 if args.eps is None else args.eps
    if not 0 <= eps <= 1:
        raise UsageError("--eps must lie in [0, 1]")
    res = run_oc_experiment(a, b, args.n, seed, eps)
    dets = res["determinants"]
    violated = res["ell"] > 3 * res["se"]
    c = res["c"]

    def stat(draw: list) -> np.ndarray:
        e1, e2, e3, e4 = draw
        ell = float(ell_terms(SteeringQuad(e1, e2, e3, e4), c).min())
        try:
            d = all_pusey_det_oc((e1, e3, e2, e4))
        except DirealityError:
            d = np.full(8, np.nan)
        return np.concatenate([[ell], d])

    lo, hi = bootstrap_preparations(res["quad"].members(), stat, args.n_boot, seed)
    report = {
        "n_per_preparation": args.n,
        "seed": seed,
        "eps": eps,
        "c": res["c"],
        "ell": res["ell"],
        "se": res["se"],
        "ci": [lo[0], hi[0]],
        "predicted_ell": res["predicted_ell"],
        "quad": res["quad"].to_dict(),
        "determinants": dets,
        "determinant_ci": np.stack([lo[1:], hi[1:]], axis=1),
        "min_determinant": None if dets is None else float(np.min(dets)),
        "violation_certified": bool(violated),
    }
    out.write("report.json", dump_json(report))
    if args.format == "csv":
        text = dump_csv(("c", "ell", "se", "predicted_ell"), [(res["c"], res["ell"], res["se"], res["predicted_ell"])])
    else:
        text = dump_json(report)
    sys.stdout.write(text)
    out.manifest("oc-demo", config_echo(args), seed)
    if args.expect_violation and not violated:
        return 1
    return 0


def _scan_rows(args: argparse.Namespace) -> tuple[tuple[str, ...], list[tuple[Any, ...]]]:
    k = args.points
    if args.kind == "ellmax-vs-adotb":
        grid = np.linspace(0.0, 1.0, k)
        return ("adotb", "ell_max"), [(float(x), ell_max(float(x))) for x in grid]
    if args.kind == "eps-threshold":
        grid = np.linspace(0.0, 1.0, k)
        rows = []
        for e in grid:
            hit, val = noisy_povm_scan(float(e))
            rows.append((float(e), val, int(hit)))
        return ("eps", "ell", "violation"), rows
    if args.kind == "d-chi-boundary":
        ds = np.linspace(0.0, 0.99, k)
        chis = np.linspace(0.0, math.pi / 2 * 0.99, k)
        rows = []
        for d in ds:
            for chi in chis:
                flag = plane_tilt_scan(float(d), float(chi))
                analytic = math.sqrt(1 - d * d) * math.cos(chi) > 1 / math.sqrt(2)
                rows.append((float(d), float(chi), int(flag), int(analytic)))
        return ("d", "chi", "violation", "analytic"), rows
    grid = np.linspace(0.0, math.pi, k + 2)[1:-1]
    return ("theta", "c_lo", "c_hi"), [(float(t), *necessary_c_window(float(t))) for t in grid]


def cmd_scan(args: argparse.Namespace, out: Output) -> int:
    if args.kind not in SCAN_KINDS:
        raise UsageError(f"unknown scan kind {args.kind!r}; choose from {', '.join(SCAN_KINDS)}")
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    header, rows = _scan_rows(args)
    text = dump_csv(header, rows)
    out.write(f"{args.kind}.csv", text)
    if args.format == "json":
        sys.stdout.write(dump_json([dict(zip(header, r)) for r in rows]))
    else:
        sys.stdout.write(text)
    out.manifest("scan", config_echo(args), None)
    return 0


def cmd_lhv_check(args: argparse.Namespace, out: Output) -> int:
    table, quad, kind = load_table_input(args.table)
    chsh8 = chsh_all_eight(table)
    chsh_ok = bool(np.all(chsh8 <= 2 + 1e-9))
    feasible, cert = lhv_feasible(table)
    quad = quad if quad is not None else table.to_quad()
    try:
        dets: Any = steering_determinants(quad)
        dets_ok: bool | None = bool(np.all(dets <= 1e-9))
    except DirealityError as exc:
        dets, dets_ok = {"error": type(exc).__name__, "message": str(exc)}, None
    verdicts = [chsh_ok, feasible] + ([dets_ok] if dets_ok is not None else [])
    consistent = len(set(verdicts)) == 1
    report = {
        "input_kind": kind,
        "table": table.to_dict(),
        "chsh": chsh8,
        "chsh_max": float(chsh8.max()),
        "chsh_max_facet": chsh_facet_label(int(np.argmax(chsh8))),
        "determinants": dets,
        "lhv_feasible": feasible,
        "certificate": cert.to_dict(),
        "consistent": consistent,
    }
    out.write("verdict.json", dump_json(report))
    sys.stdout.write(dump_json(report))
    out.manifest("lhv-check", config_echo(args), None)
    if not consistent:
        print("InternalInconsistency: CHSH, LP and determinant verdicts disagree", file=sys.stderr)
        return 2
    if args.expect_violation and feasible:
        return 1
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default=None, help="stdout format (default: json, csv for scan)")
    common.add_argument("--out", default=None, help="directory for output files and manifest.jsonl")
    common.add_argument("--expect-violation", action="store_true", help="exit 1 if no violation witness is found")

    geom = argparse.ArgumentParser(add_help=False)
    geom.add_argument("--a", default="1,0,0", help="axis of observable A as x,y,z")
    geom.add_argument("--b", default="0,1,0", help="axis of observable B as x,y,z")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--n", type=int, default=None, help="number of systems (default: 1e6, 1e5 per preparation for oc-demo)")
    mc.add_argument("--seed", type=int, default=None, help="RNG seed (default: $DIREALITY_SEED or 0)")

    parser = argparse.ArgumentParser(prog="direality", description="Device-independent joint-reality tests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ellipsoid", parents=[common, geom], help="steering ellipse and rectangle regions")
    p.add_argument("--state", default="builtin:singlet", help="file, builtin:singlet or builtin:werner:<w>")
    p.add_argument("--points", type=int, default=256, help="polyline resolution")
    p.set_defaults(func=cmd_ellipsoid)

    p = sub.add_parser("steer-demo", parents=[common, geom, mc], help="Monte Carlo steering experiment")
    p.add_argument("--state", default="builtin:singlet", help="file, builtin:singlet or builtin:werner:<w>")
    p.add_argument("--c", default=None, help="float or 'scan' (default: a.b)")
    p.add_argument("--n-boot", type=int, default=1000, help="bootstrap replicates")
    p.add_argument("--lhv-source", action="store_true", help="replace the quantum source by a random local model")
    p.set_defaults(func=cmd_steer_demo)

    p = sub.add_parser("oc-demo", parents=[common, geom, mc], help="single-qubit preparation experiment")
    p.add_argument("--eps", type=float, default=None, help="measurement sharpness in [0, 1]")
    p.add_argument("--n-boot", type=int, default=1000, help="bootstrap replicates")
    p.set_defaults(func=cmd_oc_demo)

    p = sub.add_parser("scan", parents=[common], help="tabulate a closed-form curve")
    p.add_argument("kind", help=" | ".join(SCAN_KINDS))
    p.add_argument("--points", type=int, default=101, help="grid points per axis")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("lhv-check", parents=[common], help="local-model verdict for a table")
    p.add_argument("table", help="JSON table or quad, count CSV, builtin:singlet-optimal or builtin:lhv")
    p.set_defaults(func=cmd_lhv_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.format is None:
        args.format = "csv" if args.command == "scan" else "json"
    if getattr(args, "n", 0) is None:
        args.n = 100_000 if args.command == "oc-demo" else 1_000_000
    out = Output(args)
    try:
        code = args.func(args, out)
        if args.command == "ellipsoid":
            out.manifest("ellipsoid", config_echo(args), None)
        return code
    except (UsageError, DirealityError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
