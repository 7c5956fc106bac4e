"""Command-line front end.

Every data-producing command writes a CSV (header row, LF endings, floats in
shortest round-trip form) plus ``<csv>.manifest.json`` recording argv,
resolved parameters and SHA-256 digests of the outputs.  ``replay`` re-runs a
manifest into a scratch directory and checks the digests.

Exit codes: 0 success, 2 argument or domain error, 3 runtime or resource error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import warnings
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import design_log_trajectory, predicted_beta
from .baseline import OrdinaryWalkConfig, survival_mc_ordinary
from .core import (
    ROUNDING_RULES,
    ConstantVelocityTrap,
    DomainError,
    LogarithmicTrap,
    StaticTrap,
    SurvivalSeries,
    TableTrap,
    TrajectoryRangeError,
    checkpoint_grid,
    check_q,
)
from .estimation import fit_exponential, fit_power_law
from .exact import PropagationConfig, survival_exact, survival_recurrence
from .montecarlo import DEFAULT_BUDGET, McConfig, ResourceError, survival_mc

SCHEMA = "sisyphus-walk/{}/v1"
EXACT_COLUMNS = ["t", "s", "method", "q", "trajectory_id"]
MC_COLUMNS = EXACT_COLUMNS + ["n_walkers", "stderr"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# formatting and atomic output
# ---------------------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_bytes(header: list[str], rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def json_bytes(doc) -> bytes:
    return (json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n").encode("utf-8")


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_with_manifest(out: Path, data: bytes, command: str, argv: list[str], params: dict, started: str) -> dict:
    atomic_write(out, data)
    manifest = {
        "schema": SCHEMA.format("manifest"),
        "tool_version": __version__,
        "command": command,
        "argv": argv,
        "cwd": os.getcwd(),
        "parameters": params,
        "started": started,
        "finished": _now(),
        "outputs": [{"path": str(out), "sha256": sha256(data), "bytes": len(data)}],
    }
    atomic_write(manifest_path(out), json_bytes(manifest))
    return manifest


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


# ---------------------------------------------------------------------------
# trap specifiers
# ---------------------------------------------------------------------------


def parse_trap(spec: str, args) -> object:
    """``static:X``, ``cv:X0:NUM/DEN``, ``log`` (with --beta or --a/--b) or ``table:PATH``."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "static":
            return StaticTrap(int(rest))
        if kind == "cv":
            x0, _, v = rest.partition(":")
            return ConstantVelocityTrap(int(x0), Fraction(v))
        if kind == "log":
            rounding = args.rounding
            if args.beta is not None:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    d = design_log_trajectory(args.q, args.beta, rounding)
                for w in caught:
                    print(f"warning: {w.message}", file=sys.stderr)
                return d.trajectory(rounding)
            if args.a is None or args.b is None:
                raise DomainError("trap 'log' needs --beta or both --a and --b")
            return LogarithmicTrap(args.a, args.b, rounding)
        if kind == "table":
            text = Path(rest).read_text()
            return TableTrap(tuple(int(v) for v in text.split()), name=rest)
    except (ValueError, ZeroDivisionError) as exc:
        raise DomainError(f"bad trap specifier {spec!r}: {exc}") from exc
    raise DomainError(f"unknown trap specifier {spec!r}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--trap", required=True, help="static:X | cv:X0:NUM/DEN | log | table:PATH")
    p.add_argument("--beta", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--rounding", choices=ROUNDING_RULES, default="nearest")
    p.add_argument("--t-max", type=int, required=True)
    p.add_argument("--checkpoints", choices=("auto", "all", "log"), default="auto")
    p.add_argument("--ratio", type=float, default=1.05)
    p.add_argument("--out", type=Path)


def cmd_exact(args, argv) -> int:
    started = _now()
    check_q(args.q)
    traj = parse_trap(args.trap, args)
    cfg = PropagationConfig(args.q, traj, args.t_max, args.checkpoints, args.ratio)
    if args.method == "propagate":
        series = survival_exact(cfg)
    else:
        series = survival_recurrence(cfg, args.arithmetic)
    method = series.meta["method"]
    rows = ((t, s, method, args.q, traj.label) for t, s in zip(series.t, series.s))
    out = args.out or Path("exact.csv")
    write_with_manifest(out, csv_bytes(EXACT_COLUMNS, rows), "exact", argv, series.meta, started)
    return 0


def cmd_mc(args, argv) -> int:
    started = _now()
    check_q(args.q)
    traj = parse_trap(args.trap, args)
    common = dict(q=args.q, traj=traj, t_max=args.t_max, n_walkers=args.n, seed=args.seed,
                  n_streams=args.streams, checkpoints=args.checkpoints, ratio=args.ratio,
                  budget=args.budget)
    if args.model == "sisyphus":
        res = survival_mc(McConfig(**common), args.sampler, args.workers, keep_ticks=False)
    else:
        res = survival_mc_ordinary(OrdinaryWalkConfig(**common), args.workers)
    s = res.series
    method = s.meta["method"]
    rows = ((t, v, method, args.q, traj.label, args.n, e) for t, v, e in zip(s.t, s.s, s.stderr))
    params = dict(s.meta, censored=res.censored, model=args.model)
    out = args.out or Path("mc.csv")
    write_with_manifest(out, csv_bytes(MC_COLUMNS, rows), "mc", argv, params, started)
    return 0


def cmd_design(args, argv) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        d = design_log_trajectory(args.q, args.beta, args.rounding)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    traj = d.trajectory(args.rounding)
    ticks = checkpoint_grid(args.sample_t_max, "log", 2.0)
    table = [
        {"t": int(t), "continuous": d.a * math.log(t) + d.b if t >= 1 else None,
         "position": traj.position(int(t))}
        for t in ticks
    ]
    doc = {
        "schema": SCHEMA.format("design"),
        "q": d.q,
        "beta": d.beta,
        "a": d.a,
        "b": d.b,
        "beta_roundtrip": predicted_beta(d.q, d.b),
        "rounding": args.rounding,
        "clamped": traj.clamped,
        "trajectory": table,
    }
    _emit_json(doc, args.out)
    return 0


def read_series(path: Path) -> tuple[SurvivalSeries, dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DomainError(f"{path} holds no rows")
    if "t" not in rows[0] or "s" not in rows[0]:
        raise DomainError(f"{path} lacks t and s columns")
    t = np.array([int(r["t"]) for r in rows])
    s = np.array([float(r["s"]) for r in rows])
    se = np.array([float(r["stderr"]) for r in rows]) if "stderr" in rows[0] else None
    info = {k: rows[0][k] for k in ("method", "q", "trajectory_id", "n_walkers") if k in rows[0]}
    return SurvivalSeries(t, s, info, se), info


def cmd_fit(args, argv) -> int:
    series, info = read_series(args.input)
    fitter = fit_power_law if args.model == "power" else fit_exponential
    res = fitter(series, tuple(args.window))
    doc = {"schema": SCHEMA.format("fit"), "input": str(args.input), "source": info, **res.to_dict()}
    _emit_json(doc, args.out)
    return 0


def cmd_compare(args, argv) -> int:
    a, info_a = read_series(args.first)
    b, info_b = read_series(args.second)
    common, ia, ib = np.intersect1d(a.t, b.t, return_indices=True)
    if common.size == 0:
        raise DomainError("the two series share no checkpoints")
    sa, sb = a.s[ia], b.s[ib]
    diff = sa - sb
    denom = np.maximum(np.abs(sa), np.abs(sb))
    rel = np.divide(np.abs(diff), denom, out=np.zeros_like(diff), where=denom > 0)
    doc = {
        "schema": SCHEMA.format("compare"),
        "first": {"path": str(args.first), **info_a},
        "second": {"path": str(args.second), **info_b},
        "n_common": int(common.size),
        "max_abs_diff": float(np.max(np.abs(diff))),
        "max_rel_diff": float(np.max(rel)),
    }
    # binomial coverage when exactly one side is a Monte Carlo estimate
    mc_n = [int(i["n_walkers"]) for i in (info_a, info_b) if "n_walkers" in i]
    if len(mc_n) == 1:
        ref = sb if "n_walkers" in info_a else sa
        sigma = np.sqrt(ref * (1.0 - ref) / mc_n[0])
        within = np.abs(diff) <= args.sigmas * sigma
        doc["sigmas"] = args.sigmas
        doc["frac_within"] = float(np.mean(within))
    doc["table"] = [
        {"t": int(t), "first": float(x), "second": float(y), "diff": float(d), "rel": float(r)}
        for t, x, y, d, r in zip(common, sa, sb, diff, rel)
    ]
    _emit_json(doc, args.out)
    return 0


def cmd_replay(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    old_argv = list(manifest["argv"])
    report = {"schema": SCHEMA.format("replay"), "manifest": str(args.manifest), "outputs": []}
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "replay.csv"
        new_argv = _replace_out(old_argv, str(out))
        here = os.getcwd()
        os.chdir(manifest.get("cwd", here))
        try:
            code = main(new_argv)
        finally:
            os.chdir(here)
        if code != 0:
            raise RuntimeError(f"replayed command exited with {code}")
        digest = sha256(out.read_bytes())
        expected = manifest["outputs"][0]["sha256"]
        report["outputs"].append({"path": manifest["outputs"][0]["path"], "expected": expected,
                                  "replayed": digest, "match": digest == expected})
    report["match"] = all(o["match"] for o in report["outputs"])
    _emit_json(report, args.out)
    return 0 if report["match"] else 3


def _replace_out(argv: list[str], out: str) -> list[str]:
    res, skip = [], False
    for i, a in enumerate(argv):
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        res.append(a)
    return res + ["--out", out]


def _emit_json(doc, out: Path | None) -> None:
    data = json_bytes(doc)
    if out is None:
        sys.stdout.write(data.decode())
    else:
        atomic_write(out, data)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sisyphus-walk", description="Sisyphus random walks with moving traps")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("exact", help="deterministic survival curve")
    _add_common(e)
    e.add_argument("--method", choices=("propagate", "recurrence"), default="propagate")
    e.add_argument("--arithmetic", choices=("auto", "float", "mp"), default="auto")
    e.set_defaults(func=cmd_exact)

    m = sub.add_parser("mc", help="Monte Carlo survival curve")
    _add_common(m)
    m.add_argument("--model", choices=("sisyphus", "ordinary"), default="sisyphus")
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--streams", type=int, default=1)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--sampler", choices=("fast", "naive"), default="fast")
    m.add_argument("--budget", type=float, default=DEFAULT_BUDGET)
    m.set_defaults(func=cmd_mc)

    d = sub.add_parser("design", help="log-trap parameters for a target exponent")
    d.add_argument("--q", type=float, required=True)
    d.add_argument("--beta", type=float, required=True)
    d.add_argument("--rounding", choices=ROUNDING_RULES, default="nearest")
    d.add_argument("--sample-t-max", type=int, default=10**6)
    d.add_argument("--out", type=Path)
    d.set_defaults(func=cmd_design)

    f = sub.add_parser("fit", help="fit a decay law to a survival CSV")
    f.add_argument("--input", type=Path, required=True)
    f.add_argument("--model", choices=("power", "exponential"), required=True)
    f.add_argument("--window", type=float, nargs=2, metavar=("T_LO", "T_HI"), required=True)
    f.add_argument("--out", type=Path)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("compare", help="compare two survival CSVs")
    c.add_argument("first", type=Path)
    c.add_argument("second", type=Path)
    c.add_argument("--sigmas", type=float, default=4.0)
    c.add_argument("--out", type=Path)
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("replay", help="re-run a manifest and verify output digests")
    r.add_argument("manifest", type=Path)
    r.add_argument("--out", type=Path)
    r.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, argv)
    except (UsageError, ValueError, TrajectoryRangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ResourceError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
