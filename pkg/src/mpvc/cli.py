"""Command-line front end for the vanishing-constraint SQP drivers.

``mpvc solve`` runs one start, ``mpvc grid`` sweeps a grid of starts
through a worker pool, ``mpvc certify`` grades the stationarity of a
given point.  Results serialize to JSON, iteration logs to CSV, truss
models to JSON; all floats use full round-trip precision.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence

import numpy as np

from .extended import ExtendedConfig, run_extended_sqp
from .problems import load_problem
from .sqp import SqpConfig, SqpResult, run_basic_sqp
from .stationarity import certify

EXIT_CODES = {"Solved": 0, "Degenerate": 3, "RestartLimit": 4, "MaxIter": 5}
EXIT_USAGE = 2
EXIT_ERROR = 1

CSV_COLUMNS = ["k", "f", "viol", "delta_N", "N_k", "j_k", "gamma", "rho",
               "sigma_max", "step_norm"]
GRID_CSV_COLUMNS = ["i", "x0_0", "x0_1", "status", "f", "viol", "k_star",
                    "nfev", "ngev", "x_0", "x_1"]
CLUSTER_RADIUS = 1e-3


class UsageError(ValueError):
    """Bad flags, config keys, or value formats; exits with code 2."""


@dataclass
class RunConfig:
    """One resolved invocation: problem, algorithm, start, overrides."""

    problem: str
    algorithm: str = "basic"
    stress_cap: Optional[float] = None
    x0: Optional[List[float]] = None
    grid_values: Optional[List[float]] = None
    overrides: Dict[str, str] = field(default_factory=dict)
    workers: int = 1
    out: Optional[str] = None
    csv_path: Optional[str] = None
    export_model: Optional[str] = None

    def solver_config(self) -> SqpConfig:
        cls = ExtendedConfig if self.algorithm == "extended" else SqpConfig
        cfg = cls()
        for key, raw in self.overrides.items():
            if not hasattr(cfg, key):
                known = ", ".join(f.name for f in fields(cls))
                raise UsageError(f"unknown config key '{key}' (known: {known})")
            current = getattr(cfg, key)
            try:
                if isinstance(current, int) and not isinstance(current, bool):
                    value = int(raw)
                elif isinstance(current, float):
                    value = float(raw)
                else:
                    value = raw
            except ValueError:
                raise UsageError(f"config key '{key}': cannot parse '{raw}'")
            setattr(cfg, key, value)
        try:
            cfg.validate()
        except ValueError as err:
            raise UsageError(str(err))
        return cfg


@dataclass
class RunResult:
    """JSON-friendly summary of one driver run."""

    status: str
    x: List[float]
    f: float
    viol: float
    k_star: int
    n_list: List[int]
    sum_j: int
    nfev: int
    ngev: int
    wall_time: float
    certificate: Optional[dict] = None
    message: str = ""

    @classmethod
    def from_sqp(cls, res: SqpResult, wall_time: float) -> "RunResult":
        cert = res.certificate.as_dict() if res.certificate is not None else None
        return cls(status=res.status, x=[float(v) for v in res.x],
                   f=float(res.f), viol=float(res.viol), k_star=res.k_star,
                   n_list=[int(n) for n in res.n_list],
                   sum_j=int(sum(res.j_list)), nfev=res.nfev, ngev=res.ngev,
                   wall_time=float(wall_time), certificate=cert,
                   message=res.message)

    def as_dict(self) -> dict:
        return {"status": self.status, "x": self.x, "f": self.f,
                "viol": self.viol, "k_star": self.k_star,
                "n_list": self.n_list, "sum_j": self.sum_j,
                "nfev": self.nfev, "ngev": self.ngev,
                "wall_time": self.wall_time, "certificate": self.certificate,
                "message": self.message}

    @classmethod
    def from_dict(cls, data: dict) -> "RunResult":
        return cls(**data)


def parse_assignments(items: Sequence[str]) -> Dict[str, str]:
    """Turn repeated ``key=value`` tokens into a dict, last wins."""
    out: Dict[str, str] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"expected key=value, got '{item}'")
        out[key.strip()] = value.strip()
    return out


def read_config_file(path: str) -> Dict[str, str]:
    """Flat key=value lines; blank lines and # comments ignored."""
    out: Dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            key, sep, value = text.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"{path}:{lineno}: expected key=value")
            out[key.strip()] = value.strip()
    return out


def parse_vector(text: str, flag: str) -> List[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got '{text}'")
    if not values:
        raise UsageError(f"{flag}: empty vector")
    return values


def parse_axis_values(text: str) -> List[float]:
    """Axis value list: comma-separated numbers and inclusive a..b ranges."""
    values: List[float] = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if ".." in tok:
            lo_s, _, hi_s = tok.partition("..")
            try:
                lo, hi = int(lo_s), int(hi_s)
            except ValueError:
                raise UsageError(f"--values: bad range '{tok}'")
            if hi < lo:
                raise UsageError(f"--values: empty range '{tok}'")
            values.extend(float(v) for v in range(lo, hi + 1))
        else:
            try:
                values.append(float(tok))
            except ValueError:
                raise UsageError(f"--values: bad number '{tok}'")
    return values


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_iteration_csv(path: str, records, extended: bool) -> None:
    columns = CSV_COLUMNS + (["correction_dfdk"] if extended else [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for rec in records:
            row = [rec.k, rec.f, rec.viol, rec.delta_N, rec.N_k, rec.j_k,
                   rec.gamma, rec.rho, rec.sigma_max, rec.step_norm]
            if extended:
                row.append(rec.correction_dfdk)
            writer.writerow(_fmt(v) for v in row)


def write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def run_single(cfg: RunConfig) -> RunResult:
    """Execute one driver run and write the requested artifacts."""
    problem, default_start, model = load_problem(cfg.problem, stress_cap=cfg.stress_cap)
    if cfg.export_model is not None:
        if model is None:
            raise UsageError(f"problem '{cfg.problem}' has no exportable model")
        write_json(cfg.export_model, model.as_dict())
    x0 = np.asarray(cfg.x0 if cfg.x0 is not None else default_start, dtype=float)
    if x0.shape != (problem.n,):
        raise UsageError(
            f"x0 has {x0.size} entries, problem '{cfg.problem}' needs {problem.n}")
    solver_cfg = cfg.solver_config()
    records: list = []
    driver = run_extended_sqp if cfg.algorithm == "extended" else run_basic_sqp
    t0 = time.perf_counter()
    res, _ = driver(problem, x0, solver_cfg, record_sink=records.append)
    result = RunResult.from_sqp(res, time.perf_counter() - t0)
    if cfg.csv_path is not None:
        write_iteration_csv(cfg.csv_path, records, cfg.algorithm == "extended")
    if cfg.out is not None:
        write_json(cfg.out, result.as_dict())
    return result


def _grid_worker(payload) -> dict:
    """One grid start; exceptions are recorded, not raised (the batch
    must survive individual failures)."""
    name, stress_cap, algorithm, overrides, x0 = payload
    cfg = RunConfig(problem=name, algorithm=algorithm, stress_cap=stress_cap,
                    x0=list(x0), overrides=dict(overrides))
    try:
        result = run_single(cfg)
        entry = result.as_dict()
    except Exception as err:  # noqa: BLE001 - recorded per contract
        entry = {"status": "Error", "message": f"{type(err).__name__}: {err}"}
    entry["x0"] = [float(v) for v in x0]
    return entry


def run_grid(cfg: RunConfig) -> dict:
    """Sweep the axis-value cross product; aggregate clustered limit
    points and failures, merged in start order regardless of pool size."""
    problem, _, _ = load_problem(cfg.problem, stress_cap=cfg.stress_cap)
    if problem.n != 2:
        raise UsageError(f"grid runs need a 2-variable problem, "
                         f"'{cfg.problem}' has {problem.n}")
    values = cfg.grid_values or []
    starts = [(float(a), float(b)) for a in values for b in values]
    payloads = [(cfg.problem, cfg.stress_cap, cfg.algorithm, cfg.overrides, s)
                for s in starts]
    t0 = time.perf_counter()
    if cfg.workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            entries = list(pool.map(_grid_worker, payloads))
    else:
        entries = [_grid_worker(p) for p in payloads]
    wall = time.perf_counter() - t0

    statuses: Dict[str, int] = {}
    clusters: List[dict] = []
    failures: List[dict] = []
    for entry in entries:
        statuses[entry["status"]] = statuses.get(entry["status"], 0) + 1
        if entry["status"] != "Solved":
            failures.append({"x0": entry["x0"], "status": entry["status"],
                             "message": entry.get("message", "")})
            continue
        x = np.asarray(entry["x"])
        for cluster in clusters:
            if np.linalg.norm(x - np.asarray(cluster["x"])) <= CLUSTER_RADIUS:
                cluster["count"] += 1
                break
        else:
            clusters.append({"x": entry["x"], "f": entry["f"], "count": 1})

    summary = {"problem": cfg.problem, "algorithm": cfg.algorithm,
               "n_runs": len(entries), "statuses": statuses,
               "clusters": clusters, "failures": failures,
               "wall_time": wall}
    if cfg.csv_path is not None:
        with open(cfg.csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(GRID_CSV_COLUMNS)
            for i, entry in enumerate(entries):
                x = entry.get("x", [float("nan"), float("nan")])
                writer.writerow(_fmt(v) for v in [
                    i, entry["x0"][0], entry["x0"][1], entry["status"],
                    entry.get("f", float("nan")), entry.get("viol", float("nan")),
                    entry.get("k_star", 0), entry.get("nfev", 0),
                    entry.get("ngev", 0), x[0], x[1]])
    if cfg.out is not None:
        write_json(cfg.out, summary)
    return summary


def run_certify(cfg: RunConfig, point: List[float], tol: float) -> dict:
    problem, _, _ = load_problem(cfg.problem, stress_cap=cfg.stress_cap)
    x = np.asarray(point, dtype=float)
    if x.shape != (problem.n,):
        raise UsageError(f"--x has {x.size} entries, problem '{cfg.problem}' "
                         f"needs {problem.n}")
    cert = certify(problem, x, tol=tol)
    payload = cert.as_dict()
    if cfg.out is not None:
        write_json(cfg.out, payload)
    return payload


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpvc",
        description="SQP drivers for programs with vanishing constraints")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--problem", required=True,
                       help="academic | academic-constrained | tenbar | cantilever")
        p.add_argument("--stress-cap", type=float, default=None,
                       help="stress bound for the cantilever model")
        p.add_argument("--algorithm", choices=("basic", "extended"),
                       default="basic")
        p.add_argument("--config", default=None,
                       help="flat key=value file with solver settings")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one solver setting (repeatable)")
        p.add_argument("--out", default=None, help="result JSON path")

    p_solve = sub.add_parser("solve", help="run one start")
    common(p_solve)
    p_solve.add_argument("--x0", default=None,
                         help="comma-separated start (default: library start)")
    p_solve.add_argument("--csv", default=None, help="iteration log CSV path")
    p_solve.add_argument("--export-model", default=None,
                         help="write the truss model as JSON")

    p_grid = sub.add_parser("grid", help="sweep a grid of starts")
    common(p_grid)
    p_grid.add_argument("--values", required=True,
                        help="axis values, e.g. '-5..10,20' (both axes)")
    p_grid.add_argument("--workers", type=int, default=1)
    p_grid.add_argument("--csv", default=None, help="per-run CSV path")

    p_cert = sub.add_parser("certify", help="grade stationarity of a point")
    common(p_cert)
    p_cert.add_argument("--x", required=True, help="comma-separated point")
    p_cert.add_argument("--tol", type=float, default=1e-6)
    return parser


def _run_config(args) -> RunConfig:
    overrides: Dict[str, str] = {}
    if args.config is not None:
        overrides.update(read_config_file(args.config))
    overrides.update(parse_assignments(args.set))
    return RunConfig(problem=args.problem, algorithm=args.algorithm,
                     stress_cap=args.stress_cap,
                     overrides=overrides, out=args.out,
                     csv_path=getattr(args, "csv", None),
                     export_model=getattr(args, "export_model", None),
                     workers=getattr(args, "workers", 1))


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _run_config(args)
        if args.command == "solve":
            if args.x0 is not None:
                cfg.x0 = parse_vector(args.x0, "--x0")
            result = run_single(cfg)
            print(f"{result.status}: f = {result.f!r}, viol = {result.viol:.3e}, "
                  f"k* = {result.k_star}")
            if result.certificate is not None:
                print(f"certificate: {result.certificate['level']}")
            return EXIT_CODES.get(result.status, EXIT_ERROR)
        if args.command == "grid":
            cfg.grid_values = parse_axis_values(args.values)
            summary = run_grid(cfg)
            print(f"{summary['n_runs']} runs: {summary['statuses']}")
            for cluster in summary["clusters"]:
                x = ", ".join(repr(v) for v in cluster["x"])
                print(f"  {cluster['count']:4d} -> ({x})  f = {cluster['f']!r}")
            return 0
        cert = run_certify(cfg, parse_vector(args.x, "--x"), args.tol)
        print(f"level: {cert['level']}  (feasibility {cert['feasibility']:.3e})")
        return 0
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as err:
        print(f"error: {err.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # noqa: BLE001 - single CLI boundary
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
