"""Command-line interface: match, propensity, diagnose, feasible, simulate.

Exit codes are part of the contract: 0 means success (a match exists /
the run completed), 2 means the informative negative outcome (no exact
match exists / constraints infeasible), and 1 means a usage, input, or
validation error. Batch scripts can therefore distinguish "no solution"
from crashes.

Every output directory receives exactly one ``manifest.json`` recording
the tool version, subcommand, resolved configuration, input digests, and
timestamp. All outputs are plain CSV/JSON.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .data import Covariate, CovariateSchema, encode, read_csv
from .diagnostics import balance_table, weight_plot_rows
from .errors import IpdMatchError
from .inference import estimate_response
from .lp import LpFeasibilityProblem, is_feasible
from .matching import CONSTRAINED, UNCONSTRAINED, MatchSpec, build_qp, match
from .propensity import fit_logistic, pooled_weights
from .simulation import SimulationConfig, run_study

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_SOLUTION = 2


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2; this contract needs exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _jsonable(obj):
    """Recursively replace non-finite floats with None for strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, subcommand: str, config: dict, inputs: list[str]) -> None:
    _write_json(
        out / "manifest.json",
        {
            "tool": "ipdmatch",
            "version": __version__,
            "subcommand": subcommand,
            "timestamp_utc": datetime.now(timezone.utc).isoformat(),
            "inputs": {p: _sha256(p) for p in inputs},
            "configuration": config,
        },
    )


def _load_schema(path: str) -> dict:
    """Parse the schema sidecar JSON; raises ValueError naming bad fields."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if "covariates" not in raw or not isinstance(raw["covariates"], list):
        raise ValueError(f"{path}: schema needs a 'covariates' list")
    covs = []
    for entry in raw["covariates"]:
        name = entry.get("name")
        kind = entry.get("kind")
        if not name or not kind:
            raise ValueError(f"{path}: each covariate needs 'name' and 'kind'")
        levels = tuple(entry.get("levels", ()))
        if kind == "categorical" and not levels:
            raise ValueError(f"{path}: categorical column {name!r} needs 'levels'")
        covs.append(Covariate(name=name, kind=kind, levels=levels))
    if "study_col" not in raw:
        raise ValueError(f"{path}: schema needs 'study_col'")
    return {
        "schema": CovariateSchema(tuple(covs)),
        "study_col": raw["study_col"],
        "study0": raw.get("study0"),
        "study1": raw.get("study1"),
        "response_col": raw.get("response_col"),
    }


def _read_table(args):
    sidecar = _load_schema(args.schema)
    return read_csv(
        args.csv,
        schema=sidecar["schema"],
        study_col=args.study_col or sidecar["study_col"],
        study0=args.study0 or sidecar["study0"],
        study1=args.study1 or sidecar["study1"],
        response_col=args.response_col or sidecar["response_col"],
    )


def _add_data_args(p) -> None:
    p.add_argument("--csv", required=True, help="input dataset (UTF-8 CSV with header)")
    p.add_argument("--schema", required=True, help="schema sidecar JSON")
    p.add_argument("--study-col", help="override the sidecar's study column")
    p.add_argument("--study0", help="label mapped to study 0")
    p.add_argument("--study1", help="label mapped to study 1")
    p.add_argument("--response-col", help="override the sidecar's response column")


def _weights_csv_rows(solution):
    rows = [["row_index", "study", "weight"]]
    rows.extend(list(t) for t in solution.weight_rows())
    return rows


def cmd_match(args) -> int:
    table = _read_table(args)
    dm = encode(table)
    spec = MatchSpec(mode=args.mode, max_weight=args.max_weight)
    sol = match(dm, spec)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = balance_table(table, dm, {args.mode: sol})
    _write_json(
        out / "balance.json",
        {"match": sol.to_json_dict(), "balance": report.to_json_dict()},
    )
    if sol.matched:
        _write_csv(out / "weights.csv", _weights_csv_rows(sol))
    _write_manifest(
        out,
        "match",
        {"mode": args.mode, "max_weight": args.max_weight, "csv": args.csv},
        [args.csv, args.schema],
    )
    if not sol.matched:
        print("no exact match exists for this dataset", file=sys.stderr)
        return EXIT_NO_SOLUTION
    return EXIT_OK


def cmd_feasible(args) -> int:
    table = _read_table(args)
    dm = encode(table)
    problem, _ = build_qp(dm, MatchSpec(mode=UNCONSTRAINED))
    res = is_feasible(LpFeasibilityProblem(problem.eq_A, problem.eq_c))
    if res.feasible and args.witness:
        rows = [["index", "weight"]] + [
            [i, float(w)] for i, w in enumerate(res.witness)
        ]
        _write_csv(Path(args.witness), rows)
    print(
        "feasible" if res.feasible else "infeasible",
        f"(phase-1 objective {res.phase1_objective:.3e})",
        file=sys.stderr,
    )
    return EXIT_OK if res.feasible else EXIT_NO_SOLUTION


def cmd_propensity(args) -> int:
    table = _read_table(args)
    dm = encode(table)
    model = fit_logistic(dm)
    if args.nu in ("observed", "half"):
        nu = args.nu
    else:
        nu0 = float(args.nu)
        nu = (nu0, 1.0 - nu0)
    weights = pooled_weights(model, nu=nu, truncate_quantile=args.truncate_quantile)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    per_patient = sorted(
        [
            [int(r), 0, float(p), float(w)]
            for r, p, w in zip(model.rows0, model.p_hat[: model.n0], weights.w0)
        ]
        + [
            [int(r), 1, float(p), float(w)]
            for r, p, w in zip(model.rows1, model.p_hat[model.n0 :], weights.w1)
        ]
    )
    _write_json(
        out / "propensity.json",
        {
            "coefficients": dict(
                zip(model.column_names, map(float, model.coefficients))
            ),
            "dropped_reference_levels": model.dropped_levels,
            "converged": model.converged,
            "iterations": model.iterations,
            "max_abs_linear_predictor": model.max_abs_linear_predictor,
            "separation": model.separation,
            "weights": weights.to_json_dict(),
            "per_patient": [
                {"row_index": r, "study": s, "p_hat": p, "weight": w}
                for r, s, p, w in per_patient
            ],
        },
    )
    _write_manifest(
        out,
        "propensity",
        {"nu": args.nu, "truncate_quantile": args.truncate_quantile, "csv": args.csv},
        [args.csv, args.schema],
    )
    return EXIT_OK


def cmd_diagnose(args) -> int:
    table = _read_table(args)
    dm = encode(table)
    solutions = {
        "unconstrained": match(dm, MatchSpec(mode=UNCONSTRAINED)),
        "constrained": match(dm, MatchSpec(mode=CONSTRAINED)),
        "propensity": pooled_weights(fit_logistic(dm), nu=args.nu),
    }
    report = balance_table(table, dm, solutions)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"balance": report.to_json_dict()}
    if table.response is not None:
        responses = {}
        for name, sol in solutions.items():
            w0 = getattr(sol, "w0", None)
            if w0 is None:
                responses[name] = None
                continue
            est = estimate_response(table, sol.w0, sol.w1, ci_level=args.ci_level)
            responses[name] = est.to_json_dict()
        payload["response"] = responses
    _write_json(out / "balance.json", payload)
    _write_csv(out / "balance.csv", report.to_csv_rows())
    if args.plot_data:
        _write_csv(out / "weights_per100.csv", weight_plot_rows(solutions))
    _write_manifest(
        out,
        "diagnose",
        {"nu": args.nu, "ci_level": args.ci_level, "csv": args.csv},
        [args.csv, args.schema],
    )
    return EXIT_OK


def _load_sim_config(args) -> SimulationConfig:
    overrides: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in SimulationConfig.__dataclass_fields__.values()}
        for key, val in raw.items():
            if key not in known:
                raise ValueError(f"{args.config}: unknown config field {key!r}")
            if isinstance(val, list):
                val = tuple(val)
            if key == "cut_probabilities":
                val = {k: tuple(v) for k, v in val.items()}
            overrides[key] = val
    if args.reps is not None:
        overrides["replications"] = args.reps
    overrides["seed"] = args.seed
    try:
        return SimulationConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"invalid simulation configuration: {exc}") from exc


def _ess_csv_rows(summary) -> list[list]:
    rows = [["method", "study", "count", "na", "min", "q1", "median", "mean", "q3", "max", "sd"]]
    for m, (a, b) in summary.ess.items():
        for study, s in (("A", a), ("B", b)):
            rows.append(
                [m, study, s.count, s.na_count, s.minimum, s.q1, s.median, s.mean, s.q3, s.maximum, s.sd]
            )
    return rows


def _dist_csv_rows(dists: dict) -> list[list]:
    rows = [["method", "count", "na", "min", "q1", "median", "mean", "q3", "max", "sd"]]
    for m, s in dists.items():
        rows.append(
            [m, s.count, s.na_count, s.minimum, s.q1, s.median, s.mean, s.q3, s.maximum, s.sd]
        )
    return rows


def cmd_simulate(args) -> int:
    cfg = _load_sim_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(done: int) -> None:
        print(f"completed {done}/{cfg.replications} replications", file=sys.stderr)

    summary = run_study(cfg, threads=args.threads, progress=progress)

    _write_json(out / "summary.json", summary.to_json_dict())
    _write_csv(out / "ess.csv", _ess_csv_rows(summary))
    _write_csv(out / "maxweights.csv", _dist_csv_rows(summary.max_weight))
    _write_csv(out / "ydiff.csv", _dist_csv_rows(summary.ydiff))
    if args.per_rep_log:
        keys = list(summary.records[0].keys())
        rows = [keys] + [[rec[k] for k in keys] for rec in summary.records]
        _write_csv(out / "replications.csv", rows)
    _write_manifest(
        out,
        "simulate",
        {
            "config": cfg.to_json_dict(),
            "threads": args.threads,
            "config_file": args.config,
        },
        [args.config] if args.config else [],
    )
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="ipdmatch", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ipdmatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("match", help="compute exact-matching weights")
    _add_data_args(p)
    p.add_argument("--mode", choices=[UNCONSTRAINED, CONSTRAINED], default=UNCONSTRAINED)
    p.add_argument("--max-weight", type=float, default=None, help="cap single weights")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("feasible", help="check whether exact-matching weights exist")
    _add_data_args(p)
    p.add_argument("--witness", help="write a feasible weighting to this CSV")
    p.set_defaults(func=cmd_feasible)

    p = sub.add_parser("propensity", help="fit propensity scores and pooled weights")
    _add_data_args(p)
    p.add_argument("--nu", default="observed", help="'observed', 'half', or nu0 as a number")
    p.add_argument("--truncate-quantile", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_propensity)

    p = sub.add_parser("diagnose", help="balance table across all methods")
    _add_data_args(p)
    p.add_argument("--nu", default="observed")
    p.add_argument("--ci-level", type=float, default=0.95)
    p.add_argument("--plot-data", action="store_true", help="export per-patient weight data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", help="run the replication benchmark")
    p.add_argument("--config", help="JSON file mirroring SimulationConfig")
    p.add_argument("--reps", type=int, default=None, help="number of replications")
    p.add_argument("--seed", type=int, required=True, help="master seed (required)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--per-rep-log", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (IpdMatchError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"ipdmatch {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
