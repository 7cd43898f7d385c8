"""Command-line runner: one subcommand per experiment."""

from __future__ import annotations

import argparse
import json
import math
import sys

from .experiments import (
    EXPERIMENT_PARAMS,
    EXPERIMENTS,
    ConfigError,
    EstimatorError,
    ExperimentConfig,
    ExperimentReport,
    analytic_value,
    load_config,
    output_paths,
    report_table,
    run_experiment,
    validate_config,
)
from .gaussian_core import make_covariance
from .kss import expected_zero_count, expected_zero_volume
from .rice import (
    dislocation_density,
    expected_crossings,
    geman_condition,
    localtime_second_moment,
    nodal_length_density,
    second_factorial_moment,
    variance_crossings,
)
from .trigpoly import expected_roots_trig, sinc_limit_variance

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATOR = 0, 2, 3


def _model(inputs):
    kind = inputs.pop("model", "gaussian")
    opts = {k[len("model."):]: inputs.pop(k) for k in list(inputs) if k.startswith("model.")}
    return make_covariance(kind, **opts)


def _eval_crossings(a):
    m = _model(a)
    v = expected_crossings(m.lambda0.value, m.lambda2.value, a.get("y", 0.0), a.get("t", 1.0))
    return v.to_json(), 0.0, "closed form", {}


def _eval_geman(a):
    v = geman_condition(_model(a), a.get("delta"))
    return v.classification, 0.0, "dyadic windows", {"slope": v.slope, "routes": list(v.route_verdicts)}


def _eval_m2(a):
    r = second_factorial_moment(_model(a), a.get("y", 0.0), a.get("t", 1.0))
    verdict = r.verdict.classification if r.verdict is not None else None
    return _num(r.value), r.error_estimate, r.method, {"verdict": verdict}


def _eval_variance(a):
    return _num(variance_crossings(_model(a), a.get("y", 0.0), a.get("t", 1.0))), 1e-6, "M2 + E[N] - E[N]^2", {}


def _eval_localtime(a):
    T = (a.get("width", 1.0), a.get("height", 1.0))
    return localtime_second_moment(_model(a), a.get("u", 0.0), T), 1e-8, "radial quadrature", {}


def _eval_sinc_variance(a):
    r = sinc_limit_variance(a.get("tau_max", 1e4))
    return r.value, r.tail_bound, "chunked Gauss-Legendre", {"centering": r.centering, "candidates": r.candidates}


def _num(v):
    f = float(v)
    return f if math.isfinite(f) else "inf"


EVALUATORS = {
    "expected-crossings": _eval_crossings,
    "geman": _eval_geman,
    "second-factorial-moment": _eval_m2,
    "variance-crossings": _eval_variance,
    "dislocation-density": lambda a: (dislocation_density(a["lambda2"]), 0.0, "closed form", {}),
    "nodal-length-density": lambda a: (nodal_length_density(a["lambda2"]), 0.0, "closed form", {}),
    "localtime-second-moment": _eval_localtime,
    "trig-expected-roots": lambda a: (expected_roots_trig(int(a["N"]), a.get("y", 0.0)), 0.0, "closed form", {}),
    "sinc-limit-variance": _eval_sinc_variance,
    "kss-zero-count": lambda a: (expected_zero_count(int(a["n"]), int(a.get("d", 2))), 0.0, "closed form", {}),
    "kss-zero-volume": lambda a: (
        expected_zero_volume(int(a["n"]), int(a.get("d", 3)), int(a.get("j", 1))), 1e-12, "closed form, two routes", {}
    ),
}


def _parse_inputs(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(item, f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kacrice", description="Analytic level-set statistics checked against Monte Carlo.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for exp in EXPERIMENTS:
        p = sub.add_parser(exp, help=f"run the {exp} experiment")
        p.add_argument("--config", help="TOML config (top-level keys plus a [params] table)")
        p.add_argument("--seed", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--out", help="output directory for CSV and JSON")
        p.add_argument("--workers", type=int)
        p.add_argument("--analytic-only", action="store_true", help="print the analytic value as JSON and exit")
        p.add_argument("--quiet", action="store_true")
        for key, spec in EXPERIMENT_PARAMS[exp].items():
            kw = {"choices": spec.choices} if spec.choices else {}
            p.add_argument(_flag(key), dest=f"param_{key}", type=spec.kind, **kw)
    e = sub.add_parser("eval", help="evaluate an analytic quantity and print a JSON record")
    e.add_argument("evaluator", choices=sorted(EVALUATORS))
    e.add_argument("inputs", nargs="*", help="key=value pairs, e.g. model=sinc y=0.5 t=20")
    t = sub.add_parser("table", help="summarise JSON reports")
    t.add_argument("reports", nargs="+")
    t.add_argument("--csv", action="store_true")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else validate_config({"experiment": args.command})
    if cfg.experiment != args.command:
        raise ConfigError("experiment", f"config is for {cfg.experiment!r}, not {args.command!r}")
    over = {k: getattr(args, k) for k in ("seed", "replicates", "out", "workers")}
    for key in EXPERIMENT_PARAMS[args.command]:
        over[key] = getattr(args, f"param_{key}")
    if over["replicates"] is not None and over["replicates"] < 1:
        raise ConfigError("replicates", "replicates must be ≥ 1")
    return cfg.with_overrides(**over)


def _progress(done: int, total: int) -> None:
    step = max(1, total // 20)
    if done % step == 0 or done == total:
        print(f"\r{done}/{total}", end="" if done < total else "\n", file=sys.stderr, flush=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval":
        try:
            inputs = _parse_inputs(args.inputs)
            record_inputs = dict(inputs)
            value, tol, method, diag = EVALUATORS[args.evaluator](dict(inputs))
        except (ConfigError, KeyError, TypeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (ArithmeticError, ValueError) as exc:
            print(f"estimator error: {exc}", file=sys.stderr)
            return EXIT_ESTIMATOR
        rec = {"evaluator": args.evaluator, "inputs": record_inputs, "value": value,
               "tolerance": tol, "method": method, "diagnostics": diag}
        print(json.dumps(rec, sort_keys=True, default=str))
        return EXIT_OK
    if args.command == "table":
        try:
            reports = []
            for path in args.reports:
                with open(path, encoding="utf-8") as fh:
                    reports.append(ExperimentReport.from_json(fh.read()))
        except (OSError, ValueError, TypeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        sys.stdout.write(report_table(reports, "csv" if args.csv else "text"))
        return EXIT_OK
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.analytic_only:
            print(json.dumps({"experiment": cfg.experiment, "analytic": analytic_value(cfg), "params": cfg.params}))
            return EXIT_OK
        report = run_experiment(cfg, progress=None if args.quiet else _progress)
    except EstimatorError as exc:
        print(f"estimator error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    except (ArithmeticError, ValueError, MemoryError) as exc:
        print(f"estimator error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    sys.stdout.write(report_table([report]))
    csv_path, json_path = output_paths(cfg)
    if not args.quiet:
        print(f"wrote {csv_path} and {json_path}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
