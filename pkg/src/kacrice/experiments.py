"""Experiment registry, configuration files, Monte Carlo runner and reports."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import special

from . import __version__
from .counting import count_crossings_1d, count_joint_zeros_2d, level_curve_length_2d, occupation_local_time
from .gaussian_core import make_covariance
from .kss import count_zeros_circle, expected_zero_count, expected_zero_volume, nodal_length_sphere, sample_kss
from .rice import dislocation_density, expected_crossings, localtime_second_moment, nodal_length_density, second_factorial_moment
from .rng import derive_seed
from .sampler import RandomWaveSpec, simulate_isotropic_2d, simulate_stationary_1d
from .trigpoly import count_roots_trig, expected_roots_trig, sample_trig_poly, sinc_limit_variance

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str | None, message: str):
        super().__init__(message)
        self.key = key


class EstimatorError(RuntimeError):
    """A replicate failed; carries its index and derived seed."""

    def __init__(self, experiment: str, replicate: int, seed: int, cause: BaseException):
        super().__init__(f"{experiment}: replicate {replicate} (seed {seed}) failed: {cause}")
        self.experiment = experiment
        self.replicate = replicate
        self.seed = seed
        self.cause = cause


# ---------------------------------------------------------------------------
# parameter declarations


@dataclass(frozen=True)
class Param:
    kind: type
    default: Any
    low: float | None = None
    high: float | None = None
    choices: tuple | None = None
    open_low: bool = False

    def coerce(self, key: str, value):
        if self.kind is bool or isinstance(value, bool):
            if self.kind is not bool or not isinstance(value, bool):
                noun = {int: "an integer", float: "a number", str: "a string", bool: "a boolean"}[self.kind]
                raise ConfigError(key, f"{key} must be {noun}")
            return value
        if self.kind is int:
            if not isinstance(value, int):
                raise ConfigError(key, f"{key} must be an integer")
        elif self.kind is float:
            if not isinstance(value, (int, float)):
                raise ConfigError(key, f"{key} must be a number")
            value = float(value)
            if not math.isfinite(value):
                raise ConfigError(key, f"{key} must be finite")
        elif self.kind is str and not isinstance(value, str):
            raise ConfigError(key, f"{key} must be a string")
        if self.choices is not None and value not in self.choices:
            raise ConfigError(key, f"{key} must be one of {', '.join(map(str, self.choices))}")
        if self.low is not None and (value < self.low or (self.open_low and value == self.low)):
            op = ">" if self.open_low else "≥"
            raise ConfigError(key, f"{key} must be {op} {self.low:g}")
        if self.high is not None and value > self.high:
            raise ConfigError(key, f"{key} must be ≤ {self.high:g}")
        return value


def _positive(default):
    return Param(float, default, 0.0, open_low=True)


WAVE_PARAMS = {
    "k0": _positive(math.sqrt(2.0)),
    "wavelengths": Param(float, 20.0, 1.0, 200.0),
    "points_per_wavelength": Param(int, 32, 8, 256),
    "waves": Param(int, 256, 32, 8192),
}

EXPERIMENT_PARAMS: dict[str, dict[str, Param]] = {
    "rice1d": {
        "model": Param(str, "gaussian", choices=("gaussian", "sinc")),
        "scale": _positive(1.0),
        "y": Param(float, 0.0, -10.0, 10.0),
        "t": Param(float, 1.0, 0.0, 1e4, open_low=True),
        "h": Param(float, 5e-4, 0.0, 1.0, open_low=True),
        "statistic": Param(str, "mean", choices=("mean", "factorial2")),
    },
    "trig": {
        "N": Param(int, 1, 1, 100000),
        "y": Param(float, 0.0, -10.0, 10.0),
        "statistic": Param(str, "mean", choices=("mean", "variance")),
    },
    "kss-count": {
        "n": Param(int, 4, 1, 500),
    },
    "kss-volume": {
        "n": Param(int, 1, 1, 60),
        "mesh_level": Param(int, 6, 5, 8),
    },
    "dislocations": dict(WAVE_PARAMS),
    "nodal-length": dict(WAVE_PARAMS),
    "localtime": {
        "alpha": Param(float, 0.4, 0.0, 1.0, open_low=True),
        "scale": _positive(0.25),
        "h": Param(float, 1.0 / 256, 0.0, 0.25, open_low=True),
        "level": Param(float, 0.0, -10.0, 10.0),
        "delta": Param(float, 0.02, 0.0, 1.0, open_low=True),
        "statistic": Param(str, "second_moment", choices=("mean", "second_moment")),
    },
}

EXPERIMENTS = tuple(sorted(EXPERIMENT_PARAMS))

TOP_PARAMS = {
    "seed": Param(int, 0, 0, 2**64 - 1),
    "replicates": Param(int, 100, 1, 10**7),
    "out": Param(str, "runs"),
    "workers": Param(int, 1, 1, 256),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    replicates: int = 100
    out: str = "runs"
    workers: int = 1
    params: dict = field(default_factory=dict)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        top = {k: v for k, v in kw.items() if k in TOP_PARAMS and v is not None}
        par = {k: v for k, v in kw.items() if k not in TOP_PARAMS and v is not None}
        d = self.to_dict()
        d.update(top)
        d["params"] = {**d["params"], **par}
        return validate_config(d)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "replicates": self.replicates,
            "out": self.out,
            "workers": self.workers,
            "params": dict(self.params),
        }


def validate_config(doc: dict) -> ExperimentConfig:
    if "experiment" not in doc:
        raise ConfigError("experiment", "missing required key 'experiment'")
    exp = doc["experiment"]
    if exp not in EXPERIMENT_PARAMS:
        raise ConfigError("experiment", f"unknown experiment {exp!r}; expected one of {', '.join(EXPERIMENTS)}")
    for key in doc:
        if key not in TOP_PARAMS and key not in ("experiment", "params"):
            raise ConfigError(key, f"unknown key {key!r}")
    top = {}
    for key, spec in TOP_PARAMS.items():
        if key == "replicates" and key in doc:
            v = doc[key]
            if isinstance(v, int) and not isinstance(v, bool) and v < 1:
                raise ConfigError(key, "replicates must be ≥ 1")
        top[key] = spec.coerce(key, doc[key]) if key in doc else spec.default
    raw = doc.get("params", {})
    if not isinstance(raw, dict):
        raise ConfigError("params", "params must be a table")
    declared = EXPERIMENT_PARAMS[exp]
    params = {}
    for key, value in raw.items():
        if key not in declared:
            raise ConfigError(f"params.{key}", f"unknown key 'params.{key}' for experiment {exp}")
        params[key] = declared[key].coerce(f"params.{key}", value)
    for key, spec in declared.items():
        params.setdefault(key, spec.default)
    return ExperimentConfig(exp, params=dict(sorted(params.items())), **top)


def parse_config(text: str | bytes) -> ExperimentConfig:
    """Parse and validate a TOML document with top-level keys and a [params] table."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(None, f"config is not UTF-8: {exc}") from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(None, f"malformed config: {exc}") from None
    return validate_config(doc)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(None, f"cannot read config {path}: {exc}") from None


_TOML_ESCAPES = {'"': '\\"', "\\": "\\\\", "\b": "\\b", "\t": "\\t", "\n": "\\n", "\f": "\\f", "\r": "\\r"}


def _toml_char(ch: str) -> str:
    if ch in _TOML_ESCAPES:
        return _TOML_ESCAPES[ch]
    if ord(ch) < 0x20 or ord(ch) == 0x7F:
        return f"\\u{ord(ch):04X}"
    return ch


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + "".join(_toml_char(ch) for ch in v) + '"'
    raise TypeError(f"cannot serialise {type(v).__name__}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical TOML text; parse_config(serialize_config(c)) == c."""
    lines = [f"experiment = {_toml_value(cfg.experiment)}"]
    for key in TOP_PARAMS:
        lines.append(f"{key} = {_toml_value(getattr(cfg, key))}")
    lines.append("")
    lines.append("[params]")
    for key in sorted(cfg.params):
        lines.append(f"{key} = {_toml_value(cfg.params[key])}")
    return "\n".join(lines) + "\n"


def normalize_config_text(text: str) -> str:
    return serialize_config(parse_config(text))


# ---------------------------------------------------------------------------
# registry: one analytic evaluator and one estimator per experiment


@dataclass(frozen=True)
class Experiment:
    name: str
    estimator: str
    analytic: Callable[[dict], float]
    replicate: Callable[[dict, int], float]
    summarize: str = "mean"  # or "variance_per_N"


def _rice_model(p):
    key = "scale" if p["model"] == "gaussian" else "bandwidth"
    return make_covariance(p["model"], **{key: p["scale"]})


def _rice_analytic(p):
    model = _rice_model(p)
    if p["statistic"] == "factorial2":
        return float(second_factorial_moment(model, p["y"], p["t"]).value)
    return float(expected_crossings(model.lambda0.value, model.lambda2.value, p["y"], p["t"]))


def _rice_replicate(p, seed):
    model = _rice_model(p)
    n = int(round(p["t"] / p["h"])) + 1
    s = simulate_stationary_1d(model, n, p["t"] / (n - 1), seed)
    c = count_crossings_1d(s, p["y"], refine=True).count
    return float(c * (c - 1)) if p["statistic"] == "factorial2" else float(c)


def _trig_analytic(p):
    if p["statistic"] == "variance":
        return sinc_limit_variance().value
    return expected_roots_trig(p["N"], p["y"])


def _trig_replicate(p, seed):
    return float(count_roots_trig(sample_trig_poly(p["N"], seed), p["y"]))


def _wave_grid(p):
    wavelength = 2 * math.pi / p["k0"]
    h = wavelength / p["points_per_wavelength"]
    n = int(round(p["wavelengths"] * p["points_per_wavelength"])) + 1
    return n, h, ((n - 1) * h) ** 2


def _wave_fields(p, seed, count):
    spec = RandomWaveSpec(p["k0"], p["waves"])
    n, h, area = _wave_grid(p)
    fields = [simulate_isotropic_2d(spec, (n, n), h, derive_seed(seed, i, "waves")) for i in range(count)]
    return fields, area


def _dislocation_replicate(p, seed):
    (xi, eta), area = _wave_fields(p, seed, 2)
    return count_joint_zeros_2d(xi, eta) / area


def _nodal_replicate(p, seed):
    (x,), area = _wave_fields(p, seed, 1)
    return level_curve_length_2d(x, 0.0).length / area


def _localtime_model(p):
    return make_covariance("fractional", alpha=p["alpha"], scale=p["scale"])


def localtime_grid(h: float) -> tuple[int, tuple[float, float]]:
    """Cell-centre grid covering [0, 1)^2: n points per side and the origin."""
    n = int(round(1.0 / h))
    return n, (h / 2, h / 2)


def _localtime_analytic(p):
    u, d = p["level"], p["delta"]
    if p["statistic"] == "mean":
        return float((special.ndtr(u + d) - special.ndtr(u - d)) / (2 * d))
    return localtime_second_moment(_localtime_model(p), u, (1.0, 1.0))


def _localtime_replicate(p, seed):
    n, origin = localtime_grid(p["h"])
    s = simulate_isotropic_2d(_localtime_model(p), (n, n), p["h"], seed, origin=origin)
    eta = occupation_local_time(s, p["level"], p["delta"], region=(0.0, 1.0, 0.0, 1.0)).value
    return eta if p["statistic"] == "mean" else eta * eta


REGISTRY: dict[str, Experiment] = {
    "rice1d": Experiment("rice1d", "refined-crossing-count", _rice_analytic, _rice_replicate),
    "trig": Experiment("trig", "exact-root-count", _trig_analytic, _trig_replicate),
    "kss-count": Experiment(
        "kss-count", "circle-zero-count",
        lambda p: expected_zero_count(p["n"], 2),
        lambda p, s: float(count_zeros_circle(sample_kss(p["n"], 2, 1, s))),
    ),
    "kss-volume": Experiment(
        "kss-volume", "icosphere-nodal-length",
        lambda p: expected_zero_volume(p["n"], 3, 1),
        lambda p, s: nodal_length_sphere(sample_kss(p["n"], 3, 1, s), p["mesh_level"]),
    ),
    "dislocations": Experiment(
        "dislocations", "joint-zeros-per-area",
        lambda p: dislocation_density(p["k0"] ** 2 / 2), _dislocation_replicate,
    ),
    "nodal-length": Experiment(
        "nodal-length", "level-curve-length-per-area",
        lambda p: nodal_length_density(p["k0"] ** 2 / 2), _nodal_replicate,
    ),
    "localtime": Experiment("localtime", "occupation-window", _localtime_analytic, _localtime_replicate),
}


def _summary_mode(cfg: ExperimentConfig) -> str:
    if cfg.experiment == "trig" and cfg.params["statistic"] == "variance":
        return "variance_per_N"
    return "mean"


# ---------------------------------------------------------------------------
# running


@dataclass(frozen=True)
class ExperimentReport:
    experiment: str
    estimator: str
    mc_mean: float
    mc_se: float
    analytic_value: float
    z_score: float
    replicates: int
    wall_time: float
    seed: int
    version: str
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls(**json.loads(text))


def z_score(mean: float, se: float, analytic: float) -> float:
    if se > 0:
        return (mean - analytic) / se
    return 0.0 if mean == analytic else math.copysign(math.inf, mean - analytic)


def summarize(values: np.ndarray, mode: str = "mean", N: int = 1) -> tuple[float, float]:
    """Point estimate and standard error of the replicate values."""
    v = np.asarray(values, dtype=float)
    R = v.size
    if mode == "mean":
        se = float(v.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
        return float(v.mean()), se
    # sample variance divided by N, with the large-sample standard error
    c = v - v.mean()
    s2 = float(np.sum(c * c) / (R - 1)) if R > 1 else 0.0
    m4 = float(np.mean(c**4))
    se = math.sqrt(max(m4 - s2 * s2, 0.0) / R) if R > 1 else 0.0
    return s2 / N, se / N


def replicate_values(cfg: ExperimentConfig, progress: Callable[[int, int], None] | None = None):
    exp = REGISTRY[cfg.experiment]
    seeds = [derive_seed(cfg.seed, i, cfg.experiment) for i in range(cfg.replicates)]

    def one(i):
        try:
            return exp.replicate(cfg.params, seeds[i])
        except Exception as exc:  # record which replicate failed
            raise EstimatorError(cfg.experiment, i, seeds[i], exc) from exc

    values = np.empty(cfg.replicates)
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            for i, v in enumerate(pool.map(one, range(cfg.replicates))):
                values[i] = v
                if progress:
                    progress(i + 1, cfg.replicates)
    else:
        for i in range(cfg.replicates):
            values[i] = one(i)
            if progress:
                progress(i + 1, cfg.replicates)
    return seeds, values


def _atomic_write(path: str, data: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


CSV_HEADER = ("experiment", "estimator", "level", "param", "replicate", "seed", "value")


def _param_label(p: dict) -> str:
    return ";".join(f"{k}={p[k]}" for k in sorted(p) if k not in ("y", "level"))


def replicate_csv(cfg: ExperimentConfig, seeds, values) -> str:
    exp = REGISTRY[cfg.experiment]
    level = cfg.params.get("y", cfg.params.get("level", 0.0))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    label = _param_label(cfg.params)
    for i, (s, v) in enumerate(zip(seeds, values)):
        w.writerow((cfg.experiment, exp.estimator, repr(float(level)), label, i, s, repr(float(v))))
    return buf.getvalue()


def output_paths(cfg: ExperimentConfig) -> tuple[str, str]:
    return (os.path.join(cfg.out, f"{cfg.experiment}.csv"), os.path.join(cfg.out, f"{cfg.experiment}.json"))


def run_experiment(cfg: ExperimentConfig, write: bool = True, progress=None) -> ExperimentReport:
    """Run all replicates, compare against the analytic value, write CSV + JSON."""
    exp = REGISTRY[cfg.experiment]
    t0 = time.perf_counter()
    analytic = float(exp.analytic(cfg.params))
    seeds, values = replicate_values(cfg, progress)
    mode = _summary_mode(cfg)
    mean, se = summarize(values, mode, cfg.params.get("N", 1))
    report = ExperimentReport(
        cfg.experiment, exp.estimator, mean, se, analytic, z_score(mean, se, analytic),
        cfg.replicates, time.perf_counter() - t0, cfg.seed, f"kacrice-{__version__}", dict(cfg.params),
    )
    if write:
        csv_path, json_path = output_paths(cfg)
        _atomic_write(csv_path, replicate_csv(cfg, seeds, values))
        _atomic_write(json_path, report.to_json())
    return report


def analytic_value(cfg: ExperimentConfig) -> float:
    return float(REGISTRY[cfg.experiment].analytic(cfg.params))


# ---------------------------------------------------------------------------
# tables

TABLE_COLUMNS = ("experiment", "analytic", "mc", "se", "z", "time")


def _table_rows(reports):
    rows = []
    for r in sorted(reports, key=lambda r: r.experiment):
        rows.append((r.experiment, r.analytic_value, r.mc_mean, r.mc_se, r.z_score, r.wall_time))
    return rows


def report_table(reports, fmt: str = "text") -> str:
    """Summary table, ordered by experiment id (stable for ties)."""
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    rows = _table_rows(reports)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for row in rows:
            w.writerow((row[0],) + tuple(repr(float(x)) for x in row[1:]))
        return buf.getvalue()
    if fmt != "text":
        raise ValueError("fmt must be 'text' or 'csv'")
    cells = [TABLE_COLUMNS] + [
        (row[0], f"{row[1]:.6g}", f"{row[2]:.6g}", f"{row[3]:.3g}", f"{row[4]:+.2f}", f"{row[5]:.1f}s") for row in rows
    ]
    widths = [max(len(c[i]) for c in cells) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for k, c in enumerate(cells):
        parts = [c[0].ljust(widths[0])] + [c[i].rjust(widths[i]) for i in range(1, len(c))]
        lines.append("  ".join(parts).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def parse_table_csv(text: str) -> list[tuple]:
    rows = list(csv.reader(io.StringIO(text)))
    if tuple(rows[0]) != TABLE_COLUMNS:
        raise ValueError("unexpected header")
    return [(r[0],) + tuple(float(x) for x in r[1:]) for r in rows[1:]]
