"""Experiment configuration, execution and report files."""

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import experiments


class ConfigError(ValueError):
    """Invalid experiment configuration (usage error)."""


# key -> type; "floats" is a comma separated list, written [a, b, c]
KEY_TYPES = {
    "experiment": str,
    "n": int, "k": int, "p": float,
    "alpha": float, "T": float,
    "grid": int, "nt": int, "dt": float, "dts": "floats", "eps": "floats",
    "paths": int, "ref_paths": int, "ref_factor": int,
    "probes": int, "tests": int,
    "seed": int, "out": str,
    "deltas": "floats", "times": "floats",
    "noise": float, "box": float,
    "scheme": str, "quadrature": str,
}


def _parse_value(key, raw):
    kind = KEY_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "floats":
            body = raw[1:-1] if raw.startswith("[") and raw.endswith("]") else raw
            return [float(v) for v in body.split(",") if v.strip()]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {getattr(kind, '__name__', kind)}") from None
    return raw.strip("\"'")


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "out"

    @classmethod
    def from_text(cls, text):
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in KEY_TYPES:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            values[key] = _parse_value(key, raw)
        return cls.from_dict(values)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    @classmethod
    def from_dict(cls, values):
        values = dict(values)
        for key in values:
            if key not in KEY_TYPES:
                raise ConfigError(f"unknown key {key!r}")
        name = values.pop("experiment", None)
        if name is None:
            raise ConfigError("missing key 'experiment'")
        seed = int(values.pop("seed", 0))
        out = values.pop("out", "out")
        cfg = cls(name, values, seed, out)
        cfg.validate()
        return cfg

    def validate(self):
        if self.experiment not in experiments.REGISTRY:
            raise ConfigError(f"unknown experiment {self.experiment!r}; "
                              f"choose from {', '.join(experiments.REGISTRY)}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        spec = experiments.REGISTRY[self.experiment]
        allowed = set(spec.defaults)
        extra = set(self.params) - allowed
        if extra:
            raise ConfigError(f"keys {sorted(extra)} are not used by experiment {self.experiment!r}")
        try:
            spec.validate(self.resolved())
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def resolved(self):
        """Experiment parameters with defaults filled in."""
        spec = experiments.REGISTRY[self.experiment]
        out = dict(spec.defaults)
        out.update(self.params)
        return out

    def echo(self):
        return {"experiment": self.experiment, "seed": self.seed, **self.resolved()}

    def run_id(self):
        blob = json.dumps(self.echo(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class RunReport:
    config: dict
    run_id: str
    checks: list
    slopes: dict
    series: list
    wall_time: float = 0.0

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def summary(self):
        per_check = {}
        for c in self.checks:
            d = per_check.setdefault(c.name, {"max_value": c.value, "tolerance": c.tolerance,
                                               "relation": c.relation, "pass": True})
            d["max_value"] = max(d["max_value"], c.value)
            d["pass"] = d["pass"] and c.passed
        return {
            "run_id": self.run_id,
            "config": self.config,
            "passed": self.passed,
            "checks": per_check,
            "slopes": self.slopes,
        }


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_outputs(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "checks.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "check_name", "t", "value", "tolerance", "pass"])
        for c in report.checks:
            w.writerow([report.run_id, c.name, _fmt(c.t), _fmt(c.value), _fmt(c.tolerance),
                        int(c.passed)])
    with open(os.path.join(out_dir, "series.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "series", "index", "x", "value"])
        for name, idx, x, v in report.series:
            w.writerow([report.run_id, name, idx, _fmt(x), _fmt(v)])
    # wall time stays out of the files so reruns are byte-identical
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(_jsonable(report.summary()), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run(config, out_dir=None, write=True):
    """Execute an experiment and (optionally) write its report files."""
    if not isinstance(config, ExperimentConfig):
        raise ConfigError("run() expects an ExperimentConfig")
    config.validate()
    spec = experiments.REGISTRY[config.experiment]
    t0 = time.perf_counter()
    result = spec.func(config.resolved(), config.seed)
    report = RunReport(config.echo(), config.run_id(), result.checks, result.slopes,
                       result.series, time.perf_counter() - t0)
    if write:
        write_outputs(report, out_dir if out_dir is not None else config.out)
    return report


def list_experiments():
    """(name, description) pairs in registry order."""
    return [(name, spec.description) for name, spec in experiments.REGISTRY.items()]
