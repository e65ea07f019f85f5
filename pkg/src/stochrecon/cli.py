"""Command line interface: ``run <config>`` and ``report <dir>``.

Configurations are YAML documents with a schema version; unknown fields
are rejected.  Exit codes: 0 success, 1 other failure (including a report
without metrics), 2 validation error, 3 capability error.
"""
import argparse
import csv
import glob
import json
import math
import os
import sys

import numpy as np
import yaml

from .errors import CapabilityError, Error, ValidationError
from .experiments import KINDS, SCHEMA_VERSION, config_hash, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_VALIDATION, EXIT_CAPABILITY = 0, 1, 2, 3

_NUM = (int, float)
_LIST = (list,)
_DICT = (dict,)

COMMON = {"version": (int,), "kind": (str,), "seed": (int,), "paths": (int,),
          "workers": (int,), "output": (str,), "d": (int,), "scaling": _LIST, "p": _NUM}

KIND_FIELDS = {
    "coherence-fit": {"grid": _DICT, "germ": _DICT, "psi": _DICT, "base_point": _LIST,
                      "eps": _LIST, "distances": _LIST, "mode": (str,)},
    "reconstruction-rate": {"grid": _DICT, "germ": _DICT, "psi": _DICT, "basis": _DICT,
                            "levels": _DICT, "lambdas": _LIST, "points": _LIST,
                            "variant": (str,), "conditional": (bool,),
                            "covariance_pairs": _LIST, "pair_gap": _NUM},
    "sewing-equivalence": {"grid": _DICT, "basis": _DICT, "psi": _DICT, "levels": _DICT,
                           "sew_min": (int,), "germ": _DICT},
    "walsh-oracle": {"grid": _DICT, "germ": _DICT, "psi": _DICT, "basis": _DICT,
                     "levels": _DICT},
    "bdg": {"Ns": _LIST, "families": _LIST, "ps": _LIST},
    "kolmogorov": {"basis": _DICT, "alpha": _NUM, "box": _DICT, "n_max": _LIST},
    "lemma1": {"basis": _DICT, "psi": _DICT, "levels": _DICT, "lambda": _NUM},
    "homogeneity": {"lambdas": _LIST, "covariance": (str,), "cells_per_lambda": (int,)},
}

REQUIRED = {
    "coherence-fit": ("grid", "germ", "psi", "base_point", "eps", "distances"),
    "reconstruction-rate": ("grid", "germ", "psi", "basis", "levels", "lambdas", "points"),
    "sewing-equivalence": ("grid", "basis", "psi", "levels"),
    "walsh-oracle": ("grid", "germ", "psi", "basis", "levels"),
    "bdg": (),
    "kolmogorov": ("basis",),
    "lemma1": ("basis", "psi", "levels"),
    "homogeneity": ("lambdas",),
}

SUB_FIELDS = {
    "grid": {"lo", "hi", "level"},
    "basis": {"family", "moments"},
    "psi": {"type", "lo", "hi"},
    "levels": {"min", "max"},
    "box": {"lo", "hi"},
    "germ": {"type", "alpha", "adapted", "horizon", "kernel", "h", "g", "taylor_order",
             "input", "stochastic_directions"},
}


def validate(raw):
    """Check a raw configuration and fill defaults; raise :class:`ValidationError`."""
    if not isinstance(raw, dict):
        raise ValidationError("<root>", "configuration must be a mapping")
    version = raw.get("version")
    if version != SCHEMA_VERSION:
        raise ValidationError("version", f"expected schema version {SCHEMA_VERSION}, got {version!r}")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ValidationError("kind", f"unknown experiment kind {kind!r}")
    allowed = dict(COMMON)
    allowed.update(KIND_FIELDS[kind])
    for key, value in raw.items():
        if key not in allowed:
            raise ValidationError(key, "unknown field")
        types = allowed[key]
        if types == _NUM and isinstance(value, bool) or not isinstance(value, types):
            raise ValidationError(key, f"expected {'/'.join(t.__name__ for t in types)}")
        if key in SUB_FIELDS:
            for sub in value:
                if sub not in SUB_FIELDS[key]:
                    raise ValidationError(f"{key}.{sub}", "unknown field")
    for key in REQUIRED[kind]:
        if key not in raw:
            raise ValidationError(key, "required field missing")
    cfg = dict(raw)
    cfg.setdefault("seed", 0)
    cfg.setdefault("paths", 1000)
    cfg.setdefault("workers", os.cpu_count() or 1)
    cfg.setdefault("d", len(cfg["grid"]["lo"]) if "grid" in cfg else 1)
    if cfg["paths"] < 1:
        raise ValidationError("paths", "must be positive")
    if cfg["workers"] < 1:
        raise ValidationError("workers", "must be positive")
    if "scaling" in cfg and len(cfg["scaling"]) != cfg["d"]:
        raise ValidationError("scaling", "length must equal d")
    if "levels" in cfg and not {"min", "max"} <= set(cfg["levels"]):
        raise ValidationError("levels", "needs min and max")
    if "grid" in cfg:
        g = cfg["grid"]
        if not {"lo", "hi", "level"} <= set(g):
            raise ValidationError("grid", "needs lo, hi and level")
        if len(g["lo"]) != cfg["d"] or len(g["hi"]) != cfg["d"]:
            raise ValidationError("grid", "lo and hi must have length d")
    if kind == "coherence-fit" and len(cfg["eps"]) * len(cfg["distances"]) < 12:
        raise ValidationError("eps", "coherence fits need at least 12 design points")
    if kind == "coherence-fit" and cfg.get("mode", "plain") == "conditional":
        germ = cfg["germ"]
        if germ.get("type") == "noise-product" and 0 not in germ.get("adapted", [0]):
            raise CapabilityError("conditional mode needs a field adapted in direction 0")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ValidationError("<file>", f"not valid YAML: {exc}") from exc
    except OSError as exc:
        raise ValidationError("<file>", str(exc)) from exc
    return raw


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_outputs(record, cfg, out_dir):
    """Write ``<kind>.csv`` (metrics rows) and ``<kind>.json`` (diagnostics)."""
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, record.kind)
    with open(stem + ".csv", "w", newline="") as fh:
        for key, value in record.header().items():
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(record.columns)
        for row in record.rows:
            w.writerow([_fmt(v) for v in row])
    diag = dict(record.header())
    diag.update({"config": cfg, "metrics": _jsonable(record.metrics),
                 "fits": _jsonable(record.fits), "wall_time": record.wall_time})
    with open(stem + ".json", "w") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True)
    return stem + ".csv", stem + ".json"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(float(obj)) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def cmd_run(args):
    raw = load_config(args.config)
    if isinstance(raw, dict):
        for key in ("seed", "paths", "workers"):
            value = getattr(args, key)
            if value is not None:
                raw[key] = value
    cfg = validate(raw)
    out_dir = args.out or cfg.get("output") or "results"
    record = run_experiment(cfg)
    csv_path, json_path = write_outputs(record, cfg, out_dir)
    print(f"{record.kind} {record.config_hash} -> {csv_path}")
    for key, value in sorted(record.metrics.items()):
        print(f"  {key}: {_fmt(value)}")
    return EXIT_OK


def cmd_report(args):
    records = []
    for path in sorted(glob.glob(os.path.join(args.dir, "*.json"))):
        with open(path) as fh:
            data = json.load(fh)
        if data.get("metrics"):
            records.append(data)
    if not records:
        print("no metrics")
        return EXIT_FAIL
    rows = []
    for rec in records:
        for key, value in sorted(rec["metrics"].items()):
            rows.append((rec["kind"], rec["config_hash"], key, value))
    out = os.path.join(args.dir, "summary.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "config_hash", "metric", "value"])
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    for rec in records:
        for name, fit in (rec.get("fits") or {}).items():
            if not fit or fit.get("slope") is None or not fit.get("x"):
                continue
            path = os.path.join(args.dir, f"plot_{rec['kind']}_{name}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["x", "y", "fit"])
                for x, y in zip(fit["x"], fit["y"]):
                    line = fit["base"] ** (fit["intercept"] + fit["slope"] * x)
                    w.writerow([_fmt(float(x)), _fmt(float(y)), _fmt(float(line))])
    width = max(len(r[2]) for r in rows)
    for kind, h, key, value in rows:
        print(f"{kind:20s} {h} {key:{width}s} {_fmt(value)}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="stochrecon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment configuration")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--paths", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out")
    run.set_defaults(func=cmd_run)
    rep = sub.add_parser("report", help="summarize the records in a directory")
    rep.add_argument("dir")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "validate", "load_config", "write_outputs", "config_hash"]
