"""Command line driver: ``aiid <subcommand> [--config PATH] [--preset NAME] ...``

Settings resolve as flags > AIID_* environment variables > config file >
built-in defaults. Exit status is 0 when every threshold check passes, 1
when one fails, and 2 on invalid input (a JSON error record goes to
stderr and to ``<out>/<subcommand>_error.json``).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

from . import __version__, experiments
from .config import ExperimentConfig, load_file, load_preset, preset_names
from .errors import AiidError, ValidationError

ENV_PREFIX = "AIID_"
SUBCOMMANDS = ("run_stein", "run_compress", "run_code", "run_transport")


def _fmt(v):
    if v is None:
        return ""
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        return v.item()
    return v


def write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _env_int(name):
    v = os.environ.get(ENV_PREFIX + name)
    if v is None or v == "":
        return None
    try:
        return int(v, 0)
    except ValueError:
        raise ValidationError(f"{ENV_PREFIX}{name} must be an integer") from None


def build_config(sub: str, args) -> ExperimentConfig:
    sub = experiments.canonical_subcommand(sub)
    preset = args.preset or os.environ.get(ENV_PREFIX + "PRESET") or None
    path = args.config or os.environ.get(ENV_PREFIX + "CONFIG") or None
    params = {}
    if preset:
        params.update(load_preset(preset))
    if path:
        params.update(load_file(path))
    named = params.get("subcommand")
    if named is not None and experiments.canonical_subcommand(named) != sub:
        raise ValidationError(f"config is for {named}, not {sub}")
    seed = params.get("seed", 0)
    env_seed = _env_int("SEED")
    if env_seed is not None:
        seed = env_seed
    if args.seed is not None:
        seed = args.seed
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    threads = args.threads if args.threads is not None else (_env_int("THREADS") or 1)
    if threads < 1:
        raise ValidationError("threads must be at least 1")
    out = args.out or os.environ.get(ENV_PREFIX + "OUT") or "out"
    params = {k: v for k, v in params.items() if k not in experiments.RESERVED}
    return ExperimentConfig(sub, params, int(seed), out, int(threads))


def execute(cfg: ExperimentConfig) -> int:
    P, _ = experiments.prepare(cfg.subcommand, cfg.params)
    outcome = experiments.run(cfg.subcommand, cfg.params, cfg.seed, cfg.threads)
    os.makedirs(cfg.out, exist_ok=True)
    stem = os.path.join(cfg.out, cfg.subcommand)
    write_csv(stem + ".csv", experiments.COLUMNS[cfg.subcommand], outcome.rows)
    summary = {
        "subcommand": cfg.subcommand,
        "version": __version__,
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "params": P,
        "pass": outcome.passed,
        "checks": outcome.checks,
        "extra": outcome.extra,
        "rows": len(outcome.rows),
    }
    with open(stem + "_summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, sort_keys=True, indent=2)
        fh.write("\n")
    if outcome.records:
        with open(stem + "_transcript.jsonl", "w") as fh:
            for rec in outcome.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    for c in outcome.checks:
        print(f"{'PASS' if c['ok'] else 'FAIL'} {c['name']}")
    print(f"wrote {stem}.csv")
    return 0 if outcome.passed else 1


def _error_record(kind, msg, sub, out):
    rec = {"error": kind, "message": msg, "subcommand": sub}
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out:
        try:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, f"{sub or 'aiid'}_error.json"), "w") as fh:
                fh.write(text + "\n")
        except OSError:
            pass


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aiid", description="Experiments on almost i.i.d. sources and channels.")
    ap.add_argument("--version", action="version", version=f"aiid {__version__}")
    sp = ap.add_subparsers(dest="subcommand")
    aliases = {v: k for k, v in experiments.ALIASES.items()}
    for name in SUBCOMMANDS:
        p = sp.add_parser(name, aliases=[aliases[name]], help=f"{name.replace('run_', '')} experiment")
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", type=int, metavar="U64")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--threads", type=int, metavar="N")
        p.add_argument("--preset", metavar="NAME")
    sp.add_parser("presets", help="list bundled presets")
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    if args.subcommand is None:
        ap.print_help()
        return 2
    if args.subcommand == "presets":
        for name in preset_names():
            print(name)
        return 0
    sub = experiments.ALIASES.get(args.subcommand, args.subcommand)
    out = args.out or os.environ.get(ENV_PREFIX + "OUT") or "out"
    try:
        cfg = build_config(sub, args)
        return execute(cfg)
    except ValidationError as e:
        _error_record("validation", str(e), sub, out)
        return 2
    except AiidError as e:
        _error_record(type(e).__name__, str(e), sub, out)
        return 2


if __name__ == "__main__":
    sys.exit(main())
