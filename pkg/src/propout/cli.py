"""Command-line front end: ``propout detect | simulate | mse``.

Exit status: 0 on success (finding outliers is not an error), 2 for input
errors, 3 for parameter errors. Every output starts with the effective
configuration, resolved seed included; passing that output back through
``--config`` repeats the run exactly.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
from dataclasses import replace

from .detector import DetectorParams, detect, fresh_seed
from .errors import InputError, ParameterError, ScenarioError
from .ingest import read_table
from .simulation import (
    PRESETS,
    TYPES,
    TYPES_AND_ANTITYPES,
    ScenarioSpec,
    alternating_depths,
    estimator_mse,
    run_experiment,
)

logger = logging.getLogger("propout")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PARAM = 3

TAIL_FLAGS = {"upper": "upper", "two": "two"}
SCENARIO_TAIL = {"upper": TYPES, "two": TYPES_AND_ANTITYPES}

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARAM, f"{self.prog}: error: {message}\n")


def _number(kind, name):
    def convert(text):
        try:
            value = kind(text)
        except ValueError:
            raise ParameterError(f"{name}: not a valid {kind.__name__}: {text!r}") from None
        if isinstance(value, float) and not math.isfinite(value):
            raise ParameterError(f"{name}: must be finite, got {text!r}")
        return value

    return convert


def _list(kind, name):
    def convert(text):
        return [_number(kind, name)(part) for part in str(text).split(",") if part.strip()]

    return convert


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="propout", description="Detect outlying proportions with minimal patterns.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, default_format="json"):
        p.add_argument("-o", "--output", help="write here instead of stdout")
        p.add_argument("--format", choices=("json", "csv", "text"), default=None,
                       help=f"output format (default {default_format})")
        p.add_argument("--seed", help="64-bit master seed (default: fresh entropy, echoed)")
        p.add_argument("--threads", default="1", help="worker threads; never changes results")
        p.add_argument("--config", help="re-use the configuration header of a previous output")
        p.add_argument("-v", "--verbose", action="count", default=0)

    def detector_flags(p, alpha_help):
        p.add_argument("--alpha", help=alpha_help)
        p.add_argument("--pattern-fraction", help="pattern size as a fraction of K (default 0.5)")
        p.add_argument("--vote-threshold", help="vote ratio above which a column is an outlier (default 0.5)")
        p.add_argument("--replicates", help="number of sampled patterns (default 1000)")
        p.add_argument("--tail", choices=tuple(TAIL_FLAGS), default=None, help="region shape (default upper)")

    p = sub.add_parser("detect", help="classify the columns of an input table")
    p.add_argument("--input", "-i", help="variant table or id,n,d CSV")
    p.add_argument("--input-format", choices=("auto", "variants", "proportions"), default=None)
    p.add_argument("--audit", action="store_true", default=None,
                   help="include the per-replicate audit trail (json only)")
    detector_flags(p, "outlier level in (0, 1) (default 1e-3)")
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="sensitivity/specificity of simulated scenarios")
    p.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario rows")
    p.add_argument("--k", help="number of columns")
    p.add_argument("--n-outliers", help="number of planted outliers")
    p.add_argument("--depths", help="depth, comma list per column, or alternating:100,1000")
    p.add_argument("--shuffle-depths", action="store_true", default=None,
                   help="deal depths to columns in random order for every draw")
    p.add_argument("--p", help="inlier proportion(s), comma separated for several rows")
    p.add_argument("--alpha-gen", help="planting level (default: the detection level)")
    p.add_argument("--reps", help="simulated tables per cell (default 200)")
    detector_flags(p, "detection level(s), comma separated (default per preset, else 1e-3)")
    common(p, "text")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mse", help="bias/variance/MSE of the pooled estimate")
    p.add_argument("--k", help="number of columns (with a single --depths value)")
    p.add_argument("--depths", help="depth, or comma list per column")
    p.add_argument("--p", help="inlier proportion")
    p.add_argument("--outlier-counts", help="fixed counts of the first NO columns, comma separated")
    p.add_argument("--h", help="pattern size (default floor(K/2))")
    p.add_argument("--mode", choices=("exhaustive", "monte-carlo"), default=None)
    p.add_argument("--samples", help="patterns drawn in monte-carlo mode (default 100000)")
    p.add_argument("--cap", help="largest pattern count enumerated exhaustively (default 1000000)")
    p.add_argument("--per-pattern", action="store_true", default=None, help="list every evaluated pattern")
    common(p)
    p.set_defaults(func=cmd_mse)
    return parser


# -- configuration ---------------------------------------------------------------


def _load_header(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from exc
    first = text.lstrip().splitlines()[0] if text.strip() else ""
    if first.startswith("# config: "):
        return json.loads(first[len("# config: "):])
    try:
        return json.loads(text)["config"]
    except (ValueError, KeyError, TypeError):
        raise InputError(f"{path} holds no configuration header") from None


def _resolve(args, defaults):
    """Merge explicit flags over a loaded header over the defaults."""
    cfg = dict(defaults)
    if args.config:
        loaded = _load_header(args.config)
        if loaded.get("command") != args.command:
            raise ParameterError(f"config is for {loaded.get('command')!r}, not {args.command!r}")
        cfg.update({k: v for k, v in loaded.items() if k in defaults})
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _seed(value):
    if value is None:
        return fresh_seed()
    seed = _number(int, "--seed")(value)
    if not 0 <= seed < 2**64:
        raise ParameterError(f"--seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _detector_params(cfg, alpha=None):
    return DetectorParams(
        alpha=alpha if alpha is not None else _number(float, "--alpha")(cfg["alpha"]),
        pattern_fraction=_number(float, "--pattern-fraction")(cfg["pattern_fraction"]),
        vote_threshold=_number(float, "--vote-threshold")(cfg["vote_threshold"]),
        replicates=_number(int, "--replicates")(cfg["replicates"]),
        tail=TAIL_FLAGS[cfg["tail"]],
        seed=cfg["seed"],
    )


_PATHS = {"input", "preset", "depths"}


def _normalise(cfg):
    # the header echoes parsed values so that it reads back identically
    out = {}
    for k, v in cfg.items():
        if isinstance(v, str) and k not in _PATHS:
            try:
                v = json.loads(v)
            except ValueError:
                pass
        out[k] = v
    return out


DETECTOR_DEFAULTS = {
    "pattern_fraction": "0.5",
    "vote_threshold": "0.5",
    "replicates": "1000",
    "tail": "upper",
    "seed": None,
}


# -- detect ----------------------------------------------------------------------


def cmd_detect(args):
    cfg = _resolve(
        args,
        {"command": "detect", "input": None, "input_format": "auto", "alpha": "1e-3",
         "audit": False, "format": "json", **DETECTOR_DEFAULTS},
    )
    cfg["seed"] = _seed(cfg["seed"])
    params = _detector_params(cfg)
    if not cfg["input"]:
        raise InputError("detect needs --input")
    table = read_table(cfg["input"], cfg["input_format"])
    result = detect(table, params, threads=_threads(args), audit=bool(cfg["audit"]))
    header = _normalise(cfg)
    rows = result.records()
    summary = result.summary()
    fmt = cfg["format"]
    if fmt == "json":
        doc = {"config": header, "summary": summary, "columns": rows}
        if result.audit is not None:
            doc["audit"] = [
                {
                    "replicate": a.replicate,
                    "pattern": list(a.pattern),
                    "p_tilde": a.p_tilde,
                    "hits": list(a.hits),
                    "bounds": {str(d): list(b) for d, b in a.bounds.items()},
                }
                for a in result.audit
            ]
        return json.dumps(doc, indent=2) + "\n"
    columns = ["id", "n", "d", "p_hat", "S", "C", "ratio", "classification"]
    if fmt == "csv":
        return _config_line(header) + _csv(columns, rows)
    lines = [
        _config_line(header),
        f"K={summary['K']}  outliers={summary['n_outliers']}  "
        f"indeterminate={summary['n_indeterminate']}  pattern size={summary['pattern_size']}  "
        f"seed={params.seed}\n",
    ]
    return "".join(lines) + _aligned(columns, rows)


def _threads(args):
    n = _number(int, "--threads")(args.threads)
    if n < 1:
        raise ParameterError(f"--threads must be at least 1, got {n}")
    return n


def _config_line(header):
    return "# config: " + json.dumps(header, sort_keys=True) + "\n"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _csv(columns, rows):
    import csv

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def _aligned(columns, rows):
    body = [[_cell(r[c]) for c in columns] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(columns, *body)]
    return "".join(
        "  ".join(x.ljust(w) if i == 0 else x.rjust(w) for i, (x, w) in enumerate(zip(line, widths))).rstrip()
        + "\n"
        for line in [columns, *body]
    )


# -- simulate ----------------------------------------------------------------------


def _depths(text, k):
    text = str(text)
    if text.startswith("alternating:"):
        values = _list(int, "--depths")(text.split(":", 1)[1])
        return alternating_depths(k, values)
    values = _list(int, "--depths")(text)
    if len(values) == 1:
        return values[0]
    return tuple(values)


def cmd_simulate(args):
    cfg = _resolve(
        args,
        {"command": "simulate", "preset": None, "k": None, "n_outliers": None, "depths": None,
         "shuffle_depths": False, "p": None, "alpha_gen": None, "reps": "200", "alpha": None,
         "format": "text", **DETECTOR_DEFAULTS},
    )
    cfg["seed"] = _seed(cfg["seed"])
    reps = _number(int, "--reps")(cfg["reps"])
    if reps < 1:
        raise ParameterError(f"--reps must be at least 1, got {reps}")
    alphas = _list(float, "--alpha")(cfg["alpha"]) if cfg["alpha"] is not None else None

    if cfg["preset"]:
        preset = PRESETS[cfg["preset"]]
        grid = list(preset.rows)
        alphas = alphas or list(preset.alphas)
    else:
        missing = [f"--{k.replace('_', '-')}" for k in ("k", "n_outliers", "depths", "p") if cfg[k] is None]
        if missing:
            raise ParameterError(f"simulate needs --preset or all of {', '.join(missing)}")
        k = _number(int, "--k")(cfg["k"])
        grid = [
            ScenarioSpec(
                k=k,
                n_outliers=_number(int, "--n-outliers")(cfg["n_outliers"]),
                depths=_depths(cfg["depths"], k),
                p=p,
                alpha_gen=None if cfg["alpha_gen"] is None else _number(float, "--alpha-gen")(cfg["alpha_gen"]),
                tail=SCENARIO_TAIL[cfg["tail"]],
                shuffle_depths=bool(cfg["shuffle_depths"]),
            )
            for p in _list(float, "--p")(cfg["p"])
        ]
    alphas = alphas or [1e-3]
    cfg["alpha"] = ",".join(repr(a) for a in alphas)
    params = _detector_params(cfg, alpha=alphas[0])
    for a in alphas:
        replace(params, alpha=a)  # validates every level up front

    def progress(cell):
        logger.info("K=%d NO=%d p=%g alpha=%g: sens=%.3f spec=%.3f", cell.spec.k,
                    cell.spec.n_outliers, cell.spec.p, cell.alpha, cell.sensitivity, cell.specificity)

    result = run_experiment(grid, reps, params, alphas=alphas, threads=_threads(args), progress=progress)
    header = _normalise(cfg)
    fmt = cfg["format"]
    if fmt == "json":
        return json.dumps({"config": header, "cells": [c.row() for c in result.cells]}, indent=2) + "\n"
    if fmt == "csv":
        return _config_line(header) + result.to_csv()
    return _config_line(header) + result.to_text()


# -- mse -------------------------------------------------------------------------


def cmd_mse(args):
    cfg = _resolve(
        args,
        {"command": "mse", "k": None, "depths": None, "p": None, "outlier_counts": "", "h": None,
         "mode": "exhaustive", "samples": "100000", "cap": "1000000", "per_pattern": False,
         "seed": None, "format": "json"},
    )
    cfg["seed"] = _seed(cfg["seed"])
    if cfg["depths"] is None or cfg["p"] is None:
        raise ParameterError("mse needs --depths and --p")
    depths = _depths(cfg["depths"], 0) if "," in str(cfg["depths"]) else None
    if depths is None:
        if cfg["k"] is None:
            raise ParameterError("a single --depths value needs --k")
        depths = (_number(int, "--depths")(cfg["depths"]),) * _number(int, "--k")(cfg["k"])
    counts = _list(int, "--outlier-counts")(cfg["outlier_counts"])
    h = _number(int, "--h")(cfg["h"]) if cfg["h"] is not None else len(depths) // 2
    cfg["h"] = h
    report = estimator_mse(
        depths,
        _number(float, "--p")(cfg["p"]),
        counts,
        h,
        mode=cfg["mode"],
        samples=_number(int, "--samples")(cfg["samples"]),
        cap=_number(int, "--cap")(cfg["cap"]),
        seed=cfg["seed"],
    )
    header = _normalise(cfg)
    summary = report.summary()
    rows = [
        {"pattern": i, "bias": float(b), "variance": float(v)}
        for i, (b, v) in enumerate(zip(report.bias, report.variance))
    ] if cfg["per_pattern"] else []
    fmt = cfg["format"]
    if fmt == "json":
        doc = {"config": header, "summary": summary}
        if rows:
            doc["patterns"] = rows
        return json.dumps(doc, indent=2) + "\n"
    lines = _config_line(header)
    if fmt == "csv":
        lines += _csv(list(summary), [summary])
        if rows:
            lines += _csv(["pattern", "bias", "variance"], rows)
        return lines
    lines += "".join(f"{k:>14}  {_cell(v)}\n" for k, v in summary.items())
    if rows:
        lines += _aligned(["pattern", "bias", "variance"], rows)
    return lines


# -- entry point -------------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        text = args.func(args)
    except (ParameterError, ScenarioError) as exc:
        print(f"propout: parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except InputError as exc:
        print(f"propout: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.output:
        try:
            with open(args.output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"propout: cannot write {args.output}: {exc.strerror}", file=sys.stderr)
            return EXIT_INPUT
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
