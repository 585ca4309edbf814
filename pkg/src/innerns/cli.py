"""Command-line entry point: ``innerns <command> [options]``.

Commands
    integrate         NS integral of exp(log integrand) over a box
    oracle-grid       midpoint-grid integral, sorted g(w) curve, contour sectors
    dirichlet         posterior moments of a functional of a count table
    inner-volume      atlas estimate of the simplex volume
    evidence-compare  posterior model probabilities from several evidences

Reports are JSON with sorted keys. Errors print one line
``error: <code>: <detail>`` and exit with 2 (input) or 3 (numeric).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dirichlet import CENTER_MODE, CENTER_PAPER, CountTable
from .errors import InnerNSError, InputError, ParseError
from .expr import parse_functional
from .inner import REFRESH_FULL, REFRESH_INTERPOLATED
from .moments import estimate_moments
from .oracle import GridSpec, ellipse_pyramid_sum, grid_integrate, sector_radii, sorted_area_curve
from .oracle import write_curve_csv, write_radii_csv
from .pipeline import (
    DEFAULT_INNER_OBJECTS,
    DEFAULT_OBJECTS,
    GAUSSIAN_INTEGRAND,
    GAUSSIAN_LOG_INTEGRAND,
    BoxRequest,
    DirichletRequest,
    box_report,
    compare_models,
    dirichlet_report,
    inner_volume_report,
    run_box,
    run_dirichlet,
    run_inner_volume,
    write_weighted_values,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("innerns")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _number(text: str, line: int, column: int) -> float:
    s = text.strip()
    try:
        v = float(s)
    except ValueError:
        raise ParseError(f"not a number: {s!r}", line, column) from None
    return int(v) if v.is_integer() else v


def parse_counts_csv(text: str) -> CountTable:
    """Rows of a contingency table; flattened row-major so cell (i, j) -> t[i*J + j + 1]."""
    rows, widths = [], None
    for lineno, fields in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not fields or all(not f.strip() for f in fields):
            continue
        row, col = [], 1
        for f in fields:
            row.append(_number(f, lineno, col + len(f) - len(f.lstrip())))
            col += len(f) + 1
        if widths is not None and len(row) != widths:
            raise ParseError(f"row has {len(row)} cells, expected {widths}", lineno, 1)
        widths = len(row)
        rows.append(row)
    if not rows:
        raise ParseError("no counts found", 1, 1)
    flat = [x for r in rows for x in r]
    return CountTable(tuple(flat), (len(rows), widths))


def parse_counts_json(text: str) -> CountTable:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict) or "counts" not in doc:
        raise ParseError('expected an object with a "counts" array', 1, 1)
    counts = doc["counts"]
    if not isinstance(counts, list) or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in counts):
        raise ParseError('"counts" must be an array of numbers', 1, 1)
    shape = doc.get("shape")
    if shape is not None and (not isinstance(shape, list) or len(shape) != 2):
        raise ParseError('"shape" must be [I, J]', 1, 1)
    return CountTable(tuple(counts), None if shape is None else tuple(shape))


def ingest_counts(path) -> CountTable:
    """Read a count table from a CSV or JSON file (JSON if it starts with '{')."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if str(path).lower().endswith(".json") or text.lstrip().startswith("{"):
        return parse_counts_json(text)
    return parse_counts_csv(text)


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _emit(report: dict, output: Optional[str]) -> None:
    text = json.dumps(_json_safe(report), sort_keys=True, indent=2) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args) -> dict:
    skip = {"func", "output", "timing", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_integrate(args) -> dict:
    req = BoxRequest(args.log_integrand, args.lower, args.upper, args.objects, args.seed,
                     args.termination_factor, args.max_iterations, args.known_log_max)
    result, _ = run_box(req)
    report = box_report(result)
    if args.functional:
        u = parse_functional(args.functional, len(args.lower))
        report["moments"] = estimate_moments(result, u, seed=args.seed).to_dict()
    if args.trace:
        result.write_trace(args.trace)
    return report


def cmd_oracle_grid(args) -> dict:
    spec = GridSpec(args.lower, args.upper, args.cells)
    expr = parse_functional(args.integrand, spec.dim)

    def f(*axes):
        return expr.evaluate(np.stack(axes, axis=1))

    report = {"grid_integral": grid_integrate(f, spec), "cells": list(spec.cells), "dw": spec.dw,
              "total_measure": spec.total_measure}
    if args.curve:
        write_curve_csv(args.curve, sorted_area_curve(f, spec))
    if args.sectors:
        report["sector_sum"] = ellipse_pyramid_sum(args.level, args.sectors)
        report["sectors"] = args.sectors
        report["level"] = args.level
        if args.radii:
            write_radii_csv(args.radii, sector_radii(args.level, args.sectors))
    return report


def cmd_dirichlet(args) -> dict:
    counts = ingest_counts(args.counts)
    parse_functional(args.functional, counts.M)  # fail before any sampling
    req = DirichletRequest(counts, args.functional, args.objects, args.inner_objects, args.seed,
                           args.termination_factor, args.max_iterations, args.center,
                           refresh_mode=args.refresh)
    run = run_dirichlet(req)
    report = dirichlet_report(run)
    report["counts"] = list(counts.counts)
    if counts.shape is not None:
        report["shape"] = list(counts.shape)
        report["index_map"] = {counts.cell_label(i).split(" = ")[0]: f"t{i + 1}" for i in range(counts.M)}
    if args.trace:
        run.result.write_trace(args.trace)
    if args.atlas_dump:
        run.atlas.write_csv(args.atlas_dump)
    if args.histogram:
        write_weighted_values(args.histogram, run.result, run.functional)
    return report


def cmd_inner_volume(args) -> dict:
    counts = ingest_counts(args.counts) if args.counts else None
    if counts is None and args.dim is None:
        raise InputError("inner-volume needs --dim or --counts")
    M = counts.M if counts is not None else args.dim
    if counts is not None and args.dim is not None and args.dim != M:
        raise InputError(f"--dim {args.dim} disagrees with {M} counts")
    atlas = run_inner_volume(M, args.inner_objects, args.seed, counts, args.center)
    if args.atlas_dump:
        atlas.write_csv(args.atlas_dump)
    return inner_volume_report(atlas, M)


def cmd_evidence_compare(args) -> dict:
    try:
        doc = json.loads(Path(args.models).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {args.models}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    models = doc.get("models") if isinstance(doc, dict) else None
    if not isinstance(models, list):
        raise ParseError('expected an object with a "models" array', 1, 1)
    return compare_models(models, args.objects, args.inner_objects, args.seed, args.termination_factor)


def _common(p, objects_default):
    p.add_argument("--objects", type=int, default=objects_default, help="NS live objects N")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--termination-factor", type=float, default=None,
                   help="stop once an area element falls below Z / F (default N^2)")
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--output", help="write the JSON report here instead of stdout")
    p.add_argument("--timing", action="store_true", help="include wall time in the report")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="innerns", description="Nested Sampling evidence and posterior moments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("integrate", help="integrate exp(log integrand) over a box")
    _common(q, 500)
    q.add_argument("--log-integrand", default=GAUSSIAN_LOG_INTEGRAND, help="expression in t1..tk")
    q.add_argument("--lower", type=_floats, default=(-5.0, -5.0))
    q.add_argument("--upper", type=_floats, default=(5.0, 5.0))
    q.add_argument("--known-log-max", type=float, default=None, help="log of max integrand, if known")
    q.add_argument("--functional", default=None, help="also report moments of this expression")
    q.add_argument("--trace", help="per-iteration CSV trace")
    q.set_defaults(func=cmd_integrate)

    q = sub.add_parser("oracle-grid", help="midpoint grid integral and sorted area curve")
    q.add_argument("--integrand", default=GAUSSIAN_INTEGRAND, help="expression in t1..tk (k <= 3)")
    q.add_argument("--lower", type=_floats, default=(-5.0, -5.0))
    q.add_argument("--upper", type=_floats, default=(5.0, 5.0))
    q.add_argument("--cells", type=_ints, default=(20, 20))
    q.add_argument("--curve", help="CSV of the sorted g(w) step curve")
    q.add_argument("--sectors", type=int, default=None, help="also sum contour sectors of the ellipse")
    q.add_argument("--level", type=float, default=0.041, help="contour level for --sectors")
    q.add_argument("--radii", help="CSV of the sector radii")
    q.add_argument("--output")
    q.add_argument("--timing", action="store_true")
    q.add_argument("-v", "--verbose", action="store_true")
    q.set_defaults(func=cmd_oracle_grid)

    q = sub.add_parser("dirichlet", help="posterior moments of a functional of count data")
    _common(q, DEFAULT_OBJECTS)
    q.add_argument("--counts", required=True, help="CSV table or JSON {\"counts\": [...]}")
    q.add_argument("--functional", default="t1", help="expression in t1..tM (row-major cells)")
    q.add_argument("--inner-objects", type=int, default=DEFAULT_INNER_OBJECTS)
    q.add_argument("--center", choices=[CENTER_PAPER, CENTER_MODE], default=CENTER_PAPER)
    q.add_argument("--refresh", choices=[REFRESH_FULL, REFRESH_INTERPOLATED], default=REFRESH_FULL)
    q.add_argument("--trace", help="per-iteration CSV trace")
    q.add_argument("--atlas-dump", help="CSV of the atlas differentials")
    q.add_argument("--histogram", help="CSV of (t, u, weight) points")
    q.set_defaults(func=cmd_dirichlet)

    q = sub.add_parser("inner-volume", help="atlas estimate of the simplex volume")
    _common(q, DEFAULT_OBJECTS)
    q.add_argument("--dim", type=int, default=None, help="number of cells M")
    q.add_argument("--counts", default=None, help="take M and the center from a count table")
    q.add_argument("--inner-objects", type=int, default=DEFAULT_INNER_OBJECTS)
    q.add_argument("--center", choices=[CENTER_PAPER, CENTER_MODE], default=CENTER_PAPER)
    q.add_argument("--atlas-dump", help="CSV of the atlas differentials")
    q.set_defaults(func=cmd_inner_volume)

    q = sub.add_parser("evidence-compare", help="posterior probabilities of several models")
    _common(q, DEFAULT_OBJECTS)
    q.add_argument("--models", required=True, help='JSON {"models": [...]}')
    q.add_argument("--inner-objects", type=int, default=DEFAULT_INNER_OBJECTS)
    q.set_defaults(func=cmd_evidence_compare)
    return p


def _fail(code: str, detail: str, status: int) -> int:
    detail = " ".join(str(detail).split())
    print(f"error: {code}: {detail}", file=sys.stderr)
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        return _fail("usage", str(exc), EXIT_INPUT)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        body = args.func(args)
    except InputError as exc:
        return _fail(exc.code, exc, EXIT_INPUT)
    except InnerNSError as exc:
        return _fail(exc.code, exc, EXIT_NUMERIC)
    except OSError as exc:
        return _fail("io", exc, EXIT_INPUT)
    elapsed = time.perf_counter() - t0
    report = {"schema_version": SCHEMA_VERSION, "command": args.command, "config": _config(args),
              "seed": getattr(args, "seed", None)}
    report.update(body)
    if args.timing:
        report["wall_time_s"] = elapsed
    try:
        _emit(report, args.output)
    except OSError as exc:
        return _fail("io", exc, EXIT_INPUT)
    print(f"{args.command}: done in {elapsed:.2f} s", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
