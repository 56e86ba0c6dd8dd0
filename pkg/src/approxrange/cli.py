"""Command-line interface: ``approxrange {build,query,fpr,space,bench,lb-demo}``.

Exit codes: 0 success or "non-empty", 1 "empty", 2 bad arguments or input
data, 3 interval longer than the filter's max length, 4 I/O failure,
5 corrupt filter file, 6 a run that could not complete (sampling cap,
failed round trip).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from .core import Interval, ParamError, PointSet, validate_params
from .filter import (
    BloomBaseline,
    FilterFormatError,
    IntervalTooLong,
    RangeFilter,
    measure_fpr,
    sample_empty_intervals,
)
from .lowerbound import lb_trial

EXIT_NONEMPTY = 0
EXIT_EMPTY = 1
EXIT_USAGE = 2
EXIT_TOO_LONG = 3
EXIT_IO = 4
EXIT_CORRUPT = 5
EXIT_RUNTIME = 6


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ inputs


def read_points(path: str | Path) -> list[int]:
    """Points from a ``.txt`` (decimal per line, ``#`` comments) or ``.u64`` file."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".txt", ".u64"):
        raise CliError(f"{path}: point files must end in .txt or .u64", EXIT_USAGE)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}", EXIT_IO) from exc
    if suffix == ".u64":
        if len(raw) % 8:
            raise CliError(f"{path}: size {len(raw)} is not a multiple of 8 bytes", EXIT_USAGE)
        return [int(v) for v in np.frombuffer(raw, dtype="<u8")]
    values = []
    for lineno, line in enumerate(raw.decode("utf-8", errors="replace").splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if not text.isdigit():
            raise CliError(f"{path}:{lineno}: not a non-negative decimal integer: {text!r}", EXIT_USAGE)
        values.append(int(text))
    return values


def load_point_set(path, w: int) -> PointSet:
    values = read_points(path)
    try:
        return PointSet(values, w)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}", EXIT_USAGE) from exc


def load_filter(path) -> RangeFilter:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}", EXIT_IO) from exc
    try:
        return RangeFilter.from_bytes(data)
    except FilterFormatError as exc:
        raise CliError(f"{path}: {exc}", EXIT_CORRUPT) from exc


def write_atomic(path, data: bytes):
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}", EXIT_IO) from exc


def emit(rows: list[dict], fmt: str, out=None):
    out = out or sys.stdout
    if fmt == "json":
        for row in rows:
            out.write(json.dumps(row, sort_keys=False) + "\n")
    elif fmt == "csv":
        flat = [_flatten(r) for r in rows]
        fields = list(dict.fromkeys(k for r in flat for k in r))
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(flat)
        out.write(buf.getvalue())
    else:
        for i, row in enumerate(rows):
            if i:
                out.write("\n")
            for k, v in _flatten(row).items():
                out.write(f"{k}: {v}\n")


def _flatten(row: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in row.items():
        if isinstance(v, dict):
            flat.update(_flatten(v, f"{prefix}{k}."))
        else:
            flat[f"{prefix}{k}"] = v
    return flat


def _points_for(f: RangeFilter, path) -> PointSet:
    pts = load_point_set(path, f.params.w)
    if len(pts) != f.params.n:
        raise CliError(f"{path}: {len(pts)} points but the filter was built for {f.params.n}", EXIT_USAGE)
    return pts


# ------------------------------------------------------------------ commands


def cmd_build(args) -> int:
    try:
        pts = load_point_set(args.input, args.universe_bits) if 1 <= args.universe_bits <= 64 else None
        params = validate_params(args.universe_bits, args.max_len, args.epsilon,
                                 len(pts) if pts is not None else 0, args.seed)
    except (ParamError, ValueError) as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    f = RangeFilter.build(pts, params, args.index)
    write_atomic(args.out, f.to_bytes())
    report = f.space_report().as_dict()
    report = {"file": str(args.out), "n": params.n, "r": params.r, "exact": params.exact, **report}
    emit([report], args.format)
    return 0


def cmd_query(args) -> int:
    f = load_filter(args.filter)
    try:
        iv = Interval(args.a, args.b)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    try:
        hit = f.query(iv)
    except IntervalTooLong as exc:
        raise CliError(str(exc), EXIT_TOO_LONG) from exc
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    print("non-empty" if hit else "empty")
    return EXIT_NONEMPTY if hit else EXIT_EMPTY


def _check_len(f: RangeFilter, length: int):
    if length < 1:
        raise CliError("interval length must be at least 1", EXIT_USAGE)
    if length > f.params.L:
        raise CliError(f"length {length} exceeds max_len {f.params.L}", EXIT_TOO_LONG)


def cmd_fpr(args) -> int:
    f = load_filter(args.filter)
    pts = _points_for(f, args.points)
    length = args.len if args.len is not None else f.params.L
    _check_len(f, length)
    structures = {"filter": [("filter", f)], "bloom": [], "both": [("filter", f)]}[args.structure]
    if args.structure in ("bloom", "both"):
        structures.append(("bloom", BloomBaseline(pts, f.params)))
    rows = []
    try:
        for name, s in structures:
            rows.append(measure_fpr(s, pts, length, args.trials, args.seed, name=name).as_dict())
    except RuntimeError as exc:
        raise CliError(str(exc), EXIT_RUNTIME) from exc
    emit(rows, args.format)
    return 0


def cmd_space(args) -> int:
    f = load_filter(args.filter)
    report = f.space_report().as_dict()
    emit([{"n": f.params.n, "r": f.params.r, "exact": f.params.exact, **report}], args.format)
    return 0


def _latency(structure, a, b, chunk: int) -> tuple[float, float, np.ndarray]:
    """Median and p99 per-query latency (ns), timed over chunks of ``chunk`` queries."""
    structure.query_many(a[:chunk], b[:chunk])  # warm the compiled kernels
    per_query = []
    probes = []
    for s in range(0, len(a), chunk):
        t0 = time.perf_counter_ns()
        _, p = structure.query_many(a[s:s + chunk], b[s:s + chunk])
        per_query.append((time.perf_counter_ns() - t0) / len(p))
        probes.append(p)
    lat = np.array(per_query)
    return float(np.median(lat)), float(np.percentile(lat, 99)), np.concatenate(probes)


def cmd_bench(args) -> int:
    f = load_filter(args.filter)
    pts = _points_for(f, args.points)
    L = f.params.L
    lens = args.lens if args.lens else sorted({1, max(1, L // 4), L})
    for length in lens:
        _check_len(f, length)
    bloom = BloomBaseline(pts, f.params)
    rows = []
    for length in lens:
        try:
            a, b = sample_empty_intervals(pts, f.params.w, length, args.queries, args.seed)
        except RuntimeError as exc:
            raise CliError(str(exc), EXIT_RUNTIME) from exc
        for name, s in (("filter", f), ("bloom", bloom)):
            med, p99, probes = _latency(s, a, b, args.chunk)
            rows.append({
                "structure": name,
                "length": length,
                "queries": len(a),
                "median_ns": round(med, 1),
                "p99_ns": round(p99, 1),
                "probes_mean": float(probes.mean()),
                "probes_max": int(probes.max()),
            })
    emit(rows, args.format)
    return 0


def cmd_lb_demo(args) -> int:
    rows = []
    ok = True
    try:
        for t in range(args.sets):
            row = lb_trial(args.n, args.universe_bits, args.len, args.epsilon, args.seed + t, args.retries)
            ok &= row["roundtrip_ok"]
            rows.append(row)
    except ParamError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    except RuntimeError as exc:
        raise CliError(str(exc), EXIT_RUNTIME) from exc
    emit(rows, args.format)
    return 0 if ok else EXIT_RUNTIME


# ------------------------------------------------------------------ parser


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError(f"{v} is not a 64-bit unsigned value")
    return v


def _positive(text: str) -> int:
    v = _u64(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="approxrange", description="Approximate range emptiness filters.")
    sub = p.add_subparsers(dest="command", required=True)
    fmt = dict(choices=("json", "csv", "text"), default="json", help="report format")

    b = sub.add_parser("build", help="build a filter file from a point file")
    b.add_argument("--input", required=True, help="point file (.txt or .u64)")
    b.add_argument("--universe-bits", type=int, required=True, help="w, with universe [0, 2^w)")
    b.add_argument("--max-len", type=_positive, required=True, help="L, longest supported query (power of two)")
    b.add_argument("--epsilon", required=True, help="false positive rate, e.g. 0.01 or 1/100")
    b.add_argument("--seed", type=_u64, default=0)
    b.add_argument("--out", required=True, help="output filter file")
    b.add_argument("--index", choices=("binary", "zfast"), default="binary", help="in-bucket prefix index")
    b.add_argument("--format", **fmt)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="ask whether [a, b] may contain a point")
    q.add_argument("filter")
    q.add_argument("--a", type=_u64, required=True)
    q.add_argument("--b", type=_u64, required=True)
    q.set_defaults(func=cmd_query)

    f = sub.add_parser("fpr", help="measure the false positive rate on random empty intervals")
    f.add_argument("filter")
    f.add_argument("--points", required=True, help="the point file the filter was built from")
    f.add_argument("--len", type=_positive, default=None, help="interval length (default: max length)")
    f.add_argument("--trials", type=_positive, default=100_000)
    f.add_argument("--seed", type=_u64, default=0)
    f.add_argument("--structure", choices=("filter", "bloom", "both"), default="filter")
    f.add_argument("--format", **fmt)
    f.set_defaults(func=cmd_fpr)

    s = sub.add_parser("space", help="bit accounting of a filter file")
    s.add_argument("filter")
    s.add_argument("--format", **fmt)
    s.set_defaults(func=cmd_space)

    be = sub.add_parser("bench", help="query latency and probe counts, filter vs Bloom baseline")
    be.add_argument("filter")
    be.add_argument("--points", required=True)
    be.add_argument("--lens", type=_positive, nargs="+", default=None, help="lengths (default: 1, L/4, L)")
    be.add_argument("--queries", type=_positive, default=20_000)
    be.add_argument("--chunk", type=_positive, default=64, help="queries per timed batch")
    be.add_argument("--seed", type=_u64, default=0)
    be.add_argument("--format", **fmt)
    be.set_defaults(func=cmd_bench)

    lb = sub.add_parser("lb-demo", help="round-trip well-separated sets through the filter-based codec")
    lb.add_argument("--n", type=int, required=True)
    lb.add_argument("--universe-bits", type=int, required=True)
    lb.add_argument("--len", type=_positive, required=True, help="L")
    lb.add_argument("--epsilon", required=True)
    lb.add_argument("--sets", type=_positive, default=1)
    lb.add_argument("--seed", type=_u64, default=0)
    lb.add_argument("--retries", type=int, default=0, help="extra filter seeds to try per set")
    lb.add_argument("--format", **fmt)
    lb.set_defaults(func=cmd_lb_demo)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"approxrange {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
