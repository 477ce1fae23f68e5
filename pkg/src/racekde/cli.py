"""Command-line tool: build, merge, query, and inspect sketches, and run
error-vs-memory evaluations that emit plot-ready CSVs.

Exit codes: 0 success, 1 usage error, 2 data/format error.
"""

from __future__ import annotations

import argparse
import sys
import time
from typing import List, Optional

from .baselines import ReservoirSample, exact_kde, sample_bytes
from .io import DatasetFormatError, EvalRecord, read_dense, read_sparse, write_eval_csv
from .kernels import KernelEval
from .lsh import Family, LshConfig, derive_seed
from .sketch import HEADER_SIZE, ConfigMismatchError, RaceSketch, SketchFormatError
from .vectors import DimensionMismatchError

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract here is 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="racekde", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_format(p):
        p.add_argument("--format", choices=["dense", "sparse"], default="dense")
        p.add_argument("--dim", type=int, help="dimension (required for sparse input)")

    p_sketch = sub.add_parser("sketch", help="build a sketch from a dataset in one pass")
    p_sketch.add_argument("--input", required=True)
    add_format(p_sketch)
    p_sketch.add_argument("--kind", choices=["srp", "l2", "l1"], required=True)
    p_sketch.add_argument("--sigma", type=float, default=1.0)
    p_sketch.add_argument("--power", type=int, default=1)
    p_sketch.add_argument("--rows", type=int, required=True)
    p_sketch.add_argument("--range", type=int, dest="hash_range")
    p_sketch.add_argument("--seed", type=int, default=0)
    p_sketch.add_argument("--storage", choices=["dense", "sparse", "auto"], default="auto")
    p_sketch.add_argument("--output", required=True)

    p_query = sub.add_parser("query", help="estimate densities from a sketch file")
    p_query.add_argument("--sketch", required=True, dest="sketch_file")
    p_query.add_argument("--queries", required=True)
    add_format(p_query)
    p_query.add_argument("--groups", type=int, default=9)
    p_query.add_argument("--output", required=True)

    p_merge = sub.add_parser("merge", help="merge sketch files with identical configs")
    p_merge.add_argument("inputs", nargs="+")
    p_merge.add_argument("--output", required=True)

    p_info = sub.add_parser("info", help="print a sketch file's header and occupancy")
    p_info.add_argument("sketch_file")

    p_eval = sub.add_parser("eval", help="error-vs-memory evaluation against exact KDE")
    p_eval.add_argument("--input", required=True)
    p_eval.add_argument("--queries", required=True)
    add_format(p_eval)
    p_eval.add_argument("--kind", choices=["srp", "l2", "l1"], required=True)
    p_eval.add_argument("--sigma", type=float, default=1.0)
    p_eval.add_argument("--power", type=int, default=1)
    p_eval.add_argument("--range", type=int, dest="hash_range")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--groups", type=int, default=9)
    p_eval.add_argument("--methods", default="race,rs")
    p_eval.add_argument("--sizes", required=True, help="comma-separated byte budgets")
    p_eval.add_argument("--repeats", type=int, default=1)
    p_eval.add_argument("--output", required=True)
    return parser


def _default_range(kind: str, power: int, hash_range: Optional[int]) -> int:
    if kind == "srp":
        if hash_range is not None and hash_range != 2**power:
            raise _UsageError(f"srp range must be 2**power = {2**power}")
        return 2**power
    if hash_range is None:
        raise _UsageError("--range is required for l2/l1")
    return hash_range


class _UsageError(Exception):
    pass


def _reader(path: str, fmt: str, dim: Optional[int]):
    if fmt == "sparse":
        if dim is None:
            raise _UsageError("--dim is required for sparse input")
        return read_sparse(path, dim)
    return read_dense(path, dim)


def _load_queries(args):
    return list(_reader(args.queries, args.format, args.dim))


def cmd_sketch(args) -> int:
    start = time.monotonic()
    stream = _reader(args.input, args.format, args.dim)
    sketch = None
    for x in stream:
        if sketch is None:
            cfg = LshConfig(
                kind=Family(args.kind),
                dim=x.dim,
                sigma=args.sigma if args.kind != "srp" else 0.0,
                power=args.power,
                rows=args.rows,
                hash_range=_default_range(args.kind, args.power, args.hash_range),
                seed=args.seed,
            )
            sketch = RaceSketch(cfg, args.storage)
        sketch.add(x)
    if sketch is None:
        raise DatasetFormatError(0, "input contains no vectors")
    sketch.serialize(args.output)
    elapsed = time.monotonic() - start
    print(f"items={sketch.items} bytes={sketch.memory_bytes()} seconds={elapsed:.3f}")
    return 0


def cmd_query(args) -> int:
    if args.groups % 2 == 0 or args.groups < 1:
        raise _UsageError("--groups must be a positive odd integer")
    sketch = RaceSketch.deserialize(args.sketch_file)
    size = sketch.memory_bytes()
    params = (
        f"kind={sketch.config.kind.value},rows={sketch.config.rows},"
        f"range={sketch.config.hash_range},power={sketch.config.power},"
        f"groups={args.groups}"
    )
    records = []
    for qid, q in enumerate(_reader(args.queries, args.format, args.dim)):
        try:
            est = sketch.estimate(q, args.groups)
        except DimensionMismatchError as exc:
            raise DatasetFormatError(qid + 1, str(exc)) from None
        records.append(
            EvalRecord(
                query_id=qid,
                method="race",
                params=params,
                bytes=size,
                exact=None,
                estimate=est.value,
            )
        )
    write_eval_csv(records, args.output)
    print(f"queries={len(records)} output={args.output}")
    return 0


def cmd_merge(args) -> int:
    merged = None
    for path in args.inputs:
        sketch = RaceSketch.deserialize(path)
        merged = sketch if merged is None else merged.merge(sketch)
    merged.serialize(args.output)
    print(f"items={merged.items} bytes={merged.memory_bytes()} inputs={len(args.inputs)}")
    return 0


def cmd_info(args) -> int:
    sketch = RaceSketch.deserialize(args.sketch_file)
    cfg = sketch.config
    print(f"kind: {cfg.kind.value}")
    print(f"dim: {cfg.dim}")
    print(f"sigma: {cfg.sigma}")
    print(f"power: {cfg.power}")
    print(f"rows: {cfg.rows}")
    print(f"range: {cfg.hash_range}")
    print(f"seed: {cfg.seed}")
    print(f"items: {sketch.items}")
    print(f"storage: {sketch.storage}")
    print(f"rehash_family_id: {sketch.rehash_family_id}")
    print(f"nonzero_fraction: {sketch.nonzero_fraction():.6g}")
    print(f"bytes: {sketch.memory_bytes()}")
    return 0


def cmd_eval(args) -> int:
    if args.groups % 2 == 0 or args.groups < 1:
        raise _UsageError("--groups must be a positive odd integer")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in ("race", "rs"):
            raise _UsageError(f"unknown method {m!r}")
    try:
        sizes = [int(s) for s in args.sizes.split(",")]
    except ValueError:
        raise _UsageError("--sizes must be comma-separated integers") from None
    if args.repeats < 1:
        raise _UsageError("--repeats must be >= 1")

    dataset = list(_reader(args.input, args.format, args.dim))
    if not dataset:
        raise DatasetFormatError(0, "input contains no vectors")
    dim = dataset[0].dim
    queries = _load_queries(args)
    hash_range = _default_range(args.kind, args.power, args.hash_range)
    kernel = KernelEval(
        kind=Family(args.kind),
        sigma=args.sigma if args.kind != "srp" else None,
        power=args.power,
    )
    exact = [exact_kde(dataset, q, kernel) for q in queries]

    records = []
    for budget in sizes:
        for rep in range(args.repeats):
            for method in methods:
                seed = derive_seed(args.seed, method, rep * 10_000_000 + budget)
                if method == "race":
                    rows = (budget - HEADER_SIZE - 4) // (8 * hash_range)
                    if rows < 1:
                        raise _UsageError(
                            f"budget {budget} too small for range {hash_range}"
                        )
                    cfg = LshConfig(
                        kind=Family(args.kind),
                        dim=dim,
                        sigma=args.sigma if args.kind != "srp" else 0.0,
                        power=args.power,
                        rows=rows,
                        hash_range=hash_range,
                        seed=seed,
                    )
                    sketch = RaceSketch(cfg)
                    for x in dataset:
                        sketch.add(x)
                    size = sketch.memory_bytes()
                    params = f"budget={budget},rows={rows},range={hash_range},rep={rep}"
                    estimates = [sketch.estimate(q, args.groups).value for q in queries]
                else:
                    per_sample = sample_bytes(dataset[:1])
                    m = max(1, budget // per_sample)
                    rs = ReservoirSample(m, seed)
                    rs.extend(dataset)
                    size = rs.memory_bytes()
                    params = f"budget={budget},samples={m},rep={rep}"
                    estimates = [rs.estimate(q, kernel) for q in queries]
                for qid, (ex, est) in enumerate(zip(exact, estimates)):
                    records.append(
                        EvalRecord(
                            query_id=qid,
                            method=method,
                            params=params,
                            bytes=size,
                            exact=ex,
                            estimate=est,
                        )
                    )
    write_eval_csv(records, args.output)
    print(f"rows={len(records)} output={args.output}")
    return 0


_COMMANDS = {
    "sketch": cmd_sketch,
    "query": cmd_query,
    "merge": cmd_merge,
    "info": cmd_info,
    "eval": cmd_eval,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"racekde: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (
        DatasetFormatError,
        SketchFormatError,
        ConfigMismatchError,
        DimensionMismatchError,
        FileNotFoundError,
    ) as exc:
        print(f"racekde: error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
