"""Command-line front end: sample, table, bench, verify.

Exit codes: 0 success, 1 statistical failure or exhausted attempt
budget, 2 exact-value mismatch, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import secrets
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed

import numpy as np

from . import bench as bench_mod
from .bench import BenchCell, run_benchmark, spec_for, write_csv
from .oracle import (CensusMismatchError, NonUniformLawError,
                     chi_square_uniformity, enumerate_objects,
                     exact_conditional_law)
from .pdc import BudgetExhaustedError, make_sampler
from .randomness import SampleRng
from .structures import ComponentVector
from .tables import (CountTable, build_bell, build_distinct_table,
                     build_partition_table, build_restricted_table,
                     realize_set_partition)

EXIT_OK = 0
EXIT_STATISTICAL = 1
EXIT_EXACT = 2
EXIT_CONFIG = 3

PART_STRUCTURES = ("partitions", "distinct-partitions", "multiset", "selection")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _default_mode() -> str:
    mode = os.environ.get("COMBEXACT_MODE", "fast")
    if mode not in ("fast", "exact"):
        raise ConfigError(f"COMBEXACT_MODE must be 'fast' or 'exact', not {mode!r}")
    return mode


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w"), True


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------

def _format_row(structure, n, vec: ComponentVector, blocks, attempts, seed, fmt):
    if fmt == "jsonl":
        row = {"n": n, "counts": {str(i): z for i, z in vec.counts}}
        if structure in ("partitions", "distinct-partitions"):
            row["parts"] = vec.to_parts()
        if blocks is not None:
            row["blocks"] = [list(b) for b in blocks]
        row["attempts"] = attempts
        row["seed"] = seed
        return json.dumps(row, separators=(", ", ": "))
    if blocks is not None:
        return "".join("{" + ",".join(map(str, b)) + "}" for b in blocks)
    if structure in ("partitions", "distinct-partitions"):
        return " ".join(map(str, vec.to_parts()))
    return " ".join(f"{i}:{z}" for i, z in vec.counts)


def _sample_chunk(job):
    (structure, n, tilt, method, policy, mode, count, child_state, seed,
     attempt_cap, fmt) = job
    rng = SampleRng(child_state)
    engine_rng, realize_rng = rng.spawn(2)
    spec = spec_for(structure, n, tilt=tilt)
    engine = make_sampler(spec, method, policy=policy, mode=mode,
                          rng=engine_rng, attempt_cap=attempt_cap)
    lines = []
    for vec, attempts in engine.sample_many(count):
        blocks = None
        if structure == "set-partitions":
            blocks = realize_set_partition(vec, n, realize_rng)
        lines.append(_format_row(structure, n, vec, blocks, attempts, seed, fmt))
    return lines


def cmd_sample(args) -> int:
    mode = args.mode or _default_mode()
    if args.method == "euler" and args.structure != "partitions":
        raise ConfigError("the euler method applies to partitions only")
    if args.format == "csv":
        raise ConfigError("sample output is jsonl or text; csv is for bench")
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    print(f"seed={seed}", file=sys.stderr)
    workers = max(1, args.workers)
    counts = [args.count // workers] * workers
    for w in range(args.count % workers):
        counts[w] += 1
    children = np.random.SeedSequence(seed).spawn(workers)
    tilt = args.tilt
    jobs = [(args.structure, args.n, tilt, args.method, args.policy, mode,
             c, ss, seed, args.attempt_cap, args.format)
            for c, ss in zip(counts, children) if c > 0]

    out, close = _open_out(args.output)
    try:
        if len(jobs) <= 1:
            for job in jobs:
                for line in _sample_chunk(job):
                    out.write(line + "\n")
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(_sample_chunk, job): i
                           for i, job in enumerate(jobs)}
                if args.ordered:
                    results = [None] * len(jobs)
                    for fut, i in futures.items():
                        results[i] = fut.result()
                    for lines in results:
                        for line in lines:
                            out.write(line + "\n")
                else:
                    for fut in as_completed(futures):
                        for line in fut.result():
                            out.write(line + "\n")
    finally:
        if close:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# table
# ---------------------------------------------------------------------------

def _parse_index_set(text, n):
    if not text:
        return None
    vals = sorted({int(v) for v in text.split(",")})
    if any(v < 1 or v > n for v in vals):
        raise ConfigError("index set entries must lie in 1..n")
    return vals


def build_cli_table(structure, n, k=None, index_set=None) -> CountTable:
    if structure == "partitions" and index_set is None:
        return build_partition_table(n, n if k is None else k)
    if structure == "distinct-partitions" and index_set is None:
        return build_distinct_table(n, n if k is None else k)
    if structure == "set-partitions" and index_set is None:
        return build_bell(n)
    spec = spec_for(structure, n)
    sizes = index_set if index_set is not None else list(range(1, n + 1))
    return build_restricted_table(spec, sizes, n)


def cmd_table(args) -> int:
    index_set = _parse_index_set(args.index_set, args.n)
    table = build_cli_table(args.structure, args.n, args.k, index_set)
    out, close = _open_out(args.output)
    try:
        out.write(table.dumps())
    finally:
        if close:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cmd_bench(args) -> int:
    mode = args.mode or _default_mode()
    if args.grid:
        with open(args.grid) as fh:
            cells = [BenchCell.from_dict(d) for d in json.load(fh)]
    else:
        if not (args.structure and args.method and args.n):
            raise ConfigError("bench needs --grid or --structure/--method/--n")
        cells = [BenchCell(args.structure, args.method, args.n, args.policy)]
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    print(f"seed={seed}", file=sys.stderr)
    reports = run_benchmark(cells, args.samples, seed=seed, mode=mode,
                            workers=max(1, args.workers),
                            attempt_cap=args.attempt_cap)
    out, close = _open_out(args.output)
    try:
        write_csv(reports, out)
    finally:
        if close:
            out.close()
    return EXIT_STATISTICAL if any(r.budget_exhausted for r in reports) else EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

class _Verifier:
    def __init__(self):
        self.worst = EXIT_OK

    def report(self, ok: bool, name: str, detail: str, failure_class: int):
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            self.worst = max(self.worst, failure_class)


def _verify_tables(v: _Verifier, structure, n):
    spec = spec_for(structure, n)
    top = min(n, 12)
    if structure in ("partitions", "multiset"):
        table = build_partition_table(top, top)
        restricted = build_restricted_table(spec, range(1, top + 1), top)
        for j in range(1, top + 1):
            census = enumerate_objects(spec, n=j)
            ok = table.entry(j, j) == census.total_count() == restricted.count(j)
            v.report(ok, f"table-count n={j}",
                     f"count={table.entry(j, j)} census={census.total_count()}",
                     EXIT_EXACT)
            if not ok:
                return
    elif structure in ("distinct-partitions", "selection"):
        table = build_distinct_table(top, top)
        restricted = build_restricted_table(spec, range(1, top + 1), top)
        for j in range(1, top + 1):
            census = enumerate_objects(spec, n=j)
            ok = table.entry(j, j) == census.total_count() == restricted.count(j)
            v.report(ok, f"table-count n={j}",
                     f"count={table.entry(j, j)} census={census.total_count()}",
                     EXIT_EXACT)
            if not ok:
                return
    else:
        bell = build_bell(top)
        restricted = build_restricted_table(spec, range(1, top + 1), top)
        for j in range(1, top + 1):
            census = enumerate_objects(spec, n=j)
            ok = bell.count(j) == census.total_count() == restricted.count(j)
            v.report(ok, f"table-count n={j}",
                     f"count={bell.count(j)} census={census.total_count()}",
                     EXIT_EXACT)
            if not ok:
                return


def _verify_law(v: _Verifier, structure, n):
    if n > 6:
        return
    try:
        law = exact_conditional_law(spec_for(structure, n))
        v.report(True, "exact-law", f"uniform over {len(law)} objects", EXIT_EXACT)
    except NonUniformLawError as e:
        v.report(False, "exact-law", str(e), EXIT_EXACT)


def _verify_sampling(v: _Verifier, structure, n, methods, samples, seed, mode, alpha):
    spec = spec_for(structure, n)
    census = enumerate_objects(spec)
    root = np.random.SeedSequence(seed)
    for method, child in zip(methods, root.spawn(len(methods))):
        engine = make_sampler(spec, method, mode=mode, rng=SampleRng(child))
        try:
            vecs = [vec for vec, _ in engine.sample_many(samples)]
            p = chi_square_uniformity(vecs, census)
        except CensusMismatchError as e:
            v.report(False, f"sampling-{method}", str(e), EXIT_EXACT)
            continue
        except ValueError as e:
            print(f"SKIP sampling-{method}: {e}")
            continue
        v.report(p > alpha, f"sampling-{method}",
                 f"p={p:.5f} threshold={alpha} samples={samples}", EXIT_STATISTICAL)


def _rebuild_from_dump(table: CountTable) -> CountTable:
    n, k = table.n, table.k
    if table.kind == "partitionBounded":
        return build_partition_table(n, k)
    if table.kind == "distinctBounded":
        return build_distinct_table(n, k)
    if table.kind == "bell":
        return build_bell(n)
    kind_to_structure = {"restrictedAssembly": "set-partitions",
                         "restrictedMultiset": "partitions",
                         "restrictedSelection": "distinct-partitions"}
    spec = spec_for(kind_to_structure[table.kind], max(n, 1))
    return build_restricted_table(spec, table.index_set, n)


def _verify_table_file(v: _Verifier, path):
    with open(path) as fh:
        text = fh.read()
    try:
        loaded = CountTable.loads(text)
    except (ValueError, KeyError) as e:
        v.report(False, "table-file", f"unparseable dump: {e}", EXIT_EXACT)
        return
    rebuilt = _rebuild_from_dump(loaded)
    ok = rebuilt.dumps() == text
    v.report(ok, "table-file",
             f"{loaded.kind} n={loaded.n} " + ("matches rebuild" if ok else "differs from rebuild"),
             EXIT_EXACT)


def _verify_input_file(v: _Verifier, path, structure, n, alpha):
    vecs = []
    bad = 0
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            vec = ComponentVector.from_dict({int(i): z for i, z in row["counts"].items()})
            if vec.weight() != row["n"]:
                bad += 1
            if "blocks" in row:
                sizes = sorted(len(b) for b in row["blocks"])
                if sizes != sorted(vec.to_parts()):
                    bad += 1
            vecs.append(vec)
    v.report(bad == 0, "input-weights",
             f"{len(vecs)} rows, {bad} weight violations", EXIT_EXACT)
    if structure and n and n <= 12 and bad == 0 and vecs:
        census = enumerate_objects(spec_for(structure, n))
        try:
            p = chi_square_uniformity(vecs, census)
        except CensusMismatchError as e:
            v.report(False, "input-census", str(e), EXIT_EXACT)
            return
        except ValueError as e:
            print(f"SKIP input-census: {e}")
            return
        v.report(p > alpha, "input-census", f"p={p:.5f}", EXIT_STATISTICAL)


def cmd_verify(args) -> int:
    mode = args.mode or _default_mode()
    v = _Verifier()
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    if args.table:
        _verify_table_file(v, args.table)
    if args.input:
        _verify_input_file(v, args.input, args.structure, args.n, args.alpha)
    if args.structure and args.n and not args.input:
        if args.n > 12:
            raise ConfigError("verify enumerates exhaustively; use n <= 12")
        if args.methods:
            methods = args.methods.split(",")
        elif args.structure == "partitions":
            methods = ["hard", "dsh", "pdc-recursive", "euler"]
        else:
            methods = ["hard", "dsh", "pdc-recursive"]
        for m in methods:
            if m == "euler" and args.structure != "partitions":
                raise ConfigError("the euler method applies to partitions only")
        _verify_tables(v, args.structure, args.n)
        _verify_law(v, args.structure, args.n)
        _verify_sampling(v, args.structure, args.n, methods, args.samples,
                         seed, mode, args.alpha)
    elif not (args.table or args.input):
        raise ConfigError("verify needs --structure/--n, --table, or --input")
    return v.worst


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="combexact",
                     description="Exact uniform sampling of decomposable "
                                 "combinatorial structures.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_mode=True):
        p.add_argument("--seed", type=int, default=None,
                       help="root seed; drawn from entropy and echoed if omitted")
        if with_mode:
            p.add_argument("--mode", choices=("fast", "exact"), default=None,
                           help="arithmetic mode (default from COMBEXACT_MODE, else fast)")
        p.add_argument("--output", default=None, help="output path (default stdout)")

    ps = sub.add_parser("sample", help="draw uniform objects")
    ps.add_argument("--structure", required=True, choices=bench_mod.STRUCTURE_NAMES)
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--method", default="hard",
                    choices=("hard", "dsh", "pdc-recursive", "euler"))
    ps.add_argument("--policy", default=None,
                    help="index-set policy: prefix:k, window:alpha, or singleton:i")
    ps.add_argument("--count", type=int, default=1)
    ps.add_argument("--tilt", default=None,
                    help="override the tilt (rational like 2/3 or decimal)")
    ps.add_argument("--format", choices=("jsonl", "csv", "text"), default="jsonl")
    ps.add_argument("--workers", type=int, default=1)
    ps.add_argument("--ordered", action="store_true",
                    help="with workers > 1, emit in deterministic worker order")
    ps.add_argument("--attempt-cap", type=int, default=10 ** 7)
    common(ps)
    ps.set_defaults(func=cmd_sample)

    pt = sub.add_parser("table", help="dump a count table")
    pt.add_argument("--structure", required=True, choices=bench_mod.STRUCTURE_NAMES)
    pt.add_argument("--n", type=int, required=True)
    pt.add_argument("--k", type=int, default=None, help="bound for bounded tables")
    pt.add_argument("--index-set", default=None,
                    help="comma list of sizes for restricted tables")
    common(pt, with_mode=False)
    pt.set_defaults(func=cmd_table)

    pb = sub.add_parser("bench", help="measure rejection costs; CSV out")
    pb.add_argument("--grid", default=None, help="JSON list of grid cells")
    pb.add_argument("--structure", choices=bench_mod.STRUCTURE_NAMES)
    pb.add_argument("--method", choices=("hard", "dsh", "pdc-recursive", "euler"))
    pb.add_argument("--n", type=int)
    pb.add_argument("--policy", default=None)
    pb.add_argument("--samples", type=int, default=200)
    pb.add_argument("--workers", type=int, default=1)
    pb.add_argument("--attempt-cap", type=int, default=10 ** 7)
    common(pb)
    pb.set_defaults(func=cmd_bench)

    pv = sub.add_parser("verify", help="run oracle equality and uniformity checks")
    pv.add_argument("--structure", choices=bench_mod.STRUCTURE_NAMES)
    pv.add_argument("--n", type=int)
    pv.add_argument("--methods", default=None, help="comma list; default all applicable")
    pv.add_argument("--samples", type=int, default=20000)
    pv.add_argument("--alpha", type=float, default=0.001)
    pv.add_argument("--table", default=None, help="verify a table dump file")
    pv.add_argument("--input", default=None, help="verify sample jsonl output")
    common(pv)
    pv.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExhaustedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STATISTICAL
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
