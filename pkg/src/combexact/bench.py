"""Rejection-cost measurement and closed-form cost predictions."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .randomness import SampleRng
from .structures import (StructureSpec, distinct_partitions, partitions,
                         set_partitions, tilt_distinct, tilt_set_partition)
from . import tables
from .pdc import BudgetExhaustedError, make_sampler

CSV_HEADER = ("structure", "method", "n", "policy", "samples",
              "mean_attempts", "stderr", "predicted", "table_ms", "sample_ms")

STRUCTURE_NAMES = ("partitions", "distinct-partitions", "set-partitions",
                   "multiset", "selection", "assembly")


def spec_for(structure: str, n: int, tilt=None) -> StructureSpec:
    """Spec with the rate-optimal default tilt for a named structure."""
    if structure in ("partitions", "multiset"):
        return partitions(n, tilt=tilt)
    if structure in ("distinct-partitions", "selection"):
        return distinct_partitions(n, tilt=tilt)
    if structure in ("set-partitions", "assembly"):
        return set_partitions(n, tilt=tilt)
    raise ValueError(f"unknown structure {structure!r}")


def predict_cost(structure: str, method: str, n: int):
    """Expected attempts per acceptance where a closed form exists, else None."""
    if method == "hard":
        if structure == "partitions":
            return (96 * n ** 3) ** 0.25
        if structure == "distinct-partitions":
            return (192 * n ** 3) ** 0.25
        if structure == "set-partitions":
            x = float(tilt_set_partition(n))
            return math.sqrt(2 * math.pi * n * (x + 1))
    if method == "dsh":
        if structure == "partitions":
            return (96 * n ** 3) ** 0.25 * math.pi / math.sqrt(6 * n)
        if structure == "distinct-partitions":
            return (192 * n ** 3) ** 0.25 / (1 + float(tilt_distinct(n)))
    return None


@dataclass
class BenchCell:
    structure: str
    method: str
    n: int
    policy: str | None = None

    @classmethod
    def from_dict(cls, d) -> "BenchCell":
        return cls(d["structure"], d["method"], int(d["n"]), d.get("policy"))


@dataclass
class CostReport:
    structure: str
    method: str
    n: int
    policy: str | None
    samples: int
    mean_attempts: float
    stderr: float
    predicted: float | None
    table_ms: float
    sample_ms: float
    budget_exhausted: bool = False

    def csv_row(self):
        return (self.structure, self.method, str(self.n),
                self.policy if self.policy else "-", str(self.samples),
                f"{self.mean_attempts:.6g}", f"{self.stderr:.6g}",
                f"{self.predicted:.6g}" if self.predicted is not None else "",
                f"{self.table_ms:.3f}", f"{self.sample_ms:.3f}")


def run_cell(cell: BenchCell, samples: int, seed_seq, mode: str = "fast",
             attempt_cap: int = 10 ** 7) -> CostReport:
    """Run one grid cell with its own stream; attempts are stage-one draws."""
    spec = spec_for(cell.structure, cell.n)
    rng = SampleRng(seed_seq)
    if cell.method == "euler":
        t0 = time.perf_counter()
        tables._euler_tables(cell.n)
        table_ms = (time.perf_counter() - t0) * 1e3
    else:
        table_ms = 0.0
    engine = make_sampler(spec, cell.method, policy=cell.policy, mode=mode,
                          rng=rng, attempt_cap=attempt_cap)
    table_ms += engine.stats.wall_times.get("table_build", 0.0) * 1e3
    attempts = []
    exhausted = False
    t0 = time.perf_counter()
    try:
        for _, a in engine.sample_many(samples):
            attempts.append(a)
    except BudgetExhaustedError:
        exhausted = True
    sample_ms = (time.perf_counter() - t0) * 1e3
    arr = np.array(attempts, dtype=float)
    mean = float(arr.mean()) if len(arr) else math.nan
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else math.nan
    return CostReport(cell.structure, cell.method, cell.n, cell.policy,
                      len(arr), mean, stderr,
                      predict_cost(cell.structure, cell.method, cell.n),
                      table_ms, sample_ms, exhausted)


def _run_cell_args(args):
    return run_cell(*args)


def run_benchmark(cells, samples_per_cell: int, seed=0, mode: str = "fast",
                  workers: int = 1, attempt_cap: int = 10 ** 7):
    """Run every cell on its own child stream; reports come back in grid order."""
    cells = [c if isinstance(c, BenchCell) else BenchCell.from_dict(c) for c in cells]
    children = np.random.SeedSequence(seed).spawn(len(cells))
    jobs = [(c, samples_per_cell, s, mode, attempt_cap)
            for c, s in zip(cells, children)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell_args, jobs))
    return [_run_cell_args(j) for j in jobs]


def write_csv(reports, fileobj):
    writer = csv.writer(fileobj)
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow(r.csv_row())
