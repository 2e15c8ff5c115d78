"""The three exchangeable exact samplers over a structure spec.

* hard rejection: draw the full independent vector, keep it when the
  weighted sum hits the target;
* deterministic second half: leave one index out, its completion is
  forced, accept in proportion to the forced point mass;
* table completion: leave an index set out, accept the residual weight
  in proportion to its tilted table mass, then unrank the completion.

All three produce exactly the uniform law over weight-n objects; they
differ only in rejection cost.  Engines run in "fast" (float) or
"exact" (rational bit-stream) arithmetic.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import Future
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .randomness import SampleRng
from .structures import (ComponentVector, Stage1Sampler, StructureSpec,
                         component_distribution, tilt_set_partition)
from .tables import (CountTable, build_distinct_table, build_partition_table,
                     build_restricted_table, euler_sample, unrank_distinct,
                     unrank_partition, unrank_restricted)

_FUTURE_BUFFER = 4096
_MAX_BATCH_CELLS = 1 << 21  # batch rows capped so int64 matrices stay small


class BudgetExhaustedError(RuntimeError):
    """Attempt cap hit before an acceptance; the target may be unreachable."""


@dataclass
class RejectionStats:
    attempts: int = 0
    acceptances: int = 0
    stage1_component_draws: int = 0
    wall_times: dict = field(default_factory=dict)

    def add_time(self, phase: str, seconds: float):
        self.wall_times[phase] = self.wall_times.get(phase, 0.0) + seconds

    def rejection_ratio(self) -> float:
        return self.attempts / self.acceptances if self.acceptances else math.inf


# ---------------------------------------------------------------------------
# acceptance function
# ---------------------------------------------------------------------------

class AcceptanceFunction:
    """Soft-rejection probability t(y) for a residual weight y.

    t(y) is the tilted table mass at y divided by its maximum over all
    residuals 0..n, so 0 <= t <= 1 with equality at every argmax.  The
    product of per-index normalization constants cancels in the
    quotient and is never computed.  Assemblies carry an extra 1/y!
    in the tilted mass.
    """

    def __init__(self, spec: StructureSpec, index_set, table: CountTable,
                 mode: str = "fast"):
        self.spec = spec
        self.index_set = frozenset(index_set)
        self.table = table
        self.mode = mode
        self.n = spec.n
        if table.max_weight() < spec.n:
            raise ValueError("table does not cover residual weights up to n")
        counts = [self._table_count(ell) for ell in range(self.n + 1)]
        factorial_weighted = spec.kind == "assembly"
        if mode == "exact":
            x = spec.tilt
            vals = []
            xp = Fraction(1)
            for ell, c in enumerate(counts):
                v = c * xp
                if factorial_weighted:
                    v /= math.factorial(ell)
                vals.append(v)
                xp *= x
            self._vals = vals
            self.tilted_max = max(vals)
            self.argmax = vals.index(self.tilted_max)
            self.log_tilted_max = (math.log(self.tilted_max.numerator)
                                   - math.log(self.tilted_max.denominator))
        else:
            logx = math.log(float(spec.tilt))
            logv = np.full(self.n + 1, -math.inf)
            for ell, c in enumerate(counts):
                if c > 0:
                    v = math.log(c) + ell * logx
                    if factorial_weighted:
                        v -= math.lgamma(ell + 1)
                    logv[ell] = v
            self.argmax = int(np.argmax(logv))
            self.log_tilted_max = float(logv[self.argmax])
            self.tilted_max = math.exp(self.log_tilted_max)
            self.t_array = np.exp(logv - self.log_tilted_max)
            self._logv = logv

    def _table_count(self, ell: int) -> int:
        if self.table.kind in ("partitionBounded", "distinctBounded"):
            return self.table.entry(ell, self.table.k)
        return self.table.count(ell)

    def tilted_value(self, ell: int):
        """T(ell) * x**ell / (ell! for assemblies); exact or float by mode."""
        if self.mode == "exact":
            return self._vals[ell]
        return math.exp(self._logv[ell])

    def t(self, y: int):
        """Acceptance probability at residual weight y (0 outside 0..n)."""
        if y < 0 or y > self.n:
            return Fraction(0) if self.mode == "exact" else 0.0
        if self.mode == "exact":
            return self._vals[y] / self.tilted_max
        return float(self.t_array[y])


def accept_test(t, rng: SampleRng, mode: str = "exact") -> bool:
    """True with probability t.

    Exact mode compares a lazily extended bit stream against the binary
    expansion of the rational t (about two bits consumed); fast mode
    compares one 53-bit uniform.
    """
    if mode == "exact":
        return rng.bernoulli(Fraction(t))
    return float(rng.np.random()) < t


# ---------------------------------------------------------------------------
# index-set policies and default tables
# ---------------------------------------------------------------------------

def parse_policy(policy):
    """Normalize 'prefix:3' / ('prefix', 3) style policies."""
    if isinstance(policy, str):
        name, _, arg = policy.partition(":")
        if not arg:
            raise ValueError(f"policy {policy!r} needs an argument, e.g. prefix:3")
        value = float(arg) if name == "window" else int(arg)
        return name, value
    name, value = policy
    return name, value


def choose_index_set(spec: StructureSpec, policy) -> frozenset:
    """Index set selection: prefix(k), singleton(i), or window(alpha).

    The window rule centers on the root of x*exp(x) = n and spans
    alpha standard deviations of block size; it applies to assemblies.
    """
    name, value = parse_policy(policy)
    if name == "prefix":
        k = int(value)
        if k < 1:
            raise ValueError("prefix size must be >= 1")
        return frozenset(range(1, min(k, spec.n) + 1))
    if name == "singleton":
        i = int(value)
        if not (1 <= i <= spec.n):
            raise ValueError(f"singleton index {i} outside 1..{spec.n}")
        return frozenset({i})
    if name == "window":
        if spec.kind != "assembly":
            raise ValueError("the window policy applies to assemblies only")
        alpha = float(value)
        x = float(tilt_set_partition(spec.n))
        lo = max(1, round(x - alpha * math.sqrt(x)))
        hi = min(spec.n, max(1, round(x + alpha * math.sqrt(x))))
        if lo > hi:
            raise ValueError("window policy produced an empty index set")
        return frozenset(range(lo, hi + 1))
    raise ValueError(f"unknown index-set policy {name!r}")


def default_pivot(spec: StructureSpec) -> int:
    """Default left-out index for the deterministic-second-half sampler."""
    if spec.kind == "assembly":
        return min(spec.n, max(1, int(float(spec.tilt))))
    return 1


def default_engine_table(spec: StructureSpec, index_set, n: int | None = None) -> CountTable:
    """Bounded table for plain prefixes, restricted table otherwise."""
    n = spec.n if n is None else n
    sizes = sorted(index_set)
    plain_prefix = (sizes == list(range(1, len(sizes) + 1))
                    and all(spec.multiplicity(i) == 1 for i in sizes)
                    and all(spec.weight(i) == i for i in sizes))
    if plain_prefix and spec.kind == "multiset":
        return build_partition_table(n, len(sizes))
    if plain_prefix and spec.kind == "selection":
        return build_distinct_table(n, len(sizes))
    return build_restricted_table(spec, sizes, n)


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------

class _Engine:
    """Shared plumbing: child streams, stats, attempt caps, batching.

    Three child streams are split from the engine's root so that stage
    one, acceptance and completion each consume their own sequence; the
    mapping from attempt index to random input is then independent of
    batch sizes and of table-build overlap.
    """

    method = "base"

    def __init__(self, spec: StructureSpec, mode: str = "fast", rng=None,
                 seed=None, attempt_cap: int = 10 ** 7):
        if mode not in ("fast", "exact"):
            raise ValueError("mode must be 'fast' or 'exact'")
        self.spec = spec
        self.mode = mode
        self.rng = rng if rng is not None else SampleRng.from_seed(seed)
        self._rng_stage1, self._rng_accept, self._rng_complete = self.rng.spawn(3)
        self.attempt_cap = attempt_cap
        self.stats = RejectionStats()
        self._stage1 = Stage1Sampler(spec)
        self._use_process = (spec.kind == "assembly")
        per_row = max(1, self._stage1.component_count())
        self._batch_cap = max(32, min(8192, _MAX_BATCH_CELLS // per_row))

    # subclasses: _accept_batch(zrows, msums, u) -> bool mask,
    #             _finish(row_counts, y) -> ComponentVector

    def sample(self) -> ComponentVector:
        for vec, _ in self.sample_many(1):
            return vec
        raise RuntimeError("sampler yielded nothing")

    def sample_many(self, count: int):
        if self.mode == "exact":
            yield from self._run_exact(count)
        else:
            yield from self._run_fast(count)

    # -- fast path ----------------------------------------------------

    def _prepared_batches(self):
        """Stage-one attempts drawn before the main loop (table overlap)."""
        return ()

    def _run_fast(self, count: int):
        n = self.spec.n
        produced = 0
        pending = 0
        queued = list(self._prepared_batches())
        while produced < count:
            if queued:
                rows, msums, units = queued.pop(0)
            else:
                est = (self.stats.attempts + pending) // max(1, self.stats.acceptances) + 1
                want = (count - produced) * est
                batch = int(min(self._batch_cap, max(32, 2 * pending, want)))
                rows, msums, units = self._draw_batch_fast(batch)
            self.stats.stage1_component_draws += units
            b = len(msums)
            u = self._rng_accept.np.random(b)
            acc = self._accept_mask(msums, u)
            start = 0
            for h in np.flatnonzero(acc):
                h = int(h)
                attempts = pending + (h - start + 1)
                pending = 0
                start = h + 1
                vec = self._finish_fast(rows, h, n - int(msums[h]))
                if vec.weight(self.spec) != n:
                    raise AssertionError("accepted object violates the weight target")
                self.stats.attempts += attempts
                self.stats.acceptances += 1
                yield vec, attempts
                produced += 1
                if produced == count:
                    return
            pending += b - start
            if pending > self.attempt_cap:
                raise BudgetExhaustedError(
                    f"no acceptance within {self.attempt_cap} attempts")

    def _draw_batch_fast(self, batch: int):
        if self._use_process:
            msums, row, units = self._stage1.draw_batch_process(
                batch, self._rng_stage1.np)
            return row, msums, units
        zmat, msums = self._stage1.draw_batch(batch, self._rng_stage1.np)
        return zmat, msums, batch * self._stage1.component_count()

    def _stage1_vector(self, rows, h: int) -> ComponentVector:
        z = rows(h) if callable(rows) else rows[h]
        return ComponentVector.from_dense(self._stage1.active, z)

    # -- exact path ---------------------------------------------------

    def _run_exact(self, count: int):
        n = self.spec.n
        queued = list(self._prepared_exact_attempts())
        for _ in range(count):
            attempts = 0
            while True:
                attempts += 1
                if attempts > self.attempt_cap:
                    raise BudgetExhaustedError(
                        f"no acceptance within {self.attempt_cap} attempts")
                if queued:
                    counts, msum = queued.pop(0)
                else:
                    counts, msum, drawn = self._stage1.draw_one_exact(
                        self._rng_stage1, stop_above=n)
                    self.stats.stage1_component_draws += drawn
                vec = self._try_accept_exact(counts, n - msum)
                if vec is not None:
                    break
            if vec.weight(self.spec) != n:
                raise AssertionError("accepted object violates the weight target")
            self.stats.attempts += attempts
            self.stats.acceptances += 1
            yield vec, attempts

    def _prepared_exact_attempts(self):
        return ()


class HardRejectionSampler(_Engine):
    """Exact Boltzmann sampling: accept when the full vector hits n."""

    method = "hard"

    def __init__(self, spec: StructureSpec, **kw):
        super().__init__(spec.with_index_set(frozenset()), **kw)

    def _accept_mask(self, msums, u):
        return msums == self.spec.n

    def _finish_fast(self, rows, h, y):
        return self._stage1_vector(rows, h)

    def _try_accept_exact(self, counts, y):
        if y == 0:
            return ComponentVector.from_dict(counts)
        return None


class DshSampler(_Engine):
    """Leave one index out; its count is forced by the residual weight.

    Accepts in proportion to the forced point mass over the modal point
    mass, which is the best constant available without a table.
    """

    method = "dsh"

    def __init__(self, spec: StructureSpec, pivot: int | None = None, **kw):
        pivot = default_pivot(spec) if pivot is None else int(pivot)
        if not (1 <= pivot <= spec.n):
            raise ValueError(f"pivot index {pivot} outside 1..{spec.n}")
        super().__init__(spec.with_index_set(frozenset({pivot})), **kw)
        self.pivot = pivot
        self.dist = component_distribution(spec, pivot)
        self.mode_k, self.mode_mass = self.dist.mode_with_mass()
        self._w = spec.weight(pivot)
        self._mult = spec.multiplicity(pivot)
        self._support_cap = self.dist.support_max()
        self._log_mode = (math.log(self.mode_mass.numerator)
                          - math.log(self.mode_mass.denominator))
        self._logq = self._w * math.log(float(spec.tilt))

    def _log_unnorm_vec(self, z):
        m = self._mult
        kind = self.dist.kind
        if kind in ("geometric", "negative_binomial"):
            lg = gammaln(m + z) - gammaln(z + 1) - gammaln(m)
        elif kind == "binomial":
            zc = np.minimum(z, m)
            lg = gammaln(m + 1) - gammaln(zc + 1) - gammaln(m - zc + 1)
        else:
            lg = z * (math.log(m) - math.lgamma(self.pivot + 1)) - gammaln(z + 1)
        return lg + z * self._logq

    def _accept_mask(self, msums, u):
        y = self.spec.n - msums
        ok = (y >= 0) & (y % self._w == 0)
        z = np.where(ok, y // self._w, 0)
        if self._support_cap is not None:
            ok &= z <= self._support_cap
        ratio = np.exp(self._log_unnorm_vec(z) - self._log_mode)
        return ok & (u < ratio)

    def _finish_fast(self, rows, h, y):
        vec = self._stage1_vector(rows, h)
        z = y // self._w
        if z:
            vec = vec.merge(ComponentVector.from_dict({self.pivot: z}))
        return vec

    def _try_accept_exact(self, counts, y):
        if y < 0 or y % self._w:
            return None
        z = y // self._w
        mass = self.dist.unnormalized_mass(z)
        if mass == 0:
            return None
        if not self._rng_accept.bernoulli(mass / self.mode_mass):
            return None
        out = dict(counts)
        if z:
            out[self.pivot] = z
        return ComponentVector.from_dict(out)


class PdcRecursiveSampler(_Engine):
    """Divide at an index set; accept by tilted table mass, then unrank.

    ``table`` may be a finished CountTable or a concurrent Future for
    one; in the latter case stage-one attempts are drawn and buffered
    while the table is still building.
    """

    method = "pdc-recursive"

    def __init__(self, spec: StructureSpec, index_set, table=None, **kw):
        index_set = frozenset(index_set)
        if not index_set:
            raise ValueError("index set must be nonempty; use hard rejection instead")
        if any(i < 1 or i > spec.n for i in index_set):
            raise ValueError("index set must lie in 1..n")
        super().__init__(spec.with_index_set(index_set), **kw)
        self.division = index_set
        self._pending_future = None
        self._buffered_fast = []
        self._buffered_exact = []
        if isinstance(table, Future):
            self._pending_future = table
            self._await_table()
        else:
            if table is None:
                t0 = time.perf_counter()
                table = default_engine_table(self.spec, index_set)
                self.stats.add_time("table_build", time.perf_counter() - t0)
            self._install_table(table)

    def _install_table(self, table: CountTable):
        if table.max_weight() < self.spec.n:
            raise ValueError("table maxWeight is below the target n")
        self.table = table
        self.af = AcceptanceFunction(self.spec, self.division, table, self.mode)
        bounded = table.kind in ("partitionBounded", "distinctBounded")
        if bounded and sorted(self.division) != list(range(1, table.k + 1)):
            raise ValueError("bounded tables pair with prefix index sets only")

    def _await_table(self):
        """Buffer stage-one attempts until the table future resolves."""
        fut = self._pending_future
        t0 = time.perf_counter()
        while not fut.done() and (len(self._buffered_fast)
                                  + len(self._buffered_exact)) < _FUTURE_BUFFER:
            if self.mode == "exact":
                counts, msum, drawn = self._stage1.draw_one_exact(
                    self._rng_stage1, stop_above=self.spec.n)
                self.stats.stage1_component_draws += drawn
                self._buffered_exact.append((counts, msum))
            else:
                rows, msums, units = self._draw_batch_fast(64)
                if callable(rows):
                    rows = np.vstack([rows(j) for j in range(len(msums))])
                self.stats.stage1_component_draws += units
                self._buffered_fast.append((rows, msums, 0))
        self._install_table(fut.result())
        self.stats.add_time("table_wait", time.perf_counter() - t0)
        self._pending_future = None

    def _prepared_batches(self):
        out, self._buffered_fast = self._buffered_fast, []
        return out

    def _prepared_exact_attempts(self):
        out, self._buffered_exact = self._buffered_exact, []
        return out

    def _accept_mask(self, msums, u):
        y = self.spec.n - msums
        valid = (y >= 0) & (y <= self.spec.n)
        tv = self.af.t_array[np.clip(y, 0, self.spec.n)]
        return valid & (u < tv)

    def _complete(self, y: int) -> ComponentVector:
        if y == 0:
            return ComponentVector()
        if self.table.kind == "partitionBounded":
            parts = unrank_partition(self.table, y, self.table.k, self._rng_complete)
            return ComponentVector.from_parts(parts)
        if self.table.kind == "distinctBounded":
            parts = unrank_distinct(self.table, y, self.table.k, self._rng_complete)
            return ComponentVector.from_parts(parts)
        return unrank_restricted(self.table, y, self._rng_complete)

    def _finish_fast(self, rows, h, y):
        return self._stage1_vector(rows, h).merge(self._complete(y))

    def _try_accept_exact(self, counts, y):
        if y < 0 or y > self.spec.n or self.af._table_count(y) == 0:
            return None
        if not self._rng_accept.bernoulli(self.af.t(y)):
            return None
        return ComponentVector.from_dict(counts).merge(self._complete(y))


class EulerSampler:
    """Divisor-method sampler for unrestricted partitions; no rejection.

    Adapts the table walk to the engine interface so front ends can
    treat every method uniformly.
    """

    method = "euler"

    def __init__(self, spec: StructureSpec, mode: str = "fast", rng=None,
                 seed=None, attempt_cap: int = 10 ** 7):
        if spec.kind != "multiset" or spec.multiplicity_overrides or spec.weight_overrides:
            raise ValueError("the divisor method applies to plain integer partitions")
        self.spec = spec
        self.mode = mode
        self.rng = rng if rng is not None else SampleRng.from_seed(seed)
        self.stats = RejectionStats()

    def sample(self) -> ComponentVector:
        for vec, _ in self.sample_many(1):
            return vec
        raise RuntimeError("sampler yielded nothing")

    def sample_many(self, count: int):
        for _ in range(count):
            parts = euler_sample(self.spec.n, self.rng)
            self.stats.attempts += 1
            self.stats.acceptances += 1
            yield ComponentVector.from_parts(parts), 1


# ---------------------------------------------------------------------------
# one-shot wrappers and reporting
# ---------------------------------------------------------------------------

def hard_rejection(spec: StructureSpec, rng: SampleRng | None = None,
                   mode: str = "fast", attempt_cap: int = 10 ** 7) -> ComponentVector:
    """One uniform object by rejection on the full independent vector."""
    return HardRejectionSampler(spec, mode=mode, rng=rng, attempt_cap=attempt_cap).sample()


def pdc_dsh(spec: StructureSpec, pivot: int | None = None,
            rng: SampleRng | None = None, mode: str = "fast",
            attempt_cap: int = 10 ** 7) -> ComponentVector:
    """One uniform object with a single deterministic completion index."""
    return DshSampler(spec, pivot=pivot, mode=mode, rng=rng,
                      attempt_cap=attempt_cap).sample()


def pdc_recursive(spec: StructureSpec, index_set, table=None,
                  rng: SampleRng | None = None, mode: str = "fast",
                  attempt_cap: int = 10 ** 7) -> ComponentVector:
    """One uniform object with a table-driven second stage."""
    return PdcRecursiveSampler(spec, index_set, table=table, mode=mode,
                               rng=rng, attempt_cap=attempt_cap).sample()


def _log_normalization_product(spec: StructureSpec, index_set) -> float:
    s = 0.0
    for i in index_set:
        d = component_distribution(spec, i)
        q = float(spec.tilt) ** d.weight
        if d.kind in ("geometric", "negative_binomial"):
            s += d.multiplicity * math.log1p(-q)
        elif d.kind == "binomial":
            s -= d.multiplicity * math.log1p(q)
        else:
            s -= float(d.poisson_rate())
    return s


def boost_factor(spec: StructureSpec, index_set, table: CountTable | None = None) -> float:
    """Rejection-cost saving of the division over hard rejection.

    The inverse of the maximal probability that the left-out indices
    complete any given stage-one residual; an empty index set is worth
    exactly 1 (no saving).
    """
    index_set = frozenset(index_set)
    if not index_set:
        return 1.0
    if table is None:
        table = default_engine_table(spec, index_set)
    af = AcceptanceFunction(spec, index_set, table, mode="fast")
    return math.exp(-af.log_tilted_max - _log_normalization_product(spec, index_set))


def make_sampler(spec: StructureSpec, method: str, policy=None, table=None,
                 mode: str = "fast", rng=None, seed=None,
                 attempt_cap: int = 10 ** 7):
    """Uniform front door used by the command line and the benchmarks."""
    if method == "hard":
        return HardRejectionSampler(spec, mode=mode, rng=rng, seed=seed,
                                    attempt_cap=attempt_cap)
    if method == "dsh":
        pivot = None
        if policy is not None:
            name, value = parse_policy(policy)
            if name != "singleton":
                raise ValueError("dsh accepts only singleton:<i> policies")
            pivot = int(value)
        return DshSampler(spec, pivot=pivot, mode=mode, rng=rng, seed=seed,
                          attempt_cap=attempt_cap)
    if method == "pdc-recursive":
        if policy is None:
            policy = ("prefix", max(1, math.isqrt(spec.n - 1) + 1))
        index_set = choose_index_set(spec, policy)
        return PdcRecursiveSampler(spec, index_set, table=table, mode=mode,
                                   rng=rng, seed=seed, attempt_cap=attempt_cap)
    if method == "euler":
        if policy is not None:
            raise ValueError("the euler method does not take an index-set policy")
        return EulerSampler(spec, mode=mode, rng=rng, seed=seed,
                            attempt_cap=attempt_cap)
    raise ValueError(f"unknown method {method!r}")
