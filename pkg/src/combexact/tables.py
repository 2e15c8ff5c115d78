"""Exact count tables and table-driven (unranking) samplers.

All entries are arbitrary-precision Python integers built bottom-up
from the class recursions.  Finished tables are immutable and safe to
share across concurrently running samplers.
"""

from __future__ import annotations

import math
from functools import lru_cache

from .randomness import SampleRng
from .structures import ComponentVector, StructureSpec

TABLE_KINDS = ("partitionBounded", "distinctBounded", "bell",
               "restrictedAssembly", "restrictedMultiset", "restrictedSelection")

_BOUNDED = ("partitionBounded", "distinctBounded")


class CountTable:
    """Immutable table of restricted object counts.

    Bounded kinds hold a (bound, weight) grid; the remaining kinds hold
    one row indexed by weight.  Restricted multiset/selection tables
    additionally carry the per-size walk grid used for unranking.
    """

    def __init__(self, kind, n, k=None, index_set=None, grid=None, row=None,
                 mults=None, weights=None, walk=None):
        if kind not in TABLE_KINDS:
            raise ValueError(f"unknown table kind {kind!r}")
        self.kind = kind
        self.n = n
        self.k = k
        self.index_set = tuple(sorted(index_set)) if index_set else None
        self._grid = grid
        self._row = row
        self._mults = mults      # multiplicity per index_set entry
        self._weights = weights  # weight per index_set entry
        self._walk = walk

    # -- access ---------------------------------------------------------

    def entry(self, j: int, kappa: int) -> int:
        """Count of weight-j objects with component sizes bounded by kappa."""
        if self.kind not in _BOUNDED:
            raise ValueError("entry(j, kappa) applies to bounded tables")
        if j < 0:
            return 0
        if j == 0:
            return 1
        if kappa <= 0:
            return 0
        kappa = min(kappa, j)
        if kappa > self.k or j > self.n:
            raise IndexError(f"({j}, {kappa}) outside the built ({self.n}, {self.k}) range")
        return self._grid[kappa][j]

    def count(self, j: int) -> int:
        """Count of weight-j objects (row-style tables)."""
        if self.kind in _BOUNDED:
            return self.entry(j, self.k)
        if j < 0:
            return 0
        if j > self.n:
            raise IndexError(f"weight {j} outside the built range 0..{self.n}")
        return self._row[j]

    def max_weight(self) -> int:
        return self.n

    # -- plain-text dump --------------------------------------------------

    def dumps(self) -> str:
        kpart = str(self.k) if self.k is not None else "-"
        ipart = ",".join(map(str, self.index_set)) if self.index_set else "-"
        lines = [f"{self.kind} {self.n} {kpart} {ipart}"]
        if self.kind in _BOUNDED:
            for kappa in range(1, self.k + 1):
                lines.append(" ".join(str(self._grid[kappa][j])
                                      for j in range(1, self.n + 1)))
        else:
            lines.append(" ".join(str(v) for v in self._row))
        return "\n".join(lines) + "\n"

    def dump(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "CountTable":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        kind, nstr, kstr, istr = lines[0].split()
        n = int(nstr)
        k = None if kstr == "-" else int(kstr)
        index_set = None if istr == "-" else tuple(int(v) for v in istr.split(","))
        body = [[int(v) for v in ln.split()] for ln in lines[1:]]
        if kind in _BOUNDED:
            if len(body) != k or any(len(r) != n for r in body):
                raise ValueError("bounded table body does not match its header")
            grid = [[1] + [0] * n]
            for r in body:
                grid.append([1] + r)
            return cls(kind, n, k=k, grid=tuple(map(tuple, grid)))
        if len(body) != 1 or len(body[0]) != n + 1:
            raise ValueError("row table body does not match its header")
        return cls(kind, n, k=k, index_set=index_set, row=tuple(body[0]))


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_partition_table(n: int, k: int) -> CountTable:
    """Counts of partitions of j into parts of size at most kappa.

    Boundary convention: one empty partition of weight 0, no partition
    of positive weight with bound 0, and the bound saturates at j.
    """
    if not (0 <= k <= n):
        raise ValueError("need 0 <= k <= n")
    grid = [[1] + [0] * n]
    for kappa in range(1, k + 1):
        prev = grid[kappa - 1]
        cur = [1] + [0] * n
        for j in range(1, n + 1):
            cur[j] = (cur[j - kappa] if j >= kappa else 0) + prev[j]
        grid.append(cur)
    return CountTable("partitionBounded", n, k=k, grid=tuple(map(tuple, grid)))


def build_distinct_table(n: int, k: int) -> CountTable:
    """Counts of partitions of j into distinct parts of size at most kappa."""
    if not (0 <= k <= n):
        raise ValueError("need 0 <= k <= n")
    grid = [[1] + [0] * n]
    for kappa in range(1, k + 1):
        prev = grid[kappa - 1]
        cur = [1] + [0] * n
        for j in range(1, n + 1):
            cur[j] = (prev[j - kappa] if j >= kappa else 0) + prev[j]
        grid.append(cur)
    return CountTable("distinctBounded", n, k=k, grid=tuple(map(tuple, grid)))


def build_bell(n: int) -> CountTable:
    """Counts of set partitions of 0..n labels."""
    if n < 0:
        raise ValueError("n must be >= 0")
    row = [1]
    for j in range(1, n + 1):
        row.append(sum(math.comb(j - 1, i) * row[i] for i in range(j)))
    return CountTable("bell", n, row=tuple(row))


def build_restricted_table(spec: StructureSpec, index_set=None, n=None) -> CountTable:
    """Counts of weight-j objects using only component sizes in I.

    Assemblies use the distinguished-label block recursion with binomial
    factors; multisets and selections use the divisor-sum recursion with
    the tilt factored out (counts, not tilted masses).
    """
    sizes = sorted(index_set if index_set is not None else spec.index_set)
    if not sizes:
        raise ValueError("index set must be nonempty")
    n = spec.n if n is None else n
    if n < 0:
        raise ValueError("n must be >= 0")
    if any(i < 1 for i in sizes):
        raise ValueError("component sizes must be positive")

    mults = tuple(spec.multiplicity(d) for d in sizes)
    weights = tuple(spec.weight(d) for d in sizes)

    if spec.kind == "assembly":
        if any(w != d for d, w in zip(sizes, weights)):
            raise ValueError("assembly tables require identity weights")
        row = [1] + [0] * n
        for j in range(1, n + 1):
            row[j] = sum(math.comb(j - 1, b - 1) * m * row[j - b]
                         for b, m in zip(sizes, mults) if b <= j)
        return CountTable("restrictedAssembly", n, index_set=sizes, row=tuple(row),
                          mults=mults, weights=weights)

    # divisor-sum recursion for the 1-D counts
    sign = -1 if spec.kind == "selection" else 1
    g = [0] * (n + 1)
    for d, w, m in zip(sizes, weights, mults):
        for ell in range(w, n + 1, w):
            term = w * m
            if sign < 0 and (ell // w) % 2 == 0:
                term = -term
            g[ell] += term
    row = [1] + [0] * n
    for j in range(1, n + 1):
        s = sum(g[ell] * row[j - ell] for ell in range(1, j + 1))
        q, r = divmod(s, j)
        if r:
            raise ArithmeticError(f"recursion sum not divisible at weight {j}")
        if q < 0:
            raise ArithmeticError(f"negative count at weight {j}; check I and multiplicities")
        row[j] = q

    # per-size walk grid for unranking, cross-checked against the row
    walk = [[1] + [0] * n]
    for d, w, m in zip(sizes, weights, mults):
        prev = walk[-1]
        cur = [0] * (n + 1)
        for j in range(n + 1):
            zmax = j // w
            if spec.kind == "selection":
                zmax = min(zmax, m)
            acc = 0
            for z in range(zmax + 1):
                gz = math.comb(m + z - 1, z) if spec.kind == "multiset" else math.comb(m, z)
                acc += gz * prev[j - z * w]
            cur[j] = acc
        walk.append(cur)
    if walk[-1] != row:
        raise ArithmeticError("walk grid disagrees with the divisor recursion")

    kind = "restrictedMultiset" if spec.kind == "multiset" else "restrictedSelection"
    return CountTable(kind, n, index_set=sizes, row=tuple(row),
                      mults=mults, weights=weights, walk=tuple(map(tuple, walk)))


# ---------------------------------------------------------------------------
# unranking
# ---------------------------------------------------------------------------

def unrank_partition_with_rank(table: CountTable, y: int, k: int, rank: int) -> list:
    """Deterministic rank-to-partition walk on the bounded table.

    Ranks are 1-based and ordered by cumulative counts with increasing
    largest part, matching the column walk of the recursion.
    """
    total = table.entry(y, k)
    if total <= 0:
        raise ValueError(f"no partitions of {y} with parts <= {k}")
    if not (1 <= rank <= total):
        raise ValueError(f"rank {rank} outside 1..{total}")
    parts = []
    cap = k
    r = rank
    while y > 0:
        lo, hi = 1, min(cap, y)
        while lo < hi:
            mid = (lo + hi) // 2
            if table.entry(y, mid) >= r:
                hi = mid
            else:
                lo = mid + 1
        kappa = lo
        if table.entry(y, kappa) < r:
            raise RuntimeError("rank walk escaped the table")
        parts.append(kappa)
        r -= table.entry(y, kappa - 1)
        y -= kappa
        cap = kappa
    return parts


def unrank_partition(table: CountTable, y: int, k: int, rng: SampleRng) -> list:
    """Uniform partition of y into parts <= k, via one uniform rank."""
    total = table.entry(y, k)
    if total <= 0:
        raise ValueError(f"no partitions of {y} with parts <= {k}")
    return unrank_partition_with_rank(table, y, k, 1 + rng.randint_below(total))


def unrank_distinct_with_rank(table: CountTable, y: int, k: int, rank: int) -> list:
    """Rank-to-partition walk for distinct parts; uses a part then drops the bound."""
    total = table.entry(y, k)
    if total <= 0:
        raise ValueError(f"no distinct-part partitions of {y} with parts <= {k}")
    if not (1 <= rank <= total):
        raise ValueError(f"rank {rank} outside 1..{total}")
    parts = []
    cap = k
    r = rank
    while y > 0:
        lo, hi = 1, min(cap, y)
        while lo < hi:
            mid = (lo + hi) // 2
            if table.entry(y, mid) >= r:
                hi = mid
            else:
                lo = mid + 1
        kappa = lo
        if table.entry(y, kappa) < r:
            raise RuntimeError("rank walk escaped the table")
        parts.append(kappa)
        r -= table.entry(y, kappa - 1)
        y -= kappa
        cap = kappa - 1
    return parts


def unrank_distinct(table: CountTable, y: int, k: int, rng: SampleRng) -> list:
    total = table.entry(y, k)
    if total <= 0:
        raise ValueError(f"no distinct-part partitions of {y} with parts <= {k}")
    return unrank_distinct_with_rank(table, y, k, 1 + rng.randint_below(total))


def unrank_restricted_with_rank(table: CountTable, y: int, rank: int) -> ComponentVector:
    """Component vector of the rank-th weight-y object with sizes in I."""
    total = table.count(y)
    if total <= 0:
        raise ValueError(f"weight {y} unreachable with sizes {table.index_set}")
    if not (1 <= rank <= total):
        raise ValueError(f"rank {rank} outside 1..{total}")

    counts = {}
    if table.kind == "restrictedAssembly":
        r = rank
        while y > 0:
            chosen = None
            for b, m in zip(table.index_set, table._mults):
                if b > y:
                    break
                rest = table.count(y - b)
                block = math.comb(y - 1, b - 1) * m * rest
                if r <= block:
                    chosen = (b, rest)
                    break
                r -= block
            if chosen is None:
                raise RuntimeError("rank walk escaped the table")
            b, rest = chosen
            counts[b] = counts.get(b, 0) + 1
            r = (r - 1) % rest + 1
            y -= b
        return ComponentVector.from_dict(counts)

    if table.kind not in ("restrictedMultiset", "restrictedSelection"):
        raise ValueError(f"cannot unrank from a {table.kind} table")
    if table._walk is None:
        raise ValueError("table was loaded without its walk grid")
    r = rank
    for t in range(len(table.index_set), 0, -1):
        d = table.index_set[t - 1]
        w = table._weights[t - 1]
        m = table._mults[t - 1]
        prev = table._walk[t - 1]
        zmax = y // w
        if table.kind == "restrictedSelection":
            zmax = min(zmax, m)
        chosen = None
        for z in range(zmax + 1):
            gz = math.comb(m + z - 1, z) if table.kind == "restrictedMultiset" else math.comb(m, z)
            rest = prev[y - z * w]
            block = gz * rest
            if r <= block:
                chosen = (z, rest)
                break
            r -= block
        if chosen is None:
            raise RuntimeError("rank walk escaped the table")
        z, rest = chosen
        if z:
            counts[d] = z
        r = (r - 1) % rest + 1
        y -= z * w
    if y != 0:
        raise RuntimeError("rank walk did not exhaust the weight")
    return ComponentVector.from_dict(counts)


def unrank_restricted(table: CountTable, y: int, rng: SampleRng) -> ComponentVector:
    """Uniform-by-object-count completion of weight y with sizes in I."""
    total = table.count(y)
    if total <= 0:
        raise ValueError(f"weight {y} unreachable with sizes {table.index_set}")
    return unrank_restricted_with_rank(table, y, 1 + rng.randint_below(total))


# ---------------------------------------------------------------------------
# divisor-method sampler for unrestricted partitions
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _euler_tables(n: int):
    sigma = [0] * (n + 1)
    for d in range(1, n + 1):
        for j in range(d, n + 1, d):
            sigma[j] += d
    p = [1] + [0] * n
    for j in range(1, n + 1):
        s = sum(sigma[ell] * p[j - ell] for ell in range(1, j + 1))
        q, r = divmod(s, j)
        if r:
            raise ArithmeticError("divisor recursion not divisible; table bug")
        p[j] = q
    return tuple(sigma), tuple(p)


def euler_sample(n: int, rng: SampleRng) -> list:
    """Uniform partition of n via the divisor-weighted recursion.

    Repeatedly splits off a divisor block: choose the residual weight in
    proportion to sigma(n-m) p(m), then a divisor d of n-m in proportion
    to d, and emit (n-m)/d parts of size d.  Exact integer walk.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    sigma, p = _euler_tables(n)
    counts = {}
    cur = n
    while cur > 0:
        r = rng.randint_below(cur * p[cur])
        m = 0
        while True:
            block = sigma[cur - m] * p[m]
            if r < block:
                break
            r -= block
            m += 1
        gap = cur - m
        rd = rng.randint_below(sigma[gap])
        d = None
        for cand in range(1, gap + 1):
            if gap % cand:
                continue
            if rd < cand:
                d = cand
                break
            rd -= cand
        counts[d] = counts.get(d, 0) + gap // d
        cur = m
    parts = []
    for d in sorted(counts, reverse=True):
        parts.extend([d] * counts[d])
    return parts


# ---------------------------------------------------------------------------
# labelled realization of assembly profiles
# ---------------------------------------------------------------------------

def realize_set_partition(profile: ComponentVector, n: int, rng: SampleRng):
    """Uniform labelled set partition with the given block-size profile.

    A uniform permutation of the labels is cut into consecutive blocks
    of the profile's sizes; quotienting by within-block order and by the
    order of equal-size blocks is uniform over realizations.
    """
    if profile.weight() != n:
        raise ValueError("profile weight does not match the label count")
    labels = list(range(1, n + 1))
    for i in range(n - 1, 0, -1):
        j = rng.randint_below(i + 1)
        labels[i], labels[j] = labels[j], labels[i]
    blocks = []
    pos = 0
    for size, z in sorted(profile.counts, reverse=True):
        for _ in range(z):
            blocks.append(tuple(sorted(labels[pos:pos + size])))
            pos += size
    blocks.sort(key=lambda b: b[0])
    return tuple(blocks)
