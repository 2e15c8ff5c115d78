"""Combinatorial structure specs and their tilted component distributions.

A structure is one of three decomposable classes: assemblies (labelled,
e.g. set partitions), multisets (e.g. integer partitions) and selections
(e.g. partitions into distinct parts).  Each class induces a family of
independent integer random variables, one per component size, whose law
conditioned on the weighted sum hitting the target is exactly uniform
over the objects of that weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from mpmath import mp

from .randomness import SampleRng

CLASS_KINDS = ("assembly", "multiset", "selection")


# ---------------------------------------------------------------------------
# tilt parameters
# ---------------------------------------------------------------------------

def _fraction_from_mpf(x) -> Fraction:
    """Exact rational value of an mpmath float."""
    sign, man, exp, _ = x._mpf_
    if man == 0:
        return Fraction(0)
    v = Fraction(man) * Fraction(2) ** exp
    return -v if sign else v


@lru_cache(maxsize=None)
def tilt_unrestricted(n: int) -> Fraction:
    """Rate-optimal tilt exp(-pi/sqrt(6n)) for unrestricted partitions."""
    if n < 1:
        raise ValueError("n must be >= 1")
    with mp.workprec(80):
        return _fraction_from_mpf(mp.exp(-mp.pi / mp.sqrt(6 * n)))


@lru_cache(maxsize=None)
def tilt_distinct(n: int) -> Fraction:
    """Rate-optimal tilt exp(-pi/sqrt(12n)) for distinct-part partitions."""
    if n < 1:
        raise ValueError("n must be >= 1")
    with mp.workprec(80):
        return _fraction_from_mpf(mp.exp(-mp.pi / mp.sqrt(12 * n)))


@lru_cache(maxsize=None)
def tilt_set_partition(n: int) -> Fraction:
    """Root of x*exp(x) = n, by bisection on the increasing left side."""
    if n < 1:
        raise ValueError("n must be >= 1")
    with mp.workprec(192):
        target = mp.mpf(n)
        lo = mp.mpf(0)
        hi = mp.mpf(max(1.0, math.log(n) if n > 1 else 1.0))
        while hi * mp.exp(hi) < target:
            hi *= 2
        for _ in range(200):
            mid = (lo + hi) / 2
            if mid * mp.exp(mid) < target:
                lo = mid
            else:
                hi = mid
        return _fraction_from_mpf((lo + hi) / 2)


# ---------------------------------------------------------------------------
# structure specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructureSpec:
    """A decomposable class instance with target weight and tilt.

    ``index_set`` is the table-side index set of a divide-and-conquer
    division: stage one samples all component sizes outside it.  The
    empty set (the default) means every index is sampled directly.
    Multiplicities and weights default to m_i = 1 and w_i = i; sparse
    overrides are stored as sorted (index, value) pairs so specs stay
    hashable.
    """

    kind: str
    n: int
    tilt: Fraction
    multiplicity_overrides: tuple = ()
    weight_overrides: tuple = ()
    index_set: frozenset = frozenset()

    def __post_init__(self):
        if self.kind not in CLASS_KINDS:
            raise ValueError(f"unknown structure class {self.kind!r}")
        if self.n < 1:
            raise ValueError("target weight n must be >= 1")
        x = Fraction(self.tilt)
        object.__setattr__(self, "tilt", x)
        if x <= 0:
            raise ValueError("tilt must be positive")
        if self.kind in ("multiset", "selection") and x >= 1:
            raise ValueError(f"{self.kind} tilt must lie in (0, 1)")
        object.__setattr__(self, "multiplicity_overrides",
                           tuple(sorted(tuple(p) for p in self.multiplicity_overrides)))
        object.__setattr__(self, "weight_overrides",
                           tuple(sorted(tuple(p) for p in self.weight_overrides)))
        object.__setattr__(self, "index_set", frozenset(self.index_set))
        for i, m in self.multiplicity_overrides:
            if not (1 <= i <= self.n) or m < 1:
                raise ValueError("multiplicity overrides must map valid indices to m >= 1")
        for i, w in self.weight_overrides:
            if not (1 <= i <= self.n) or w < 1:
                raise ValueError("weight overrides must map valid indices to w >= 1")
        if any(i < 1 or i > self.n for i in self.index_set):
            raise ValueError("index_set must be a subset of 1..n")

    def multiplicity(self, i: int) -> int:
        for j, m in self.multiplicity_overrides:
            if j == i:
                return m
        return 1

    def weight(self, i: int) -> int:
        for j, w in self.weight_overrides:
            if j == i:
                return w
        return i

    def with_index_set(self, index_set) -> "StructureSpec":
        return StructureSpec(self.kind, self.n, self.tilt,
                             self.multiplicity_overrides, self.weight_overrides,
                             frozenset(index_set))


def _overrides(mapping) -> tuple:
    if not mapping:
        return ()
    return tuple(sorted(mapping.items()))


def partitions(n: int, tilt=None, index_set=(), multiplicities=None, weights=None) -> StructureSpec:
    """Unrestricted integer partitions of n (multiset, m_i = 1)."""
    x = Fraction(tilt) if tilt is not None else tilt_unrestricted(n)
    return StructureSpec("multiset", n, x, _overrides(multiplicities),
                         _overrides(weights), frozenset(index_set))


def distinct_partitions(n: int, tilt=None, index_set=(), multiplicities=None, weights=None) -> StructureSpec:
    """Partitions of n into distinct parts (selection, m_i = 1)."""
    x = Fraction(tilt) if tilt is not None else tilt_distinct(n)
    return StructureSpec("selection", n, x, _overrides(multiplicities),
                         _overrides(weights), frozenset(index_set))


def set_partitions(n: int, tilt=None, index_set=(), multiplicities=None) -> StructureSpec:
    """Set partitions of an n-element label set (assembly, m_i = 1)."""
    x = Fraction(tilt) if tilt is not None else tilt_set_partition(n)
    return StructureSpec("assembly", n, x, _overrides(multiplicities), (), frozenset(index_set))


# ---------------------------------------------------------------------------
# component vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComponentVector:
    """Counts of components by size; the canonical sampler output.

    Stored sparsely as (index, count) pairs with count > 0, ascending.
    """

    counts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "counts",
                           tuple(sorted((int(i), int(z)) for i, z in self.counts if z)))

    @classmethod
    def from_dict(cls, d) -> "ComponentVector":
        return cls(tuple(d.items()))

    @classmethod
    def from_dense(cls, indices, z) -> "ComponentVector":
        return cls(tuple((int(i), int(c)) for i, c in zip(indices, z) if c))

    @classmethod
    def from_parts(cls, parts) -> "ComponentVector":
        d = {}
        for p in parts:
            d[p] = d.get(p, 0) + 1
        return cls.from_dict(d)

    def as_dict(self) -> dict:
        return dict(self.counts)

    def weight(self, spec: StructureSpec | None = None) -> int:
        if spec is None:
            return sum(i * z for i, z in self.counts)
        return sum(spec.weight(i) * z for i, z in self.counts)

    def to_parts(self) -> list:
        """Part sizes in descending order (one entry per component)."""
        parts = []
        for i, z in reversed(self.counts):
            parts.extend([i] * z)
        return parts

    def merge(self, other: "ComponentVector") -> "ComponentVector":
        d = self.as_dict()
        for i, z in other.counts:
            if i in d:
                raise ValueError("merge requires disjoint index support")
            d[i] = z
        return ComponentVector.from_dict(d)


# ---------------------------------------------------------------------------
# tilted component laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TiltedDistribution:
    """Law of the component count at one index under the tilted model.

    The point mass has the product form c * g(k) * x**(w*k); ``g`` and
    the tilt factor are exact rationals, so every ratio of point masses
    is exactly computable even when the normalization constant is not
    rational (the Poisson case).
    """

    index: int
    kind: str  # geometric | negative_binomial | binomial | poisson
    weight: int
    multiplicity: int
    tilt: Fraction

    def _q(self) -> Fraction:
        return self.tilt ** self.weight

    def support_max(self):
        return self.multiplicity if self.kind == "binomial" else None

    def unnormalized_mass(self, k: int) -> Fraction:
        """g(k) * x**(w*k), an exact rational for every law."""
        if k < 0:
            return Fraction(0)
        m = self.multiplicity
        if self.kind in ("geometric", "negative_binomial"):
            g = math.comb(m + k - 1, k)
        elif self.kind == "binomial":
            if k > m:
                return Fraction(0)
            g = math.comb(m, k)
        else:  # poisson
            g = Fraction(m ** k, math.factorial(self.index) ** k * math.factorial(k))
        return g * self._q() ** k

    def normalization(self):
        """c such that sum_k c * g(k) * x**(w*k) = 1.

        Exact rational except for the Poisson case, where exp(-lambda)
        is returned as a float.
        """
        q = self._q()
        m = self.multiplicity
        if self.kind in ("geometric", "negative_binomial"):
            return (1 - q) ** m
        if self.kind == "binomial":
            return Fraction(1) / (1 + q) ** m
        return math.exp(-float(self.poisson_rate()))

    def poisson_rate(self) -> Fraction:
        if self.kind != "poisson":
            raise ValueError("not a Poisson law")
        return Fraction(self.multiplicity, math.factorial(self.index)) * self._q()

    def point_mass(self, k: int) -> float:
        return float(self.unnormalized_mass(k)) * float(self.normalization())

    def log_unnormalized_mass(self, k: int) -> float:
        mass = self.unnormalized_mass(k)
        if mass == 0:
            return -math.inf
        return math.log(mass.numerator) - math.log(mass.denominator)

    def mean(self) -> float:
        q = float(self._q())
        m = self.multiplicity
        if self.kind in ("geometric", "negative_binomial"):
            return m * q / (1 - q)
        if self.kind == "binomial":
            return m * q / (1 + q)
        return float(self.poisson_rate())

    def mode_with_mass(self):
        """(argmax k, unnormalized mass there); scans the unimodal pmf."""
        best_k, best = 0, self.unnormalized_mass(0)
        prev = best
        k = 1
        cap = self.support_max()
        while cap is None or k <= cap:
            cur = self.unnormalized_mass(k)
            if cur > best:
                best_k, best = k, cur
            if cur < prev:
                break
            prev = cur
            k += 1
        return best_k, best

    # -- variate generation -------------------------------------------

    def sample_exact(self, rng: SampleRng) -> int:
        if self.kind in ("geometric", "negative_binomial"):
            return sum(_geometric_exact(rng, self._q())
                       for _ in range(self.multiplicity))
        if self.kind == "binomial":
            q = self._q()
            p = q / (1 + q)
            return sum(rng.bernoulli(p) for _ in range(self.multiplicity))
        cut = _poisson_cutpoints(self.poisson_rate())
        u = rng.lazy_uniform()
        k = 0
        while not u.less_than(cut[k]):
            k += 1
        return k

    def sample_fast(self, np_rng) -> int:
        q = float(self._q())
        m = self.multiplicity
        if self.kind in ("geometric", "negative_binomial"):
            return int(np_rng.negative_binomial(m, 1.0 - q))
        if self.kind == "binomial":
            return int(np_rng.binomial(m, q / (1.0 + q)))
        return int(np_rng.poisson(float(self.poisson_rate())))


def _geometric_exact(rng: SampleRng, q: Fraction) -> int:
    """Inversion of the geometric CDF against a lazily refined uniform."""
    u = rng.lazy_uniform()
    k = 0
    power = q  # q ** (k+1)
    while not u.less_than(1 - power):
        power *= q
        k += 1
    return k


@lru_cache(maxsize=None)
def _poisson_cutpoints(lam: Fraction) -> tuple:
    """Rational CDF cutpoints of Poisson(lam), tail truncated below 2**-64.

    The series for exp(lam) is cut once the next-term ratio is under
    2**-70 with decreasing terms; normalizing by the partial sum moves
    under 2**-64 of mass per draw, absorbed into the last cutpoint.
    """
    terms = [Fraction(1)]
    total = Fraction(1)
    k = 0
    while True:
        k += 1
        t = terms[-1] * lam / k
        terms.append(t)
        total += t
        if 2 * lam < k + 2 and t * (1 << 70) < total:
            break
    cuts = []
    acc = Fraction(0)
    for t in terms:
        acc += t
        cuts.append(acc / total)
    cuts[-1] = Fraction(1)
    return tuple(cuts)


def component_distribution(spec: StructureSpec, i: int) -> TiltedDistribution:
    """The class-appropriate tilted law of the count at index i."""
    if not (1 <= i <= spec.n):
        raise ValueError(f"index {i} outside 1..{spec.n}")
    m = spec.multiplicity(i)
    if spec.kind == "multiset":
        kind = "geometric" if m == 1 else "negative_binomial"
    elif spec.kind == "selection":
        kind = "binomial"
    else:
        kind = "poisson"
    return TiltedDistribution(i, kind, spec.weight(i), m, spec.tilt)


def sample_component(dist: TiltedDistribution, rng: SampleRng, mode: str = "fast") -> int:
    """One draw from the exact law, by the requested arithmetic mode."""
    if mode == "exact":
        return dist.sample_exact(rng)
    return dist.sample_fast(rng.np)


# ---------------------------------------------------------------------------
# stage-one sampling (indices outside the division's table set)
# ---------------------------------------------------------------------------

class Stage1Sampler:
    """Vectorized sampler for the independent components outside I.

    Weighted sums stay in int64; this limits the fast path to weights
    whose attainable sums fit 63 bits, which desk and benchmark scales
    satisfy by orders of magnitude.
    """

    def __init__(self, spec: StructureSpec):
        self.spec = spec
        self.active = [i for i in range(1, spec.n + 1) if i not in spec.index_set]
        self.idx = np.array(self.active, dtype=np.int64)
        self.w = np.array([spec.weight(i) for i in self.active], dtype=np.int64)
        self.m = np.array([spec.multiplicity(i) for i in self.active], dtype=np.int64)
        self.dists = [component_distribution(spec, i) for i in self.active]
        xf = float(spec.tilt)
        if spec.kind == "assembly":
            logx = math.log(xf)
            self.lam = np.array([math.exp(spec.weight(i) * logx
                                          - math.lgamma(i + 1)
                                          + math.log(spec.multiplicity(i)))
                                 for i in self.active])
            self.total_rate = float(self.lam.sum())
            self.cum_rate = np.cumsum(self.lam)
        else:
            self.q = np.array([xf ** spec.weight(i) for i in self.active])

    def component_count(self) -> int:
        return len(self.active)

    # -- batched fast path ---------------------------------------------

    def draw_batch(self, batch: int, np_rng):
        """(counts matrix, weighted sums) for ``batch`` independent attempts."""
        if not self.active:
            return (np.zeros((batch, 0), dtype=np.int64),
                    np.zeros(batch, dtype=np.int64))
        if self.spec.kind == "multiset":
            z = np_rng.negative_binomial(self.m, 1.0 - self.q, size=(batch, len(self.active)))
        elif self.spec.kind == "selection":
            z = np_rng.binomial(self.m, self.q / (1.0 + self.q), size=(batch, len(self.active)))
        else:
            z = np_rng.poisson(self.lam, size=(batch, len(self.active)))
        z = z.astype(np.int64, copy=False)
        return z, z @ self.w

    def draw_batch_process(self, batch: int, np_rng):
        """Assembly-only batch via one Poisson process over the total rate.

        Returns (weighted sums, row accessor, draw units); rows are
        materialized only for accepted attempts.
        """
        if self.spec.kind != "assembly":
            raise ValueError("the batch point-process sampler applies to assemblies only")
        a = len(self.active)
        if a == 0:
            return (np.zeros(batch, dtype=np.int64),
                    lambda j: np.zeros(0, dtype=np.int64), batch)
        nvec = np_rng.poisson(self.total_rate, size=batch)
        total = int(nvec.sum())
        u = np_rng.random(total) * self.total_rate
        pos = np.minimum(np.searchsorted(self.cum_rate, u, side="right"), a - 1)
        owner = np.repeat(np.arange(batch), nvec)
        msums = np.bincount(owner, weights=self.w[pos].astype(float),
                            minlength=batch).astype(np.int64)
        offsets = np.concatenate([[0], np.cumsum(nvec)])

        def row(j: int):
            seg = pos[offsets[j]:offsets[j + 1]]
            return np.bincount(seg, minlength=a).astype(np.int64)

        return msums, row, batch + total

    # -- single attempts ------------------------------------------------

    def draw_one_exact(self, rng: SampleRng, stop_above: int | None = None):
        """One attempt with exact variates; may stop once the sum is hopeless."""
        counts = {}
        msum = 0
        drawn = 0
        for d in self.dists:
            z = d.sample_exact(rng)
            drawn += 1
            if z:
                counts[d.index] = z
                msum += d.weight * z
                if stop_above is not None and msum > stop_above:
                    break
        return counts, msum, drawn

    def draw_one_fast(self, np_rng):
        z, msum = self.draw_batch(1, np_rng)
        return z[0], int(msum[0])


def sample_stage1(spec: StructureSpec, rng: SampleRng, mode: str = "fast",
                  batch: bool = False):
    """Draw all components outside spec.index_set.

    Returns (ComponentVector, weighted sum).  ``batch=True`` selects the
    Poisson-process implementation (assemblies only); the default draws
    each index independently and is the reference for both classes of
    output tests.
    """
    s1 = Stage1Sampler(spec)
    if batch:
        msums, row, _ = s1.draw_batch_process(1, rng.np)
        vec = ComponentVector.from_dense(s1.active, row(0))
        return vec, int(msums[0])
    if mode == "exact":
        counts, msum, _ = s1.draw_one_exact(rng)
        return ComponentVector.from_dict(counts), msum
    z, msum = s1.draw_one_fast(rng.np)
    return ComponentVector.from_dense(s1.active, z), msum
