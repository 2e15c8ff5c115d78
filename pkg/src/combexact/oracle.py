"""Brute-force ground truth: exhaustive enumeration and equality tests.

Everything here is deliberately independent of the table recursions and
the sampling engines; it enumerates by backtracking and computes
conditional laws directly from the component point masses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats as scipy_stats

from .structures import ComponentVector, StructureSpec, component_distribution

MAX_VECTOR_N = 14
MAX_LABELED_N = 8


class CensusMismatchError(Exception):
    """A sample fell outside the enumerated object set (a correctness bug)."""


class NonUniformLawError(Exception):
    """The exact conditional law failed to be uniform over objects."""


@dataclass
class ObjectCensus:
    """Exhaustive list of weight-n objects with per-object multiplicities.

    For m_i = 1 classes each component vector is one object.  With type
    multiplicities a vector stands for several objects and carries their
    count; labelled set-partition censuses list every block family.
    """

    kind: str
    n: int
    labeled: bool
    objects: list
    multiplicities: list
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = {obj: i for i, obj in enumerate(self.objects)}
        if len(self.index) != len(self.objects):
            raise ValueError("census objects must be pairwise distinct")

    def total_count(self) -> int:
        return sum(self.multiplicities)

    def __len__(self):
        return len(self.objects)


def _component_vectors(sizes, weights, mults, cap_by_mult, remaining):
    """Yield {size: count} dicts with total weight exactly ``remaining``."""
    if not sizes:
        if remaining == 0:
            yield {}
        return
    d, w, m = sizes[0], weights[0], mults[0]
    zmax = remaining // w
    if cap_by_mult:
        zmax = min(zmax, m)
    for z in range(zmax + 1):
        for rest in _component_vectors(sizes[1:], weights[1:], mults[1:],
                                       cap_by_mult, remaining - z * w):
            if z:
                rest = dict(rest)
                rest[d] = z
            yield rest


def _labeled_count(vec: ComponentVector, n: int, spec: StructureSpec) -> int:
    """Number of labelled assemblies with the given block-size profile."""
    num = Fraction(math.factorial(n))
    for i, z in vec.counts:
        num *= Fraction(spec.multiplicity(i) ** z,
                        math.factorial(i) ** z * math.factorial(z))
    if num.denominator != 1:
        raise ArithmeticError("labelled object count is not an integer")
    return num.numerator


def _all_set_partitions(n: int):
    """All set partitions of {1..n} as canonical block tuples."""
    if n == 0:
        return [()]
    out = []

    def extend(label, blocks):
        if label > n:
            out.append(tuple(sorted((tuple(sorted(b)) for b in blocks),
                                    key=lambda b: b[0])))
            return
        for b in blocks:
            b.append(label)
            extend(label + 1, blocks)
            b.pop()
        blocks.append([label])
        extend(label + 1, blocks)
        blocks.pop()

    extend(1, [])
    return out


def enumerate_objects(spec: StructureSpec, n: int | None = None,
                      support=None, labeled: bool = False) -> ObjectCensus:
    """Exhaustive duplicate-free census of the weight-n objects.

    ``support`` restricts the allowed component sizes (defaults to all
    of 1..n); ``labeled`` lists assembly block families instead of
    profiles and requires plain set partitions (m_i = 1, w_i = i).
    """
    n = spec.n if n is None else n
    if labeled:
        if spec.kind != "assembly":
            raise ValueError("labelled enumeration applies to assemblies")
        if n > MAX_LABELED_N:
            raise ValueError(f"labelled enumeration capped at n={MAX_LABELED_N}")
        if support is not None or spec.multiplicity_overrides:
            raise ValueError("labelled enumeration supports plain set partitions only")
        objs = _all_set_partitions(n)
        return ObjectCensus(spec.kind, n, True, objs, [1] * len(objs))
    if n > MAX_VECTOR_N:
        raise ValueError(f"enumeration capped at n={MAX_VECTOR_N}")

    sizes = sorted(support) if support is not None else list(range(1, n + 1))
    weights = [spec.weight(i) for i in sizes]
    mults = [spec.multiplicity(i) for i in sizes]
    vectors = [ComponentVector.from_dict(d)
               for d in _component_vectors(sizes, weights, mults,
                                           spec.kind == "selection", n)]
    vectors.sort(key=lambda v: v.counts)

    if spec.kind == "assembly":
        counts = [_labeled_count(v, n, spec) for v in vectors]
    elif spec.kind == "multiset":
        counts = [math.prod(math.comb(spec.multiplicity(i) + z - 1, z)
                            for i, z in v.counts) for v in vectors]
    else:
        counts = [math.prod(math.comb(spec.multiplicity(i), z)
                            for i, z in v.counts) for v in vectors]
    return ObjectCensus(spec.kind, n, False, vectors, counts)


def chi_square_uniformity(samples, census: ObjectCensus) -> float:
    """p-value of the observed counts against the uniform-object null.

    Every sample must map to a census object; an unmapped sample raises
    instead of contributing to the statistic.
    """
    obs = np.zeros(len(census), dtype=float)
    total = 0
    for s in samples:
        pos = census.index.get(s)
        if pos is None:
            raise CensusMismatchError(f"sample {s!r} not in the census")
        obs[pos] += 1
        total += 1
    mult = np.array(census.multiplicities, dtype=float)
    expected = total * mult / mult.sum()
    if expected.min() < 5:
        raise ValueError("expected count per cell below 5; use more samples")
    _, p = scipy_stats.chisquare(obs, expected)
    return float(p)


def chi_square_two_sample(samples_a, samples_b, census: ObjectCensus) -> float:
    """p-value of homogeneity between two sample streams over the census."""
    rows = []
    for samples in (samples_a, samples_b):
        obs = np.zeros(len(census), dtype=float)
        for s in samples:
            pos = census.index.get(s)
            if pos is None:
                raise CensusMismatchError(f"sample {s!r} not in the census")
            obs[pos] += 1
        rows.append(obs)
    table = np.vstack(rows)
    table = table[:, table.sum(axis=0) > 0]
    _, p, _, _ = scipy_stats.chi2_contingency(table)
    return float(p)


def exact_conditional_law(spec: StructureSpec, n: int | None = None,
                          labeled: bool = False) -> dict:
    """Exact rational law of objects given the weighted sum hits n.

    Computed from ratios of component point masses, so all irrational
    normalization constants cancel.  Asserts the per-object law is
    uniform (the correctness property the tilted construction owes us)
    and raises NonUniformLawError otherwise.

    Returns object -> probability.  Keys are component vectors, each
    carrying the total probability of its type-multiplicity class; with
    ``labeled`` set, keys are block families with their individual
    probabilities.
    """
    n = spec.n if n is None else n
    census = enumerate_objects(spec, n=n)
    dists = {i: component_distribution(spec, i) for i in range(1, n + 1)}
    masses = []
    for vec in census.objects:
        mass = Fraction(1)
        for i, z in vec.counts:
            mass *= dists[i].unnormalized_mass(z)
        masses.append(mass)
    total = sum(masses)
    if total == 0:
        raise NonUniformLawError("target weight carries no mass")

    per_object = [mass / total / mult
                  for mass, mult in zip(masses, census.multiplicities)]
    if len(set(per_object)) != 1:
        raise NonUniformLawError("conditional law is not uniform over objects")

    if labeled:
        labeled_census = enumerate_objects(spec, n=n, labeled=True)
        q = per_object[0]
        if q * len(labeled_census) != 1:
            raise NonUniformLawError("labelled law does not normalize to one")
        return {obj: q for obj in labeled_census.objects}
    return {vec: mass / total for vec, mass in zip(census.objects, masses)}
