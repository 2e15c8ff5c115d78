"""Seedable randomness with a floating path and an exact-rational path.

Everything is driven by one numpy PCG64 generator per stream.  The fast
path uses the generator's vectorized methods directly.  The exact path
consumes the same generator as a stream of raw 64-bit words, served as
individual bits, so that acceptance tests and inverse-CDF walks can be
decided against exact rational thresholds with no floating arithmetic.

Streams are split with ``SeedSequence.spawn``, so a root seed plus a
documented spawn order fully determines every draw.
"""

from __future__ import annotations

import secrets
from fractions import Fraction

import numpy as np

_WORD_CHUNK = 64  # raw 64-bit words fetched per refill


class SampleRng:
    """One random stream: a numpy Generator plus a buffered bit stream."""

    def __init__(self, seed_seq: np.random.SeedSequence):
        self.seed_seq = seed_seq
        self.np = np.random.Generator(np.random.PCG64(seed_seq))
        self._words: list[int] = []
        self._word = 0
        self._bits_left = 0

    @classmethod
    def from_seed(cls, seed=None) -> "SampleRng":
        if seed is None:
            seed = secrets.randbits(63)
        return cls(np.random.SeedSequence(seed))

    def spawn(self, k: int) -> list["SampleRng"]:
        """Split off k child streams (independent, reproducible)."""
        return [SampleRng(s) for s in self.seed_seq.spawn(k)]

    # -- bit stream ---------------------------------------------------

    def _refill(self):
        raw = self.np.bit_generator.random_raw(_WORD_CHUNK)
        self._words = [int(w) for w in raw[::-1]]

    def next_bit(self) -> int:
        if self._bits_left == 0:
            if not self._words:
                self._refill()
            self._word = self._words.pop()
            self._bits_left = 64
        self._bits_left -= 1
        return (self._word >> self._bits_left) & 1

    def bits(self, k: int) -> int:
        """k random bits as an integer, most significant bit first."""
        v = 0
        for _ in range(k):
            v = (v << 1) | self.next_bit()
        return v

    def randint_below(self, m: int) -> int:
        """Uniform integer in [0, m), exact for arbitrary-precision m."""
        if m <= 0:
            raise ValueError("randint_below needs m >= 1")
        if m == 1:
            return 0
        k = (m - 1).bit_length()
        while True:
            v = self.bits(k)
            if v < m:
                return v

    # -- exact comparisons --------------------------------------------

    def bernoulli(self, p: Fraction) -> bool:
        """True with probability exactly p.

        Compares a lazily extended bit stream against the binary
        expansion of p; consumes two bits on average.
        """
        num, den = p.numerator, p.denominator
        if num <= 0:
            return False
        if num >= den:
            return True
        while True:
            num <<= 1
            d, num = divmod(num, den)
            u = self.next_bit()
            if u != d:
                return u < d
            if num == 0:
                return False  # remaining digits of p are all zero

    def lazy_uniform(self) -> "LazyUniform":
        return LazyUniform(self)


class LazyUniform:
    """A uniform variate on [0, 1) refined one bit at a time.

    Supports repeated exact comparisons against rational thresholds;
    bits are drawn only until the comparison is decided.
    """

    __slots__ = ("_rng", "_prefix", "_nbits")

    def __init__(self, rng: SampleRng):
        self._rng = rng
        self._prefix = 0
        self._nbits = 0

    def less_than(self, c: Fraction) -> bool:
        num, den = c.numerator, c.denominator
        if num <= 0:
            return False
        if num >= den:
            return True
        while True:
            # U lies in [prefix, prefix + 1) / 2^nbits
            lhs = (self._prefix + 1) * den
            rhs = num << self._nbits
            if lhs <= rhs:
                return True
            if self._prefix * den >= rhs:
                return False
            self._prefix = (self._prefix << 1) | self._rng.next_bit()
            self._nbits += 1
