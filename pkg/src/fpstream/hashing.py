"""Pairwise-independent hashing and the nested subsampling hierarchy.

Hashes are degree-1 polynomials modulo the Mersenne prime 2**61 - 1, which
gives exact pairwise independence with a cheap reduction.  The vectorized
path splits the coefficient into 31-bit limbs so every intermediate product
fits in uint64; inputs must stay below 2**31 (dense item universes do).

Subsampling uses a single threshold hash per repetition: item k survives to
level i exactly when its unit-interval value falls below the level's rate,
so the level sets are nested by construction.
"""

from __future__ import annotations

import math

import numpy as np

MERSENNE_P = (1 << 61) - 1
_MASK30 = (1 << 30) - 1
_MAX_INPUT = 1 << 31


class PairwiseHash:
    """h(x) = ((a*x + b) mod (2**61 - 1)) mod range, pairwise independent."""

    def __init__(self, rng: np.random.Generator, out_range: int):
        if out_range < 1:
            raise ValueError(f"hash range must be >= 1, got {out_range}")
        self.a = int(rng.integers(1, MERSENNE_P))
        self.b = int(rng.integers(0, MERSENNE_P))
        self.range = int(out_range)

    def value(self, x: int) -> int:
        if not 0 <= x < _MAX_INPUT:
            raise ValueError(f"hash input {x} outside [0, 2**31)")
        return ((self.a * x + self.b) % MERSENNE_P) % self.range

    def values(self, xs: np.ndarray) -> np.ndarray:
        return self.residues(xs) % np.uint64(self.range)

    def residue(self, x: int) -> int:
        """(a*x + b) mod 2**61 - 1 before range reduction."""
        return (self.a * x + self.b) % MERSENNE_P

    def residues(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized residues; exact match with the scalar path."""
        xs = np.asarray(xs)
        if xs.size and (int(xs.min()) < 0 or int(xs.max()) >= _MAX_INPUT):
            raise ValueError("hash inputs must lie in [0, 2**31)")
        x = xs.astype(np.uint64)
        a_hi = np.uint64(self.a >> 30)   # < 2**31
        a_lo = np.uint64(self.a & _MASK30)
        # a*x = (a_hi * x) * 2**30 + a_lo * x, with each product < 2**62.
        hi = _mod61(a_hi * x)
        hi = _mulpow2_mod61(hi, 30)
        lo = _mod61(a_lo * x)
        total = _mod61(hi + lo + np.uint64(self.b % MERSENNE_P))
        return total


def _mod61(y: np.ndarray) -> np.ndarray:
    """Reduce uint64 values modulo 2**61 - 1."""
    p = np.uint64(MERSENNE_P)
    y = (y & p) + (y >> np.uint64(61))
    y = (y & p) + (y >> np.uint64(61))
    return np.where(y >= p, y - p, y)


def _mulmod61(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(u * v) mod 2**61 - 1 for u < 2**61 and v < 2**31, overflow-safe."""
    u_hi = u >> np.uint64(30)          # < 2**31
    u_lo = u & np.uint64(_MASK30)      # < 2**30
    hi = _mulpow2_mod61(_mod61(u_hi * v), 30)
    lo = _mod61(u_lo * v)
    return _mod61(hi + lo)


def poly_residues(coeffs: list[int], xs: np.ndarray) -> np.ndarray:
    """Horner evaluation of a polynomial modulo 2**61 - 1.

    ``coeffs`` are highest-degree first; inputs must lie in [0, 2**31).
    A degree-(k-1) polynomial with random coefficients gives a k-wise
    independent family.
    """
    xs = np.asarray(xs)
    if xs.size and (int(xs.min()) < 0 or int(xs.max()) >= _MAX_INPUT):
        raise ValueError("hash inputs must lie in [0, 2**31)")
    x = xs.astype(np.uint64)
    acc = np.full(x.shape, coeffs[0] % MERSENNE_P, dtype=np.uint64)
    for c in coeffs[1:]:
        acc = _mod61(_mulmod61(acc, x) + np.uint64(c % MERSENNE_P))
    return acc


class KWiseHash:
    """k-wise independent hash from a random degree-(k-1) polynomial."""

    def __init__(self, rng: np.random.Generator, k: int):
        self.coeffs = [int(c) for c in rng.integers(0, MERSENNE_P, size=k)]
        if self.coeffs[0] == 0:
            self.coeffs[0] = 1

    def residues(self, xs: np.ndarray) -> np.ndarray:
        return poly_residues(self.coeffs, xs)

    def residue(self, x: int) -> int:
        acc = self.coeffs[0] % MERSENNE_P
        for c in self.coeffs[1:]:
            acc = (acc * x + c) % MERSENNE_P
        return acc

    def signs(self, xs: np.ndarray) -> np.ndarray:
        """Vector of +-1 values (low bit of the residue)."""
        return 1 - 2 * (self.residues(xs) & np.uint64(1)).astype(np.int64)

    def sign(self, x: int) -> int:
        return 1 - 2 * (self.residue(x) & 1)


def _mulpow2_mod61(v: np.ndarray, shift: int) -> np.ndarray:
    """(v * 2**shift) mod 2**61 - 1 for v < 2**61, without overflow."""
    # v = v_hi * 2**(61-shift) + v_lo; then v * 2**shift = v_hi * 2**61 + v_lo * 2**shift
    # and 2**61 = 1 modulo the prime.
    low_bits = np.uint64(61 - shift)
    v_hi = v >> low_bits
    v_lo = v & ((np.uint64(1) << low_bits) - np.uint64(1))
    return _mod61(v_hi + (v_lo << np.uint64(shift)))


def sample_rate(level: int, gamma: int) -> float:
    """Inclusion rate at a subsampling level: min(1, gamma / 2**level)."""
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level}")
    return min(1.0, gamma * 2.0**-level)


class SubsampleHierarchy:
    """Nested subsets of [n]: level i keeps items with unit value < rate(i).

    One hash per repetition realizes every level at once, so nestedness is
    structural rather than probabilistic.  Immutable after construction.
    """

    def __init__(self, n: int, gamma: int, seed, rep_id: int = 0):
        self.n = int(n)
        self.gamma = int(gamma)
        self.rep_id = int(rep_id)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0x5A17, rep_id)))
        self._hash = PairwiseHash(rng, MERSENNE_P)

    def unit_value(self, item: int) -> float:
        """Deterministic pairwise-uniform value in [0, 1) for a 1-based item."""
        if not 1 <= item <= self.n:
            raise IndexError(f"item {item} out of range [1, {self.n}]")
        return self._hash.residue(item) / MERSENNE_P

    def unit_values(self, items: np.ndarray) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        return self._hash.residues(items).astype(np.float64) / MERSENNE_P

    def universe_unit_values(self) -> np.ndarray:
        """Unit values for every item 1..n (items index positions 0..n-1)."""
        return self.unit_values(np.arange(1, self.n + 1))

    def is_sampled(self, item: int, level: int) -> bool:
        return self.unit_value(item) < sample_rate(level, self.gamma)

    def sampled_mask(self, level: int, unit: np.ndarray | None = None) -> np.ndarray:
        """Boolean survival mask over the universe at one level."""
        if unit is None:
            unit = self.universe_unit_values()
        return unit < sample_rate(level, self.gamma)

    def max_level(self, item: int, level_cap: int) -> int:
        """Deepest level (< level_cap) at which the item is still sampled."""
        u = self.unit_value(item)
        if u <= 0.0:
            return level_cap - 1
        # u < gamma / 2**i  <=>  i < log2(gamma / u)
        deepest = math.ceil(math.log2(self.gamma / u)) - 1
        if self.gamma * 2.0**-deepest <= u:  # guard against float edge
            deepest -= 1
        while sample_rate(deepest + 1, self.gamma) > u:
            deepest += 1
        return min(deepest, level_cap - 1)
