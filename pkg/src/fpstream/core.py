"""Stream primitives, the exact moment oracle, and estimator configuration.

Items are dense 1-based integers in ``[1, n]``.  A stream is a sequence of
``(item, delta)`` updates; insertion-only streams carry ``delta == +1`` on
every update, turnstile streams allow signed deltas.  The oracle keeps the
full frequency vector and computes moments with compensated summation, so
its error (<= 1e-12 relative at desk scale) is negligible next to any
estimator being checked against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

import numpy as np

from ._params import check_accuracy, check_item, check_moment_order, check_universe_size

INSERTION_ONLY = "insertion-only"
TURNSTILE = "turnstile"
RANDOM_ORDER = "random"
ARBITRARY_ORDER = "arbitrary"


class ModeError(ValueError):
    """Update or algorithm incompatible with the declared stream mode/order."""


class PhaseError(RuntimeError):
    """Operation called outside its allowed phase (e.g. pass 2 before freeze)."""


class NotFinalizedError(PhaseError):
    """Query issued before the stream was fully consumed."""


class ConsistencyError(RuntimeError):
    """Replayed stream disagrees with the first pass."""


class CapacityError(RuntimeError):
    """A configured hard capacity would be exceeded."""


class Update(NamedTuple):
    """One stream event: a 1-based item index and a signed count delta."""

    item: int
    delta: int = 1


@dataclass(frozen=True)
class StreamMeta:
    """Declared stream shape: universe size, length, update mode, arrival order.

    ``m`` may be None when the length is not known in advance.  The length is
    required to stay polynomial in ``n``; the exponent bound is configurable
    and defaults to m <= n**3.
    """

    n: int
    m: Optional[int]
    mode: str = INSERTION_ONLY
    order: str = ARBITRARY_ORDER
    poly_exponent: int = 3

    def __post_init__(self):
        check_universe_size(self.n)
        if self.mode not in (INSERTION_ONLY, TURNSTILE):
            raise ValueError(f"unknown stream mode {self.mode!r}")
        if self.order not in (RANDOM_ORDER, ARBITRARY_ORDER):
            raise ValueError(f"unknown stream order {self.order!r}")
        if self.m is not None:
            if self.m < 0:
                raise ValueError(f"stream length must be >= 0, got {self.m}")
            if self.m > self.n**self.poly_exponent:
                raise ValueError(
                    f"stream length {self.m} exceeds the polynomial bound "
                    f"n**{self.poly_exponent} = {self.n ** self.poly_exponent}"
                )


class FrequencyVector:
    """Exact ground-truth frequency vector maintained by the oracle."""

    def __init__(self, n: int, counts: Optional[np.ndarray] = None):
        self.n = check_universe_size(n)
        if counts is None:
            self.counts = np.zeros(n, dtype=np.int64)
        else:
            counts = np.asarray(counts, dtype=np.int64)
            if counts.shape != (n,):
                raise ValueError(f"counts shape {counts.shape} != ({n},)")
            self.counts = counts

    def count(self, item: int) -> int:
        """Count for a 1-based item index."""
        return int(self.counts[check_item(item, self.n) - 1])

    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FrequencyVector)
            and self.n == other.n
            and bool(np.array_equal(self.counts, other.counts))
        )

    def __repr__(self) -> str:
        nonzero = int(np.count_nonzero(self.counts))
        return f"FrequencyVector(n={self.n}, nonzero={nonzero})"


def apply_stream(updates: Iterable, n: int) -> FrequencyVector:
    """Accumulate updates into an exact frequency vector.

    Accepts ``Update`` instances, ``(item, delta)`` pairs, or bare item
    indices (treated as delta +1).  Out-of-range items raise ``IndexError``.
    """
    n = check_universe_size(n)
    counts = np.zeros(n, dtype=np.int64)
    for u in updates:
        if isinstance(u, (int, np.integer)):
            item, delta = int(u), 1
        else:
            item, delta = int(u[0]), int(u[1])
        check_item(item, n)
        counts[item - 1] += delta
    return FrequencyVector(n, counts)


def apply_stream_arrays(items: np.ndarray, deltas, n: int) -> FrequencyVector:
    """Vectorized form of :func:`apply_stream` for array inputs."""
    n = check_universe_size(n)
    items = np.asarray(items, dtype=np.int64)
    if items.size and (items.min() < 1 or items.max() > n):
        bad = items[(items < 1) | (items > n)][0]
        raise IndexError(f"item {int(bad)} out of range [1, {n}]")
    if deltas is None:
        weights = None
    else:
        weights = np.asarray(deltas, dtype=np.float64)
    counts = np.bincount(items - 1, weights=weights, minlength=n)
    return FrequencyVector(n, np.round(counts).astype(np.int64))


def exact_fp(f: FrequencyVector, p: float) -> float:
    """Exact F_p moment: sum over the universe of |count|**p.

    Integer ``p`` uses arbitrary-precision integer powers (no rounding at
    all); fractional ``p`` falls back to exactly-rounded compensated float
    summation.  Returns 0.0 for the zero vector.
    """
    p = float(p)
    if p <= 0:
        raise ValueError(f"moment order must be > 0, got {p}")
    nonzero = np.abs(f.counts[f.counts != 0])
    if nonzero.size == 0:
        return 0.0
    if p.is_integer():
        ip = int(p)
        return float(sum(int(c) ** ip for c in nonzero))
    return math.fsum(float(c) ** p for c in nonzero)


def exact_f2_l2(f: FrequencyVector) -> tuple[float, float]:
    """Exact second moment and its square root (the L2 norm)."""
    f2 = exact_fp(f, 2.0)
    return f2, math.sqrt(f2)


def alpha_for(m: int, p: float) -> int:
    """Smallest convenient exponent with 2**alpha > m**p (typical default)."""
    if m <= 1:
        return 1
    return math.ceil(p * math.log2(m)) + 1


def eta_for(p: float) -> float:
    """A constant strictly above sum_{j>=0} 2**(-j*(p/16 - 1/8)).

    The series converges for every p > 2; the returned value is 1% above it.
    """
    check_moment_order(p)
    ratio = 2.0 ** -(p / 16.0 - 0.125)
    return 1.01 / (1.0 - ratio)


def default_reps(n: int) -> int:
    """Default odd repetition count: 2*ceil(log2 log2 max(n, 4)) + 1."""
    n = max(int(n), 4)
    return 2 * math.ceil(math.log2(math.log2(n))) + 1


@dataclass(frozen=True)
class PracticalScaling:
    """Divisors and caps applied to the proof constants in practical mode.

    The proof constants are sized for union bounds at asymptotic scale; these
    knobs shrink them so that desk-scale runs finish quickly while the
    algorithms keep their structure.  Calibrated against the acceptance
    workloads; every field is overridable.
    """

    gamma_divisor: int = 32          # subsample scale 2**11 -> 64
    window_divisor: int = 40         # tracking window and scan horizon
    capacity_divisor: int = 40       # per-block fingerprint-set capacity
    rep_divisor: int = 3             # median repetitions
    level_constant: float = 1.0      # replaces 16*eta*log2(1/eps^2) in eps_i
    threshold_constant: float = 1.0  # replaces the 80*gamma divisor in thresholds
    hash_count_cap: int = 24         # cap on the 10*ln(1/eps) test hashes
    block_boost: float = 2.0         # multiplies the block count eps*sqrt(F2)
    inner_eps_divisor: float = 1.0   # doubling wrapper runs windows at eps/this
    track_fraction: float = 0.30     # tracking window <= this fraction of blocks
    resolve_fraction: float = 0.02   # scan horizon <= this fraction of blocks
    candidate_min_count: int = 2     # recurrences needed to launch a probe
    max_blocks: int = 512            # cap on blocks per tracking window
    noise_floor_factor: float = 6.0  # effective threshold >= this x mean occupancy
    ams_rows: int = 7
    ams_cols: int = 24
    cs_depth: int = 7                # CountSketch rows (paper mode: 32*ln n)


@dataclass(frozen=True)
class EstimatorConfig:
    """Shared knobs for the moment estimators.

    ``alpha`` and ``reps_r`` default to None and are resolved against the
    stream (via :func:`alpha_for` / :func:`default_reps`) when first needed;
    ``gamma`` and ``eta`` default to the proof values, with ``gamma`` divided
    down in practical mode.
    """

    p: float
    eps: float
    gamma: Optional[int] = None
    eta: Optional[float] = None
    alpha: Optional[int] = None
    reps_r: Optional[int] = None
    seed: int = 0
    constants_mode: str = "practical"
    scaling: PracticalScaling = field(default_factory=PracticalScaling)

    def __post_init__(self):
        check_moment_order(self.p)
        check_accuracy(self.eps)
        if self.constants_mode not in ("paper", "practical"):
            raise ValueError(f"unknown constants_mode {self.constants_mode!r}")
        if self.reps_r is not None and self.reps_r % 2 == 0:
            raise ValueError(f"reps_r must be odd, got {self.reps_r}")

    @property
    def practical(self) -> bool:
        return self.constants_mode == "practical"

    def resolved_gamma(self) -> int:
        if self.gamma is not None:
            return self.gamma
        base = 2**11
        if self.practical:
            return max(2, base // self.scaling.gamma_divisor)
        return base

    def resolved_eta(self) -> float:
        return self.eta if self.eta is not None else eta_for(self.p)

    def resolved_alpha(self, m: int) -> int:
        if self.alpha is not None:
            if 2**self.alpha <= m**self.p:
                raise ValueError(
                    f"alpha={self.alpha} violates 2**alpha > m**p for m={m}, p={self.p}"
                )
            return self.alpha
        return alpha_for(m, self.p)

    def resolved_reps(self, n: int) -> int:
        if self.reps_r is not None:
            return self.reps_r
        reps = default_reps(n)
        if self.practical:
            reps = max(3, reps // self.scaling.rep_divisor)
            if reps % 2 == 0:
                reps += 1
        return reps
