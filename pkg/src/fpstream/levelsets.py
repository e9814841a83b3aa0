"""Level-set bookkeeping shared by both estimators.

Nonzero contributions |f_k|**p are bucketed into dyadic bands
[jitter*X / 2**i, 2*jitter*X / 2**i) below an upper bound X on the moment,
with a uniformly random jitter in [1, 2] so that no fixed value sits on a
boundary.  The bands are half-open so they partition: every nonzero value
lands in exactly one level and the level contributions sum back to F_p
exactly.

Per-level accuracy and sampling-depth parameters follow the proof-constant
formulas; ``eps_series`` lets the practical constants mode substitute a
rescaled accuracy ladder while keeping the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from .hashing import sample_rate

MAX_LEVEL_SCAN = 64


def epsilon_i(i: int, p: float, eps: float, eta: float) -> float:
    """Per-level accuracy: eps / (16 * eta * 2**(i*(p/16 - 1/8)) * log2(1/eps^2))."""
    if i < 0:
        raise ValueError(f"level must be >= 0, got {i}")
    return eps / (16.0 * eta * 2.0 ** (i * (p / 16.0 - 0.125)) * math.log2(1.0 / eps**2))


def practical_epsilon_i(i: int, p: float, eps: float) -> float:
    """Accuracy ladder with the union-bound constant dropped (practical mode)."""
    if i < 0:
        raise ValueError(f"level must be >= 0, got {i}")
    return eps * 2.0 ** (-i * (p / 16.0 - 0.125))


def n_i(i: int, n: int, p: float, eps: float, gamma: int, alpha: int,
        clamp: bool = True) -> int:
    """Support-size bound for level i; optionally clamped to the universe size.

    The first branch ((16*alpha*p*log2(n) / eps^(1-2/p)) ** (2p/(p-2))) is
    astronomically large at desk scale, so the subsampled-support branch
    10*gamma*n / 2**i almost always wins.
    """
    if i < 0:
        raise ValueError(f"level must be >= 0, got {i}")
    first = (16.0 * alpha * p * math.log2(max(n, 2)) / eps ** (1.0 - 2.0 / p)) ** (
        (2.0 * p) / (p - 2.0)
    )
    second = 10.0 * gamma * n * 2.0**-i
    value = min(first, second)
    if clamp:
        value = min(value, float(n))
    return max(1, math.floor(value))


def ell_of(i: int, eps_series: Callable[[int], float]) -> int:
    """Smallest k with 2**k > 2**i * eps_series(k)**2 (monotone scan).

    Any accuracy series below one satisfies the predicate by k = i, so the
    scan is bounded; the failure path only fires for a malformed series.
    """
    if i < 0:
        raise ValueError(f"level must be >= 0, got {i}")
    limit = max(MAX_LEVEL_SCAN, i + 1)
    for k in range(limit + 1):
        if 2.0**k > 2.0**i * eps_series(k) ** 2:
            return k
    raise ValueError(f"no sampling level found for level {i} within {limit} steps")


def instance_threshold(level: int, n: int, p: float, gamma: int, alpha: int,
                       eps_series: Callable[[int], float],
                       threshold_constant: float, clamp_support: bool = True) -> float:
    """Heavy-hitter threshold for the sampling-level instance.

    (eps_level**(2/p) / threshold_constant) * (1 / n_level)**(1/2 - 1/p);
    the proof constant is 80*gamma, practical mode passes 1.
    """
    eps_l = eps_series(level)
    support = n_i(level, n, p, eps_l, gamma, alpha, clamp=clamp_support)
    return (eps_l ** (2.0 / p) / threshold_constant) * support ** -(0.5 - 1.0 / p)


@dataclass(frozen=True)
class LevelConfig:
    """Finalize-time level geometry: moment upper bound and jittered bands."""

    x_bound: float
    jitter: float
    p: float

    def __post_init__(self):
        if self.x_bound < 0:
            raise ValueError(f"moment upper bound must be >= 0, got {self.x_bound}")
        if not 1.0 <= self.jitter <= 2.0:
            raise ValueError(f"boundary jitter must lie in [1, 2], got {self.jitter}")

    def bounds(self, i: int) -> tuple[float, float]:
        lo = self.jitter * self.x_bound * 2.0**-i
        return lo, 2.0 * lo

    def level_index(self, fp_value: float) -> Optional[int]:
        """Level whose half-open band contains fp_value; None outside all bands."""
        if fp_value < 0:
            raise ValueError(f"contribution value must be >= 0, got {fp_value}")
        top = 2.0 * self.jitter * self.x_bound
        if fp_value == 0.0 or fp_value >= top or self.x_bound == 0.0:
            return None
        guess = max(0, math.floor(math.log2(top / fp_value)) - 2)
        for i in range(guess, guess + 5):
            lo, hi = self.bounds(i)
            if lo <= fp_value < hi:
                return i
        return None

    def level_count(self, alpha: int, n: int) -> int:
        """Number of bands that can hold an integer frequency, capped at alpha*log2(n).

        Bands past floor(log2(2 * jitter * X)) lie entirely below 1 and stay
        empty for integer counts.
        """
        cap = max(1, alpha * math.ceil(math.log2(max(n, 2))))
        if self.x_bound <= 0:
            return 1
        nonempty = math.floor(math.log2(2.0 * self.jitter * self.x_bound)) + 1
        return max(1, min(cap, nonempty))


@dataclass
class LevelEstimate:
    """Per-level combined contributions and their total."""

    per_rep_sums: dict = field(default_factory=dict)      # level -> list over reps
    scales: dict = field(default_factory=dict)            # level -> sampling rate used
    contributions: dict = field(default_factory=dict)     # level -> median estimate
    total: float = 0.0


def contribution_estimate(
    reported: Mapping[tuple[int, int], Sequence[tuple[int, float]]],
    level_cfg: LevelConfig,
    reps: int,
    level_count: int,
    gamma: int,
    eps_series: Callable[[int], float],
) -> LevelEstimate:
    """Combine per-repetition reported (item, estimate) pairs into a moment estimate.

    ``reported`` maps (rep, sampling_level) to the pairs harvested from that
    repetition's instance.  For each band i, pairs are drawn from sampling
    level ell(i), kept when their estimate**p falls inside band i, scaled by
    the inverse sampling rate, and combined by the median over repetitions.
    Missing (rep, level) keys raise: every repetition must be supplied, even
    if empty.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    result = LevelEstimate()
    p = level_cfg.p
    for i in range(level_count):
        source = ell_of(i, eps_series)
        rate = sample_rate(source, gamma)
        sums = []
        for r in range(reps):
            key = (r, source)
            if key not in reported:
                raise KeyError(
                    f"missing reported pairs for repetition {r} at sampling level {source}"
                )
            lo, hi = level_cfg.bounds(i)
            total = 0.0
            for _, est in reported[key]:
                value = abs(est) ** p
                if lo <= value < hi:
                    total += value
            sums.append(total / rate)
        sums.sort()
        median = sums[len(sums) // 2] if reps % 2 == 1 else 0.5 * (
            sums[reps // 2 - 1] + sums[reps // 2]
        )
        result.per_rep_sums[i] = sums
        result.scales[i] = rate
        result.contributions[i] = median
    result.total = math.fsum(result.contributions.values())
    return result
