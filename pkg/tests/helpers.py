"""Shared stream builders for the test suite (all deterministic per seed)."""

from __future__ import annotations

import numpy as np

from fpstream.core import apply_stream_arrays, exact_fp


def zipf_stream(seed: int, n: int, m: int, s: float = 1.4) -> np.ndarray:
    rng = np.random.default_rng(seed)
    weights = np.arange(1, n + 1, dtype=np.float64) ** -s
    cdf = np.cumsum(weights / weights.sum())
    items = (np.searchsorted(cdf, rng.random(m)) + 1).astype(np.int64)
    rng.shuffle(items)
    return items


def uniform_stream(seed: int, n: int, m: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(1, n + 1, size=m).astype(np.int64)


def planted_l2_stream(seed: int, n: int, m: int, k: int, eps: float,
                      margin: float = 1.3):
    """Uniform noise plus k items planted just above the eps*L2 threshold.

    Returns (items, planted_items); every planted item satisfies
    f_j**2 >= eps**2 * F2 of the final stream (asserted by callers).
    """
    rng = np.random.default_rng(seed)
    noise = rng.integers(1, n + 1, size=m).astype(np.int64)
    f2_noise = exact_fp(apply_stream_arrays(noise, None, n), 2)
    planted_freq = int(margin * eps * (f2_noise / (1 - k * (margin * eps) ** 2)) ** 0.5)
    planted_items = [n - i for i in range(k)]
    items = np.concatenate(
        [noise] + [np.full(planted_freq, it, dtype=np.int64) for it in planted_items]
    )
    rng.shuffle(items)
    return items, planted_items
