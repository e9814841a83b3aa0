"""Seeded stream generators for the experiment workloads.

Every generator is a pure function of its spec and seed: identical inputs
give byte-identical streams.  Kinds:

- ``uniform``: i.i.d. items over the universe.
- ``zipf``: i.i.d. draws from a rank**(-s) distribution via an explicit CDF
  and binary search, then arranged per the requested order.
- ``planted-heavy``: k items planted at strength * sqrt(F2 of the noise)
  over uniform noise.
- ``spike``: the three-case hard instance with all coordinates at most one
  except a spike coordinate at height 1 or t, optionally boosted by
  floor(c*t/eps) extra copies; t = ceil((C/eps) * n**(1/p)).  The constant C
  is searched per instance so the three cases' exact moments are pairwise
  (1+eps)-separated, and every instance is verified against the promise
  before it is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    ARBITRARY_ORDER,
    INSERTION_ONLY,
    RANDOM_ORDER,
    StreamMeta,
    apply_stream_arrays,
    exact_fp,
)

ORDERS = ("random-shuffle", "sorted", "round-robin", "clustered")
KINDS = ("uniform", "zipf", "planted-heavy", "spike")

SPIKE_CONSTANTS = (1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0, 12.0)


class GenerationError(ValueError):
    """Inconsistent generator parameters or a failed instance check."""


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    n: int
    m: Optional[int] = None
    order: str = "random-shuffle"
    seed: int = 0
    # zipf
    zipf_s: float = 1.2
    # planted-heavy
    planted_k: int = 3
    planted_strength: float = 0.3
    # spike
    case: int = 1
    p: float = 3.0
    eps: float = 0.5
    spike_c: Optional[float] = None
    spike_item: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GenerationError(f"unknown generator kind {self.kind!r}")
        if self.order not in ORDERS:
            raise GenerationError(f"unknown order {self.order!r}")
        if self.n < 1:
            raise GenerationError(f"universe size must be >= 1, got {self.n}")
        if self.kind != "spike" and (self.m is None or self.m < 0):
            raise GenerationError(f"kind {self.kind!r} requires a stream length m >= 0")
        if self.kind == "spike" and self.case not in (1, 2, 3):
            raise GenerationError(f"spike case must be 1, 2 or 3, got {self.case}")


@dataclass
class GeneratedStream:
    items: np.ndarray
    deltas: Optional[np.ndarray]
    meta: StreamMeta
    detail: dict = field(default_factory=dict)

    def updates(self):
        if self.deltas is None:
            return [(int(i), 1) for i in self.items]
        return [(int(i), int(d)) for i, d in zip(self.items, self.deltas)]


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(tags)))


def shuffle_random_order(items: np.ndarray, seed: int) -> np.ndarray:
    """Uniformly random permutation of the updates, deterministic per seed."""
    items = np.asarray(items)
    perm = _rng(seed, 0x5F).permutation(len(items))
    return items[perm]


def _arrange(items: np.ndarray, order: str, seed: int) -> np.ndarray:
    if order == "random-shuffle":
        return shuffle_random_order(items, seed)
    if order == "sorted":
        return np.sort(items)
    if order == "round-robin":
        ordered = np.sort(items)
        distinct, counts = np.unique(ordered, return_counts=True)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        out = np.empty_like(ordered)
        pos = 0
        offsets = np.zeros(distinct.size, dtype=np.int64)
        for round_idx in range(counts.max()):
            live = np.flatnonzero(counts > round_idx)
            out[pos:pos + live.size] = distinct[live]
            pos += live.size
        return out
    # clustered: contiguous runs per item, run order seeded-random
    distinct = np.unique(items)
    perm = _rng(seed, 0xC1).permutation(distinct.size)
    counts = {int(i): int(c) for i, c in zip(*np.unique(items, return_counts=True))}
    out = np.concatenate([np.full(counts[int(d)], d, dtype=np.int64)
                          for d in distinct[perm]]) if distinct.size else items.copy()
    return out


def gen(spec: GeneratorSpec) -> GeneratedStream:
    """Generate a stream for the spec; reproducible per (spec, seed)."""
    if spec.kind == "uniform":
        items = _rng(spec.seed, 0x01).integers(1, spec.n + 1, size=spec.m).astype(np.int64)
        detail = {}
    elif spec.kind == "zipf":
        weights = np.arange(1, spec.n + 1, dtype=np.float64) ** -spec.zipf_s
        cdf = np.cumsum(weights / weights.sum())
        draws = _rng(spec.seed, 0x02).random(spec.m)
        items = (np.searchsorted(cdf, draws) + 1).astype(np.int64)
        detail = {"zipf_s": spec.zipf_s}
    elif spec.kind == "planted-heavy":
        items, detail = _gen_planted(spec)
    else:
        return _gen_spike(spec)
    items = _arrange(items, spec.order, spec.seed)
    order = RANDOM_ORDER if spec.order == "random-shuffle" else ARBITRARY_ORDER
    meta = StreamMeta(n=spec.n, m=len(items), mode=INSERTION_ONLY, order=order)
    return GeneratedStream(items, None, meta, detail)


def _gen_planted(spec: GeneratorSpec) -> tuple[np.ndarray, dict]:
    k, strength = spec.planted_k, spec.planted_strength
    if not 0 < k <= spec.n:
        raise GenerationError(f"planted item count {k} outside [1, n]")
    m_noise = spec.m
    planted_freq = 0
    for _ in range(4):  # fixed point: planted frequency feeds back into noise mass
        f2_rest = m_noise**2 / spec.n
        planted_freq = max(1, round(strength * math.sqrt(f2_rest)))
        m_noise = spec.m - k * planted_freq
        if m_noise <= 0:
            raise GenerationError(
                f"planted items at strength {strength} exceed the stream length"
            )
    noise = _rng(spec.seed, 0x03).integers(1, spec.n + 1, size=m_noise).astype(np.int64)
    planted_items = np.arange(spec.n, spec.n - k, -1, dtype=np.int64)
    items = np.concatenate([noise] + [np.full(planted_freq, it, dtype=np.int64)
                                      for it in planted_items])
    return items, {"planted_items": planted_items.tolist(), "planted_freq": planted_freq}


def spike_height(n: int, p: float, eps: float, constant: float) -> int:
    """Spike height t = ceil((C/eps) * n**(1/p))."""
    return math.ceil((constant / eps) * n ** (1.0 / p))


def spike_case_moments(n: int, p: float, eps: float, constant: float) -> tuple[float, float, float]:
    """Exact F_p of the three promise cases for a given constant C."""
    t = spike_height(n, p, eps, constant)
    boost = math.floor(t / eps)
    v1 = (n - 1) + float(t) ** p
    v2 = (n - 1) + float(1 + boost) ** p
    v3 = (n - 1) + float(t + boost) ** p
    return v1, v2, v3


def find_spike_constant(n: int, p: float, eps: float) -> float:
    """Smallest catalog constant whose three cases are (1+eps)-separated."""
    for constant in SPIKE_CONSTANTS:
        v1, v2, v3 = spike_case_moments(n, p, eps, constant)
        if v2 >= (1.0 + eps) * v1 and v3 >= (1.0 + eps) * v2:
            return constant
    raise GenerationError(
        f"no catalog constant separates the spike cases at n={n}, p={p}, eps={eps}"
    )


def _gen_spike(spec: GeneratorSpec) -> GeneratedStream:
    n, p, eps = spec.n, spec.p, spec.eps
    constant = spec.spike_c if spec.spike_c is not None else find_spike_constant(n, p, eps)
    t = spike_height(n, p, eps, constant)
    boost = math.floor(t / eps)
    rng = _rng(spec.seed, 0x04)
    spike = spec.spike_item if spec.spike_item is not None else int(rng.integers(1, n + 1))
    if not 1 <= spike <= n:
        raise GenerationError(f"spike location {spike} outside [1, n]")
    base = np.arange(1, n + 1, dtype=np.int64)  # every off-spike coordinate at one
    base = base[base != spike]
    if spec.case == 1:
        spike_count = t
    elif spec.case == 2:
        spike_count = 1 + boost
    else:
        spike_count = t + boost
    items = np.concatenate([base, np.full(spike_count, spike, dtype=np.int64)])
    items = _arrange(items, spec.order, spec.seed)
    order = RANDOM_ORDER if spec.order == "random-shuffle" else ARBITRARY_ORDER
    meta = StreamMeta(n=n, m=len(items), mode=INSERTION_ONLY, order=order)
    out = GeneratedStream(items, None, meta, {
        "case": spec.case, "spike_item": spike, "height": t,
        "constant": constant, "boost": boost,
    })
    _check_spike_promise(out, spec, t, boost, spike)
    return out


def _check_spike_promise(stream: GeneratedStream, spec: GeneratorSpec,
                         t: int, boost: int, spike: int) -> None:
    f = apply_stream_arrays(stream.items, None, spec.n)
    off = np.delete(f.counts, spike - 1)
    if off.size and off.max() > 1:
        raise GenerationError("spike instance violates the off-spike promise")
    expected = {1: t, 2: 1 + boost, 3: t + boost}[spec.case]
    if f.count(spike) != expected:
        raise GenerationError("spike coordinate height does not match its case")
    v1, v2, v3 = spike_case_moments(spec.n, spec.p, spec.eps,
                                    stream.detail["constant"])
    if not (v2 >= (1 + spec.eps) * v1 and v3 >= (1 + spec.eps) * v2):
        raise GenerationError("spike cases are not (1+eps)-separated")
    actual = exact_fp(f, spec.p)
    if abs(actual - {1: v1, 2: v2, 3: v3}[spec.case]) > 1e-6 * actual:
        raise GenerationError("spike instance moment differs from its case value")


def add_deletions(items: np.ndarray, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Turnstile variant: delete a random fraction of the inserted occurrences.

    Each chosen occurrence gets a matching -1 update appended, the whole
    stream is re-shuffled, and the final frequency vector equals the original
    with that fraction of its mass removed.
    """
    if not 0.0 <= fraction < 1.0:
        raise GenerationError(f"deletion fraction must lie in [0, 1), got {fraction}")
    items = np.asarray(items, dtype=np.int64)
    rng = _rng(seed, 0x05)
    chosen = rng.random(len(items)) < fraction
    victims = items[chosen]
    out_items = np.concatenate([items, victims])
    out_deltas = np.concatenate([
        np.ones(len(items), dtype=np.int64),
        np.full(len(victims), -1, dtype=np.int64),
    ])
    perm = rng.permutation(len(out_items))
    return out_items[perm], out_deltas[perm]
