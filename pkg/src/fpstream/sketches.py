"""Linear sketches: the AMS tug-of-war F2 estimator and CountSketch.

Both sketches are linear in the stream, so they support signed (turnstile)
deltas, merging of shards built with identical seeds, and exact cancellation
when a stream is replayed negated.  Batch updates go through per-chunk item
histograms so arbitrarily long streams cost O(distinct items) hash work.

State serializes to versioned little-endian blobs (magics ``AMS1``/``CSK1``)
holding the seed and dimensions plus raw counters, which is what the two-pass
estimator persists between passes.
"""

from __future__ import annotations

import struct

import numpy as np

from ._params import as_item_array, check_universe_size
from .hashing import KWiseHash, PairwiseHash

_HEADER = struct.Struct("<4sIQQQQ")  # magic, version, seed, n, rows, cols


def _rng_for(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(tags)))


def _histogram(items: np.ndarray, deltas) -> tuple[np.ndarray, np.ndarray]:
    """Distinct items and their summed deltas for one batch."""
    items = as_item_array(items)
    if deltas is None:
        uniq, counts = np.unique(items, return_counts=True)
        return uniq, counts.astype(np.int64)
    deltas = np.asarray(deltas, dtype=np.int64)
    uniq, inverse = np.unique(items, return_inverse=True)
    sums = np.zeros(uniq.size, dtype=np.int64)
    np.add.at(sums, inverse, deltas)
    return uniq, sums


class AmsF2Sketch:
    """Tug-of-war second-moment sketch.

    Every one of the rows x cols cells accumulates sign(item) * delta under
    its own independent sign hash, the estimate is the median over rows of
    the mean over cols of squared cells.  Sign hashes are 4-wise independent
    (a superset of the pairwise guarantee) so each cell's square has the
    classical 2*F2^2 variance bound.
    """

    MAGIC = b"AMS1"
    VERSION = 1

    def __init__(self, n: int, rows: int = 11, cols: int = 64, seed: int = 0):
        self.n = check_universe_size(n)
        if rows < 1 or cols < 1:
            raise ValueError(f"rows and cols must be >= 1, got {rows}, {cols}")
        self.rows = int(rows)
        self.cols = int(cols)
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF  # serialized as u64
        self.counters = np.zeros((rows, cols), dtype=np.int64)
        self._signs = [
            KWiseHash(_rng_for(self.seed, 0xA5, cell), k=4)
            for cell in range(rows * cols)
        ]

    def update(self, item: int, delta: int = 1) -> None:
        self.update_array(np.array([item], dtype=np.int64), np.array([delta], dtype=np.int64))

    def update_array(self, items, deltas=None) -> None:
        uniq, sums = _histogram(items, deltas)
        if uniq.size == 0:
            return
        if uniq.min() < 1 or uniq.max() > self.n:
            raise IndexError(f"item out of range [1, {self.n}]")
        flat = self.counters.reshape(-1)
        sums_f = sums.astype(np.int64)
        for cell, h in enumerate(self._signs):
            flat[cell] += int(np.dot(h.signs(uniq), sums_f))

    def estimate(self) -> float:
        means = np.mean(self.counters.astype(np.float64) ** 2, axis=1)
        return float(np.median(means))

    def merge(self, other: "AmsF2Sketch") -> "AmsF2Sketch":
        self._check_compatible(other)
        self.counters += other.counters
        return self

    def __add__(self, other: "AmsF2Sketch") -> "AmsF2Sketch":
        out = AmsF2Sketch(self.n, self.rows, self.cols, self.seed)
        out.counters = self.counters + other.counters
        self._check_compatible(other)
        return out

    def _check_compatible(self, other: "AmsF2Sketch") -> None:
        if (self.n, self.rows, self.cols, self.seed) != (other.n, other.rows, other.cols, other.seed):
            raise ValueError("sketches differ in seed or dimensions; cannot merge")

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(self.MAGIC, self.VERSION, self.seed, self.n, self.rows, self.cols)
        return head + self.counters.astype("<i8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "AmsF2Sketch":
        magic, version, seed, n, rows, cols = _HEADER.unpack_from(blob)
        if magic != cls.MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {cls.MAGIC!r}")
        if version != cls.VERSION:
            raise ValueError(f"unsupported AMS sketch version {version}")
        sk = cls(n, rows, cols, seed)
        body = np.frombuffer(blob, dtype="<i8", offset=_HEADER.size)
        sk.counters = body.reshape(rows, cols).astype(np.int64).copy()
        return sk


class BucketedF2Sketch:
    """Fast F2 estimator: per row, signed counts hashed into buckets.

    The sum of squared bucket counters per row is an unbiased F2 estimate
    with variance ~2*F2^2/width; the estimate is the median over rows.  One
    counter is touched per row per update, unlike the dense tug-of-war
    cells, which makes this the right choice as the running F2 tracker
    inside the heavy-hitter machinery.
    """

    def __init__(self, n: int, rows: int = 5, width: int = 256, seed: int = 0):
        self.n = check_universe_size(n)
        self.rows = int(rows)
        self.width = int(width)
        self.seed = int(seed)
        self.counters = np.zeros((rows, width), dtype=np.int64)
        self._bucket = [PairwiseHash(_rng_for(seed, 0xB2, r), width) for r in range(rows)]
        self._sign = [KWiseHash(_rng_for(seed, 0xB3, r), k=4) for r in range(rows)]

    def update_array(self, items, deltas=None) -> None:
        uniq, sums = _histogram(items, deltas)
        if uniq.size == 0:
            return
        for r in range(self.rows):
            buckets = self._bucket[r].values(uniq).astype(np.int64)
            np.add.at(self.counters[r], buckets, self._sign[r].signs(uniq) * sums)

    def update(self, item: int, delta: int = 1) -> None:
        self.update_array(np.array([item], dtype=np.int64), np.array([delta], dtype=np.int64))

    def estimate(self) -> float:
        sq = self.counters.astype(np.float64) ** 2
        return float(np.median(sq.sum(axis=1)))

    @property
    def counter_count(self) -> int:
        return self.rows * self.width


class CountSketchTable:
    """CountSketch: d rows of w signed buckets, query by median of rows.

    Supports turnstile updates, merging, heavy-hitter reporting against an
    L2 threshold, and serialization of the full table state.  Reporting
    enumerates either the touched-item set maintained during updates or,
    for universes up to ``sweep_limit``, the whole universe.
    """

    MAGIC = b"CSK1"
    VERSION = 1
    SWEEP_LIMIT = 1 << 20

    def __init__(self, n: int, depth: int, width: int, seed: int = 0,
                 track_touched: bool = True):
        self.n = check_universe_size(n)
        if depth < 1 or width < 1:
            raise ValueError(f"depth and width must be >= 1, got {depth}, {width}")
        self.depth = int(depth)
        self.width = int(width)
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF  # serialized as u64
        self.track_touched = bool(track_touched)
        self.counters = np.zeros((depth, width), dtype=np.int64)
        self.touched: set[int] = set()
        self._bucket = [PairwiseHash(_rng_for(seed, 0xC5, r), width) for r in range(depth)]
        # 4-wise signs (a superset of the pairwise guarantee): degree-1 parity
        # signs have linear 4-term correlations that blow up the variance of
        # the summed-squares F2 estimate on structured universes.
        self._sign = [KWiseHash(_rng_for(seed, 0xC6, r), k=4) for r in range(depth)]

    def _signs_for(self, row: int, items: np.ndarray) -> np.ndarray:
        return self._sign[row].signs(items)

    def update(self, item: int, delta: int = 1) -> None:
        self.update_array(np.array([item], dtype=np.int64), np.array([delta], dtype=np.int64))

    def update_array(self, items, deltas=None) -> None:
        uniq, sums = _histogram(items, deltas)
        if uniq.size == 0:
            return
        if uniq.min() < 1 or uniq.max() > self.n:
            raise IndexError(f"item out of range [1, {self.n}]")
        for r in range(self.depth):
            buckets = self._bucket[r].values(uniq).astype(np.int64)
            np.add.at(self.counters[r], buckets, self._signs_for(r, uniq) * sums)
        if self.track_touched:
            self.touched.update(uniq.tolist())

    def query(self, item: int) -> float:
        return float(self.query_array(np.array([item], dtype=np.int64))[0])

    def query_array(self, items) -> np.ndarray:
        items = as_item_array(items)
        ests = np.empty((self.depth, items.size), dtype=np.float64)
        for r in range(self.depth):
            buckets = self._bucket[r].values(items).astype(np.int64)
            ests[r] = self.counters[r, buckets] * self._signs_for(r, items)
        return np.median(ests, axis=0)

    def f2_estimate(self) -> float:
        """Median over rows of the summed squared counters (an F2 sketch)."""
        sq = self.counters.astype(np.float64) ** 2
        return float(np.median(sq.sum(axis=1)))

    def l2_estimate(self) -> float:
        return float(np.sqrt(max(self.f2_estimate(), 0.0)))

    def heavy_hitters(self, threshold: float, l2_estimate: float | None = None,
                      candidates=None) -> dict[int, float]:
        """Items whose estimated count is >= (3/4) * threshold * L2.

        ``threshold`` is a fraction of the L2 norm in (0, 1].  Candidates
        default to the touched-item set; a full sweep over the universe is
        used when tracking is off and the universe is enumerable.
        """
        if not 0.0 < threshold <= 1.0:
            raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
        if l2_estimate is None:
            l2_estimate = self.l2_estimate()
        if candidates is None:
            if self.track_touched and self.touched:
                candidates = np.fromiter(self.touched, dtype=np.int64, count=len(self.touched))
            elif self.track_touched:
                return {}
            else:
                if self.n > self.SWEEP_LIMIT:
                    raise ValueError(
                        f"universe {self.n} too large for a sweep; enable touched tracking"
                    )
                candidates = np.arange(1, self.n + 1, dtype=np.int64)
        else:
            candidates = as_item_array(candidates)
        if candidates.size == 0:
            return {}
        ests = self.query_array(candidates)
        # counts are integers: anything below 1/2 is collision noise, and an
        # empty table must report nothing even though its bar is zero
        bar = max(0.75 * threshold * l2_estimate, 0.5)
        keep = ests >= bar
        return {int(i): float(e) for i, e in zip(candidates[keep], ests[keep])}

    def merge(self, other: "CountSketchTable") -> "CountSketchTable":
        if (self.n, self.depth, self.width, self.seed) != (other.n, other.depth, other.width, other.seed):
            raise ValueError("sketches differ in seed or dimensions; cannot merge")
        self.counters += other.counters
        self.touched |= other.touched
        return self

    @property
    def counter_count(self) -> int:
        return self.depth * self.width

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(self.MAGIC, self.VERSION, self.seed, self.n, self.depth, self.width)
        return head + self.counters.astype("<i8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CountSketchTable":
        magic, version, seed, n, depth, width = _HEADER.unpack_from(blob)
        if magic != cls.MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {cls.MAGIC!r}")
        if version != cls.VERSION:
            raise ValueError(f"unsupported CountSketch version {version}")
        sk = cls(n, depth, width, seed)
        body = np.frombuffer(blob, dtype="<i8", offset=_HEADER.size)
        sk.counters = body.reshape(depth, width).astype(np.int64).copy()
        return sk
