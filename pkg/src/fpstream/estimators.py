"""The two moment estimators: one-pass random-order and two-pass arbitrary-order.

Both share the same skeleton: a grid of per-(sampling-level, repetition)
heavy-hitter instances over nested subsampled substreams, whose reported
frequencies are bucketed into dyadic contribution bands, rescaled by the
sampling rate, median-combined across repetitions, and summed.  The one-pass
estimator needs random arrival order and insertion-only updates and gets its
frequency estimates from block tracking; the two-pass estimator identifies
candidates with CountSketch in pass 1 and counts them exactly in pass 2, so
it tolerates adversarial order and turnstile deltas.

Estimators follow the sklearn convention: parameters are stored verbatim,
``fit`` consumes array input and returns self, learned values land in
``estimate_`` and ``space_report_``.  The granular streaming surface
(``process_update`` .. ``finalize``) drives the same state machine.

Instances are materialized only at sampling levels some contribution band
actually reads, and only where the expected substream is nonempty; both
prunings leave the output distribution unchanged.  The (level, repetition)
grid is embarrassingly parallel: a shard owning a subset of instances can
consume the full stream independently, and finalization is a single reduce
over the grid; this implementation runs single-threaded.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ._params import (
    ParamsMixin,
    as_item_array,
    check_items_in_range,
    check_universe_size,
)
from .core import (
    CapacityError,
    ConsistencyError,
    EstimatorConfig,
    ModeError,
    PhaseError,
    PracticalScaling,
)
from .hashing import SubsampleHierarchy, sample_rate
from .heavy_hitters import RandomOrderHeavyHitters
from .levelsets import (
    LevelConfig,
    contribution_estimate,
    ell_of,
    epsilon_i,
    instance_threshold,
    practical_epsilon_i,
)
from .sketches import CountSketchTable

# levels whose expected surviving-item count falls below this are lost to the
# repetition median regardless, so no instance is materialized for them
_PRUNE_OCCUPANCY = 0.25
_TABLE_CELL_LIMIT = 50_000_000


@dataclass
class SpaceReport:
    """Counter accounting for an estimator run.

    ``counters_allocated`` counts machine words of algorithmic state
    (sketch cells and enforced structure capacities); hash-evaluation memo
    caches kept for speed are reported separately in ``cache_counters`` and
    excluded from the scaling figure.
    """

    counters_allocated: int = 0
    bits_estimate: int = 0
    by_component: dict = field(default_factory=dict)
    by_level: list = field(default_factory=list)  # (level, threshold-driven counters)
    cache_counters: int = 0

    @classmethod
    def build(cls, by_component: dict, by_level: list, cache: int = 0) -> "SpaceReport":
        total = int(sum(by_component.values()))
        return cls(total, total * 64, dict(by_component), list(by_level), int(cache))


class _LevelGrid:
    """Shared level geometry: thresholds, source levels, instance pruning."""

    def __init__(self, n: int, cfg: EstimatorConfig, alpha: int):
        self.n = n
        self.cfg = cfg
        self.alpha = alpha
        self.gamma = cfg.resolved_gamma()
        self.eta = cfg.resolved_eta()
        self.reps = cfg.resolved_reps(n)
        if cfg.practical:
            self.eps_series = lambda k: practical_epsilon_i(k, cfg.p, cfg.eps)
            self.threshold_constant = cfg.scaling.threshold_constant
        else:
            self.eps_series = lambda k: epsilon_i(k, cfg.p, cfg.eps, self.eta)
            self.threshold_constant = 80.0 * self.gamma
        # deepest level whose expected substream is nonempty
        self.max_source_level = math.ceil(math.log2(self.gamma * n / _PRUNE_OCCUPANCY))
        band_cap = self.alpha * math.ceil(math.log2(max(n, 2)))
        sources = set()
        for i in range(band_cap):
            lvl = ell_of(i, self.eps_series)
            if lvl > self.max_source_level:
                break
            sources.add(lvl)
        self.source_levels = sorted(sources)

    def threshold(self, level: int) -> float:
        # sizing and thresholds keep the 10*gamma*n/2**level support
        # branch unclamped: the universe clamp flattens the geometric decay of
        # the per-level space right above level log2(gamma)
        theta = instance_threshold(
            level, self.n, self.cfg.p, self.gamma, self.alpha,
            self.eps_series, self.threshold_constant, clamp_support=False,
        )
        return min(max(theta, 1e-9), 0.999)

    def rate(self, level: int) -> float:
        return sample_rate(level, self.gamma)

    def source_for(self, band: int) -> int:
        return ell_of(band, self.eps_series)


def _derive_seed(seed: int, *tags: int) -> int:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(tags))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class RandomOrderFpEstimator(ParamsMixin):
    """One-pass F_p estimator for random-order insertion-only streams.

    Routes each update to the heavy-hitter instance of every sampling level
    that keeps the item, then combines the instances' frequency reports into
    per-band contributions at finalize time.  The moment upper bound defaults
    to (stream length)**p; supplying ``fp_hint`` (a 1.01-underapproximation
    of the true moment) switches the bands to the hinted geometry instead.

    After ``fit``: ``estimate_``, ``space_report_``, ``levels_``.
    """

    def __init__(self, n: int, p: float = 3.0, eps: float = 0.25, seed: int = 0,
                 constants_mode: str = "practical",
                 scaling: PracticalScaling | None = None,
                 expected_m: int | None = None, fp_hint: float | None = None,
                 round_estimates: bool = False, m_bound_exponent: int = 3):
        self.n = n
        self.p = p
        self.eps = eps
        self.seed = seed
        self.constants_mode = constants_mode
        self.scaling = scaling
        self.expected_m = expected_m
        self.fp_hint = fp_hint
        self.round_estimates = round_estimates
        self.m_bound_exponent = m_bound_exponent
        self._setup()

    def _setup(self):
        check_universe_size(self.n)
        sc = self.scaling if self.scaling is not None else PracticalScaling()
        self._cfg = EstimatorConfig(p=self.p, eps=self.eps, seed=self.seed,
                                    constants_mode=self.constants_mode, scaling=sc)
        m_bound = self.expected_m if self.expected_m else self.n**self.m_bound_exponent
        self._grid = _LevelGrid(self.n, self._cfg, self._cfg.resolved_alpha(m_bound))
        g = self._grid
        self._hierarchies = [
            SubsampleHierarchy(self.n, g.gamma, self.seed, rep_id=r) for r in range(g.reps)
        ]
        self._universe_units = None
        round_base = None
        if self.round_estimates:
            round_base = 1.0 + self.eps / (
                16.0 * self.p * g.alpha * math.log2(max(self.n, 2))
            )
        self._trackers = {}
        for lvl in g.source_levels:
            theta = g.threshold(lvl)
            min_window = None
            if self.expected_m:
                expected_sub = self.expected_m * g.rate(lvl)
                if expected_sub >= 64:
                    min_window = 2 ** (math.floor(math.log2(expected_sub)) - 1)
            effective_universe = max(1, int(self.n * g.rate(lvl)))
            for r in range(g.reps):
                self._trackers[(lvl, r)] = RandomOrderHeavyHitters(
                    self.n, theta, seed=_derive_seed(self.seed, 0x0E, lvl, r),
                    practical=self._cfg.practical, scaling=sc, round_base=round_base,
                    min_window=min_window, effective_universe=effective_universe,
                )
        self._m = 0
        self._finalized = False

    # -- streaming surface ---------------------------------------------------

    def process_update(self, item: int, delta: int = 1) -> "RandomOrderFpEstimator":
        if delta != 1:
            raise ModeError(
                f"random-order estimator accepts insertion-only updates; got delta={delta}"
            )
        return self.process_array(np.array([item], dtype=np.int64))

    def process_array(self, items) -> "RandomOrderFpEstimator":
        if self._finalized:
            raise PhaseError("estimator already finalized")
        items = check_items_in_range(as_item_array(items), self.n)
        if items.size == 0:
            return self
        if self._universe_units is None:
            self._universe_units = [h.universe_unit_values() for h in self._hierarchies]
        g = self._grid
        for r in range(g.reps):
            units = self._universe_units[r][items - 1]
            for lvl in g.source_levels:
                rate = g.rate(lvl)
                sub = items if rate >= 1.0 else items[units < rate]
                if sub.size:
                    self._trackers[(lvl, r)].process_array(sub)
        self._m += int(items.size)
        return self

    def finalize(self) -> tuple[float, SpaceReport]:
        if self._finalized:
            return self.estimate_, self.space_report_
        g = self._grid
        for tracker in self._trackers.values():
            tracker.finalize()
        reported = {}
        for r in range(g.reps):
            for lvl in range(g.max_source_level + 1):
                key = (r, lvl)
                if (lvl, r) in self._trackers:
                    reported[key] = self._trackers[(lvl, r)].report()
                else:
                    reported[key] = []
        if self._m == 0:
            x_bound, jitter = 0.0, 1.0
            alpha_m = g.alpha
        else:
            if self.fp_hint is not None:
                x_bound = self.fp_hint
            else:
                x_bound = float(self._m) ** self.p
                if self._cfg.practical:
                    # F_p <= F2**(p/2) (norm monotonicity) is far tighter than
                    # m**p on flat streams; both are valid upper bounds
                    f2s = sorted(self._trackers[(0, r)].final_f2 for r in range(g.reps))
                    f2_med = max(f2s[len(f2s) // 2], 1.0)
                    x_bound = min(x_bound, (1.3 * f2_med) ** (self.p / 2.0))
            jitter = 1.0 + float(
                np.random.default_rng(np.random.SeedSequence(entropy=self.seed,
                                                             spawn_key=(0x2E,))).random()
            )
            alpha_m = self._cfg.resolved_alpha(self._m)
        level_cfg = LevelConfig(x_bound, jitter, self.p)
        count = level_cfg.level_count(alpha_m, self.n) if self._m else 0
        # bands whose source level was pruned contribute zero (empty reports)
        count = min(count, self._band_limit())
        if count:
            result = contribution_estimate(reported, level_cfg, g.reps, count,
                                           g.gamma, g.eps_series)
            self.levels_ = result
            self.estimate_ = result.total
        else:
            self.levels_ = None
            self.estimate_ = 0.0
        self.level_config_ = level_cfg
        self.space_report_ = self.space_report()
        self._finalized = True
        return self.estimate_, self.space_report_

    def _band_limit(self) -> int:
        g = self._grid
        band = 0
        while ell_of(band, g.eps_series) <= g.max_source_level:
            band += 1
        return band

    # -- sklearn-style surface -------------------------------------------------

    def fit(self, items, deltas=None) -> "RandomOrderFpEstimator":
        """Consume a full random-order stream of item indices and finalize."""
        if deltas is not None:
            deltas = np.asarray(deltas)
            if np.any(deltas != 1):
                raise ModeError("random-order estimator accepts insertion-only streams")
        self.process_array(items)
        self.finalize()
        return self

    # -- accounting -------------------------------------------------------------

    def space_report(self) -> SpaceReport:
        g = self._grid
        by_level = []
        hh_total = 0
        overhead = 0
        cache = 0
        for lvl in g.source_levels:
            theta = g.threshold(lvl)
            per_tracker = _tracker_capacity_counters(theta, self._cfg)
            level_counters = per_tracker * g.reps
            hh_total += level_counters
            by_level.append((lvl, level_counters))
            for r in range(g.reps):
                tr = self._trackers[(lvl, r)]
                overhead += tr.f2_sketch.counter_count
                cache += sum(len(w._fingerprint) * (1 + w.settings.hash_count)
                             for w in tr.windows.values() if not w.settings.degenerate)
        by_component = {
            "heavy_hitter_state": hh_total,
            "f2_sketches": overhead,
            "subsample_hashes": 4 * g.reps,
        }
        return SpaceReport.build(by_component, by_level, cache)


def _tracker_capacity_counters(theta: float, cfg: EstimatorConfig) -> int:
    """Enforced-capacity words for one heavy-hitter tracker at threshold theta.

    Two windows are live at a time; each holds a test set, a recurrence map,
    the report list, and the probe table, all capped by theta-driven sizes.
    """
    sc = cfg.scaling
    cap_div = sc.capacity_divisor if cfg.practical else 1
    set_cap = max(4, int(100.0 * theta**-2 * math.log(1.0 / theta) / cap_div))
    report_cap = max(2, int(2.0 * theta**-2))
    return 2 * (2 * set_cap + 4 * report_cap)


class TwoPassFpEstimator(ParamsMixin):
    """Two-pass F_p estimator for arbitrary-order insertion-only/turnstile streams.

    Pass 1 feeds per-(level, repetition) CountSketch tables over the
    subsampled substreams; ``freeze`` extracts heavy-hitter candidates and
    allocates exact counters; pass 2 replays the stream (any order) counting
    candidates exactly; ``finalize`` buckets the exact contributions into
    bands and combines them.  Linearity makes the output invariant to any
    permutation of either pass.

    After ``fit``: ``estimate_``, ``space_report_``, ``candidates_``.
    """

    def __init__(self, n: int, p: float = 3.0, eps: float = 0.25, seed: int = 0,
                 mode: str = "insertion", constants_mode: str = "practical",
                 scaling: PracticalScaling | None = None,
                 expected_m: int | None = None, fp_hint: float | None = None,
                 candidate_capacity_factor: float = 8.0,
                 m_bound_exponent: int = 3):
        self.n = n
        self.p = p
        self.eps = eps
        self.seed = seed
        self.mode = mode
        self.constants_mode = constants_mode
        self.scaling = scaling
        self.expected_m = expected_m
        self.fp_hint = fp_hint
        self.candidate_capacity_factor = candidate_capacity_factor
        self.m_bound_exponent = m_bound_exponent
        self._setup()

    def _setup(self):
        check_universe_size(self.n)
        if self.mode not in ("insertion", "turnstile"):
            raise ValueError(f"mode must be 'insertion' or 'turnstile', got {self.mode!r}")
        sc = self.scaling if self.scaling is not None else PracticalScaling()
        self._cfg = EstimatorConfig(p=self.p, eps=self.eps, seed=self.seed,
                                    constants_mode=self.constants_mode, scaling=sc)
        m_bound = self.expected_m if self.expected_m else self.n**self.m_bound_exponent
        self._grid = _LevelGrid(self.n, self._cfg, self._cfg.resolved_alpha(m_bound))
        g = self._grid
        self._hierarchies = [
            SubsampleHierarchy(self.n, g.gamma, self.seed, rep_id=r) for r in range(g.reps)
        ]
        self._universe_units = None
        depth = sc.cs_depth if self._cfg.practical else math.ceil(32.0 * math.log(max(self.n, 2)))
        self._tables = {}
        for lvl in g.source_levels:
            theta = g.threshold(lvl)
            width = math.ceil(6.0 / theta**2)
            if depth * width > _TABLE_CELL_LIMIT:
                raise CapacityError(
                    f"CountSketch table {depth}x{width} at level {lvl} exceeds the "
                    f"{_TABLE_CELL_LIMIT}-cell limit; these constants are not runnable "
                    f"at this scale"
                )
            for r in range(g.reps):
                self._tables[(lvl, r)] = CountSketchTable(
                    self.n, depth, width, seed=_derive_seed(self.seed, 0x2F, lvl, r),
                    track_touched=self.n > CountSketchTable.SWEEP_LIMIT,
                )
        self.phase = "pass1"
        self._m1 = 0
        self._m2 = 0
        self._abs_delta_total = 0
        self.candidates_ = None
        self._cand_counts = None

    # -- pass 1 ---------------------------------------------------------------

    def process_update(self, item: int, delta: int = 1):
        return self.process_array(np.array([item], dtype=np.int64),
                                  np.array([delta], dtype=np.int64))

    def process_array(self, items, deltas=None):
        if self.phase == "pass1":
            return self.pass1_array(items, deltas)
        if self.phase == "pass2":
            return self.pass2_array(items, deltas)
        raise PhaseError(f"no pass accepting updates in phase {self.phase!r}")

    def pass1_array(self, items, deltas=None) -> "TwoPassFpEstimator":
        if self.phase != "pass1":
            raise PhaseError(f"pass 1 updates not allowed in phase {self.phase!r}")
        items = check_items_in_range(as_item_array(items), self.n)
        deltas = self._check_deltas(items, deltas)
        if items.size == 0:
            return self
        if self._universe_units is None:
            self._universe_units = [h.universe_unit_values() for h in self._hierarchies]
        g = self._grid
        for r in range(g.reps):
            units = self._universe_units[r][items - 1]
            for lvl in g.source_levels:
                rate = g.rate(lvl)
                if rate >= 1.0:
                    sub, dsub = items, deltas
                else:
                    keep = units < rate
                    sub, dsub = items[keep], deltas[keep]
                if sub.size:
                    self._tables[(lvl, r)].update_array(sub, dsub)
        self._m1 += int(items.size)
        self._abs_delta_total += int(np.abs(deltas).sum())
        return self

    def _check_deltas(self, items: np.ndarray, deltas) -> np.ndarray:
        if deltas is None:
            return np.ones(items.size, dtype=np.int64)
        deltas = np.asarray(deltas, dtype=np.int64)
        if deltas.shape != items.shape:
            raise ValueError("items and deltas must have matching shapes")
        if self.mode == "insertion" and np.any(deltas != 1):
            raise ModeError("insertion-only mode requires delta=+1 on every update")
        return deltas

    def freeze(self) -> "TwoPassFpEstimator":
        """Close pass 1: extract candidates and allocate their exact counters."""
        if self.phase != "pass1":
            raise PhaseError(f"freeze only allowed in pass1, not {self.phase!r}")
        g = self._grid
        union: set[int] = set()
        for lvl in g.source_levels:
            theta = g.threshold(lvl)
            for r in range(g.reps):
                table = self._tables[(lvl, r)]
                union.update(table.heavy_hitters(theta).keys())
        capacity = self._candidate_capacity()
        if len(union) > capacity:
            raise CapacityError(
                f"{len(union)} candidates exceed the configured capacity {capacity}"
            )
        self.candidates_ = np.array(sorted(union), dtype=np.int64)
        self._cand_counts = np.zeros(self.candidates_.size, dtype=np.int64)
        self.phase = "pass2"
        return self

    def _candidate_capacity(self) -> int:
        g = self._grid
        bound = self.candidate_capacity_factor * self.eps ** (-4.0 / self.p) \
            * self.n ** (1.0 - 2.0 / self.p) * g.reps
        return min(self.n, max(1, math.floor(bound)))

    # -- pass 2 ---------------------------------------------------------------

    def pass2_array(self, items, deltas=None) -> "TwoPassFpEstimator":
        if self.phase != "pass2":
            raise PhaseError(f"pass 2 updates not allowed in phase {self.phase!r}")
        items = check_items_in_range(as_item_array(items), self.n)
        deltas = self._check_deltas(items, deltas)
        if items.size == 0:
            return self
        pos = np.searchsorted(self.candidates_, items)
        pos_clipped = np.minimum(pos, max(self.candidates_.size - 1, 0))
        hit = self.candidates_.size > 0
        if hit:
            match = self.candidates_[pos_clipped] == items
            np.add.at(self._cand_counts, pos_clipped[match], deltas[match])
        self._m2 += int(items.size)
        return self

    def finalize(self) -> tuple[float, SpaceReport]:
        if self.phase == "done":
            return self.estimate_, self.space_report_
        if self.phase != "pass2":
            raise PhaseError(f"finalize only allowed after pass 2, not in {self.phase!r}")
        if self._m2 != self._m1:
            raise ConsistencyError(
                f"pass 2 replayed {self._m2} updates but pass 1 saw {self._m1}"
            )
        g = self._grid
        if self.fp_hint is not None:
            x_bound = self.fp_hint
        else:
            x_bound = float(self._abs_delta_total) ** self.p
            if self._cfg.practical and self._m1:
                f2s = sorted(self._tables[(0, r)].f2_estimate() for r in range(g.reps))
                f2_med = max(f2s[len(f2s) // 2], 1.0)
                x_bound = min(x_bound, (1.3 * f2_med) ** (self.p / 2.0))
        jitter = 1.0 + float(
            np.random.default_rng(np.random.SeedSequence(entropy=self.seed,
                                                         spawn_key=(0x3E,))).random()
        )
        level_cfg = LevelConfig(x_bound if self._m1 else 0.0, jitter, self.p)
        alpha_m = self._cfg.resolved_alpha(max(self._abs_delta_total, 2))
        count = level_cfg.level_count(alpha_m, self.n) if self._m1 else 0
        contributions = {}
        exact = {int(k): int(c) for k, c in zip(self.candidates_, self._cand_counts)}
        self.candidate_counts_ = exact
        for i in range(count):
            source = g.source_for(i)
            if source > g.max_source_level:
                contributions[i] = 0.0
                continue
            rate = g.rate(source)
            lo, hi = level_cfg.bounds(i)
            sums = []
            for r in range(g.reps):
                hier = self._hierarchies[r]
                acc = 0.0
                for k, c in exact.items():
                    if c == 0:
                        continue
                    value = float(abs(c)) ** self.p
                    if lo <= value < hi and hier.is_sampled(k, source):
                        acc += value
                sums.append(acc / rate)
            sums.sort()
            contributions[i] = sums[len(sums) // 2]
        total = math.fsum(contributions.values())
        self.level_contributions_ = contributions
        self.level_config_ = level_cfg
        self.estimate_ = total
        self.space_report_ = self.space_report()
        self.phase = "done"
        return self.estimate_, self.space_report_

    # -- sklearn-style surface --------------------------------------------------

    def fit(self, items, deltas=None) -> "TwoPassFpEstimator":
        """Run both passes over a replayable stream and finalize."""
        self.pass1_array(items, deltas)
        self.freeze()
        self.pass2_array(items, deltas)
        self.finalize()
        return self

    # -- accounting ---------------------------------------------------------------

    def space_report(self) -> SpaceReport:
        g = self._grid
        by_level = []
        table_total = 0
        for lvl in g.source_levels:
            level_counters = sum(
                self._tables[(lvl, r)].counter_count for r in range(g.reps)
            )
            table_total += level_counters
            by_level.append((lvl, level_counters))
        cand = 0 if self.candidates_ is None else int(self.candidates_.size)
        by_component = {
            "countsketch_tables": table_total,
            "candidate_counters": cand,
            "subsample_hashes": 4 * g.reps,
        }
        return SpaceReport.build(by_component, by_level)

    # -- pass-1 state persistence ---------------------------------------------------

    _SAVE_MAGIC = b"FP2P"
    _SAVE_VERSION = 1

    def save_pass1_state(self) -> bytes:
        """Serialize the frozen pass-1 sketch state (call after ``freeze``)."""
        if self.phase not in ("pass2", "done"):
            raise PhaseError("pass-1 state serializes after freeze()")
        blobs = [self._tables[key].to_bytes() for key in sorted(self._tables)]
        head = struct.pack(
            "<4sIQdd qQQ",
            self._SAVE_MAGIC, self._SAVE_VERSION, self.n, self.p, self.eps,
            self.seed, self._m1, self._abs_delta_total,
        )
        mode_flag = struct.pack("<II", self.mode == "turnstile",
                                self.constants_mode == "paper")
        body = struct.pack("<Q", len(blobs))
        for blob in blobs:
            body += struct.pack("<Q", len(blob)) + blob
        return head + mode_flag + body

    @classmethod
    def restore_pass1_state(cls, blob: bytes, **kwargs) -> "TwoPassFpEstimator":
        """Rebuild a frozen estimator (phase pass2) from serialized state."""
        head_fmt = "<4sIQdd qQQ"
        head_size = struct.calcsize(head_fmt)
        magic, version, n, p, eps, seed, m1, abs_total = struct.unpack_from(head_fmt, blob)
        if magic != cls._SAVE_MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != cls._SAVE_VERSION:
            raise ValueError(f"unsupported pass-1 state version {version}")
        turnstile, paper = struct.unpack_from("<II", blob, head_size)
        offset = head_size + 8
        (count,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        est = cls(n=int(n), p=float(p), eps=float(eps), seed=int(seed),
                  mode="turnstile" if turnstile else "insertion",
                  constants_mode="paper" if paper else "practical", **kwargs)
        for key in sorted(est._tables):
            (size,) = struct.unpack_from("<Q", blob, offset)
            offset += 8
            track = est._tables[key].track_touched
            est._tables[key] = CountSketchTable.from_bytes(blob[offset:offset + size])
            est._tables[key].track_touched = track
            offset += size
        est._m1 = int(m1)
        est._abs_delta_total = int(abs_total)
        est.freeze()
        return est
