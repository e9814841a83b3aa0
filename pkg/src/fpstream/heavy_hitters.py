"""Random-order L2 heavy hitters with (1 +- 2*eps)-approximate frequencies.

The fixed-window tracker partitions its window into blocks and hashes a few
test block indices per item.  An item that arrives inside one of its own
test blocks is "excited": its fingerprint joins the block's test set.  If a
fingerprint from the previous block recurs and is the unique such candidate,
an identification probe starts: it scans following blocks for the unique
item matching the fingerprint, then counts that item's occurrences across a
tracking window of blocks.  Occurrence counts scaled by block length
estimate the item's frequency over the whole window; random arrival order
is what makes a short tracking window representative.  A probe that sees
too few occurrences is dropped, which is what keeps light items out.

At most one probe may be in the identification (scanning) phase at a time;
once resolved, probes count concurrently, with the number of concurrently
tracked items capped at O(1/eps^2).

The doubling wrapper runs fixed-window trackers over dyadic windows so the
stream length need not be known, feeding a running F2 sketch whose estimate
parameterizes each new window.  Its final report rescales the last
harvested window's estimates to the full stream length and keeps items above
the reporting threshold.

Strictly single-threaded: block semantics are order-dependent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._params import check_accuracy, check_universe_size
from .core import NotFinalizedError, PhaseError, PracticalScaling
from .hashing import MERSENNE_P, PairwiseHash
from .sketches import BucketedF2Sketch

_GATE = 1.01 / math.sqrt(2.0)


def _rng(seed, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(tags)))


@dataclass(frozen=True)
class WindowSettings:
    """Resolved machinery sizes for one fixed-window tracker."""

    blocks: int
    hash_count: int
    set_capacity: int
    report_capacity: int
    tracker_capacity: int
    track_blocks: int
    scan_horizon: int
    report_bar: float
    candidate_min_count: int
    degenerate: bool

    @classmethod
    def resolve(cls, eps: float, window_len: int, f2_approx: float,
                practical: bool, sc: PracticalScaling,
                universe: int | None = None) -> "WindowSettings":
        eps = check_accuracy(eps)
        f2_approx = max(float(f2_approx), 1.0)
        eps_eff = eps
        if practical and universe:
            # Block testing can only separate items whose per-block occupancy
            # clears the typical item's; thresholds inside the noise band are
            # unreachable and their candidates just jam the launch gate.
            floor = sc.noise_floor_factor * window_len / (universe * math.sqrt(f2_approx))
            eps_eff = min(0.999, max(eps, floor))
        boost = sc.block_boost if practical else 1.0
        blocks = int(boost * eps_eff * math.sqrt(f2_approx))
        blocks = min(blocks, max(1, window_len // 4))
        if practical:
            blocks = min(blocks, sc.max_blocks)
        report_bar = _GATE * eps_eff * math.sqrt(f2_approx)
        if blocks < 4 or window_len < 16:
            return cls(max(blocks, 1), 0, 0, 0, 0, 0, 0, report_bar, 1, True)
        hash_count = max(1, math.ceil(10.0 * math.log(1.0 / eps_eff)))
        if practical:
            # fixed test-hash budget: enough launch opportunities for items
            # near the threshold without scaling costs for tiny eps
            hash_count = sc.hash_count_cap
        cap_div = sc.capacity_divisor if practical else 1
        win_div = sc.window_divisor if practical else 1
        set_capacity = max(4, int(100.0 * eps_eff**-2 * math.log(1.0 / eps_eff) / cap_div))
        report_capacity = max(2, int(2.0 * eps**-2))
        track_blocks = max(1, int(4000.0 * eps_eff**-2 * math.log(max(window_len, 2)) / win_div))
        scan_horizon = max(1, int(100.0 * math.log(1.0 / eps_eff) / win_div))
        c_min = 1
        if practical:
            track_blocks = min(track_blocks, max(1, int(sc.track_fraction * blocks)))
            scan_horizon = min(scan_horizon, max(1, int(sc.resolve_fraction * blocks)) + 1)
            c_min = sc.candidate_min_count
        return cls(blocks, hash_count, set_capacity, report_capacity,
                   report_capacity, track_blocks, scan_horizon, report_bar, c_min, False)


class IdentifyInstance:
    """One identification probe: resolve a fingerprint to an item, then track it.

    While unresolved, ``observe_scan`` receives the items from the probe's
    origin test block occurring in each completed block and resolves on a
    unique match, abandoning after the scan horizon.  Once resolved,
    ``observe_tracked`` accumulates the item's occurrence count per block
    over the tracking window; the probe reports only if the scaled count
    clears the reporting bar, with a conservative early abandon for items
    running far below it.
    """

    def __init__(self, fingerprint: int, origin_block: int, settings: WindowSettings):
        self.fingerprint = fingerprint
        self.origin_block = origin_block
        self.settings = settings
        self.resolved_id: Optional[int] = None
        self.blocks_scanned = 0
        self.occurrences = 0
        self.blocks_tracked = 0
        self.done = False
        self.report: Optional[tuple[int, float]] = None

    def window_estimate(self) -> float:
        """Occurrences rescaled to the full window: blocks/track_blocks * xi."""
        return self.occurrences * self.settings.blocks / self.settings.track_blocks

    def partial_estimate(self) -> Optional[tuple[int, float]]:
        """Gate-checked estimate from a half-complete tracking, else None.

        Unbiased for any number of tracked blocks; requiring half the window
        keeps the variance too low for light items to sneak over the bar.
        """
        s = self.settings
        if (self.resolved_id is None or self.done
                or self.blocks_tracked < max(6, s.track_blocks // 2)):
            return None
        est = self.occurrences * s.blocks / self.blocks_tracked
        if est >= s.report_bar:
            return (self.resolved_id, est)
        return None

    def observe_scan(self, origin_matches: list) -> None:
        """One completed block while unresolved: resolve on a unique match."""
        if self.done or self.resolved_id is not None:
            return
        if len(origin_matches) == 1:
            self.resolved_id = origin_matches[0]
        else:
            self.blocks_scanned += 1
            if self.blocks_scanned > self.settings.scan_horizon:
                self.done = True

    def observe_tracked(self, count: int) -> None:
        """One completed block while tracking: accumulate occurrences."""
        if self.done or self.resolved_id is None:
            return
        s = self.settings
        self.occurrences += int(count)
        self.blocks_tracked += 1
        if self.blocks_tracked >= s.track_blocks:
            self.done = True
            if self.window_estimate() >= s.report_bar:
                self.report = (self.resolved_id, self.window_estimate())
            return
        # Early abandon: a quarter of the bar after a third of the window is
        # unreachable noise, and at-bar items sit far above this line.
        if self.blocks_tracked >= max(6, s.track_blocks // 3):
            partial = self.occurrences * s.blocks / self.blocks_tracked
            if partial < 0.25 * s.report_bar:
                self.done = True


class FixedWindowHeavyHitters:
    """Block-testing heavy-hitter tracker over a declared window length.

    Needs the window length and a factor-2 approximation of the window's
    second moment up front; the doubling wrapper supplies both.  Updates
    beyond the declared window are ignored.
    """

    def __init__(self, n: int, eps: float, window_len: int, f2_approx: float,
                 seed: int = 0, practical: bool = True,
                 scaling: PracticalScaling | None = None, inert: bool = False,
                 effective_universe: int | None = None):
        self.n = check_universe_size(n)
        self.eps = check_accuracy(eps)
        self.window_len = int(window_len)
        self.f2_approx = float(f2_approx)
        sc = scaling if scaling is not None else PracticalScaling()
        universe = effective_universe if effective_universe else n
        if inert:
            self.settings = WindowSettings.resolve(eps, 1, f2_approx, practical, sc)
        else:
            self.settings = WindowSettings.resolve(eps, self.window_len, f2_approx,
                                                   practical, sc, universe=universe)
        s = self.settings
        self.reported: dict[int, float] = {}
        self.consumed = 0
        if s.degenerate:
            return
        self._boundaries = np.floor(
            np.arange(s.blocks + 1, dtype=np.float64) * self.window_len / s.blocks
        ).astype(np.int64)
        self._test_hashes = [PairwiseHash(_rng(seed, 0x11, q), s.blocks)
                             for q in range(s.hash_count)]
        self._fp_hash = PairwiseHash(_rng(seed, 0x12), MERSENNE_P)
        self._fingerprint: dict[int, int] = {}
        self._tested_at: dict[int, list[int]] = {}  # block index -> items hashing there
        self._block_index = 0
        self._pending: list[np.ndarray] = []
        self._pending_len = 0
        # state of the previous block: test set, overflow flag, recurrence counts
        self._prev_set: set[int] = set()
        self._prev_overflow = 1  # no block before the first one
        self._prev_counts: dict[int, int] = {}
        self._scanning: Optional[IdentifyInstance] = None
        self._trackers: dict[int, IdentifyInstance] = {}
        self._tracker_fp: dict[int, int] = {}
        self._suppressed: set[int] = set()

    # -- stream consumption ------------------------------------------------

    def process(self, item: int) -> None:
        self.process_array(np.array([item], dtype=np.int64))

    def process_array(self, items: np.ndarray) -> None:
        s = self.settings
        room = self.window_len - self.consumed
        if room <= 0 or s.degenerate or len(items) == 0:
            self.consumed = min(self.window_len, self.consumed + len(items))
            return
        items = np.asarray(items, dtype=np.int64)[:room]
        self._intern(np.unique(items))
        self._pending.append(items)
        self._pending_len += len(items)
        while (self._block_index < s.blocks
               and self.consumed + self._pending_len >= self._boundaries[self._block_index + 1]):
            take = int(self._boundaries[self._block_index + 1] - self.consumed)
            block = self._take(take)
            self.consumed += take
            self._finish_block(block, allow_launch=True)
        if self.consumed + self._pending_len >= self.window_len and self._pending_len:
            # final partial block: processed, never used to launch a probe
            tail = self._take(self._pending_len)
            self.consumed += len(tail)
            self._finish_block(tail, allow_launch=False)
        if self.consumed >= self.window_len:
            self._flush_partial_probes()

    def _flush_partial_probes(self) -> None:
        """Salvage half-complete probes once no more blocks will arrive."""
        s = self.settings
        for ident, probe in list(self._trackers.items()):
            partial = probe.partial_estimate()
            if partial is not None and ident not in self.reported \
                    and len(self.reported) < s.report_capacity:
                self.reported[ident] = partial[1]
            self._suppressed.discard(self._tracker_fp.pop(ident))
            del self._trackers[ident]

    def _take(self, count: int) -> np.ndarray:
        out, got = [], 0
        while got < count:
            head = self._pending[0]
            need = count - got
            if len(head) <= need:
                out.append(head)
                got += len(head)
                self._pending.pop(0)
            else:
                out.append(head[:need])
                self._pending[0] = head[need:]
                got += need
        self._pending_len -= count
        return out[0] if len(out) == 1 else np.concatenate(out)

    # -- block machinery ----------------------------------------------------

    def _intern(self, uniq: np.ndarray) -> None:
        new = [x for x in uniq.tolist() if x not in self._fingerprint]
        if not new:
            return
        arr = np.asarray(new, dtype=np.int64)
        self._fingerprint.update(zip(new, self._fp_hash.residues(arr).tolist()))
        # one (block, item) pair per distinct pair: two of an item's hashes
        # landing on the same block must not double it in the index
        stride = np.uint64(self.n + 1)
        combos = np.concatenate(
            [h.values(arr) * stride + arr.astype(np.uint64) for h in self._test_hashes]
        )
        combos = np.unique(combos)
        block_arr = combos // stride
        members = (combos % stride).astype(np.int64).tolist()
        cuts = np.flatnonzero(np.diff(block_arr)) + 1
        starts = np.concatenate(([0], cuts))
        ends = np.concatenate((cuts, [len(members)]))
        blocks = block_arr[starts].tolist()
        tested_at = self._tested_at
        for key, s_, e_ in zip(blocks, starts.tolist(), ends.tolist()):
            tested_at.setdefault(key, []).extend(members[s_:e_])

    def _finish_block(self, block: np.ndarray, allow_launch: bool) -> None:
        s = self.settings
        i = self._block_index
        ordered = np.sort(block)
        fp_of = self._fingerprint

        def counts_of(ids: list[int]) -> list[int]:
            arr = np.asarray(ids, dtype=np.int64)
            lo = np.searchsorted(ordered, arr, side="left")
            hi = np.searchsorted(ordered, arr, side="right")
            return (hi - lo).tolist()

        def block_hits(idx: int) -> tuple[list[int], list[int]]:
            """Items tested at idx that occur in this block, with their counts."""
            candidates = self._tested_at.get(idx)
            if not candidates:
                return [], []
            counts = counts_of(candidates)
            hits = [(x, c) for x, c in zip(candidates, counts) if c > 0]
            return [x for x, _ in hits], [c for _, c in hits]

        # 1. resolved probes count this block; finished ones report or retire
        if self._trackers:
            idents = list(self._trackers)
            for ident, c in zip(idents, counts_of(idents)):
                probe = self._trackers[ident]
                probe.observe_tracked(c)
                if not probe.done:
                    continue
                del self._trackers[ident]
                fp = self._tracker_fp.pop(ident)
                if probe.report is not None and len(self.reported) < s.report_capacity \
                        and ident not in self.reported:
                    self.reported[ident] = probe.report[1]
                else:
                    self._suppressed.discard(fp)

        # 2. the single scanning probe looks for its unique origin match
        if self._scanning is not None:
            probe = self._scanning
            hit_items, _ = block_hits(probe.origin_block)
            matches = [x for x in hit_items if fp_of[x] == probe.fingerprint]
            probe.observe_scan(matches)
            if probe.done:  # scan horizon exhausted
                self._suppressed.discard(probe.fingerprint)
                self._scanning = None
            elif probe.resolved_id is not None:
                ident = probe.resolved_id
                if ident in self.reported or ident in self._trackers \
                        or len(self._trackers) >= s.tracker_capacity:
                    self._suppressed.discard(probe.fingerprint)
                else:
                    self._trackers[ident] = probe
                    self._tracker_fp[ident] = probe.fingerprint
                self._scanning = None

        # 3. recurrence counting for the previous block's test set
        if self._prev_overflow == 0 and self._prev_set:
            hit_items, hit_counts = block_hits(i - 1)
            for x, c in zip(hit_items, hit_counts):
                fp = fp_of[x]
                if fp in self._prev_set:
                    self._prev_counts[fp] = self._prev_counts.get(fp, 0) + c

        # 4. launch check: unique recurring fingerprint from the previous block
        if (allow_launch and self._prev_overflow == 0 and self._scanning is None
                and len(self.reported) <= s.report_capacity and self._prev_counts):
            candidates = [fp for fp, c in self._prev_counts.items()
                          if c >= s.candidate_min_count and fp not in self._suppressed]
            if len(candidates) == 1:
                self._scanning = IdentifyInstance(candidates[0], i - 1, s)
                self._suppressed.add(candidates[0])

        # 5. excitation: build this block's test set for the next block to count
        tested, _ = block_hits(i)
        overflow = 1 if len(tested) > s.set_capacity else 0
        test_set = {fp_of[x] for x in tested[: s.set_capacity + 1]}
        assert len(test_set) <= s.set_capacity + 1
        assert len(self.reported) <= s.report_capacity
        self._prev_set = test_set
        self._prev_overflow = overflow
        self._prev_counts = {}
        self._block_index = i + 1

    # -- output --------------------------------------------------------------

    def report_pairs(self, include_partial: bool = False) -> list[tuple[int, float]]:
        """Current (item, window-frequency estimate) pairs.

        With ``include_partial``, half-complete probes that already clear the
        reporting bar are added (used at end of stream, when their remaining
        tracking blocks will never arrive).
        """
        pairs = dict(self.reported)
        if include_partial and not self.settings.degenerate:
            for ident, probe in self._trackers.items():
                partial = probe.partial_estimate()
                if partial is not None and ident not in pairs \
                        and len(pairs) < max(2, self.settings.report_capacity):
                    pairs[ident] = partial[1]
        return list(pairs.items())


class RandomOrderHeavyHitters:
    """Heavy-hitter tracker for random-order streams of unknown length.

    Runs fixed-window trackers over doubling dyadic windows, each
    parameterized by a running F2 sketch, keeping at most two windows live.
    After ``finalize`` the report rescales the last harvested window to the
    stream length and filters by the reporting threshold.
    """

    def __init__(self, n: int, eps: float, seed: int = 0, practical: bool = True,
                 scaling: PracticalScaling | None = None,
                 round_base: float | None = None, min_window: int | None = None,
                 effective_universe: int | None = None):
        self.n = check_universe_size(n)
        self.eps = check_accuracy(eps)
        self.seed = int(seed)
        self.practical = bool(practical)
        self.scaling = scaling if scaling is not None else PracticalScaling()
        self.round_base = round_base
        # dyadic windows below this length are kept inert: when the stream
        # length is declared up front, they can never be the final read
        self.min_window = min_window
        self.effective_universe = effective_universe if effective_universe else n
        sc = self.scaling
        self.f2_sketch = BucketedF2Sketch(
            n, rows=sc.ams_rows, width=max(64, sc.ams_cols * 8), seed=_seed_of(seed, 0xF2)
        )
        self.length = 0
        self.windows: dict[int, FixedWindowHeavyHitters] = {}
        self.snapshot: Optional[tuple[int, list[tuple[int, float]]]] = None  # (window, pairs)
        self.final_f2: Optional[float] = None
        self._next_epoch = 1  # positions 2**j - 1

    @property
    def inner_eps(self) -> float:
        div = self.scaling.inner_eps_divisor if self.practical else 10.0
        return self.eps / div

    def process(self, item: int) -> None:
        self.process_array(np.array([item], dtype=np.int64))

    def process_array(self, items: np.ndarray) -> None:
        if self.final_f2 is not None:
            raise PhaseError("tracker already finalized; cannot process more updates")
        items = np.asarray(items, dtype=np.int64)
        start = 0
        while start < len(items):
            take = min(len(items) - start, self._next_epoch - self.length)
            piece = items[start:start + take]
            self.f2_sketch.update_array(piece)
            for window in self.windows.values():
                window.process_array(piece)
            self.length += take
            start += take
            if self.length == self._next_epoch:
                self._epoch()

    def _epoch(self) -> None:
        j = self._next_epoch.bit_length()  # length == 2**j - 1
        if j in self.windows:
            self.snapshot = (2**j, self.windows[j].report_pairs())
        elif self.snapshot is None:
            self.snapshot = (2**j, [])
        f2_now = 1.01 * max(self.f2_sketch.estimate(), 1.0)
        inert = self.min_window is not None and 2 ** (j + 1) < self.min_window
        self.windows[j + 1] = FixedWindowHeavyHitters(
            self.n, self.inner_eps, 2 ** (j + 1), f2_now,
            seed=_seed_of(self.seed, 0x57, j + 1), practical=self.practical,
            scaling=self.scaling, inert=inert,
            effective_universe=self.effective_universe,
        )
        self.windows.pop(j - 1, None)
        self._next_epoch = 2 ** (j + 1) - 1

    def finalize(self) -> None:
        if self.final_f2 is None:
            self.final_f2 = max(self.f2_sketch.estimate(), 0.0)

    def report(self) -> list[tuple[int, float]]:
        """(item, estimated stream frequency) pairs above the reporting bar.

        Raises :class:`NotFinalizedError` if the stream has not been
        finalized; estimates are optionally rounded to powers of
        ``round_base``.
        """
        if self.final_f2 is None:
            raise NotFinalizedError("stream not finalized; call finalize() first")
        if self.length == 0:
            return []
        # Read the last fully-seeded window as it stands at stream end: its
        # per-item estimates are window-scoped either way, but at desk scale
        # most probes complete after the dyadic harvest point would have hit.
        jmax = max(self.windows) if self.windows else None
        live = self.windows.get(jmax - 1) if jmax is not None else None
        live_pairs = live.report_pairs(include_partial=True) if live is not None else []
        if live_pairs:
            window, pairs = live.window_len, live_pairs
        elif self.snapshot is not None:
            window, pairs = self.snapshot
        else:
            return []
        scale = self.length / window
        bar = (1.0 - self.eps / 5.0) * self.eps * math.sqrt(self.final_f2) / 1.01
        out = []
        for item, window_est in pairs:
            est = window_est * scale
            if self.round_base is not None and est > 0:
                power = round(math.log(est, self.round_base))
                est = self.round_base**power
            if est >= bar:
                out.append((item, est))
        out.sort(key=lambda pair: (-pair[1], pair[0]))
        cap = max(2, int(2.0 * self.eps**-2))
        return out[:cap]


def _seed_of(seed: int, *tags: int) -> int:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(tags))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
