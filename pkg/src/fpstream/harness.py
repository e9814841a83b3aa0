"""Benchmark harness: estimator-vs-oracle trials, success rates, space sweeps.

A master seed derives every per-trial seed by counter hashing, so trial i is
the same stream and estimator randomness no matter how many workers run or
in what order results arrive; rows are merged in trial-id order.
"""

from __future__ import annotations

import math
import multiprocessing as mp
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import (
    ModeError,
    RANDOM_ORDER,
    TURNSTILE,
    apply_stream_arrays,
    exact_fp,
)
from .estimators import RandomOrderFpEstimator, SpaceReport, TwoPassFpEstimator
from .streamgen import GeneratorSpec, add_deletions, gen

ALGORITHMS = ("ro1pass", "tp-insert", "tp-turnstile", "oracle")

CSV_HEADER = "trial,seed,estimate,oracle,rel_err,success,counters,bits"


@dataclass
class TrialResult:
    trial_id: int
    seed: int
    estimate: float
    oracle: float
    rel_err: float
    success: bool
    wall_time_s: float
    space: Optional[SpaceReport]

    def csv_row(self) -> str:
        counters = self.space.counters_allocated if self.space else 0
        bits = self.space.bits_estimate if self.space else 0
        return (f"{self.trial_id},{self.seed},{self.estimate:.6e},{self.oracle:.6e},"
                f"{self.rel_err:.6e},{int(self.success)},{counters},{bits}")


def trial_seed(master_seed: int, trial_id: int) -> int:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(0x7512, trial_id))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_estimator(algorithm: str, items: np.ndarray, deltas: Optional[np.ndarray],
                  n: int, p: float, eps: float, seed: int,
                  constants_mode: str = "practical",
                  order: str = RANDOM_ORDER, mode: str = "insertion-only"):
    """Run one algorithm over a stream; returns (estimate, SpaceReport|None)."""
    if algorithm == "oracle":
        f = apply_stream_arrays(items, deltas, n)
        return exact_fp(f, p), None
    if algorithm == "ro1pass":
        if order != RANDOM_ORDER:
            raise ModeError("ro1pass requires a random-order stream")
        if mode == TURNSTILE or (deltas is not None and np.any(deltas != 1)):
            raise ModeError("ro1pass requires an insertion-only stream")
        est = RandomOrderFpEstimator(n=n, p=p, eps=eps, seed=seed,
                                     constants_mode=constants_mode,
                                     expected_m=len(items))
        est.fit(items)
        return est.estimate_, est.space_report_
    if algorithm == "tp-insert":
        if mode == TURNSTILE or (deltas is not None and np.any(deltas != 1)):
            raise ModeError("tp-insert requires an insertion-only stream")
        est = TwoPassFpEstimator(n=n, p=p, eps=eps, seed=seed, mode="insertion",
                                 constants_mode=constants_mode, expected_m=len(items))
        est.fit(items, None)
        return est.estimate_, est.space_report_
    if algorithm == "tp-turnstile":
        est = TwoPassFpEstimator(n=n, p=p, eps=eps, seed=seed, mode="turnstile",
                                 constants_mode=constants_mode, expected_m=len(items))
        est.fit(items, deltas)
        return est.estimate_, est.space_report_
    raise ValueError(f"unknown algorithm {algorithm!r}; pick from {ALGORITHMS}")


def _one_trial(args) -> TrialResult:
    (trial_id, master_seed, spec, algorithm, p, eps, constants_mode,
     deletion_fraction) = args
    seed = trial_seed(master_seed, trial_id)
    stream = gen(replace(spec, seed=seed))
    items, deltas = stream.items, stream.deltas
    if deletion_fraction:
        items, deltas = add_deletions(items, deletion_fraction, seed)
    start = time.perf_counter()
    estimate, space = run_estimator(
        algorithm, items, deltas, spec.n, p, eps, seed,
        constants_mode=constants_mode, order=stream.meta.order,
        mode=TURNSTILE if deltas is not None else stream.meta.mode,
    )
    wall = time.perf_counter() - start
    f = apply_stream_arrays(items, deltas, spec.n)
    oracle = exact_fp(f, p)
    rel = (estimate - oracle) / oracle if oracle > 0 else (0.0 if estimate == 0 else math.inf)
    return TrialResult(trial_id, seed, estimate, oracle, rel,
                       abs(rel) <= eps, wall, space)


def bench(spec: GeneratorSpec, algorithm: str, p: float, eps: float, trials: int,
          master_seed: int = 0, constants_mode: str = "practical",
          deletion_fraction: float = 0.0, workers: int = 1) -> list[TrialResult]:
    """Run seeded trials; results are returned in trial-id order."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    jobs = [(i, master_seed, spec, algorithm, p, eps, constants_mode,
             deletion_fraction) for i in range(trials)]
    if workers > 1:
        with mp.get_context("fork").Pool(workers) as pool:
            results = pool.map(_one_trial, jobs)
    else:
        results = [_one_trial(job) for job in jobs]
    return sorted(results, key=lambda r: r.trial_id)


def summarize(results: list[TrialResult], algorithm: str, spec: GeneratorSpec,
              p: float, eps: float) -> dict:
    rels = sorted(abs(r.rel_err) for r in results)
    bits = max((r.space.bits_estimate for r in results if r.space), default=0)
    k = len(rels)
    return {
        "algorithm": algorithm,
        "n": spec.n,
        "m": spec.m,
        "p": p,
        "eps": eps,
        "trials": k,
        "success_rate": sum(r.success for r in results) / k,
        "median_rel_err": rels[k // 2] if k % 2 == 1 else 0.5 * (rels[k // 2 - 1] + rels[k // 2]),
        "p95_rel_err": rels[min(k - 1, math.ceil(0.95 * k) - 1)],
        "bits_estimate": bits,
    }


def fit_space_slope(n_values: list[int], counters: list[int]) -> dict:
    """Least-squares slope of log2(counters) against log2(n), with a band.

    The band is the standard error of the fitted slope; the acceptance check
    compares the point estimate against the theoretical exponent.
    """
    if len(n_values) < 4:
        raise ValueError("need at least 4 distinct universe sizes for a slope fit")
    x = np.log2(np.asarray(n_values, dtype=np.float64))
    y = np.log2(np.asarray(counters, dtype=np.float64))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(len(x) - 2, 1)
    se = math.sqrt(float(resid @ resid) / dof / float(((x - x.mean()) ** 2).sum()))
    return {"slope": float(slope), "intercept": float(intercept), "stderr": se}


def sweep(n_values: list[int], p: float, eps: float, algorithm: str = "ro1pass",
          master_seed: int = 0, constants_mode: str = "practical",
          updates_per_item: int = 8, trials: int = 1) -> dict:
    """Space-scaling sweep: allocated counters vs universe size.

    Each (n, trial) gets its own seed and a short uniform stream (enough to
    seed every level's structures); counters come from the estimator's space
    report.  Allocation is seed-independent by construction, so extra trials
    only confirm that.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rows = []
    for idx, n in enumerate(sorted(set(n_values))):
        counters = []
        for trial in range(trials):
            seed = trial_seed(master_seed, idx * 1000 + trial)
            spec = GeneratorSpec(kind="uniform", n=n, m=updates_per_item * n, seed=seed)
            stream = gen(spec)
            if algorithm == "ro1pass":
                est = RandomOrderFpEstimator(n=n, p=p, eps=eps, seed=seed,
                                             constants_mode=constants_mode,
                                             expected_m=stream.meta.m)
            else:
                est = TwoPassFpEstimator(n=n, p=p, eps=eps, seed=seed,
                                         constants_mode=constants_mode,
                                         expected_m=stream.meta.m)
            est.fit(stream.items)
            counters.append(est.space_report_.counters_allocated)
        report = est.space_report_
        rows.append({
            "n": n,
            "counters": max(counters),
            "bits": 64 * max(counters),
            "by_level": report.by_level,
        })
    fit = fit_space_slope([r["n"] for r in rows], [r["counters"] for r in rows])
    fit["target"] = 1.0 - 2.0 / p
    fit["rows"] = rows
    return fit
