"""Sublinear-space F_p moment estimation (p > 2) for data streams.

Exact oracle, linear sketches, random-order heavy-hitter tracking, the
one-pass and two-pass moment estimators, seeded workload generators, and a
benchmark harness with a CLI (``fpstream generate|estimate|bench|sweep``).
"""

from .core import (
    CapacityError,
    ConsistencyError,
    EstimatorConfig,
    FrequencyVector,
    ModeError,
    NotFinalizedError,
    PhaseError,
    PracticalScaling,
    StreamMeta,
    Update,
    apply_stream,
    apply_stream_arrays,
    exact_f2_l2,
    exact_fp,
)
from .estimators import RandomOrderFpEstimator, SpaceReport, TwoPassFpEstimator
from .hashing import PairwiseHash, SubsampleHierarchy, sample_rate
from .heavy_hitters import FixedWindowHeavyHitters, RandomOrderHeavyHitters
from .levelsets import LevelConfig, contribution_estimate, ell_of, epsilon_i, n_i
from .sketches import AmsF2Sketch, BucketedF2Sketch, CountSketchTable
from .streamgen import GeneratorSpec, add_deletions, gen, shuffle_random_order

__version__ = "0.1.0"

__all__ = [
    "AmsF2Sketch",
    "BucketedF2Sketch",
    "CapacityError",
    "ConsistencyError",
    "CountSketchTable",
    "EstimatorConfig",
    "FixedWindowHeavyHitters",
    "FrequencyVector",
    "GeneratorSpec",
    "LevelConfig",
    "ModeError",
    "NotFinalizedError",
    "PairwiseHash",
    "PhaseError",
    "PracticalScaling",
    "RandomOrderFpEstimator",
    "RandomOrderHeavyHitters",
    "SpaceReport",
    "StreamMeta",
    "SubsampleHierarchy",
    "TwoPassFpEstimator",
    "Update",
    "apply_stream",
    "apply_stream_arrays",
    "add_deletions",
    "contribution_estimate",
    "ell_of",
    "epsilon_i",
    "exact_f2_l2",
    "exact_fp",
    "gen",
    "n_i",
    "sample_rate",
    "shuffle_random_order",
]
