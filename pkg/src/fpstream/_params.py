"""Parameter handling and input validation shared by the estimator classes.

The estimators follow the scikit-learn convention: constructor arguments are
stored verbatim under their own names, ``get_params``/``set_params`` expose
them for cloning and grid tooling, and anything learned from data lives in
attributes with a trailing underscore.
"""

from __future__ import annotations

import inspect

import numpy as np


class ParamsMixin:
    """get_params/set_params over the constructor signature, sklearn-style."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters are {sorted(valid)}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def check_universe_size(n) -> int:
    n = int(n)
    if n < 1:
        raise ValueError(f"universe size must be >= 1, got {n}")
    return n


def check_item(item, n: int) -> int:
    """Validate a 1-based item index against universe size ``n``."""
    item = int(item)
    if not 1 <= item <= n:
        raise IndexError(f"item {item} out of range [1, {n}]")
    return item


def check_moment_order(p) -> float:
    p = float(p)
    if not p > 2.0:
        raise ValueError(f"moment order p must be > 2, got {p}")
    return p


def check_accuracy(eps) -> float:
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"accuracy eps must lie in (0, 1), got {eps}")
    return eps


def as_item_array(items) -> np.ndarray:
    """Coerce a sequence of 1-based item indices to an int64 array."""
    arr = np.asarray(items, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d sequence of items, got shape {arr.shape}")
    return arr


def check_items_in_range(items: np.ndarray, n: int) -> np.ndarray:
    if items.size and (items.min() < 1 or items.max() > n):
        bad = items[(items < 1) | (items > n)][0]
        raise IndexError(f"item {int(bad)} out of range [1, {n}]")
    return items
