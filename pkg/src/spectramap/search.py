"""Seeded random hyper-parameter search scored by k-fold CV MSE.

The search space maps parameter names to one of
    {"choice": [v1, v2, ...]}
    {"uniform": [lo, hi]}
    {"log_uniform": [lo, hi]}      lo > 0
    {"int": [lo, hi]}              inclusive bounds
Draws are sampled with a seeded generator in sorted key order, so a
given (space, draws, seed) triple always produces the same candidates
and the same winner.  Failed fits score inf; ties go to the first draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np

from .dataset import kfold_indices
from .errors import NumericError


@dataclass(frozen=True)
class SearchSpec:
    space: Dict[str, dict] = field(default_factory=dict)
    draws: int = 20
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.space:
            raise ValueError("empty search space")
        for name, rule in self.space.items():
            if not isinstance(rule, dict) or len(rule) != 1:
                raise ValueError(f"parameter {name!r} needs exactly one rule")
            kind, arg = next(iter(rule.items()))
            if kind == "choice":
                if not isinstance(arg, (list, tuple)) or not arg:
                    raise ValueError(f"{name!r}: choice needs a nonempty list")
            elif kind in ("uniform", "log_uniform", "int"):
                lo, hi = arg
                if not lo < hi:
                    raise ValueError(f"{name!r}: need lo < hi")
                if kind == "log_uniform" and lo <= 0:
                    raise ValueError(f"{name!r}: log_uniform needs lo > 0")
            else:
                raise ValueError(f"{name!r}: unknown rule {kind!r}")
        if self.draws < 1 or self.folds < 2:
            raise ValueError("need draws >= 1 and folds >= 2")


def _sample(space: Dict[str, dict], rng) -> dict:
    params = {}
    for name in sorted(space):
        kind, arg = next(iter(space[name].items()))
        if kind == "choice":
            params[name] = arg[int(rng.integers(len(arg)))]
        elif kind == "uniform":
            params[name] = float(rng.uniform(arg[0], arg[1]))
        elif kind == "log_uniform":
            params[name] = float(np.exp(rng.uniform(np.log(arg[0]), np.log(arg[1]))))
        else:
            params[name] = int(rng.integers(arg[0], arg[1] + 1))
    return params


def random_search(fit_predict: Callable, search: SearchSpec,
                  X: np.ndarray, y: np.ndarray) -> Tuple[dict, List[dict]]:
    """Run the search; fit_predict(params, X_tr, y_tr, X_val) must return
    predictions for X_val.  Returns (best_params, score_table)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(search.seed)
    splits = kfold_indices(X.shape[0], search.folds, search.seed)
    table: List[dict] = []
    best_params, best_mse = None, np.inf
    for draw in range(search.draws):
        params = _sample(search.space, rng)
        total, count = 0.0, 0
        failed = False
        for tr, val in splits:
            try:
                pred = np.asarray(fit_predict(params, X[tr], y[tr], X[val]))
            except (NumericError, ValueError, FloatingPointError):
                failed = True
                break
            if not np.all(np.isfinite(pred)):
                failed = True
                break
            total += float(np.sum((pred - y[val]) ** 2))
            count += pred.size
        mse = np.inf if failed else total / count
        table.append({"draw": draw, "params": params, "cv_mse": float(mse)})
        if mse < best_mse:
            best_params, best_mse = params, mse
    if best_params is None:
        raise NumericError("all search draws diverged")
    return best_params, table
