"""Prediction quality metrics for size regression.

percent_error_i = 100 * (pred_i - actual_i) / actual_i   (signed)
mape            = mean(|percent_error_i|)
rmse            = sqrt(mean((pred - actual)^2))
r2              = 1 - SS_res / SS_tot

When every actual value is identical SS_tot is zero; the convention
here is r2 = 1 for a perfect fit and -inf otherwise, which keeps
"r2 == 1 iff rmse == 0" true everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    r2: float
    rmse: float
    mape: float
    percent_errors: np.ndarray


def compute_metrics(predicted, actual) -> Metrics:
    pred = np.asarray(predicted, dtype=float).ravel()
    act = np.asarray(actual, dtype=float).ravel()
    if pred.shape != act.shape:
        raise ValueError("predicted and actual lengths differ")
    if pred.size == 0:
        raise ValueError("cannot score an empty prediction set")
    if np.any(act == 0):
        raise ValueError("actual values contain zero; percent error undefined")
    pe = 100.0 * (pred - act) / act
    mape = float(np.mean(np.abs(pe)))
    ss_res = float(np.sum((pred - act) ** 2))
    rmse = float(np.sqrt(ss_res / act.size))
    ss_tot = float(np.sum((act - act.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else float("-inf")
    else:
        r2 = 1.0 - ss_res / ss_tot
    pe.setflags(write=False)
    return Metrics(r2=r2, rmse=rmse, mape=mape, percent_errors=pe)


def metrics_to_dict(m: Metrics, sample_ids=None) -> dict:
    """JSON-ready form: {r2, rmse_nm, mape_pct, percent_errors:{id: pe}}."""
    if sample_ids is None:
        sample_ids = [str(i) for i in range(m.percent_errors.size)]
    return {
        "r2": m.r2,
        "rmse_nm": m.rmse,
        "mape_pct": m.mape,
        "percent_errors": {str(s): float(p) for s, p in zip(sample_ids, m.percent_errors)},
    }
