"""MSE, MAE and coefficient of determination."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class EvalSummary:
    mse: float
    mae: float
    r_squared: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)

    def __str__(self) -> str:
        return f"MSE {self.mse:.5f}  MAE {self.mae:.5f}  R2 {100 * self.r_squared:.2f}%  (n={self.n})"


def evaluate(preds, targets) -> EvalSummary:
    preds = np.asarray(preds, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if preds.shape != targets.shape:
        raise ValueError(f"{preds.size} predictions for {targets.size} targets")
    if preds.size < 2:
        raise ValueError("need at least two samples")
    err = preds - targets
    centred = targets - targets.mean()
    ss_tot = float(np.dot(centred, centred))
    if ss_tot == 0.0:
        raise ValueError("targets have zero variance; R^2 is undefined")
    ss_res = float(np.dot(err, err))
    return EvalSummary(
        mse=ss_res / preds.size,
        mae=float(np.mean(np.abs(err))),
        r_squared=1.0 - ss_res / ss_tot,
        n=int(preds.size),
    )


def r_squared(preds, targets) -> float:
    return evaluate(preds, targets).r_squared
