"""Coefficient of determination, per axis and averaged."""

from __future__ import annotations

import numpy as np

from .errors import DomainError


def r2_score(y, y_hat) -> float:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise DomainError(f"length mismatch: {y.shape[0]} targets vs {y_hat.shape[0]} predictions")
    if len(y) < 2:
        raise DomainError("r2_score needs at least two observations")
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise DomainError("r2_score is undefined for constant targets")
    return float(1.0 - np.sum((y - y_hat) ** 2) / ss_tot)


def r2_xy(targets, predictions) -> tuple[float, float, float]:
    """(R2 of x velocity, R2 of y velocity, their mean). Not clamped."""
    targets = np.asarray(targets)
    predictions = np.asarray(predictions)
    rx = r2_score(targets[:, 0], predictions[:, 0])
    ry = r2_score(targets[:, 1], predictions[:, 1])
    return rx, ry, (rx + ry) / 2
