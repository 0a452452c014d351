"""Step-up / step-down thresholding and the leave-one-out variants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .procedures import CriticalValues, Direction

__all__ = [
    "RejectionResult",
    "step_up",
    "step_down",
    "step",
    "step_up_shifted",
    "leave_one_out",
    "rejection_counts",
]

Variant = Literal["SU'-i", "SD-i", "SD'-i"]


@dataclass(frozen=True, eq=False)
class RejectionResult:
    rejected: np.ndarray  # sorted indices into the p-value vector
    count: int
    threshold: float
    direction: Direction


def _taus(cv) -> np.ndarray:
    return np.asarray(cv.taus if isinstance(cv, CriticalValues) else cv, dtype=float)


def _validate(pvalues, taus):
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1:
        raise ValueError("p-values must be a 1-d sequence")
    if p.size != taus.size:
        raise ValueError(f"{p.size} p-values but {taus.size} critical values")
    if np.any(np.isnan(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    return p


def rejection_counts(sorted_p: np.ndarray, taus: np.ndarray, direction: Direction) -> np.ndarray:
    """Rejection counts for a batch of row-sorted p-value vectors, shape (..., m)."""
    below = sorted_p <= taus
    m = taus.shape[-1]
    if m == 0:
        return np.zeros(sorted_p.shape[:-1], dtype=np.intp)
    if direction == "step-up":
        last = m - np.argmax(below[..., ::-1], axis=-1)
        return np.where(below.any(axis=-1), last, 0)
    if direction == "step-down":
        first_fail = np.argmin(below, axis=-1)
        return np.where(below.all(axis=-1), m, first_fail)
    raise ValueError(f"unknown direction {direction!r}")


def _apply(p: np.ndarray, taus: np.ndarray, direction: Direction) -> RejectionResult:
    count = int(rejection_counts(np.sort(p, kind="stable"), taus, direction)) if p.size else 0
    if count == 0:
        return RejectionResult(np.empty(0, dtype=np.intp), 0, 0.0, direction)
    thr = float(taus[count - 1])
    return RejectionResult(np.flatnonzero(p <= thr), count, thr, direction)


def step_up(pvalues, cv) -> RejectionResult:
    """Reject ``p_i <= tau_khat`` with ``khat = max{k : p_(k) <= tau_k}``."""
    taus = _taus(cv)
    return _apply(_validate(pvalues, taus), taus, "step-up")


def step_down(pvalues, cv) -> RejectionResult:
    """Reject ``p_i <= tau_ktilde`` with ``ktilde`` the length of the leading run ``p_(k) <= tau_k``."""
    taus = _taus(cv)
    return _apply(_validate(pvalues, taus), taus, "step-down")


def step(pvalues, cv: CriticalValues) -> RejectionResult:
    """Apply ``cv`` in its own direction."""
    return step_up(pvalues, cv) if cv.direction == "step-up" else step_down(pvalues, cv)


def step_up_shifted(pvalues, cv) -> RejectionResult:
    """Step-up with ``(tau_2, ..., tau_m, tau_m)``."""
    taus = _taus(cv)
    shifted = np.append(taus[1:], taus[-1])
    return _apply(_validate(pvalues, taus), shifted, "step-up")


def leave_one_out(pvalues, cv, i: int, variant: Variant) -> RejectionResult:
    """Run a reduced procedure on the ``m - 1`` p-values other than ``p_i``.

    ``"SU'-i"`` and ``"SD'-i"`` use ``(tau_2, ..., tau_m)``; ``"SD-i"`` uses
    ``(tau_1, ..., tau_{m-1})``.  Rejected indices refer to the full vector.
    """
    taus = _taus(cv)
    p = _validate(pvalues, taus)
    if not 0 <= i < p.size:
        raise IndexError(f"index {i} out of range for m={p.size}")
    keep = np.delete(np.arange(p.size), i)
    if variant == "SU'-i":
        sub, direction = taus[1:], "step-up"
    elif variant == "SD'-i":
        sub, direction = taus[1:], "step-down"
    elif variant == "SD-i":
        sub, direction = taus[:-1], "step-down"
    else:
        raise ValueError(f"unknown leave-one-out variant {variant!r}")
    res = _apply(p[keep], sub, direction)
    return RejectionResult(keep[res.rejected], res.count, res.threshold, direction)
