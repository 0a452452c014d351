"""Critical-value sequences for step-wise FDR procedures.

Closed forms: ``BH``, ``BR-<lambda>``, ``GBS``.  Procedures that use the
null c.d.f.s (``Heyse``, ``DBH-SU``, ``DBH-SD``, ``A-DBH-SU``, ``A-DBH-SD``,
``RBH``, ``DBR-<lambda>``) invert a monotone functional of the family: over
the merged support for discrete families, by bisection on [0, cap] for
families containing continuous members.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np

from .cdf_model import (
    TestFamily,
    avg_cdf,
    avg_cdf_sd,
    avg_cdf_su,
    check_super_uniformity,
    ratio,
    topk_sums,
)

__all__ = [
    "CriticalValues",
    "RbhSolution",
    "invert_on_support",
    "invert_on_interval",
    "effective_values",
    "bh_critical_values",
    "br_critical_values",
    "gbs_critical_values",
    "heyse_critical_values",
    "dbh_su_critical_values",
    "dbh_sd_critical_values",
    "adbh_su_critical_values",
    "adbh_sd_critical_values",
    "rbh_critical_values",
    "rbh_psi",
    "dbr_critical_values",
    "critical_values",
    "procedure_direction",
    "PROCEDURES",
]

Direction = Literal["step-up", "step-down"]


@dataclass(frozen=True, eq=False)
class CriticalValues:
    taus: np.ndarray
    procedure: str
    direction: Direction
    alpha: float

    def __post_init__(self):
        taus = np.array(self.taus, dtype=float)
        if taus.ndim != 1 or taus.size == 0:
            raise ValueError("critical values must be a nonempty 1-d sequence")
        if np.any(taus < 0) or np.any(taus > 1):
            raise ValueError("critical values must lie in [0, 1]")
        if np.any(np.diff(taus) < 0):
            raise AssertionError(f"{self.procedure}: critical values are not nondecreasing")
        if self.direction not in ("step-up", "step-down"):
            raise ValueError(f"unknown direction {self.direction!r}")
        taus.setflags(write=False)
        object.__setattr__(self, "taus", taus)

    @property
    def m(self) -> int:
        return self.taus.size

    def __len__(self):
        return self.taus.size


@dataclass(frozen=True)
class RbhSolution:
    lambda_alpha: float
    psi_at_lambda: float
    taus: CriticalValues


def _check_alpha(alpha):
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")


def _check_lambda(lam):
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")


def _check_m(m):
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")


# --- inversion ---------------------------------------------------------------


def invert_on_support(points: Sequence[float], cap: float, g: Callable[[float], float], bound: float) -> float:
    """Largest ``t`` in sorted ``points`` with ``t <= cap`` and ``g(t) <= bound``.

    ``g`` must be nondecreasing on ``points``; returns 0 when no point
    qualifies.
    """
    points = np.asarray(points, dtype=float)
    hi = int(np.searchsorted(points, cap, side="right")) - 1
    if hi < 0:
        return 0.0
    if g(points[hi]) <= bound:
        return float(points[hi])
    lo = -1  # invariant: g(points[lo]) <= bound (virtual at -1), g(points[hi]) > bound
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if g(points[mid]) <= bound:
            lo = mid
        else:
            hi = mid
    return float(points[lo]) if lo >= 0 else 0.0


def invert_on_interval(cap: float, g: Callable[[float], float], bound: float, tol: float = 1e-12) -> float:
    """``sup{t in [0, cap] : g(t) <= bound}`` for nondecreasing continuous ``g``.

    Bisection runs until the bracket is narrower than ``tol`` *and* then on
    to adjacent doubles, so that exact solutions come back exactly.
    """
    if g(cap) <= bound:
        return float(cap)
    if g(0.0) > bound:
        return 0.0
    lo, hi = 0.0, float(cap)
    for _ in range(1100):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) <= bound:
            lo = mid
        else:
            hi = mid
    assert hi - lo <= tol
    return lo


def effective_values(taus, points) -> np.ndarray:
    """Largest support point not exceeding each critical value."""
    points = np.asarray(points, dtype=float)
    idx = np.searchsorted(points, np.asarray(taus, dtype=float), side="right") - 1
    return np.where(idx >= 0, points[np.maximum(idx, 0)], 0.0)


def _last_feasible(points: np.ndarray, feasible: np.ndarray) -> np.ndarray:
    """For each row of the boolean matrix, the last point flagged feasible (0 if none)."""
    n = feasible.shape[1]
    last = n - 1 - np.argmax(feasible[:, ::-1], axis=1)
    return np.where(feasible.any(axis=1), points[last], 0.0)


# --- closed forms ------------------------------------------------------------


def bh_critical_values(m: int, alpha: float) -> CriticalValues:
    _check_m(m)
    _check_alpha(alpha)
    k = np.arange(1, m + 1)
    return CriticalValues(alpha * k / m, "BH", "step-up", alpha)


def br_critical_values(m: int, alpha: float, lam: float) -> CriticalValues:
    _check_m(m)
    _check_alpha(alpha)
    _check_lambda(lam)
    k = np.arange(1, m + 1)
    taus = np.minimum((1.0 - lam) * alpha * k / (m - k + 1), lam)
    return CriticalValues(taus, f"BR-{lam:g}", "step-up", alpha)


def gbs_critical_values(m: int, alpha: float) -> CriticalValues:
    _check_m(m)
    _check_alpha(alpha)
    k = np.arange(1, m + 1)
    return CriticalValues(alpha * k / (m - (1.0 - alpha) * k + 1), "GBS", "step-down", alpha)


def sd_comparator_critical_values(m: int, alpha: float) -> CriticalValues:
    """Step-down sequence ``(alpha k/m) / (1 + alpha k/m)`` that DBH-SD dominates."""
    _check_m(m)
    _check_alpha(alpha)
    b = alpha * np.arange(1, m + 1) / m
    return CriticalValues(b / (1.0 + b), "SD-comparator", "step-down", alpha)


# --- family-based procedures -------------------------------------------------


def _bounds(alpha, m):
    return alpha * np.arange(1, m + 1) / m


def heyse_critical_values(family: TestFamily, alpha: float) -> CriticalValues:
    _check_alpha(alpha)
    m = family.m
    bounds = _bounds(alpha, m)
    if family.is_discrete:
        pts = family.merged_support
        fbar = avg_cdf(family, pts)
        taus = _last_feasible(pts, fbar[None, :] <= bounds[:, None])
    else:
        taus = [invert_on_interval(1.0, lambda t: avg_cdf(family, t), b) for b in bounds]
    return CriticalValues(taus, "Heyse", "step-up", alpha)


def _sd_ratios(family: TestFamily) -> np.ndarray:
    mat = family.support_matrix()
    return ratio(mat, mat)


def dbh_sd_critical_values(family: TestFamily, alpha: float) -> CriticalValues:
    _check_alpha(alpha)
    m = family.m
    bounds = _bounds(alpha, m)
    if family.is_discrete:
        pts = family.merged_support
        fsd = avg_cdf_sd(family, pts)
        taus = _last_feasible(pts, fsd[None, :] <= bounds[:, None])
    else:
        taus = [invert_on_interval(1.0, lambda t: avg_cdf_sd(family, t), b) for b in bounds]
    return CriticalValues(taus, "DBH-SD", "step-down", alpha)


def _last_tau(family: TestFamily, alpha: float) -> float:
    """Largest point with ``(1/m) sum_i F_i(t)/(1 - F_i(t)) <= alpha``."""
    if family.is_discrete:
        pts = family.merged_support
        fsd = avg_cdf_sd(family, pts)
        return float(_last_feasible(pts, (fsd <= alpha)[None, :])[0])
    return invert_on_interval(1.0, lambda t: avg_cdf_sd(family, t), alpha)


def dbh_su_critical_values(family: TestFamily, alpha: float) -> CriticalValues:
    _check_alpha(alpha)
    m = family.m
    tau_m = _last_tau(family, alpha)
    bounds = _bounds(alpha, m)[:-1]
    if family.is_discrete:
        pts = family.merged_support
        fsu = avg_cdf_su(family, pts, tau_m)
        ok = (fsu[None, :] <= bounds[:, None]) & (pts <= tau_m)[None, :]
        head = _last_feasible(pts, ok)
    else:
        head = [invert_on_interval(tau_m, lambda t: avg_cdf_su(family, t, tau_m), b) for b in bounds]
    return CriticalValues(np.append(head, tau_m), "DBH-SU", "step-up", alpha)


def adbh_su_critical_values(family: TestFamily, alpha: float) -> CriticalValues:
    _check_alpha(alpha)
    m = family.m
    tau_m = _last_tau(family, alpha)
    k = np.arange(1, m)
    if family.is_discrete:
        pts = family.merged_support
        mat = family.support_matrix()
        den = family.values([tau_m])
        sums = topk_sums(ratio(mat, den))  # row j-1: top-j sum
        rows = sums[m - k]  # top-(m-k+1) for k = 1..m-1
        ok = (rows <= alpha * k[:, None]) & (pts <= tau_m)[None, :]
        head = _last_feasible(pts, ok)
    else:
        den = family.values([tau_m])

        def g_for(count):
            return lambda t: float(topk_sums(ratio(family.values([t]), den))[count - 1, 0])

        head = [invert_on_interval(tau_m, g_for(m - kk + 1), alpha * kk) for kk in k]
    return CriticalValues(np.append(head, tau_m), "A-DBH-SU", "step-up", alpha)


def adbh_sd_critical_values(family: TestFamily, alpha: float) -> CriticalValues:
    _check_alpha(alpha)
    m = family.m
    k = np.arange(1, m + 1)
    if family.is_discrete:
        pts = family.merged_support
        sums = topk_sums(_sd_ratios(family))
        rows = sums[m - k]
        taus = _last_feasible(pts, rows <= alpha * k[:, None])
    else:

        def g_for(count):
            def g(t):
                vals = family.values([t])
                return float(topk_sums(ratio(vals, vals))[count - 1, 0])

            return g

        taus = [invert_on_interval(1.0, g_for(m - kk + 1), alpha * kk) for kk in k]
    return CriticalValues(taus, "A-DBH-SD", "step-down", alpha)


def dbr_critical_values(family: TestFamily, alpha: float, lam: float = 0.5) -> CriticalValues:
    """Discrete BR-lambda.

    The sequence is capped at its last value so it is nondecreasing; the cap
    never binds below the corresponding BR-lambda values.
    """
    _check_alpha(alpha)
    _check_lambda(lam)
    m = family.m
    last_cap = min((1.0 - lam) * m * alpha, lam)
    k = np.arange(1, m)
    if family.is_discrete:
        pts = family.merged_support
        tau_m = float(pts[np.searchsorted(pts, last_cap, side="right") - 1])
        sums = topk_sums(family.support_matrix())
        rows = sums[m - k]
        ok = (rows <= alpha * k[:, None] * (1.0 - lam)) & (pts <= lam)[None, :]
        head = _last_feasible(pts, ok)
    else:
        tau_m = last_cap

        def g_for(count):
            return lambda t: float(topk_sums(family.values([t]))[count - 1, 0])

        head = [invert_on_interval(lam, g_for(m - kk + 1), alpha * kk * (1.0 - lam)) for kk in k]
    taus = np.minimum(np.append(head, tau_m), tau_m)
    return CriticalValues(taus, f"DBR-{lam:g}", "step-up", alpha)


# --- rescaled BH ---------------------------------------------------------------


def rbh_psi(family: TestFamily, lams) -> np.ndarray:
    """``min(lam, max_k (1/k) sum_i F_i(lam k/m) / (1 - F_i(lam)))`` for each ``lam``."""
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    m = family.m
    k = np.arange(1, m + 1)
    grid = np.clip(lams[:, None] * k[None, :] / m, 0.0, 1.0)  # (C, m)
    num = family.kind_values(grid.ravel()).reshape(-1, *grid.shape)  # (kinds, C, m)
    den = family.kind_values(lams)[:, :, None]  # (kinds, C, 1)
    r = ratio(num, den)
    with np.errstate(invalid="ignore"):
        sums = np.tensordot(family.kind_counts, r, axes=1)  # (C, m)
    return np.minimum(lams, (sums / k[None, :]).max(axis=1))


def rbh_critical_values(family: TestFamily, alpha: float, grid_steps: int = 10000) -> RbhSolution:
    """Rescaled BH: ``tau_k = lambda_alpha k / m`` with ``lambda_alpha = max{lam : psi(lam) <= alpha}``.

    ``psi`` only changes where ``lam k/m`` or ``lam`` crosses a support point,
    so for discrete families the candidates are those crossing points; a
    uniform grid of ``grid_steps`` points is added for continuous members.
    Requires every member to be super-uniform.
    """
    _check_alpha(alpha)
    report = check_super_uniformity(family)
    if not report.holds:
        raise ValueError(
            f"RBH requires super-uniform null c.d.f.s; F(t) - t = {report.excess:g} at t = {report.worst_point:g}"
        )
    m = family.m
    cands = [np.linspace(0.0, 1.0, grid_steps + 1), [alpha]]
    for f in family.distinct:
        sup = getattr(f, "support", None)
        if sup is not None:
            cands.append(sup)
            cands.append((sup[:, None] * m / np.arange(1, m + 1)[None, :]).ravel())
    cands = np.unique(np.concatenate(cands))
    cands = cands[(cands >= alpha) & (cands <= 1.0)][::-1]
    batch = max(1, 2_000_000 // max(1, len(family.distinct) * m))
    lam, psi = 0.0, 0.0
    for start in range(0, cands.size, batch):
        chunk = cands[start : start + batch]
        vals = rbh_psi(family, chunk)
        ok = np.flatnonzero(vals <= alpha)
        if ok.size:
            lam, psi = float(chunk[ok[0]]), float(vals[ok[0]])
            break
    taus = CriticalValues(lam * np.arange(1, m + 1) / m, "RBH", "step-up", alpha)
    return RbhSolution(lambda_alpha=lam, psi_at_lambda=psi, taus=taus)


# --- registry ------------------------------------------------------------------

PROCEDURES = ("BH", "BR-0.5", "GBS", "Heyse", "DBH-SU", "DBH-SD", "A-DBH-SU", "A-DBH-SD", "RBH", "DBR-0.5")

_DIRECTIONS = {
    "BH": "step-up",
    "BR": "step-up",
    "GBS": "step-down",
    "Heyse": "step-up",
    "DBH-SU": "step-up",
    "DBH-SD": "step-down",
    "A-DBH-SU": "step-up",
    "A-DBH-SD": "step-down",
    "RBH": "step-up",
    "DBR": "step-up",
}

_TAG = re.compile(r"^(BR|DBR)-(\d*\.?\d+)$")


def _parse_tag(tag: str) -> tuple[str, float | None]:
    hit = _TAG.match(tag)
    if hit:
        return hit.group(1), float(hit.group(2))
    if tag in ("BR", "DBR"):
        return tag, 0.5
    if tag in _DIRECTIONS:
        return tag, None
    raise ValueError(f"unknown procedure {tag!r}; known: {', '.join(PROCEDURES)} (BR/DBR accept -<lambda>)")


def procedure_direction(tag: str) -> Direction:
    return _DIRECTIONS[_parse_tag(tag)[0]]


def critical_values(tag: str, family: TestFamily, alpha: float) -> CriticalValues:
    """Critical values of the procedure named ``tag`` (e.g. ``"A-DBH-SU"``, ``"BR-0.5"``)."""
    name, lam = _parse_tag(tag)
    m = family.m
    if name == "BH":
        return bh_critical_values(m, alpha)
    if name == "BR":
        return br_critical_values(m, alpha, lam)
    if name == "GBS":
        return gbs_critical_values(m, alpha)
    if name == "DBR":
        return dbr_critical_values(family, alpha, lam)
    if name == "RBH":
        return rbh_critical_values(family, alpha).taus
    return {
        "Heyse": heyse_critical_values,
        "DBH-SU": dbh_su_critical_values,
        "DBH-SD": dbh_sd_critical_values,
        "A-DBH-SU": adbh_su_critical_values,
        "A-DBH-SD": adbh_sd_critical_values,
    }[name](family, alpha)
