"""FDR bounds for arbitrary critical values, exact FDR by enumeration, and Monte Carlo FDR.

The bounds hold for independent p-values whatever the null c.d.f.s are
(super-uniformity is not needed).  ``exact_fdr`` enumerates every joint
outcome of a small discrete instance and is the oracle the bounds and the
procedures are checked against.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from .cdf_model import StepCDF, TestFamily, avg_cdf_sd, avg_cdf_su, ratio, topk_sums
from .procedures import CriticalValues, Direction
from .stepwise import rejection_counts

__all__ = [
    "GroundTruth",
    "FdrEstimate",
    "SimplifiedBounds",
    "BudgetExceeded",
    "bound_su",
    "bound_sd",
    "bound_components",
    "simplified_bounds_su",
    "simplified_bounds_sd",
    "exact_fdr",
    "monte_carlo_fdr",
    "false_discovery_proportion",
]

DEFAULT_BUDGET = 10**7


class BudgetExceeded(RuntimeError):
    """The joint outcome space is larger than the enumeration budget."""


@dataclass(frozen=True)
class GroundTruth:
    """Which hypotheses are true nulls, and how the false ones are sampled.

    Attributes:
        true_nulls: 0-based indices of the true null hypotheses.
        alternatives: for every other index, point masses aligned with that
            test's null support.  True nulls are drawn from their null c.d.f.
    """

    true_nulls: frozenset
    alternatives: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "true_nulls", frozenset(int(i) for i in self.true_nulls))
        alts = {}
        for i, masses in self.alternatives.items():
            masses = np.asarray(masses, dtype=float)
            if np.any(masses < 0) or abs(math.fsum(masses) - 1.0) > 1e-12:
                raise ValueError(f"alternative masses of test {i} must be nonnegative and sum to 1")
            alts[int(i)] = masses
        object.__setattr__(self, "alternatives", alts)

    @classmethod
    def all_null(cls, m: int) -> "GroundTruth":
        return cls(frozenset(range(m)))

    def sampling_law(self, family: TestFamily) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per test, the positive-mass p-values and their probabilities."""
        law = []
        for i, f in enumerate(family.members):
            if not isinstance(f, StepCDF):
                raise ValueError(f"test {i} is not discrete; exact/Monte Carlo FDR needs step c.d.f.s")
            if i in self.true_nulls:
                masses = f.masses
            elif i in self.alternatives:
                masses = self.alternatives[i]
                if masses.shape != f.support.shape:
                    raise ValueError(f"alternative masses of test {i} do not match its support")
            else:
                raise ValueError(f"test {i} is neither a true null nor has an alternative distribution")
            keep = masses > 0
            law.append((f.support[keep], masses[keep]))
        bad = [i for i in self.true_nulls if not 0 <= i < family.m]
        if bad:
            raise ValueError(f"true null indices out of range: {bad}")
        return law


@dataclass(frozen=True)
class FdrEstimate:
    value: float
    mode: Literal["exact-enumeration", "monte-carlo"]
    standard_error: float | None = None
    trials: int | None = None
    variance: float | None = None  # of the false discovery proportion (exact mode)


@dataclass(frozen=True)
class SimplifiedBounds:
    """Closed-form bounds valid under super-uniformity, plus the non-adaptive family bound."""

    linear: float | None
    adaptive: float
    averaged: float | None


def _taus_of(cv) -> np.ndarray:
    return np.asarray(cv.taus if isinstance(cv, CriticalValues) else cv, dtype=float)


def _check_len(family: TestFamily, taus: np.ndarray):
    if taus.size != family.m:
        raise ValueError(f"{taus.size} critical values for a family of {family.m} tests")


def bound_components(family: TestFamily, cv, direction: Direction) -> tuple[float, float]:
    """The two terms whose minimum bounds the FDR of ``SU(tau)`` / ``SD(tau)``.

    The second term maximises over index sets of size ``m - k + 1``; that
    maximum is the sum of the ``m - k + 1`` largest ratios.
    """
    taus = _taus_of(cv)
    _check_len(family, taus)
    m = family.m
    k = np.arange(1, m + 1)
    vals = family.values(taus)  # (i, k) -> F_i(tau_k)
    first = math.fsum((vals / k[None, :]).max(axis=1))
    if direction == "step-up":
        r = ratio(vals, family.values([taus[-1]]))
    elif direction == "step-down":
        r = ratio(vals, vals)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    sums = topk_sums(r)
    second = float(np.max(sums[m - k, k - 1] / k))
    return first, second


def bound_su(family: TestFamily, cv) -> float:
    return min(bound_components(family, cv, "step-up"))


def bound_sd(family: TestFamily, cv) -> float:
    return min(bound_components(family, cv, "step-down"))


def simplified_bounds_su(cv, family: TestFamily | None = None) -> SimplifiedBounds:
    """``m max tau_k/k``, ``max (m-k+1)/(1-tau_m) tau_k/k`` and, given a family, ``max m Fsu(tau_k)/k``."""
    taus = _taus_of(cv)
    m = taus.size
    k = np.arange(1, m + 1)
    linear = float(m * np.max(taus / k))
    adaptive = float(np.max(ratio((m - k + 1) * taus / k, np.full(m, taus[-1]))))
    averaged = None
    if family is not None:
        _check_len(family, taus)
        averaged = float(np.max(m * avg_cdf_su(family, taus, taus[-1]) / k))
    return SimplifiedBounds(linear, adaptive, averaged)


def simplified_bounds_sd(cv, family: TestFamily | None = None) -> SimplifiedBounds:
    """``max (m-k+1)/(1-tau_k) tau_k/k`` and, given a family, ``max m Fsd(tau_k)/k``."""
    taus = _taus_of(cv)
    m = taus.size
    k = np.arange(1, m + 1)
    adaptive = float(np.max(ratio((m - k + 1) * taus / k, taus)))
    averaged = None
    if family is not None:
        _check_len(family, taus)
        averaged = float(np.max(m * avg_cdf_sd(family, taus) / k))
    return SimplifiedBounds(None, adaptive, averaged)


def false_discovery_proportion(pvals: np.ndarray, taus: np.ndarray, direction: Direction, null_mask: np.ndarray) -> np.ndarray:
    """FDP of ``SU(tau)``/``SD(tau)`` for each row of a (trials, m) p-value batch."""
    counts = rejection_counts(np.sort(pvals, axis=1), taus, direction)
    thr = np.where(counts > 0, taus[np.maximum(counts, 1) - 1], -1.0)
    rejected = pvals <= thr[:, None]
    false = rejected[:, null_mask].sum(axis=1)
    return false / np.maximum(counts, 1)


def _resolve_direction(cv, direction):
    if direction is None:
        if not isinstance(cv, CriticalValues):
            raise ValueError("direction is required for a bare critical-value sequence")
        return cv.direction
    return direction


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def exact_fdr(
    truth: GroundTruth,
    family: TestFamily,
    cv,
    direction: Direction | None = None,
    budget: int = DEFAULT_BUDGET,
    workers: int = 1,
    chunk: int = 1 << 16,
) -> FdrEstimate:
    """Exact FDR by enumerating every joint p-value outcome.

    Outcomes are visited in lexicographic order over the supports, in fixed
    chunks whose partial sums are combined with ``math.fsum``, so the result
    does not depend on ``workers``.
    """
    direction = _resolve_direction(cv, direction)
    taus = _taus_of(cv)
    _check_len(family, taus)
    law = truth.sampling_law(family)
    sizes = [pts.size for pts, _ in law]
    total = math.prod(sizes)
    if total > budget:
        raise BudgetExceeded(f"{total} joint outcomes exceed the enumeration budget of {budget}")
    null_mask = np.isin(np.arange(family.m), list(truth.true_nulls))
    radix = np.cumprod([1] + sizes[:0:-1])[::-1]  # last test varies fastest

    def run(start):
        idx = np.arange(start, min(start + chunk, total))
        pv = np.empty((idx.size, family.m))
        prob = np.ones(idx.size)
        for i, (pts, mass) in enumerate(law):
            digit = (idx // radix[i]) % sizes[i]
            pv[:, i] = pts[digit]
            prob *= mass[digit]
        fdp = false_discovery_proportion(pv, taus, direction, null_mask)
        return float(np.sum(prob * fdp)), float(np.sum(prob * fdp * fdp))

    parts = _map(run, range(0, total, chunk), workers)
    mean = math.fsum(p[0] for p in parts)
    second = math.fsum(p[1] for p in parts)
    return FdrEstimate(
        value=min(max(mean, 0.0), 1.0),
        mode="exact-enumeration",
        variance=max(second - mean * mean, 0.0),
    )


def monte_carlo_fdr(
    truth: GroundTruth,
    family: TestFamily,
    cv,
    direction: Direction | None = None,
    trials: int = 10_000,
    seed: int = 0,
    workers: int = 1,
    block: int = 8192,
) -> FdrEstimate:
    """Monte Carlo FDR from ``trials`` independent draws.

    Trials are cut into fixed blocks and block ``b`` draws from the stream
    seeded by ``(seed, b)``, so the estimate is identical for any ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    direction = _resolve_direction(cv, direction)
    taus = _taus_of(cv)
    _check_len(family, taus)
    law = truth.sampling_law(family)
    cums = [np.cumsum(mass) for _, mass in law]
    null_mask = np.isin(np.arange(family.m), list(truth.true_nulls))

    def run(b):
        n = min(block, trials - b * block)
        rng = np.random.default_rng([seed, b])
        u = rng.random((n, family.m))
        pv = np.empty((n, family.m))
        for i, (pts, _) in enumerate(law):
            digit = np.minimum(np.searchsorted(cums[i], u[:, i], side="right"), pts.size - 1)
            pv[:, i] = pts[digit]
        fdp = false_discovery_proportion(pv, taus, direction, null_mask)
        return math.fsum(fdp), math.fsum(fdp * fdp)

    parts = _map(run, range(-(-trials // block)), workers)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / trials
    if trials > 1:
        var = max(s2 - trials * mean * mean, 0.0) / (trials - 1)
        se = math.sqrt(var / trials)
    else:
        se = float("nan")
    return FdrEstimate(value=mean, mode="monte-carlo", standard_error=se, trials=trials)
