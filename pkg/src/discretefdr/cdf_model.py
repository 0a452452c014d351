"""Null distribution functions of p-values and their aggregate transforms.

A null c.d.f. is either a right-continuous step function on [0, 1]
(:class:`StepCDF`, the discrete case) or a monotone map given by a callable
(:class:`ContinuousCDF`).  A :class:`TestFamily` groups the ``m`` null
c.d.f.s of a multiple testing problem and provides the averaged transforms
used to build critical values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "StepCDF",
    "ContinuousCDF",
    "TestFamily",
    "SuperUniformityReport",
    "identity_cdf",
    "piecewise_linear_cdf",
    "three_group_cdf",
    "ratio",
    "eval_cdf",
    "avg_cdf",
    "avg_cdf_su",
    "avg_cdf_sd",
    "topk_ratio_sum",
    "merged_support",
    "check_super_uniformity",
]


def _check_points(t) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"evaluation point outside [0, 1]: {t!r}")
    return arr


def ratio(num, den) -> np.ndarray:
    """Elementwise ``num / (1 - den)`` with ``1/0 = inf`` and ``0/0 = 0``."""
    num = np.asarray(num, dtype=float)
    gap = 1.0 - np.asarray(den, dtype=float)
    num, gap = np.broadcast_arrays(num, gap)
    out = np.zeros(num.shape)
    pos = num > 0
    zero_gap = gap <= 0
    out[pos & zero_gap] = np.inf
    ok = pos & ~zero_gap
    out[ok] = num[ok] / gap[ok]
    return out


@dataclass(frozen=True, eq=False)
class StepCDF:
    """Right-continuous step c.d.f. with jumps on a finite support.

    Attributes:
        support: strictly increasing points, first 0 and last 1.
        values: c.d.f. values at the support points, first 0 and last 1.
    """

    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = np.array(self.support, dtype=float)
        values = np.array(self.values, dtype=float)
        if support.ndim != 1 or support.shape != values.shape:
            raise ValueError("support and values must be 1-d and of equal length")
        if support.size < 2 or support[0] != 0.0 or support[-1] != 1.0:
            raise ValueError("support must start at 0 and end at 1")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing")
        if values[0] != 0.0 or values[-1] != 1.0:
            raise ValueError("c.d.f. values must start at 0 and end at 1")
        if np.any(np.diff(values) < 0) or np.any(values < 0) or np.any(values > 1):
            raise ValueError("c.d.f. values must be nondecreasing in [0, 1]")
        support.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @property
    def masses(self) -> np.ndarray:
        """Point masses at each support point (sum to 1)."""
        return np.diff(self.values, prepend=0.0)

    def __call__(self, t):
        arr = _check_points(t)
        idx = np.searchsorted(self.support, arr, side="right") - 1
        out = self.values[idx]
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        return f"StepCDF(K={self.support.size - 1})"


@dataclass(frozen=True, eq=False)
class ContinuousCDF:
    """Monotone c.d.f. on [0, 1] given by a vectorised callable.

    ``knots`` is set for piecewise-linear c.d.f.s; super-uniformity is then
    checked exactly at the knots instead of on a grid.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    knots: tuple | None = field(default=None, repr=False)

    def __call__(self, t):
        arr = _check_points(t)
        out = np.asarray(self.evaluator(arr), dtype=float)
        return float(out) if out.ndim == 0 else out


def piecewise_linear_cdf(xs: Sequence[float], ys: Sequence[float], name: str = "piecewise-linear") -> ContinuousCDF:
    """Continuous c.d.f. interpolating ``(xs, ys)``; requires xs from 0 to 1 and ys from 0 to 1."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise ValueError("knots must be 1-d of equal length >= 2")
    if xs[0] != 0.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0):
        raise ValueError("knot locations must increase from 0 to 1")
    if ys[0] != 0.0 or ys[-1] != 1.0 or np.any(np.diff(ys) < 0):
        raise ValueError("knot values must be nondecreasing from 0 to 1")
    return ContinuousCDF(lambda t: np.interp(t, xs, ys), name=name, knots=(tuple(xs), tuple(ys)))


_IDENTITY = ContinuousCDF(lambda t: np.array(t, dtype=float), name="identity", knots=((0.0, 1.0), (0.0, 1.0)))


def identity_cdf() -> ContinuousCDF:
    """Uniform null c.d.f. ``F(t) = t`` (shared instance)."""
    return _IDENTITY


def three_group_cdf() -> ContinuousCDF:
    """The flat-middle c.d.f. ``2t`` on [0,1/4], ``1/2`` on [1/4,3/4], ``2t-1`` on [3/4,1].

    It is not super-uniform, which makes it a handy test case for the FDR
    bounds.
    """
    return piecewise_linear_cdf([0.0, 0.25, 0.75, 1.0], [0.0, 0.5, 0.5, 1.0], name="three-group")


CDF = Union[StepCDF, ContinuousCDF]


@dataclass(frozen=True)
class SuperUniformityReport:
    holds: bool
    worst_point: float
    excess: float


class TestFamily:
    """The ``m`` null c.d.f.s of one multiple testing problem.

    Members that are the same object are evaluated once; this keeps families
    built from a handful of distinct supports cheap.
    """

    __test__ = False  # not a pytest class

    def __init__(self, members: Sequence[CDF]):
        members = tuple(members)
        if not members:
            raise ValueError("a test family needs at least one member")
        for i, f in enumerate(members):
            if not isinstance(f, (StepCDF, ContinuousCDF)):
                raise TypeError(f"member {i} is not a StepCDF or ContinuousCDF")
        self.members = members
        kinds: dict[int, int] = {}
        distinct: list[CDF] = []
        index = np.empty(len(members), dtype=np.intp)
        for i, f in enumerate(members):
            j = kinds.setdefault(id(f), len(distinct))
            if j == len(distinct):
                distinct.append(f)
            index[i] = j
        self.distinct = tuple(distinct)
        self.kind_index = index
        self.kind_counts = np.bincount(index, minlength=len(distinct))
        self._support = None
        self._matrix = None

    @property
    def m(self) -> int:
        return len(self.members)

    def __len__(self):
        return len(self.members)

    @property
    def is_discrete(self) -> bool:
        return all(isinstance(f, StepCDF) for f in self.distinct)

    @property
    def merged_support(self) -> np.ndarray:
        """Sorted union of member supports (discrete families only)."""
        if self._support is None:
            if not self.is_discrete:
                raise ValueError("merged support requires every member to be a StepCDF")
            pts = np.unique(np.concatenate([f.support for f in self.distinct]))
            pts.setflags(write=False)
            self._support = pts
        return self._support

    def kind_values(self, t) -> np.ndarray:
        """Values of each distinct member at points ``t``, shape (kinds, len(t))."""
        t = np.atleast_1d(_check_points(t))
        return np.vstack([np.atleast_1d(f(t)) for f in self.distinct])

    def values(self, t) -> np.ndarray:
        """Values of every member at points ``t``, shape (m, len(t))."""
        return self.kind_values(t)[self.kind_index]

    def support_matrix(self) -> np.ndarray:
        """``F_i(a)`` for every member ``i`` and merged-support point ``a``."""
        if self._matrix is None:
            mat = self.values(self.merged_support)
            mat.setflags(write=False)
            self._matrix = mat
        return self._matrix

    def __repr__(self):
        return f"TestFamily(m={self.m}, distinct={len(self.distinct)})"


def _weighted_mean(family: TestFamily, kind_vals: np.ndarray) -> np.ndarray:
    if kind_vals.shape[0] == 1:
        return kind_vals[0].copy()
    return family.kind_counts @ kind_vals / family.m


def _scalar_or_array(t, out):
    return float(out[0]) if np.ndim(t) == 0 else out


def eval_cdf(cdf: CDF, t):
    """Evaluate one null c.d.f.; raises ``ValueError`` outside [0, 1]."""
    return cdf(t)


def avg_cdf(family: TestFamily, t):
    """Averaged null c.d.f. ``(1/m) sum_i F_i(t)``."""
    out = _weighted_mean(family, family.kind_values(t))
    return _scalar_or_array(t, out)


def avg_cdf_su(family: TestFamily, t, tau_m: float):
    """``(1/m) sum_i F_i(t) / (1 - F_i(tau_m))`` with ``1/0 = inf``."""
    _check_points(tau_m)
    num = family.kind_values(t)
    den = family.kind_values([tau_m])
    out = _weighted_mean(family, ratio(num, den))
    return _scalar_or_array(t, out)


def avg_cdf_sd(family: TestFamily, t):
    """``(1/m) sum_i F_i(t) / (1 - F_i(t))`` with ``1/0 = inf``."""
    vals = family.kind_values(t)
    out = _weighted_mean(family, ratio(vals, vals))
    return _scalar_or_array(t, out)


def topk_sums(ratios: np.ndarray) -> np.ndarray:
    """Row ``j-1`` holds the sum of the ``j`` largest entries of each column."""
    desc = -np.sort(-ratios, axis=0)
    with np.errstate(invalid="ignore"):
        return np.cumsum(desc, axis=0)


def topk_ratio_sum(family: TestFamily, t, denom_at, count: int):
    """Sum of the ``count`` largest ``F_i(t) / (1 - F_i(denom_at))``.

    ``denom_at`` may be a scalar or an array matching ``t`` (the step-down
    form uses ``denom_at = t``).
    """
    m = family.m
    if not 1 <= count <= m:
        raise ValueError(f"count must lie in [1, {m}], got {count}")
    num = family.values(t)
    den = family.values(np.broadcast_to(np.asarray(denom_at, dtype=float), num.shape[1:]))
    out = topk_sums(ratio(num, den))[count - 1]
    return _scalar_or_array(t, out)


def merged_support(family: TestFamily) -> np.ndarray:
    return family.merged_support


def check_super_uniformity(family: TestFamily, grid_size: int = 10001) -> SuperUniformityReport:
    """Check ``F_i(t) <= t`` for every member.

    Step c.d.f.s are checked at their jumps, piecewise-linear ones at their
    knots; other callables on a uniform grid of ``grid_size`` points.
    """
    worst_t, worst = 0.0, -np.inf
    for f in family.distinct:
        if isinstance(f, StepCDF):
            pts, vals = f.support, f.values
        elif f.knots is not None:
            pts = np.asarray(f.knots[0])
            vals = np.asarray(f.knots[1])
        else:
            pts = np.linspace(0.0, 1.0, grid_size)
            vals = f(pts)
        gap = vals - pts
        j = int(np.argmax(gap))
        if gap[j] > worst:
            worst, worst_t = float(gap[j]), float(pts[j])
    return SuperUniformityReport(holds=worst <= 0.0, worst_point=worst_t, excess=worst)
