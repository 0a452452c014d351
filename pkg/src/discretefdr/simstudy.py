"""Two-sample binary-response power simulation with two-sided Fisher tests.

Each position compares ``Bernoulli`` success rates of two groups of ``N``
subjects.  The first ``m1`` positions have rate 0.01 in both groups, the
next ``m2`` rate 0.10 in both, and the last ``m3`` (the false nulls) rate
0.10 against ``q``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .cdf_model import TestFamily
from .exact_tests import fisher_null
from .procedures import critical_values, procedure_direction
from .stepwise import rejection_counts

__all__ = ["Scenario", "PowerReport", "Trial", "generate_trial", "run_scenario", "POWER_PROCEDURES"]

POWER_PROCEDURES = ("BH", "Heyse", "DBH-SU", "A-DBH-SU", "A-DBH-SD")

LOW_RATE = 0.01
BASE_RATE = 0.10


@dataclass(frozen=True)
class Scenario:
    m: int
    m1: int
    m2: int
    m3: int
    q: float
    N: int = 25
    alpha: float = 0.05
    trials: int = 2000
    seed: int = 1

    def __post_init__(self):
        if min(self.m1, self.m2, self.m3) < 0 or self.m1 + self.m2 + self.m3 != self.m:
            raise ValueError(f"need m1 + m2 + m3 = m with nonnegative parts, got {self.m1}+{self.m2}+{self.m3} != {self.m}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")

    @classmethod
    def from_fractions(cls, m: int, alt_fraction: float, low_fraction: float, q: float, **kw) -> "Scenario":
        """``m3 = alt_fraction * m`` and ``m1 = low_fraction * (m - m3)``, rounded."""
        m3 = round(alt_fraction * m)
        m1 = round(low_fraction * (m - m3))
        return cls(m=m, m1=m1, m2=m - m1 - m3, m3=m3, q=q, **kw)

    def rates(self) -> tuple[np.ndarray, np.ndarray]:
        g1 = np.repeat([LOW_RATE, BASE_RATE, BASE_RATE], [self.m1, self.m2, self.m3])
        g2 = np.repeat([LOW_RATE, BASE_RATE, self.q], [self.m1, self.m2, self.m3])
        return g1, g2


@dataclass(frozen=True, eq=False)
class Trial:
    pvalues: np.ndarray
    family: TestFamily
    alternatives: np.ndarray  # boolean mask of the false nulls


@dataclass
class PowerReport:
    scenario: Scenario
    power: dict[str, float]
    standard_error: dict[str, float]
    trials: int = field(default=0)

    def rows(self) -> list[dict]:
        base = asdict(self.scenario)
        return [
            {**base, "procedure": tag, "power": self.power[tag], "standard_error": self.standard_error[tag]}
            for tag in self.power
        ]


def generate_trial(scenario: Scenario, trial_index: int) -> Trial:
    """Draw one data set; the stream is seeded by ``(seed, trial_index)``."""
    rng = np.random.default_rng([scenario.seed, trial_index])
    r1, r2 = scenario.rates()
    x1 = rng.binomial(scenario.N, r1)
    x2 = rng.binomial(scenario.N, r2)
    n = scenario.N
    pvals = np.empty(scenario.m)
    cdfs = []
    for j, (a, b) in enumerate(zip(x1.tolist(), x2.tolist())):
        null = fisher_null(n, n, a + b, "two-sided")
        pvals[j] = null.pvalues[a - null.lo]
        cdfs.append(null.cdf)
    alts = np.zeros(scenario.m, dtype=bool)
    alts[scenario.m1 + scenario.m2 :] = True
    return Trial(pvals, TestFamily(cdfs), alts)


def _trial_power(scenario: Scenario, procedures: Sequence[str], index: int) -> list[float]:
    trial = generate_trial(scenario, index)
    sorted_p = np.sort(trial.pvalues)
    out = []
    for tag in procedures:
        cv = critical_values(tag, trial.family, scenario.alpha)
        count = int(rejection_counts(sorted_p, cv.taus, procedure_direction(tag)))
        if count == 0 or scenario.m3 == 0:
            out.append(0.0)
            continue
        hits = np.count_nonzero(trial.pvalues[trial.alternatives] <= cv.taus[count - 1])
        out.append(hits / scenario.m3)
    return out


def run_scenario(scenario: Scenario, procedures: Sequence[str] = POWER_PROCEDURES, workers: int = 1) -> PowerReport:
    """Average power (share of the ``m3`` false nulls rejected) of each procedure.

    Critical values are rebuilt every trial from that trial's supports.
    """
    procedures = list(procedures)
    for tag in procedures:
        procedure_direction(tag)  # raises on unknown tags

    def run(i):
        return _trial_power(scenario, procedures, i)

    if workers <= 1:
        results = [run(i) for i in range(scenario.trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(scenario.trials)))
    arr = np.asarray(results).reshape(scenario.trials, len(procedures))
    power, se = {}, {}
    for j, tag in enumerate(procedures):
        col = arr[:, j]
        power[tag] = math.fsum(col) / scenario.trials
        se[tag] = float(np.std(col, ddof=1) / math.sqrt(scenario.trials)) if scenario.trials > 1 else float("nan")
    return PowerReport(scenario, power, se, scenario.trials)
