import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from discretefdr.cdf_model import StepCDF, TestFamily, avg_cdf_sd, identity_cdf, three_group_cdf
from discretefdr.procedures import (
    PROCEDURES,
    CriticalValues,
    adbh_sd_critical_values,
    adbh_su_critical_values,
    bh_critical_values,
    br_critical_values,
    critical_values,
    dbh_sd_critical_values,
    dbh_su_critical_values,
    dbr_critical_values,
    effective_values,
    gbs_critical_values,
    heyse_critical_values,
    invert_on_interval,
    invert_on_support,
    procedure_direction,
    rbh_critical_values,
    rbh_psi,
)
from discretefdr.stepwise import step

from families import random_family, sample_pvalues

ALPHA = 0.05
FOUR = StepCDF([0, 0.02, 0.6, 1], [0, 0.02, 0.6, 1])
ONE_POINT = StepCDF([0, 0.04, 1], [0, 0.04, 1])
ZERO_BELOW_ONE = StepCDF([0.0, 1.0], [0.0, 1.0])


def uniform_family(m):
    return TestFamily([identity_cdf()] * m)


class TestInvertOnSupport:
    PTS = [0, 0.02, 0.6, 1]

    def test_identity(self):
        assert invert_on_support(self.PTS, 1, lambda t: t, 0.05) == 0.02

    def test_zero_bound(self):
        assert invert_on_support(self.PTS, 1, lambda t: t + 1 if t > 0 else 0.0, 0.0) == 0.0

    def test_cap_binds(self):
        assert invert_on_support(self.PTS, 0.6, lambda t: t, 1) == 0.6

    def test_infinite_values_infeasible(self):
        assert invert_on_support(self.PTS, 1, lambda t: math.inf if t > 0.5 else t, 10) == 0.02

    @given(
        st.lists(st.floats(0.001, 0.999), max_size=20, unique=True),
        st.floats(0, 1),
        st.floats(0, 2),
        st.floats(0.1, 5),
    )
    def test_matches_scan(self, inner, cap, bound, power):
        pts = np.array([0.0, *sorted(inner), 1.0])

        def g(t):
            return 2 * t**power

        scan = max((t for t in pts if t <= cap and g(t) <= bound), default=0.0)
        assert invert_on_support(pts, cap, g, bound) == scan


class TestInvertOnInterval:
    def test_identity(self):
        assert invert_on_interval(1, lambda t: t, 0.05) == 0.05

    def test_zero_bound(self):
        assert invert_on_interval(1, lambda t: t, 0.0) == 0.0

    def test_cap(self):
        assert invert_on_interval(0.3, lambda t: t, 0.5) == 0.3

    def test_three_group_example(self):
        m = 300

        def g(t):
            return (m * t / 3) * (1 / (1 - t) + 2 / (1 - 2 * t))

        t = invert_on_interval(0.49, g, ALPHA)
        # independent oracle: Newton on g(t) - alpha from alpha/m
        x = ALPHA / m
        for _ in range(50):
            h = 1e-9
            x -= (g(x) - ALPHA) / ((g(x + h) - g(x - h)) / (2 * h))
        assert abs(t - x) < 1e-12
        assert t == pytest.approx(1.6662e-4, abs=1e-8)


class TestClosedForms:
    def test_bh(self):
        np.testing.assert_allclose(bh_critical_values(4, 0.05).taus, [0.0125, 0.025, 0.0375, 0.05], rtol=1e-15)
        assert bh_critical_values(1, 0.05).taus[0] == 0.05
        assert bh_critical_values(7, 0.05).taus[-1] == 0.05

    def test_br(self):
        np.testing.assert_allclose(br_critical_values(2, 0.05, 0.5).taus, [0.0125, 0.05], rtol=1e-15)
        assert br_critical_values(1, 0.05, 0.5).taus[0] == 0.025
        assert br_critical_values(10, 0.9, 0.1).taus[-1] == 0.1

    def test_gbs(self):
        np.testing.assert_allclose(gbs_critical_values(2, 0.05).taus, [0.05 / 2.05, 0.1 / 1.1], rtol=1e-15)
        m = 6
        assert gbs_critical_values(m, 0.05).taus[-1] == pytest.approx(0.05 * m / (0.05 * m + 1), rel=1e-15)
        assert gbs_critical_values(1, 0.05).taus[0] == pytest.approx(0.05 / 1.05, rel=1e-15)

    @pytest.mark.parametrize("args", [(0, 0.05), (3, 1.0), (3, -0.1), (2.5, 0.05)])
    def test_domain(self, args):
        with pytest.raises(ValueError):
            bh_critical_values(*args)

    @pytest.mark.parametrize("lam", [0.0, 1.0])
    def test_br_lambda_domain(self, lam):
        with pytest.raises(ValueError):
            br_critical_values(3, 0.05, lam)


class TestCriticalValuesType:
    def test_nondecreasing_enforced(self):
        with pytest.raises(AssertionError):
            CriticalValues([0.2, 0.1], "x", "step-up", 0.05)

    def test_range_enforced(self):
        with pytest.raises(ValueError):
            CriticalValues([0.2, 1.1], "x", "step-up", 0.05)

    def test_immutable(self):
        cv = bh_critical_values(3, 0.05)
        with pytest.raises(ValueError):
            cv.taus[0] = 0.5


class TestFamilyProcedures:
    def test_heyse_two_identical(self):
        np.testing.assert_array_equal(heyse_critical_values(TestFamily([FOUR, FOUR]), ALPHA).taus, [0.02, 0.02])

    def test_heyse_half_zero(self):
        fam = TestFamily([FOUR, ZERO_BELOW_ONE])
        # Fbar = F/2, so Heyse inverts F at 2 alpha k / m = (0.05, 0.1)
        np.testing.assert_array_equal(heyse_critical_values(fam, ALPHA).taus, [0.02, 0.02])
        fam = TestFamily([StepCDF([0, 0.02, 0.09, 1], [0, 0.02, 0.09, 1]), ZERO_BELOW_ONE])
        np.testing.assert_array_equal(heyse_critical_values(fam, ALPHA).taus, [0.02, 0.09])

    def test_dbh_single_point(self):
        fam = TestFamily([ONE_POINT])
        assert dbh_su_critical_values(fam, ALPHA).taus[0] == 0.04
        assert dbh_sd_critical_values(fam, ALPHA).taus[0] == 0.04

    def test_dbh_sd_alpha_zero(self):
        fam = TestFamily([FOUR, ONE_POINT])
        np.testing.assert_array_equal(dbh_sd_critical_values(fam, 0.0).taus, [0, 0])

    def test_m1_reductions(self):
        fam = TestFamily([FOUR])
        for alpha in (0.01, 0.05, 0.5):
            assert adbh_su_critical_values(fam, alpha).taus[0] == dbh_su_critical_values(fam, alpha).taus[0]
            assert adbh_sd_critical_values(fam, alpha).taus[0] == dbh_sd_critical_values(fam, alpha).taus[0]

    def test_dbr_m1_identity(self):
        t = dbr_critical_values(uniform_family(1), ALPHA, 0.5).taus[0]
        assert t <= 0.025

    def test_dbr_lambda_cap(self):
        fam = TestFamily([FOUR] * 4)
        cv = dbr_critical_values(fam, 0.9, 0.1)
        assert cv.taus[-1] == 0.02  # largest support point below lambda = 0.1

    @pytest.mark.parametrize("seed", range(40))
    def test_tau_m_agreement(self, seed):
        rng = np.random.default_rng(seed)
        fam = random_family(rng, int(rng.integers(1, 7)))
        su = dbh_su_critical_values(fam, ALPHA).taus[-1]
        assert su == dbh_sd_critical_values(fam, ALPHA).taus[-1] == adbh_su_critical_values(fam, ALPHA).taus[-1]

    @pytest.mark.parametrize("seed", range(40))
    def test_all_nondecreasing_and_on_support(self, seed):
        rng = np.random.default_rng(seed)
        fam = random_family(rng, int(rng.integers(1, 7)))
        alpha = float(rng.choice([0.0, 0.05, 0.2, 0.6]))
        for tag in PROCEDURES:
            cv = critical_values(tag, fam, alpha)
            assert cv.m == fam.m and cv.direction == procedure_direction(tag)
            assert np.all(np.diff(cv.taus) >= 0)
            if tag not in ("BH", "BR-0.5", "GBS", "RBH"):
                assert np.all(np.isin(cv.taus, fam.merged_support))

    @pytest.mark.parametrize("seed", range(40))
    def test_adaptive_dominates(self, seed):
        rng = np.random.default_rng(seed)
        fam = random_family(rng, int(rng.integers(1, 7)))
        assert np.all(adbh_su_critical_values(fam, ALPHA).taus >= dbh_su_critical_values(fam, ALPHA).taus)
        assert np.all(adbh_sd_critical_values(fam, ALPHA).taus >= dbh_sd_critical_values(fam, ALPHA).taus)

    @pytest.mark.parametrize("seed", range(40))
    def test_effective_values_keep_rejections(self, seed):
        rng = np.random.default_rng(seed)
        fam = random_family(rng, int(rng.integers(2, 7)))
        pts = fam.merged_support
        for tag in ("BH", "GBS", "BR-0.5", "RBH"):
            cv = critical_values(tag, fam, ALPHA)
            eff = CriticalValues(effective_values(cv.taus, pts), tag, cv.direction, ALPHA)
            for p in sample_pvalues(rng, fam, 50):
                np.testing.assert_array_equal(step(p, cv).rejected, step(p, eff).rejected)


class TestUniformReductions:
    @pytest.mark.parametrize("m", [1, 2, 5, 20])
    def test_heyse_is_bh(self, m):
        np.testing.assert_array_equal(heyse_critical_values(uniform_family(m), ALPHA).taus, bh_critical_values(m, ALPHA).taus)

    @pytest.mark.parametrize("m", [1, 2, 5, 20])
    def test_adbh_sd_is_gbs(self, m):
        np.testing.assert_allclose(
            adbh_sd_critical_values(uniform_family(m), ALPHA).taus, gbs_critical_values(m, ALPHA).taus, rtol=0, atol=1e-10
        )

    @pytest.mark.parametrize("m", [1, 2, 5, 20])
    def test_dbh_sd_closed_form(self, m):
        b = ALPHA * np.arange(1, m + 1) / m
        np.testing.assert_allclose(dbh_sd_critical_values(uniform_family(m), ALPHA).taus, b / (1 + b), rtol=0, atol=1e-10)

    @pytest.mark.parametrize("m", [1, 2, 5, 20])
    def test_dbh_su_above_bh_at_reduced_level(self, m):
        lvl = ALPHA / (1 + ALPHA)
        assert np.all(dbh_su_critical_values(uniform_family(m), ALPHA).taus >= bh_critical_values(m, lvl).taus - 1e-12)

    @pytest.mark.parametrize("m", [2, 5, 20])
    def test_adbh_su_is_br_at_tau_m(self, m):
        cv = adbh_su_critical_values(uniform_family(m), ALPHA)
        br = br_critical_values(m, ALPHA, cv.taus[-1]).taus
        np.testing.assert_allclose(cv.taus, br, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("m", [2, 5, 20])
    def test_dbr_is_br(self, m):
        np.testing.assert_allclose(
            dbr_critical_values(uniform_family(m), ALPHA, 0.5).taus, br_critical_values(m, ALPHA, 0.5).taus, rtol=0, atol=1e-10
        )

    def test_three_group_heyse_near_bh(self):
        m = 300
        fam = TestFamily([three_group_cdf()] * m)
        # F(t) = 2t below 1/4, so Heyse halves the BH values
        taus = heyse_critical_values(fam, ALPHA).taus
        np.testing.assert_allclose(taus, bh_critical_values(m, ALPHA).taus / 2, rtol=1e-15)


class TestRbh:
    def test_identity_lambda_is_alpha(self):
        for m in (1, 3, 10):
            sol = rbh_critical_values(uniform_family(m), ALPHA, grid_steps=2000)
            assert sol.lambda_alpha == ALPHA
            np.testing.assert_allclose(sol.taus.taus, bh_critical_values(m, ALPHA).taus, rtol=1e-15)

    def test_alpha_zero_identity(self):
        sol = rbh_critical_values(uniform_family(3), 0.0, grid_steps=100)
        assert sol.lambda_alpha == 0.0
        np.testing.assert_array_equal(sol.taus.taus, [0, 0, 0])

    def test_alpha_zero_discrete_rejects_nothing(self):
        # psi vanishes below the smallest positive support point, so lambda may be positive,
        # but no attainable p-value lies under the resulting critical values
        fam = TestFamily([FOUR, ONE_POINT])
        sol = rbh_critical_values(fam, 0.0)
        assert sol.psi_at_lambda == 0.0
        assert sol.taus.taus[-1] < 0.02
        for p in ([0.02, 0.04], [0.02, 1.0], [0.6, 0.04]):
            assert step(p, sol.taus).count == 0

    @pytest.mark.parametrize("seed", range(25))
    def test_psi_at_lambda(self, seed):
        rng = np.random.default_rng(seed)
        fam = random_family(rng, int(rng.integers(1, 6)))
        sol = rbh_critical_values(fam, ALPHA, grid_steps=500)
        assert 0 <= sol.lambda_alpha <= 1
        assert sol.psi_at_lambda <= ALPHA
        assert rbh_psi(fam, sol.lambda_alpha)[0] == sol.psi_at_lambda
        # any feasible larger lambda gives the same rejections on attainable p-values
        grid = np.linspace(sol.lambda_alpha, 1, 400)[1:]
        k = np.arange(1, fam.m + 1)
        pvals = sample_pvalues(rng, fam, 40)
        for lam in grid[rbh_psi(fam, grid) <= ALPHA]:
            cv = CriticalValues(lam * k / fam.m, "RBH", "step-up", ALPHA)
            for p in pvals:
                np.testing.assert_array_equal(step(p, cv).rejected, step(p, sol.taus).rejected)

    def test_requires_super_uniformity(self):
        bad = TestFamily([StepCDF([0, 0.04, 1], [0, 0.06, 1])])
        with pytest.raises(ValueError, match="super-uniform"):
            rbh_critical_values(bad, ALPHA)


class TestRegistry:
    @pytest.mark.parametrize("tag", ["BR-0.3", "DBR-.25", "DBR"])
    def test_lambda_tags(self, tag):
        assert procedure_direction(tag) == "step-up"
        cv = critical_values(tag, TestFamily([FOUR, FOUR]), ALPHA)
        assert cv.m == 2

    @pytest.mark.parametrize("tag", ["BY", "BR-x", "dbh-su", ""])
    def test_unknown(self, tag):
        with pytest.raises(ValueError):
            procedure_direction(tag)

    def test_directions(self):
        assert procedure_direction("A-DBH-SD") == "step-down"
        assert procedure_direction("GBS") == "step-down"
        assert procedure_direction("Heyse") == "step-up"


def test_sd_transform_crossing_matches_tau_m():
    fam = TestFamily([FOUR, ONE_POINT, FOUR])
    tau_m = dbh_sd_critical_values(fam, ALPHA).taus[-1]
    pts = fam.merged_support
    assert avg_cdf_sd(fam, tau_m) <= ALPHA
    above = pts[pts > tau_m]
    assert np.all(avg_cdf_sd(fam, above) > ALPHA)
