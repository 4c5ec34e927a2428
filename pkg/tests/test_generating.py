import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from robust_sinkhorn.generating import (
    Family,
    clamp_ratio,
    ell,
    posterior_ratio,
    psi,
    psi_prime,
    surrogate_risk,
    tstar,
    pointwise_risk,
)

FAMILIES = list(Family)
T_GRID = np.linspace(-20.0, 20.0, 10_001)
R_VALUES = np.linspace(0.0, 1.0, 101)


def grid_minimize(family, r):
    """Brute-force minimizer of the pointwise risk, polished on the best cell."""
    vals = pointwise_risk(family, r, T_GRID)
    j = int(np.argmin(vals))
    lo, hi = T_GRID[max(j - 1, 0)], T_GRID[min(j + 1, T_GRID.size - 1)]
    res = minimize_scalar(lambda t: float(pointwise_risk(family, r, t)), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-10})
    if res.fun <= vals[j]:
        return float(res.x), float(res.fun)
    return float(T_GRID[j]), float(vals[j])


class TestGeneratingFunctions:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_ell_normalized(self, family):
        assert ell(family, 0.0) == pytest.approx(1.0)
        assert ell(family, -50.0) < 1e-6 or family is Family.LOGISTIC
        t = np.linspace(-5, 5, 201)
        assert np.all(np.diff(ell(family, t)) >= -1e-15)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_psi_half_is_one(self, family):
        assert psi(family, 0.5) == 1.0

    @pytest.mark.parametrize("family", FAMILIES)
    def test_psi_matches_grid_oracle(self, family):
        oracle = np.array([grid_minimize(family, r)[1] for r in R_VALUES])
        np.testing.assert_allclose(psi(family, R_VALUES), oracle, atol=1e-4)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_tstar_matches_grid_oracle(self, family):
        for r in R_VALUES:
            t = tstar(family, r)
            if not np.isfinite(t) or abs(t) > 19:
                continue
            t_grid, v_grid = grid_minimize(family, r)
            assert pointwise_risk(family, r, t) <= v_grid + 1e-12
            # the hinge risks are flat at r = 1/2 and at the endpoints
            flat = r in (0.0, 1.0) or (family is Family.HINGE and r == 0.5)
            if not flat:
                assert t == pytest.approx(t_grid, abs=1e-4)

    def test_quad_sign_points_toward_h0(self):
        assert tstar("quad", 0.9) == pytest.approx(0.8)
        assert tstar("quad", 0.1) == pytest.approx(-0.8)

    def test_parse(self):
        assert Family.parse("QUAD") is Family.QUADRATIC_HINGE
        with pytest.raises(ValueError):
            Family.parse("square")

    @pytest.mark.parametrize("family", FAMILIES)
    def test_psi_rejects_out_of_range(self, family):
        with pytest.raises(ValueError):
            psi(family, 1.5)
        with pytest.raises(ValueError):
            psi(family, np.nan)


class TestPsiProperties:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_symmetric_and_concave(self, family):
        r = np.linspace(0, 1, 401)
        v = psi(family, r)
        np.testing.assert_allclose(v, v[::-1], atol=1e-12)
        second = v[:-2] - 2 * v[1:-1] + v[2:]
        assert np.all(second <= 1e-12)
        assert psi(family, 0.0) == 0.0 and psi(family, 1.0) == 0.0

    @pytest.mark.parametrize("family", [Family.EXPONENTIAL, Family.LOGISTIC, Family.QUADRATIC_HINGE])
    def test_psi_prime_finite_difference(self, family):
        r = np.linspace(0.02, 0.98, 49)
        h = 1e-6
        fd = (psi(family, r + h) - psi(family, r - h)) / (2 * h)
        np.testing.assert_allclose(psi_prime(family, r), fd, rtol=1e-5, atol=1e-6)

    def test_hinge_subgradient(self):
        assert psi_prime("hinge", 0.2) == 2.0
        assert psi_prime("hinge", 0.8) == -2.0
        assert psi_prime("hinge", 0.5) == 0.0

    @given(st.floats(0.0, 1.0), st.sampled_from(FAMILIES))
    @settings(max_examples=200, deadline=None)
    def test_tstar_antisymmetric(self, r, family):
        r = float(clamp_ratio(r))
        # 1 - r is rounded, which near the clamp moves the log families by ~1e-8
        assert tstar(family, r) == pytest.approx(-tstar(family, 1.0 - r), abs=1e-6)


class TestSurrogateRisk:
    def test_optimal_detector_attains_psi(self):
        p0 = np.array([0.3, 0.1, 0.1])
        p1 = np.array([0.1, 0.1, 0.3])
        r = posterior_ratio(p0, p1)
        for family in FAMILIES:
            t = tstar(family, clamp_ratio(r))
            got = surrogate_risk(family, t, p0, t, p1).value
            want = float(np.sum((p0 + p1) * psi(family, r)))
            assert got == pytest.approx(want, rel=1e-6)

    def test_posterior_ratio_empty_atom(self):
        np.testing.assert_array_equal(posterior_ratio([0.0, 1.0], [0.0, 1.0]), [0.5, 0.5])

    def test_negative_mass(self):
        with pytest.raises(ValueError):
            surrogate_risk("quad", [0.0], [-1.0], [0.0], [1.0])
