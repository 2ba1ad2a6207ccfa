import numpy as np
import pytest

from pedflow import pressure as pr
from pedflow.errors import CongestionOverflowError, DomainError


def make_params(M=1.0, m=2.0, eps=1e-3, gamma=2.0, rho_star=1.0):
    return pr.PressureParams(M=M, m=m, eps=eps, gamma=gamma, rho_star=rho_star)


ALL_WEIGHTS = [
    pr.CrowdingWeight(kind="constant"),
    pr.CrowdingWeight(kind="affine", beta=1.0),
    pr.CrowdingWeight(kind="power", beta=1.5),
]


class TestBackground:
    def test_zero_density(self):
        assert pr.background_pressure(make_params(M=1, m=2), 0.0) == 0.0

    def test_power_evaluation(self):
        assert pr.background_pressure(make_params(M=1, m=2), 0.5) == 0.25

    def test_zero_amplitude(self):
        assert pr.background_pressure(make_params(M=0, m=2), 0.9) == 0.0

    def test_negative_density_raises(self):
        with pytest.raises(DomainError):
            pr.background_pressure(make_params(), -0.1)

    def test_monotone(self):
        params = make_params(M=2.0, m=1.5)
        rho = np.linspace(0, 0.99, 100)
        p = pr.background_pressure(params, rho)
        assert np.all(np.diff(p) >= 0)

    def test_derivative_matches_fd(self):
        params = make_params(M=2.0, m=2.5, eps=0.0)
        for rho in (0.1, 0.4, 0.8):
            h = 1e-6
            fd = (
                pr.background_pressure(params, rho + h)
                - pr.background_pressure(params, rho - h)
            ) / (2 * h)
            assert pr.background_pressure_derivative(params, rho) == pytest.approx(
                fd, rel=1e-8
            )


class TestSingularCorrection:
    def test_unit_denominator(self):
        # (1/0.5 - 1)^2 = 1, so the correction equals eps
        params = make_params(eps=1e-3, gamma=2.0)
        assert pr.singular_correction_1w(params, 0.5) == pytest.approx(1e-3)

    def test_vacuum_continuity(self):
        assert pr.singular_correction_1w(make_params(eps=0.7), 0.0) == 0.0

    def test_near_jam_value(self):
        # eps/(1/0.99 - 1)^2 = eps * 0.99^2 / 0.01^2 = 9.801 exactly
        params = make_params(eps=1e-3, gamma=2.0)
        assert pr.singular_correction_1w(params, 0.99) == pytest.approx(
            9.801, rel=1e-10
        )

    def test_jam_density_raises(self):
        params = make_params()
        with pytest.raises(CongestionOverflowError):
            pr.singular_correction_1w(params, 1.0)
        with pytest.raises(CongestionOverflowError):
            pr.singular_correction_1w(params, 1.0 - 1e-14)

    def test_negative_raises(self):
        with pytest.raises(DomainError):
            pr.singular_correction_1w(make_params(), -0.5)

    def test_strictly_increasing(self):
        params = make_params(eps=1e-2, gamma=3.0)
        rho = np.linspace(1e-3, 0.999, 200)
        q = pr.singular_correction_1w(params, rho)
        assert np.all(np.diff(q) > 0)

    @pytest.mark.parametrize("eps", [1e-2, 1e-3, 1e-4])
    @pytest.mark.parametrize("gamma", [2.0, 3.0])
    def test_order_eps_away_from_jam(self, eps, gamma):
        # At fixed distance from the jam density the correction is O(eps):
        # on rho <= 0.9 the bound eps * 9**gamma is attained at 0.9.
        params = make_params(eps=eps, gamma=gamma)
        rho = np.linspace(0.0, 0.9, 400)
        q = pr.singular_correction_1w(params, rho)
        assert np.all(q <= eps * 9.0**gamma * (1 + 1e-12))

    def test_derivative_matches_fd(self):
        params = make_params(eps=1e-2, gamma=2.5)
        for rho in (0.2, 0.5, 0.8):
            h = 1e-7
            fd = (
                pr.singular_correction_1w(params, rho + h)
                - pr.singular_correction_1w(params, rho - h)
            ) / (2 * h)
            assert pr.singular_correction_derivative_1w(params, rho) == pytest.approx(
                fd, rel=1e-6
            )


class TestCrossoverWidth:
    def test_at_jam(self):
        params = make_params(eps=1e-4, gamma=2.0)
        assert pr.crossover_width(params, 1.0) == pytest.approx(0.01)

    def test_zero_eps(self):
        assert pr.crossover_width(make_params(eps=0.0), 0.5) == 0.0

    def test_half_density(self):
        params = make_params(eps=1e-2, gamma=2.0)
        assert pr.crossover_width(params, 0.5) == pytest.approx(0.05)


class TestTwoWayPressure:
    def test_symmetric_arguments(self):
        params = make_params()
        for q in ALL_WEIGHTS:
            a = pr.two_way_pressure(params, q, 0.3, 0.3)
            b = pr.two_way_pressure(params, q, 0.3, 0.3)
            assert a == b

    @pytest.mark.parametrize("q", ALL_WEIGHTS)
    def test_reciprocity_identity(self, q):
        # q(r+) * Q(r+, r-) == q(r-) * Q(r-, r+) at every admissible pair
        params = make_params(eps=1e-3, gamma=2.0)
        rng = np.random.default_rng(7)
        for _ in range(200):
            r_plus = rng.uniform(0.01, 0.7)
            r_minus = rng.uniform(0.01, 0.95 - r_plus)
            total = r_plus + r_minus
            bg = pr.background_pressure(params, total)
            q_plus = pr.two_way_pressure(params, q, r_plus, r_minus) - bg
            q_minus = pr.two_way_pressure(params, q, r_minus, r_plus) - bg
            lhs = q.value(r_plus, params.rho_star) * q_plus
            rhs = q.value(r_minus, params.rho_star) * q_minus
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_zero_eps_reduces_to_background(self):
        params = make_params(eps=0.0)
        q = pr.CrowdingWeight()
        assert pr.two_way_pressure(params, q, 0.3, 0.4) == pytest.approx(
            pr.background_pressure(params, 0.7)
        )

    def test_overflow(self):
        params = make_params()
        with pytest.raises(CongestionOverflowError):
            pr.two_way_pressure(params, pr.CrowdingWeight(), 0.6, 0.4)

    def test_monotone_in_own_density(self):
        params = make_params(eps=1e-3)
        q = pr.CrowdingWeight()
        rho_own = np.linspace(1e-3, 0.6, 100)
        p = pr.two_way_pressure(params, q, rho_own, 0.3)
        assert np.all(np.diff(p) > 0)


class TestPressurePartials:
    def test_linear_background(self):
        params = make_params(M=1.0, m=1.0, eps=0.0)
        d1, d2 = pr.pressure_partials(params, pr.CrowdingWeight(), 0.3, 0.2)
        assert d1 == pytest.approx(1.0)
        assert d2 == pytest.approx(1.0)

    @pytest.mark.parametrize("q", ALL_WEIGHTS)
    def test_matches_finite_differences(self, q):
        params = make_params(eps=1e-3, gamma=2.0)
        h = 1e-6 * params.rho_star
        rng = np.random.default_rng(3)
        for _ in range(50):
            r_plus = rng.uniform(0.05, 0.5)
            r_minus = rng.uniform(0.05, 0.75 - r_plus)  # away from the jam band
            d1, d2 = pr.pressure_partials(params, q, r_plus, r_minus)
            fd1 = (
                pr.two_way_pressure(params, q, r_plus + h, r_minus)
                - pr.two_way_pressure(params, q, r_plus - h, r_minus)
            ) / (2 * h)
            fd2 = (
                pr.two_way_pressure(params, q, r_plus, r_minus + h)
                - pr.two_way_pressure(params, q, r_plus, r_minus - h)
            ) / (2 * h)
            assert d1 == pytest.approx(fd1, rel=1e-5)
            assert d2 == pytest.approx(fd2, rel=1e-5)

    def test_nonnegative(self):
        params = make_params(eps=1e-3)
        for q in ALL_WEIGHTS:
            rng = np.random.default_rng(11)
            for _ in range(100):
                r_plus = rng.uniform(0.0, 0.6)
                r_minus = rng.uniform(0.0, 0.9 - r_plus)
                d1, d2 = pr.pressure_partials(params, q, r_plus, r_minus)
                assert d1 >= 0.0
                assert d2 >= 0.0

    def test_blows_up_near_jam(self):
        params = make_params(eps=1e-3)
        q = pr.CrowdingWeight()
        d1_far, _ = pr.pressure_partials(params, q, 0.3, 0.3)
        d1_near, _ = pr.pressure_partials(params, q, 0.5, 0.499999)
        assert d1_near > 1e3 * d1_far


class TestCongestedShare:
    def test_symmetric_split(self):
        q = pr.CrowdingWeight(kind="affine", beta=1.0)
        out = pr.congested_pressure_share(q, 0.5, 0.5, 2.0, 1.5, rho_star=1.0)
        assert out == pytest.approx(2.0)

    def test_zero_excess(self):
        q = pr.CrowdingWeight()
        out = pr.congested_pressure_share(q, 0.7, 0.3, 1.5, 1.5, rho_star=1.0)
        assert out == pytest.approx(1.5)

    def test_affine_example(self):
        # q(0.75)/q(0.25) = 1.75/1.25 = 1.4 with unit excess
        q = pr.CrowdingWeight(kind="affine", beta=1.0)
        p_star = 0.5
        out = pr.congested_pressure_share(q, 0.75, 0.25, p_star + 1.0, p_star, 1.0)
        assert out == pytest.approx(p_star + 1.4)

    def test_constraint_violation(self):
        q = pr.CrowdingWeight()
        with pytest.raises(DomainError):
            pr.congested_pressure_share(q, 0.5, 0.4, 2.0, 1.0, rho_star=1.0)
        with pytest.raises(DomainError):
            pr.congested_pressure_share(q, 0.5, 0.5, 0.5, 1.0, rho_star=1.0)

    def test_output_at_least_p_star(self):
        rng = np.random.default_rng(5)
        q = pr.CrowdingWeight(kind="power", beta=2.0)
        for _ in range(50):
            r_plus = rng.uniform(0.05, 0.95)
            excess = rng.uniform(0.0, 3.0)
            out = pr.congested_pressure_share(
                q, r_plus, 1.0 - r_plus, 1.0 + excess, 1.0, rho_star=1.0
            )
            assert out >= 1.0


class TestCrowdingWeight:
    def test_kinds_positive_increasing_bounded(self):
        rho = np.linspace(0.0, 1.0, 50)
        for q in ALL_WEIGHTS:
            v = q.value(rho, 1.0)
            assert np.all(v > 0)
            assert np.all(np.diff(v) >= 0)
            assert np.all(v <= 4.0)  # O(1) on [0, rho_star]

    def test_derivative_matches_fd(self):
        for q in ALL_WEIGHTS:
            for rho in (0.1, 0.5, 0.9):
                h = 1e-7
                fd = (q.value(rho + h, 1.0) - q.value(rho - h, 1.0)) / (2 * h)
                assert q.derivative(rho, 1.0) == pytest.approx(fd, abs=1e-6)

    def test_negative_beta_rejected(self):
        with pytest.raises(DomainError):
            pr.CrowdingWeight(kind="affine", beta=-0.5)


class TestParamsValidation:
    def test_bounds(self):
        with pytest.raises(DomainError):
            make_params(M=-1.0)
        with pytest.raises(DomainError):
            make_params(m=0.5)
        with pytest.raises(DomainError):
            make_params(eps=-1e-3)
        with pytest.raises(DomainError):
            make_params(gamma=1.0)
        with pytest.raises(DomainError):
            make_params(rho_star=0.0)


def test_momentum_pressure_matches_fd():
    params = make_params(M=1.5, m=2.0, eps=0.0)
    for rho in (0.1, 0.4, 0.8):
        pi, pi_prime = pr.momentum_pressure(params, rho)
        assert pi == pytest.approx(rho * pr.background_pressure(params, rho))
        h = 1e-6
        pi_hi, _ = pr.momentum_pressure(params, rho + h)
        pi_lo, _ = pr.momentum_pressure(params, rho - h)
        assert pi_prime == pytest.approx((pi_hi - pi_lo) / (2 * h), rel=1e-8)
