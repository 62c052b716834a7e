from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carre_lab.energies import (
    N_MAX,
    check_convex,
    check_derivative_identity,
    check_integral_identity,
    check_log_convex_in_n,
    check_log_convex_in_time,
    check_monotone,
    check_polynomial_bound,
    derivative_defect,
    derivative_order,
    energy_explicit,
    energy_scale,
    energy_trajectory,
    energy_vector,
    energy_via_c,
    energy_via_gamma,
    fit_decay_rate,
    polynomial_bound,
    write_energy_csv,
)
from carre_lab.errors import (
    DegenerateE0,
    GridTooCoarse,
    NonPositiveEnergy,
    NotNormal,
    PreconditionError,
    PreconditionViolated,
    TailTooHeavy,
)
from carre_lab.generator import (
    cycle_laplacian,
    loop_chain,
    random_circulant_generator,
    random_generator,
    random_reversible_generator,
    stationary_measure,
    validate_generator,
)
from carre_lab.semigroup import TimeGrid

from conftest import frac, oracle_energy

GRID = TimeGrid.parse("geo:1e-3:20:200")


def alpha_vector(a):
    a = Fraction(a)
    return np.array([Fraction(1), 2 * a, 4 * a], dtype=object)


class TestStaticEnergies:
    def test_loop_first_energy(self):
        A = loop_chain(1, 1, 1, exact=True)
        mu = stationary_measure(A)
        ev = energy_vector(A, mu, frac(1, 0, 0), 4)
        assert [str(x) for x in ev.values] == ["2/9", "2/3", "2", "6", "18"]
        assert ev.route_defect == 0
        assert ev.routes[1] == ("explicit", "gamma", "c_power")

    @given(st.integers(0, 4), st.lists(st.integers(-3, 3), min_size=3, max_size=3),
           st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
    @settings(max_examples=40, deadline=None)
    def test_matches_symbolic_oracle(self, n, g, a, b, c):
        A = loop_chain(a, b, c, exact=True)
        mu = stationary_measure(A, normalize=False)
        got = energy_explicit(A, mu, n, frac(*g), frac(*g))
        ref = oracle_energy(A.q, list(mu.weights), n, g)
        assert got == Fraction(int(ref.p), int(ref.q))

    @given(st.integers(2, 6), st.integers(0, 10**5), st.integers(0, 6))
    @settings(max_examples=40, deadline=None)
    def test_gamma_route_agrees(self, m, seed, n):
        A = random_generator(m, seed, 0.6)
        mu = stationary_measure(A)
        g = np.random.default_rng(seed).normal(size=m)
        scale = energy_scale(A, n, g)
        if n >= 1:
            assert abs(energy_via_gamma(A, mu, n, g) - energy_explicit(A, mu, n, g, g)) \
                <= 1e-9 * scale

    @given(st.integers(2, 6), st.integers(0, 10**5), st.floats(0.1, 10.0))
    @settings(max_examples=30, deadline=None)
    def test_linear_in_the_measure(self, m, seed, factor):
        A = random_generator(m, seed)
        mu = stationary_measure(A)
        raw = stationary_measure(A, normalize=False, gauge=factor)
        g = np.random.default_rng(seed).normal(size=m)
        k = raw.weights.sum()
        for n in range(4):
            a, b = energy_explicit(A, raw, n, g, g), k * energy_explicit(A, mu, n, g, g)
            assert abs(a - b) <= 1e-10 * k * energy_scale(A, n, g)

    def test_c_route_requires_normal(self):
        A = loop_chain(4, 1, 1)
        with pytest.raises(NotNormal):
            energy_via_c(A, stationary_measure(A), 2, np.ones(3))

    @given(st.integers(2, 6), st.integers(0, 10**5), st.booleans())
    @settings(max_examples=40, deadline=None)
    def test_positive_for_normal_generators(self, m, seed, reversible):
        A = random_reversible_generator(m, seed) if reversible else random_circulant_generator(m, seed)
        mu = stationary_measure(A)
        g = np.random.default_rng(seed).normal(size=m)
        ev = energy_vector(A, mu, g, 6)
        for n, e in enumerate(ev.values):
            assert e >= -1e-9 * energy_scale(A, n, g)
        assert ev.route_defect <= 1e-9

    def test_non_normal_energy_can_be_negative(self):
        A = loop_chain(4, 1, 1, exact=True)
        mu = stationary_measure(A, normalize=False)
        g = frac(-2, -1, 2)
        E = [energy_explicit(A, mu, n, g, g) for n in range(8)]
        assert E[:6] == [Fraction(53, 9), 26, 108, 408, 1296, 2592]
        assert E[6] == -5184 and E[7] == -93312


class TestCounterexamplePolynomial:
    @pytest.mark.parametrize("alpha", ["-1", "0", "1/6", "1/3", "1/2", "1"])
    @pytest.mark.parametrize("normalize,coeff", [(False, Fraction(8, 3)), (True, Fraction(128, 243))])
    def test_exact_gap(self, alpha, normalize, coeff):
        A = loop_chain(4, 1, 1, exact=True)
        mu = stationary_measure(A, normalize=normalize)
        g = alpha_vector(alpha)
        E = [energy_explicit(A, mu, n, g, g) for n in range(3)]
        a = Fraction(alpha)
        assert E[2] * E[0] - E[1] ** 2 == coeff * (1 - 3 * a) * a

    def test_log_convexity_witness(self):
        A = loop_chain(4, 1, 1, exact=True)
        mu = stationary_measure(A, normalize=False)
        res = check_log_convex_in_n(A, mu, alpha_vector("1/2"), 2)
        assert res.status == "witness" and res.passed
        assert res.details["exact_gaps"] == ["-2/3"]
        strict = check_log_convex_in_n(A, mu, alpha_vector("1/2"), 2, require_normal=True)
        assert strict.status == "fail"

    def test_sign_flip_at_one_third(self):
        A = loop_chain(4, 1, 1, exact=True)
        mu = stationary_measure(A, normalize=False)
        signs = []
        for a in ["1/4", "1/3", "1/2"]:
            g = alpha_vector(a)
            E = [energy_explicit(A, mu, n, g, g) for n in range(3)]
            signs.append(E[2] * E[0] - E[1] ** 2)
        assert signs[0] > 0 and signs[1] == 0 and signs[2] < 0


class TestLogConvexInN:
    @given(st.integers(2, 6), st.integers(0, 10**5))
    @settings(max_examples=30, deadline=None)
    def test_normal_instances_pass(self, m, seed):
        A = random_circulant_generator(m, seed)
        g = np.random.default_rng(seed).normal(size=m)
        res = check_log_convex_in_n(A, stationary_measure(A), g, 6)
        assert res.status == "pass"
        chain = res.details["root_chain"]
        assert all(b >= a * (1 - 1e-9) for a, b in zip(chain, chain[1:]))

    def test_constant_observable(self):
        A = loop_chain(1, 1, 1)
        with pytest.raises(DegenerateE0):
            check_log_convex_in_n(A, stationary_measure(A), np.ones(3), 3)


@pytest.fixture(scope="module")
def loop_traj():
    return energy_trajectory(loop_chain(1, 1, 1), None, np.array([1.0, 0, 0]), GRID, N=4)


class TestTrajectory:
    def test_initial_row(self, loop_traj):
        np.testing.assert_allclose(loop_traj.table[:, 0], [2 / 9, 2 / 3, 2, 6, 18], rtol=1e-14)
        assert loop_traj.route_defect <= 1e-12

    def test_closed_form(self, loop_traj):
        # centred g decays in the 3-eigenspace of C: e_n(t) = 3^n (2/9) exp(-3t)
        t = loop_traj.times
        for n in range(5):
            np.testing.assert_allclose(loop_traj.table[n], 3.0**n * 2 / 9 * np.exp(-3 * t),
                                       rtol=1e-10)

    def test_all_checks_pass(self, loop_traj):
        for check in (check_derivative_identity, check_integral_identity, check_monotone,
                      check_convex, check_polynomial_bound, check_log_convex_in_time):
            assert check(loop_traj).status == "pass", check.__name__

    def test_fitted_rate(self, loop_traj):
        assert fit_decay_rate(loop_traj, 1, 2, 10) == pytest.approx(3.0, rel=1e-9)

    def test_integral_uses_simpson_and_reports_trapezoid(self, loop_traj):
        res = check_integral_identity(loop_traj)
        assert res.worst_defect < 1e-5
        assert max(res.details["trapezoid_defect"].values()) > res.worst_defect

    def test_order_limit(self):
        with pytest.raises(PreconditionError):
            energy_trajectory(loop_chain(1, 1, 1), None, np.ones(3), GRID, N=N_MAX + 1)

    def test_short_grid_heavy_tail(self):
        A = loop_chain(1, 1, 1)
        traj = energy_trajectory(A, None, np.array([1.0, 0, 0]), TimeGrid.parse("geo:1e-3:1:100"))
        with pytest.raises(TailTooHeavy):
            check_integral_identity(traj)

    def test_coarse_grid(self):
        A = loop_chain(5, 5, 5)
        traj = energy_trajectory(A, None, np.array([1.0, 0, 0]), TimeGrid.parse("lin:0:2:6"))
        with pytest.raises(GridTooCoarse):
            check_derivative_identity(traj)

    def test_zero_generator_is_frozen(self):
        A = validate_generator(np.zeros((3, 3)))
        g0 = np.array([1.0, 2, 3])
        traj = energy_trajectory(A, stationary_measure(cycle_laplacian(3, 1)), g0, GRID, N=3)
        assert np.all(traj.table[1:] == 0)
        np.testing.assert_allclose(traj.table[0], 2 / 3)
        assert check_integral_identity(traj).status == "pass"
        assert check_monotone(traj).status == "pass"

    def test_non_normal_preconditions(self):
        A = loop_chain(4, 1, 1)
        traj = energy_trajectory(A, None, np.array([1.0, 1, 2]), GRID, N=4)
        with pytest.raises(PreconditionViolated):
            check_polynomial_bound(traj)
        # e_4(0) = E_4(1, 1, 2) = 0 exactly, then e_4 grows
        with pytest.raises(NonPositiveEnergy):
            check_log_convex_in_time(traj)
        assert check_monotone(traj).status == "fail"

    def test_csv(self, loop_traj, tmp_path):
        p = tmp_path / "e.csv"
        write_energy_csv(p, loop_traj)
        lines = p.read_text().splitlines()
        assert lines[0] == "t,e0,e1,e2,e3,e4" and len(lines) == 201
        back = np.loadtxt(p, delimiter=",", skiprows=1)
        np.testing.assert_array_equal(back[:, 1:].T, loop_traj.table)


class TestDerivative:
    def test_defect_at_h_1e3(self):
        A = loop_chain(1, 1, 1)
        mu = stationary_measure(A)
        g0 = np.array([1.0, 0, 0])
        for n in range(4):
            for t in (0.1, 0.5, 1.0, 2.0):
                assert derivative_defect(A, mu, g0, t, n, 1e-3) <= 1e-5

    def test_second_order(self):
        A = random_generator(4, 2)
        mu = stationary_measure(A)
        g0 = np.array([1.0, -1, 0.5, 0])
        order = derivative_order(A, mu, g0, 0.7, 2, [1e-2, 5e-3, 2.5e-3, 1.25e-3])
        assert order == pytest.approx(2.0, abs=0.1)


class TestPolynomialBound:
    def test_exact_at_zero(self):
        assert polynomial_bound(5.0, 2.0, 3, 0.0) == 5.0

    def test_matches_textbook_form(self):
        en0, e00, n, t = 4.0, 0.5, 2, np.linspace(0, 10, 11)
        ref = (en0 ** (-1 / n) + (t / n) * e00 ** (-1 / n)) ** (-n)
        np.testing.assert_allclose(polynomial_bound(en0, e00, n, t), ref, rtol=1e-13)

    @given(st.integers(3, 6), st.floats(0.2, 5.0), st.integers(0, 10**5))
    @settings(max_examples=25, deadline=None)
    def test_cycle_laplacians(self, m, D, seed):
        A = cycle_laplacian(m, D)
        g0 = np.random.default_rng(seed).normal(size=m)
        traj = energy_trajectory(A, None, g0, GRID, N=4)
        res = check_polynomial_bound(traj)
        assert res.status == "pass" and res.details["min_margin"] >= 0
