import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

import oracles as orc
from eigenprep import bounds
from eigenprep.errors import ConfigError, VacuousBoundError
from eigenprep.hamiltonian import derive_params, synth_spectrum
from eigenprep.prep import PrepConfig, build_schedule, run_postselected, run_sampled

c_sq = st.floats(0.01, 0.99)
eps = st.floats(1e-12, 1e-2)
period = st.integers(1, 12)


class TestGamma:
    def test_below_quarter_at_eight(self):
        assert bounds.gamma_numeric(build_schedule(1.0, 8.0)) <= 0.25 + 1e-6

    def test_matches_dense_grid(self):
        assert bounds.gamma_numeric(build_schedule(1.0, 3.0)) == pytest.approx(orc.gamma_grid(1.0, 3.0), rel=1e-9)

    def test_single_time(self):
        # gap == e_max: only t = pi / (2 gap), cos^2 vanishes at the gap
        assert bounds.gamma_numeric(build_schedule(2.0, 2.0)) == pytest.approx(0.0, abs=1e-30)

    def test_grid_guard(self):
        with pytest.raises(ValueError):
            bounds.gamma_numeric(build_schedule(1.0, 3.0), grid_points=10)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(1e-3, 10.0), st.floats(1.0, 1000.0))
    def test_quarter_property(self, gap, ratio):
        assert bounds.gamma_numeric(build_schedule(gap, gap * ratio), grid_points=20_000) <= 0.25 + 1e-6


class TestExactFloor:
    def test_xi_example(self):
        assert bounds.xi_sq_bound(9, 0.2, 9, 0.25) == pytest.approx(0.2)

    def test_examples(self):
        assert bounds.fidelity_floor_exact(0, 0.3, 4) == pytest.approx(0.3)
        assert bounds.fidelity_floor_exact(1, 0.5, 1) == pytest.approx(0.8)

    def test_no_underflow(self):
        assert bounds.fidelity_floor_exact(10**6, 0.2, 1) == 1.0
        assert bounds.fidelity_floor_exact(600, 1e-3, 1) == pytest.approx(1.0)
        assert bounds.fidelity_floor_exact(0, 1e-300, 1) > 0

    @given(c_sq, period, st.integers(0, 400))
    def test_matches_oracle(self, c, N, k):
        assert bounds.fidelity_floor_exact(k, c, N) == pytest.approx(orc.floor_exact(k, c, N), rel=1e-12)

    @given(c_sq, period, st.integers(0, 300))
    def test_monotone(self, c, N, k):
        assert bounds.fidelity_floor_exact(k + 1, c, N) >= bounds.fidelity_floor_exact(k, c, N)

    def test_holds_on_random_spectra(self):
        rng = np.random.default_rng(0)
        for i in range(50):
            gap = rng.uniform(0.05, 1.0)
            ss = synth_spectrum(int(rng.integers(2, 40)), gap, gap * rng.uniform(1, 200),
                                rng.choice(["uniform", "exponential"]), rng_seed=i)
            cfg = PrepConfig(derive_params(ss), stop="never", max_iterations=4 * build_schedule(
                gap, derive_params(ss).e_max).period)
            tr = run_postselected(None, ss, cfg).trace
            N = cfg.schedule.period
            floor = [bounds.fidelity_floor_exact(k, ss.target_weight, N) for k in tr.k]
            assert np.all(tr.fidelity >= np.array(floor) - 1e-12)


class TestIterationCounts:
    def test_closed_form_example(self):
        assert bounds.k_bar_exact(0.2, 1e-8, 9) == 129

    def test_floored_example(self):
        # the floored bound only improves at period boundaries
        assert bounds.k_bar_guaranteed(0.2, 1e-8, 9) == 135
        assert bounds.fidelity_floor_exact(135, 0.2, 9) >= 1 - 1e-8
        assert bounds.fidelity_floor_exact(134, 0.2, 9) < 1 - 1e-8

    def test_already_converged(self):
        assert bounds.k_bar_exact(0.999999, 0.1, 5) == 0
        assert bounds.k_bar_guaranteed(0.999999, 0.1, 5) == 0

    @given(c_sq, eps, period)
    def test_closed_form_is_continuous_threshold(self, c, e, N):
        k = bounds.k_bar_exact(c, e, N)
        assert orc.floor_exact(k, c, N, continuous=True) >= 1 - e - 1e-12
        if k > 0:
            assert orc.floor_exact(k - 1, c, N, continuous=True) < 1 - e + 1e-12

    @given(c_sq, eps, period)
    def test_guaranteed_reaches_floor(self, c, e, N):
        k = bounds.k_bar_guaranteed(c, e, N)
        assert bounds.fidelity_floor_exact(k, c, N) >= 1 - e
        assert k % N == 0
        assert k >= bounds.k_bar_exact(c, e, N)
        assert k - bounds.k_bar_exact(c, e, N) < N

    def test_invalid_eps(self):
        with pytest.raises(ValueError):
            bounds.k_bar_exact(0.2, 0.0, 9)


class TestCost:
    def test_recursion_example(self):
        assert bounds.cost_recursion([0.5], [2.0]) == 4.0
        assert bounds.cost_recursion([], []) == 0.0

    def test_recursion_validation(self):
        with pytest.raises(ValueError):
            bounds.cost_recursion([0.0], [1.0])
        with pytest.raises(ValueError):
            bounds.cost_recursion([0.5], [1.0, 2.0])

    def test_recursion_monte_carlo(self):
        p, t = [0.5, 0.7, 0.95], [2.0, 1.0, 0.5]
        mc = orc.cost_mc(p, t, 100_000, seed=3).mean()
        assert bounds.cost_recursion(p, t) == pytest.approx(mc, rel=0.05)

    def test_bound_example(self):
        assert bounds.cost_bound(1, 0.2, 1, 1.0) == pytest.approx(math.pi / 0.4)
        assert bounds.cost_bound(0, 0.2, 1, 1.0) == 0.0

    def test_bound_regime_check(self):
        with pytest.raises(ValueError):
            bounds.cost_bound(3, 0.2, 1, 1.0, regime="other")

    def test_bound_dominates_sampled(self):
        rng = np.random.default_rng(2)
        for i in range(5):
            ss = synth_spectrum(10, 0.5, 0.5 * rng.uniform(2, 30), target_weight=0.2, rng_seed=i)
            cfg = PrepConfig(derive_params(ss), target_infidelity=1e-4, stop="guarantee")
            ref = run_postselected(None, ss, cfg)
            k = len(ref.trace.records) - 1
            mean = np.mean([run_sampled(None, ss, cfg, rng=rng, reference=ref).trace.total_sim_time
                            for _ in range(2000)])
            bound = bounds.cost_bound(k, 0.2, cfg.schedule.period, cfg.params.gap)
            assert bound >= mean


class TestApproximate:
    def test_zeta_example(self):
        assert bounds.zeta_sq_floor(9, 1 / 3, 1.0, 9) == pytest.approx(1 - math.pi**2 / 27)
        assert bounds.zeta_sq_floor(10, 0.0, 1.0, 9) == 1.0

    def test_zeta_warns_for_large_offset(self):
        with pytest.warns(UserWarning):
            assert bounds.zeta_sq_floor(1, 0.7, 1.0, 1) == 0.0
        with pytest.raises(ValueError):
            bounds.zeta_sq_floor(1, 1.0, 1.0, 1)

    @settings(max_examples=100)
    @given(st.floats(0.0, 0.499), period.filter(lambda n: n <= 9), st.integers(0, 45))
    def test_zeta_below_true_product(self, ratio, N, k):
        assume(k <= 5 * N)
        gap = 1.0
        delta = ratio * gap
        times = [math.pi / (2 ** (l % N + 1) * gap) for l in range(k)]
        true = np.prod([math.cos(t * delta) ** 2 for t in times])
        assert bounds.zeta_sq_floor(k, delta, gap, N) <= true + 1e-12

    def test_floor_example(self):
        base = 1 - math.pi**2 / 27
        expected = 1 / (1 + 4 * 0.25 / base)
        assert bounds.fidelity_floor_approx(9, 0.2, 1 / 3, 1.0, 9) == pytest.approx(expected)

    @given(c_sq, st.floats(1e-3, 0.45), period, st.integers(1, 200))
    def test_approx_below_exact(self, c, ratio, N, k):
        assert bounds.fidelity_floor_approx(k, c, ratio, 1.0, N) <= bounds.fidelity_floor_exact(k, c, N)

    @given(c_sq, st.floats(0.0, 0.45), period, st.integers(0, 200))
    def test_approx_matches_oracle(self, c, ratio, N, k):
        got = bounds.fidelity_floor_approx(k, c, ratio, 1.0, N)
        assert got == pytest.approx(orc.floor_approx(k, c, ratio, 1.0, N), rel=1e-12)

    def test_k_bar_approx_example(self):
        kb = bounds.k_bar_approx(0.2, 1e-8, 9, 1 / 3, 1.0)
        assert kb >= 129
        assert bounds.k_bar_guaranteed(0.2, 1e-8, 9, 1 / 3, 1.0) == orc.first_k(
            lambda k: orc.floor_approx(k, 0.2, 1 / 3, 1.0, 9), 1e-8)

    @given(c_sq, eps, period, st.floats(0.0, 0.45))
    def test_guaranteed_approx_reaches_floor(self, c, e, N, ratio):
        k = bounds.k_bar_guaranteed(c, e, N, ratio, 1.0)
        assert bounds.fidelity_floor_approx(k, c, ratio, 1.0, N) >= 1 - e

    def test_too_large_offset(self):
        with pytest.raises(ValueError):
            bounds.k_bar_approx(0.2, 1e-8, 9, 0.99, 1.0)


class TestTrotterAndNoise:
    def test_rte_example(self):
        got = bounds.fidelity_floor_rte(100, 0.2, 1.0, 0.0, 1e-8)
        assert got == pytest.approx((0.2 - 2e-6) / (0.2 + 2e-6))

    def test_rte_rises_then_falls(self):
        N, c, e = 9, 0.2, 1e-6
        floors = []
        for k in range(0, 2000, N):
            try:
                floors.append(bounds.fidelity_floor_rte(k, c, 1.0, bounds.xi_sq_bound(k, c, N, 0.25), e))
            except VacuousBoundError:
                break
        peak = int(np.argmax(floors))
        assert 0 < peak < len(floors) - 1
        assert floors[-1] < floors[peak]

    def test_rte_vacuous(self):
        with pytest.raises(VacuousBoundError):
            bounds.fidelity_floor_rte(10**9, 0.2, 1.0, 0.0, 1e-8)

    def test_n_pauli_example(self):
        assert bounds.n_pauli(15, 100, 0.5) == 9425
        assert bounds.noisy_fidelity_estimate(1e-5, 15, 100, 0.5) == pytest.approx(0.9100, abs=1e-4)

    def test_estimate_bounds(self):
        assert bounds.noisy_fidelity_estimate(0.0, 3, 10, 1.0) == 1.0
        with pytest.raises(ValueError):
            bounds.noisy_fidelity_estimate(1.0, 3, 10, 1.0)


class TestReport:
    def test_paper_scale(self):
        rep = bounds.bounds_report(0.075, 9.753, 0.2, 1e-8)
        assert rep.period == 9
        assert rep.gamma <= 0.25
        assert rep.k_bar == 129
        assert rep.k_bar_guaranteed == 135
        assert rep.regime == "exact-energy"

    def test_json_round_trip(self):
        rep = bounds.bounds_report(1.0, 8.0, 0.3, 1e-6, 0.2, lam=1e-4, term_count=5, n_trott=10)
        back = bounds.BoundsReport.from_json(rep.to_json())
        assert back == rep
        assert "noise estimate" in rep.table() or "n_pauli" in rep.table()

    def test_invalid_delta(self):
        with pytest.raises(ConfigError):
            bounds.bounds_report(1.0, 2.0, 0.2, 1e-6, delta=1.0)
