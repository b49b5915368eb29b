import numpy as np
import pytest

from conftest import constant_coeffs, random_heterogeneous
from vhrd.dynamics import (Integrator, box_bound, classify, max_stable_dt, measure_decay_rate, run_limit,
                           run_logistic, run_until_steady, step_full, step_limit, step_logistic,
                           verify_logistic_reduction)
from vhrd.equilibria import compute_endemic, compute_vhat, enumerate_equilibria
from vhrd.errors import StepRejected
from vhrd.grid import Bump, build_grid, field_from_profile
from vhrd.linalg import cooperative_principal_eigenvalue, principal_eigenvalue
from vhrd.ode import OdeParams, OdeState, logistic_closed_form, ode_run
from vhrd.state import SimState


def bump(grid, amp=0.5, center=0.3):
    return field_from_profile(grid, Bump(0.0, amp, center, 0.1)).values


class TestSteps:
    def test_zero_stays_zero(self, grid51):
        s = step_full(SimState.zeros(51), constant_coeffs(grid51), 0.05)
        assert not s.h_i.any() and not s.v_u.any() and not s.v_i.any()

    def test_e1_invariant(self, grid51):
        c = random_heterogeneous(grid51, np.random.default_rng(1))
        vhat = compute_vhat(c.delta2, c.beta, c.mu).values
        e1 = SimState(np.zeros(51), vhat, np.zeros(51))
        integ = Integrator(c, 0.05)
        s = e1
        for _ in range(20):
            s = integ.step_full(s)
            assert s.distance(e1) < 1e-10

    def test_e2_invariant_full_and_limit(self):
        g = build_grid(1, 41)
        c = random_heterogeneous(g, np.random.default_rng(104)).scaled("h_u", 8.0)
        vhat = compute_vhat(c.delta2, c.beta, c.mu)
        ee = compute_endemic(c, vhat)
        e2 = SimState(ee.h_i.values, ee.v_u.values, ee.v_i.values)
        dt = 0.5 * max_stable_dt(c, box_bound(c, vhat.values))
        assert step_full(e2, c, dt).distance(e2) < 1e-8
        h, vi = step_limit((ee.h_i.values, ee.v_i.values), c, vhat.values, dt)
        assert np.abs(h - ee.h_i.values).max() < 1e-8 and np.abs(vi - ee.v_i.values).max() < 1e-8

    def test_limit_zero(self, grid51):
        h, v = step_limit((np.zeros(51), np.zeros(51)), constant_coeffs(grid51), np.ones(51), 0.1)
        assert not h.any() and not v.any()

    def test_logistic_fixed_points(self, grid51):
        c = constant_coeffs(grid51, beta=2.0)
        assert np.abs(step_logistic(np.full(51, 2.0), c, 0.1) - 2.0).max() < 1e-13
        assert not step_logistic(np.zeros(51), c, 0.1).any()

    def test_logistic_closed_form(self):
        g = build_grid(1, 5)
        c = constant_coeffs(g)
        rec = run_logistic(np.full(5, 0.1), c, 5e-4, 5.0, sample_every=1000)
        p = OdeParams(1.0, 1.0, 0.5, 1.0, 1.0, 4.0)
        assert rec.final.t == pytest.approx(5.0)
        assert np.abs(rec.final.v_u - logistic_closed_form(0.1, p, 5.0)).max() < 1e-5

    def test_constant_data_follows_ode(self):
        g = build_grid(1, 5)
        c = constant_coeffs(g)
        p = OdeParams(1.0, 1.0, 0.5, 1.0, 1.0, 4.0)
        traj = ode_run(OdeState(0.3, 1.0, 0.1), p, 0.01, 10.0)
        integ = Integrator(c, 1e-3)
        s = SimState(np.full(5, 0.3), np.full(5, 1.0), np.full(5, 0.1))
        worst = 0.0
        for row in traj.states[1:]:
            for _ in range(10):
                s = integ.step_full(s)
            worst = max(worst, max(np.abs(a - b).max() for a, b in zip(s.fields(), row)))
        assert worst < 1e-4

    def test_rejects_oversized_step(self, grid51):
        c = constant_coeffs(grid51, mu=5.0)
        state = SimState(np.full(51, 5.0), np.full(51, 5.0), np.full(51, 1.0))
        with pytest.raises(StepRejected) as info:
            step_full(state, c, 10.0)
        assert 0 < info.value.suggested_dt < 10.0

    def test_bad_dt(self, grid51):
        with pytest.raises(ValueError):
            Integrator(constant_coeffs(grid51), 0.0)


class TestPositivityAndOrder:
    def test_positivity_along_run(self, rng):
        g = build_grid(1, 61)
        c = random_heterogeneous(g, rng)
        eqs = enumerate_equilibria(c)
        vhat = eqs.vhat.values
        integ = Integrator(c, max_stable_dt(c, box_bound(c, vhat)))
        s = SimState(bump(g), rng.uniform(0, 2, 61), bump(g, 0.1, 0.7))
        for _ in range(400):
            s = integ.step_full(s)
            assert s.is_nonnegative()

    def test_limit_ordering(self, rng):
        g = build_grid(1, 61)
        c = random_heterogeneous(g, rng).scaled("h_u", 8.0)
        vhat = compute_vhat(c.delta2, c.beta, c.mu).values
        integ = Integrator(c, max_stable_dt(c, box_bound(c, vhat)), vhat)
        h_lo, v_lo = 0.5 * bump(g), 0.2 * vhat * rng.uniform(0, 1, 61)
        h_hi, v_hi = h_lo + rng.uniform(0, 1, 61), np.minimum(v_lo + 0.3 * vhat, vhat)
        for _ in range(300):
            h_lo, v_lo = integ.step_limit(h_lo, v_lo)
            h_hi, v_hi = integ.step_limit(h_hi, v_hi)
            assert np.all(h_lo <= h_hi) and np.all(v_lo <= v_hi)

    def test_limit_run_to_ee(self, grid51):
        c = constant_coeffs(grid51)
        rec = run_limit(bump(grid51), np.zeros(51), c, np.ones(51), 0.05, 150.0, sample_every=100)
        assert np.abs(rec.final.h_i - 2.0).max() < 1e-6 and np.abs(rec.final.v_i - 0.5).max() < 1e-6


class TestRuns:
    def test_below_threshold(self, grid51):
        c = constant_coeffs(grid51, h_u=1.0)
        rec, verdict = run_until_steady(SimState(bump(grid51), np.ones(51), np.zeros(51)), c, horizon=200)
        assert verdict == "E1" and rec.settled
        assert np.abs(rec.final.h_i).max() + np.abs(rec.final.v_i).max() < 1e-6

    def test_above_threshold(self, grid51):
        c = constant_coeffs(grid51)
        eqs = enumerate_equilibria(c)
        rec, verdict = run_until_steady(SimState(bump(grid51), np.ones(51), np.zeros(51)), c,
                                        horizon=200, equilibria=eqs)
        assert verdict == "E2"
        assert rec.final.distance(eqs.e2) < 1e-4

    def test_no_vectors_goes_to_e0(self, grid51):
        c = constant_coeffs(grid51)
        _, verdict = run_until_steady(SimState(bump(grid51), np.zeros(51), np.zeros(51)), c, horizon=200)
        assert verdict == "E0"

    def test_short_horizon_unsettled(self, grid51):
        c = constant_coeffs(grid51)
        rec, verdict = run_until_steady(SimState(bump(grid51), np.ones(51), np.zeros(51)), c, horizon=1.0)
        assert verdict == "unsettled" and not rec.settled

    def test_classify(self, grid51):
        eqs = enumerate_equilibria(constant_coeffs(grid51))
        assert classify(eqs.e2, eqs, 1e-12) == ("E2", 0.0)

    def test_record_columns(self, grid51):
        c = constant_coeffs(grid51)
        rec, _ = run_until_steady(SimState(bump(grid51), np.ones(51), np.zeros(51)), c, horizon=5.0, sample_every=10)
        rows = list(rec.rows())
        assert len(rows[0]) == len(rec.COLUMNS)
        assert rec.times[0] == 0.0 and rec.times == sorted(rec.times)
        with pytest.raises(ValueError):
            rec.column("nope")

    def test_negative_initial(self, grid51):
        with pytest.raises(ValueError):
            run_until_steady(SimState(-np.ones(51), np.ones(51), np.zeros(51)), constant_coeffs(grid51), horizon=1)


class TestLogisticReduction:
    def _record(self, grid, c, h0, v_u0, v_i0):
        init = SimState(h0, v_u0, v_i0)
        rec, _ = run_until_steady(init, c, dt=0.02, horizon=30.0, sample_every=25, keep_snapshots=True)
        return rec, init

    def test_deviation_small(self, rng):
        g = build_grid(1, 61)
        c = random_heterogeneous(g, rng)
        rec, init = self._record(g, c, bump(g), rng.uniform(0, 2, 61), bump(g, 0.2, 0.6))
        assert verify_logistic_reduction(rec, c, init) <= 1e-8

    def test_zero_vectors(self, grid51):
        c = constant_coeffs(grid51)
        rec, init = self._record(grid51, c, bump(grid51), np.zeros(51), np.zeros(51))
        assert verify_logistic_reduction(rec, c, init) == 0.0

    def test_independent_of_hosts(self, grid51):
        c = random_heterogeneous(grid51, np.random.default_rng(9))
        v_u = np.linspace(0.2, 1.5, 51)
        for h0 in (bump(grid51), 3 * bump(grid51, center=0.8)):
            rec, init = self._record(grid51, c, h0, v_u, np.zeros(51))
            assert verify_logistic_reduction(rec, c, init) <= 1e-8

    def test_requires_snapshots(self, grid51):
        c = constant_coeffs(grid51)
        rec, _ = run_until_steady(SimState.zeros(51), c, horizon=1.0)
        with pytest.raises(ValueError):
            verify_logistic_reduction(rec, c, SimState.zeros(51))


class TestDecayRates:
    def test_logistic_rate(self, grid51):
        c = constant_coeffs(grid51)
        vhat = np.ones(51)
        rec = run_logistic(1.0 + 0.05 * np.cos(np.pi * grid51.coordinates[:, 0]) ** 2, c, 0.01, 8.0,
                           vhat=vhat, sample_every=10)
        rate = measure_decay_rate(rec, "v_dev", (2.0, 8.0))
        kappa1 = principal_eigenvalue(c.delta2, c.beta.values - 2 * c.mu.values * vhat).value
        assert abs(rate + abs(kappa1)) <= 0.1 * abs(kappa1)

    def test_subthreshold_rate_matches_kappa0(self, grid51):
        c = constant_coeffs(grid51, h_u=1.0)
        eqs = enumerate_equilibria(c)
        rec, _ = run_until_steady(SimState(bump(grid51), np.ones(51), np.zeros(51)), c, dt=0.01,
                                  horizon=40.0, settle_tol=1e-14, equilibria=eqs, sample_every=10)
        rate = measure_decay_rate(rec, "infected", (20.0, 40.0))
        kappa0 = cooperative_principal_eigenvalue(c, eqs.vhat).value
        assert kappa0 < 0 and rate < 0
        assert abs(rate - kappa0) <= 0.15 * abs(kappa0)

    def test_rejects_growth(self, grid51):
        c = constant_coeffs(grid51)
        rec = run_logistic(np.full(51, 0.1), c, 0.01, 2.0, sample_every=10)
        with pytest.raises(ValueError):
            measure_decay_rate(rec, "v_u", (0.0, 2.0))
