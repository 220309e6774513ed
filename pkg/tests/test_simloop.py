"""Sample-and-hold simulation loop: traces, metrics, noise, pulses, sweeps.

The key guarantees checked here: executions are strictly ordered with
exact inter-execution bookkeeping, the input is held constant between
executions, the error resets at each execution, noise-free runs satisfy
both Lyapunov decrease tests, noisy runs measurably do not (the policy
budgets no margin for measurement noise), an actuator pulse shortens the
inter-execution times and the loop recovers afterwards, and boundary
sweeps average per-policy metrics reproducibly.
"""

import math

import numpy as np
import pytest

from selftrig.casestudies import case_study, jet_engine, rigid_body
from selftrig.errors import ConfigError
from selftrig.fields import ErrorExtendedSystem
from selftrig.simloop import (
    DisturbancePulse,
    Metrics,
    NoiseModel,
    SimConfig,
    boundary_states,
    metrics,
    run,
    standard_policies,
    sweep,
)
from selftrig.triggers import EventOracle, Periodic, next_time


@pytest.fixture(scope="module")
def jet():
    return jet_engine()


@pytest.fixture(scope="module")
def rigid():
    return rigid_body()


@pytest.fixture(scope="module")
def jet_self(jet):
    return standard_policies(jet)["self-trig"]


@pytest.fixture(scope="module")
def jet_trace(jet, jet_self):
    return run(SimConfig(system="jet-engine", policy=jet_self))


@pytest.fixture(scope="module")
def rigid_trace(rigid):
    return run(
        SimConfig(system="rigid-body", policy=standard_policies(rigid)["self-trig"])
    )


class TestConfigValidation:
    def test_t_end_must_be_positive(self, jet_self):
        with pytest.raises(ConfigError):
            SimConfig(system="jet-engine", policy=jet_self, t_end=0.0)
        with pytest.raises(ConfigError):
            SimConfig(system="jet-engine", policy=jet_self, t_end=-1.0)

    def test_noise_fraction_range(self):
        with pytest.raises(ConfigError):
            NoiseModel(enabled=True, fraction=1.0)
        with pytest.raises(ConfigError):
            NoiseModel(enabled=True, fraction=-0.1)
        assert NoiseModel(enabled=True, fraction=0.0).fraction == 0.0

    def test_disturbance_validation(self):
        with pytest.raises(ConfigError):
            DisturbancePulse(enabled=True, onset=-0.1)
        with pytest.raises(ConfigError):
            DisturbancePulse(enabled=True, duration=0.0)

    def test_misc_bounds(self, jet_self):
        for bad in (
            dict(dense_points=1),
            dict(escape_norm=0.0),
            dict(equilibrium_tol=-1.0),
            dict(max_executions=0),
        ):
            with pytest.raises(ConfigError):
                SimConfig(system="jet-engine", policy=jet_self, **bad)

    def test_x0_shape_and_region(self, jet_self):
        with pytest.raises(ConfigError):
            run(SimConfig(system="jet-engine", policy=jet_self, x0=(1.0, 2.0, 3.0)))
        with pytest.raises(ConfigError):
            run(SimConfig(system="jet-engine", policy=jet_self, x0=(5.4, 5.4)))

    def test_boundary_start_is_accepted(self, jet, jet_self):
        tr = run(
            SimConfig(
                system="jet-engine", policy=jet_self, x0=(5.4, 0.0), t_end=0.05
            )
        )
        assert tr.n_executions >= 1

    def test_unknown_system_rejected(self, jet_self):
        with pytest.raises(ConfigError):
            run(SimConfig(system="no-such-loop", policy=jet_self))


class TestRunJet:
    def test_times_strictly_increasing(self, jet_trace):
        assert np.all(np.diff(jet_trace.times) > 0.0)

    def test_taus_are_time_differences(self, jet_trace):
        assert np.allclose(
            jet_trace.taus,
            jet_trace.planned_taus[: len(jet_trace.taus)],
            rtol=1e-12,
            atol=0,
        )

    def test_input_held_constant_between_executions(self, jet_trace):
        seg = np.searchsorted(jet_trace.times, jet_trace.dense_times, side="right") - 1
        assert np.array_equal(jet_trace.dense_inputs, jet_trace.inputs[seg])

    def test_error_resets_at_executions(self, jet_trace):
        # Noise-free: the held measurement IS the sampled state.
        assert np.array_equal(jet_trace.measurements, jet_trace.states)

    def test_converges(self, jet_trace):
        x0n = np.linalg.norm(jet_trace.states[0])
        assert np.linalg.norm(jet_trace.final_state) < 0.05 * x0n
        assert 20 <= jet_trace.n_executions <= 90

    def test_dense_grid_shape(self, jet_trace):
        t = jet_trace.dense_times
        assert t[0] == 0.0 and t[-1] == pytest.approx(3.0, abs=0)
        assert len(t) == 2000
        assert np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9)

    def test_dense_v_matches_certificate(self, jet, jet_trace):
        for j in (0, 137, 999, 1999):
            assert jet_trace.dense_v[j] == pytest.approx(
                jet.v(jet_trace.dense_states[j]), rel=1e-12
            )

    def test_clean_run_has_no_events(self, jet_trace):
        assert jet_trace.events == ()
        assert not jet_trace.diverged

    def test_determinism(self, jet_self, jet_trace):
        again = run(SimConfig(system="jet-engine", policy=jet_self))
        assert metrics(again) == metrics(jet_trace)
        assert np.array_equal(again.states, jet_trace.states)
        assert np.array_equal(again.dense_states, jet_trace.dense_states)

    def test_noise_free_run_satisfies_both_lyapunov_tests(self, jet_trace):
        m = metrics(jet_trace)
        assert m.decrease_violations == 0
        assert m.bound_violations == 0
        assert m.bound_checked == len(jet_trace.dense_times)

    def test_matches_periodic_behavior(self, jet, jet_trace):
        # Sampling scheme barely changes where the state ends up.
        per = run(
            SimConfig(system="jet-engine", policy=standard_policies(jet)["periodic"])
        )
        a = np.linalg.norm(jet_trace.final_state)
        b = np.linalg.norm(per.final_state)
        assert abs(a - b) / b < 0.2

    @pytest.mark.xfail(
        strict=True,
        reason="the printed loop does not decay that fast: even the "
        "continuous (unsampled) closed loop reaches only ~4.1e-2 of the "
        "start norm after 3 s from the benchmark start; sampled runs "
        "measure ~3.6e-2 (self-triggered) and ~4.1e-2 (periodic)",
    )
    def test_two_decades_of_decay_in_three_seconds(self, jet_trace):
        x0n = np.linalg.norm(jet_trace.states[0])
        final = np.linalg.norm(jet_trace.final_state)
        print(f"\n|x(3)| / |x0| = {final / x0n:.6f} (needed < 1e-2)")
        assert final < 1e-2 * x0n


class TestRunEdges:
    def test_origin_start_executes_once(self, jet_self):
        tr = run(SimConfig(system="jet-engine", policy=jet_self, x0=(0.0, 0.0)))
        assert tr.n_executions == 1
        assert np.all(tr.dense_states == 0.0)
        assert np.linalg.norm(tr.final_state) == 0.0
        assert any(label == "equilibrium-stop" for _, label in tr.events)

    def test_max_executions_guard(self, jet):
        tr = run(
            SimConfig(
                system="jet-engine",
                policy=standard_policies(jet)["periodic"],
                max_executions=10,
            )
        )
        assert tr.n_executions == 10
        assert any(label == "max-executions-reached" for _, label in tr.events)

    def test_divergence_is_recorded_not_raised(self, jet_self):
        # A violent pulse drives the norm past the escape threshold;
        # the run is marked diverged instead of raising.  (The loop
        # itself always recovers from this pulse -- it peaks near
        # |x| ~ 640 -- so the threshold is set below the peak.)
        cfg = SimConfig(
            system="jet-engine",
            policy=jet_self,
            disturbance=DisturbancePulse(
                enabled=True, onset=0.1, amplitude=-1e5, duration=0.5
            ),
            escape_norm=500.0,
        )
        tr = run(cfg)
        assert tr.diverged
        assert metrics(tr).diverged
        assert any(label == "diverged" for _, label in tr.events)
        assert tr.final_time < 3.0


class TestNoise:
    def test_determinism_per_seed(self, jet_self):
        cfg = SimConfig(
            system="jet-engine",
            policy=jet_self,
            noise=NoiseModel(enabled=True, fraction=0.02, seed=7),
        )
        a, b = run(cfg), run(cfg)
        assert metrics(a) == metrics(b)
        assert np.array_equal(a.measurements, b.measurements)

    def test_seeds_differ(self, jet_self):
        base = dict(system="jet-engine", policy=jet_self)
        a = run(SimConfig(noise=NoiseModel(enabled=True, seed=7), **base))
        b = run(SimConfig(noise=NoiseModel(enabled=True, seed=8), **base))
        assert not np.array_equal(a.measurements, b.measurements)

    def test_noise_power_tracks_signal_power(self, jet_self):
        tr = run(
            SimConfig(
                system="jet-engine",
                policy=jet_self,
                noise=NoiseModel(enabled=True, fraction=0.02, seed=7),
            )
        )
        noise = tr.measurements - tr.states
        ratios = []
        power = 0.0
        for i in range(tr.n_executions):
            power += float(np.dot(tr.states[i], tr.states[i]))
            ratios.append(float(np.dot(noise[i], noise[i])) / (power / (i + 1)))
        assert 0.008 <= np.mean(ratios) <= 0.032

    def test_noise_measurably_breaks_the_noise_free_guarantees(self, jet_self):
        # The policy budgets the full error allowance for drift from zero;
        # a noisy measurement starts the error off nonzero, so some dense
        # points exceed the at-trigger ceiling and the sampled V need not
        # fall every time.  Counted honestly, not hidden.
        tr = run(
            SimConfig(
                system="jet-engine",
                policy=jet_self,
                noise=NoiseModel(enabled=True, fraction=0.02, seed=7),
            )
        )
        m = metrics(tr)
        assert m.decrease_violations + m.bound_violations > 0


@pytest.fixture(scope="module")
def pulsed(jet_self):
    return run(
        SimConfig(
            system="jet-engine",
            policy=jet_self,
            disturbance=DisturbancePulse(
                enabled=True, onset=0.7, amplitude=8.0, duration=0.3
            ),
        )
    )


class TestDisturbance:
    def test_execution_times_drop_then_recover(self, pulsed):
        ts, taus = pulsed.times[:-1], pulsed.taus
        last_before = taus[np.where(ts < 0.7)[0][-1]]
        during = taus[(ts >= 0.7) & (ts < 1.0)]
        late = taus[ts >= 2.5]
        assert during.min() < 0.5 * last_before
        assert late.mean() > 3.0 * during.min()

    def test_pulse_actually_perturbs_the_state(self, jet_self, pulsed):
        base = run(SimConfig(system="jet-engine", policy=jet_self))
        j = np.searchsorted(pulsed.dense_times, 1.0)
        disturbed = np.linalg.norm(pulsed.dense_states[j])
        nominal = np.linalg.norm(base.dense_states[j])
        assert disturbed > 2.0 * nominal

    def test_pulse_events_logged(self, pulsed):
        labels = dict((label, t) for t, label in pulsed.events)
        assert labels["disturbance-on"] == pytest.approx(0.7)
        assert labels["disturbance-off"] == pytest.approx(1.0)

    def test_pushed_rate_violations_are_counted(self, pulsed):
        # While the pulse acts, the actual Lyapunov rate includes the
        # push and exceeds the certificate ceiling inside the region.
        assert metrics(pulsed).bound_violations > 0


class TestMetricsBasics:
    def test_counts_consistent_with_trace(self, jet_trace):
        assert metrics(jet_trace).executions == len(jet_trace.times)

    def test_periodic_count_arithmetic(self, jet):
        tr = run(SimConfig(system="jet-engine", policy=Periodic(7.63e-3)))
        m = metrics(tr)
        assert m.executions == 394
        assert abs(m.executions - 3.0 / 7.63e-3) <= 1.0
        assert m.tau_max - m.tau_min < 1e-12
        assert m.tau_mean == pytest.approx(7.63e-3, rel=1e-9)

    def test_origin_run_metrics(self, jet_self):
        m = metrics(
            run(SimConfig(system="jet-engine", policy=jet_self, x0=(0.0, 0.0)))
        )
        assert m.executions == 1
        assert math.isnan(m.tau_min) and math.isnan(m.tau_mean)
        assert m.final_norm == 0.0
        assert m.v_ratio == 0.0
        assert m.lyapunov_violations == 0

    def test_tau_stats_ordered(self, jet_trace):
        m = metrics(jet_trace)
        assert m.tau_min <= m.tau_mean <= m.tau_max
        assert m.v_ratio < 0.01


class TestRigidRuns:
    def test_self_trigger_execution_count_pinned(self, rigid_trace):
        assert rigid_trace.n_executions == 12889

    def test_lyapunov_tests_clean_inside_region(self, rigid_trace):
        m = metrics(rigid_trace)
        assert m.decrease_violations == 0
        assert m.bound_violations == 0

    def test_transient_leaves_the_operation_ball(self, rigid_trace):
        # From the benchmark start the loop rides the x2 ~ x3^2 valley of
        # V out to |x| ~ 34 before contracting: V falls monotonically
        # (previous test) but the ball is not invariant, so the rate
        # ceiling is only checked on the dense points inside the region.
        peak = np.linalg.norm(rigid_trace.dense_states, axis=1).max()
        assert 25.0 < peak < 40.0
        m = metrics(rigid_trace)
        assert m.bound_checked < len(rigid_trace.dense_times)
        assert m.bound_checked >= 1900

    def test_periodic_short_run(self, rigid):
        tr = run(
            SimConfig(
                system="rigid-body",
                policy=standard_policies(rigid)["periodic"],
                t_end=0.05,
            )
        )
        m = metrics(tr)
        assert m.executions == math.floor(0.05 / 4.5e-5) + 1
        assert m.tau_max - m.tau_min < 1e-15
        assert m.tau_mean == pytest.approx(4.5e-5, rel=1e-12)


@pytest.fixture(scope="module")
def oracle_trace(jet):
    return run(
        SimConfig(
            system="jet-engine",
            policy=EventOracle(c=jet.certificate.c),
            t_end=1.0,
        )
    )


class TestTriggerSafety:
    def test_error_stays_under_threshold(self, jet, oracle_trace):
        c = jet.certificate.c
        e = oracle_trace.dense_measurements - oracle_trace.dense_states
        slack = np.linalg.norm(e, axis=1) - c * np.linalg.norm(
            oracle_trace.dense_states, axis=1
        )
        assert slack.max() <= 1e-6

    def test_oracle_waits_at_least_as_long_as_the_policy(
        self, jet, jet_self, oracle_trace
    ):
        system = ErrorExtendedSystem(jet.closed_loop)
        for x, tau_oracle in zip(oracle_trace.states, oracle_trace.planned_taus):
            assert tau_oracle >= next_time(jet_self, system, x) - 1e-9

    def test_oracle_run_is_clean(self, oracle_trace):
        m = metrics(oracle_trace)
        assert m.decrease_violations == 0
        assert m.bound_violations == 0


class TestSweep:
    def test_boundary_states_planar(self, jet):
        ics = boundary_states(jet, 12)
        assert ics.shape == (12, 2)
        assert np.allclose(np.linalg.norm(ics, axis=1), 5.4, rtol=1e-12)
        angles = np.sort(np.arctan2(ics[:, 1], ics[:, 0]))
        assert np.allclose(np.diff(angles), 2 * np.pi / 12, rtol=1e-9)

    def test_boundary_states_spherical(self, rigid):
        ics = boundary_states(rigid, 50)
        assert ics.shape == (50, 3)
        assert np.allclose(np.linalg.norm(ics, axis=1), 15.0, rtol=1e-12)
        d2 = np.sum((ics[:, None, :] - ics[None, :, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        nearest = np.sqrt(d2.min())
        # Even spread: nearest neighbors no closer than half the
        # equal-area spacing sqrt(4 pi R^2 / n).
        assert nearest > 0.5 * math.sqrt(4 * math.pi / 50) * 15.0

    def test_boundary_states_validation(self, jet):
        with pytest.raises(ConfigError):
            boundary_states(jet, 0)

    def test_single_ic_sweep_equals_single_run(self, jet, jet_self):
        sw = sweep("jet-engine", {"self-trig": jet_self}, 1, t_end=1.0)
        direct = metrics(
            run(
                SimConfig(
                    system="jet-engine", policy=jet_self, x0=(5.4, 0.0), t_end=1.0
                )
            )
        )
        row = sw.row("self-trig")
        assert row.mean_executions == direct.executions
        assert row.per_ic[0] == direct

    def test_jet_sweep_counts_and_cleanliness(self, jet):
        sw = sweep("jet-engine", standard_policies(jet), 8, t_end=3.0)
        per, slf = sw.row("periodic"), sw.row("self-trig")
        assert per.mean_executions == 430.0
        assert 40 <= slf.mean_executions <= 60
        assert per.mean_executions / slf.mean_executions > 5.0
        for row in sw.rows:
            assert row.decrease_violations == 0
            assert row.bound_violations == 0
            assert row.diverged_runs == 0

    def test_sweep_deterministic_and_parallel_equal(self, jet):
        pols = standard_policies(jet)
        a = sweep("jet-engine", pols, 4, t_end=1.0)
        b = sweep("jet-engine", pols, 4, t_end=1.0, jobs=3)
        assert a.rows == b.rows
        assert np.array_equal(a.initial_conditions, b.initial_conditions)

    def test_unknown_row_label(self, jet, jet_self):
        sw = sweep("jet-engine", {"self-trig": jet_self}, 1, t_end=0.5)
        with pytest.raises(KeyError):
            sw.row("periodic")

    def test_table_renders(self, jet):
        sw = sweep("jet-engine", standard_policies(jet), 2, t_end=1.0)
        text = sw.table()
        assert "self-trig" in text and "periodic" in text
        assert len(text.splitlines()) == 3
