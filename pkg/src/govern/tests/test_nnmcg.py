"""Tests for the network-guided, sensitivity-tightened governor."""

import numpy as np
import pytest

from govern import nnmcg
from govern.mcg import governor_cost, mcg_step
from govern.nnmcg import (
    CAP_REACHED,
    SUCCESS,
    NnmcgConfig,
    SensitivityGovernor,
    build_tightened_qcqp,
    nnmcg_step,
    soundness_gap,
    tune_mbar,
    zero_deviation_point,
)
from govern.optim import INFEASIBLE_NUMERICS, MAX_ITER, OPTIMAL, SolveReport
from govern.plant import equilibrium
from govern.sensitivity import (
    ContractError,
    nominal_rollout,
    sensitivity_bundle,
    upper_bound_trajectory,
)
from govern.sim import make_profile, run_closed_loop
from govern.tests.tests import constant_net


@pytest.fixture
def setup(dual_pendulum, short_weights, rng):
    x = dual_pendulum.sample_states(rng, 1)[0]
    V_nom = rng.uniform(-2, 2, size=short_weights.n_commands)
    bundle = sensitivity_bundle(dual_pendulum, x, V_nom)
    return bundle, V_nom


@pytest.mark.parametrize('past_inputs', [True, False])
def test_tightened_rows_match_bound(dual_pendulum, short_weights, setup, rng, past_inputs):
    bundle, V_nom = setup
    mbar = np.array([0.4, 1.5])
    problem = build_tightened_qcqp(
        bundle,
        mbar,
        V_nom,
        1.0,
        short_weights,
        dual_pendulum.input_interval,
        past_inputs=past_inputs,
    )
    n_v = short_weights.n_commands
    assert len(problem.constraints) == 2 * n_v
    assert problem.n == n_v + 2
    np.testing.assert_array_equal(problem.lb[n_v:], 0.0)

    V = rng.uniform(-3, 3, size=n_v)
    eps = np.array([0.2, 0.05])
    c, _ = problem.inequalities(np.r_[V, eps])
    upper = upper_bound_trajectory(bundle, mbar, V, V_nom, past_inputs=past_inputs)
    expected = (upper - eps).T.reshape(-1)
    np.testing.assert_allclose(c[: 2 * n_v], expected, atol=1e-10)


def test_zero_deviation_start_is_feasible(dual_pendulum, short_weights, setup):
    bundle, V_nom = setup
    problem = build_tightened_qcqp(
        bundle, [0.4, 1.5], V_nom, 1.0, short_weights, dual_pendulum.input_interval
    )
    start = zero_deviation_point(bundle)
    np.testing.assert_array_equal(start[: short_weights.n_commands], V_nom)
    c, _ = problem.inequalities(problem.clip(start))
    assert np.max(c) <= 1e-12


def test_contract_errors(dual_pendulum, short_weights, setup):
    bundle, V_nom = setup
    with pytest.raises(ContractError, match='curvature bounds'):
        build_tightened_qcqp(
            bundle, [0.4], V_nom, 1.0, short_weights, dual_pendulum.input_interval
        )
    with pytest.raises(ContractError, match='Horizon mismatch'):
        build_tightened_qcqp(
            bundle, [0.4, 1.5], V_nom[:-1], 1.0, short_weights, dual_pendulum.input_interval
        )
    with pytest.raises(ContractError, match='Network predicts 4 commands'):
        NnmcgConfig(short_weights, [0.1], constant_net(0.0, 4))
    with pytest.raises(ContractError, match='non-negative'):
        NnmcgConfig(short_weights, [-0.1], constant_net(0.0, short_weights.n_commands))


def test_idle_at_equilibrium(pendulum, weights):
    config = NnmcgConfig(weights, [0.1], constant_net(1.0, weights.n_commands))
    decision = nnmcg_step(pendulum, config, equilibrium(pendulum, 1.0), 1.0)
    assert decision.status == OPTIMAL
    assert decision.v_applied == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(decision.eps_star, 0.0, atol=1e-6)
    np.testing.assert_array_equal(decision.V_nom, 1.0)


def test_overreaching_guess_is_tightened(pendulum, weights):
    """A nominal sequence beyond the limit is pulled back to an admissible command."""
    v_max = pendulum.admissible_command
    config = NnmcgConfig(weights, [1.0], constant_net(3.0, weights.n_commands))
    decision = nnmcg_step(pendulum, config, pendulum.analytic_equilibrium(v_max), 3.0)
    assert decision.status != INFEASIBLE_NUMERICS
    assert decision.v_applied <= v_max + 1e-6
    np.testing.assert_array_equal(decision.V_nom, 3.0)


def test_linear_plant_without_remainder_matches_mcg(linear_plant, weights, rng):
    """With no remainder bound the tightened problem is the exact governor problem."""
    config = NnmcgConfig(weights, [0.0], constant_net(0.3, weights.n_commands))
    for _ in range(10):
        x = np.array([rng.uniform(-1.0, 0.9), rng.uniform(-0.2, 0.2)])
        r = rng.uniform(-2.0, 2.0)
        exact = mcg_step(linear_plant, weights, x, r, tol=1e-10)
        tightened = nnmcg_step(linear_plant, config, x, r)
        assert tightened.status == OPTIMAL
        np.testing.assert_allclose(tightened.V_star, exact.V_star, rtol=0, atol=1e-8)
        np.testing.assert_allclose(tightened.eps_star, exact.eps_star, rtol=0, atol=1e-8)


def test_idle_on_linear_plant_with_distant_guess(linear_plant, weights):
    config = NnmcgConfig(weights, [0.0], constant_net(-1.5, weights.n_commands))
    decision = nnmcg_step(linear_plant, config, [0.5, 0.0], 0.5)
    assert decision.status == OPTIMAL
    assert decision.v_applied == pytest.approx(0.5, abs=1e-8)
    np.testing.assert_allclose(decision.V_star, 0.5, rtol=0, atol=1e-8)
    np.testing.assert_allclose(decision.eps_star, 0.0, atol=1e-10)


def _failed_solve(problem, warm=None, tol=1e-8, max_iter=100):
    return SolveReport(np.zeros(0), np.nan, np.inf, 0, INFEASIBLE_NUMERICS)


def test_numerical_failure_holds(monkeypatch, pendulum, short_weights):
    monkeypatch.setattr(nnmcg, 'solve_qcqp', _failed_solve)
    config = NnmcgConfig(short_weights, [0.1], constant_net(0.5, short_weights.n_commands))
    x = equilibrium(pendulum, 0.0)

    held = nnmcg_step(pendulum, config, x, 1.0, hold=-0.25)
    assert held.held
    assert held.status == 'held'
    assert held.v_applied == -0.25

    # Without a previous command the nominal guess is applied
    fallback = nnmcg_step(pendulum, config, x, 1.0)
    assert not fallback.held
    assert fallback.status == INFEASIBLE_NUMERICS
    assert fallback.v_applied == pytest.approx(0.5)


def test_cold_retry_after_iteration_cap(monkeypatch, pendulum, short_weights):
    calls = []

    def capped_then_solved(problem, warm=None, tol=1e-8, max_iter=100):
        calls.append(warm)
        status = MAX_ITER if len(calls) == 1 else OPTIMAL
        return SolveReport(problem.clip(np.zeros(problem.n)), 0.0, 0.0, 1, status)

    monkeypatch.setattr(nnmcg, 'solve_qcqp', capped_then_solved)
    config = NnmcgConfig(short_weights, [0.1], constant_net(0.5, short_weights.n_commands))
    warm = SolveReport(np.zeros(7), 0.0, 0.0, 3, OPTIMAL)
    decision = nnmcg_step(pendulum, config, equilibrium(pendulum, 0.0), 1.0, warm=warm)

    assert decision.status == OPTIMAL
    assert len(calls) == 2
    assert isinstance(calls[0], SolveReport)
    assert isinstance(calls[1], np.ndarray)


def test_governor_keeps_multipliers(pendulum, short_weights):
    config = NnmcgConfig(short_weights, [0.1], constant_net(1.0, short_weights.n_commands))
    governor = SensitivityGovernor(pendulum, config)
    x = equilibrium(pendulum, 1.0)
    first = governor.decide(x, 1.5)
    assert governor._report is first.solve
    assert governor._last == first.v_applied

    governor.reset()
    assert governor._report is None
    assert governor._last is None


@pytest.fixture
def limit_profile():
    return make_profile('steps', total_steps=30, breakpoints=[(0, 3.0)])


def test_soundness_gap(pendulum, weights, limit_profile):
    net = constant_net(3.0, weights.n_commands)
    loose = NnmcgConfig(weights, [0.0], net)
    trace = run_closed_loop(
        pendulum, SensitivityGovernor(pendulum, loose), limit_profile, equilibrium(pendulum, 2.0)
    )
    assert soundness_gap(pendulum, trace, loose)[0] > 1e-6
    assert soundness_gap(pendulum, trace, loose.with_mbar([50.0]))[0] == 0.0


def test_tune_stops_when_sound(pendulum, weights, limit_profile):
    config = NnmcgConfig(weights, [10.0], constant_net(3.0, weights.n_commands))
    report, tuned = tune_mbar(pendulum, config, limit_profile, x0=equilibrium(pendulum, 2.0))
    assert report.status == SUCCESS
    assert report.iterations == 1
    assert report.mbar_final == [10.0]
    assert tuned is config
    assert report.to_dict()['profile_id'] == limit_profile.profile_id


def test_tune_cap(pendulum, weights, limit_profile):
    config = NnmcgConfig(weights, [0.0], constant_net(3.0, weights.n_commands))
    report, tuned = tune_mbar(
        pendulum, config, limit_profile, x0=equilibrium(pendulum, 2.0), max_iter=1
    )
    assert report.status == CAP_REACHED
    # Only the simulated bound is reported
    assert report.mbar_final == [0.0]
    assert report.mbar_history == [[0.0]]
    np.testing.assert_array_equal(tuned.mbar, [0.0])
    assert report.max_violation_history[0] > 1e-6
    assert 'additional data collection' in report.message

    with pytest.raises(ValueError, match='increment factor'):
        tune_mbar(pendulum, config, limit_profile, increment_factor=1.0)


@pytest.mark.integration
def test_tune_escalates_corrupted_net(pendulum, weights, limit_profile):
    config = NnmcgConfig(weights, [0.0], constant_net(3.0, weights.n_commands))
    report, tuned = tune_mbar(
        pendulum, config, limit_profile, x0=equilibrium(pendulum, 2.0), max_iter=20
    )
    assert report.status == SUCCESS
    assert report.iterations > 1
    assert report.max_violation_history[-1] <= 1e-6
    assert all(b >= a for a, b in zip(report.mbar_history, report.mbar_history[1:]))
    assert tuned.mbar[0] >= 1e-3


def test_realized_violation_per_output(monkeypatch, dual_pendulum, short_weights):
    from govern import sim

    trace = sim.SimulationTrace(
        governor='nn-mcg',
        t=np.arange(2),
        x=np.zeros((2, 2)),
        r=np.zeros(2),
        v=np.zeros(2),
        y=np.array([[0.2, -1.0], [-1.0, 0.1]]),
        eps=np.array([[0.0, 0.3], [0.5, 0.0]]),
        status=['optimal'] * 2,
        wall=np.zeros(2),
    )
    monkeypatch.setattr(sim, 'run_closed_loop', lambda *args, **kwargs: trace)
    monkeypatch.setattr(nnmcg, 'soundness_gap', lambda *args: np.zeros(2))

    config = NnmcgConfig(short_weights, [0.1, 0.1], constant_net(0.0, short_weights.n_commands))
    profile = make_profile('steps', total_steps=2, breakpoints=[(0, 0.0)])
    report, _ = tune_mbar(dual_pendulum, config, profile)
    assert report.status == SUCCESS
    np.testing.assert_allclose(report.realized_violation, [0.2, 0.1])


@pytest.mark.slow
def test_calibrated_bound_dominates_replay(pendulum, weights, limit_profile):
    """Every recorded decision's bound lies above the plant rolled out under it."""
    config = NnmcgConfig(weights, [10.0], constant_net(3.0, weights.n_commands))
    x0 = equilibrium(pendulum, 2.0)
    report, tuned = tune_mbar(pendulum, config, limit_profile, x0=x0)
    assert report.status == SUCCESS

    trace = run_closed_loop(pendulum, SensitivityGovernor(pendulum, tuned), limit_profile, x0)
    for t in range(trace.n_steps):
        assert trace.status[t] != 'held'
        bundle = sensitivity_bundle(pendulum, trace.x[t], trace.V_nom[t])
        upper = upper_bound_trajectory(bundle, tuned.mbar, trace.V_star[t], trace.V_nom[t])
        _, y_true = nominal_rollout(pendulum, trace.x[t], trace.V_star[t])
        assert np.all(y_true <= upper + 1e-6)


@pytest.mark.slow
def test_tightening_never_beats_exact_governor(pendulum, short_weights, rng):
    """The tightened feasible set lies inside the exact one, so its cost is never lower."""
    config = NnmcgConfig(short_weights, [50.0], constant_net(1.0, short_weights.n_commands))
    for _ in range(100):
        x = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-1.0, 1.0)])
        r = rng.uniform(-3.0, 3.0)
        exact = mcg_step(pendulum, short_weights, x, r, tol=1e-8)
        tightened = nnmcg_step(pendulum, config, x, r)
        assert exact.status == tightened.status == OPTIMAL

        exact_cost = governor_cost(short_weights, r, exact.V_star, exact.eps_star)
        cost = governor_cost(short_weights, r, tightened.V_star, tightened.eps_star)
        assert cost >= exact_cost - 1e-6 * max(1.0, abs(exact_cost))
