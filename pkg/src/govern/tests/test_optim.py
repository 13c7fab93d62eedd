"""Tests for the solvers in govern.optim."""

import numpy as np
import pytest

from govern.optim import (
    MAX_ITER,
    OPTIMAL,
    NlpProblem,
    QcqpProblem,
    QuadraticConstraint,
    QuadraticProgram,
    SolveReport,
    kkt_residual,
    solve_nlp,
    solve_qcqp,
    solve_qp,
)
from govern.optim.nlp import damped_bfgs


def _disk_qcqp():
    """``min |z - (2, 2)|^2`` over the disk of radius ``sqrt(2)``."""
    return QcqpProblem(
        H=2 * np.eye(2),
        g=[-4.0, -4.0],
        constraints=[QuadraticConstraint(P=2 * np.eye(2), q=np.zeros(2), c=-2.0)],
    )


def test_problem_validation():
    with pytest.raises(ValueError, match='symmetric'):
        QuadraticProgram(H=[[1.0, 1.0], [0.0, 1.0]], g=[0.0, 0.0])
    with pytest.raises(ValueError, match='Hessian has shape'):
        QuadraticProgram(H=np.eye(3), g=[0.0, 0.0])
    with pytest.raises(ValueError, match='right-hand side'):
        QuadraticProgram(H=np.eye(2), g=[0.0, 0.0], A=[[1.0, 1.0]], b=[1.0, 2.0])
    with pytest.raises(ValueError, match='does not match'):
        QcqpProblem(
            H=np.eye(2),
            g=[0.0, 0.0],
            constraints=[QuadraticConstraint(P=np.eye(3), q=np.zeros(3), c=0.0)],
        )


def test_unconstrained_qp():
    report = solve_qp(QuadraticProgram(H=np.diag([2.0, 4.0]), g=[-2.0, -4.0]))
    assert report.status == OPTIMAL
    np.testing.assert_allclose(report.z_star, [1.0, 1.0])


def test_inequality_qp():
    qp = QuadraticProgram(H=2 * np.eye(2), g=[-2.0, -4.0], A=[[1.0, 1.0]], b=[1.0])
    report = solve_qp(qp)
    assert report.ok
    np.testing.assert_allclose(report.z_star, [0.0, 1.0], atol=1e-6)
    assert report.objective == pytest.approx(-3.0, abs=1e-6)
    assert report.multipliers[0] == pytest.approx(2.0, abs=1e-6)
    assert kkt_residual(qp, report.z_star, report.multipliers) <= 1e-8


def test_box_qp():
    qp = QuadraticProgram(H=2 * np.eye(2), g=[-2.0, -4.0], lb=[-1.0, -1.0], ub=[0.5, np.inf])
    report = solve_qp(qp)
    assert report.ok
    np.testing.assert_allclose(report.z_star, [0.5, 2.0], atol=1e-6)
    # Rows: two lower bounds, then the single finite upper bound
    assert report.multipliers.size == 3
    assert report.multipliers[2] == pytest.approx(1.0, abs=1e-6)


def test_qcqp():
    report = solve_qcqp(_disk_qcqp())
    assert report.status == OPTIMAL
    np.testing.assert_allclose(report.z_star, [1.0, 1.0], atol=1e-6)
    assert report.multipliers[0] == pytest.approx(1.0, abs=1e-5)


def test_qcqp_warm_start():
    cold = solve_qcqp(_disk_qcqp())
    warm = solve_qcqp(_disk_qcqp(), warm=cold)
    assert warm.ok
    np.testing.assert_allclose(warm.z_star, cold.z_star, atol=1e-6)

    with pytest.raises(ValueError, match='Warm start has 3 entries'):
        solve_qcqp(_disk_qcqp(), warm=np.zeros(3))


def test_qcqp_iteration_cap():
    report = solve_qcqp(_disk_qcqp(), max_iter=1)
    assert report.status == MAX_ITER
    assert not report.ok


def test_damped_bfgs_stays_positive_definite():
    B = np.eye(2)
    updated = damped_bfgs(B, np.array([1.0, 0.0]), np.array([-1.0, 0.5]))
    assert np.all(np.linalg.eigvalsh(updated) > 0)
    np.testing.assert_allclose(updated, updated.T)


def test_rosenbrock():
    def rosenbrock(z):
        f = 100 * (z[1] - z[0] ** 2) ** 2 + (1 - z[0]) ** 2
        grad = np.array(
            [-400 * z[0] * (z[1] - z[0] ** 2) - 2 * (1 - z[0]), 200 * (z[1] - z[0] ** 2)]
        )
        return f, grad

    problem = NlpProblem(n=2, objective_fn=rosenbrock)
    report = solve_nlp(problem, [-1.2, 1.0], tol=1e-9, max_iter=500)
    assert report.status == OPTIMAL
    np.testing.assert_allclose(report.z_star, [1.0, 1.0], atol=1e-6)


def test_constrained_nlp():
    problem = NlpProblem(
        n=2,
        objective_fn=lambda z: (z[0] + z[1], np.ones(2)),
        constraints_fn=lambda z: ([z @ z - 2.0], [2 * z]),
    )
    report = solve_nlp(problem, [0.5, 0.0], tol=1e-8)
    assert report.ok
    np.testing.assert_allclose(report.z_star, [-1.0, -1.0], atol=1e-6)
    assert report.multipliers[0] == pytest.approx(0.5, abs=1e-5)


def _box_qp(rng, n=12, g_scale=1.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    H = Q @ np.diag(np.linspace(1.0, 5.0, n)) @ Q.T
    return QuadraticProgram(
        H=0.5 * (H + H.T),
        g=g_scale * rng.standard_normal(n),
        lb=np.full(n, -0.5),
        ub=np.full(n, 0.5),
    )


def _projected_gradient(qp, steps=2000):
    step = 1.0 / np.max(np.linalg.eigvalsh(qp.H))
    z = np.zeros(qp.n)
    for _ in range(steps):
        z = np.clip(z - step * (qp.H @ z + qp.g), qp.lb, qp.ub)
    return z


def test_box_qp_matches_projected_gradient(rng):
    for _ in range(5):
        qp = _box_qp(rng, g_scale=3.0)
        report = solve_qp(qp)
        assert report.status == OPTIMAL
        expected = _projected_gradient(qp)
        np.testing.assert_allclose(report.z_star, expected, atol=1e-8)
        assert report.objective == pytest.approx(qp.objective(expected)[0], abs=1e-10)


def test_active_rows_exact_despite_large_objective():
    """Complementarity is scaled by the objective; the returned point is still exact."""
    qp = QuadraticProgram(H=2 * np.eye(2), g=[-2e4, -4.0], A=[[0.0, 1.0]], b=[1.0])
    report = solve_qp(qp)
    assert report.status == OPTIMAL
    assert report.objective == pytest.approx(-1e8 - 3.0, rel=1e-12)
    np.testing.assert_allclose(report.z_star, [1e4, 1.0], rtol=0, atol=1e-9)
    assert report.multipliers[0] == pytest.approx(2.0, abs=1e-8)


def test_warm_start_saves_iterations(rng):
    qp = QuadraticProgram(
        H=2 * np.eye(4),
        g=[-2.0, -4.0, 1.0, 0.5],
        A=[[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 1.0]],
        b=[1.0, 0.2],
        lb=np.full(4, -2.0),
        ub=np.full(4, 2.0),
    )
    first = solve_qp(qp)
    perturbed = QuadraticProgram(
        H=qp.H, g=qp.g + 1e-4 * rng.standard_normal(4), A=qp.A, b=qp.b, lb=qp.lb, ub=qp.ub
    )
    cold = solve_qp(perturbed)
    warm = solve_qp(perturbed, warm=first)
    assert cold.status == warm.status == OPTIMAL
    assert warm.iterations <= cold.iterations
    np.testing.assert_allclose(warm.z_star, cold.z_star, atol=1e-8)


def test_repeated_solves_are_identical(rng):
    qp = _box_qp(rng)
    first, second = solve_qp(qp), solve_qp(qp)
    np.testing.assert_array_equal(first.z_star, second.z_star)
    np.testing.assert_array_equal(first.multipliers, second.multipliers)
    assert first.iterations == second.iterations

    problem = _disk_qcqp()
    a, b = solve_qcqp(problem), solve_qcqp(problem)
    np.testing.assert_array_equal(a.z_star, b.z_star)


def test_stalled_line_search_keeps_iterate(monkeypatch):
    """An ascent direction from the subproblem leaves the iterate where it was."""
    from govern.optim import nlp

    def uphill(sub, tol=1e-9):
        return SolveReport(np.ones(sub.n), 0.0, 0.0, 1, OPTIMAL, np.zeros(0), np.zeros(0))

    monkeypatch.setattr(nlp, 'solve_qp', uphill)
    problem = NlpProblem(n=1, objective_fn=lambda z: (float(z @ z), 2 * z))
    report = solve_nlp(problem, [1.0], tol=1e-10)
    assert report.status == MAX_ITER
    assert report.iterations == 0
    np.testing.assert_array_equal(report.z_star, [1.0])
    assert report.objective == 1.0
