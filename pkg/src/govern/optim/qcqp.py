# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
#
# Copyright The govern developers
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
"""
Dense primal-dual interior point method for convex QCQPs.

The inequalities ``c(z) <= 0`` are turned into ``c(z) + s = 0`` with ``s > 0``; each
iteration takes a Mehrotra predictor-corrector Newton step on the perturbed KKT system,
reduced to the primal variables::

    (H + sum lambda_i P_i + J' W J) dz = -r_d - J' (W r_p - r_c / s),   W = lambda / s

A QP is the special case with no quadratic rows, so :func:`govern.optim.qp.solve_qp`
runs through the same loop.

Once the scaled KKT residual is below tolerance the iterate is polished: the constraints
whose multiplier exceeds their slack are held as equalities and the resulting KKT system
is solved by Newton iterations, which removes the O(sqrt(mu)) error the barrier leaves on
weakly active rows.
"""

import logging

import numpy as np
from scipy import linalg

from govern.optim.kkt import kkt_residual
from govern.optim.problems import (
    INFEASIBLE_NUMERICS,
    MAX_ITER,
    OPTIMAL,
    QcqpProblem,
    SolveReport,
)

LOGGER = logging.getLogger('govern.optim')

_BOUNDARY_FRACTION = 0.99
_WARM_FLOOR = 1e-4
_POLISH_ROUNDS = 4
_POLISH_NEWTON = 6
_POLISH_FEASIBILITY = 1e-10


def _max_step(v, dv):
    """Largest ``alpha <= 1`` keeping ``v + alpha * dv >= 0``."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _factorize(K):
    try:
        factor = linalg.cho_factor(K, check_finite=False)
    except linalg.LinAlgError:
        return lambda rhs: linalg.lstsq(K, rhs, check_finite=False)[0]
    return lambda rhs: linalg.cho_solve(factor, rhs, check_finite=False)


def _starting_point(problem, warm):
    """Primal start and, when ``warm`` is a report, its slacks and multipliers."""
    z0, s0, lam0 = np.zeros(problem.n), None, None
    if isinstance(warm, SolveReport):
        z0 = np.asarray(warm.z_star, dtype=float)
        s0, lam0 = warm.slacks, warm.multipliers
    elif warm is not None:
        z0 = np.asarray(warm, dtype=float).reshape(-1)
    if z0.size != problem.n:
        raise ValueError(f'Warm start has {z0.size} entries, problem has {problem.n}.')

    z0 = problem.clip(z0)
    c0, _ = problem.inequalities(z0)
    if s0 is not None and lam0 is not None and s0.size == c0.size == lam0.size:
        return z0, np.maximum(s0, _WARM_FLOOR), np.maximum(lam0, _WARM_FLOOR)
    return z0, np.maximum(-c0, 1.0), np.ones(c0.size)


def _solve_scaled(K, rhs):
    """Least-squares solve of ``K x = rhs`` after symmetric row/column equilibration."""
    d = 1.0 / np.sqrt(np.maximum(np.max(np.abs(K), axis=1), np.finfo(float).tiny))
    y = linalg.lstsq(d[:, None] * K * d[None, :], d * rhs, check_finite=False)[0]
    return d * y


def _newton_on_active(problem, z, active, lam):
    """Stationary point of the Lagrangian with the ``active`` rows held at zero."""
    n, m_a = problem.n, int(np.count_nonzero(active))
    lam = np.where(active, lam, 0.0)
    for _ in range(_POLISH_NEWTON):
        _, grad = problem.objective(z)
        c, J = problem.inequalities(z)
        H_L = problem.H if problem.is_linear else problem.H + problem.constraint_hessian(lam)
        J_a = J[active]
        K = np.block([[H_L, J_a.T], [J_a, np.zeros((m_a, m_a))]])
        sol = _solve_scaled(K, -np.r_[grad, c[active]])
        if not np.all(np.isfinite(sol)):
            return None
        dz = sol[:n]
        z = z + dz
        lam = np.zeros(active.size)
        lam[active] = sol[n:]
        if np.max(np.abs(dz), initial=0.0) <= 1e-14 * (1.0 + np.max(np.abs(z))):
            break
    return z, lam


def _polish(problem, z, s, lam):
    """Refine a converged iterate on its active set; ``None`` when that fails."""
    active = lam > s
    for _ in range(_POLISH_ROUNDS):
        result = _newton_on_active(problem, z, active, lam)
        if result is None:
            return None
        z_p, lam_p = result
        c, _ = problem.inequalities(z_p)
        violated = ~active & (c > _POLISH_FEASIBILITY)
        negative = active & (lam_p < -1e-9 * (1.0 + np.max(np.abs(lam_p), initial=0.0)))
        if not (np.any(violated) or np.any(negative)):
            return z_p, np.maximum(-c, 0.0), np.maximum(lam_p, 0.0)
        active = (active | violated) & ~negative
    return None


def interior_point(problem: QcqpProblem, warm=None, tol=1e-8, max_iter=100) -> SolveReport:
    """Run the predictor-corrector loop on ``problem``."""
    z, s, lam = _starting_point(problem, warm)
    m = s.size

    if m == 0:
        solve = _factorize(problem.H)
        z = solve(-problem.g)
        f, _ = problem.objective(z)
        res = kkt_residual(problem, z, lam)
        return SolveReport(z, float(f), res, 1, OPTIMAL if res <= tol else MAX_ITER, lam, s)

    linear = problem.is_linear
    best = None

    def residuals(z, s, lam, target):
        c, J = problem.inequalities(z)
        _, grad = problem.objective(z)
        return np.concatenate([grad + J.T @ lam, c + s, s * lam - target])

    for iteration in range(max_iter + 1):
        f, grad = problem.objective(z)
        c, J = problem.inequalities(z)
        res = kkt_residual(problem, z, lam)
        if not (np.isfinite(res) and np.isfinite(f)):
            break
        if best is None or res < best.kkt_residual:
            best = SolveReport(z.copy(), float(f), res, iteration, MAX_ITER, lam.copy(), s.copy())
        if res <= tol:
            polished = _polish(problem, z, s, lam)
            if polished is not None:
                z_p, s_p, lam_p = polished
                res_p = kkt_residual(problem, z_p, lam_p)
                if res_p <= tol:
                    f_p, _ = problem.objective(z_p)
                    return SolveReport(z_p, float(f_p), res_p, iteration, OPTIMAL, lam_p, s_p)
            return SolveReport(z, float(f), res, iteration, OPTIMAL, lam, s)
        if iteration == max_iter:
            break

        mu = s @ lam / m
        W = lam / s
        r_d = grad + J.T @ lam
        r_p = c + s
        H_L = problem.H if linear else problem.H + problem.constraint_hessian(lam)
        solve = _factorize(H_L + J.T @ (W[:, None] * J))

        def direction(r_c, W=W, r_d=r_d, r_p=r_p, J=J, solve=solve):
            dz = solve(-r_d - J.T @ (W * r_p - r_c / s))
            dlam = W * (J @ dz + r_p) - r_c / s
            ds = -(r_c + s * dlam) / lam
            return dz, ds, dlam

        # Affine predictor
        dz, ds, dlam = direction(s * lam)
        a_p, a_d = _max_step(s, ds), _max_step(lam, dlam)
        mu_aff = (s + a_p * ds) @ (lam + a_d * dlam) / m
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0

        # Centering corrector
        dz, ds, dlam = direction(s * lam + ds * dlam - sigma * mu)
        if not (np.all(np.isfinite(dz)) and np.all(np.isfinite(dlam))):
            LOGGER.warning('Interior point: non-finite direction at iteration %d.', iteration)
            return _failed(best, iteration)

        alpha = min(
            1.0, _BOUNDARY_FRACTION * _max_step(s, ds), _BOUNDARY_FRACTION * _max_step(lam, dlam)
        )
        if not linear:
            # Curved constraints: the linearized primal residual is only a model
            target = sigma * mu
            base = np.linalg.norm(residuals(z, s, lam, target))
            for _ in range(30):
                trial = residuals(z + alpha * dz, s + alpha * ds, lam + alpha * dlam, target)
                if np.linalg.norm(trial) <= (1.0 - 1e-4 * alpha) * base:
                    break
                alpha *= 0.5

        z = z + alpha * dz
        s = s + alpha * ds
        lam = lam + alpha * dlam

    if best is None:
        return _failed(best, 0)
    LOGGER.debug('Interior point stopped at KKT residual %.3g.', best.kkt_residual)
    return SolveReport(
        best.z_star,
        best.objective,
        best.kkt_residual,
        max_iter,
        MAX_ITER,
        best.multipliers,
        best.slacks,
    )


def _failed(best, iteration):
    if best is None:
        return SolveReport(np.zeros(0), np.nan, np.inf, iteration, INFEASIBLE_NUMERICS)
    return SolveReport(
        best.z_star,
        best.objective,
        best.kkt_residual,
        iteration,
        INFEASIBLE_NUMERICS,
        best.multipliers,
        best.slacks,
    )


def solve_qcqp(p: QcqpProblem, warm=None, tol=1e-8, max_iter=100) -> SolveReport:
    """Solve a convex QCQP.

    Parameters
    ----------
    p : :obj:`~govern.optim.problems.QcqpProblem`
        The problem; every ``P_i`` must be positive semi-definite.
    warm : :obj:`numpy.ndarray` or :obj:`~govern.optim.problems.SolveReport`, optional
        Primal start, or a previous report whose slacks and multipliers are reused.
    tol : float
        Target of :func:`~govern.optim.kkt.kkt_residual`.
    """
    return interior_point(p, warm=warm, tol=tol, max_iter=max_iter)
