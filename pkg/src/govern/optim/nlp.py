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
Sequential quadratic programming for smooth inequality-constrained problems.

Each major iteration linearizes the constraints with their exact Jacobian, solves a
QP whose Hessian is a damped-BFGS model of the Lagrangian Hessian, and backtracks along
the step on the l1 merit function ``f + nu * sum(max(c, 0))``.
"""

import logging

import numpy as np

from govern.optim.kkt import kkt_residual
from govern.optim.problems import (
    INFEASIBLE_NUMERICS,
    MAX_ITER,
    OPTIMAL,
    NlpProblem,
    QuadraticProgram,
    SolveReport,
)
from govern.optim.qp import solve_qp

LOGGER = logging.getLogger('govern.optim')

ARMIJO = 1e-4
MIN_STEP = 1e-10


def damped_bfgs(B, s, y):
    """Powell-damped BFGS update, keeping ``B`` positive definite."""
    Bs = B @ s
    sBs = s @ Bs
    if sBs <= 0:
        return B
    sy = s @ y
    theta = 1.0 if sy >= 0.2 * sBs else 0.8 * sBs / (sBs - sy)
    r = theta * y + (1.0 - theta) * Bs
    B = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / (s @ r)
    return 0.5 * (B + B.T)


def solve_nlp(
    p: NlpProblem,
    warm,
    tol=1e-6,
    max_iter=100,
    qp_tol=1e-9,
) -> SolveReport:
    """Solve ``p`` from the starting point ``warm`` (clipped into the box)."""
    z = p.clip(np.asarray(warm, dtype=float).reshape(-1))
    B = np.eye(p.n) if p.hessian0 is None else p.hessian0.copy()

    f, grad = p.objective(z)
    c, J = p.general(z)
    m = c.size
    n_box = p.inequalities(z)[0].size - m
    lam = np.zeros(m + n_box)
    nu = 1.0

    def merit(f, c):
        return f + nu * np.sum(np.maximum(c, 0.0))

    for iteration in range(max_iter + 1):
        res = kkt_residual(p, z, lam)
        if res <= tol:
            return SolveReport(z, f, res, iteration, OPTIMAL, lam)
        if iteration == max_iter:
            break

        sub = QuadraticProgram(H=B, g=grad, A=J, b=-c, lb=p.lb - z, ub=p.ub - z)
        qp = solve_qp(sub, tol=qp_tol)
        if qp.status == INFEASIBLE_NUMERICS:
            LOGGER.warning('SQP: subproblem failed at iteration %d.', iteration)
            return SolveReport(z, f, res, iteration, INFEASIBLE_NUMERICS, lam)

        d = qp.z_star
        lam_new = qp.multipliers
        nu = max(nu, 1.5 * np.max(np.abs(lam_new[:m]), initial=0.0))

        # Directional derivative of the merit function along d
        slope = grad @ d - nu * np.sum(np.maximum(c, 0.0))
        phi = merit(f, c)
        alpha = 1.0
        while True:
            z_trial = p.clip(z + alpha * d)
            f_trial, _ = p.objective(z_trial)
            c_trial, _ = p.general(z_trial)
            if merit(f_trial, c_trial) <= phi + ARMIJO * alpha * min(slope, 0.0):
                break
            alpha *= 0.5
            if alpha < MIN_STEP:
                LOGGER.warning(
                    'SQP: line search stalled at iteration %d (KKT residual %.3g).',
                    iteration,
                    res,
                )
                return SolveReport(z, f, res, iteration, MAX_ITER, lam)

        z_new = z_trial
        f_new, grad_new = p.objective(z_new)
        c_new, J_new = p.general(z_new)
        if not (np.isfinite(f_new) and np.all(np.isfinite(c_new))):
            return SolveReport(z, f, res, iteration, INFEASIBLE_NUMERICS, lam)

        lag_old = grad + J.T @ lam_new[:m]
        lag_new = grad_new + J_new.T @ lam_new[:m]
        B = damped_bfgs(B, z_new - z, lag_new - lag_old)

        z, f, grad, c, J, lam = z_new, f_new, grad_new, c_new, J_new, lam_new

    LOGGER.debug('SQP reached %d iterations (KKT residual %.3g).', max_iter, res)
    return SolveReport(z, f, res, max_iter, MAX_ITER, lam)
