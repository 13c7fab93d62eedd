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
The multi-timestep command governor.

At every sample the governor picks a whole sequence of future commands
``V = [v(0), ..., v(N)]`` and per-output slacks ``eps`` minimizing::

    sum_j (r - v(j))**2 + rho_s * sum_{j<N} (v(j) - v(j+1))**2 + sum_i rho_i * eps_i**2

subject to the predicted outputs ``y(j) <= eps``, ``v(j)`` in the command interval
and ``eps >= 0``. Only ``v(0)`` is applied; the remainder warm-starts the next sample.

"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from govern.optim import OPTIMAL, NlpProblem, SolveReport, solve_nlp
from govern.plant import PlantModel
from govern.sensitivity import nominal_rollout, sensitivity_bundle

LOGGER = logging.getLogger('govern.governor')


@dataclass(frozen=True)
class GovernorWeights:
    """Horizon and penalties of the governor cost."""

    horizon: int = 11
    rho: float = 1e8
    rho_s: float = 1e4
    rho_i: tuple | None = None
    """Per-output slack penalties; ``rho`` is broadcast when unset."""

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise ValueError(f'Horizon must be at least 1, got {self.horizon}.')
        if self.rho < 0 or self.rho_s < 0:
            raise ValueError('Penalties must be non-negative.')
        if self.rho_i is not None:
            object.__setattr__(self, 'rho_i', tuple(float(v) for v in self.rho_i))
            if min(self.rho_i) < 0:
                raise ValueError('Penalties must be non-negative.')

    @property
    def n_commands(self) -> int:
        return self.horizon + 1

    def penalties(self, n_y: int) -> np.ndarray:
        if self.rho_i is None:
            return np.full(n_y, float(self.rho))
        if len(self.rho_i) != n_y:
            raise ValueError(f'Expected {n_y} slack penalties, got {len(self.rho_i)}.')
        return np.array(self.rho_i)


def weights_from_config(settings: dict) -> GovernorWeights:
    """Build :class:`GovernorWeights` from the ``governor`` configuration section."""
    return GovernorWeights(
        horizon=int(settings.get('horizon', 11)),
        rho=float(settings.get('rho', 1e8)),
        rho_s=float(settings.get('rho_s', 1e4)),
        rho_i=settings.get('rho_i'),
    )


@dataclass(frozen=True)
class GovernorDecision:
    """What a governor applies at one sample, and why."""

    v_applied: float
    V_star: np.ndarray
    eps_star: np.ndarray
    solve: SolveReport | None = None
    V_nom: np.ndarray | None = None
    """Nominal sequence the decision was linearized around, if any."""
    held: bool = False
    """The solver failed and the previous command was held."""

    @property
    def status(self) -> str:
        if self.held:
            return 'held'
        return 'none' if self.solve is None else self.solve.status


def governor_objective(weights: GovernorWeights, r: float, n_y: int):
    """Quadratic cost over ``z = [V, eps]`` as ``(H, g, const)``.

    The cost equals ``1/2 z'Hz + g'z + const``.

    >>> H, g, const = governor_objective(GovernorWeights(horizon=1, rho=10.0, rho_s=0.0), 1.0, 1)
    >>> H.diagonal().tolist(), g.tolist(), const
    ([2.0, 2.0, 20.0], [-2.0, -2.0, 0.0], 2.0)
    """
    n_v = weights.n_commands
    diff = np.diff(np.eye(n_v), axis=0)
    H = np.zeros((n_v + n_y, n_v + n_y))
    H[:n_v, :n_v] = 2.0 * np.eye(n_v) + 2.0 * weights.rho_s * diff.T @ diff
    H[n_v:, n_v:] = 2.0 * np.diag(weights.penalties(n_y))
    g = np.zeros(n_v + n_y)
    g[:n_v] = -2.0 * r
    return H, g, n_v * r**2


def governor_cost(weights: GovernorWeights, r: float, V, eps) -> float:
    """Evaluate the governor cost of a sequence and its slacks."""
    V = np.asarray(V, dtype=float)
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    return float(
        np.sum((r - V) ** 2)
        + weights.rho_s * np.sum(np.diff(V) ** 2)
        + np.sum(weights.penalties(eps.size) * eps**2)
    )


def mcg_problem(plant: PlantModel, weights: GovernorWeights, x, r: float) -> NlpProblem:
    """Assemble the exact governor problem at state ``x`` as an :class:`NlpProblem`.

    Constraint rows are output-major: row ``i * (N + 1) + j`` is ``y_i(j) - eps_i``.
    """
    n_v, n_y = weights.n_commands, plant.n_y
    H, g, const = governor_objective(weights, r, n_y)
    x = np.asarray(x, dtype=float)

    def objective(z):
        Hz = H @ z
        return 0.5 * z @ Hz + g @ z + const, Hz + g

    def constraints(z):
        bundle = sensitivity_bundle(plant, x, z[:n_v])
        c = (bundle.y_nom - z[n_v:]).T.reshape(-1)
        J = np.zeros((n_y * n_v, n_v + n_y))
        J[:, :n_v] = bundle.S_y.reshape(n_y * n_v, n_v)
        for i in range(n_y):
            J[i * n_v : (i + 1) * n_v, n_v + i] = -1.0
        return c, J

    interval = plant.input_interval
    return NlpProblem(
        n=n_v + n_y,
        objective_fn=objective,
        constraints_fn=constraints,
        lb=np.r_[np.full(n_v, interval.lo), np.zeros(n_y)],
        ub=np.r_[np.full(n_v, interval.hi), np.full(n_y, np.inf)],
        hessian0=H,
    )


def warm_shift(prev, r: float | None = None) -> np.ndarray:
    """Shift a sequence left by one sample, holding its last entry.

    ``r`` is accepted so alternative fill rules can share the signature; the hold
    rule ignores it.

    >>> warm_shift([1.0, 2.0, 3.0], 0.0).tolist()
    [2.0, 3.0, 3.0]
    """
    prev = np.asarray(prev, dtype=float)
    return np.append(prev[1:], prev[-1])


def mcg_step(
    plant: PlantModel,
    weights: GovernorWeights,
    x,
    r: float,
    warm=None,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> GovernorDecision:
    """Solve the governor problem at ``(x, r)`` and return the first command."""
    interval = plant.input_interval
    n_v = weights.n_commands
    V0 = np.full(n_v, interval.saturate(r)) if warm is None else interval.saturate(warm)
    V0 = np.asarray(V0, dtype=float)
    if V0.size != n_v:
        raise ValueError(f'Warm start has {V0.size} commands, horizon needs {n_v}.')

    # Slacks covering the warm sequence make the starting point feasible
    _, y0 = nominal_rollout(plant, x, V0)
    z0 = np.r_[V0, np.maximum(np.max(y0, axis=0), 0.0)]

    report = solve_nlp(mcg_problem(plant, weights, x, r), z0, tol=tol, max_iter=max_iter)
    if report.status != OPTIMAL:
        LOGGER.warning(
            'Governor solve ended with status "%s" after %d iterations (KKT residual %.3g).',
            report.status,
            report.iterations,
            report.kkt_residual,
        )
    V_star = interval.saturate(report.z_star[:n_v])
    eps_star = np.maximum(report.z_star[n_v:], 0.0)
    return GovernorDecision(float(V_star[0]), V_star, eps_star, report)


class MultiTimestepGovernor:
    """Receding-horizon wrapper around :func:`mcg_step` carrying the warm start."""

    name = 'mcg'

    def __init__(self, plant: PlantModel, weights: GovernorWeights, tol=1e-6, max_iter=100):
        self.plant = plant
        self.weights = weights
        self.tol = tol
        self.max_iter = max_iter
        self._warm = None

    def reset(self):
        self._warm = None

    def decide(self, x, r: float) -> GovernorDecision:
        decision = mcg_step(
            self.plant,
            self.weights,
            x,
            r,
            warm=self._warm,
            tol=self.tol,
            max_iter=self.max_iter,
        )
        self._warm = warm_shift(decision.V_star, r)
        return decision
