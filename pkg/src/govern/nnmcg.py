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
Network-guided governor with sensitivity-based constraint tightening.

The network proposes a nominal sequence; the plant is rolled forward under it and the
output sensitivities are propagated. The exact constraints are then replaced by their
first-order expansion plus a quadratic remainder bound ``mbar``, which yields a convex
QCQP with the governor cost. Only its first command is applied.

:func:`tune_mbar` calibrates ``mbar`` in closed loop, doubling the bound of every output
whose expansion failed to dominate the true rollout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from govern.mcg import GovernorDecision, GovernorWeights, governor_objective
from govern.nn import FeedforwardNet, infer
from govern.optim import (
    INFEASIBLE_NUMERICS,
    MAX_ITER,
    OPTIMAL,
    QcqpProblem,
    QuadraticConstraint,
    SolveReport,
    solve_qcqp,
)
from govern.plant import InputInterval, PlantModel
from govern.sensitivity import (
    ContractError,
    SensitivityBundle,
    bound_gap,
    sensitivity_bundle,
)

LOGGER = logging.getLogger('govern.governor')

SUCCESS = 'success'
CAP_REACHED = 'cap_reached'


@dataclass(frozen=True)
class NnmcgConfig:
    """Everything the network-guided governor needs besides the plant."""

    weights: GovernorWeights
    mbar: np.ndarray
    net: FeedforwardNet
    past_inputs: bool = True

    def __post_init__(self):
        mbar = np.atleast_1d(np.asarray(self.mbar, dtype=float))
        if np.any(mbar < 0) or not np.all(np.isfinite(mbar)):
            raise ContractError(f'Curvature bounds must be finite and non-negative, got {mbar}.')
        object.__setattr__(self, 'mbar', mbar)
        if self.net.output_dim != self.weights.n_commands:
            raise ContractError(
                f'Network predicts {self.net.output_dim} commands, '
                f'horizon needs {self.weights.n_commands}.'
            )

    def with_mbar(self, mbar) -> NnmcgConfig:
        return replace(self, mbar=np.asarray(mbar, dtype=float))


def zero_deviation_point(bundle: SensitivityBundle) -> np.ndarray:
    """``[V_nom, eps]`` with each slack covering its nominal output; always feasible."""
    return np.r_[bundle.commands, np.maximum(np.max(bundle.y_nom, axis=0), 0.0)]


def build_tightened_qcqp(
    bundle: SensitivityBundle,
    mbar,
    V_nom,
    r: float,
    weights: GovernorWeights,
    interval: InputInterval,
    past_inputs: bool = True,
) -> QcqpProblem:
    """Tightened governor problem around ``V_nom`` over ``z = [V, eps]``.

    One constraint per output ``i`` and step ``j`` (output-major)::

        y_nom[j, i] + sum_k S_y[i, j, k] d_k + mbar[i] / 2 * sum_k d_k**2 - eps_i <= 0

    with ``d = V - V_nom`` and ``k <= j`` (``k = j`` only when ``past_inputs`` is off).
    """
    V_nom = np.asarray(V_nom, dtype=float)
    mbar = np.atleast_1d(np.asarray(mbar, dtype=float))
    n_v, n_y = weights.n_commands, bundle.n_y
    if V_nom.size != n_v or bundle.horizon + 1 != n_v:
        raise ContractError(
            f'Horizon mismatch: {V_nom.size} nominal commands, bundle over '
            f'{bundle.horizon + 1}, weights over {n_v}.'
        )
    if mbar.size != n_y:
        raise ContractError(f'Expected {n_y} curvature bounds, got {mbar.size}.')

    n = n_v + n_y
    constraints = []
    for i in range(n_y):
        for j in range(n_v):
            ks = np.arange(j + 1) if past_inputs else np.array([j])
            P = np.zeros((n, n))
            P[ks, ks] = mbar[i]
            q = np.zeros(n)
            q[ks] = bundle.S_y[i, j, ks] - mbar[i] * V_nom[ks]
            q[n_v + i] = -1.0
            c = (
                bundle.y_nom[j, i]
                - bundle.S_y[i, j, ks] @ V_nom[ks]
                + 0.5 * mbar[i] * (V_nom[ks] @ V_nom[ks])
            )
            constraints.append(QuadraticConstraint(P, q, float(c)))

    H, g, _ = governor_objective(weights, r, n_y)
    return QcqpProblem(
        H=H,
        g=g,
        constraints=constraints,
        lb=np.r_[np.full(n_v, interval.lo), np.zeros(n_y)],
        ub=np.r_[np.full(n_v, interval.hi), np.full(n_y, np.inf)],
    )


def nnmcg_step(
    plant: PlantModel,
    config: NnmcgConfig,
    x,
    r: float,
    warm: SolveReport | None = None,
    hold: float | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> GovernorDecision:
    """One sample of the network-guided governor.

    ``warm`` reuses the multipliers of a previous solve; on a numerical failure the
    command ``hold`` is applied instead of the solution when given.
    """
    interval = plant.input_interval
    V_nom = interval.saturate(infer(config.net, x, r))
    bundle = sensitivity_bundle(plant, x, V_nom)
    problem = build_tightened_qcqp(
        bundle, config.mbar, V_nom, r, config.weights, interval, config.past_inputs
    )

    start = zero_deviation_point(bundle)
    report = solve_qcqp(
        problem,
        warm=start if warm is None else replace(warm, z_star=start),
        tol=tol,
        max_iter=max_iter,
    )
    if report.status == MAX_ITER and warm is not None:
        report = solve_qcqp(problem, warm=start, tol=tol, max_iter=max_iter)

    n_v = config.weights.n_commands
    if report.status == INFEASIBLE_NUMERICS:
        if hold is not None:
            LOGGER.warning('Tightened problem failed numerically; holding command %.6g.', hold)
            return GovernorDecision(
                float(hold),
                np.full(n_v, float(hold)),
                np.zeros(plant.n_y),
                report,
                V_nom=V_nom,
                held=True,
            )
        # No previous command to fall back on
        report = replace(report, z_star=start)
    elif report.status != OPTIMAL:
        LOGGER.warning(
            'Tightened problem ended with status "%s" (KKT residual %.3g).',
            report.status,
            report.kkt_residual,
        )

    V_star = interval.saturate(report.z_star[:n_v])
    eps_star = np.maximum(report.z_star[n_v:], 0.0)
    return GovernorDecision(float(V_star[0]), V_star, eps_star, report, V_nom=V_nom)


class SensitivityGovernor:
    """Stateful :func:`nnmcg_step` keeping the last command and multipliers."""

    name = 'nn-mcg'

    def __init__(self, plant: PlantModel, config: NnmcgConfig, tol=1e-8, max_iter=100):
        self.plant = plant
        self.config = config
        self.tol = tol
        self.max_iter = max_iter
        self.reset()

    def reset(self):
        self._last = None
        self._report = None

    def decide(self, x, r: float) -> GovernorDecision:
        decision = nnmcg_step(
            self.plant,
            self.config,
            x,
            r,
            warm=self._report,
            hold=self._last,
            tol=self.tol,
            max_iter=self.max_iter,
        )
        self._last = decision.v_applied
        if decision.solve is not None and decision.solve.status == OPTIMAL:
            self._report = decision.solve
        return decision


@dataclass
class CalibrationReport:
    """Outcome of :func:`tune_mbar`."""

    mbar_final: list[float]
    iterations: int
    max_violation_history: list[float]
    profile_id: str
    status: str = SUCCESS
    message: str = ''
    mbar_history: list[list[float]] = field(default_factory=list)
    realized_violation: list[float] = field(default_factory=list)
    """Per output, largest realized output above the recorded slack in the final run."""

    def to_dict(self) -> dict:
        return {
            'mbar_final': self.mbar_final,
            'iterations': self.iterations,
            'max_violation_history': self.max_violation_history,
            'profile_id': self.profile_id,
            'status': self.status,
            'message': self.message,
            'mbar_history': self.mbar_history,
            'realized_violation': self.realized_violation,
        }


def soundness_gap(plant: PlantModel, trace, config: NnmcgConfig) -> np.ndarray:
    """Per output, the worst excess of the true rollout over the tightened bound.

    Every recorded step is replayed: the expansion around the recorded nominal sequence
    is compared with the plant rolled out under the applied sequence.
    """
    gap = np.zeros(plant.n_y)
    for t in range(trace.n_steps):
        V_nom = trace.V_nom[t]
        if V_nom is None or trace.status[t] == 'held':
            continue
        bundle = sensitivity_bundle(plant, trace.x[t], V_nom)
        gap = np.maximum(
            gap,
            bound_gap(
                plant,
                trace.x[t],
                bundle,
                config.mbar,
                trace.V_star[t],
                past_inputs=config.past_inputs,
            ),
        )
    return gap


def tune_mbar(
    plant: PlantModel,
    config0: NnmcgConfig,
    profile,
    x0=None,
    viol_tol: float = 1e-6,
    increment_factor: float = 2.0,
    seed_value: float = 1e-3,
    max_iter: int = 50,
    tol: float = 1e-8,
) -> tuple[CalibrationReport, NnmcgConfig]:
    """Escalate the curvature bounds until the expansion dominates in closed loop.

    Each iteration simulates ``profile`` with the current bounds. An output whose
    :func:`soundness_gap` exceeds ``viol_tol`` has its bound multiplied by
    ``increment_factor`` (or set to ``seed_value`` from zero).
    When ``max_iter`` is reached the report and the returned configuration carry the
    last bounds that were simulated.
    """
    from govern.sim import run_closed_loop

    if increment_factor <= 1:
        raise ValueError('The increment factor must exceed one.')

    config = config0
    history, mbar_history = [], []
    realized = np.zeros(plant.n_y)
    for iteration in range(1, max_iter + 1):
        trace = run_closed_loop(plant, SensitivityGovernor(plant, config, tol=tol), profile, x0)
        gap = soundness_gap(plant, trace, config)
        realized = np.max(trace.y - trace.eps, axis=0)
        history.append(float(np.max(gap)))
        mbar_history.append(config.mbar.tolist())
        LOGGER.log(
            25,
            'Calibration iteration %d: mbar=%s, soundness gap=%s.',
            iteration,
            np.array2string(config.mbar, precision=4),
            np.array2string(gap, precision=3),
        )

        violating = gap > viol_tol
        if not np.any(violating):
            return (
                CalibrationReport(
                    mbar_final=config.mbar.tolist(),
                    iterations=iteration,
                    max_violation_history=history,
                    profile_id=getattr(profile, 'profile_id', str(profile)),
                    mbar_history=mbar_history,
                    realized_violation=realized.tolist(),
                ),
                config,
            )

        if iteration == max_iter:
            break
        mbar = config.mbar.copy()
        mbar[violating] = np.where(
            mbar[violating] > 0, mbar[violating] * increment_factor, seed_value
        )
        config = config.with_mbar(mbar)

    message = (
        f'No constraint-dominating bound after {max_iter} iterations; '
        'additional data collection and network training is recommended.'
    )
    LOGGER.warning(message)
    return (
        CalibrationReport(
            mbar_final=config.mbar.tolist(),
            iterations=max_iter,
            max_violation_history=history,
            profile_id=getattr(profile, 'profile_id', str(profile)),
            status=CAP_REACHED,
            message=message,
            mbar_history=mbar_history,
            realized_violation=realized.tolist(),
        ),
        config,
    )
