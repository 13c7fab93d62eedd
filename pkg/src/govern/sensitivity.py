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
Nominal predictions and their first-order sensitivities to the command sequence.

A command sequence is a float array ``V`` of length ``N + 1``. Rolling the plant forward
under ``V`` from the measured state gives the nominal trajectory; differentiating that
trajectory with respect to every ``V[k]`` gives the lower-triangular arrays
``S_x[j, k]`` (states) and ``S_y[i, j, k]`` (outputs) used by both governors.

"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from govern.plant import PlantModel

__all__ = [
    'ContractError',
    'SensitivityBundle',
    'bound_gap',
    'estimate_curvature',
    'nominal_rollout',
    'propagate_sensitivities',
    'sensitivity_bundle',
    'taylor_upper_bound',
    'upper_bound_trajectory',
]


class ContractError(ValueError):
    """Arrays handed between stages do not have matching dimensions."""


@dataclass(frozen=True)
class SensitivityBundle:
    """Nominal trajectory and sensitivities around a command sequence."""

    commands: np.ndarray
    """The nominal sequence ``(N + 1,)`` the bundle was computed at."""
    x_nom: np.ndarray
    """Nominal states, ``(N + 1, n_x)``."""
    y_nom: np.ndarray
    """Nominal outputs, ``(N + 1, n_y)``."""
    S_x: np.ndarray
    """State sensitivities, ``(N + 1, N + 1, n_x)`` indexed ``[j, k]``."""
    S_y: np.ndarray
    """Output sensitivities, ``(n_y, N + 1, N + 1)`` indexed ``[i, j, k]``."""

    @property
    def horizon(self) -> int:
        return self.commands.size - 1

    @property
    def n_y(self) -> int:
        return self.y_nom.shape[1]


def nominal_rollout(plant: PlantModel, x0, V):
    """Roll ``plant`` forward from ``x0`` under the sequence ``V``.

    Returns
    -------
    x_nom : :obj:`numpy.ndarray`
        ``(N + 1, n_x)`` states with ``x_nom[0] = x0``.
    y_nom : :obj:`numpy.ndarray`
        ``(N + 1, n_y)`` outputs, ``y_nom[j] = h(x_nom[j], V[j])``.
    """
    V = np.asarray(V, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (plant.n_x,):
        raise ContractError(f'Initial state has shape {x0.shape}, plant expects ({plant.n_x},).')

    n_steps = V.size
    x_nom = np.empty((n_steps, plant.n_x))
    y_nom = np.empty((n_steps, plant.n_y))
    x_nom[0] = x0
    for j in range(n_steps):
        y_nom[j] = plant.output(x_nom[j], V[j])
        if j + 1 < n_steps:
            x_nom[j + 1] = plant.step(x_nom[j], V[j])
    return x_nom, y_nom


def propagate_sensitivities(plant: PlantModel, x_nom, V, y_nom=None) -> SensitivityBundle:
    """Propagate state and output sensitivities along a nominal trajectory.

    ``S_x[0, k] = 0``; ``S_x[j + 1, k] = F_x(j) S_x[j, k]`` for ``k < j`` and
    ``S_x[j + 1, j] = F_v(j)``; ``S_y[:, j, k] = H_x(j) S_x[j, k] + [k = j] H_v(j)``,
    with every Jacobian evaluated at ``(x_nom[j], V[j])``.
    """
    V = np.asarray(V, dtype=float)
    x_nom = np.asarray(x_nom, dtype=float)
    n_steps = V.size
    if x_nom.shape != (n_steps, plant.n_x):
        raise ContractError(
            f'Nominal states have shape {x_nom.shape}, expected ({n_steps}, {plant.n_x}).'
        )
    if y_nom is None:
        y_nom = np.array([plant.output(x_nom[j], V[j]) for j in range(n_steps)])
    elif np.shape(y_nom) != (n_steps, plant.n_y):
        raise ContractError(
            f'Nominal outputs have shape {np.shape(y_nom)}, expected ({n_steps}, {plant.n_y}).'
        )

    S_x = np.zeros((n_steps, n_steps, plant.n_x))
    S_y = np.zeros((plant.n_y, n_steps, n_steps))
    for j in range(n_steps):
        x_j, v_j = x_nom[j], V[j]
        S_y[:, j, : j + 1] = plant.jac_h_x(x_j, v_j) @ S_x[j, : j + 1].T
        S_y[:, j, j] += plant.jac_h_v(x_j, v_j)
        if j + 1 < n_steps:
            S_x[j + 1, : j + 1] = S_x[j, : j + 1] @ plant.jac_f_x(x_j, v_j).T
            S_x[j + 1, j] += plant.jac_f_v(x_j, v_j)

    return SensitivityBundle(
        commands=V.copy(),
        x_nom=x_nom,
        y_nom=np.asarray(y_nom, dtype=float),
        S_x=S_x,
        S_y=S_y,
    )


def sensitivity_bundle(plant: PlantModel, x0, V) -> SensitivityBundle:
    """Nominal rollout followed by sensitivity propagation."""
    x_nom, y_nom = nominal_rollout(plant, x0, V)
    return propagate_sensitivities(plant, x_nom, V, y_nom=y_nom)


def taylor_upper_bound(bundle: SensitivityBundle, mbar, V, V_nom, j: int, i: int) -> float:
    """Remainder-bounded upper estimate of output ``i`` at horizon step ``j``.

    ``y_nom[j, i] + sum_k S_y[i, j, k] d_k + mbar[i] / 2 * sum_k d_k**2`` over ``k <= j``,
    with ``d = V - V_nom``.
    """
    d = np.asarray(V, dtype=float)[: j + 1] - np.asarray(V_nom, dtype=float)[: j + 1]
    mbar = np.asarray(mbar, dtype=float).reshape(-1)
    return float(bundle.y_nom[j, i] + bundle.S_y[i, j, : j + 1] @ d + 0.5 * mbar[i] * (d @ d))


def upper_bound_trajectory(bundle: SensitivityBundle, mbar, V, V_nom, past_inputs=True):
    """Evaluate :func:`taylor_upper_bound` for every step and output, ``(N + 1, n_y)``.

    With ``past_inputs=False`` only the current-step deviation ``k = j`` enters the bound.
    """
    d = np.asarray(V, dtype=float) - np.asarray(V_nom, dtype=float)
    mbar = np.asarray(mbar, dtype=float).reshape(-1)
    if mbar.size != bundle.n_y:
        raise ContractError(f'Expected {bundle.n_y} curvature bounds, got {mbar.size}.')

    if past_inputs:
        linear = bundle.S_y @ d  # (n_y, N + 1); upper triangle is zero
        quadratic = np.cumsum(d**2)
    else:
        linear = np.diagonal(bundle.S_y, axis1=1, axis2=2) * d
        quadratic = d**2
    return bundle.y_nom + linear.T + 0.5 * np.outer(quadratic, mbar)


def bound_gap(plant: PlantModel, x0, bundle: SensitivityBundle, mbar, V, past_inputs=True):
    """How far the true rollout under ``V`` exceeds its upper bound, per output.

    Returns the maximum over horizon steps of ``y_true - bound``, clipped at zero.
    """
    _, y_true = nominal_rollout(plant, x0, V)
    upper = upper_bound_trajectory(bundle, mbar, V, bundle.commands, past_inputs=past_inputs)
    return np.maximum(np.max(y_true - upper, axis=0), 0.0)


def estimate_curvature(
    plant: PlantModel,
    sample_states,
    horizon: int,
    probes: int = 4,
    safety: float = 1.5,
    seed: int = 0,
    fd_step: float = 1e-4,
):
    """Sampled bound on the curvature of predicted outputs with respect to commands.

    For every sample state, ``probes`` sequences are drawn uniformly from the command
    interval. The Hessian of each ``y[j, i]`` is obtained by central differences of the
    exact sensitivities; the returned bound is, per output, the largest spectral norm
    found, times ``safety``.

    Probe sequences for state ``s`` come from a generator seeded with ``(seed, s)``,
    so raising ``probes`` only adds samples.
    """
    sample_states = np.atleast_2d(np.asarray(sample_states, dtype=float))
    interval = plant.input_interval
    n_steps = horizon + 1
    mbar = np.zeros(plant.n_y)

    for s_index, x0 in enumerate(sample_states):
        rng = np.random.default_rng([seed, s_index])
        for _ in range(probes):
            V = rng.uniform(interval.lo, interval.hi, size=n_steps)
            hessians = np.empty((plant.n_y, n_steps, n_steps, n_steps))
            for ell in range(n_steps):
                up, down = V.copy(), V.copy()
                up[ell] += fd_step
                down[ell] -= fd_step
                diff = sensitivity_bundle(plant, x0, up).S_y - sensitivity_bundle(
                    plant, x0, down
                ).S_y
                hessians[..., ell] = diff / (2 * fd_step)

            hessians = 0.5 * (hessians + np.swapaxes(hessians, -1, -2))
            spectral = np.max(np.abs(np.linalg.eigvalsh(hessians)), axis=-1)
            mbar = np.maximum(mbar, np.max(spectral, axis=1))

    return safety * mbar
