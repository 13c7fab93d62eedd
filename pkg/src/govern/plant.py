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
Discrete-time closed-loop plants.

A plant maps the current state and the (governed) command to the next state,
:math:`x(t+1) = f(x(t), v(t))`, and exposes a vector of constrained outputs
:math:`y(t) = h(x(t), v(t))` that is admissible iff every entry is non-positive.

.. autoclass:: PlantModel
   :members:
.. autoclass:: LinearPlant
.. autoclass:: PendulumPlant
.. autoclass:: DualOutputPendulum
.. autoclass:: CombinedOutputPlant
.. autofunction:: equilibrium
.. autofunction:: plant_from_config

"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

__all__ = [
    'CombinedOutputPlant',
    'DualOutputPendulum',
    'EquilibriumError',
    'InputInterval',
    'LinearPlant',
    'PendulumPlant',
    'PlantDomainError',
    'PlantModel',
    'combine_curvature',
    'equilibrium',
    'plant_from_config',
    'saturate',
    'step',
]


class PlantDomainError(ValueError):
    """A state or output left the finite domain of the plant."""


class EquilibriumError(RuntimeError):
    """The fixed-point iteration did not settle within its step budget."""


@dataclass(frozen=True)
class InputInterval:
    """The compact set of admissible commands, ``[lo, hi]``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError(f'Command interval bounds must be finite: [{self.lo}, {self.hi}].')
        if not self.lo < self.hi:
            raise ValueError(f'Empty command interval [{self.lo}, {self.hi}].')

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def saturate(self, v):
        """Clamp a command (or an array of commands) into the interval."""
        if np.ndim(v) == 0:
            return float(min(max(v, self.lo), self.hi))
        return np.clip(v, self.lo, self.hi)

    def contains(self, v) -> bool:
        return bool(np.all((np.asarray(v) >= self.lo) & (np.asarray(v) <= self.hi)))


def saturate(interval: InputInterval, v):
    """Clamp ``v`` into ``interval``.

    >>> saturate(InputInterval(-3.0, 3.0), 5)
    3.0
    >>> saturate(InputInterval(-3.0, 3.0), 1.2)
    1.2
    >>> saturate(InputInterval(-3.0, 3.0), -7)
    -3.0
    """
    return interval.saturate(v)


class PlantModel(ABC):
    """Interface of a single-command closed-loop plant.

    Subclasses implement the raw maps ``_f``/``_h`` and the four Jacobians; the public
    :meth:`step` and :meth:`output` add the finiteness checks.
    """

    n_x: int
    n_y: int
    input_interval: InputInterval
    state_bounds: np.ndarray
    """Per-state ``[lo, hi]`` rows of the operating box (used for sampling only)."""

    @abstractmethod
    def _f(self, x: np.ndarray, v: float) -> np.ndarray: ...

    @abstractmethod
    def _h(self, x: np.ndarray, v: float) -> np.ndarray: ...

    @abstractmethod
    def jac_f_x(self, x: np.ndarray, v: float) -> np.ndarray:
        """Jacobian of the state update with respect to the state, ``(n_x, n_x)``."""

    @abstractmethod
    def jac_f_v(self, x: np.ndarray, v: float) -> np.ndarray:
        """Jacobian of the state update with respect to the command, ``(n_x,)``."""

    @abstractmethod
    def jac_h_x(self, x: np.ndarray, v: float) -> np.ndarray:
        """Jacobian of the outputs with respect to the state, ``(n_y, n_x)``."""

    @abstractmethod
    def jac_h_v(self, x: np.ndarray, v: float) -> np.ndarray:
        """Jacobian of the outputs with respect to the command, ``(n_y,)``."""

    @abstractmethod
    def describe(self) -> dict:
        """JSON-serializable parameters identifying this plant."""

    def step(self, x, v: float) -> np.ndarray:
        """Advance the plant one sample, raising :class:`PlantDomainError` off-domain."""
        x = np.asarray(x, dtype=float)
        x_next = self._f(x, float(v))
        if not np.all(np.isfinite(x_next)):
            raise PlantDomainError(f'Non-finite state after step from x={x.tolist()}, v={v}.')
        return x_next

    def output(self, x, v: float) -> np.ndarray:
        """Evaluate the constrained outputs."""
        x = np.asarray(x, dtype=float)
        y = self._h(x, float(v))
        if not np.all(np.isfinite(y)):
            raise PlantDomainError(f'Non-finite output at x={x.tolist()}, v={v}.')
        return y

    def sample_states(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` states uniformly from the operating box."""
        lo, hi = self.state_bounds[:, 0], self.state_bounds[:, 1]
        return rng.uniform(lo, hi, size=(count, self.n_x))


class LinearPlant(PlantModel):
    """A stable linear plant ``x+ = A x + B v``, ``y = C x + D v``."""

    def __init__(self, A, B, C, D, input_interval=None, state_bounds=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.asarray(B, dtype=float).reshape(-1)
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.D = np.asarray(D, dtype=float).reshape(-1)
        self.n_x = self.A.shape[0]
        self.n_y = self.C.shape[0]

        if self.A.shape != (self.n_x, self.n_x) or self.B.shape != (self.n_x,):
            raise ValueError('A must be square and B must have one entry per state.')
        if self.C.shape[1] != self.n_x or self.D.shape != (self.n_y,):
            raise ValueError('C must have one column per state and D one entry per output.')

        radius = np.max(np.abs(np.linalg.eigvals(self.A)))
        if radius >= 1:
            raise ValueError(f'Linear plant must be stable (spectral radius {radius:g} >= 1).')

        self.input_interval = input_interval or InputInterval(-3.0, 3.0)
        if state_bounds is None:
            state_bounds = [[-1.0, 1.0]] * self.n_x
        self.state_bounds = np.asarray(state_bounds, dtype=float)

    def _f(self, x, v):
        return self.A @ x + self.B * v

    def _h(self, x, v):
        return self.C @ x + self.D * v

    def jac_f_x(self, x, v):
        return self.A.copy()

    def jac_f_v(self, x, v):
        return self.B.copy()

    def jac_h_x(self, x, v):
        return self.C.copy()

    def jac_h_v(self, x, v):
        return self.D.copy()

    def describe(self):
        return {
            'kind': 'linear',
            'A': self.A.tolist(),
            'B': self.B.tolist(),
            'C': self.C.tolist(),
            'D': self.D.tolist(),
            'v_min': self.input_interval.lo,
            'v_max': self.input_interval.hi,
        }


class PendulumPlant(PlantModel):
    """A damped pendulum driven through a gain ``c``, with an angle limit.

    The state is ``[angle, rate]``; Euler-discretized with sample time ``Ts``.
    """

    n_x = 2
    n_y = 1

    def __init__(
        self,
        Ts=0.05,
        a=4.0,
        b=1.5,
        c=1.0,
        x1_max=0.6,
        input_interval=None,
        state_bounds=None,
    ):
        self.Ts = float(Ts)
        self.a = float(a)
        self.b = float(b)
        self.c = float(c)
        self.x1_max = float(x1_max)
        self.input_interval = input_interval or InputInterval(-3.0, 3.0)
        if state_bounds is None:
            state_bounds = [[-1.0, 1.0], [-2.0, 2.0]]
        self.state_bounds = np.asarray(state_bounds, dtype=float)

    def _f(self, x, v):
        return np.array(
            [
                x[0] + self.Ts * x[1],
                x[1] + self.Ts * (-self.a * np.sin(x[0]) - self.b * x[1] + self.c * v),
            ]
        )

    def _h(self, x, v):
        return np.array([x[0] - self.x1_max])

    def jac_f_x(self, x, v):
        return np.array(
            [
                [1.0, self.Ts],
                [-self.Ts * self.a * np.cos(x[0]), 1.0 - self.Ts * self.b],
            ]
        )

    def jac_f_v(self, x, v):
        return np.array([0.0, self.Ts * self.c])

    def jac_h_x(self, x, v):
        return np.array([[1.0, 0.0]])

    def jac_h_v(self, x, v):
        return np.zeros(1)

    def analytic_equilibrium(self, v: float) -> np.ndarray:
        """Closed-form rest state, valid for ``|c v / a| < 1``."""
        return np.array([np.arcsin(self.c * v / self.a), 0.0])

    @property
    def admissible_command(self) -> float:
        """Largest constant command whose rest state satisfies the angle limit."""
        return self.a * np.sin(self.x1_max) / self.c

    def describe(self):
        return {
            'kind': 'pendulum',
            'Ts': self.Ts,
            'a': self.a,
            'b': self.b,
            'c': self.c,
            'x1_max': self.x1_max,
            'v_min': self.input_interval.lo,
            'v_max': self.input_interval.hi,
        }


class DualOutputPendulum(PendulumPlant):
    """The pendulum with a second output bounding the negative rate, ``-x2 - x2_max``."""

    n_y = 2

    def __init__(self, *args, x2_max=1.0, **kwargs):
        super().__init__(*args, **kwargs)
        self.x2_max = float(x2_max)

    def _h(self, x, v):
        return np.array([x[0] - self.x1_max, -x[1] - self.x2_max])

    def jac_h_x(self, x, v):
        return np.array([[1.0, 0.0], [0.0, -1.0]])

    def jac_h_v(self, x, v):
        return np.zeros(2)

    def describe(self):
        return super().describe() | {'kind': 'dual_pendulum', 'x2_max': self.x2_max}


class CombinedOutputPlant(PlantModel):
    """Constrain fixed linear combinations ``G y + offset`` of another plant's outputs."""

    def __init__(self, base: PlantModel, G, offset=None):
        self.base = base
        self.G = np.atleast_2d(np.asarray(G, dtype=float))
        if self.G.shape[1] != base.n_y:
            raise ValueError(
                f'Combination matrix has {self.G.shape[1]} columns, plant has {base.n_y} outputs.'
            )
        self.offset = (
            np.zeros(self.G.shape[0])
            if offset is None
            else np.asarray(offset, dtype=float).reshape(-1)
        )
        self.n_x = base.n_x
        self.n_y = self.G.shape[0]
        self.input_interval = base.input_interval
        self.state_bounds = base.state_bounds

    def _f(self, x, v):
        return self.base._f(x, v)

    def _h(self, x, v):
        return self.G @ self.base._h(x, v) + self.offset

    def jac_f_x(self, x, v):
        return self.base.jac_f_x(x, v)

    def jac_f_v(self, x, v):
        return self.base.jac_f_v(x, v)

    def jac_h_x(self, x, v):
        return self.G @ self.base.jac_h_x(x, v)

    def jac_h_v(self, x, v):
        return self.G @ self.base.jac_h_v(x, v)

    def describe(self):
        return {
            'kind': 'combined',
            'base': self.base.describe(),
            'G': self.G.tolist(),
            'offset': self.offset.tolist(),
        }


def combine_curvature(G, mbar_base) -> np.ndarray:
    """Curvature bound induced on combined outputs ``G y + offset``.

    >>> combine_curvature([[1.0, -2.0]], [0.5, 0.25]).tolist()
    [1.0]
    """
    return np.abs(np.atleast_2d(np.asarray(G, dtype=float))) @ np.asarray(mbar_base, dtype=float)


def step(plant: PlantModel, x, v: float) -> np.ndarray:
    """Advance ``plant`` by one sample."""
    return plant.step(x, v)


def equilibrium(plant: PlantModel, v: float, tol: float = 1e-10, max_steps: int = 1_000_000):
    """Find the rest state under a constant command by iterating from the origin.

    Raises
    ------
    EquilibriumError
        If the fixed-point residual is still above ``tol`` after ``max_steps`` steps.
    """
    x = np.zeros(plant.n_x)
    for _ in range(max_steps):
        x_next = plant.step(x, v)
        if np.max(np.abs(x_next - x)) <= tol:
            return x
        x = x_next
    raise EquilibriumError(
        f'No equilibrium within {max_steps} steps for v={v} (residual above {tol:g}).'
    )


def plant_from_config(settings: dict) -> PlantModel:
    """Build a plant from the ``plant`` configuration section."""
    kind = settings.get('kind', 'pendulum')
    interval = InputInterval(float(settings.get('v_min', -3.0)), float(settings.get('v_max', 3.0)))
    bounds = settings.get('state_bounds')

    if kind == 'linear':
        missing = [k for k in 'ABCD' if settings.get(k) is None]
        if missing:
            raise ValueError(f'Linear plant requires matrices {", ".join(missing)}.')
        plant = LinearPlant(
            settings['A'],
            settings['B'],
            settings['C'],
            settings['D'],
            input_interval=interval,
            state_bounds=bounds,
        )
    elif kind in ('pendulum', 'dual_pendulum'):
        kwargs = {
            k: float(settings[k]) for k in ('Ts', 'a', 'b', 'c', 'x1_max') if k in settings
        }
        if kind == 'dual_pendulum':
            plant = DualOutputPendulum(
                x2_max=float(settings.get('x2_max', 1.0)),
                input_interval=interval,
                state_bounds=bounds,
                **kwargs,
            )
        else:
            plant = PendulumPlant(input_interval=interval, state_bounds=bounds, **kwargs)
    else:
        raise ValueError(f'Unknown plant kind "{kind}".')

    combine = settings.get('combine')
    if combine:
        plant = CombinedOutputPlant(plant, combine['G'], combine.get('offset'))
    return plant
