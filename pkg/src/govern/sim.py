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
Closed-loop simulation harness.

A governor is anything with ``reset()`` and ``decide(x, r) -> GovernorDecision``.
:func:`run_closed_loop` feeds it a reference profile sample by sample, applies the
command to the plant and records a :class:`SimulationTrace`. Only the time spent in
``decide`` is measured.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from time import perf_counter

import numpy as np
import pandas as pd

from govern.mcg import GovernorDecision
from govern.nn import infer
from govern.plant import InputInterval, PlantDomainError, PlantModel, equilibrium

LOGGER = logging.getLogger('govern.sim')

PROFILE_KINDS = ('steps', 'prbs_steps', 'drive_cycle_like', 'adversarial')
GOVERNOR_NAMES = ('none', 'naive-nn', 'mcg', 'nn-mcg')

_PRBS_DWELL = (50, 400)
_DRIVE_SEGMENT = (20, 150)
_DRIVE_RAMP_PROBABILITY = 0.5


@dataclass(frozen=True)
class ReferenceProfile:
    """A piecewise reference ``r(t)`` over ``total_steps`` samples.

    ``breakpoints`` holds ``(step, level)`` pairs; the level is held until the next
    breakpoint, or ramped linearly towards it when the matching ``ramps`` flag is set.
    """

    kind: str
    breakpoints: tuple
    total_steps: int
    seed: int | None = None
    levels: tuple | None = None
    ramps: tuple = ()

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f'Unknown profile kind "{self.kind}".')
        if int(self.total_steps) < 1:
            raise ValueError(f'Profile must span at least one step, got {self.total_steps}.')
        points = tuple((int(t), float(level)) for t, level in self.breakpoints)
        if not points:
            raise ValueError('Profile has no breakpoints.')
        steps = [t for t, _ in points]
        if steps[0] < 0 or any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError(f'Breakpoints must be non-negative and strictly increasing: {steps}.')
        if self.levels is not None:
            lo, hi = min(self.levels), max(self.levels)
            outside = [level for _, level in points if not lo <= level <= hi]
            if outside:
                raise ValueError(f'Levels {outside} outside the declared range [{lo}, {hi}].')
        ramps = tuple(bool(flag) for flag in self.ramps)
        if ramps and len(ramps) != len(points):
            raise ValueError('One ramp flag per breakpoint is required.')
        object.__setattr__(self, 'breakpoints', points)
        object.__setattr__(self, 'ramps', ramps or (False,) * len(points))

    @property
    def profile_id(self) -> str:
        return f'{self.kind}:seed={self.seed}:steps={self.total_steps}'

    @cached_property
    def _values(self) -> np.ndarray:
        r = np.empty(self.total_steps)
        points = self.breakpoints
        # Steps before the first breakpoint hold its level
        r[: points[0][0]] = points[0][1]
        for k, (start, level) in enumerate(points):
            if start >= self.total_steps:
                break
            stop = points[k + 1][0] if k + 1 < len(points) else self.total_steps
            end = min(stop, self.total_steps)
            if self.ramps[k] and k + 1 < len(points):
                target = points[k + 1][1]
                r[start:end] = level + (target - level) * (np.arange(start, end) - start) / (
                    stop - start
                )
            else:
                r[start:end] = level
        return r

    def values(self) -> np.ndarray:
        """The whole reference as an array of ``total_steps`` samples."""
        return self._values.copy()

    def __call__(self, t: int) -> float:
        return float(self._values[t])

    def __len__(self):
        return self.total_steps


def _level_range(levels):
    levels = [float(level) for level in levels]
    if not levels:
        raise ValueError('At least one reference level is required.')
    return min(levels), max(levels)


def make_profile(kind, seed=0, total_steps=1000, levels=(-3.0, 3.0), breakpoints=None):
    """Build a reference profile.

    ``steps`` uses the given ``breakpoints``; ``prbs_steps`` draws dwell times
    (50 to 400 samples) and levels uniformly; ``drive_cycle_like`` chains segments of
    20 to 150 samples that either hold or ramp to the next level.

    >>> make_profile('steps', total_steps=4, breakpoints=[(0, 1.0), (2, 3.0)]).values().tolist()
    [1.0, 1.0, 3.0, 3.0]
    """
    lo, hi = _level_range(levels)
    rng = np.random.default_rng(seed)

    if kind == 'steps':
        if not breakpoints:
            raise ValueError('A "steps" profile requires breakpoints.')
        return ReferenceProfile(kind, tuple(breakpoints), total_steps, seed, (lo, hi))

    points, ramps, t = [], [], 0
    if kind == 'prbs_steps':
        while t < total_steps:
            points.append((t, rng.uniform(lo, hi)))
            t += int(rng.integers(_PRBS_DWELL[0], _PRBS_DWELL[1] + 1))
    elif kind == 'drive_cycle_like':
        while t < total_steps:
            points.append((t, rng.uniform(lo, hi)))
            ramps.append(bool(rng.random() < _DRIVE_RAMP_PROBABILITY))
            t += int(rng.integers(_DRIVE_SEGMENT[0], _DRIVE_SEGMENT[1] + 1))
    else:
        raise ValueError(f'Unknown generated profile kind "{kind}".')
    return ReferenceProfile(kind, tuple(points), total_steps, seed, (lo, hi), tuple(ramps))


def adversarial_profile(interval: InputInterval, total_steps=1200, dwell=100) -> ReferenceProfile:
    """Alternating large step-ups and step-downs across the whole command interval.

    Every step-up ends at the upper end of the interval, which pushes a plant with a
    smaller admissible level past its constraint when the command is not governed.
    """
    mid = 0.5 * (interval.lo + interval.hi)
    cycle = (mid, interval.hi, mid, interval.lo, interval.hi, interval.lo)
    points = [(t, cycle[k % len(cycle)]) for k, t in enumerate(range(0, total_steps, dwell))]
    return ReferenceProfile(
        'adversarial', tuple(points), total_steps, None, (interval.lo, interval.hi)
    )


def profile_from_config(settings: dict, interval: InputInterval) -> ReferenceProfile:
    """Build a profile from one entry of the ``profiles`` configuration section."""
    settings = dict(settings)
    kind = settings.pop('kind', 'prbs_steps')
    total_steps = int(settings.get('total_steps', 1000))
    if kind == 'adversarial':
        return adversarial_profile(interval, total_steps, int(settings.get('dwell', 100)))
    return make_profile(
        kind,
        seed=settings.get('seed', 0),
        total_steps=total_steps,
        levels=settings.get('levels', (interval.lo, interval.hi)),
        breakpoints=settings.get('breakpoints'),
    )


class PassThroughGovernor:
    """No governor: the reference is applied as the command."""

    name = 'none'

    def __init__(self, plant: PlantModel):
        self.n_y = plant.n_y

    def reset(self):
        pass

    def decide(self, x, r: float) -> GovernorDecision:
        return GovernorDecision(float(r), np.array([float(r)]), np.zeros(self.n_y))


class NaiveNNGovernor:
    """Apply the first command predicted by the network, saturated, without any check."""

    name = 'naive-nn'

    def __init__(self, plant: PlantModel, net):
        self.plant = plant
        self.net = net

    def reset(self):
        pass

    def decide(self, x, r: float) -> GovernorDecision:
        V = self.plant.input_interval.saturate(infer(self.net, x, r))
        return GovernorDecision(float(V[0]), V, np.zeros(self.plant.n_y))


def build_governor(name, plant, weights=None, net=None, config=None, tol=None, max_iter=100):
    """Instantiate a governor from its command-line name.

    Parameters
    ----------
    name : str
        One of ``none``, ``naive-nn``, ``mcg`` or ``nn-mcg`` (underscores accepted).
    weights : :obj:`~govern.mcg.GovernorWeights`
        Required by ``mcg``.
    net : :obj:`~govern.nn.FeedforwardNet`
        Required by ``naive-nn``.
    config : :obj:`~govern.nnmcg.NnmcgConfig`
        Required by ``nn-mcg``.
    """
    key = str(name).lower().replace('_', '-')
    if key == 'none':
        return PassThroughGovernor(plant)
    if key == 'naive-nn':
        if net is None:
            raise ValueError('The naive-nn governor needs a trained network.')
        return NaiveNNGovernor(plant, net)
    if key == 'mcg':
        from govern.mcg import MultiTimestepGovernor

        if weights is None:
            raise ValueError('The mcg governor needs governor weights.')
        return MultiTimestepGovernor(plant, weights, tol=tol or 1e-6, max_iter=max_iter)
    if key == 'nn-mcg':
        from govern.nnmcg import SensitivityGovernor

        if config is None:
            raise ValueError('The nn-mcg governor needs a network and curvature bounds.')
        return SensitivityGovernor(plant, config, tol=tol or 1e-8, max_iter=max_iter)
    raise ValueError(f'Unknown governor "{name}"; choose from {", ".join(GOVERNOR_NAMES)}.')


@dataclass
class SimulationTrace:
    """Per-sample record of a closed-loop run.

    Row ``t`` holds the state the decision was taken at, the reference, the applied
    command, the outputs ``h(x(t), v(t))``, the slacks and the decision wall time.
    """

    governor: str
    t: np.ndarray
    x: np.ndarray
    r: np.ndarray
    v: np.ndarray
    y: np.ndarray
    eps: np.ndarray
    status: list[str]
    wall: np.ndarray
    V_star: list = field(default_factory=list, repr=False)
    V_nom: list = field(default_factory=list, repr=False)

    @classmethod
    def from_records(cls, governor, records, n_x, n_y) -> SimulationTrace:
        def stack(key, width):
            return np.array([rec[key] for rec in records], dtype=float).reshape(-1, width)

        return cls(
            governor=governor,
            t=np.arange(len(records)),
            x=stack('x', n_x),
            r=np.array([rec['r'] for rec in records], dtype=float),
            v=np.array([rec['v'] for rec in records], dtype=float),
            y=stack('y', n_y),
            eps=stack('eps', n_y),
            status=[rec['status'] for rec in records],
            wall=np.array([rec['wall'] for rec in records], dtype=float),
            V_star=[rec['V_star'] for rec in records],
            V_nom=[rec['V_nom'] for rec in records],
        )

    @property
    def n_steps(self) -> int:
        return self.t.size

    @property
    def max_violation(self) -> float:
        """Largest constrained output over the run (zero if every output stayed below)."""
        if not self.n_steps:
            return 0.0
        return float(max(np.max(self.y), 0.0))

    @property
    def max_excess(self) -> float:
        """Largest amount by which an output exceeded its own recorded slack."""
        if not self.n_steps:
            return 0.0
        return float(max(np.max(self.y - self.eps), 0.0))

    def constraint_satisfied(self, tol: float = 1e-6) -> bool:
        """Every output stayed within the slack recorded at the same step, plus ``tol``."""
        if not self.n_steps:
            return True
        return bool(np.all(self.y <= self.eps + tol))

    def to_frame(self) -> pd.DataFrame:
        columns = {'t': self.t}
        columns.update({f'x{k}': self.x[:, k] for k in range(self.x.shape[1])})
        columns['r'] = self.r
        columns['v'] = self.v
        columns.update({f'y{k}': self.y[:, k] for k in range(self.y.shape[1])})
        columns.update({f'eps{k}': self.eps[:, k] for k in range(self.eps.shape[1])})
        columns['status'] = self.status
        columns['wall_s'] = self.wall
        return pd.DataFrame(columns)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format='%.17g')


class SimulationAborted(RuntimeError):
    """The plant left its domain; :attr:`trace` holds the samples recorded so far."""

    def __init__(self, message, trace: SimulationTrace, step: int):
        super().__init__(message)
        self.trace = trace
        self.step = step


def run_closed_loop(plant: PlantModel, governor, profile: ReferenceProfile, x0=None):
    """Simulate ``governor`` in closed loop over ``profile``.

    ``x0`` defaults to the equilibrium under the saturated first reference.

    Raises
    ------
    SimulationAborted
        When the plant leaves its domain.
    """
    references = profile.values()
    if x0 is None:
        x0 = equilibrium(plant, plant.input_interval.saturate(references[0]))
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != plant.n_x:
        raise ValueError(f'Initial state has {x.size} entries, plant has {plant.n_x}.')

    name = getattr(governor, 'name', type(governor).__name__)
    governor.reset()
    records = []
    for t, r in enumerate(references):
        try:
            start = perf_counter()
            decision = governor.decide(x, float(r))
            wall = perf_counter() - start
            y = plant.output(x, decision.v_applied)
            x_next = plant.step(x, decision.v_applied)
        except PlantDomainError as e:
            trace = SimulationTrace.from_records(name, records, plant.n_x, plant.n_y)
            raise SimulationAborted(
                f'Simulation with governor "{name}" aborted at step {t}: {e}', trace, t
            ) from e
        records.append(
            {
                'x': x,
                'r': float(r),
                'v': decision.v_applied,
                'y': y,
                'eps': decision.eps_star,
                'status': decision.status,
                'wall': wall,
                'V_star': decision.V_star,
                'V_nom': decision.V_nom,
            }
        )
        x = x_next

    trace = SimulationTrace.from_records(name, records, plant.n_x, plant.n_y)
    LOGGER.log(
        15,
        'Governor "%s": %d steps, max output %.4g, mean decision time %.3g ms.',
        name,
        trace.n_steps,
        float(np.max(trace.y)),
        1e3 * float(np.mean(trace.wall)),
    )
    return trace


@dataclass
class MethodResult:
    """Timing and constraint summary of one governor."""

    average_step_time: float
    worst_case_step_time: float
    constraint_satisfied: bool
    max_violation: float
    tracking_rmse_vs_mcg: float | None = None


@dataclass
class BenchmarkReport:
    """Per-governor results of :func:`benchmark`."""

    profile_id: str
    repeats: int
    total_steps: int
    methods: dict[str, MethodResult] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'profile_id': self.profile_id,
            'repeats': self.repeats,
            'total_steps': self.total_steps,
            'methods': {name: vars(result).copy() for name, result in self.methods.items()},
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({name: vars(res) for name, res in self.methods.items()}).T


def benchmark(plant: PlantModel, governors, profile: ReferenceProfile, repeats=5, x0=None):
    """Time each governor over ``repeats`` simulations of ``profile``.

    The per-sample minimum wall time across repeats is kept; the average is the sum of
    those minima divided by the number of samples. Command tracking is compared with the
    ``mcg`` run when one is part of ``governors``.
    """
    if int(repeats) < 1:
        raise ValueError(f'At least one repeat is required, got {repeats}.')

    traces, walls = {}, {}
    for governor in governors:
        name = getattr(governor, 'name', type(governor).__name__)
        runs = [run_closed_loop(plant, governor, profile, x0) for _ in range(int(repeats))]
        traces[name] = runs[0]
        walls[name] = np.min(np.vstack([run.wall for run in runs]), axis=0)

    reference = traces.get('mcg')
    report = BenchmarkReport(profile.profile_id, int(repeats), profile.total_steps)
    for name, trace in traces.items():
        tracking = None
        if reference is not None:
            tracking = float(np.sqrt(np.mean((trace.v - reference.v) ** 2)))
        report.methods[name] = MethodResult(
            average_step_time=float(np.sum(walls[name]) / trace.n_steps),
            worst_case_step_time=float(np.max(walls[name])),
            constraint_satisfied=trace.constraint_satisfied(),
            max_violation=trace.max_violation,
            tracking_rmse_vs_mcg=tracking,
        )
        LOGGER.log(
            25,
            'Benchmark "%s": average %.3g ms, worst %.3g ms, max violation %.3g.',
            name,
            1e3 * report.methods[name].average_step_time,
            1e3 * report.methods[name].worst_case_step_time,
            report.methods[name].max_violation,
        )
    return report
