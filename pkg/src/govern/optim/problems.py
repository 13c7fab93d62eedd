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
"""Problem and result containers shared by the solvers.

Every problem exposes ``objective(z) -> (f, grad)`` and ``inequalities(z) -> (c, J)``,
where ``c <= 0`` stacks, in this order, the general constraints, the finite lower bounds
(``lb - z``) and the finite upper bounds (``z - ub``). Multiplier vectors follow the
same order.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = 'optimal'
MAX_ITER = 'max_iter'
INFEASIBLE_NUMERICS = 'infeasible_numerics'


def _as_bounds(bound, n, fill):
    if bound is None:
        return np.full(n, fill)
    bound = np.asarray(bound, dtype=float).reshape(-1)
    if bound.size != n:
        raise ValueError(f'Bounds have {bound.size} entries, problem has {n} variables.')
    return bound


class _BoxMixin:
    lb: np.ndarray
    ub: np.ndarray

    def _box_rows(self, z):
        lo = np.flatnonzero(np.isfinite(self.lb))
        hi = np.flatnonzero(np.isfinite(self.ub))
        n = z.size
        c = np.concatenate([self.lb[lo] - z[lo], z[hi] - self.ub[hi]])
        J = np.zeros((lo.size + hi.size, n))
        J[np.arange(lo.size), lo] = -1.0
        J[lo.size + np.arange(hi.size), hi] = 1.0
        return c, J

    def clip(self, z):
        return np.clip(z, self.lb, self.ub)


@dataclass
class QuadraticProgram(_BoxMixin):
    """``min 1/2 z'Hz + g'z`` subject to ``A z <= b`` and ``lb <= z <= ub``."""

    H: np.ndarray
    g: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        n = self.g.size
        if self.H.shape != (n, n):
            raise ValueError(f'Hessian has shape {self.H.shape}, expected ({n}, {n}).')
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-12:
            raise ValueError('Hessian must be symmetric.')
        if self.A is None:
            self.A = np.zeros((0, n))
            self.b = np.zeros(0)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.b.size != self.A.shape[0]:
            raise ValueError('Every inequality row needs a right-hand side.')
        self.lb = _as_bounds(self.lb, n, -np.inf)
        self.ub = _as_bounds(self.ub, n, np.inf)

    @property
    def n(self) -> int:
        return self.g.size

    def objective(self, z):
        Hz = self.H @ z
        return 0.5 * z @ Hz + self.g @ z, Hz + self.g

    def inequalities(self, z):
        c_box, J_box = self._box_rows(z)
        return (
            np.concatenate([self.A @ z - self.b, c_box]),
            np.vstack([self.A, J_box]),
        )

    def as_qcqp(self) -> QcqpProblem:
        return QcqpProblem(H=self.H, g=self.g, A=self.A, b=self.b, lb=self.lb, ub=self.ub)


@dataclass(frozen=True)
class QuadraticConstraint:
    """``1/2 z'Pz + q'z + c <= 0``."""

    P: np.ndarray
    q: np.ndarray
    c: float


@dataclass
class QcqpProblem(_BoxMixin):
    """A convex QCQP: the QP above plus quadratic inequality constraints.

    Linear rows ``A z <= b`` come first, then :attr:`constraints`, then box rows.
    """

    H: np.ndarray
    g: np.ndarray
    constraints: list[QuadraticConstraint] = field(default_factory=list)
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        qp = QuadraticProgram(H=self.H, g=self.g, A=self.A, b=self.b, lb=self.lb, ub=self.ub)
        self.H, self.g, self.A, self.b, self.lb, self.ub = (
            qp.H,
            qp.g,
            qp.A,
            qp.b,
            qp.lb,
            qp.ub,
        )
        n = self.g.size
        for k, con in enumerate(self.constraints):
            if np.shape(con.P) != (n, n) or np.shape(con.q) != (n,):
                raise ValueError(f'Quadratic constraint {k} does not match {n} variables.')

        if self.constraints:
            self._P = np.stack([np.asarray(con.P, dtype=float) for con in self.constraints])
            self._q = np.stack([np.asarray(con.q, dtype=float) for con in self.constraints])
            self._c = np.array([float(con.c) for con in self.constraints])
        else:
            self._P = np.zeros((0, n, n))
            self._q = np.zeros((0, n))
            self._c = np.zeros(0)

    @property
    def n(self) -> int:
        return self.g.size

    @property
    def is_linear(self) -> bool:
        return not np.any(self._P)

    def objective(self, z):
        Hz = self.H @ z
        return 0.5 * z @ Hz + self.g @ z, Hz + self.g

    def inequalities(self, z):
        Pz = self._P @ z  # (m_q, n)
        c_quad = 0.5 * Pz @ z + self._q @ z + self._c
        J_quad = Pz + self._q
        c_box, J_box = self._box_rows(z)
        return (
            np.concatenate([self.A @ z - self.b, c_quad, c_box]),
            np.vstack([self.A, J_quad, J_box]),
        )

    def constraint_hessian(self, multipliers):
        """Weighted sum of the constraint curvatures, ``sum_i lambda_i P_i``."""
        m_lin = self.A.shape[0]
        lam_quad = multipliers[m_lin : m_lin + self._c.size]
        return np.tensordot(lam_quad, self._P, axes=1)


@dataclass
class NlpProblem(_BoxMixin):
    """A smooth problem given by callbacks.

    ``objective(z) -> (f, grad)``; ``constraints(z) -> (c, J)`` with ``c <= 0``
    (``None`` for a box-only problem). ``hessian0`` seeds the quasi-Newton model.
    """

    n: int
    objective_fn: Callable
    constraints_fn: Callable | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    hessian0: np.ndarray | None = None

    def __post_init__(self):
        self.lb = _as_bounds(self.lb, self.n, -np.inf)
        self.ub = _as_bounds(self.ub, self.n, np.inf)
        if self.hessian0 is not None:
            self.hessian0 = np.asarray(self.hessian0, dtype=float)
            if self.hessian0.shape != (self.n, self.n):
                raise ValueError('Initial Hessian model does not match the problem size.')

    def objective(self, z):
        f, grad = self.objective_fn(z)
        return float(f), np.asarray(grad, dtype=float)

    def general(self, z):
        """Value and Jacobian of the general constraints only."""
        if self.constraints_fn is None:
            return np.zeros(0), np.zeros((0, self.n))
        c, J = self.constraints_fn(z)
        return np.asarray(c, dtype=float).reshape(-1), np.asarray(J, dtype=float).reshape(
            -1, self.n
        )

    def inequalities(self, z):
        c, J = self.general(z)
        c_box, J_box = self._box_rows(z)
        return np.concatenate([c, c_box]), np.vstack([J, J_box])


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a solver call."""

    z_star: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    status: str
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    """Inequality multipliers, ordered as :meth:`inequalities` rows."""
    slacks: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL
