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
"""Dense convex quadratic programming."""

from govern.optim.problems import QuadraticProgram, SolveReport
from govern.optim.qcqp import interior_point


def solve_qp(p: QuadraticProgram, warm=None, tol=1e-8, max_iter=100) -> SolveReport:
    """Solve ``min 1/2 z'Hz + g'z`` s.t. ``A z <= b``, ``lb <= z <= ub``.

    The report's multipliers are ordered as the rows of
    :meth:`~govern.optim.problems.QuadraticProgram.inequalities`.

    >>> rep = solve_qp(QuadraticProgram(H=[[2.0]], g=[0.0], A=[[-1.0]], b=[-2.0]))
    >>> rep.status, round(float(rep.z_star[0]), 6), round(rep.objective, 6)
    ('optimal', 2.0, 4.0)
    """
    return interior_point(p.as_qcqp(), warm=warm, tol=tol, max_iter=max_iter)
