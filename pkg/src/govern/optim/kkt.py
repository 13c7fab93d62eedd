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
"""First-order optimality check recomputed from the raw problem data."""

import numpy as np


def kkt_components(problem, z, multipliers):
    """The four scaled KKT violations at ``(z, multipliers)``.

    Stationarity and complementarity are divided by ``1 + |grad f|`` and ``1 + |f|``
    so that very large slack penalties do not dominate the measure.
    """
    z = np.asarray(z, dtype=float)
    f, grad = problem.objective(z)
    c, J = problem.inequalities(z)
    lam = np.asarray(multipliers, dtype=float).reshape(-1)
    if lam.size != c.size:
        raise ValueError(f'Expected {c.size} multipliers, got {lam.size}.')

    stationarity = grad + J.T @ lam if c.size else grad
    return {
        'stationarity': float(
            np.max(np.abs(stationarity), initial=0.0)
            / (1.0 + np.max(np.abs(grad), initial=0.0))
        ),
        'primal': float(np.max(np.maximum(c, 0.0), initial=0.0)),
        'complementarity': float(np.max(np.abs(lam * c), initial=0.0) / (1.0 + abs(f))),
        'dual': float(np.max(np.maximum(-lam, 0.0), initial=0.0)),
    }


def kkt_residual(problem, z, multipliers) -> float:
    """Largest of the scaled KKT violations (see :func:`kkt_components`).

    >>> from govern.optim.problems import QuadraticProgram
    >>> qp = QuadraticProgram(H=[[2.0]], g=[0.0], A=[[-1.0]], b=[-2.0])
    >>> kkt_residual(qp, [2.0], [4.0])
    0.0
    """
    return max(kkt_components(problem, z, multipliers).values())
