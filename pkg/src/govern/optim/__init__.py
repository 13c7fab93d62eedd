# emacs: -*- mode: python; py-indent-offset: 4; indent-tabs-mode: nil -*-
# vi: set ft=python sts=4 ts=4 sw=4 et:
"""Numerical solvers.

.. autofunction:: solve_qp
.. autofunction:: solve_qcqp
.. autofunction:: solve_nlp
.. autofunction:: kkt_residual

"""

from govern.optim.kkt import kkt_residual
from govern.optim.nlp import solve_nlp
from govern.optim.problems import (
    INFEASIBLE_NUMERICS,
    MAX_ITER,
    OPTIMAL,
    NlpProblem,
    QcqpProblem,
    QuadraticConstraint,
    QuadraticProgram,
    SolveReport,
)
from govern.optim.qcqp import solve_qcqp
from govern.optim.qp import solve_qp

__all__ = [
    'INFEASIBLE_NUMERICS',
    'MAX_ITER',
    'OPTIMAL',
    'NlpProblem',
    'QcqpProblem',
    'QuadraticConstraint',
    'QuadraticProgram',
    'SolveReport',
    'kkt_residual',
    'solve_nlp',
    'solve_qcqp',
    'solve_qp',
]
