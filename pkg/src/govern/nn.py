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
Feedforward approximation of the governor law.

The network maps ``[x; r]`` to a whole command sequence. Inputs are standardized per
feature and outputs share a single shift and scale, all fit on the training split.

Datasets
--------
.. autoclass:: TrainingDataset
   :members: save, load

Networks
--------
.. autoclass:: FeedforwardNet
.. autofunction:: train
.. autofunction:: infer
.. autofunction:: save_net
.. autofunction:: load_net

"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from govern.utils.io import ArtifactError

LOGGER = logging.getLogger('govern.nn')

ACTIVATIONS = ('tanh', 'linear')


class NetFileError(ValueError):
    """A network file could not be parsed."""


class TrainingError(RuntimeError):
    """No training trial produced a usable network."""


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = 'tanh'

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.b.size != self.W.shape[0]:
            raise ValueError(
                f'Bias has {self.b.size} entries, weight matrix {self.W.shape[0]} rows.'
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f'Unknown activation "{self.activation}".')


@dataclass
class FeedforwardNet:
    """Tanh hidden layers followed by a linear output layer."""

    layers: list[Layer]
    shift: np.ndarray
    scale: np.ndarray
    output_shift: float = 0.0
    output_scale: float = 1.0

    def __post_init__(self):
        self.shift = np.asarray(self.shift, dtype=float).reshape(-1)
        self.scale = np.asarray(self.scale, dtype=float).reshape(-1)
        self.output_shift = float(self.output_shift)
        self.output_scale = float(self.output_scale)
        if not self.layers:
            raise ValueError('A network needs at least one layer.')
        if self.shift.size != self.input_dim or self.scale.size != self.input_dim:
            raise ValueError('Normalization does not match the input dimension.')
        if np.any(self.scale <= 0) or self.output_scale <= 0:
            raise ValueError('Normalization scales must be strictly positive.')
        for k in range(1, len(self.layers)):
            if self.layers[k].W.shape[1] != self.layers[k - 1].W.shape[0]:
                raise ValueError(f'Layer {k} does not chain onto layer {k - 1}.')
        if self.layers[-1].activation != 'linear':
            raise ValueError('The output layer must be linear.')

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[0]

    @property
    def hidden_sizes(self) -> list[int]:
        return [layer.W.shape[0] for layer in self.layers[:-1]]

    def normalize(self, X):
        return (np.asarray(X, dtype=float) - self.shift) / self.scale

    def denormalize_input(self, Z):
        return np.asarray(Z, dtype=float) * self.scale + self.shift

    def forward(self, X, keep=False):
        """Evaluate a batch ``(n, input_dim)``; with ``keep`` also return activations."""
        h = self.normalize(X)
        activations = [h]
        for layer in self.layers:
            h = h @ layer.W.T + layer.b
            if layer.activation == 'tanh':
                h = np.tanh(h)
            activations.append(h)
        out = h * self.output_scale + self.output_shift
        return (out, activations) if keep else out

    def copy(self) -> FeedforwardNet:
        return FeedforwardNet(
            [Layer(layer.W.copy(), layer.b.copy(), layer.activation) for layer in self.layers],
            self.shift.copy(),
            self.scale.copy(),
            self.output_shift,
            self.output_scale,
        )


def infer(net: FeedforwardNet, x, r: float) -> np.ndarray:
    """Approximate command sequence at state ``x`` and reference ``r``."""
    inputs = np.r_[np.asarray(x, dtype=float).reshape(-1), float(r)]
    return net.forward(inputs[None, :])[0]


@dataclass
class TrainingDataset:
    """States, references and optimal command sequences recorded in closed loop."""

    states: np.ndarray
    references: np.ndarray
    labels: np.ndarray
    valid: np.ndarray | None = None
    """Records whose governor solve succeeded; the others are excluded from training."""

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.references = np.asarray(self.references, dtype=float).reshape(-1)
        self.labels = np.atleast_2d(np.asarray(self.labels, dtype=float))
        n = self.references.size
        if self.states.shape[0] != n or self.labels.shape[0] != n:
            raise ValueError('States, references and labels must have one row per record.')
        self.valid = np.ones(n, dtype=bool) if self.valid is None else np.asarray(self.valid, bool)
        usable = self.inputs[self.valid], self.labels[self.valid]
        if not all(np.all(np.isfinite(a)) for a in usable):
            raise ValueError('Dataset contains non-finite entries.')

    def __len__(self):
        return self.references.size

    @property
    def n_x(self) -> int:
        return self.states.shape[1]

    @property
    def horizon(self) -> int:
        return self.labels.shape[1] - 1

    @property
    def inputs(self) -> np.ndarray:
        return np.column_stack([self.states, self.references])

    def usable(self) -> TrainingDataset:
        """The subset of valid records."""
        return TrainingDataset(
            self.states[self.valid], self.references[self.valid], self.labels[self.valid]
        )

    def to_frame(self) -> pd.DataFrame:
        data = self.usable()
        columns = {f'x{k}': data.states[:, k] for k in range(self.n_x)}
        columns['r'] = data.references
        columns.update({f'v{k}': data.labels[:, k] for k in range(self.horizon + 1)})
        return pd.DataFrame(columns)

    def save(self, path):
        """Write valid records as CSV (``x0..,r,v0..``), 17 significant digits."""
        dropped = int(np.count_nonzero(~self.valid))
        if dropped:
            LOGGER.warning('Dropping %d flagged records from <%s>.', dropped, path)
        self.to_frame().to_csv(path, index=False, float_format='%.17g')

    @classmethod
    def load(cls, path) -> TrainingDataset:
        try:
            frame = pd.read_csv(path, float_precision='round_trip')
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            raise ArtifactError(f'Cannot parse dataset <{path}>: {e}') from e
        x_cols = [c for c in frame.columns if c.startswith('x')]
        v_cols = [c for c in frame.columns if c.startswith('v')]
        expected = [f'x{k}' for k in range(len(x_cols))] + ['r'] + [
            f'v{k}' for k in range(len(v_cols))
        ]
        if list(frame.columns) != expected or not x_cols or not v_cols:
            raise ArtifactError(f'Unexpected dataset header in <{path}>: {list(frame.columns)}.')
        return cls(frame[x_cols].to_numpy(), frame['r'].to_numpy(), frame[v_cols].to_numpy())


@dataclass
class TrainReport:
    """Outcome of :func:`train`."""

    final_rmse: float
    """RMSE of the selected network over every usable record, in command units."""
    validation_rmse: float
    epochs: int
    n_train: int
    n_validation: int
    seed: int
    hidden_sizes: list[int]
    trials: list[dict] = field(default_factory=list)
    checkpoints: list[float] = field(default_factory=list)
    """Best validation RMSE each time it improved, across all trials."""

    def to_dict(self) -> dict:
        return asdict(self)


def collect_dataset(plant, weights, profile, x0=None, tol=1e-6, max_iter=100) -> TrainingDataset:
    """Run the exact governor over ``profile`` and record ``(x, r) -> V*`` pairs."""
    from govern.mcg import MultiTimestepGovernor
    from govern.optim import OPTIMAL
    from govern.sim import run_closed_loop

    governor = MultiTimestepGovernor(plant, weights, tol=tol, max_iter=max_iter)
    trace = run_closed_loop(plant, governor, profile, x0=x0)
    valid = np.array([status == OPTIMAL for status in trace.status], dtype=bool)
    if not np.all(valid):
        LOGGER.warning('%d of %d records flagged by solver status.', (~valid).sum(), valid.size)
    return TrainingDataset(trace.x, trace.r, np.array(trace.V_star), valid)


def rmse(net: FeedforwardNet, dataset: TrainingDataset) -> float:
    """Root-mean-square error over every record and every output coordinate."""
    data = dataset.usable()
    if not len(data):
        raise ValueError('RMSE of an empty dataset is undefined.')
    err = net.forward(data.inputs) - data.labels
    return float(np.sqrt(np.mean(err**2)))


def loss_and_gradients(net: FeedforwardNet, X, Y):
    """Mean squared error of denormalized outputs and its gradients.

    Returns
    -------
    loss : float
    grads : list of (dW, db)
        One pair per layer, shaped like the layer parameters.
    """
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    out, activations = net.forward(X, keep=True)
    err = out - Y
    loss = float(np.mean(err**2))

    delta = 2.0 * err * net.output_scale / err.size
    grads = []
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if layer.activation == 'tanh':
            delta = delta * (1.0 - activations[k + 1] ** 2)
        grads.append((delta.T @ activations[k], delta.sum(axis=0)))
        delta = delta @ layer.W
    return loss, grads[::-1]


def _fit_normalization(X, Y):
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale <= 0] = 1.0
    output_scale = float(Y.std())
    return shift, scale, float(Y.mean()), output_scale if output_scale > 0 else 1.0


def _init_net(rng, hidden, n_in, n_out, normalization) -> FeedforwardNet:
    sizes = [n_in, *hidden, n_out]
    layers = [
        Layer(
            rng.normal(0.0, np.sqrt(1.0 / sizes[k]), size=(sizes[k + 1], sizes[k])),
            np.zeros(sizes[k + 1]),
            'tanh' if k + 2 < len(sizes) else 'linear',
        )
        for k in range(len(sizes) - 1)
    ]
    return FeedforwardNet(layers, *normalization)


def _fit_trial(net, rng, X_tr, Y_tr, X_val, Y_val, max_epochs, patience, lr, batch_size):
    """Adam with mini-batches and early stopping on validation RMSE."""
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    params = [p for layer in net.layers for p in (layer.W, layer.b)]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]

    best, best_rmse, best_epoch, improvements = net.copy(), np.inf, 0, []
    t = 0
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(X_tr.shape[0])
        for start in range(0, order.size, batch_size):
            idx = order[start : start + batch_size]
            loss, grads = loss_and_gradients(net, X_tr[idx], Y_tr[idx])
            if not np.isfinite(loss):
                return None, np.inf, epoch, improvements
            t += 1
            flat = [g for pair in grads for g in pair]
            for k, (p, g) in enumerate(zip(params, flat, strict=True)):
                m[k] = beta1 * m[k] + (1 - beta1) * g
                v[k] = beta2 * v[k] + (1 - beta2) * g**2
                m_hat = m[k] / (1 - beta1**t)
                v_hat = v[k] / (1 - beta2**t)
                p -= lr * m_hat / (np.sqrt(v_hat) + eps)

        val_rmse = float(np.sqrt(np.mean((net.forward(X_val) - Y_val) ** 2)))
        if not np.isfinite(val_rmse):
            return None, np.inf, epoch, improvements
        if val_rmse < best_rmse:
            best, best_rmse, best_epoch = net.copy(), val_rmse, epoch
            improvements.append(val_rmse)
        elif epoch - best_epoch >= patience:
            break
    return best, best_rmse, best_epoch, improvements


def train(
    dataset: TrainingDataset,
    hidden_sizes,
    trials: int = 3,
    seed: int = 0,
    max_epochs: int = 5000,
    patience: int = 50,
    val_fraction: float = 0.15,
    learning_rate: float = 1e-2,
    batch_size: int = 128,
):
    """Train every architecture ``trials`` times and keep the best validation RMSE.

    Parameters
    ----------
    hidden_sizes : list of list of int
        Architectures to try, e.g. ``[[5], [10], [20]]``.

    Returns
    -------
    net : :obj:`FeedforwardNet`
    report : :obj:`TrainReport`
    """
    data = dataset.usable()
    if not len(data):
        raise ValueError('Cannot train on an empty dataset.')
    if not hidden_sizes:
        raise ValueError('At least one architecture is required.')

    X, Y = data.inputs, data.labels
    order = np.random.default_rng(seed).permutation(len(data))
    n_val = int(round(val_fraction * len(data))) if len(data) > 1 else 0
    val_idx, tr_idx = order[:n_val], order[n_val:]
    if n_val == 0:
        val_idx = tr_idx
    X_tr, Y_tr, X_val, Y_val = X[tr_idx], Y[tr_idx], X[val_idx], Y[val_idx]
    normalization = _fit_normalization(X_tr, Y_tr)

    best_net, best_rmse, best_info = None, np.inf, None
    outcomes, checkpoints = [], []
    for a_index, hidden in enumerate(hidden_sizes):
        hidden = [int(h) for h in hidden]
        for trial in range(trials):
            rng = np.random.default_rng([seed, a_index, trial])
            net = _init_net(rng, hidden, X.shape[1], Y.shape[1], normalization)
            fitted, val_rmse, epochs, improvements = _fit_trial(
                net, rng, X_tr, Y_tr, X_val, Y_val, max_epochs, patience, learning_rate, batch_size
            )
            diverged = fitted is None
            outcomes.append(
                {
                    'hidden_sizes': hidden,
                    'trial': trial,
                    'validation_rmse': None if diverged else val_rmse,
                    'epochs': epochs,
                    'diverged': diverged,
                }
            )
            if diverged:
                LOGGER.warning(
                    'Trial %d of architecture %s diverged at epoch %d.', trial, hidden, epochs
                )
                continue

            LOGGER.log(
                15,
                'Architecture %s, trial %d: validation RMSE %.4g after %d epochs.',
                hidden,
                trial,
                val_rmse,
                epochs,
            )
            for value in improvements:
                if not checkpoints or value < checkpoints[-1]:
                    checkpoints.append(value)
            if val_rmse < best_rmse:
                best_net, best_rmse, best_info = fitted, val_rmse, (hidden, epochs)

    if best_net is None:
        raise TrainingError(
            'Every training trial diverged: '
            + '; '.join(
                f'{o["hidden_sizes"]}#{o["trial"]} at epoch {o["epochs"]}' for o in outcomes
            )
        )

    report = TrainReport(
        final_rmse=rmse(best_net, data),
        validation_rmse=float(best_rmse),
        epochs=best_info[1],
        n_train=int(tr_idx.size),
        n_validation=int(n_val),
        seed=int(seed),
        hidden_sizes=best_info[0],
        trials=outcomes,
        checkpoints=[float(c) for c in checkpoints],
    )
    return best_net, report


def net_to_dict(net: FeedforwardNet) -> dict:
    return {
        'input_dim': net.input_dim,
        'output_dim': net.output_dim,
        'normalization': {
            'shift': net.shift.tolist(),
            'scale': net.scale.tolist(),
            'output_shift': net.output_shift,
            'output_scale': net.output_scale,
        },
        'layers': [
            {
                'rows': layer.W.shape[0],
                'cols': layer.W.shape[1],
                'W': layer.W.reshape(-1).tolist(),
                'b': layer.b.tolist(),
                'activation': layer.activation,
            }
            for layer in net.layers
        ],
    }


def _field(obj, key, path, source):
    if not isinstance(obj, dict) or key not in obj:
        raise NetFileError(f'{source}: missing field "{path}".')
    return obj[key]


def net_from_dict(data: dict, source='<net>') -> FeedforwardNet:
    """Rebuild a network, naming the offending field on malformed input."""
    norm = _field(data, 'normalization', 'normalization', source)
    raw_layers = _field(data, 'layers', 'layers', source)
    if not isinstance(raw_layers, list) or not raw_layers:
        raise NetFileError(f'{source}: field "layers" must be a non-empty list.')

    layers = []
    for k, raw in enumerate(raw_layers):
        prefix = f'layers[{k}]'
        rows = _field(raw, 'rows', f'{prefix}.rows', source)
        cols = _field(raw, 'cols', f'{prefix}.cols', source)
        W = _field(raw, 'W', f'{prefix}.W', source)
        b = _field(raw, 'b', f'{prefix}.b', source)
        activation = _field(raw, 'activation', f'{prefix}.activation', source)
        if len(W) != rows * cols:
            raise NetFileError(
                f'{source}: field "{prefix}.W" has {len(W)} entries, expected {rows * cols}.'
            )
        try:
            W = np.reshape(np.asarray(W, dtype=float), (rows, cols))
            layers.append(Layer(W, b, activation))
        except (TypeError, ValueError) as e:
            raise NetFileError(f'{source}: field "{prefix}": {e}') from e

    try:
        net = FeedforwardNet(
            layers,
            _field(norm, 'shift', 'normalization.shift', source),
            _field(norm, 'scale', 'normalization.scale', source),
            norm.get('output_shift', 0.0),
            norm.get('output_scale', 1.0),
        )
    except ValueError as e:
        if isinstance(e, NetFileError):
            raise
        raise NetFileError(f'{source}: {e}') from e

    for key, value in (('input_dim', net.input_dim), ('output_dim', net.output_dim)):
        if key in data and data[key] != value:
            raise NetFileError(f'{source}: field "{key}" is {data[key]}, layers imply {value}.')
    return net


def save_net(net: FeedforwardNet, path):
    """Write ``net`` as JSON (floats keep their shortest round-trip repr)."""
    Path(path).write_text(json.dumps(net_to_dict(net), indent=2))


def load_net(path) -> FeedforwardNet:
    """Read a network written by :func:`save_net`."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise NetFileError(f'{path}: line {e.lineno}, column {e.colno}: {e.msg}') from e
    return net_from_dict(data, source=str(path))
