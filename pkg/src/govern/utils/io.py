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
"""Reading and writing pipeline artifacts."""

import hashlib
import json
from pathlib import Path
from time import strftime

import numpy as np


class ArtifactError(ValueError):
    """A pipeline artifact on disk is malformed or does not fit the run."""


def _to_builtin(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f'Object of type {type(obj).__name__} is not JSON serializable')


def write_json(path, data):
    """Write ``data`` as indented JSON, converting numpy values on the way."""
    path = Path(path)
    path.parent.mkdir(exist_ok=True, parents=True)
    path.write_text(json.dumps(data, indent=2, default=_to_builtin))
    return path


def read_json(path) -> dict:
    """Read a JSON artifact, naming the file and position on syntax errors."""
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ArtifactError(
            f'JSON syntax error in <{path}> at line {e.lineno}, column {e.colno}: {e.msg}.'
        ) from e


def plant_hash(plant) -> str:
    """SHA-256 of the plant parameters, stable across key order.

    >>> from govern.plant import PendulumPlant
    >>> plant_hash(PendulumPlant()) == plant_hash(PendulumPlant())
    True
    """
    text = json.dumps(plant.describe(), sort_keys=True, default=_to_builtin)
    return hashlib.sha256(text.encode()).hexdigest()


def provenance_stamp(command: str, plant=None, **extra) -> dict:
    """Settings an artifact was produced with, for embedding in its JSON."""
    from govern import config

    stamp = {
        'command': command,
        'version': config.environment.version,
        'run_uuid': config.execution.run_uuid,
        'created': strftime('%Y-%m-%dT%H:%M:%S'),
        'seed': config.seeds.master,
        'weights': {
            k: getattr(config.governor, k) for k in ('horizon', 'rho', 'rho_i', 'rho_s')
        },
    }
    if plant is not None:
        stamp['plant'] = plant.describe()
        stamp['plant_hash'] = plant_hash(plant)
    stamp.update(extra)
    return stamp


def load_mbar(path, n_y: int) -> np.ndarray:
    """Read the calibrated bound written by ``govern calibrate``."""
    data = read_json(path)
    if not isinstance(data, dict) or 'mbar' not in data:
        raise ArtifactError(f'<{path}> has no "mbar" entry.')
    try:
        mbar = np.atleast_1d(np.asarray(data['mbar'], dtype=float))
    except (TypeError, ValueError) as e:
        raise ArtifactError(f'<{path}>: "mbar" is not a list of numbers ({e}).') from e
    if mbar.ndim != 1 or not np.all(np.isfinite(mbar)) or np.any(mbar < 0):
        raise ArtifactError(f'<{path}>: "mbar" must be a flat list of non-negative numbers.')
    if mbar.size != n_y:
        raise ArtifactError(
            f'<{path}> holds {mbar.size} curvature bounds, plant has {n_y} outputs.'
        )
    return mbar
