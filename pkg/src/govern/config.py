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
r"""
A Python module to maintain unique, run-wide *govern* settings.

This module implements the memory structures to keep a consistent, singleton config.
Run configurations are written by users in JSON, e.g.:

.. literalinclude:: ../src/govern/data/default_config.json
   :language: json
   :caption: **Default run configuration of govern**.

and every command leaves a resolved copy of the settings under
``<output_dir>/logs/<run_uuid>/govern.toml``, written with :py:func:`to_filename`.

Configuration sections
----------------------
.. autoclass:: environment
   :members:
.. autoclass:: execution
   :members:
.. autoclass:: paths
   :members:
.. autoclass:: plant
   :members:
.. autoclass:: governor
   :members:
.. autoclass:: nn
   :members:
.. autoclass:: profiles
   :members:
.. autoclass:: calibration
   :members:
.. autoclass:: benchmark
   :members:
.. autoclass:: seeds
   :members:

Usage
-----

.. code-block:: Python

    from govern import config
    config.load('run.json')
    config.set_option('governor.horizon', '5')
    # Access configs from any code section as:
    value = config.section.setting

Logging
-------
.. autoclass:: loggers
   :members:

"""

import json
import logging
import os
import random
import sys
from copy import deepcopy
from pathlib import Path
from time import strftime
from uuid import uuid4

import numpy as np
import scipy

from . import __version__

logging.addLevelName(25, 'IMPORTANT')  # Add a new level between INFO and WARNING
logging.addLevelName(15, 'VERBOSE')  # Add a new level between INFO and DEBUG

CONFIG_FILENAME = 'govern.toml'

# Sections a user file may set; ``environment`` is only ever written out
SECTIONS = (
    'execution',
    'paths',
    'plant',
    'governor',
    'nn',
    'profiles',
    'calibration',
    'benchmark',
    'seeds',
)


class ConfigError(ValueError):
    """A configuration file or override could not be applied."""


class _Config:
    """An abstract class forbidding instantiation."""

    _paths = ()

    def __init__(self):
        """Avert instantiation."""
        raise RuntimeError('Configuration type is not instantiable.')

    @classmethod
    def load(cls, settings, init=True, ignore=None, strict=False):
        """Store settings from a dictionary."""
        ignore = ignore or {}
        for k, v in settings.items():
            if k in ignore or v is None:
                continue

            if k in cls._paths:
                # The output directory itself is relative to the working directory
                base = Path.cwd() if k == 'output_dir' else None
                setattr(cls, k, _resolve_path(v, base))
            elif hasattr(cls, k) and not k.startswith('_'):
                setattr(cls, k, deepcopy(v))
            elif strict:
                raise ConfigError(f'Unknown setting "{cls.__name__}.{k}".')

        if init:
            try:
                cls.init()
            except AttributeError:
                pass

    @classmethod
    def get(cls):
        """Return defined settings."""
        out = {}
        for k, v in cls.__dict__.items():
            if k.startswith('_') or v is None:
                continue

            if callable(getattr(cls, k)):
                continue

            if k in cls._paths:
                v = str(v)

            out[k] = deepcopy(v)
        return out


def _resolve_path(value, base=None):
    path = Path(value).expanduser()
    if not path.is_absolute():
        base = base or execution.output_dir or Path.cwd()
        path = Path(base) / path
    return path.absolute()


class environment(_Config):
    """
    Read-only options regarding the platform and environment.

    The ``environment`` section is not loaded in from file,
    only written out when settings are exported, so that every
    provenance stamp records the numerical stack a result came from.

    """

    cpu_count = os.cpu_count()
    """Number of available CPUs."""
    exec_env = os.name
    """A string representing the execution platform."""
    numpy_version = np.__version__
    """NumPy's current version."""
    python_version = '.'.join(str(v) for v in sys.version_info[:3])
    """Interpreter version."""
    scipy_version = scipy.__version__
    """SciPy's current version."""
    version = __version__
    """*govern*'s version."""


class execution(_Config):
    """Configure run-level settings."""

    log_dir = None
    """The path to a directory that contains execution logs."""
    log_level = 25
    """Output verbosity."""
    output_dir = Path('govern-out').absolute()
    """Folder where every artifact of the pipeline is written."""
    run_uuid = f"{strftime('%Y%m%d-%H%M%S')}_{uuid4()}"
    """Unique identifier of this particular run."""

    _paths = ('log_dir', 'output_dir')

    @classmethod
    def init(cls):
        """Derive the log directory from the output directory."""
        if cls.log_dir is None:
            cls.log_dir = cls.output_dir / 'logs'


class paths(_Config):
    """Locations of the pipeline artifacts (relative to :attr:`execution.output_dir`)."""

    dataset = 'dataset.csv'
    """Training dataset written by ``govern collect``."""
    net = 'net.json'
    """Trained network written by ``govern train``."""
    train_report = 'train_report.json'
    """Training report."""
    mbar = 'mbar.json'
    """Calibrated remainder bound written by ``govern calibrate``."""
    calibration_report = 'calibration_report.json'
    """Calibration report."""
    traces = 'traces'
    """Directory receiving one CSV trace per ``govern run``."""
    benchmark_report = 'benchmark.json'
    """Benchmark report written by ``govern benchmark``."""
    sensitivity = 'sensitivity.csv'
    """Sensitivity table written by ``govern sensitivity``."""

    _paths = (
        'dataset',
        'net',
        'train_report',
        'mbar',
        'calibration_report',
        'traces',
        'benchmark_report',
        'sensitivity',
    )

    @classmethod
    def init(cls):
        """Make every artifact path absolute."""
        for k in cls._paths:
            setattr(cls, k, _resolve_path(getattr(cls, k)))

    @classmethod
    def reset(cls):
        """Restore the default file names, relative to the output directory."""
        for k, v in _ARTIFACT_NAMES.items():
            setattr(cls, k, v)


_ARTIFACT_NAMES = {k: getattr(paths, k) for k in paths._paths}


class plant(_Config):
    """Plant selection and parameters (see :py:func:`govern.plant.plant_from_config`)."""

    kind = 'pendulum'
    """One of ``linear``, ``pendulum`` or ``dual_pendulum``."""
    Ts = 0.05
    """Sample time in seconds."""
    a = 4.0
    """Gravity-like stiffness of the pendulum."""
    b = 1.5
    """Viscous damping of the pendulum."""
    c = 1.0
    """Input gain of the pendulum."""
    x1_max = 0.6
    """Angle limit; the constrained output is ``x1 - x1_max``."""
    x2_max = 1.0
    """Negative rate limit of the dual-output pendulum (``-x2 - x2_max``)."""
    v_min = -3.0
    """Lower end of the admissible command interval."""
    v_max = 3.0
    """Upper end of the admissible command interval."""
    A = None
    """State matrix of a linear plant (nested lists)."""
    B = None
    """Input vector of a linear plant."""
    C = None
    """Output matrix of a linear plant."""
    D = None
    """Feedthrough vector of a linear plant."""
    state_bounds = None
    """Optional per-state ``[lo, hi]`` pairs of the operating box."""
    combine = None
    """Optional ``{"G": [[...]], "offset": [...]}`` output combination."""
    x0 = None
    """Initial state of simulations (defaults to the equilibrium of the first reference)."""


class governor(_Config):
    """Governor weights, horizon and solver tolerances."""

    horizon = 11
    """Prediction horizon ``N`` (the sequence has ``N + 1`` commands)."""
    rho = 1e8
    """Slack penalty applied to every output unless ``rho_i`` is given."""
    rho_i = None
    """Per-output slack penalties."""
    rho_s = 1e4
    """Command-rate penalty."""
    mbar = None
    """Per-output remainder bound used by NN-MCG (overridden by ``paths.mbar`` if present)."""
    past_inputs = True
    """Keep the sensitivity to past commands in the tightened constraints."""
    operating_command = 1.0
    """Constant command whose equilibrium anchors ``govern sensitivity``."""
    qp_tol = 1e-8
    """KKT tolerance of the QP/QCQP solver."""
    nlp_tol = 1e-6
    """KKT tolerance of the SQP solver."""
    max_iter = 100
    """Maximum number of major iterations of the solvers."""


class nn(_Config):
    """Network architectures and training schedule."""

    hidden_sizes = [[5], [10], [20]]
    """Architectures to try, each a list of hidden-layer widths."""
    trials = 3
    """Random restarts per architecture."""
    seed = None
    """Training seed (drawn from :attr:`seeds.master` if unset)."""
    max_epochs = 5000
    """Upper bound on training epochs."""
    patience = 50
    """Early-stopping patience in epochs."""
    val_fraction = 0.15
    """Fraction of records held out for validation."""
    learning_rate = 0.01
    """Step size of the adaptive-moment optimizer."""
    batch_size = 128
    """Mini-batch size."""


class profiles(_Config):
    """Reference profiles for data collection, calibration and evaluation."""

    collection = {
        'kind': 'prbs_steps',
        'seed': 1,
        'total_steps': 9200,
        'levels': [-3.0, 3.0],
    }
    """Profile driving the MCG during data collection."""
    calibration = {'kind': 'adversarial', 'total_steps': 1200}
    """Profile used for remainder-bound tuning."""
    evaluation = {
        'kind': 'drive_cycle_like',
        'seed': 7,
        'total_steps': 2000,
        'levels': [-1.0, 3.0],
    }
    """Profile used by ``govern run`` and ``govern benchmark``."""


class calibration(_Config):
    """Remainder-bound tuning."""

    viol_tol = 1e-6
    """Largest accepted soundness gap, in output units."""
    increment_factor = 2.0
    """Geometric escalation of a violating output's bound."""
    seed_value = 1e-3
    """Bound assigned when escalating from zero."""
    max_iter = 50
    """Iteration cap of the tuning loop."""
    curvature_samples = 0
    """Sampled states used to estimate a starting bound (zero starts from ``governor.mbar``)."""
    curvature_probes = 4
    """Random command sequences per sampled state."""


class benchmark(_Config):
    """Timing study."""

    methods = ['naive-nn', 'mcg', 'nn-mcg']
    """Governors to benchmark."""
    repeats = 5
    """Simulations per governor; the per-step minimum wall time is kept."""


class seeds(_Config):
    """Initialize the PRNG and track random seed assignments"""

    _random_seed = None
    master = None
    """Master random seed to initialize the Pseudorandom Number Generator (PRNG)"""
    curvature = None
    """Seed of the curvature-estimation probes"""

    @classmethod
    def init(cls):
        if cls._random_seed is not None:
            cls.master = cls._random_seed
        if cls.master is None:
            cls.master = random.randint(1, 65536)
        rng = random.Random(cls.master)
        if cls.curvature is None:
            cls.curvature = rng.randint(1, 65536)
        if nn.seed is None:
            nn.seed = rng.randint(1, 65536)


class loggers:
    """Keep loggers easily accessible (see :py:func:`init`)."""

    _fmt = '%(asctime)s,%(msecs)d %(name)-2s %(levelname)-2s:\n\t %(message)s'
    _datefmt = '%y%m%d-%H:%M:%S'

    default = logging.getLogger()
    """The root logger."""
    cli = logging.getLogger('cli')
    """Command-line interface logging."""
    governor = logging.getLogger('govern.governor')
    """Governor decisions and fallbacks."""
    solver = logging.getLogger('govern.optim')
    """Numerical solvers."""
    training = logging.getLogger('govern.nn')
    """Network training."""
    sim = logging.getLogger('govern.sim')
    """Closed-loop simulation, calibration and benchmarking."""

    @classmethod
    def init(cls):
        """
        Set the log level, initialize all loggers into :py:class:`loggers`.

            * Add new logger levels (25: IMPORTANT, and 15: VERBOSE).
            * Add a new sub-logger (``cli``).
            * Logger configuration.

        """
        _handler = None
        for logger in (cls.cli, cls.governor, cls.solver, cls.training, cls.sim):
            if not logger.hasHandlers():
                if _handler is None:
                    _handler = logging.StreamHandler(stream=sys.stdout)
                    _handler.setFormatter(logging.Formatter(fmt=cls._fmt, datefmt=cls._datefmt))
                logger.addHandler(_handler)
            logger.setLevel(execution.log_level)
        cls.default.setLevel(execution.log_level)


def from_dict(settings, init=True, ignore=None, strict=False):
    """Read settings from a nested dictionary keyed by section name.

    Arguments
    ---------
    settings : dict
        Settings to apply, e.g. ``{"plant": {"kind": "linear"}}``
    init : `bool` or :py:class:`~collections.abc.Container`
        Initialize all, none, or a subset of configurations.
    ignore : :py:class:`~collections.abc.Container`
        Collection of keys in ``setting`` to ignore
    strict : bool
        Raise :py:class:`ConfigError` on unknown sections or keys.
    """

    # Accept global True/False or container of configs to initialize
    def initialize(x):
        return init if init in (True, False) else x in init

    if strict:
        unknown = set(settings) - set(SECTIONS) - {'environment'}
        if unknown:
            raise ConfigError(f'Unknown configuration section(s): {", ".join(sorted(unknown))}.')

    # execution first: relative paths resolve against the output directory
    for sectionname in SECTIONS:
        section = getattr(sys.modules[__name__], sectionname)
        section.load(
            settings.get(sectionname, {}),
            init=initialize(sectionname),
            ignore=ignore,
            strict=strict,
        )

    loggers.init()


def read_settings(filename):
    """Parse a JSON run configuration or a TOML snapshot into a dictionary of sections."""
    filename = Path(filename)
    if not filename.is_file():
        raise ConfigError(f'Configuration file not found: <{filename}>.')

    text = filename.read_text()
    try:
        if filename.suffix == '.toml':
            from toml import loads

            settings = loads(text)
        else:
            settings = json.loads(text)
    except ValueError as e:
        raise ConfigError(f'Could not parse configuration file <{filename}>: {e}') from e

    if not isinstance(settings, dict):
        raise ConfigError(f'Configuration file <{filename}> must hold an object of sections.')
    return settings


def load(filename, init=True, strict=True):
    """Load settings from a JSON run configuration or a TOML snapshot.

    Arguments
    ---------
    filename : :py:class:`os.PathLike`
        JSON (``.json``) or TOML (``.toml``) file containing *govern* configuration.
    init : `bool` or :py:class:`~collections.abc.Container`
        Initialize all, none, or a subset of configurations.
    """
    from_dict(read_settings(filename), init=init, strict=strict)


def set_option(key, value):
    """Apply a ``section.key=value`` override (``--set`` on the command line).

    The value is parsed as a JSON literal when possible and kept as a string otherwise.
    Dotted keys deeper than two levels update nested dictionaries.

    >>> set_option('governor.horizon', '5'); governor.horizon
    5
    >>> set_option('profiles.evaluation.total_steps', '300')
    >>> profiles.evaluation['total_steps']
    300
    >>> set_option('governor.horizon', '11')
    """
    parts = key.split('.')
    if len(parts) < 2 or parts[0] not in SECTIONS:
        raise ConfigError(f'Override key must look like "<section>.<setting>", got "{key}".')

    if isinstance(value, str):
        try:
            value = json.loads(value)
        except ValueError:
            pass

    section = getattr(sys.modules[__name__], parts[0])
    name = parts[1]
    if name.startswith('_') or not hasattr(section, name):
        raise ConfigError(f'Unknown setting "{parts[0]}.{name}".')

    if len(parts) == 2:
        section.load({name: value}, init=False, strict=True)
        return

    target = getattr(section, name)
    if target is None:
        target = {}
        setattr(section, name, target)
    for depth, part in enumerate(parts[2:], start=2):
        if not isinstance(target, dict):
            raise ConfigError(
                f'Cannot set "{key}": "{".".join(parts[:depth])}" is not a mapping.'
            )
        if depth == len(parts) - 1:
            break
        target = target.setdefault(part, {})
    target[parts[-1]] = value


def get(flat=False):
    """Get config as a dict."""
    settings = {'environment': environment.get()}
    settings.update(
        {name: getattr(sys.modules[__name__], name).get() for name in SECTIONS}
    )
    if not flat:
        return settings

    return {
        '.'.join((section, k)): v
        for section, configs in settings.items()
        for k, v in configs.items()
    }


def dumps():
    """Format config into toml."""
    from toml import dumps

    return dumps(get())


def to_filename(filename):
    """Write settings to file."""
    filename = Path(filename)
    filename.parent.mkdir(exist_ok=True, parents=True)
    filename.write_text(dumps())
