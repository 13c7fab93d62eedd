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
Pipeline steps behind the ``govern`` sub-commands.

Every step reads the settings from :mod:`govern.config`, consumes the artifacts left by
earlier steps under :attr:`govern.config.paths` and writes its own, each JSON artifact
carrying a provenance stamp.
"""

import numpy as np
import pandas as pd

from govern import config
from govern.config import ConfigError
from govern.utils.io import load_mbar, provenance_stamp, write_json

#: Largest tolerated fraction of failed governor solves while collecting data
MAX_FAILURE_RATE = 0.01


class CollectionFailed(RuntimeError):
    """Too many governor solves failed while collecting the training data."""


class CalibrationCapReached(RuntimeError):
    """Curvature-bound tuning hit its iteration cap."""


def _require(path, producer):
    if not path.is_file():
        raise ConfigError(f'Missing input <{path}>; run "govern {producer}" first.')
    return path


def _plant():
    from govern.plant import plant_from_config

    try:
        return plant_from_config(config.plant.get())
    except (ValueError, TypeError) as e:
        raise ConfigError(f'Invalid plant configuration: {e}') from e


def _weights():
    from govern.mcg import weights_from_config

    try:
        return weights_from_config(config.governor.get())
    except (ValueError, TypeError) as e:
        raise ConfigError(f'Invalid governor configuration: {e}') from e


def _profile(name, plant):
    from govern.sim import profile_from_config

    try:
        return profile_from_config(getattr(config.profiles, name), plant.input_interval)
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(f'Invalid "profiles.{name}" configuration: {e}') from e


def _x0():
    return None if config.plant.x0 is None else np.asarray(config.plant.x0, dtype=float)


def _nnmcg_config(plant, weights, net, mbar=None):
    from govern.nnmcg import NnmcgConfig

    if mbar is None:
        if config.paths.mbar.is_file():
            mbar = load_mbar(config.paths.mbar, plant.n_y)
        elif config.governor.mbar is not None:
            mbar = config.governor.mbar
        else:
            raise ConfigError(
                f'No curvature bound: run "govern calibrate" or set governor.mbar '
                f'(looked for <{config.paths.mbar}>).'
            )
    mbar = np.broadcast_to(np.asarray(mbar, dtype=float), (plant.n_y,)).copy()
    return NnmcgConfig(weights, mbar, net, past_inputs=bool(config.governor.past_inputs))


def _governor(name, plant, weights):
    from govern.nn import load_net
    from govern.sim import build_governor

    net = nnmcg = None
    key = name.replace('_', '-')
    if key in ('naive-nn', 'nn-mcg'):
        net = load_net(_require(config.paths.net, 'train'))
    if key == 'nn-mcg':
        nnmcg = _nnmcg_config(plant, weights, net)
    tol = config.governor.nlp_tol if key == 'mcg' else config.governor.qp_tol
    return build_governor(
        key,
        plant,
        weights=weights,
        net=net,
        config=nnmcg,
        tol=tol,
        max_iter=config.governor.max_iter,
    )


def cmd_collect():
    """Record the exact governor over the collection profile."""
    from govern.nn import collect_dataset

    plant, weights = _plant(), _weights()
    profile = _profile('collection', plant)
    dataset = collect_dataset(
        plant,
        weights,
        profile,
        x0=_x0(),
        tol=config.governor.nlp_tol,
        max_iter=config.governor.max_iter,
    )

    failure_rate = float(np.mean(~dataset.valid))
    if failure_rate > MAX_FAILURE_RATE:
        raise CollectionFailed(
            f'{failure_rate:.2%} of governor solves failed during collection '
            f'(tolerated: {MAX_FAILURE_RATE:.0%}).'
        )

    dataset.save(config.paths.dataset)
    write_json(
        config.paths.dataset.with_suffix('.json'),
        provenance_stamp(
            'collect',
            plant,
            profile_id=profile.profile_id,
            records=len(dataset),
            failure_rate=failure_rate,
        ),
    )
    config.loggers.cli.log(
        25, f'Wrote {int(dataset.valid.sum())} records to <{config.paths.dataset}>.'
    )
    return dataset


def cmd_train():
    """Fit the network approximation on the collected dataset."""
    from govern.nn import TrainingDataset, save_net, train

    dataset = TrainingDataset.load(_require(config.paths.dataset, 'collect'))
    if dataset.horizon != config.governor.horizon:
        raise ConfigError(
            f'Dataset horizon is {dataset.horizon}, governor.horizon is {config.governor.horizon}.'
        )
    net, report = train(
        dataset,
        config.nn.hidden_sizes,
        trials=config.nn.trials,
        seed=config.nn.seed,
        max_epochs=config.nn.max_epochs,
        patience=config.nn.patience,
        val_fraction=config.nn.val_fraction,
        learning_rate=config.nn.learning_rate,
        batch_size=config.nn.batch_size,
    )
    config.paths.net.parent.mkdir(exist_ok=True, parents=True)
    save_net(net, config.paths.net)
    write_json(
        config.paths.train_report,
        {**report.to_dict(), 'provenance': provenance_stamp('train', _plant())},
    )
    config.loggers.cli.log(
        25,
        f'Selected architecture {report.hidden_sizes} with RMSE {report.final_rmse:.4g}; '
        f'network written to <{config.paths.net}>.',
    )
    return net, report


def cmd_calibrate():
    """Tune the curvature bound of the tightened governor in closed loop."""
    from govern.nn import load_net
    from govern.nnmcg import CAP_REACHED, tune_mbar
    from govern.sensitivity import estimate_curvature

    plant, weights = _plant(), _weights()
    net = load_net(_require(config.paths.net, 'train'))

    if config.calibration.curvature_samples:
        rng = np.random.default_rng(config.seeds.curvature)
        states = plant.sample_states(rng, int(config.calibration.curvature_samples))
        mbar0 = estimate_curvature(
            plant,
            states,
            weights.horizon,
            probes=int(config.calibration.curvature_probes),
            seed=config.seeds.curvature,
        )
        config.loggers.cli.log(15, f'Sampled curvature bound: {mbar0.tolist()}.')
    else:
        mbar0 = np.zeros(plant.n_y) if config.governor.mbar is None else config.governor.mbar

    profile = _profile('calibration', plant)
    report, tuned = tune_mbar(
        plant,
        _nnmcg_config(plant, weights, net, mbar=mbar0),
        profile,
        x0=_x0(),
        viol_tol=config.calibration.viol_tol,
        increment_factor=config.calibration.increment_factor,
        seed_value=config.calibration.seed_value,
        max_iter=config.calibration.max_iter,
        tol=config.governor.qp_tol,
    )

    stamp = provenance_stamp('calibrate', plant)
    write_json(config.paths.calibration_report, {**report.to_dict(), 'provenance': stamp})
    if report.status == CAP_REACHED:
        raise CalibrationCapReached(report.message)

    write_json(config.paths.mbar, {'mbar': tuned.mbar, 'provenance': stamp})
    config.loggers.cli.log(
        25,
        f'Calibrated bound {report.mbar_final} after {report.iterations} iteration(s); '
        f'written to <{config.paths.mbar}>.',
    )
    return report


def cmd_run(governor='nn-mcg'):
    """Simulate one governor over the evaluation profile and write its trace."""
    from govern.sim import SimulationAborted, run_closed_loop

    plant, weights = _plant(), _weights()
    profile = _profile('evaluation', plant)
    gov = _governor(governor, plant, weights)
    out_file = config.paths.traces / f'{gov.name}.csv'
    out_file.parent.mkdir(exist_ok=True, parents=True)

    try:
        trace = run_closed_loop(plant, gov, profile, x0=_x0())
    except SimulationAborted as e:
        e.trace.to_csv(out_file)
        config.loggers.cli.error(f'Partial trace ({e.step} steps) written to <{out_file}>.')
        raise

    trace.to_csv(out_file)
    config.loggers.cli.log(
        25,
        f'Governor "{gov.name}": max output {np.max(trace.y):.4g}, constraints '
        f'{"satisfied" if trace.constraint_satisfied() else "VIOLATED"}; '
        f'trace written to <{out_file}>.',
    )
    return trace


def cmd_benchmark():
    """Time the configured governors over the evaluation profile."""
    from govern.sim import benchmark

    plant, weights = _plant(), _weights()
    profile = _profile('evaluation', plant)
    governors = [_governor(name, plant, weights) for name in config.benchmark.methods]
    report = benchmark(plant, governors, profile, repeats=config.benchmark.repeats, x0=_x0())
    write_json(
        config.paths.benchmark_report,
        {**report.to_dict(), 'provenance': provenance_stamp('benchmark', plant)},
    )
    config.loggers.cli.log(
        25,
        '\n'.join(['Benchmark results:'] + report.to_frame().to_string().splitlines()),
    )
    return report


def cmd_sensitivity():
    """Tabulate ``|S_y(i, j, k)|`` around the equilibrium of the operating command."""
    from govern.plant import equilibrium
    from govern.sensitivity import sensitivity_bundle

    plant, weights = _plant(), _weights()
    v = plant.input_interval.saturate(float(config.governor.operating_command))
    x_eq = equilibrium(plant, v)
    bundle = sensitivity_bundle(plant, x_eq, np.full(weights.n_commands, v))

    i, j, k = np.meshgrid(
        np.arange(plant.n_y),
        np.arange(weights.n_commands),
        np.arange(weights.n_commands),
        indexing='ij',
    )
    table = pd.DataFrame(
        {
            'output': i.ravel(),
            'j': j.ravel(),
            'k': k.ravel(),
            'abs_sensitivity': np.abs(bundle.S_y).ravel(),
        }
    )
    config.paths.sensitivity.parent.mkdir(exist_ok=True, parents=True)
    table.to_csv(config.paths.sensitivity, index=False, float_format='%.17g')
    config.loggers.cli.log(25, f'Sensitivity table written to <{config.paths.sensitivity}>.')
    return table
