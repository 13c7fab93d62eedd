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
"""Command governor pipeline."""

from govern import config

EXIT_SUCCESS = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CALIBRATION_CAP = 4


def _exit_code(error):
    """Map an exception raised by a pipeline step onto the process exit code."""
    from govern.cli.commands import CalibrationCapReached, CollectionFailed
    from govern.nn import NetFileError, TrainingError
    from govern.plant import EquilibriumError, PlantDomainError
    from govern.sensitivity import ContractError
    from govern.sim import SimulationAborted
    from govern.utils.io import ArtifactError

    if isinstance(error, CalibrationCapReached):
        return EXIT_CALIBRATION_CAP
    # Domain errors subclass ValueError and must be matched first
    numerical = (
        PlantDomainError,
        EquilibriumError,
        SimulationAborted,
        TrainingError,
        CollectionFailed,
    )
    if isinstance(error, numerical):
        return EXIT_NUMERICAL
    user_input = (
        config.ConfigError,
        ArtifactError,
        NetFileError,
        ContractError,
        FileNotFoundError,
    )
    if isinstance(error, user_input):
        return EXIT_CONFIG
    return None


def main(args=None):
    """Entry point."""
    import sys

    from govern.cli import commands
    from govern.cli.parser import parse_args

    try:
        opts = parse_args(args)
    except config.ConfigError as e:
        config.loggers.cli.critical('Invalid configuration: %s', e)
        sys.exit(EXIT_CONFIG)

    # Resolved settings of this run, kept next to its logs
    config_file = config.execution.log_dir / config.execution.run_uuid / config.CONFIG_FILENAME
    config.to_filename(config_file)
    config.loggers.cli.log(
        15,
        '\n'.join(['govern config:'] + [f'\t\t{s}' for s in config.dumps().splitlines()]),
    )

    command = getattr(commands, f'cmd_{opts.command}')
    kwargs = {'governor': opts.governor} if opts.command == 'run' else {}
    config.loggers.cli.log(25, f'govern {opts.command} started!')
    try:
        command(**kwargs)
    except Exception as e:
        errno = _exit_code(e)
        if errno is None:
            config.loggers.cli.critical('govern %s failed: %s', opts.command, e)
            raise
        config.loggers.cli.critical('govern %s failed (exit code %d): %s', opts.command, errno, e)
        sys.exit(errno)

    config.loggers.cli.log(25, f'govern {opts.command} finished successfully!')
    sys.exit(EXIT_SUCCESS)


if __name__ == '__main__':
    raise RuntimeError(
        'govern/cli/run.py should not be run directly;\n'
        'Please `pip install` govern and use the `govern` command'
    )
