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
"""Parser."""

from govern import config

COMMANDS = ('collect', 'train', 'calibrate', 'run', 'benchmark', 'sensitivity')


def _build_parser(**kwargs):
    """Build parser object.

    ``kwargs`` are passed to ``argparse.ArgumentParser`` (mainly useful for debugging).
    """

    from argparse import ArgumentDefaultsHelpFormatter, ArgumentParser
    from functools import partial
    from pathlib import Path

    from govern.sim import GOVERNOR_NAMES

    def _is_file(path, parser):
        """Ensure a given path exists and it is a file."""
        if path is None or not Path(path).is_file():
            raise parser.error(f'Path should point to a file (or symlink of file): <{path}>.')
        return Path(path).absolute()

    def _key_value(value, parser):
        """Split a ``section.key=value`` override."""
        key, sep, val = value.partition('=')
        if not sep or '.' not in key:
            raise parser.error(f'Overrides must look like "section.key=value", got "{value}".')
        return key.strip(), val.strip()

    def _governor(value, parser):
        name = value.lower().replace('_', '-')
        if name not in GOVERNOR_NAMES:
            raise parser.error(
                f'Unknown governor "{value}"; choose from {", ".join(GOVERNOR_NAMES)}.'
            )
        return name

    verstr = f'govern v{config.environment.version}'

    parser = ArgumentParser(
        prog='govern',
        description=(
            'govern: constraint-enforcing command governors with neural-network warm '
            f'starts v{config.environment.version}'
        ),
        formatter_class=ArgumentDefaultsHelpFormatter,
        **kwargs,
    )
    parser.add_argument('--version', action='version', version=verstr)

    # Options shared by every sub-command
    common = ArgumentParser(add_help=False)
    IsFile = partial(_is_file, parser=parser)
    KeyValue = partial(_key_value, parser=parser)
    g_common = common.add_argument_group('Common options')
    g_common.add_argument(
        '--config',
        action='store',
        metavar='FILE',
        type=IsFile,
        help='JSON run configuration (or the TOML snapshot of a previous run).',
    )
    g_common.add_argument(
        '--set',
        dest='overrides',
        action='append',
        default=[],
        metavar='SECTION.KEY=VALUE',
        type=KeyValue,
        help='Override one setting; values are parsed as JSON literals. Repeatable.',
    )
    g_common.add_argument(
        '--output-dir',
        action='store',
        type=Path,
        help='Folder receiving every artifact (default: execution.output_dir).',
    )
    g_common.add_argument(
        '-v',
        '--verbose',
        dest='verbose_count',
        action='count',
        default=0,
        help='Increases log verbosity for each occurrence, debug level is -vvv',
    )

    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND', required=True)
    helps = {
        'collect': 'Run the exact governor over the collection profile and write the dataset.',
        'train': 'Fit the network approximation of the governor on the collected dataset.',
        'calibrate': 'Tune the curvature bound of the tightened governor in closed loop.',
        'run': 'Simulate one governor over the evaluation profile and write its trace.',
        'benchmark': 'Time the configured governors over the evaluation profile.',
        'sensitivity': 'Tabulate output sensitivities around an equilibrium.',
    }
    for name in COMMANDS:
        sub = subparsers.add_parser(
            name,
            parents=[common],
            help=helps[name],
            description=helps[name],
            formatter_class=ArgumentDefaultsHelpFormatter,
        )
        if name == 'run':
            sub.add_argument(
                '--governor',
                action='store',
                default='nn-mcg',
                type=partial(_governor, parser=sub),
                help=f'Governor to simulate, one of {", ".join(GOVERNOR_NAMES)}.',
            )

    return parser


def parse_args(args=None, namespace=None):
    """Parse args and run further checks on the command line."""
    import logging

    from govern.data import default_settings

    parser = _build_parser()
    opts = parser.parse_args(args, namespace)

    # User settings overlay the packaged defaults section by section
    settings = default_settings()
    if opts.config:
        for section, values in config.read_settings(opts.config).items():
            if not isinstance(values, dict):
                raise config.ConfigError(f'Section "{section}" must be an object.')
            settings.setdefault(section, {}).update(values)
    if opts.output_dir is not None:
        settings.setdefault('execution', {})['output_dir'] = str(opts.output_dir.absolute())

    # Derived paths are resolved once every override is in place
    config.paths.reset()
    deferred = ('execution', 'paths')
    config.from_dict(
        settings, init=[s for s in config.SECTIONS if s not in deferred], strict=True
    )
    if 'log_dir' not in settings.get('execution', {}):
        config.execution.log_dir = None
    for key, value in opts.overrides:
        config.set_option(key, value)
    config.execution.init()
    config.paths.init()

    config.execution.log_level = int(max(25 - 5 * opts.verbose_count, logging.DEBUG))
    config.loggers.init()
    if opts.config:
        config.loggers.cli.info(f'Loaded configuration file {opts.config}')

    config.execution.output_dir.mkdir(exist_ok=True, parents=True)
    config.execution.log_dir.mkdir(exist_ok=True, parents=True)
    return opts
