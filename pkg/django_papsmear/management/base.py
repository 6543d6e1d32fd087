import logging
from pathlib import Path
from typing import Any, Optional

from django.core.management.base import BaseCommand, CommandError

from django_papsmear.bench import FORMATS, ExperimentConfig, load_config
from django_papsmear.conf import get_setting
from django_papsmear.exceptions import ConfigError, DatasetError

logger = logging.getLogger(__name__)


class PapsmearCommand(BaseCommand):
    """
    Base class for the ``papsmear_*`` commands.

    Adds the shared ``--seed``, ``--config``, ``--out`` and ``--format`` options and
    maps exceptions raised by ``run`` to exit codes: dataset and config problems exit
    with 1, anything else with 2.
    """

    requires_system_checks: list[str] = []

    default_format = 'markdown'

    def add_arguments(self, parser):
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Seed for splits, folds and initialisation (default: config, else 0)',
        )

        parser.add_argument(
            '--config',
            default=None,
            help='Experiment config file (INI)',
        )

        parser.add_argument(
            '--out',
            default=None,
            help='Output directory (default: from config, else the OUTPUT_DIR setting)',
        )

        parser.add_argument(
            '--format',
            choices=FORMATS,
            default=self.default_format,
            help=f'Report format on stdout (default: {self.default_format})',
        )

        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except CommandError:
            raise
        except (DatasetError, ConfigError) as e:
            raise CommandError(str(e), returncode=1) from e
        except Exception as e:
            logger.error(f'{self.__class__.__module__} failed: {e}')
            raise CommandError(f'{e.__class__.__name__}: {e}', returncode=2) from e

    def run(self, **options) -> Optional[str]:
        raise NotImplementedError(
            'subclasses of PapsmearCommand must provide a run() method'
        )

    def load_experiment(self, options: dict[str, Any], **overrides) -> ExperimentConfig:
        """``--config`` (or the defaults) with ``--seed``, ``--out`` and ``overrides``."""
        if options.get('config'):
            config = load_config(options['config'])
        else:
            config = ExperimentConfig()
        changes = {k: v for k, v in overrides.items() if v is not None}
        if options.get('seed') is not None:
            changes['seed'] = options['seed']
        if options.get('out'):
            changes['output_dir'] = options['out']
        return config.replace(**changes) if changes else config

    def output_dir(self, config: Optional[ExperimentConfig] = None, options=None) -> Path:
        if options and options.get('out'):
            return Path(options['out'])
        if config is not None and config.output_dir:
            return Path(config.output_dir)
        return Path(get_setting('OUTPUT_DIR'))

    def write_report(self, text: str, options: dict[str, Any], message: str = '') -> None:
        """Write a rendered report; the status line is only added to markdown output."""
        self.stdout.write(text)
        if message and options['format'] == 'markdown':
            self.stdout.write(self.style.SUCCESS(message))


def parse_assignments(values: Optional[list[str]]) -> dict[str, str]:
    """``['k=9', 'p=2']`` -> ``{'k': '9', 'p': '2'}``."""
    assignments = {}
    for value in values or ():
        name, sep, raw = value.partition('=')
        if not sep or not name.strip():
            raise ConfigError(f'Expected NAME=VALUE, got "{value}"')
        assignments[name.strip()] = raw.strip()
    return assignments
