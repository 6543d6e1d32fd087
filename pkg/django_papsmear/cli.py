"""
The ``papsmear`` console script.

Dispatches ``papsmear <subcommand> [options]`` to the ``papsmear_<subcommand>``
management commands, configuring a minimal Django when the package is used outside
a project.
"""

import os
import sys
from typing import Optional

import django
from django.conf import settings
from django.core.management import load_command_class
from django.core.management.base import CommandError

COMMANDS = {
    'ingest': 'papsmear_ingest',
    'train': 'papsmear_train',
    'evaluate': 'papsmear_evaluate',
    'bench': 'papsmear_bench',
    'grid-search': 'papsmear_grid_search',
    'gradcheck': 'papsmear_gradcheck',
}

USAGE = (
    'usage: papsmear {' + ','.join(COMMANDS) + '} [options]\n'
    "Run 'papsmear <subcommand> --help' for the options of a subcommand.\n"
)


def configure() -> None:
    if not settings.configured and 'DJANGO_SETTINGS_MODULE' not in os.environ:
        settings.configure(
            INSTALLED_APPS=['django_papsmear'],
            LOGGING={
                'version': 1,
                'disable_existing_loggers': False,
                'formatters': {
                    'plain': {'format': '%(levelname)s %(name)s: %(message)s'},
                },
                'handlers': {
                    'console': {
                        'class': 'logging.StreamHandler',
                        'stream': 'ext://sys.stderr',
                        'formatter': 'plain',
                    },
                },
                'loggers': {
                    'django_papsmear': {'handlers': ['console'], 'level': 'INFO'},
                },
            },
        )
    django.setup()


def main(argv: Optional[list[str]] = None) -> int:
    """Run one subcommand and return its exit code (0 ok, 1 invalid input, 2 failure)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ('-h', '--help'):
        sys.stdout.write(USAGE)
        return 0 if argv else 1
    if argv[0] not in COMMANDS:
        sys.stderr.write(f'papsmear: unknown subcommand "{argv[0]}"\n{USAGE}')
        return 1

    configure()
    subcommand, args = argv[0], argv[1:]
    command = load_command_class('django_papsmear', COMMANDS[subcommand])
    parser = command.create_parser('papsmear', subcommand)

    try:
        options = parser.parse_args(args)
    except CommandError as e:
        # Django's parser raises instead of exiting when called programmatically
        sys.stderr.write(f'{parser.format_usage()}papsmear {subcommand}: error: {e}\n')
        return 1
    except SystemExit as e:
        # --help, or argparse rejecting a flag
        return 0 if e.code == 0 else 1

    params = vars(options)
    positional = params.pop('args', ())
    try:
        command.execute(*positional, **params)
    except CommandError as e:
        sys.stderr.write(f'papsmear {subcommand}: {e}\n')
        return e.returncode
    return 0
