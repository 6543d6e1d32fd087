import json

import numpy as np
from django.core.management.base import CommandError

from django_papsmear.management.base import PapsmearCommand
from django_papsmear.nn import CnnConfig, build_network, grad_check


class Command(PapsmearCommand):
    help = 'Check the CNN backward pass against finite differences on a reduced network'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--eps',
            type=float,
            default=1e-5,
            help='Finite-difference step (default: 1e-5)',
        )

        parser.add_argument(
            '--tolerance',
            type=float,
            default=1e-4,
            help='Largest acceptable relative error (default: 1e-4)',
        )

        parser.add_argument(
            '--batch',
            type=int,
            default=4,
            help='Number of random input images (default: 4)',
        )

    def run(self, **options):
        seed = options['seed'] or 0
        config = CnnConfig.reduced(seed=seed)
        network = build_network(config)

        rng = np.random.default_rng(seed)
        x = rng.random((options['batch'], *config.input_shape))
        y = np.arange(options['batch']) % 2

        error = grad_check(network, x, y, eps=options['eps'])
        passed = bool(error < options['tolerance'])

        if options['format'] == 'json':
            result = {
                'max_relative_error': error,
                'tolerance': options['tolerance'],
                'parameters': network.n_params,
                'passed': passed,
            }
            self.stdout.write(json.dumps(result, indent=2, sort_keys=True))
        elif options['format'] == 'csv':
            self.stdout.write('max_relative_error,tolerance,parameters,passed')
            self.stdout.write(
                f'{error:.6e},{options["tolerance"]},{network.n_params},{passed}'
            )
        else:
            self.stdout.write(f'Parameters checked: {network.n_params}')
            self.stdout.write(f'Max relative error: {error:.3e}')

        if not passed:
            raise CommandError(
                f'Gradient check failed: {error:.3e} >= {options["tolerance"]}',
                returncode=2,
            )
        if options['format'] == 'markdown':
            self.stdout.write(self.style.SUCCESS('Gradient check passed'))
