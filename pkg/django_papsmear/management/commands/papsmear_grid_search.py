import json

import pandas as pd

from django_papsmear.bench import grid_axes, persist_searches, run_searches
from django_papsmear.classifiers import KINDS
from django_papsmear.conf import get_setting
from django_papsmear.exceptions import ConfigError
from django_papsmear.management.base import PapsmearCommand, parse_assignments
from django_papsmear.tuning import ParamGrid


class Command(PapsmearCommand):
    help = 'Cross-validate hyperparameter grids and rank the candidates by mean accuracy'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--kind',
            choices=KINDS,
            default=None,
            help='Search this classifier with the --grid axes instead of the '
            '[grid.<kind>] sections of --config',
        )

        parser.add_argument(
            '--grid',
            action='append',
            metavar='NAME=V1,V2,...',
            help='Candidate values of one parameter, one flag per axis (--grid k=1,3,5)',
        )

        parser.add_argument(
            '--data',
            default=None,
            help='Feature CSV (overrides [data] feature_csv)',
        )

        parser.add_argument(
            '--folds',
            type=int,
            default=None,
            help='Number of cross-validation folds (default: [tuning] k, else 5)',
        )

        parser.add_argument(
            '--jobs',
            type=int,
            default=None,
            help='Worker threads (default: [experiment] n_jobs, else the N_JOBS setting)',
        )

    def run(self, **options):
        grids = None
        if options['kind']:
            kind = options['kind']
            axes = grid_axes('--grid', kind, parse_assignments(options['grid']))
            grids = (ParamGrid(kind, axes),)
        elif options['grid']:
            raise ConfigError('--grid needs --kind')

        config = self.load_experiment(
            options,
            feature_csv=options['data'],
            folds=options['folds'],
            grids=grids,
            cnn_enabled=False,
        )
        reports = run_searches(config, n_jobs=options['jobs'])

        reproducible = (
            config.reproducible
            if config.reproducible is not None
            else get_setting('REPRODUCIBLE')
        )
        written = persist_searches(
            reports, self.output_dir(config, options), include_timing=not reproducible
        )

        if options['format'] == 'json':
            documents = [
                json.loads(r.to_json(include_timing=not reproducible)) for r in reports
            ]
            self.stdout.write(json.dumps(documents, indent=2, sort_keys=True))
            return
        if options['format'] == 'csv':
            frame = pd.concat(
                [r.to_frame(not reproducible) for r in reports], ignore_index=True
            )
            self.stdout.write(frame.to_csv(index=False, lineterminator='\n'), ending='')
            return

        lines = [
            '| Classifier | Best | Mean accuracy | Trials | Failed |',
            '| --- | --- | ---: | ---: | ---: |',
        ]
        for report in reports:
            top = report.leaderboard[0]
            accuracy = 'n/a' if top.mean_accuracy is None else f'{top.mean_accuracy:.4f}'
            lines.append(
                f'| {report.kind} | {report.best or "none"} | {accuracy} '
                f'| {len(report.leaderboard)} | {len(report.failures)} |'
            )
        self.write_report(
            '\n'.join(lines) + '\n',
            options,
            f'Wrote {", ".join(str(p) for p in written)}',
        )
