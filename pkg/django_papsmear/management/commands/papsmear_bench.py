from django_papsmear.bench import persist, render, run_benchmark
from django_papsmear.management.base import PapsmearCommand


class Command(PapsmearCommand):
    help = 'Run every enabled model on one shared split and write the comparison'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--data',
            default=None,
            help='Feature CSV (overrides [data] feature_csv)',
        )

        parser.add_argument(
            '--images',
            default=None,
            help='Image root (overrides [data] image_root)',
        )

        parser.add_argument(
            '--no-cnn',
            action='store_true',
            help='Run the classical models only',
        )

        parser.add_argument(
            '--reproducible',
            action='store_true',
            help='Leave wall times out of the report files so reruns are byte-identical',
        )

        parser.add_argument(
            '--jobs',
            type=int,
            default=None,
            help='Worker threads (default: [experiment] n_jobs, else the N_JOBS setting)',
        )

    def run(self, **options):
        config = self.load_experiment(
            options,
            feature_csv=options['data'],
            image_root=options['images'],
            cnn_enabled=False if options['no_cnn'] else None,
            reproducible=True if options['reproducible'] else None,
        )

        table = run_benchmark(config, n_jobs=options['jobs'])
        written = persist(table, self.output_dir(config, options), config.formats)

        message = f'Wrote {", ".join(str(p) for p in written)}'
        if table.failures:
            message += f' ({len(table.failures)} column(s) failed)'
        self.write_report(render(table, options['format']), options, message)
