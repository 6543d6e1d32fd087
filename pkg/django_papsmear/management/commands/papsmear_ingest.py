import json

from django_papsmear.data import load_feature_table, load_image_set
from django_papsmear.exceptions import ConfigError
from django_papsmear.management.base import PapsmearCommand


class Command(PapsmearCommand):
    help = 'Validate a Herlev feature CSV and/or image folders and summarise them'

    def add_command_arguments(self, parser):
        parser.add_argument(
            'csv',
            nargs='?',
            help='Feature CSV (default: [data] feature_csv of --config)',
        )

        parser.add_argument(
            '--images',
            default=None,
            help='Image root with one directory per cell class',
        )

        parser.add_argument(
            '--class-column',
            default=None,
            help='Column holding the cell class (default: the CLASS_COLUMN setting)',
        )

    def run(self, **options):
        config = self.load_experiment(options)
        csv_path = options['csv'] or config.feature_csv
        image_root = options['images']
        if not image_root and options['config']:
            image_root = config.image_root
        if not csv_path and not image_root:
            raise ConfigError('Nothing to ingest: pass a feature CSV and/or --images')

        summary = {}
        if csv_path:
            table = load_feature_table(
                csv_path,
                config.feature_columns,
                options['class_column'] or config.class_column,
            )
            summary['rows'] = len(table)
            summary['features'] = table.n_features
            summary['labels'] = {str(k): v for k, v in table.label_counts.items()}
            summary['classes'] = {str(k): v for k, v in table.class_counts.items()}

        if image_root:
            images = load_image_set(image_root)
            summary['images'] = len(images)
            summary['image_shape'] = list(images.image_shape)

        if options['format'] == 'json':
            self.stdout.write(json.dumps(summary, indent=2, sort_keys=True))
            return

        for key, value in summary.items():
            if isinstance(value, dict):
                value = ', '.join(f'{k}={v}' for k, v in value.items())
            self.stdout.write(f'{key}: {value}')
        self.stdout.write(self.style.SUCCESS('Dataset is valid'))
