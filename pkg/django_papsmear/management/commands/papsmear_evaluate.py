from pathlib import Path

from django_papsmear.bench import ColumnResult, ComparisonTable, load_features, render
from django_papsmear.classifiers import load_model, predict
from django_papsmear.data import load_image_set, stratified_split
from django_papsmear.exceptions import ConfigError
from django_papsmear.management.base import PapsmearCommand
from django_papsmear.metrics import evaluate
from django_papsmear.nn import evaluate_network, load_network


class Command(PapsmearCommand):
    help = 'Score a saved model (model-<kind>.json or cnn.weights) on a dataset'

    def add_command_arguments(self, parser):
        parser.add_argument('model', help='Saved model file')

        parser.add_argument(
            '--data',
            default=None,
            help='Feature CSV (default: [data] feature_csv of --config)',
        )

        parser.add_argument(
            '--images',
            default=None,
            help='Image root, required for .weights files',
        )

        parser.add_argument(
            '--split',
            choices=('test', 'all'),
            default='test',
            help='Score on the test split of the seeded split, or on every row '
            '(default: test)',
        )

    def run(self, **options):
        config = self.load_experiment(
            options, feature_csv=options['data'], image_root=options['images']
        )
        path = Path(options['model'])
        provenance = {'name': config.name, 'seed': config.seed, 'reproducible': True}

        if path.suffix == '.weights':
            if not config.image_root:
                raise ConfigError('Evaluating a CNN needs --images')
            network = load_network(path)
            size = network.input_shape[0]
            images = load_image_set(config.image_root, (size, size))
            if options['split'] == 'test':
                images = stratified_split(images, config.split_spec).test
            provenance['images'] = len(images)
            column = ColumnResult('CNN', evaluate_network(network, images))
        else:
            if not config.feature_csv:
                raise ConfigError('No feature CSV: pass --data or set [data] feature_csv')
            bundle = load_model(path)
            table = load_features(config)
            provenance['rows'] = len(table)
            if options['split'] == 'test':
                table = stratified_split(table, config.split_spec).test
            X = table.features
            if bundle.scaler is not None:
                X = bundle.scaler.apply(X)
            report = evaluate(predict(bundle.model, X), table.labels)
            column = ColumnResult(bundle.spec.display_name, report)

        self.write_report(
            render(ComparisonTable((column,), provenance), options['format']),
            options,
            f'Evaluated {path} on {options["split"]} rows',
        )
