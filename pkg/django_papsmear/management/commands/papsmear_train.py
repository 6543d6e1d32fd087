from pathlib import Path

from django_papsmear.bench import (
    CNN_KEYS,
    CNN_TEST,
    CNN_TRAIN,
    ColumnResult,
    ComparisonTable,
    cast_values,
    config_hash,
    load_features,
    render,
)
from django_papsmear.classifiers import (
    DISPLAY_NAMES,
    KINDS,
    SCALED_KINDS,
    ClassifierSpec,
    fit,
    predict,
    save_model,
    validate_params,
)
from django_papsmear.data import (
    FeatureTable,
    fit_scaler,
    load_image_set,
    stratified_split,
)
from django_papsmear.exceptions import ConfigError
from django_papsmear.management.base import PapsmearCommand, parse_assignments
from django_papsmear.metrics import evaluate
from django_papsmear.nn import evaluate_network, save_network, train


class Command(PapsmearCommand):
    help = 'Train one model on the training split and score it on the test split'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--kind',
            required=True,
            choices=(*KINDS, 'cnn'),
            help='Model to train',
        )

        parser.add_argument(
            '--param',
            action='append',
            metavar='NAME=VALUE',
            help='Hyperparameter override; repeat for several (e.g. --param k=9)',
        )

        parser.add_argument(
            '--data',
            default=None,
            help='Feature CSV (default: [data] feature_csv of --config)',
        )

        parser.add_argument(
            '--images',
            default=None,
            help='Image root for the CNN (default: [data] image_root of --config)',
        )

        parser.add_argument(
            '--model',
            default=None,
            help='Where to save the trained model (default: <out>/model-<kind>.json, '
            'or <out>/cnn.weights for the CNN)',
        )

    def run(self, **options):
        config = self.load_experiment(
            options, feature_csv=options['data'], image_root=options['images']
        )
        assignments = parse_assignments(options['param'])
        out_dir = self.output_dir(config, options)
        provenance = {
            'name': config.name,
            'seed': config.seed,
            'config_hash': config_hash(config),
            'reproducible': True,
        }

        if options['kind'] == 'cnn':
            table = self.train_cnn(config, assignments, options, out_dir, provenance)
        else:
            table = self.train_classifier(
                config, assignments, options, out_dir, provenance
            )

        self.write_report(
            render(table, options['format']), options, f'Model saved to {self.saved_to}'
        )

    def train_classifier(self, config, assignments, options, out_dir, provenance):
        kind = options['kind']
        if not config.feature_csv:
            raise ConfigError('No feature CSV: pass --data or set [data] feature_csv')

        base = next((s.params for s in config.classifiers if s.kind == kind), {})
        resolved = validate_params(kind, assignments)
        spec = ClassifierSpec(kind, {**base, **{k: resolved[k] for k in assignments}})

        table = load_features(config)
        split = stratified_split(table, config.split_spec)
        train_table = FeatureTable.concat([split.train, split.validation])
        X_train, X_test = train_table.features, split.test.features
        scaler = None
        if kind in SCALED_KINDS:
            scaler = fit_scaler(train_table, config.scaler)
            X_train, X_test = scaler.apply(X_train), scaler.apply(X_test)

        model = fit(spec, X_train, train_table.labels)
        report = evaluate(predict(model, X_test), split.test.labels)

        path = Path(options['model'] or out_dir / f'model-{kind}.json')
        self.saved_to = save_model(model, path, spec, scaler)
        provenance['rows'] = len(table)
        provenance['split'] = [len(split.train), len(split.validation), len(split.test)]
        return ComparisonTable((ColumnResult(DISPLAY_NAMES[kind], report),), provenance)

    def train_cnn(self, config, assignments, options, out_dir, provenance):
        if not config.image_root:
            raise ConfigError('No image root: pass --images or set [data] image_root')

        try:
            cnn = config.cnn.replace(**cast_values('cnn', assignments, CNN_KEYS))
        except ValueError as e:
            raise ConfigError(f'--param: {e}') from e
        size = cnn.image_size
        images = load_image_set(config.image_root, (size, size))
        split = stratified_split(images, cnn.split_spec())
        network, history = train(cnn, split)

        path = Path(options['model'] or out_dir / 'cnn.weights')
        self.saved_to = save_network(network, path)
        history.to_csv(path.parent / 'history.csv')
        provenance['images'] = len(images)
        provenance['split'] = [len(split.train), len(split.validation), len(split.test)]
        columns = (
            ColumnResult(CNN_TRAIN, evaluate_network(network, split.train)),
            ColumnResult(CNN_TEST, evaluate_network(network, split.test)),
        )
        return ComparisonTable(columns, provenance, history)
