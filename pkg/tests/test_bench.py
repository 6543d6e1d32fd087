import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from django_papsmear.bench import (
    ColumnResult,
    ComparisonTable,
    ExperimentConfig,
    config_hash,
    dump_config,
    load_report,
    parse_config,
    persist,
    render,
    run_benchmark,
    run_searches,
)
from django_papsmear.classifiers import ClassifierSpec
from django_papsmear.exceptions import ConfigError, DatasetError
from django_papsmear.metrics import ConfusionMatrix, compute_metrics
from django_papsmear.nn import CnnConfig
from django_papsmear.tuning import ParamGrid

from .fixtures import herlev_table, write_feature_csv, write_image_tree

EXAMPLE_CONFIG = """
[experiment]
name = smoke
seed = 7
formats = markdown, json

[data]
feature_csv = herlev.csv
test_fraction = 0.2

[classifiers]
enabled = svm, knn
cnn = false

[classifier.knn]
k = 5

[classifier.svm]
C = 10
kernel = linear

[tuning]
k = 4

[grid.knn]
k = 1, 3, 5
"""


class ParseConfigTest(SimpleTestCase):
    def test_example(self):
        config = parse_config(EXAMPLE_CONFIG)

        self.assertEqual(config.name, 'smoke')
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.formats, ('markdown', 'json'))
        self.assertEqual(config.test_fraction, 0.2)
        self.assertFalse(config.cnn_enabled)
        self.assertEqual(config.folds, 4)
        self.assertEqual(
            config.classifiers,
            (
                ClassifierSpec('knn', {'k': 5}),
                ClassifierSpec('svm', {'C': 10.0, 'kernel': 'linear'}),
            ),
        )
        self.assertEqual(config.grids, (ParamGrid('knn', {'k': (1, 3, 5)}),))

    def test_cnn_follows_experiment(self):
        config = parse_config(
            '[experiment]\nseed = 3\n[cnn]\nepochs = 2\nfilters = 4, 8\n'
        )
        self.assertEqual(config.cnn.seed, 3)
        self.assertEqual(config.cnn.epochs, 2)
        self.assertEqual(config.cnn.filters, (4, 8))

    def test_dump_round_trip(self):
        config = parse_config(EXAMPLE_CONFIG)
        self.assertEqual(parse_config(dump_config(config)), config)
        defaults = ExperimentConfig()
        self.assertEqual(parse_config(dump_config(defaults)), defaults)

    def test_hash_tracks_content(self):
        config = parse_config(EXAMPLE_CONFIG)
        self.assertEqual(config_hash(config), config_hash(parse_config(EXAMPLE_CONFIG)))
        self.assertNotEqual(config_hash(config), config_hash(config.replace(seed=8)))

    def test_errors(self):
        invalid = {
            'unknown section': '[clasifier.knn]\nk = 3\n',
            'unknown key': '[data]\nfeature_file = x.csv\n',
            'lowercase svm C': '[classifier.svm]\nc = 1\n',
            'disabled classifier': (
                '[classifiers]\nenabled = knn\n[classifier.svm]\nC = 1\n'
            ),
            'unknown classifier': '[classifiers]\nenabled = lda\n',
            'bad value': '[experiment]\nseed = seven\n',
            'bad fraction': '[data]\ntest_fraction = 1.5\n',
            'bad scaler': '[data]\nscaler = robust\n',
            'bad grid value': '[grid.knn]\nk = 1, three\n',
            'bad cnn': '[cnn]\nkernel_size = 4\n',
            'syntax': 'no section header\n',
        }
        for case, text in invalid.items():
            with self.subTest(case), self.assertRaises(ConfigError):
                parse_config(text)


class RenderTest(SimpleTestCase):
    def setUp(self):
        report = compute_metrics(ConfusionMatrix(tp=50, tn=30, fp=10, fn=10))
        self.table = ComparisonTable(
            columns=(
                ColumnResult('k-NN', report, seconds=0.5),
                ColumnResult('SVM', error='singular kernel'),
            ),
            provenance={
                'name': 'demo',
                'seed': 7,
                'config_hash': 'abc123',
                'reproducible': True,
            },
        )

    def test_markdown(self):
        expected = (
            '| Metric | k-NN | SVM |\n'
            '| --- | ---: | ---: |\n'
            '| Accuracy | 80 | failed |\n'
            '| Recall | 83 | failed |\n'
            '| Precision | 83 | failed |\n'
            '| Specificity | 75 | failed |\n'
            '| F1 Score | 83 | failed |\n'
            '\n'
            '- Experiment: demo\n'
            '- Seed: 7\n'
            '- Config hash: abc123\n'
            '- SVM failed: singular kernel\n'
        )
        self.assertEqual(render(self.table), expected)

    def test_csv(self):
        lines = render(self.table, 'csv').splitlines()

        self.assertEqual(lines[0], '# Experiment: demo')
        self.assertIn('metric,k-NN,SVM,k-NN fraction,SVM fraction', lines)
        self.assertIn('Accuracy,80,failed,0.8000,', lines)

    def test_json_omits_timing_when_reproducible(self):
        document = json.loads(render(self.table, 'json'))

        self.assertEqual(document['columns'], ['k-NN', 'SVM'])
        self.assertEqual(document['results']['k-NN']['metrics']['recall'], 0.8333)
        self.assertNotIn('seconds', document['results']['k-NN'])
        self.assertIsNone(document['results']['SVM']['metrics'])

    def test_timing_shown_otherwise(self):
        table = ComparisonTable(self.table.columns, {'reproducible': False})
        self.assertIn('- k-NN seconds: 0.500', render(table))

    def test_undefined_metric(self):
        report = compute_metrics(ConfusionMatrix(tp=0, tn=5, fp=0, fn=0))
        table = ComparisonTable((ColumnResult('Naive Bayes', report),))
        self.assertIn('| Recall | n/a |', render(table))

    def test_unknown_format(self):
        with self.assertRaises(ValueError):
            render(self.table, 'html')

    def test_persist_and_reload(self):
        with tempfile.TemporaryDirectory() as tmp:
            written = persist(self.table, tmp, formats=('markdown',))
            names = sorted(p.name for p in written)
            self.assertEqual(names, ['report.json', 'report.md'])

            reloaded = load_report(tmp)
            self.assertEqual(render(reloaded), render(self.table))
            self.assertEqual(
                (Path(tmp) / 'report.md').read_text(encoding='utf-8'), render(self.table)
            )

            with self.assertRaises(ConfigError):
                load_report(Path(tmp) / 'missing')


class GoldenReportTest(SimpleTestCase):
    """Rendered reports of a fixed two-model run, byte for byte"""

    golden = Path(__file__).parent / 'golden'

    def setUp(self):
        self.table = ComparisonTable(
            columns=(
                ColumnResult(
                    'k-NN', compute_metrics(ConfusionMatrix(tp=50, tn=30, fp=10, fn=10))
                ),
                ColumnResult(
                    'Naive Bayes',
                    compute_metrics(ConfusionMatrix(tp=40, tn=35, fp=5, fn=20)),
                ),
            ),
            provenance={
                'name': 'golden',
                'seed': 7,
                'config_hash': 'abc123',
                'reproducible': True,
                'rows': 120,
                'split': [84, 18, 18],
            },
        )

    def test_markdown(self):
        expected = (self.golden / 'report.md').read_text(encoding='utf-8')
        self.assertEqual(render(self.table, 'markdown'), expected)

    def test_csv(self):
        expected = (self.golden / 'report.csv').read_text(encoding='utf-8')
        self.assertEqual(render(self.table, 'csv'), expected)

    def test_json(self):
        expected = (self.golden / 'report.json').read_text(encoding='utf-8')
        self.assertEqual(render(self.table, 'json'), expected)


class RunBenchmarkTest(SimpleTestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = Path(tmp.name)
        self.csv = write_feature_csv(self.tmp / 'herlev.csv', herlev_table(seed=5))
        self.config = ExperimentConfig(
            seed=3,
            feature_csv=str(self.csv),
            classifiers=(ClassifierSpec('knn', {'k': 5}), ClassifierSpec('gnb')),
            cnn_enabled=False,
            reproducible=True,
        )

    def test_deterministic(self):
        first = run_benchmark(self.config, n_jobs=1)
        second = run_benchmark(self.config, n_jobs=2)

        self.assertEqual(first.column_names, ['k-NN', 'Naive Bayes'])
        self.assertEqual(render(first, 'json'), render(second, 'json'))
        self.assertEqual(first.provenance['rows'], 80)
        self.assertEqual(first.provenance['split'], [58, 10, 12])
        self.assertEqual(first.cell('accuracy', 'k-NN'), 100)

    def test_failed_classifier_gets_a_column(self):
        config = self.config.replace(
            classifiers=(ClassifierSpec('knn', {'k': 1000}), ClassifierSpec('gnb'))
        )
        table = run_benchmark(config)

        self.assertTrue(table.column('k-NN').failed)
        self.assertIn('exceeds the training set size', table.failures['k-NN'])
        self.assertFalse(table.column('Naive Bayes').failed)

    def test_missing_inputs(self):
        with self.assertRaises(ConfigError):
            run_benchmark(self.config.replace(feature_csv=None))
        with self.assertRaises(DatasetError):
            run_benchmark(self.config.replace(feature_csv=str(self.tmp / 'missing.csv')))
        with self.assertRaises(ConfigError):
            run_benchmark(self.config.replace(cnn_enabled=True))

    def test_cnn_columns(self):
        root = write_image_tree(self.tmp / 'images', n_per_class=10, size=8)
        config = self.config.replace(
            classifiers=(),
            image_root=str(root),
            cnn_enabled=True,
            cnn=CnnConfig.reduced(epochs=2, dropout=0.0),
        )
        table = run_benchmark(config)

        self.assertEqual(table.column_names, ['CNN-train', 'CNN-test'])
        self.assertEqual(len(table.cnn_history), 2)
        self.assertEqual(table.provenance['images'], 20)

        written = persist(table, self.tmp / 'out', formats=('csv',))
        self.assertIn(self.tmp / 'out' / 'history.csv', written)

    def test_searches(self):
        config = self.config.replace(grids=(ParamGrid('knn', {'k': (1, 3)}),), folds=3)
        reports = run_searches(config, n_jobs=1)

        self.assertEqual(len(reports), 1)
        self.assertEqual(len(reports[0].leaderboard), 2)
        self.assertEqual(reports[0].k, 3)

        with self.assertRaises(ConfigError):
            run_searches(self.config)
