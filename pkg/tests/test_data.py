import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from PIL import Image

from django_papsmear.data import (
    BinaryLabel,
    CellClass,
    FeatureTable,
    ScalerKind,
    SplitSpec,
    fit_scaler,
    load_feature_table,
    load_image,
    load_image_set,
    parse_cell_class,
    split_indices,
    stratified_split,
    synth_blobs,
    to_binary,
)
from django_papsmear.exceptions import DatasetError

from .fixtures import herlev_table, write_feature_csv, write_image_tree


class CellClassTest(SimpleTestCase):
    def test_parse_canonical_names(self):
        """Test class names in any case and separator style"""
        self.assertEqual(parse_cell_class('mild_dysplasia'), CellClass.MILD_DYSPLASIA)
        self.assertEqual(parse_cell_class('Mild Dysplasia'), CellClass.MILD_DYSPLASIA)
        self.assertEqual(
            parse_cell_class('carcinoma-in-situ'), CellClass.CARCINOMA_IN_SITU
        )

    def test_parse_folder_aliases(self):
        """Test the folder names of the public distribution"""
        self.assertEqual(
            parse_cell_class('normal_superficiel'), CellClass.SUPERFICIAL_SQUAMOUS
        )
        self.assertEqual(parse_cell_class('light_dysplastic'), CellClass.MILD_DYSPLASIA)

    def test_parse_numbers(self):
        """Test the 1-7 numbering"""
        self.assertEqual(parse_cell_class('1'), CellClass.SUPERFICIAL_SQUAMOUS)
        self.assertEqual(parse_cell_class(7), CellClass.CARCINOMA_IN_SITU)
        with self.assertRaises(ValueError):
            parse_cell_class('8')

    def test_parse_unknown(self):
        with self.assertRaises(ValueError):
            parse_cell_class('koilocyte')

    def test_binary_mapping(self):
        """Test that dysplasias and carcinoma are abnormal, the rest normal"""
        abnormal = {c for c in CellClass if to_binary(c) == BinaryLabel.ABNORMAL}
        self.assertEqual(
            abnormal,
            {
                CellClass.MILD_DYSPLASIA,
                CellClass.MODERATE_DYSPLASIA,
                CellClass.SEVERE_DYSPLASIA,
                CellClass.CARCINOMA_IN_SITU,
            },
        )


class LoadFeatureTableTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_load_valid_file(self):
        """Test loading a well-formed 20-feature file"""
        table = herlev_table(10)
        path = write_feature_csv(self.dir / 'features.csv', table)

        loaded = load_feature_table(path)

        self.assertEqual(len(loaded), 20)
        self.assertEqual(loaded.n_features, 20)
        np.testing.assert_allclose(loaded.features, table.features)
        self.assertEqual(loaded.cell_classes, table.cell_classes)
        self.assertEqual(loaded.label_counts[BinaryLabel.ABNORMAL], 10)

    def test_short_row_names_the_row(self):
        """Test that a row with 19 feature values is rejected with its row number"""
        path = write_feature_csv(self.dir / 'features.csv', herlev_table(3))
        lines = path.read_text().splitlines()
        fields = lines[3].split(',')
        lines[3] = ','.join(fields[:19] + fields[20:])
        path.write_text('\n'.join(lines) + '\n')

        with self.assertRaisesMessage(DatasetError, 'row 3'):
            load_feature_table(path)

    def test_long_row_names_the_row(self):
        """Test that a row with an extra value is rejected with its row number"""
        path = write_feature_csv(self.dir / 'features.csv', herlev_table(3))
        lines = path.read_text().splitlines()
        lines[3] += ',0.5'
        path.write_text('\n'.join(lines) + '\n')

        with self.assertRaisesMessage(DatasetError, 'row 3 has 22 fields, expected 21'):
            load_feature_table(path)

    def test_non_numeric_cell(self):
        path = write_feature_csv(self.dir / 'features.csv', herlev_table(3))
        lines = path.read_text().splitlines()
        fields = lines[2].split(',')
        fields[3] = 'abc'
        lines[2] = ','.join(fields)
        path.write_text('\n'.join(lines) + '\n')

        with self.assertRaisesMessage(DatasetError, 'row 2, column "nucleus_brightness"'):
            load_feature_table(path)

    def test_non_finite_cell(self):
        path = write_feature_csv(self.dir / 'features.csv', herlev_table(3))
        lines = path.read_text().splitlines()
        fields = lines[1].split(',')
        fields[0] = 'inf'
        lines[1] = ','.join(fields)
        path.write_text('\n'.join(lines) + '\n')

        with self.assertRaisesMessage(DatasetError, 'non-finite'):
            load_feature_table(path)

    def test_unknown_class(self):
        path = write_feature_csv(self.dir / 'features.csv', herlev_table(3))
        text = path.read_text().replace('severe_dysplasia', 'koilocyte', 1)
        path.write_text(text)

        with self.assertRaises(DatasetError):
            load_feature_table(path)

    def test_missing_column(self):
        table = herlev_table(3)
        path = write_feature_csv(self.dir / 'features.csv', table, class_column='label')

        with self.assertRaisesMessage(DatasetError, 'missing column(s) class'):
            load_feature_table(path)
        self.assertEqual(len(load_feature_table(path, class_column='label')), 6)

    def test_missing_file(self):
        with self.assertRaises(DatasetError):
            load_feature_table(self.dir / 'nope.csv')

    def test_custom_schema(self):
        """Test loading a subset of the columns in a given order"""
        path = write_feature_csv(self.dir / 'features.csv', herlev_table(3))

        table = load_feature_table(path, ['nc_ratio', 'nucleus_area'])

        self.assertEqual(table.column_names, ('nc_ratio', 'nucleus_area'))
        self.assertEqual(table.n_features, 2)


class FeatureTableTest(SimpleTestCase):
    def test_arrays_are_read_only(self):
        table = synth_blobs(5, dims=3)
        with self.assertRaises(ValueError):
            table.features[0, 0] = 1.0
        with self.assertRaises(ValueError):
            table.labels[0] = 1

    def test_rejects_non_finite(self):
        with self.assertRaisesMessage(DatasetError, 'Row 2'):
            FeatureTable(
                ('a',),
                np.array([[1.0], [np.nan]]),
                (CellClass.COLUMNAR, CellClass.COLUMNAR),
            )

    def test_indexing_gives_samples(self):
        table = synth_blobs(2, dims=2)
        sample = table[0]
        self.assertEqual(len(sample.features), 2)
        self.assertEqual(sample.label, to_binary(sample.cell_class))


class SplitTest(SimpleTestCase):
    def setUp(self):
        self.table = synth_blobs(50, dims=3, seed=1)
        self.spec = SplitSpec(test_fraction=0.2, validation_fraction=0.25, seed=3)

    def test_parts_partition_the_rows(self):
        """Test that train, validation and test are disjoint and cover every row"""
        train, validation, test = split_indices(self.table.labels, self.spec)
        combined = np.concatenate([train, validation, test])

        self.assertEqual(sorted(combined.tolist()), list(range(len(self.table))))
        self.assertEqual(len(test), 20)
        self.assertEqual(len(validation), 20)
        self.assertEqual(len(train), 60)

    def test_split_is_stratified(self):
        split = stratified_split(self.table, self.spec)
        for part in (split.train, split.validation, split.test):
            counts = part.label_counts
            self.assertEqual(counts[BinaryLabel.ABNORMAL], counts[BinaryLabel.NORMAL])

    def test_split_is_deterministic(self):
        first = split_indices(self.table.labels, self.spec)
        second = split_indices(self.table.labels, self.spec)
        other = split_indices(self.table.labels, SplitSpec(0.2, 0.25, seed=4))

        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(first[2], other[2]))

    def test_split_and_concat_recovers_rows(self):
        split = stratified_split(self.table, self.spec)
        recombined = FeatureTable.concat([split.train, split.validation, split.test])
        order = np.concatenate(
            [split.train_indices, split.validation_indices, split.test_indices]
        )
        np.testing.assert_array_equal(recombined.features, self.table.features[order])

    def test_herlev_sized_split(self):
        """Test the default fractions on 242 normal and 675 abnormal rows"""
        labels = np.repeat([0, 1], [242, 675])
        train, validation, test = split_indices(labels, SplitSpec())

        self.assertEqual((len(train), len(validation), len(test)), (662, 117, 138))
        self.assertEqual(int(labels[test].sum()), 102)
        self.assertEqual(int(labels[validation].sum()), 87)

    def test_single_class_cannot_be_split(self):
        labels = np.zeros(20, dtype=np.int64)
        with self.assertRaisesMessage(DatasetError, 'no samples labelled abnormal'):
            split_indices(labels, self.spec)

    def test_invalid_fractions(self):
        with self.assertRaises(DatasetError):
            SplitSpec(test_fraction=0.0)
        with self.assertRaises(DatasetError):
            SplitSpec(validation_fraction=1.0)


class ScalerTest(SimpleTestCase):
    def test_zscore_standardises_training_rows(self):
        X = np.random.default_rng(0).normal(5.0, 3.0, size=(200, 4))
        scaled = fit_scaler(X).apply(X)

        np.testing.assert_allclose(scaled.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(scaled.std(axis=0), 1.0, atol=1e-12)

    def test_minmax_maps_to_unit_range(self):
        X = np.random.default_rng(1).uniform(-2.0, 7.0, size=(50, 3))
        scaled = fit_scaler(X, 'minmax').apply(X)

        np.testing.assert_allclose(scaled.min(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(scaled.max(axis=0), 1.0, atol=1e-12)

    def test_constant_feature_is_clamped(self):
        """Test that a zero-spread feature gets scale 1 and is reported"""
        X = np.column_stack([np.arange(5.0), np.full(5, 3.0)])

        with self.assertLogs('django_papsmear.data', level='WARNING'):
            scaler = fit_scaler(X)

        self.assertEqual(scaler.constant_features, (1,))
        np.testing.assert_allclose(scaler.apply(X)[:, 1], 0.0)

    def test_inverse_round_trip(self):
        X = np.random.default_rng(2).normal(100.0, 20.0, size=(30, 5))
        for kind in ScalerKind:
            scaler = fit_scaler(X, kind)
            np.testing.assert_allclose(scaler.inverse(scaler.apply(X)), X, rtol=1e-9)

    def test_scaler_serialises(self):
        scaler = fit_scaler(np.arange(12.0).reshape(4, 3))
        restored = type(scaler).from_dict(scaler.to_dict())
        np.testing.assert_array_equal(restored.offset, scaler.offset)
        np.testing.assert_array_equal(restored.scale, scaler.scale)

    def test_none_is_identity(self):
        X = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(fit_scaler(X, 'none').apply(X), X)


class LoadImageTest(SimpleTestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.folder = Path(tmp.name) / 'severe_dysplastic'
        self.folder.mkdir()

    def test_resizes_and_scales(self):
        path = self.folder / 'cell.bmp'
        Image.new('L', (100, 80), color=128).save(path)

        sample = load_image(path)

        self.assertEqual(sample.pixels.shape, (64, 64, 3))
        np.testing.assert_allclose(sample.pixels, 128 / 255)
        self.assertEqual(sample.cell_class, CellClass.SEVERE_DYSPLASIA)
        self.assertEqual(sample.label, BinaryLabel.ABNORMAL)

    def test_matching_size_is_not_resampled(self):
        rgb = np.random.default_rng(4).integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        path = self.folder / 'cell.png'
        Image.fromarray(rgb, 'RGB').save(path)

        np.testing.assert_array_equal(load_image(path).pixels, rgb / 255.0)

    def test_explicit_class_wins(self):
        path = self.folder / 'cell.png'
        Image.new('RGB', (8, 8)).save(path)

        sample = load_image(path, (8, 8), cell_class=CellClass.SUPERFICIAL_SQUAMOUS)
        self.assertEqual(sample.label, BinaryLabel.NORMAL)


class LoadImageSetTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_loads_class_folders(self):
        """Test that images load resized, scaled to [0, 1] and labelled by folder"""
        write_image_tree(self.root, n_per_class=4, size=10)

        images = load_image_set(self.root, (8, 8))

        self.assertEqual(len(images), 8)
        self.assertEqual(images.image_shape, (8, 8, 3))
        self.assertGreaterEqual(images.pixels.min(), 0.0)
        self.assertLessEqual(images.pixels.max(), 1.0)
        self.assertEqual(int(images.labels.sum()), 4)
        self.assertFalse(any(p.endswith('-d.png') for p in images.paths))

    def test_unknown_folder(self):
        write_image_tree(self.root, n_per_class=2)
        (self.root / 'debris').mkdir()

        with self.assertRaisesMessage(DatasetError, 'debris'):
            load_image_set(self.root, (8, 8))

    def test_empty_root(self):
        with self.assertRaises(DatasetError):
            load_image_set(self.root, (8, 8))

    def test_undecodable_image(self):
        write_image_tree(self.root, n_per_class=2)
        (self.root / 'normal_intermediate' / 'broken.png').write_bytes(b'not an image')

        with self.assertRaisesMessage(DatasetError, 'broken.png'):
            load_image_set(self.root, (8, 8))


class SynthBlobsTest(SimpleTestCase):
    def test_shape_and_balance(self):
        table = synth_blobs(7, dims=5, seed=9)
        self.assertEqual(table.features.shape, (14, 5))
        self.assertEqual(int(table.labels.sum()), 7)

    def test_clusters_are_separated(self):
        table = synth_blobs(30, dims=2, separation=10.0)
        abnormal = table.features[table.labels == 1].mean(axis=0)
        normal = table.features[table.labels == 0].mean(axis=0)
        self.assertTrue(np.all(abnormal - normal > 8.0))
