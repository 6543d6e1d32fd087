import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.optimize import minimize

from django_papsmear.classifiers import (
    KINDS,
    SCALED_KINDS,
    ClassifierSpec,
    fit,
    load_model,
    model_from_dict,
    model_to_dict,
    predict,
    predict_one,
    predict_proba,
    save_model,
    validate_params,
)
from django_papsmear.classifiers.bayes import fit_gnb
from django_papsmear.classifiers.boosting import fit_gboost, gb_leaf_weight, gb_split_gain
from django_papsmear.classifiers.forest import fit_forest
from django_papsmear.classifiers.linear import fit_logreg, sigmoid
from django_papsmear.classifiers.neighbors import fit_knn, minkowski
from django_papsmear.classifiers.svm import fit_svm, kernel_matrix, rbf
from django_papsmear.classifiers.tree import best_split, entropy, fit_tree
from django_papsmear.data import BinaryLabel, fit_scaler, synth_blobs
from django_papsmear.exceptions import ConfigError
from django_papsmear.metrics import evaluate


def two_blobs(n_per_class=60, dims=5, separation=3.0, seed=1):
    table = synth_blobs(n_per_class, dims=dims, separation=separation, seed=seed)
    return table.features, table.labels


class NeighborsTest(SimpleTestCase):
    def test_minkowski(self):
        self.assertAlmostEqual(minkowski([0, 0], [3, 4]), 5.0)
        self.assertAlmostEqual(minkowski([0, 0], [3, 4], p=1), 7.0)
        with self.assertRaises(ValueError):
            minkowski([0], [1], p=0.5)

    def test_matches_exhaustive_scan(self):
        """Test the vectorised vote against sorting every training distance"""
        rng = np.random.default_rng(3)
        for p in (1.0, 2.0, 3.0):
            X = rng.normal(size=(40, 4))
            y = rng.integers(0, 2, size=40)
            queries = rng.normal(size=(25, 4))

            for k in (1, 4, 7):
                model = fit_knn(X, y, k=k, p=p)
                got = predict(model, queries)
                for query, label in zip(queries, got):
                    distances = [minkowski(query, row, p) for row in X]
                    nearest = sorted(range(len(X)), key=lambda i: (distances[i], i))[:k]
                    votes = sum(int(y[i]) for i in nearest)
                    self.assertEqual(label, int(2 * votes >= k))

    def test_equal_distances_follow_training_order(self):
        X = [[0.0], [0.0], [5.0]]
        self.assertEqual(
            predict_one(fit_knn(X, [1, 0, 0], k=1), [0.0]), BinaryLabel.ABNORMAL
        )
        self.assertEqual(
            predict_one(fit_knn(X, [0, 1, 0], k=1), [0.0]), BinaryLabel.NORMAL
        )

    def test_tied_vote_is_abnormal(self):
        model = fit_knn([[0.0], [1.0]], [0, 1], k=2)
        self.assertEqual(predict_one(model, [0.5]), BinaryLabel.ABNORMAL)

    def test_k_larger_than_training_set(self):
        with self.assertRaises(ValueError):
            fit_knn([[0.0], [1.0]], [0, 1], k=3)


class TreeTest(SimpleTestCase):
    def test_entropy(self):
        self.assertEqual(entropy([4, 0]), 0.0)
        self.assertAlmostEqual(entropy([2, 2]), 1.0)
        self.assertEqual(entropy([0, 0]), 0.0)
        self.assertAlmostEqual(entropy([6, 2]), 0.8113, places=4)

    @staticmethod
    def exhaustive_split(X, y):
        n = len(y)
        parent = entropy(np.bincount(y, minlength=2))
        best = None
        for feature in range(X.shape[1]):
            values = np.unique(X[:, feature])
            for lo, hi in zip(values[:-1], values[1:]):
                threshold = 0.5 * (lo + hi)
                left = y[X[:, feature] <= threshold]
                right = y[X[:, feature] > threshold]
                children = (
                    len(left) * entropy(np.bincount(left, minlength=2))
                    + len(right) * entropy(np.bincount(right, minlength=2))
                ) / n
                gain = parent - children
                if best is None or gain > best[2]:
                    best = (feature, threshold, gain)
        return best

    def test_best_split_matches_enumeration(self):
        """Test against every (feature, midpoint) pair on random data"""
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(4, 40))
            X = rng.normal(size=(n, 3))
            y = rng.integers(0, 2, size=n)
            if y.min() == y.max():
                continue

            split = best_split(X, y)
            feature, threshold, gain = self.exhaustive_split(X, y)
            self.assertAlmostEqual(split.gain, gain, places=10)
            if split.feature == feature:
                self.assertAlmostEqual(split.threshold, threshold)

    def test_ties_go_to_lowest_feature(self):
        column = np.array([0.0, 1.0, 2.0, 3.0])
        X = np.column_stack([column, column])
        split = best_split(X, [0, 0, 1, 1])

        self.assertEqual(split.feature, 0)
        self.assertEqual(split.threshold, 1.5)
        self.assertAlmostEqual(split.gain, 1.0)

    def test_pure_node_has_no_split(self):
        self.assertIsNone(best_split([[0.0], [1.0]], [1, 1]))

    def test_depth_zero_is_majority_leaf(self):
        model = fit_tree([[0.0], [1.0], [2.0]], [1, 1, 0], max_depth=0)
        self.assertEqual(list(model.predict([[0.0], [5.0]])), [1, 1])

    def test_fits_separable_data(self):
        X, y = two_blobs()
        model = fit_tree(X, y)
        self.assertEqual(list(model.predict(X)), list(y))


class BayesTest(SimpleTestCase):
    def test_posterior_matches_density_formula(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(30, 3)) + np.repeat([[0.0], [1.5]], 15, axis=0)
        y = np.repeat([0, 1], 15)
        model = fit_gnb(X, y)

        for x in rng.normal(size=(10, 3)):
            joint = []
            for label in (0, 1):
                rows = X[y == label]
                density = len(rows) / len(X)
                for j in range(3):
                    mean = rows[:, j].mean()
                    var = rows[:, j].var()
                    density *= math.exp(-((x[j] - mean) ** 2) / (2 * var)) / math.sqrt(
                        2 * math.pi * var
                    )
                joint.append(density)
            expected = joint[1] / (joint[0] + joint[1])
            self.assertAlmostEqual(
                float(model.predict_proba(x.reshape(1, -1))[0]), expected, delta=1e-9
            )

    def test_variance_floor(self):
        model = fit_gnb([[1.0, 0.0], [1.0, 1.0], [2.0, 5.0]], [0, 0, 1], var_floor=1e-3)
        self.assertTrue((model.variances >= 1e-3).all())

    def test_missing_class(self):
        with self.assertRaises(ValueError):
            fit_gnb([[0.0], [1.0]], [0, 0])


class SvmTest(SimpleTestCase):
    @staticmethod
    def dense_dual(X, y01, C, gamma):
        """Solve the dual with a general-purpose optimizer and return (alpha, bias)."""
        y = np.where(y01 == 1, 1.0, -1.0)
        Q = np.outer(y, y) * kernel_matrix(X, X, 'rbf', gamma)
        result = minimize(
            lambda a: 0.5 * a @ Q @ a - a.sum(),
            np.zeros(len(y)),
            jac=lambda a: Q @ a - 1.0,
            bounds=[(0.0, C)] * len(y),
            constraints=[{'type': 'eq', 'fun': lambda a: a @ y, 'jac': lambda a: y}],
            method='SLSQP',
            options={'ftol': 1e-14, 'maxiter': 1000},
        )
        alpha = result.x
        free = (alpha > 1e-6) & (alpha < C - 1e-6)
        if not free.any():
            return alpha, None
        K = kernel_matrix(X, X, 'rbf', gamma)
        bias = float(np.mean(y[free] - K[free] @ (alpha * y)))
        return alpha, bias

    def test_small_problems_match_dense_solution(self):
        """Test SMO against a direct dual solve on four-point problems"""
        rng = np.random.default_rng(4)
        y = np.array([0, 0, 1, 1])
        checked = 0
        for _ in range(20):
            X = rng.uniform(0.0, 3.0, size=(4, 2))
            alpha, bias = self.dense_dual(X, y, C=100.0, gamma=0.5)
            if bias is None:
                continue

            model = fit_svm(X, y, C=100.0, gamma=0.5, tol=1e-6, max_passes=1000)
            self.assertTrue(model.converged)

            probes = rng.uniform(-1.0, 4.0, size=(10, 2))
            signed = np.where(y == 1, 1.0, -1.0)
            expected = kernel_matrix(probes, X, 'rbf', 0.5) @ (alpha * signed) + bias
            np.testing.assert_allclose(
                model.decision_function(probes), expected, atol=1e-3
            )
            checked += 1
        self.assertGreater(checked, 0)

    def test_box_and_equality_constraints(self):
        X, y = two_blobs(separation=1.0)
        model = fit_svm(X, y, C=0.5)

        self.assertTrue((model.alphas > 0).all())
        self.assertTrue((model.alphas <= 0.5 + 1e-9).all())
        self.assertAlmostEqual(float(model.dual_coef.sum()), 0.0, places=8)
        np.testing.assert_array_equal(model.support_vectors, X[model.support])

    def test_non_support_vectors_do_not_matter(self):
        X, y = two_blobs(n_per_class=20, dims=2, separation=2.0)
        model = fit_svm(X, y, C=1.0, gamma=0.5, tol=1e-6, max_passes=1000)
        outside = np.setdiff1d(np.arange(len(y)), model.support)
        self.assertGreater(len(outside), 0)

        keep = np.setdiff1d(np.arange(len(y)), outside[:1])
        refit = fit_svm(X[keep], y[keep], C=1.0, gamma=0.5, tol=1e-6, max_passes=1000)

        probes = np.random.default_rng(0).normal(1.0, 2.0, size=(20, 2))
        np.testing.assert_allclose(
            refit.decision_function(probes), model.decision_function(probes), atol=1e-3
        )

    def test_rbf(self):
        self.assertEqual(rbf([1.0, 2.0], [1.0, 2.0], 0.5), 1.0)
        self.assertAlmostEqual(rbf([0.0, 0.0], [1.0, 1.0], 0.5), math.exp(-1.0))
        self.assertAlmostEqual(rbf([0.0], [3.0], 0.0), 1.0)

        A = np.random.default_rng(6).normal(size=(4, 3))
        expected = [[rbf(a, b, 0.3) for b in A] for a in A]
        np.testing.assert_allclose(kernel_matrix(A, A, 'rbf', 0.3), expected)

    def test_xor_is_separated_by_rbf(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([0, 0, 1, 1])
        model = fit_svm(X, y, C=10.0, gamma=1.0, tol=1e-6, max_passes=1000)

        self.assertTrue(model.converged)
        self.assertEqual(list(model.predict(X)), [0, 0, 1, 1])
        centre = float(model.decision_function([[0.5, 0.5]])[0])
        self.assertAlmostEqual(centre, 0.0, delta=1e-3)
        np.testing.assert_allclose(model.alphas, 2.5026, atol=1e-3)

    def test_two_points_split_at_midpoint(self):
        X = np.array([[0.0, 0.0], [2.0, 0.0]])
        model = fit_svm(X, [0, 1], C=10.0, kernel='linear', tol=1e-6, max_passes=1000)

        np.testing.assert_allclose(model.alphas, [0.5, 0.5], atol=1e-9)
        boundary = model.decision_function([[1.0, 0.0], [1.0, 5.0]])
        np.testing.assert_allclose(boundary, 0.0, atol=1e-9)
        self.assertEqual(list(model.predict([[0.9, 0.0], [1.1, 0.0]])), [0, 1])

    def test_default_gamma(self):
        X = np.array([[0.0, 0.0], [2.0, 2.0]])
        model = fit_svm(X, [0, 1], kernel='linear')
        self.assertAlmostEqual(model.gamma, 1.0 / (2 * X.var()))

    def test_unknown_kernel(self):
        with self.assertRaises(ValueError):
            fit_svm([[0.0], [1.0]], [0, 1], kernel='poly')


class LogRegTest(SimpleTestCase):
    def test_loss_decreases_on_separable_data(self):
        X, y = two_blobs()
        X = fit_scaler(X).apply(X)
        model = fit_logreg(X, y, lr=0.1, epochs=200)

        self.assertLess(model.loss_history[-1], model.loss_history[0])
        self.assertTrue(np.all(np.diff(model.loss_history) <= 1e-12))
        self.assertEqual(list(model.predict(X)), list(y))

    def test_sigmoid(self):
        self.assertAlmostEqual(sigmoid(math.log(3)), 0.75)
        self.assertEqual(sigmoid(0.0), 0.5)
        self.assertEqual(sigmoid(-1000.0), 0.0)
        self.assertEqual(sigmoid(1000.0), 1.0)
        self.assertTrue(np.isfinite(sigmoid(np.array([-1000.0, 1000.0]))).all())

    def test_probabilities_in_unit_interval(self):
        X, y = two_blobs()
        proba = fit_logreg(X, y, epochs=50).predict_proba(X)
        self.assertTrue(((proba >= 0) & (proba <= 1)).all())


class EnsembleTest(SimpleTestCase):
    def test_forest_independent_of_jobs(self):
        X, y = two_blobs(separation=1.0)
        serial = fit_forest(X, y, n_trees=15, seed=3, n_jobs=1)
        threaded = fit_forest(X, y, n_trees=15, seed=3, n_jobs=4)

        self.assertEqual(serial.get_state(), threaded.get_state())
        np.testing.assert_array_equal(serial.predict_proba(X), threaded.predict_proba(X))

    def test_forest_default_max_features(self):
        X, y = two_blobs(dims=10)
        self.assertEqual(fit_forest(X, y, n_trees=2).max_features, 4)

    def test_boosting_independent_of_jobs(self):
        X, y = two_blobs(separation=1.0)
        serial = fit_gboost(X, y, n_rounds=10, n_jobs=1)
        threaded = fit_gboost(X, y, n_rounds=10, n_jobs=3)
        self.assertEqual(serial.get_state(), threaded.get_state())

    def test_boosting_loss_decreases(self):
        X, y = two_blobs(separation=1.0)
        history = fit_gboost(X, y, n_rounds=20).loss_history

        self.assertEqual(len(history), 21)
        self.assertTrue(np.all(np.diff(history) <= 1e-12))

    def test_boosting_single_class(self):
        model = fit_gboost([[0.0], [1.0]], [1, 1], n_rounds=5)
        self.assertEqual(model.trees, [])
        self.assertEqual(list(model.predict([[3.0]])), [1])

    def test_single_unbootstrapped_tree_is_a_plain_tree(self):
        X, y = two_blobs(separation=1.0)
        forest = fit_forest(X, y, n_trees=1, max_features=X.shape[1], bootstrap=False)
        tree = fit_tree(X, y)

        self.assertEqual(forest.trees[0].get_state(), tree.get_state())
        np.testing.assert_array_equal(forest.predict(X), tree.predict(X))

    def test_boosting_without_learning_rate_predicts_majority(self):
        X, y = two_blobs(separation=1.0)
        cases = {1: [1, 1, 1, 1, 1, 1, 1, 0, 0, 0], 0: [1, 0, 0]}
        for majority, labels in cases.items():
            labels = np.array(labels)
            model = fit_gboost(X[: len(labels)], labels, n_rounds=10, eta=0.0)
            with self.subTest(majority=majority):
                self.assertEqual(model.trees, [])
                self.assertEqual(list(model.predict(X)), [majority] * len(X))
                np.testing.assert_allclose(model.predict_proba(X), labels.mean())

    def test_leaf_weight_and_gain(self):
        self.assertAlmostEqual(gb_leaf_weight(2.0, 3.0, 1.0), -0.5)
        gain = gb_split_gain(1.0, 1.0, -1.0, 1.0, reg_lambda=1.0, gamma=0.1)
        self.assertAlmostEqual(gain, 0.5 * (0.5 + 0.5 - 0.0) - 0.1)


class ClassifierSpecTest(SimpleTestCase):
    def test_defaults_and_casting(self):
        params = validate_params('knn', {'k': '5'})
        self.assertEqual(params, {'k': 5, 'p': 2.0})

    def test_unknown_kind(self):
        with self.assertRaises(ConfigError):
            ClassifierSpec('lda')

    def test_unknown_parameter(self):
        with self.assertRaisesMessage(ConfigError, 'Unknown parameter(s) for svm: c'):
            ClassifierSpec('svm', {'c': 1.0})

    def test_invalid_value(self):
        with self.assertRaises(ConfigError):
            ClassifierSpec('knn', {'k': 'many'})
        with self.assertRaises(ConfigError):
            ClassifierSpec('knn', {'k': 2.5})

    def test_lambda_maps_to_keyword(self):
        spec = ClassifierSpec('gboost', {'lambda': '2'})
        self.assertEqual(spec.fit_kwargs()['reg_lambda'], 2.0)
        self.assertNotIn('lambda', spec.fit_kwargs())

    def test_str(self):
        self.assertEqual(str(ClassifierSpec('knn', {'k': 9})), 'knn(k=9)')
        self.assertEqual(ClassifierSpec('svm').display_name, 'SVM')


class FitPredictTest(SimpleTestCase):
    def test_every_kind_separates_blobs(self):
        X, y = two_blobs(seed=1)
        X_test, y_test = two_blobs(n_per_class=30, seed=2)
        params = {'rforest': {'n_trees': 20}, 'gboost': {'n_rounds': 20}}

        for kind in KINDS:
            with self.subTest(kind=kind):
                train, test = X, X_test
                if kind in SCALED_KINDS:
                    scaler = fit_scaler(X)
                    train, test = scaler.apply(X), scaler.apply(X_test)
                model = fit(ClassifierSpec(kind, params.get(kind, {})), train, y)
                report = evaluate(predict(model, test), y_test)
                self.assertGreaterEqual(report.accuracy, 0.95)

    def test_unscaled_kinds_ignore_feature_scale(self):
        """Test that multiplying every feature by 4 leaves predictions unchanged"""
        X, y = two_blobs(separation=1.0, seed=4)
        X_test, _ = two_blobs(n_per_class=30, separation=1.0, seed=5)
        specs = {
            'dtree': ClassifierSpec('dtree'),
            'rforest': ClassifierSpec('rforest', {'n_trees': 9, 'seed': 2}),
            'gboost': ClassifierSpec('gboost', {'n_rounds': 10}),
            'knn': ClassifierSpec('knn', {'k': 5}),
            'gnb': ClassifierSpec('gnb'),
        }
        for kind, spec in specs.items():
            with self.subTest(kind=kind):
                plain = fit(spec, X, y)
                scaled = fit(spec, 4.0 * X, y)
                np.testing.assert_array_equal(
                    predict(scaled, 4.0 * X_test), predict(plain, X_test)
                )
                if kind == 'gnb':
                    np.testing.assert_allclose(
                        predict_proba(scaled, 4.0 * X_test),
                        predict_proba(plain, X_test),
                        rtol=1e-9,
                        atol=1e-12,
                    )

    def test_predict_proba_needs_probabilistic_model(self):
        X, y = two_blobs()
        with self.assertRaises(ValueError):
            predict_proba(fit(ClassifierSpec('knn', {'k': 3}), X, y), X)
        proba = predict_proba(fit(ClassifierSpec('gnb'), X, y), X)
        self.assertEqual(proba.shape, (len(X),))

    def test_feature_count_checked(self):
        X, y = two_blobs()
        model = fit(ClassifierSpec('gnb'), X, y)
        with self.assertRaises(ValueError):
            predict(model, X[:, :2])


class PersistenceTest(SimpleTestCase):
    def test_saved_model_predicts_identically(self):
        X, y = two_blobs(separation=1.0)
        scaler = fit_scaler(X)
        spec = ClassifierSpec('svm', {'C': 2.0})
        model = fit(spec, scaler.apply(X), y)

        with tempfile.TemporaryDirectory() as tmp:
            path = save_model(model, Path(tmp) / 'svm.json', spec, scaler)
            bundle = load_model(path)

        self.assertEqual(bundle.spec, spec)
        np.testing.assert_array_equal(
            predict(bundle.model, bundle.scaler.apply(X)), predict(model, scaler.apply(X))
        )

    def test_every_kind_survives_json(self):
        X, y = two_blobs(separation=1.0)
        params = {'rforest': {'n_trees': 5}, 'gboost': {'n_rounds': 5}}

        for kind in KINDS:
            with self.subTest(kind=kind):
                spec = ClassifierSpec(kind, params.get(kind, {}))
                model = fit(spec, X, y)
                restored = model_from_dict(json.loads(json.dumps(model_to_dict(model))))
                np.testing.assert_array_equal(
                    predict(restored.model, X), predict(model, X)
                )

    def test_wrong_format(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'model.json'
            path.write_text('{"format": "something-else", "version": 1}')
            with self.assertRaises(ConfigError):
                load_model(path)
            with self.assertRaises(ConfigError):
                load_model(Path(tmp) / 'missing.json')
