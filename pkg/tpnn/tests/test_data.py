import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from tpnn.basis import BasisTerm, eval_basis
from tpnn.data import (
    Dataset,
    Marginal,
    ecdf_transform,
    kfold_split,
    load_csv,
    rank_transform,
    read_features,
    train_test_split,
    write_csv,
)
from tpnn.exceptions import DataValidationError


class CsvTestCase(SimpleTestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.tmp = Path(self._tmp.name)

    def write(self, name: str, text: str) -> Path:
        path = self.tmp / name
        path.write_text(text, encoding="utf-8")
        return path


class LoadCsvTests(CsvTestCase):
    def test_minimal_numeric_table(self):
        path = self.write("toy.csv", "x,y\n1.0,0.5\n2.0,0.1\n3.0,0.3\n")
        ds = load_csv(path, "y", "gaussian")

        self.assertEqual((ds.n, ds.p), (3, 1))
        np.testing.assert_allclose(ds.x[:, 0], [1 / 3, 2 / 3, 1.0])
        np.testing.assert_allclose(ds.y, [0.5, 0.1, 0.3])
        self.assertEqual(ds.columns[0].origin, "continuous-ranked")

    def test_categorical_column_is_one_hot_encoded(self):
        path = self.write("cat.csv", "color,x,y\nred,1,0\nblue,2,1\ngreen,3,0\nred,4,1\n")
        ds = load_csv(path, "y", "bernoulli")

        names = ds.column_names
        self.assertEqual(names, ["color=blue", "color=green", "color=red", "x"])
        block = ds.x[:, :3]
        np.testing.assert_array_equal(block.sum(axis=1), np.ones(4))
        np.testing.assert_array_equal(block[0], [0.0, 0.0, 1.0])
        self.assertTrue(all(c.origin == "one-hot-level" for c in ds.columns[:3]))

    def test_non_numeric_cell_in_numeric_column_names_the_line(self):
        path = self.write("bad.csv", "x,y\n1,0\n2,0\nabc,1\n3,1\n4,0\n")
        with self.assertRaises(DataValidationError) as ctx:
            load_csv(path, "y", "gaussian")
        self.assertEqual(ctx.exception.line, 4)
        self.assertIn("abc", str(ctx.exception))

    def test_missing_file(self):
        with self.assertRaises(DataValidationError):
            load_csv(self.tmp / "absent.csv", "y", "gaussian")

    def test_unknown_target(self):
        path = self.write("toy.csv", "x,y\n1,2\n3,4\n")
        with self.assertRaisesMessage(DataValidationError, "unknown target column 'label'"):
            load_csv(path, "label", "gaussian")

    def test_inconsistent_row_width(self):
        path = self.write("ragged.csv", "x,y\n1,2\n3,4,5\n6,7\n")
        with self.assertRaises(DataValidationError) as ctx:
            load_csv(path, "y", "gaussian")
        self.assertEqual(ctx.exception.line, 3)

    def test_header_without_rows(self):
        path = self.write("empty.csv", "x,y\n")
        with self.assertRaises(DataValidationError):
            load_csv(path, "y", "gaussian")

    def test_missing_value_is_rejected(self):
        path = self.write("hole.csv", "x,y\n1,2\n,3\n4,5\n")
        with self.assertRaises(DataValidationError) as ctx:
            load_csv(path, "y", "gaussian")
        self.assertEqual(ctx.exception.line, 3)

    def test_target_outside_family_support(self):
        path = self.write("labels.csv", "x,y\n1,0\n2,1\n3,2\n")
        with self.assertRaises(DataValidationError) as ctx:
            load_csv(path, "y", "bernoulli")
        self.assertEqual(ctx.exception.line, 4)

    def test_written_csv_loads_back_to_the_same_design(self):
        path = self.write("cat.csv", "color,x,y\nred,1.5,0\nblue,-2,1\ngreen,3,0\nred,4,1\n")
        ds = load_csv(path, "y", "bernoulli")
        copy = self.tmp / "copy.csv"
        write_csv(ds, copy)

        again = load_csv(copy, "y", "bernoulli")
        np.testing.assert_array_equal(again.x, ds.x)
        np.testing.assert_array_equal(again.y, ds.y)

    def test_new_rows_use_the_training_levels(self):
        ds = load_csv(self.write("cat.csv", "color,x,y\nred,1,0\nblue,2,1\nred,3,0\n"), "y", "bernoulli")
        x, y = read_features(self.write("new.csv", "color,x\nblue,2.5\n"), ds.preprocessor)
        np.testing.assert_allclose(x, [[1.0, 0.0, 2 / 3]])
        self.assertIsNone(y)

        with self.assertRaisesMessage(DataValidationError, "unknown level 'green'"):
            read_features(self.write("odd.csv", "color,x\ngreen,1\n"), ds.preprocessor)


class RankTransformTests(SimpleTestCase):
    def test_distinct_values(self):
        np.testing.assert_allclose(rank_transform([3.0, 1.0, 2.0]), [1.0, 1 / 3, 2 / 3])

    def test_constant_column_uses_average_ranks(self):
        np.testing.assert_allclose(rank_transform([5, 5, 5]), [2 / 3, 2 / 3, 2 / 3])

    def test_sorted_column(self):
        n = 7
        np.testing.assert_allclose(rank_transform(np.arange(n)), np.arange(1, n + 1) / n)

    def test_monotone_and_in_unit_interval(self):
        raw = np.random.default_rng(3).normal(size=200)
        out = rank_transform(raw)
        order = np.argsort(raw)
        self.assertTrue(np.all(np.diff(out[order]) > 0))
        self.assertTrue(np.all((out > 0) & (out <= 1)))


class MarginalTests(SimpleTestCase):
    def test_empirical_values_must_lie_in_unit_interval(self):
        with self.assertRaises(ValueError):
            Marginal.empirical(np.array([0.2, 1.5]))

    def test_dataset_marginals(self):
        ds = Dataset.from_arrays(np.array([[3.0], [1.0], [2.0]]), [0.0, 1.0, 2.0], "gaussian")
        (empirical,) = ds.marginals("empirical")
        np.testing.assert_allclose(empirical.values, [1 / 3, 2 / 3, 1.0])
        self.assertEqual(ds.marginals("uniform")[0].kind, "uniform")


class SplitTests(SimpleTestCase):
    def setUp(self) -> None:
        rng = np.random.default_rng(0)
        self.ds = Dataset.from_arrays(rng.normal(size=(10, 2)), rng.normal(size=10), "gaussian")

    def test_sizes(self):
        train, test = train_test_split(self.ds, 0.2, seed=1)
        self.assertEqual((train.n, test.n), (8, 2))

    def test_partition_and_determinism(self):
        train, test = train_test_split(self.ds, 0.3, seed=5)
        again_train, again_test = train_test_split(self.ds, 0.3, seed=5)

        np.testing.assert_array_equal(train.row_ids, again_train.row_ids)
        np.testing.assert_array_equal(test.row_ids, again_test.row_ids)
        union = np.concatenate([train.row_ids, test.row_ids])
        self.assertEqual(sorted(union.tolist()), list(range(10)))
        self.assertEqual(len(np.intersect1d(train.row_ids, test.row_ids)), 0)

    def test_test_rows_follow_the_training_ecdf(self):
        train, test = train_test_split(self.ds, 0.2, seed=2)
        reference = np.sort(train.raw[:, 0])
        expected = np.searchsorted(reference, test.raw[:, 0], side="right") / train.n
        np.testing.assert_allclose(test.x[:, 0], expected)
        np.testing.assert_allclose(np.sort(train.x[:, 0]), np.arange(1, 9) / 8)

    def test_boundaries(self):
        small = Dataset.from_arrays(np.arange(5.0)[:, None], np.zeros(5), "gaussian")
        train, test = train_test_split(small, 0.9, seed=0)
        self.assertEqual((train.n, test.n), (1, 4))
        with self.assertRaises(ValueError):
            train_test_split(small, 0.95, seed=0)
        with self.assertRaises(ValueError):
            train_test_split(small, 0.05, seed=0)

    def test_kfold_covers_every_row_once(self):
        folds = kfold_split(self.ds, 5, seed=0)
        held_out = np.concatenate([test.row_ids for _, test in folds])
        self.assertEqual(sorted(held_out.tolist()), list(range(10)))
        for train, test in folds:
            self.assertEqual(train.n + test.n, 10)


class TiedColumnTests(CsvTestCase):
    def setUp(self) -> None:
        super().setUp()
        self.ds = Dataset.from_arrays(np.array([[1.0], [1.0], [1.0], [2.0], [3.0]]), np.arange(5.0), "gaussian")

    def test_training_rows_map_back_to_their_fitting_ranks(self):
        np.testing.assert_allclose(self.ds.x[:, 0], [0.4, 0.4, 0.4, 0.8, 1.0])
        np.testing.assert_allclose(self.ds.preprocessor.transform(self.ds.raw), self.ds.x)

    def test_basis_stays_centered_on_remapped_training_rows(self):
        term = BasisTerm([0], [0.4], [0.05], 1.0)
        phi = eval_basis(self.ds.preprocessor.transform(self.ds.raw), term, self.ds.marginals())
        self.assertAlmostEqual(float(phi.mean()), 0.0, places=12)

    def test_values_between_reference_points_keep_the_plain_ecdf(self):
        reference = np.array([1.0, 1.0, 1.0, 2.0, 3.0])
        np.testing.assert_allclose(
            ecdf_transform(reference, np.array([0.5, 1.0, 1.5, 2.5, 4.0])), [0.0, 0.4, 0.6, 0.8, 1.0]
        )

    def test_single_row_is_rejected(self):
        with self.assertRaisesMessage(DataValidationError, "at least two rows"):
            Dataset.from_arrays(np.array([[1.0]]), [0.0], "gaussian")

    def test_rereading_the_training_file_reproduces_the_design(self):
        path = self.write("tied.csv", "a,b,y\n1,5,0.1\n1,5,0.2\n2,5,0.3\n2,6,0.4\n3,7,0.5\n")
        ds = load_csv(path, "y", "gaussian")
        x, y = read_features(path, ds.preprocessor, target_column="y", family="gaussian")
        np.testing.assert_allclose(x, ds.x)
        np.testing.assert_allclose(y, ds.y)
