"""
Tests for the JSON, table and CSV formatters.
"""

import csv
import io
import json
import unittest

from hypmoce.formatters import (
    format_ablation_table,
    format_delta_table,
    format_folds_csv,
    format_json,
    format_manifest_table,
    format_metrics_table,
    format_summary_table,
)

SUMMARY = {
    "seed": 1,
    "folds": [
        {
            "fold": 0, "seed": 11, "best_epoch": 3, "test_groups": [0, 1],
            "balanced_accuracy": 0.75, "macro_f1": 0.7, "lambda": 0.31,
            "curvatures": {"shallow": -0.8, "deep": -2.5},
        },
        {
            "fold": 1, "seed": 12, "best_epoch": 1, "test_groups": [2, 3],
            "balanced_accuracy": 0.5, "macro_f1": 0.4, "lambda": None,
            "curvatures": {"shallow": -0.9, "deep": -2.1},
        },
    ],
    "balanced_accuracy": {"mean": 0.625, "std": 0.125},
    "macro_f1": {"mean": 0.55, "std": 0.15},
}


class TestFormatters(unittest.TestCase):

    def test_json_is_sorted_and_stable(self):
        """Test that JSON output does not depend on key insertion order."""
        first = format_json({"b": 1, "a": {"y": 2, "x": 3}})
        second = format_json({"a": {"x": 3, "y": 2}, "b": 1})
        self.assertEqual(first, second)
        self.assertEqual(json.loads(first), {"a": {"x": 3, "y": 2}, "b": 1})
        self.assertIn("δ", format_json({"symbol": "δ"}))

    def test_summary_table(self):
        """Test the cross-validation table rows and footer."""
        table = format_summary_table(SUMMARY)
        self.assertIn("75.00", table)
        self.assertIn("0,1", table)
        self.assertIn("Balanced accuracy: 62.50 ± 12.50", table)
        self.assertIn("deep=-2.500, shallow=-0.800", table)
        self.assertEqual(format_summary_table({}), "No folds were run.")

    def test_folds_csv(self):
        """Test one CSV row per fold with a column per modality curvature."""
        rows = list(csv.DictReader(io.StringIO(format_folds_csv(SUMMARY))))
        self.assertEqual(len(rows), 2)
        self.assertEqual(
            list(rows[0]),
            ["fold", "seed", "best_epoch", "balanced_accuracy", "macro_f1", "lambda",
             "curvature_deep", "curvature_shallow"],
        )
        self.assertEqual(rows[0]["curvature_deep"], "-2.5")
        self.assertEqual(rows[1]["lambda"], "")

    def test_delta_table(self):
        """Test the δ table and the empty report."""
        report = {
            "delta_rel": 0.5858, "delta_rel_std": 0.01, "batches": 2, "batch_size": 4,
            "per_batch": [
                {"delta": 0.41, "diameter": 1.41, "delta_rel": 0.58},
                {"delta": 0.42, "diameter": 1.42, "delta_rel": 0.59},
            ],
            "metadata": {"points": 8, "metric": "precomputed"},
        }
        table = format_delta_table(report)
        self.assertIn("Points: 8 (precomputed metric)", table)
        self.assertIn("0.5858 ± 0.0100", table)
        self.assertEqual(len(table.splitlines()), 3 + 2 + 2)
        self.assertEqual(format_delta_table({}), "No δ report available.")

    def test_metrics_table(self):
        """Test the confusion matrix layout."""
        metrics = {
            "balanced_accuracy": 0.625, "macro_f1": 0.619, "recalls": [0.75, 0.5],
            "confusion": [[3, 1], [2, 2]], "curvatures": {"a": -1.0}, "lambda": None,
        }
        table = format_metrics_table(metrics)
        self.assertIn("Balanced accuracy: 62.50", table)
        self.assertIn("0.750", table)
        self.assertNotIn("Lambda", table)

    def test_ablation_table(self):
        """Test the ablation table with and without a p-value."""
        report = {
            "seeds": [0, 1],
            "variants": {"full": {"mean": 0.8, "std": 0.01}, "euclidean": {"mean": 0.7, "std": 0.02}},
            "full_vs_euclidean": {"mean_difference": 0.1, "statistic": 3.0, "p_value": 0.04},
            "positive_correlation_seeds": 2,
            "lambda_growth_seeds": 1,
        }
        table = format_ablation_table(report)
        self.assertIn("p = 0.0400", table)
        self.assertIn("in 2 of 2 seed(s)", table)
        report["full_vs_euclidean"]["p_value"] = None
        self.assertIn("p = n/a", format_ablation_table(report))
        self.assertEqual(format_ablation_table({}), "No variants were run.")

    def test_ablation_table_deltas(self):
        """Test the raw and encoded δ_rel columns."""
        report = {
            "seeds": [0],
            "variants": {"full": {"mean": 0.8, "std": 0.0}},
            "raw_delta_rel": {"deep": 0.31234, "shallow": 0.5},
            "encoded_delta_rel": {"deep": 0.12, "shallow": None},
        }
        table = format_ablation_table(report)
        self.assertIn("Encoded δ_rel", table)
        self.assertIn("0.3123", table)
        self.assertIn("0.1200", table)
        self.assertIn("n/a", table)

    def test_manifest_table(self):
        """Test the dataset manifest summary."""
        manifest = {
            "samples": 48, "classes": 2, "groups": 6,
            "modalities": [{"name": "deep", "dim": 4, "file": "deep.csv"}],
        }
        table = format_manifest_table(manifest)
        self.assertIn("Samples: 48", table)
        self.assertIn("deep.csv", table)


if __name__ == '__main__':
    unittest.main()
