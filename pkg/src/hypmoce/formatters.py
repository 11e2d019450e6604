"""
Output formatters for hypmoce.
"""

import csv
import io
import json
from typing import Any, Dict, List, Sequence


def format_json(data: Dict[str, Any]) -> str:
    """
    Format a report as JSON.

    Keys are sorted so identical reports always produce identical bytes.

    Args:
        data: JSON-ready dictionary

    Returns:
        JSON formatted string
    """
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False)


def _optional(value: Any) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _table(headers: Sequence[str], rows: List[Sequence[Any]]) -> List[str]:
    cells = [[str(c) for c in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        for i, value in enumerate(row):
            widths[i] = max(widths[i], len(value))
    widths = [min(w + 2, 30) for w in widths]

    header_row = " | ".join(h.ljust(widths[i]) for i, h in enumerate(headers))
    lines = [header_row, "-" * len(header_row)]
    for row in cells:
        values = []
        for i, value in enumerate(row):
            if len(value) > widths[i]:
                value = value[:widths[i] - 3] + "..."
            values.append(value.ljust(widths[i]))
        lines.append(" | ".join(values))
    return lines


def format_delta_table(report: Dict[str, Any]) -> str:
    """
    Format a δ-hyperbolicity report as a readable table.

    Args:
        report: ``DeltaReport.to_dict()`` output

    Returns:
        Formatted table string
    """
    if not report:
        return "No δ report available."

    meta = report.get("metadata", {})
    output = [
        f"Points: {meta.get('points', '?')} ({meta.get('metric', '?')} metric)",
        f"δ_rel: {report['delta_rel']:.4f} ± {report['delta_rel_std']:.4f} "
        f"({report['batches']} batch(es) of {report['batch_size']})",
        "-" * 60,
    ]
    rows = [
        [i, f"{b['delta']:.6g}", f"{b['diameter']:.6g}", f"{b['delta_rel']:.4f}"]
        for i, b in enumerate(report.get("per_batch", []))
    ]
    output.extend(_table(["Batch", "δ", "Diameter", "δ_rel"], rows))
    return '\n'.join(output)


def _curvature_text(curvatures: Dict[str, float]) -> str:
    return ", ".join(f"{m}={k:.3f}" for m, k in sorted(curvatures.items()))


def format_summary_table(summary: Dict[str, Any]) -> str:
    """Format a cross-validation summary: one row per fold, then mean ± std."""
    folds = summary.get("folds", [])
    if not folds:
        return "No folds were run."

    rows = []
    for fold in folds:
        strength = fold.get("lambda")
        rows.append([
            fold["fold"],
            ",".join(str(g) for g in fold.get("test_groups", [])),
            f"{fold['balanced_accuracy'] * 100:.2f}",
            f"{fold['macro_f1'] * 100:.2f}",
            "-" if strength is None else f"{strength:.3f}",
            _curvature_text(fold.get("curvatures", {})),
        ])
    output = _table(["Fold", "Test subjects", "Bal. acc %", "Macro F1 %", "Lambda", "Curvatures"], rows)
    output.append("-" * len(output[0]))

    acc = summary["balanced_accuracy"]
    f1 = summary["macro_f1"]
    output.append(f"Balanced accuracy: {acc['mean'] * 100:.2f} ± {acc['std'] * 100:.2f}")
    output.append(f"Macro F1: {f1['mean'] * 100:.2f} ± {f1['std'] * 100:.2f}")
    return '\n'.join(output)


def format_folds_csv(summary: Dict[str, Any]) -> str:
    """
    Format per-fold metrics as CSV, one row per fold.

    Curvatures become one ``curvature_<modality>`` column each.
    """
    folds = summary.get("folds", [])
    modalities = sorted({m for fold in folds for m in fold.get("curvatures", {})})
    fieldnames = ["fold", "seed", "best_epoch", "balanced_accuracy", "macro_f1", "lambda"]
    fieldnames += [f"curvature_{m}" for m in modalities]

    output = io.StringIO()
    writer = csv.DictWriter(output, fieldnames=fieldnames, lineterminator='\n')
    writer.writeheader()
    for fold in folds:
        row = {name: fold.get(name) for name in fieldnames[:6]}
        if row["lambda"] is None:
            row["lambda"] = ""
        for m in modalities:
            row[f"curvature_{m}"] = fold.get("curvatures", {}).get(m, "")
        writer.writerow(row)
    return output.getvalue()


def format_metrics_table(metrics: Dict[str, Any]) -> str:
    """Format a single ``MetricsReport`` with its confusion matrix."""
    output = [
        f"Balanced accuracy: {metrics['balanced_accuracy'] * 100:.2f}",
        f"Macro F1: {metrics['macro_f1'] * 100:.2f}",
    ]
    if metrics.get("lambda") is not None:
        output.append(f"Lambda: {metrics['lambda']:.3f}")
    if metrics.get("curvatures"):
        output.append(f"Curvatures: {_curvature_text(metrics['curvatures'])}")
    output.append("-" * 60)
    confusion = metrics.get("confusion", [])
    headers = ["True \\ Pred"] + [str(c) for c in range(len(confusion))] + ["Recall"]
    rows = [
        [c] + list(row) + [f"{metrics['recalls'][c]:.3f}"]
        for c, row in enumerate(confusion)
    ]
    output.extend(_table(headers, rows))
    return '\n'.join(output)


def format_ablation_table(report: Dict[str, Any]) -> str:
    """Format an ablation report: balanced accuracy per variant, then the statistics."""
    variants = report.get("variants", {})
    if not variants:
        return "No variants were run."

    rows = [
        [name, f"{v['mean'] * 100:.2f}", f"{v['std'] * 100:.2f}"]
        for name, v in variants.items()
    ]
    output = _table(["Variant", "Bal. acc %", "Std %"], rows)

    test = report.get("full_vs_euclidean")
    if test:
        p = test.get("p_value")
        output.append(
            f"Full vs Euclidean: mean difference {test['mean_difference'] * 100:.2f} points, "
            f"p = {'n/a' if p is None else f'{p:.4f}'}"
        )
    seeds = len(report.get("seeds", []))
    if "positive_correlation_seeds" in report:
        output.append(f"Depth vs |K| Spearman > 0 in {report['positive_correlation_seeds']} of {seeds} seed(s)")
        output.append(f"Lambda grew in {report['lambda_growth_seeds']} of {seeds} seed(s)")
    raw = report.get("raw_delta_rel")
    if raw:
        encoded = report.get("encoded_delta_rel", {})
        output.append("")
        rows = [[m, _optional(raw[m]), _optional(encoded.get(m))] for m in raw]
        output.extend(_table(["Modality", "Raw δ_rel", "Encoded δ_rel"], rows))
    return '\n'.join(output)


def format_manifest_table(manifest: Dict[str, Any]) -> str:
    """Format a dataset manifest as a short summary."""
    output = [
        f"Samples: {manifest['samples']}",
        f"Classes: {manifest['classes']}",
        f"Subjects: {manifest['groups']}",
        "-" * 40,
    ]
    rows = [[m["name"], m["dim"], m["file"]] for m in manifest.get("modalities", [])]
    output.extend(_table(["Modality", "Dim", "File"], rows))
    return '\n'.join(output)
