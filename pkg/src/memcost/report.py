"""Machine-readable reports and plot-ready tables.

Floats are written with 6 significant digits; significance markers follow
the conventional thresholds: *** p<0.001, ** p<0.01, * p<0.05, † p<0.1.
"""

from __future__ import annotations

import json
import math

STAR_THRESHOLDS = [(0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, "†")]


def stars(p_value: float | None) -> str:
    if p_value is None:
        return ""
    for threshold, marker in STAR_THRESHOLDS:
        if p_value < threshold:
            return marker
    return ""


def fmt(value) -> str:
    """Fixed-precision cell formatting for report tables."""
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isnan(value):
            return "NA"
        return f"{value:.6g}"
    return str(value)


def tsv_table(header: list[str], rows: list[list]) -> str:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(fmt(cell) for cell in row))
    return "\n".join(lines) + "\n"


def _round_floats(obj, sig: int = 6):
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return None
        return float(f"{obj:.{sig}g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v, sig) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v, sig) for v in obj]
    return obj


def json_report(payload: dict, fixed_precision: bool = True) -> str:
    """Deterministic JSON: sorted keys, no timestamps, optional 6-significant
    -digit float rounding."""
    if fixed_precision:
        payload = _round_floats(payload)
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def dmse_bar_table(entries: list[dict]) -> str:
    """Plot-ready ΔMSE bars: one row per model comparison."""
    header = ["model", "delta_mse", "p_value", "stars", "base_mse", "full_mse", "n_items"]
    rows = [
        [
            e["name"],
            e["delta_mse"],
            e["p_value"],
            stars(e["p_value"]),
            e["base_mse"],
            e["full_mse"],
            e["n_items"],
        ]
        for e in entries
    ]
    return tsv_table(header, rows)


def coefficient_distribution_table(fold_coefficients: dict[str, list[float]]) -> str:
    """Plot-ready fold-coefficient distributions (one row per predictor and
    fold), for coefficient box/violin figures."""
    header = ["predictor", "fold", "coefficient"]
    rows = []
    for name, values in fold_coefficients.items():
        if name == "intercept":
            continue
        for fold, value in enumerate(values, start=1):
            rows.append([name, fold, float(value)])
    return tsv_table(header, rows)


def correlation_table(names: list[str], matrix) -> str:
    header = ["variable", *names]
    rows = []
    for i, name in enumerate(names):
        rows.append([name, *[float(matrix[i][j]) for j in range(len(names))]])
    return tsv_table(header, rows)


def typology_table(labels) -> str:
    header = ["participant_id", "metric", "label", "p_value", "n_rows"]
    rows = []
    for l in labels:
        rows.append(
            [
                l.participant_id,
                l.metric,
                "skipped" if l.label is None else l.label,
                l.p_value,
                l.n_rows,
            ]
        )
    return tsv_table(header, rows)


def effects_table(effects) -> str:
    header = ["participant_id", "antilocality_coefficient", "n_rows"]
    return tsv_table(header, [[e.participant_id, e.coefficient, e.n_rows] for e in effects])


def effects_by_label_table(labels, effects) -> str:
    """Plot-ready anti-locality distributions grouped by typology label."""
    effect_by_id = {e.participant_id: e.coefficient for e in effects}
    header = ["metric", "label", "participant_id", "antilocality_coefficient"]
    rows = []
    for l in labels:
        if not l.eligible or l.participant_id not in effect_by_id:
            continue
        rows.append([l.metric, l.label, l.participant_id, effect_by_id[l.participant_id]])
    return tsv_table(header, rows)
