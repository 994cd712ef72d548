"""Per-participant maintenance-strategy typology and the
maintenance/prediction tradeoff.

Each eligible participant (enough raw rows) gets a label per maintenance
metric: +1 when they slow down significantly under high maintenance cost,
-1 when they speed up, 0 when neither. The anti-locality effect is the
completions coefficient of a single full-data fit; the tradeoff test asks
whether that effect differs between typology groups.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from memcost.errors import ContractViolation
from memcost.features import CONTROL_PREDICTORS
from memcost.regression import (
    ModelSpec,
    column_data,
    derive_seed,
    design_matrix,
    fit_linear,
    fold_coefficient_test,
)

#: Metric name -> feature column holding it.
METRIC_COLUMNS = {"heads": "n_heads", "deps": "n_deps"}

#: Predictors of the anti-locality model: controls, the (decorrelated)
#: maintenance variables, and dependency completions.
ANTILOCALITY_PREDICTORS = tuple(
    CONTROL_PREDICTORS + ["n_heads", "n_additional", "n_completions"]
)


def participant_seed(global_seed: int, participant_id: str) -> list[int]:
    """Deterministic per-participant RNG entropy from the global seed and a
    stable hash of the participant id (reproducible under parallelism)."""
    digest = hashlib.sha256(participant_id.encode("utf-8")).digest()
    return [int(global_seed), int.from_bytes(digest[:8], "big")]


@dataclass
class TypologyLabel:
    participant_id: str
    metric: str  # 'heads' or 'deps'
    label: int | None  # +1 slowdown, -1 speedup, 0 neither, None skipped
    p_value: float | None
    n_rows: int

    @property
    def eligible(self) -> bool:
        return self.label is not None


@dataclass
class AntiLocalityEstimate:
    participant_id: str
    coefficient: float  # RT units per completed dependency
    n_rows: int


def classify_participant(
    rows,
    participant_id: str,
    metric: str,
    k: int = 10,
    alpha: float = 0.05,
    min_rows: int = 1000,
    seed=None,
) -> TypologyLabel:
    """Label one participant's response to the given maintenance metric.

    Participants with fewer than min_rows rows are reported as skipped
    (label None) rather than silently dropped. The model contains the
    control predictors plus the one metric; the other metric is excluded to
    avoid destabilizing the estimate through their high correlation.
    """
    if metric not in METRIC_COLUMNS:
        raise ContractViolation(f"metric must be one of {sorted(METRIC_COLUMNS)}, got {metric!r}")
    n = len(rows)
    if n < min_rows:
        return TypologyLabel(
            participant_id=participant_id, metric=metric, label=None, p_value=None, n_rows=n
        )
    target = METRIC_COLUMNS[metric]
    spec = ModelSpec(predictors=tuple(CONTROL_PREDICTORS + [target]))
    columns = column_data(rows, ["rt", *spec.predictors])
    y = columns.pop("rt")
    result = fold_coefficient_test(
        y,
        columns,
        spec,
        target=target,
        k=k,
        seed=participant_seed(seed, participant_id) if isinstance(seed, int) else seed,
        alpha=alpha,
    )
    return TypologyLabel(
        participant_id=participant_id,
        metric=metric,
        label=result.side,
        p_value=result.p_value,
        n_rows=n,
    )


def antilocality_effect(rows, participant_id: str) -> AntiLocalityEstimate:
    """Completions coefficient from a single OLS fit on all of the
    participant's rows (controls + maintenance variables + completions)."""
    columns = column_data(rows, ["rt", *ANTILOCALITY_PREDICTORS])
    y = columns.pop("rt")
    X = design_matrix(columns, ANTILOCALITY_PREDICTORS)
    fit = fit_linear(X, y, ANTILOCALITY_PREDICTORS, standardize=True)
    return AntiLocalityEstimate(
        participant_id=participant_id,
        coefficient=fit.coefficient("n_completions"),
        n_rows=len(rows),
    )


@dataclass
class GroupComparison:
    metric: str
    comparison: str  # 'slowdown_vs_speedup' or 'slowdown_vs_rest'
    n_group: int
    n_other: int
    mean_group: float | None
    mean_other: float | None
    difference: float | None
    p_value: float | None
    testable: bool
    reason: str = ""

    def to_json_dict(self) -> dict:
        return {
            "metric": self.metric,
            "comparison": self.comparison,
            "n_group": self.n_group,
            "n_other": self.n_other,
            "mean_group": self.mean_group,
            "mean_other": self.mean_other,
            "difference": self.difference,
            "p_value": self.p_value,
            "testable": self.testable,
            "reason": self.reason,
        }


def _label_permutation_test(
    effects: np.ndarray, in_group: np.ndarray, n_perm: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Two-sided permutation test on the group-mean difference, shuffling
    group membership across participants."""
    observed = float(effects[in_group].mean() - effects[~in_group].mean())
    n = len(effects)
    size = int(in_group.sum())
    hits = 0
    for _ in range(n_perm):
        perm = rng.permutation(n)
        mask = np.zeros(n, dtype=bool)
        mask[perm[:size]] = True
        diff = effects[mask].mean() - effects[~mask].mean()
        if abs(diff) >= abs(observed) - 1e-12 * (abs(observed) + 1.0):
            hits += 1
    return observed, (hits + 1) / (n_perm + 1)


def tradeoff_test(
    labels: list[TypologyLabel],
    effects: list[AntiLocalityEstimate],
    n_perm: int = 10_000,
    seed=None,
) -> list[GroupComparison]:
    """Test whether the anti-locality effect differs by maintenance
    strategy, per metric: slowdown vs speedup (primary) and slowdown vs
    rest. Groups with fewer than 2 members are reported as untestable."""
    derive_seed(seed)  # fail fast on a missing seed
    effect_by_id = {e.participant_id: e.coefficient for e in effects}
    out: list[GroupComparison] = []
    metrics = sorted({l.metric for l in labels})
    for metric in metrics:
        relevant = [
            l for l in labels if l.metric == metric and l.eligible and l.participant_id in effect_by_id
        ]
        label_vec = np.array([l.label for l in relevant])
        effect_vec = np.array([effect_by_id[l.participant_id] for l in relevant])
        for comparison, other_labels in (
            ("slowdown_vs_speedup", (-1,)),
            ("slowdown_vs_rest", (-1, 0)),
        ):
            keep = np.isin(label_vec, [1, *other_labels])
            in_group = label_vec[keep] == 1
            n_group = int(in_group.sum())
            n_other = int((~in_group).sum())
            if n_group < 2 or n_other < 2:
                out.append(
                    GroupComparison(
                        metric=metric,
                        comparison=comparison,
                        n_group=n_group,
                        n_other=n_other,
                        mean_group=None,
                        mean_other=None,
                        difference=None,
                        p_value=None,
                        testable=False,
                        reason="a comparison group has fewer than 2 members",
                    )
                )
                continue
            sub = effect_vec[keep]
            rng = np.random.default_rng(
                derive_seed(seed, metrics.index(metric),
                            0 if comparison == "slowdown_vs_speedup" else 1)
            )
            observed, p_value = _label_permutation_test(sub, in_group, n_perm, rng)
            out.append(
                GroupComparison(
                    metric=metric,
                    comparison=comparison,
                    n_group=n_group,
                    n_other=n_other,
                    mean_group=float(sub[in_group].mean()),
                    mean_other=float(sub[~in_group].mean()),
                    difference=observed,
                    p_value=p_value,
                    testable=True,
                )
            )
    return out
