"""End-to-end orchestration of the analysis commands.

Every command recomputes deterministically from the configured inputs and
writes its artifacts plus a manifest (input digests, config echo, seed,
toolkit version) into the output directory. ``report`` is the exception:
it only formats artifacts persisted by earlier commands and never refits
anything.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from memcost import __version__
from memcost.config import PipelineConfig
from memcost.corpus import (
    Corpus,
    align_reading_times,
    drop_invalid_sentences,
    parse_conllu_file,
    read_reading_times,
    read_region_file,
    segment_corpus,
    trim_observations,
    write_conllu,
)
from memcost.errors import ConfigError, FeatureBuildError
from memcost.features import (
    CONTROL_PREDICTORS,
    FEATURE_COLUMNS,
    build_feature_matrix,
    read_freq_table,
    read_lm_surprisal,
    rows_from_tsv,
    rows_to_tsv,
)
from memcost.metrics import profiles_to_tsv, region_profile
from memcost.participants import (
    antilocality_effect,
    classify_participant,
    tradeoff_test,
)
from memcost.regression import (
    ModelSpec,
    column_data,
    cross_validate,
    derive_seed,
    permutation_test_errors,
)
from memcost.report import (
    coefficient_distribution_table,
    correlation_table,
    dmse_bar_table,
    effects_by_label_table,
    effects_table,
    json_report,
    stars,
    tsv_table,
    typology_table,
)

logger = logging.getLogger(__name__)

NUMERIC_PREDICTORS = [
    c for c in FEATURE_COLUMNS if c not in ("doc_id", "sent_index", "region_index",
                                            "participant_id", "rt")
]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_atomic(path: Path, content: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class PipelineData:
    """Everything derived from the raw inputs, built once per command."""

    corpus: Corpus
    dropped: list
    segmentation: dict
    aligned: list
    profiles: dict
    rows: list = field(default_factory=list)


class Pipeline:
    def __init__(self, config: PipelineConfig, out_dir: Path):
        self.config = config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    # ------------------------------------------------------------------ data

    def _load(self, with_rows: bool = True, aggregation: str | None = None) -> PipelineData:
        cfg = self.config
        documents = parse_conllu_file(cfg.treebank)
        documents, dropped = drop_invalid_sentences(documents, policy=cfg.invalid_trees)
        corpus = Corpus(documents)
        if cfg.strict_sent_ids:
            corpus.check_sent_ids()
        entries = read_region_file(cfg.regions) if cfg.regions is not None else []
        segmentation = segment_corpus(corpus, entries, fallback=cfg.region_fallback)
        observations = read_reading_times(cfg.reading_times)
        observations = trim_observations(
            observations, min_ms=cfg.rt_trim_min_ms, max_ms=cfg.rt_trim_max_ms
        )
        mode = aggregation or cfg.aggregation_mode
        aligned = align_reading_times(segmentation, observations, aggregation=mode)
        profiles = {}
        for doc_id, sent_index, sentence in corpus.iter_sentences():
            for profile in region_profile(
                sentence, segmentation[(doc_id, sent_index)], cfg.arc_policy
            ):
                profiles[profile.region.key] = profile
        data = PipelineData(
            corpus=corpus,
            dropped=dropped,
            segmentation=segmentation,
            aligned=aligned,
            profiles=profiles,
        )
        if with_rows:
            data.rows = self._build_rows(data)
        return data

    def _build_rows(self, data: PipelineData):
        cfg = self.config
        freq = read_freq_table(cfg.freq_table, key=cfg.freq_key)
        lm = read_lm_surprisal(cfg.lm_surprisal)
        return build_feature_matrix(
            data.aligned,
            data.profiles,
            data.corpus,
            data.segmentation,
            freq,
            lm,
            alpha=cfg.smoothing_alpha,
            vocab_size=cfg.smoothing_vocab_size,
            particle_lemmas=(
                cfg.filters.particle_lemmas if cfg.filters.exclude_particles else None
            ),
            content_pos=cfg.filters.content_pos if cfg.filters.content_words else None,
        )

    # ------------------------------------------------------------- manifests

    def _write_manifest(self, command: str, outputs: list[str], suffix: str = ""):
        cfg = self.config
        inputs = {}
        for name in ("treebank", "regions", "reading_times", "freq_table", "lm_surprisal"):
            path = getattr(cfg, name)
            if path is not None:
                inputs[name] = sha256_file(path)
        manifest = {
            "command": command,
            "toolkit_version": __version__,
            "seed": cfg.statistics.seed,
            "config": cfg.raw,
            "surprisal_unit": "bits",
            "inputs": inputs,
            "outputs": {name: sha256_file(self.out_dir / name) for name in sorted(outputs)},
        }
        name = f"manifest_{command}{suffix}.json"
        write_atomic(self.out_dir / name, json_report(manifest, fixed_precision=False))
        return name

    def _emit(self, filename: str, content: str) -> str:
        write_atomic(self.out_dir / filename, content)
        return filename

    # -------------------------------------------------------------- commands

    def run_parse(self) -> list[str]:
        data = self._load(with_rows=False)
        outputs = [
            self._emit("parsed.conllu", write_conllu(data.corpus.documents)),
            self._emit(
                "parse_summary.json",
                json_report(
                    {
                        "documents": len(data.corpus.documents),
                        "sentences": sum(
                            1 for _ in data.corpus.iter_sentences()
                        ),
                        "tokens": sum(
                            len(s) for _, _, s in data.corpus.iter_sentences()
                        ),
                        "regions": sum(len(v) for v in data.segmentation.values()),
                        "observations": len(data.aligned),
                        "dropped_sentences": [
                            {
                                "doc_id": doc_id,
                                "sent_index": sent_index,
                                "violations": report.violations,
                            }
                            for doc_id, sent_index, report in data.dropped
                        ],
                    }
                ),
            ),
        ]
        self._write_manifest("parse", outputs)
        return outputs

    def run_metrics(self) -> list[str]:
        data = self._load(with_rows=False)
        ordered = []
        for doc_id, sent_index, _ in data.corpus.iter_sentences():
            for region in data.segmentation[(doc_id, sent_index)]:
                ordered.append(data.profiles[region.key])
        outputs = [self._emit("metrics.tsv", profiles_to_tsv(ordered))]
        self._write_manifest("metrics", outputs)
        return outputs

    def run_features(self) -> list[str]:
        data = self._load(with_rows=True)
        outputs = [self._emit("features.tsv", rows_to_tsv(data.rows))]
        self._write_manifest("features", outputs)
        return outputs

    def _eval_groups(self, rows):
        if not self.config.statistics.group_by_document:
            return None
        doc_ids = sorted({r.doc_id for r in rows})
        index = {d: i for i, d in enumerate(doc_ids)}
        return np.array([index[r.doc_id] for r in rows])

    def _run_comparison(self, rows, base, add, name, k, repeats, n_perm, seed, kind):
        columns = column_data(rows, ["rt", *base, *add])
        y = columns.pop("rt")
        result = cross_validate(
            y,
            columns,
            ModelSpec(predictors=tuple(base)),
            ModelSpec(predictors=tuple(base) + tuple(add)),
            k=k,
            repeats=repeats,
            n_perm=n_perm,
            seed=seed,
            groups=self._eval_groups(rows),
        )
        payload = result.to_json_dict()
        payload["name"] = name
        payload["added_predictors"] = list(add)
        payload["kind"] = kind
        return result, payload

    @staticmethod
    def _check_predictors(base: list[str], add: list[str]):
        for predictor in [*base, *add]:
            if predictor not in NUMERIC_PREDICTORS:
                raise ConfigError(
                    f"unknown predictor {predictor!r}; choose from {NUMERIC_PREDICTORS}"
                )
        overlap = set(base) & set(add)
        if overlap:
            raise ConfigError(f"predictors both in base and add: {sorted(overlap)}")

    def run_eval(
        self,
        base: list[str] | None = None,
        add: list[str] | None = None,
        name: str | None = None,
        k: int | None = None,
        repeats: int | None = None,
        n_perm: int | None = None,
        seed: int | None = None,
        ablation: bool = False,
        compare_with: str | None = None,
    ) -> list[str]:
        cfg = self.config.statistics
        base = list(base) if base else list(CONTROL_PREDICTORS)
        k = k or cfg.k
        repeats = repeats or cfg.repeats
        n_perm = n_perm or cfg.n_perm
        seed = cfg.seed if seed is None else seed

        data = self._load(with_rows=True)
        if not data.rows:
            raise FeatureBuildError("no analyzable rows after filtering")

        if ablation:
            # Leave-one-out over the baseline: each control predictor's
            # delta-MSE against the baseline that lacks it.
            self._check_predictors(base, [])
            outputs = []
            bar_entries = []
            for predictor in base:
                reduced = [p for p in base if p != predictor]
                comparison_name = f"ablation_{predictor}"
                result, payload = self._run_comparison(
                    data.rows, reduced, [predictor], comparison_name,
                    k, repeats, n_perm, seed, kind="ablation",
                )
                outputs.append(
                    self._emit(
                        f"eval_{comparison_name}.json",
                        json_report(payload, fixed_precision=False),
                    )
                )
                bar_entries.append(
                    {
                        "name": comparison_name,
                        "delta_mse": result.delta_mse,
                        "p_value": result.p_value,
                        "base_mse": result.base_mse,
                        "full_mse": result.full_mse,
                        "n_items": result.n_items,
                    }
                )
            outputs.append(self._emit("dmse_ablation.tsv", dmse_bar_table(bar_entries)))
            self._write_manifest("eval", outputs, suffix="_ablation")
            return outputs

        add = list(add) if add else []
        if not add:
            raise ConfigError("eval requires at least one added predictor (--add)")
        self._check_predictors(base, add)
        name = name or ("plus_" + "_".join(add))
        safe = name.replace("/", "_")

        result, payload = self._run_comparison(
            data.rows, base, add, name, k, repeats, n_perm, seed, kind="comparison"
        )
        if compare_with is not None:
            payload["pairwise"] = self._pairwise_comparison(result, compare_with, n_perm, seed)
        outputs = [
            self._emit(f"eval_{safe}.json", json_report(payload, fixed_precision=False)),
            self._emit(
                f"dmse_{safe}.tsv",
                dmse_bar_table(
                    [
                        {
                            "name": name,
                            "delta_mse": result.delta_mse,
                            "p_value": result.p_value,
                            "base_mse": result.base_mse,
                            "full_mse": result.full_mse,
                            "n_items": result.n_items,
                        }
                    ]
                ),
            ),
            self._emit(
                f"fold_coefficients_{safe}.tsv",
                coefficient_distribution_table(
                    {k2: list(v) for k2, v in result.fold_coefficients.items()}
                ),
            ),
        ]
        self._write_manifest("eval", outputs, suffix=f"_{safe}")
        return outputs

    def _pairwise_comparison(self, result, other_name: str, n_perm: int, seed) -> dict:
        """Paired sign-flip comparison of this run's full model against a
        previously persisted one (same rows required)."""
        other_path = self.out_dir / f"eval_{other_name}.json"
        if not other_path.is_file():
            raise ConfigError(f"no persisted eval result named {other_name!r} ({other_path})")
        other = json.loads(other_path.read_text(encoding="utf-8"))
        other_errors = np.asarray(other["full_errors"], dtype=float)
        if len(other_errors) != result.n_items:
            raise ConfigError(
                f"cannot pair with {other_name!r}: item counts differ "
                f"({len(other_errors)} vs {result.n_items})"
            )
        return {
            "other": other_name,
            "p_current_better": permutation_test_errors(
                other_errors, result.full_errors, n_perm=n_perm, seed=derive_seed(seed, 4)
            ),
            "p_other_better": permutation_test_errors(
                result.full_errors, other_errors, n_perm=n_perm, seed=derive_seed(seed, 5)
            ),
        }

    def run_participants(self) -> list[str]:
        cfg = self.config.statistics
        data = self._load(with_rows=True, aggregation="raw")
        by_participant: dict[str, list] = {}
        for row in data.rows:
            by_participant.setdefault(row.participant_id, []).append(row)

        labels = []
        effects = []
        skipped = 0
        for participant_id in sorted(by_participant):
            rows = by_participant[participant_id]
            for metric in ("heads", "deps"):
                label = classify_participant(
                    rows,
                    participant_id,
                    metric,
                    k=cfg.k,
                    alpha=cfg.alpha,
                    min_rows=cfg.min_rows,
                    seed=cfg.seed,
                )
                labels.append(label)
            if len(rows) >= cfg.min_rows:
                effects.append(antilocality_effect(rows, participant_id))
            else:
                skipped += 1
                logger.warning(
                    "participant %s skipped (%d rows < min_rows %d)",
                    participant_id,
                    len(rows),
                    cfg.min_rows,
                )
        comparisons = tradeoff_test(labels, effects, n_perm=cfg.n_perm, seed=cfg.seed)
        label_counts: dict[str, dict[str, int]] = {}
        for label in labels:
            bucket = label_counts.setdefault(label.metric, {"+1": 0, "0": 0, "-1": 0, "skipped": 0})
            key = "skipped" if label.label is None else {1: "+1", 0: "0", -1: "-1"}[label.label]
            bucket[key] += 1
        tradeoff_payload = {
            "eligible_participants": len(effects),
            "skipped_participants": skipped,
            "label_counts": label_counts,
            "comparisons": [c.to_json_dict() for c in comparisons],
        }
        outputs = [
            self._emit("typology.tsv", typology_table(labels)),
            self._emit("antilocality_effects.tsv", effects_table(effects)),
            self._emit("effects_by_label.tsv", effects_by_label_table(labels, effects)),
            self._emit("tradeoff.json", json_report(tradeoff_payload)),
        ]
        self._write_manifest("participants", outputs)
        return outputs

    def run_report(self) -> list[str]:
        features_path = self.out_dir / "features.tsv"
        if not features_path.is_file():
            raise ConfigError(
                f"report needs a persisted feature matrix; run 'features' first ({features_path})"
            )
        rows = rows_from_tsv(features_path.read_text(encoding="utf-8"))
        if not rows:
            raise FeatureBuildError("persisted feature matrix has no rows")
        names = ["rt", *NUMERIC_PREDICTORS]
        columns = column_data(rows, names)
        matrix = np.corrcoef(np.vstack([columns[n] for n in names]))

        additional = columns["n_additional"]
        derived = columns["n_deps"] - columns["n_heads"]
        identity_exact = bool(np.array_equal(additional, derived))
        if np.std(additional) > 0 and np.std(derived) > 0:
            identity_corr = float(np.corrcoef(additional, derived)[0, 1])
        else:
            identity_corr = None

        eval_entries = []
        for path in sorted(self.out_dir.glob("eval_*.json")):
            payload = json.loads(path.read_text(encoding="utf-8"))
            eval_entries.append(payload)
        dmse_rows = [
            [
                e["name"],
                e.get("kind", "comparison"),
                e["delta_mse"],
                e["p_value"],
                stars(e["p_value"]),
                e["n_items"],
            ]
            for e in eval_entries
        ]
        ablation_rows = [
            [e["added_predictors"][0], e["delta_mse"], e["p_value"], stars(e["p_value"])]
            for e in eval_entries
            if e.get("kind") == "ablation"
        ]
        report_payload = {
            "toolkit_version": __version__,
            "n_rows": len(rows),
            "identity_n_additional": {
                "holds_exactly": identity_exact,
                "corr_with_n_deps_minus_n_heads": identity_corr,
            },
            "delta_mse": [
                {
                    "name": e["name"],
                    "kind": e.get("kind", "comparison"),
                    "delta_mse": e["delta_mse"],
                    "p_value": e["p_value"],
                    "stars": stars(e["p_value"]),
                    "pairwise": e.get("pairwise"),
                }
                for e in eval_entries
            ],
        }
        tradeoff_path = self.out_dir / "tradeoff.json"
        if tradeoff_path.is_file():
            report_payload["tradeoff"] = json.loads(tradeoff_path.read_text(encoding="utf-8"))
        outputs = [
            self._emit("correlations.tsv", correlation_table(names, matrix)),
            self._emit(
                "dmse_table.tsv",
                tsv_table(
                    ["model", "kind", "delta_mse", "p_value", "stars", "n_items"], dmse_rows
                ),
            ),
            self._emit(
                "ablation_table.tsv",
                tsv_table(["predictor", "delta_mse", "p_value", "stars"], ablation_rows),
            ),
            self._emit("report.json", json_report(report_payload)),
        ]
        self._write_manifest("report", outputs)
        return outputs


COMMANDS = ("parse", "metrics", "features", "eval", "participants", "report")


def run_pipeline(config: PipelineConfig, command: str, out_dir: Path, **eval_kwargs) -> list[str]:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose from {COMMANDS}")
    pipeline = Pipeline(config, out_dir)
    if command == "parse":
        return pipeline.run_parse()
    if command == "metrics":
        return pipeline.run_metrics()
    if command == "features":
        return pipeline.run_features()
    if command == "eval":
        return pipeline.run_eval(**eval_kwargs)
    if command == "participants":
        return pipeline.run_participants()
    return pipeline.run_report()
