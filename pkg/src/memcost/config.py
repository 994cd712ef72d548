"""Pipeline configuration (YAML).

All paths are resolved relative to the config file's directory. The seed is
mandatory: replication is the point, so there is no wall-clock default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from memcost.errors import ConfigError
from memcost.features import DEFAULT_CONTENT_POS, DEFAULT_PARTICLE_LEMMAS
from memcost.metrics import DEFAULT_ADJUNCT_DEPRELS, ArcPolicy

LANGUAGE_MODES = ("head-final", "head-medial")


@dataclass
class StatisticsConfig:
    k: int = 10
    repeats: int = 50
    n_perm: int = 10_000
    seed: int | None = None
    alpha: float = 0.05
    min_rows: int = 1000
    group_by_document: bool = False


@dataclass
class FilterConfig:
    exclude_particles: bool = False
    particle_lemmas: frozenset[str] = DEFAULT_PARTICLE_LEMMAS
    content_words: bool = False
    content_pos: tuple[str, ...] = DEFAULT_CONTENT_POS


@dataclass
class PipelineConfig:
    treebank: Path
    regions: Path | None
    reading_times: Path
    freq_table: Path
    lm_surprisal: Path
    language_mode: str = "head-final"
    arc_policy: ArcPolicy = field(default_factory=ArcPolicy)
    filters: FilterConfig = field(default_factory=FilterConfig)
    smoothing_alpha: float = 1.0
    smoothing_vocab_size: int | None = None
    freq_key: str = "lemma"
    aggregation_mode: str = "mean"
    region_fallback: str = "token"
    strict_sent_ids: bool = False
    invalid_trees: str = "drop"
    rt_trim_min_ms: float | None = None
    rt_trim_max_ms: float | None = None
    statistics: StatisticsConfig = field(default_factory=StatisticsConfig)
    raw: dict = field(default_factory=dict)  # parsed config as given (manifest echo)

    def validate(self):
        if self.language_mode not in LANGUAGE_MODES:
            raise ConfigError(f"language_mode must be one of {LANGUAGE_MODES}")
        if self.aggregation_mode not in ("mean", "raw"):
            raise ConfigError("aggregation.mode must be 'mean' or 'raw'")
        if self.region_fallback not in ("token", "error"):
            raise ConfigError("regions.fallback must be 'token' or 'error'")
        if self.invalid_trees not in ("drop", "abort"):
            raise ConfigError("invalid_trees must be 'drop' or 'abort'")
        if self.statistics.seed is None:
            raise ConfigError("statistics.seed is required (no wall-clock default)")
        if self.statistics.k < 2:
            raise ConfigError("statistics.k must be >= 2")
        if self.statistics.repeats < 1:
            raise ConfigError("statistics.repeats must be >= 1")
        if self.statistics.n_perm < 1:
            raise ConfigError("statistics.n_perm must be >= 1")
        if self.filters.exclude_particles and not self.filters.particle_lemmas:
            raise ConfigError("filters.exclude_particles is on but particle_lemmas is empty")
        if self.regions is None and self.region_fallback == "error":
            raise ConfigError("paths.regions is required when regions.fallback is 'error'")
        for name in ("treebank", "regions", "reading_times", "freq_table", "lm_surprisal"):
            path = getattr(self, name)
            if path is None:
                continue
            if not Path(path).is_file():
                raise ConfigError(f"paths.{name} does not exist: {path}")


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return value


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a YAML mapping")

    paths = _section(data, "paths")
    required = ("treebank", "reading_times", "freq_table", "lm_surprisal")
    missing = [k for k in required if k not in paths]
    if missing:
        raise ConfigError(f"missing paths in config: {missing}")
    base_dir = path.parent

    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base_dir / p

    language_mode = data.get("language_mode", "head-final")
    policy_section = _section(data, "arc_policy")
    adjuncts = policy_section.get("adjunct_deprels")
    policy = ArcPolicy(
        exclude_right_adjuncts=bool(
            policy_section.get("exclude_right_adjuncts", language_mode == "head-medial")
        ),
        adjunct_deprels=frozenset(adjuncts) if adjuncts else DEFAULT_ADJUNCT_DEPRELS,
        count_root_arc=bool(policy_section.get("count_root_arc", False)),
        count_punct=bool(policy_section.get("count_punct", False)),
    )

    filters_section = _section(data, "filters")
    lemmas = filters_section.get("particle_lemmas")
    content_pos = filters_section.get("content_pos")
    filters = FilterConfig(
        exclude_particles=bool(filters_section.get("exclude_particles", False)),
        particle_lemmas=frozenset(lemmas) if lemmas is not None else DEFAULT_PARTICLE_LEMMAS,
        content_words=bool(filters_section.get("content_words", False)),
        content_pos=tuple(content_pos) if content_pos is not None else DEFAULT_CONTENT_POS,
    )

    smoothing = _section(data, "smoothing")
    aggregation = _section(data, "aggregation")
    regions_section = _section(data, "regions")
    trim = _section(data, "rt_trim")
    stats_section = _section(data, "statistics")
    stats = StatisticsConfig(
        k=int(stats_section.get("k", 10)),
        repeats=int(stats_section.get("repeats", 50)),
        n_perm=int(stats_section.get("n_perm", 10_000)),
        seed=None if stats_section.get("seed") is None else int(stats_section["seed"]),
        alpha=float(stats_section.get("alpha", 0.05)),
        min_rows=int(stats_section.get("min_rows", 1000)),
        group_by_document=bool(stats_section.get("group_by_document", False)),
    )

    config = PipelineConfig(
        treebank=resolve(paths["treebank"]),
        regions=resolve(paths["regions"]) if paths.get("regions") is not None else None,
        reading_times=resolve(paths["reading_times"]),
        freq_table=resolve(paths["freq_table"]),
        lm_surprisal=resolve(paths["lm_surprisal"]),
        language_mode=language_mode,
        arc_policy=policy,
        filters=filters,
        smoothing_alpha=float(smoothing.get("alpha", 1.0)),
        smoothing_vocab_size=(
            None if smoothing.get("vocab_size") is None else int(smoothing["vocab_size"])
        ),
        freq_key=str(smoothing.get("freq_key", "lemma")),
        aggregation_mode=str(aggregation.get("mode", "mean")),
        region_fallback=str(
            regions_section.get(
                "fallback", "token" if language_mode == "head-medial" else "error"
            )
        ),
        strict_sent_ids=bool(regions_section.get("strict_sent_ids", False)),
        invalid_trees=str(data.get("invalid_trees", "drop")),
        rt_trim_min_ms=None if trim.get("min_ms") is None else float(trim["min_ms"]),
        rt_trim_max_ms=None if trim.get("max_ms") is None else float(trim["max_ms"]),
        statistics=stats,
        raw=data,
    )
    config.validate()
    return config
