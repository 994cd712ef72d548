"""Analyzability exclusions, control predictors, and feature-row assembly.

A region is analyzable unless it is one of the first two regions of its
sentence (spillover from the previous sentence) or the final region
(wrap-up effects). Spillover lags are taken for the length and surprisal
controls only; position and maintenance metrics carry no lags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from memcost.corpus import AlignedRow, Corpus, Region, Sentence
from memcost.errors import ConfigError, FeatureBuildError
from memcost.metrics import MetricProfile

#: Lemmas whose presence marks a sentence as containing negation or a
#: question particle (config-overridable; the inventory is not canonical).
DEFAULT_PARTICLE_LEMMAS = frozenset({"ない", "ぬ", "ず", "か"})

#: Content-word tags/prefixes for the head-medial content-word filter.
DEFAULT_CONTENT_POS = ("CD", "JJ", "NN", "NP", "RB", "VB")


@dataclass
class FreqTable:
    """Lemma (or surface form) frequency counts for unigram surprisal."""

    counts: dict[str, int]
    key: str = "lemma"  # or "form"

    def __post_init__(self):
        if self.key not in ("lemma", "form"):
            raise ConfigError(f"frequency table key must be 'lemma' or 'form', got {self.key!r}")
        bad = {k: c for k, c in self.counts.items() if c <= 0}
        if bad:
            raise ConfigError(f"frequency table has non-positive counts: {sorted(bad)[:5]}")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def vocab_size(self) -> int:
        return len(self.counts)


def read_freq_table(path, key: str = "lemma") -> FreqTable:
    counts: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["lemma", "count"]:
            raise FeatureBuildError(f"{path}: expected header ['lemma', 'count'], got {header}")
        for line_number, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise FeatureBuildError(f"{path} line {line_number}: expected 2 columns")
            counts[cols[0]] = counts.get(cols[0], 0) + int(cols[1])
    return FreqTable(counts=counts, key=key)


def read_lm_surprisal(path) -> dict[tuple[str, int, int], float]:
    """Per-token language-model surprisal (bits), keyed by
    (doc_id, sent_index, token_index)."""
    values: dict[tuple[str, int, int], float] = {}
    expected = ["doc_id", "sent_index", "token_index", "surprisal_bits"]
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != expected:
            raise FeatureBuildError(f"{path}: expected header {expected}, got {header}")
        for line_number, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise FeatureBuildError(f"{path} line {line_number}: expected 4 columns")
            value = float(cols[3])
            if value < 0:
                raise FeatureBuildError(
                    f"{path} line {line_number}: negative surprisal {value}"
                )
            values[(cols[0], int(cols[1]), int(cols[2]))] = value
    return values


@dataclass
class FeatureRow:
    """One analyzable region's dependent variable plus predictors."""

    doc_id: str
    sent_index: int
    region_index: int
    participant_id: str | None
    rt: float
    sent_position: int
    region_position: int
    n_chars: int
    n_chars_lag1: int
    n_chars_lag2: int
    unigram_surprisal: float
    unigram_lag1: float
    unigram_lag2: float
    lm_surprisal: float
    lm_lag1: float
    lm_lag2: float
    n_heads: int
    n_deps: int
    n_additional: int
    n_completions: int


FEATURE_COLUMNS = [f.name for f in fields(FeatureRow)]

#: The control predictors of the baseline regression model.
CONTROL_PREDICTORS = [
    "sent_position",
    "region_position",
    "n_chars",
    "n_chars_lag1",
    "n_chars_lag2",
    "unigram_surprisal",
    "unigram_lag1",
    "unigram_lag2",
    "lm_surprisal",
    "lm_lag1",
    "lm_lag2",
]

#: Maintenance-cost predictors under study.
TARGET_PREDICTORS = ["n_heads", "n_deps", "n_additional", "n_completions"]


def analyzable_regions(n_regions: int) -> list[bool]:
    """Mask over region indices 1..n: False for the first two and the final
    region of the sentence, True otherwise."""
    if n_regions < 1:
        raise FeatureBuildError("sentence has no regions")
    return [not (i <= 2 or i == n_regions) for i in range(1, n_regions + 1)]


def unigram_surprisal(
    region: Region,
    sentence: Sentence,
    table: FreqTable,
    alpha: float = 1.0,
    vocab_size: int | None = None,
) -> float:
    """Sum of per-token add-alpha unigram surprisal over the region, in bits."""
    if not table.counts:
        raise FeatureBuildError("frequency table is empty")
    total = table.total
    v = table.vocab_size if vocab_size is None else vocab_size
    value = 0.0
    for index in region.span:
        token = sentence.tokens[index - 1]
        key = token.lemma if table.key == "lemma" else token.form
        count = table.counts.get(key, 0)
        value += -math.log2((count + alpha) / (total + alpha * v))
    return value


def filter_particles(
    sentence_keys: list[tuple[str, int]],
    corpus: Corpus,
    excluded_lemmas: frozenset[str] | set[str],
) -> list[tuple[str, int]]:
    """Drop every sentence containing a token whose lemma is excluded."""
    if not excluded_lemmas:
        raise ConfigError("particle filter enabled but the excluded lemma set is empty")
    kept = []
    for key in sentence_keys:
        sentence = corpus.sentence(*key)
        if sentence is None:
            continue
        if any(t.lemma in excluded_lemmas for t in sentence.tokens):
            continue
        kept.append(key)
    return kept


def filter_content_words(
    rows: list[FeatureRow],
    corpus: Corpus,
    segmentation: dict[tuple[str, int], list[Region]],
    pos_prefixes: tuple[str, ...] = DEFAULT_CONTENT_POS,
) -> list[FeatureRow]:
    """Keep rows whose (single-token) region is a content word by xpos
    prefix. Only meaningful for word-by-word presentation."""
    kept = []
    for row in rows:
        sentence = corpus.sentence(row.doc_id, row.sent_index)
        region = segmentation[(row.doc_id, row.sent_index)][row.region_index - 1]
        if region.token_start != region.token_end:
            raise FeatureBuildError(
                "content-word filter requires single-token regions "
                f"(doc {row.doc_id!r} sentence {row.sent_index} region {row.region_index})"
            )
        xpos = sentence.tokens[region.token_start - 1].xpos
        if any(xpos == p or xpos.startswith(p) for p in pos_prefixes):
            kept.append(row)
    return kept


class _RegionValues:
    """Raw per-region control values used for the current row and its lags."""

    __slots__ = ("n_chars", "unigram", "lm")

    def __init__(self, n_chars: int, unigram: float, lm: float):
        self.n_chars = n_chars
        self.unigram = unigram
        self.lm = lm


def build_feature_matrix(
    aligned: list[AlignedRow],
    profiles: dict[tuple[str, int, int], MetricProfile],
    corpus: Corpus,
    segmentation: dict[tuple[str, int], list[Region]],
    freq_table: FreqTable,
    lm_surprisal: dict[tuple[str, int, int], float],
    alpha: float = 1.0,
    vocab_size: int | None = None,
    particle_lemmas: frozenset[str] | None = None,
    content_pos: tuple[str, ...] | None = None,
) -> list[FeatureRow]:
    """Assemble one FeatureRow per analyzable region (one per region and
    participant in raw mode).

    Lag-1/lag-2 fields come from the within-sentence predecessor regions;
    the first-two-regions exclusion guarantees they exist. Optional filters:
    ``particle_lemmas`` drops whole sentences containing one of the lemmas,
    ``content_pos`` keeps only single-token content-word regions.
    """
    keep_sentence: set[tuple[str, int]] | None = None
    if particle_lemmas is not None:
        all_keys = [(d, s) for d, s, _ in corpus.iter_sentences()]
        keep_sentence = set(filter_particles(all_keys, corpus, particle_lemmas))

    values_cache: dict[tuple[str, int], list[_RegionValues]] = {}
    missing_lm: list[tuple[str, int, int]] = []

    def region_values(doc_id: str, sent_index: int) -> list[_RegionValues]:
        key = (doc_id, sent_index)
        if key in values_cache:
            return values_cache[key]
        sentence = corpus.sentence(doc_id, sent_index)
        out = []
        for region in segmentation[key]:
            n_chars = sum(sentence.tokens[i - 1].char_count for i in region.span)
            uni = unigram_surprisal(region, sentence, freq_table, alpha, vocab_size)
            lm = 0.0
            for i in region.span:
                token_key = (doc_id, sent_index, i)
                if token_key not in lm_surprisal:
                    missing_lm.append(token_key)
                else:
                    lm += lm_surprisal[token_key]
            out.append(_RegionValues(n_chars, uni, lm))
        values_cache[key] = out
        return out

    rows: list[FeatureRow] = []
    for aligned_row in aligned:
        region = aligned_row.region
        sent_key = (region.doc_id, region.sent_index)
        if keep_sentence is not None and sent_key not in keep_sentence:
            continue
        n_regions = len(segmentation[sent_key])
        if not analyzable_regions(n_regions)[region.region_index - 1]:
            continue
        profile = profiles.get(region.key)
        if profile is None:
            raise FeatureBuildError(f"no metric profile for region {region.key}")
        values = region_values(region.doc_id, region.sent_index)
        here = values[region.region_index - 1]
        lag1 = values[region.region_index - 2]
        lag2 = values[region.region_index - 3]
        rows.append(
            FeatureRow(
                doc_id=region.doc_id,
                sent_index=region.sent_index,
                region_index=region.region_index,
                participant_id=aligned_row.participant_id,
                rt=aligned_row.rt,
                sent_position=region.sent_index,
                region_position=region.region_index,
                n_chars=here.n_chars,
                n_chars_lag1=lag1.n_chars,
                n_chars_lag2=lag2.n_chars,
                unigram_surprisal=here.unigram,
                unigram_lag1=lag1.unigram,
                unigram_lag2=lag2.unigram,
                lm_surprisal=here.lm,
                lm_lag1=lag1.lm,
                lm_lag2=lag2.lm,
                n_heads=profile.predicted_heads,
                n_deps=profile.incomplete_deps,
                n_additional=profile.additional_deps,
                n_completions=profile.completions,
            )
        )
    if missing_lm:
        shown = ", ".join(f"{k[0]}/{k[1]}/tok{k[2]}" for k in sorted(set(missing_lm))[:10])
        more = "" if len(set(missing_lm)) <= 10 else f" (+{len(set(missing_lm)) - 10} more)"
        raise FeatureBuildError(f"missing LM surprisal for tokens: {shown}{more}")
    if content_pos is not None:
        rows = filter_content_words(rows, corpus, segmentation, content_pos)
    return rows


def rows_to_tsv(rows: list[FeatureRow]) -> str:
    """Feature matrix as TSV; surprisal columns are in bits (log base 2)."""
    lines = ["\t".join(FEATURE_COLUMNS)]
    for row in rows:
        record = []
        for name in FEATURE_COLUMNS:
            value = getattr(row, name)
            if value is None:
                record.append("NA")
            elif isinstance(value, float):
                record.append(repr(value))
            else:
                record.append(str(value))
        lines.append("\t".join(record))
    return "\n".join(lines) + "\n"


def rows_from_tsv(text: str) -> list[FeatureRow]:
    lines = [l for l in text.splitlines() if l]
    header = lines[0].split("\t")
    if header != FEATURE_COLUMNS:
        raise FeatureBuildError(f"feature matrix header mismatch: {header}")
    rows = []
    ints = {"sent_index", "region_index", "sent_position", "region_position",
            "n_chars", "n_chars_lag1", "n_chars_lag2",
            "n_heads", "n_deps", "n_additional", "n_completions"}
    for line in lines[1:]:
        record: dict = {}
        for name, cell in zip(FEATURE_COLUMNS, line.split("\t")):
            if name == "doc_id":
                record[name] = cell
            elif name == "participant_id":
                record[name] = None if cell == "NA" else cell
            elif name in ints:
                record[name] = int(cell)
            else:
                record[name] = float(cell)
        rows.append(FeatureRow(**record))
    return rows
