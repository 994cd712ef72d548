"""CoNLL-U parsing, tree validation, region segmentation, RT alignment.

Document boundaries come from ``# newdoc`` comment lines (the whole file is
one document when absent). Sentence identity is positional: the n-th
sentence of a document has ``sent_index = n``, and region / reading-time
files join on ``(doc_id, sent_index, region_index)``. ``# sent_id``
comments are only consulted in strict mode, where they must spell
``<doc_id>-<sent_index>``.
"""

from __future__ import annotations

import logging
import re
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from memcost.errors import AlignmentError, ParseError, SegmentationError, TreeValidationError

logger = logging.getLogger(__name__)

#: Number of columns in a CoNLL-U token line.
CONLLU_COLUMNS = 10

_RANGE_ID = re.compile(r"^\d+-\d+$")
_EMPTY_ID = re.compile(r"^\d+\.\d+$")
_NEWDOC = re.compile(r"^#\s*newdoc(\s+id\s*=\s*(?P<id>.+))?\s*$")
_SENT_ID = re.compile(r"^#\s*sent_id\s*=\s*(?P<id>.+?)\s*$")


@dataclass
class Token:
    """One syntactic word of a dependency tree (1-based index, head 0 = root)."""

    index: int
    form: str
    lemma: str
    upos: str
    xpos: str
    head: int
    deprel: str
    feats: str = "_"
    deps: str = "_"
    misc: str = "_"

    @property
    def char_count(self) -> int:
        # Unicode scalar values of the surface form.
        return len(self.form)


@dataclass
class Sentence:
    tokens: list[Token]
    comments: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def sent_id_comment(self) -> str | None:
        for comment in self.comments:
            m = _SENT_ID.match(comment)
            if m:
                return m.group("id")
        return None


@dataclass
class Document:
    doc_id: str
    sentences: list[Sentence] = field(default_factory=list)


@dataclass(frozen=True)
class Region:
    """Contiguous token span carrying one reading-time value (e.g. a bunsetsu)."""

    doc_id: str
    sent_index: int
    region_index: int
    token_start: int
    token_end: int

    def __post_init__(self):
        if self.token_start > self.token_end:
            raise SegmentationError(
                f"region {self.key} has start {self.token_start} > end {self.token_end}"
            )

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.doc_id, self.sent_index, self.region_index)

    @property
    def span(self) -> range:
        return range(self.token_start, self.token_end + 1)


@dataclass(frozen=True)
class RtObservation:
    doc_id: str
    sent_index: int
    region_index: int
    participant_id: str
    rt: float

    @property
    def region_key(self) -> tuple[str, int, int]:
        return (self.doc_id, self.sent_index, self.region_index)


@dataclass
class AlignedRow:
    """One dependent-variable value attached to a region.

    ``participant_id`` is None in mean-aggregation mode.
    """

    region: Region
    rt: float
    participant_id: str | None = None


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations


def _parse_token(cols: list[str], line_number: int) -> Token:
    try:
        index = int(cols[0])
    except ValueError:
        raise ParseError(f"non-integer token id {cols[0]!r}", line_number)
    try:
        head = int(cols[6])
    except ValueError:
        raise ParseError(f"non-integer head {cols[6]!r}", line_number)
    return Token(
        index=index,
        form=cols[1],
        lemma=cols[2],
        upos=cols[3],
        xpos=cols[4],
        head=head,
        deprel=cols[7],
        feats=cols[5],
        deps=cols[8],
        misc=cols[9],
    )


def parse_conllu(source: str | Iterable[str]) -> list[Document]:
    """Parse CoNLL-U text into documents of sentences of Tokens.

    Multiword-token range lines (``3-4``) and empty nodes (``3.1``) are
    skipped; syntactic words are the units of all downstream computation.
    Raises ParseError (with line number) on malformed input.
    """
    if isinstance(source, str):
        lines: Iterable[str] = source.splitlines()
    else:
        lines = source

    documents: list[Document] = []
    current_doc: Document | None = None
    tokens: list[Token] = []
    comments: list[str] = []

    def ensure_doc() -> Document:
        nonlocal current_doc
        if current_doc is None:
            current_doc = Document(doc_id=f"doc{len(documents) + 1}")
            documents.append(current_doc)
        return current_doc

    def flush_sentence(line_number: int):
        nonlocal tokens, comments
        if not tokens and not comments:
            return
        if not tokens:
            # Comment-only block (e.g. trailing newdoc already consumed).
            comments = []
            return
        expected = list(range(1, len(tokens) + 1))
        if [t.index for t in tokens] != expected:
            raise ParseError(
                f"token ids not consecutive from 1 (got {[t.index for t in tokens]})",
                line_number,
            )
        ensure_doc().sentences.append(Sentence(tokens=tokens, comments=comments))
        tokens = []
        comments = []

    line_number = 0
    for line_number, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush_sentence(line_number)
            continue
        if line.startswith("#"):
            m = _NEWDOC.match(line)
            if m:
                flush_sentence(line_number)
                doc_id = m.group("id")
                current_doc = Document(
                    doc_id=doc_id.strip() if doc_id else f"doc{len(documents) + 1}"
                )
                documents.append(current_doc)
            else:
                comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != CONLLU_COLUMNS:
            raise ParseError(
                f"expected {CONLLU_COLUMNS} tab-separated columns, got {len(cols)}",
                line_number,
            )
        if _RANGE_ID.match(cols[0]) or _EMPTY_ID.match(cols[0]):
            continue
        tokens.append(_parse_token(cols, line_number))
    flush_sentence(line_number + 1)
    return documents


def parse_conllu_file(path) -> list[Document]:
    with open(path, encoding="utf-8") as fh:
        return parse_conllu(fh)


def sentence_to_conllu(sentence: Sentence, include_comments: bool = True) -> str:
    lines = []
    if include_comments:
        lines.extend(sentence.comments)
    for t in sentence.tokens:
        lines.append(
            "\t".join(
                [
                    str(t.index),
                    t.form,
                    t.lemma,
                    t.upos,
                    t.xpos,
                    t.feats,
                    str(t.head),
                    t.deprel,
                    t.deps,
                    t.misc,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_conllu(documents: list[Document]) -> str:
    """Serialize documents back to CoNLL-U (inverse of parse_conllu for
    inputs without range lines / empty nodes)."""
    blocks = []
    for doc in documents:
        blocks.append(f"# newdoc id = {doc.doc_id}\n")
        for sentence in doc.sentences:
            if sentence is not None:
                blocks.append(sentence_to_conllu(sentence) + "\n")
    return "".join(blocks)


def validate_tree(sentence: Sentence | list[Token]) -> ValidationReport:
    """Check single-rootedness, head ranges, and acyclicity.

    Returns a report; the caller decides whether invalid sentences are
    dropped or abort the run.
    """
    tokens = sentence.tokens if isinstance(sentence, Sentence) else sentence
    n = len(tokens)
    report = ValidationReport()
    roots = [t.index for t in tokens if t.head == 0]
    if len(roots) == 0:
        report.violations.append("no root token (head = 0)")
    elif len(roots) > 1:
        report.violations.append(f"multiple roots at positions {roots}")
    walkable = True
    for t in tokens:
        if t.head < 0 or t.head > n:
            report.violations.append(f"token {t.index} head {t.head} out of range 0..{n}")
            walkable = False
        elif t.head == t.index:
            report.violations.append(f"token {t.index} is its own head")
            walkable = False
    if not walkable:
        return report
    # Heads are in range and there are no self-loops: walk rootward from
    # every token (cycles are reportable even when the root count is wrong).
    heads = {t.index: t.head for t in tokens}
    for t in tokens:
        seen = set()
        node = t.index
        while node != 0:
            if node in seen:
                cycle = sorted(seen)
                report.violations.append(f"cycle through tokens {cycle}")
                return report
            seen.add(node)
            node = heads[node]
    return report


def drop_invalid_sentences(
    documents: list[Document], policy: str = "drop"
) -> tuple[list[Document], list[tuple[str, int, ValidationReport]]]:
    """Keep only sentences whose trees validate.

    policy 'drop' removes offenders with a logged warning (never silently);
    policy 'abort' raises TreeValidationError on the first offender.
    Sentence indices of the survivors are their positions in the ORIGINAL
    document, so join keys in external files stay valid.
    """
    if policy not in ("drop", "abort"):
        raise ValueError(f"unknown invalid-tree policy {policy!r}")
    dropped: list[tuple[str, int, ValidationReport]] = []
    kept_docs: list[Document] = []
    for doc in documents:
        kept = Document(doc_id=doc.doc_id)
        for sent_index, sentence in enumerate(doc.sentences, start=1):
            report = validate_tree(sentence)
            if report.valid:
                kept.sentences.append(sentence)
            else:
                message = (
                    f"invalid tree in doc {doc.doc_id!r} sentence {sent_index}: "
                    + "; ".join(report.violations)
                )
                if policy == "abort":
                    raise TreeValidationError(message)
                logger.warning("dropping %s", message)
                dropped.append((doc.doc_id, sent_index, report))
                kept.sentences.append(None)  # placeholder keeps positions stable
        kept_docs.append(kept)
    return kept_docs, dropped


class Corpus:
    """Documents indexed by (doc_id, sent_index); dropped sentences stay as
    None placeholders so positional join keys keep working."""

    def __init__(self, documents: list[Document]):
        self.documents = documents
        self._by_key: dict[tuple[str, int], Sentence | None] = {}
        for doc in documents:
            for sent_index, sentence in enumerate(doc.sentences, start=1):
                key = (doc.doc_id, sent_index)
                if key in self._by_key:
                    raise ParseError(f"duplicate document id {doc.doc_id!r}")
                self._by_key[key] = sentence

    def sentence(self, doc_id: str, sent_index: int) -> Sentence | None:
        return self._by_key.get((doc_id, sent_index))

    def has_key(self, doc_id: str, sent_index: int) -> bool:
        return (doc_id, sent_index) in self._by_key

    def iter_sentences(self) -> Iterator[tuple[str, int, Sentence]]:
        for doc in self.documents:
            for sent_index, sentence in enumerate(doc.sentences, start=1):
                if sentence is not None:
                    yield doc.doc_id, sent_index, sentence

    def check_sent_ids(self):
        """Strict mode: any ``# sent_id`` comment must be <doc_id>-<sent_index>."""
        for doc_id, sent_index, sentence in self.iter_sentences():
            sid = sentence.sent_id_comment
            if sid is not None and sid != f"{doc_id}-{sent_index}":
                raise ParseError(
                    f"sent_id comment {sid!r} does not match positional identity "
                    f"{doc_id}-{sent_index}"
                )


@dataclass(frozen=True)
class RegionEntry:
    doc_id: str
    sent_index: int
    region_index: int
    token_start: int
    token_end: int


REGION_FILE_HEADER = ["doc_id", "sent_index", "region_index", "token_start", "token_end"]
RT_FILE_HEADER = ["doc_id", "sent_index", "region_index", "participant_id", "rt_ms"]


def _read_tsv(path, expected_header: list[str]) -> Iterator[list[str]]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != expected_header:
            raise ParseError(
                f"{path}: expected header {expected_header}, got {header}", line_number=1
            )
        for line_number, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != len(expected_header):
                raise ParseError(
                    f"{path}: expected {len(expected_header)} columns, got {len(cols)}",
                    line_number,
                )
            yield cols


def read_region_file(path) -> list[RegionEntry]:
    entries = []
    for cols in _read_tsv(path, REGION_FILE_HEADER):
        entries.append(
            RegionEntry(
                doc_id=cols[0],
                sent_index=int(cols[1]),
                region_index=int(cols[2]),
                token_start=int(cols[3]),
                token_end=int(cols[4]),
            )
        )
    return entries


def read_reading_times(path) -> list[RtObservation]:
    observations = []
    for cols in _read_tsv(path, RT_FILE_HEADER):
        rt = float(cols[4])
        if rt <= 0:
            raise ParseError(f"{path}: non-positive reading time {rt} for {cols[:3]}")
        observations.append(
            RtObservation(
                doc_id=cols[0],
                sent_index=int(cols[1]),
                region_index=int(cols[2]),
                participant_id=cols[3],
                rt=rt,
            )
        )
    return observations


def segment_regions(
    sentence: Sentence,
    doc_id: str,
    sent_index: int,
    entries: list[RegionEntry],
    fallback: str = "token",
) -> list[Region]:
    """Attach a region segmentation to one sentence.

    Entries must tile the sentence: contiguous, non-overlapping, covering
    every token. With no entries and fallback 'token', each token becomes
    its own region (word-by-word presentation).
    """
    n = len(sentence)
    where = f"doc {doc_id!r} sentence {sent_index}"
    if not entries:
        if fallback == "token":
            return [
                Region(doc_id, sent_index, i, i, i) for i in range(1, n + 1)
            ]
        raise SegmentationError(f"no region entries for {where}")
    ordered = sorted(entries, key=lambda e: e.region_index)
    if [e.region_index for e in ordered] != list(range(1, len(ordered) + 1)):
        raise SegmentationError(
            f"{where}: region indices not consecutive from 1: "
            f"{[e.region_index for e in ordered]}"
        )
    regions = []
    cursor = 1
    for entry in ordered:
        if entry.token_start != cursor:
            problem = "gap" if entry.token_start > cursor else "overlap"
            raise SegmentationError(
                f"{where}: {problem} at token {min(cursor, entry.token_start)} "
                f"(region {entry.region_index} starts at {entry.token_start}, "
                f"expected {cursor})"
            )
        regions.append(
            Region(doc_id, sent_index, entry.region_index, entry.token_start, entry.token_end)
        )
        cursor = entry.token_end + 1
    if cursor != n + 1:
        raise SegmentationError(
            f"{where}: regions cover tokens 1..{cursor - 1} but sentence has {n} tokens"
        )
    return regions


def segment_corpus(
    corpus: Corpus, entries: list[RegionEntry], fallback: str = "token"
) -> dict[tuple[str, int], list[Region]]:
    """Segment every sentence of the corpus, keyed by (doc_id, sent_index)."""
    grouped: dict[tuple[str, int], list[RegionEntry]] = {}
    for entry in entries:
        key = (entry.doc_id, entry.sent_index)
        if not corpus.has_key(*key):
            raise SegmentationError(
                f"region entry references unknown sentence {key[0]!r}/{key[1]}"
            )
        grouped.setdefault(key, []).append(entry)
    segmentation = {}
    for doc_id, sent_index, sentence in corpus.iter_sentences():
        key = (doc_id, sent_index)
        segmentation[key] = segment_regions(
            sentence, doc_id, sent_index, grouped.get(key, []), fallback=fallback
        )
    return segmentation


def trim_observations(
    observations: list[RtObservation],
    min_ms: float | None = None,
    max_ms: float | None = None,
) -> list[RtObservation]:
    """Optional trial-level RT trimming (off by default; absolute bounds)."""
    if min_ms is None and max_ms is None:
        return observations
    kept = [
        o
        for o in observations
        if (min_ms is None or o.rt >= min_ms) and (max_ms is None or o.rt <= max_ms)
    ]
    n_dropped = len(observations) - len(kept)
    if n_dropped:
        logger.info("RT trimming dropped %d of %d observations", n_dropped, len(observations))
    return kept


def align_reading_times(
    segmentation: dict[tuple[str, int], list[Region]],
    observations: list[RtObservation],
    aggregation: str = "mean",
) -> list[AlignedRow]:
    """Join RT observations onto regions.

    'mean' yields one row per region (mean RT over participants); 'raw'
    yields one row per (region, participant). Output is ordered by the
    segmentation's document/sentence order, then region, then participant.
    """
    if aggregation not in ("mean", "raw"):
        raise ValueError(f"unknown aggregation mode {aggregation!r}")
    by_region: dict[tuple[str, int, int], Region] = {}
    order: dict[tuple[str, int, int], int] = {}
    for regions in segmentation.values():
        for region in regions:
            by_region[region.key] = region
            order[region.key] = len(order)
    bad_keys = sorted({o.region_key for o in observations if o.region_key not in by_region})
    if bad_keys:
        shown = ", ".join(f"{k[0]}/{k[1]}/{k[2]}" for k in bad_keys[:10])
        more = "" if len(bad_keys) <= 10 else f" (+{len(bad_keys) - 10} more)"
        raise AlignmentError(f"observations reference unknown regions: {shown}{more}")
    rows: list[AlignedRow] = []
    if aggregation == "mean":
        grouped: dict[tuple[str, int, int], list[float]] = {}
        for o in observations:
            grouped.setdefault(o.region_key, []).append(o.rt)
        for key in sorted(grouped, key=order.__getitem__):
            rows.append(AlignedRow(region=by_region[key], rt=statistics.fmean(grouped[key])))
    else:
        for o in sorted(observations, key=lambda o: (order[o.region_key], o.participant_id)):
            rows.append(
                AlignedRow(region=by_region[o.region_key], rt=o.rt, participant_id=o.participant_id)
            )
    return rows
