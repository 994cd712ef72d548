"""Incremental maintenance metrics over dependency trees.

For a prefix of the first ``t`` tokens of a sentence, an arc is *incomplete*
when exactly one of its endpoints has been seen, a *predicted head* is a
not-yet-seen token that is an endpoint of such an arc, and a *completion*
happens at the token where an arc's later endpoint is consumed. Region
values aggregate token-level values: minima for predicted heads and
incomplete dependencies (so dependencies that begin or end inside the
region never count), maxima for completions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from memcost.corpus import Region, Sentence, Token
from memcost.errors import ContractViolation

#: Relation labels treated as adjunction for the right-adjunct exclusion.
DEFAULT_ADJUNCT_DEPRELS = frozenset(
    {
        "appos",
        "acl",
        "acl:relcl",
        "advcl",
        "advmod",
        "amod",
        "cc",
        "compound",
        "compound:prt",
        "conj",
        "dep",
        "det:predet",
        "discourse",
        "nmod",
        "nmod:npmod",
        "nmod:poss",
        "nmod:tmod",
        "nummod",
        "parataxis",
        "punct",
    }
)


@dataclass(frozen=True)
class ArcPolicy:
    """Which dependency arcs participate in maintenance counting.

    The artificial root arc and punctuation arcs are excluded by default;
    with ``exclude_right_adjuncts`` an arc is additionally dropped when its
    dependent sits to the RIGHT of its head and carries an adjunction
    relation (head-medial languages; left-attached adjuncts always count).
    """

    exclude_right_adjuncts: bool = False
    adjunct_deprels: frozenset[str] = DEFAULT_ADJUNCT_DEPRELS
    count_root_arc: bool = False
    count_punct: bool = False

    def __post_init__(self):
        if self.exclude_right_adjuncts and not self.adjunct_deprels:
            raise ContractViolation(
                "exclude_right_adjuncts requires a nonempty adjunct_deprels set"
            )
        object.__setattr__(self, "adjunct_deprels", frozenset(self.adjunct_deprels))


#: Japanese-style default (head-final): keep every non-root, non-punct arc.
HEAD_FINAL_POLICY = ArcPolicy(exclude_right_adjuncts=False)
#: English-style default (head-medial): additionally drop right adjuncts.
HEAD_MEDIAL_POLICY = ArcPolicy(exclude_right_adjuncts=True)


@dataclass(frozen=True)
class Arc:
    """One countable dependency arc between 1-based token positions."""

    dep: int
    head: int
    deprel: str

    @property
    def lo(self) -> int:
        return min(self.dep, self.head)

    @property
    def hi(self) -> int:
        return max(self.dep, self.head)


@dataclass
class MetricProfile:
    """Per-region maintenance metrics."""

    region: Region
    predicted_heads: int
    incomplete_deps: int
    completions: int
    additional_deps: int = field(init=False)

    def __post_init__(self):
        self.additional_deps = self.incomplete_deps - self.predicted_heads
        if self.additional_deps < 0:
            raise AssertionError(
                f"predicted_heads {self.predicted_heads} exceeds "
                f"incomplete_deps {self.incomplete_deps} in region {self.region.key}"
            )


def countable_arcs(sentence: Sentence | list[Token], policy: ArcPolicy) -> set[Arc]:
    """The arc set a policy admits: one arc per non-root token, minus
    root/punct arcs and (optionally) right-positioned adjunct dependents."""
    tokens = sentence.tokens if isinstance(sentence, Sentence) else sentence
    arcs: set[Arc] = set()
    for t in tokens:
        if t.head == 0:
            if policy.count_root_arc:
                # Conventionally the root arc attaches to position 0.
                arcs.add(Arc(dep=t.index, head=0, deprel=t.deprel))
            continue
        if not policy.count_punct and t.deprel == "punct":
            continue
        if (
            policy.exclude_right_adjuncts
            and t.index > t.head
            and t.deprel in policy.adjunct_deprels
        ):
            continue
        arcs.add(Arc(dep=t.index, head=t.head, deprel=t.deprel))
    return arcs


def prefix_counts(
    sentence: Sentence | list[Token], policy: ArcPolicy, t: int
) -> tuple[int, int, int]:
    """(predicted_heads, incomplete_deps, completions) after consuming token t.

    ``t = 0`` is the empty prefix. Raises ContractViolation for t outside
    0..len(sentence).
    """
    tokens = sentence.tokens if isinstance(sentence, Sentence) else sentence
    n = len(tokens)
    if not 0 <= t <= n:
        raise ContractViolation(f"prefix length {t} outside 0..{n}")
    incomplete = 0
    completions = 0
    unseen_endpoints: set[int] = set()
    for arc in countable_arcs(tokens, policy):
        if arc.lo <= t < arc.hi:
            incomplete += 1
            unseen_endpoints.add(arc.hi)
        elif arc.hi == t:
            completions += 1
    return len(unseen_endpoints), incomplete, completions


def prefix_profile(
    sentence: Sentence | list[Token], policy: ArcPolicy
) -> list[tuple[int, int, int]]:
    """Counts for every prefix t = 0..n in one left-to-right sweep.

    Arcs open when their first endpoint is consumed and close at their
    second; predicted heads are tracked as reference counts on the unseen
    endpoints of open arcs.
    """
    tokens = sentence.tokens if isinstance(sentence, Sentence) else sentence
    n = len(tokens)
    opens_at: list[list[Arc]] = [[] for _ in range(n + 1)]
    closes_at: list[int] = [0] * (n + 1)
    incomplete = 0
    pending: dict[int, int] = {}  # unseen endpoint -> number of open arcs on it
    for arc in countable_arcs(tokens, policy):
        if arc.lo == 0:
            # Root arc: the artificial root precedes the sentence, so the
            # arc is open from the empty prefix onward.
            incomplete += 1
            pending[arc.hi] = pending.get(arc.hi, 0) + 1
        else:
            opens_at[arc.lo].append(arc)
        closes_at[arc.hi] += 1

    profile = [(len(pending), incomplete, 0)]
    for t in range(1, n + 1):
        for arc in opens_at[t]:
            incomplete += 1
            pending[arc.hi] = pending.get(arc.hi, 0) + 1
        closed = pending.pop(t, 0)
        incomplete -= closed
        profile.append((len(pending), incomplete, closes_at[t]))
    return profile


def region_profile(
    sentence: Sentence | list[Token],
    regions: list[Region],
    policy: ArcPolicy,
) -> list[MetricProfile]:
    """Aggregate prefix counts to regions: min for heads/deps, max for
    completions; additional = min(deps) - min(heads)."""
    profile = prefix_profile(sentence, policy)
    out = []
    for region in regions:
        window = profile[region.token_start : region.token_end + 1]
        out.append(
            MetricProfile(
                region=region,
                predicted_heads=min(p for p, _, _ in window),
                incomplete_deps=min(i for _, i, _ in window),
                completions=max(c for _, _, c in window),
            )
        )
    return out


METRICS_HEADER = [
    "doc_id",
    "sent_index",
    "region_index",
    "n_heads",
    "n_deps",
    "n_additional",
    "n_completions",
]


def profiles_to_tsv(profiles: list[MetricProfile]) -> str:
    lines = ["\t".join(METRICS_HEADER)]
    for p in profiles:
        lines.append(
            "\t".join(
                [
                    p.region.doc_id,
                    str(p.region.sent_index),
                    str(p.region.region_index),
                    str(p.predicted_heads),
                    str(p.incomplete_deps),
                    str(p.additional_deps),
                    str(p.completions),
                ]
            )
        )
    return "\n".join(lines) + "\n"
