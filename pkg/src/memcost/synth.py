"""Deterministic synthetic corpus generator.

Produces a small head-final treebank with bunsetsu-style regions,
per-participant reading times driven by a known linear model, a lemma
frequency table, and per-token LM surprisal values. Used for the bundled
end-to-end fixture and as demo data:

    python -m memcost.synth --out-dir demo_data --seed 7
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from memcost.corpus import (
    Corpus,
    Document,
    RegionEntry,
    Sentence,
    Token,
    segment_corpus,
)
from memcost.features import FreqTable, unigram_surprisal
from memcost.metrics import HEAD_FINAL_POLICY, region_profile

_DEPRELS = ["nsubj", "obj", "iobj", "obl", "nmod", "advcl", "acl", "aux", "case", "mark"]

#: Planted generative coefficients for the synthetic reading times.
TRUE_COEFFICIENTS = {
    "n_chars": 1.5,
    "unigram_surprisal": 4.0,
    "lm_surprisal": 3.0,
    "n_heads": 9.0,
    "n_deps": 3.0,
    "n_completions": -6.0,
}
RT_INTERCEPT = 320.0
RT_NOISE_SD = 40.0


@dataclass
class SynthCorpus:
    documents: list[Document]
    region_entries: list[RegionEntry]
    rt_lines: list[str]
    freq_counts: dict[str, int]
    lm_lines: list[str]

    def conllu_text(self) -> str:
        blocks = []
        for doc in self.documents:
            blocks.append(f"# newdoc id = {doc.doc_id}\n")
            for sent_index, sentence in enumerate(doc.sentences, start=1):
                lines = [f"# sent_id = {doc.doc_id}-{sent_index}"]
                for t in sentence.tokens:
                    lines.append(
                        "\t".join(
                            [
                                str(t.index), t.form, t.lemma, t.upos, t.xpos,
                                "_", str(t.head), t.deprel, "_", "_",
                            ]
                        )
                    )
                blocks.append("\n".join(lines) + "\n\n")
        return "".join(blocks)

    def regions_tsv(self) -> str:
        lines = ["doc_id\tsent_index\tregion_index\ttoken_start\ttoken_end"]
        for e in self.region_entries:
            lines.append(
                f"{e.doc_id}\t{e.sent_index}\t{e.region_index}\t{e.token_start}\t{e.token_end}"
            )
        return "\n".join(lines) + "\n"

    def reading_times_tsv(self) -> str:
        return "\n".join(
            ["doc_id\tsent_index\tregion_index\tparticipant_id\trt_ms", *self.rt_lines]
        ) + "\n"

    def freq_tsv(self) -> str:
        lines = ["lemma\tcount"]
        for lemma in sorted(self.freq_counts):
            lines.append(f"{lemma}\t{self.freq_counts[lemma]}")
        return "\n".join(lines) + "\n"

    def lm_tsv(self) -> str:
        return "\n".join(
            ["doc_id\tsent_index\ttoken_index\tsurprisal_bits", *self.lm_lines]
        ) + "\n"

    def write(self, out_dir: Path) -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = {
            "treebank": out_dir / "corpus.conllu",
            "regions": out_dir / "regions.tsv",
            "reading_times": out_dir / "reading_times.tsv",
            "freq_table": out_dir / "freq.tsv",
            "lm_surprisal": out_dir / "lm_surprisal.tsv",
        }
        files["treebank"].write_text(self.conllu_text(), encoding="utf-8")
        files["regions"].write_text(self.regions_tsv(), encoding="utf-8")
        files["reading_times"].write_text(self.reading_times_tsv(), encoding="utf-8")
        files["freq_table"].write_text(self.freq_tsv(), encoding="utf-8")
        files["lm_surprisal"].write_text(self.lm_tsv(), encoding="utf-8")
        return files


def _head_final_sentence(rng: np.random.Generator, vocab: list[str], n_tokens: int) -> Sentence:
    tokens = []
    for i in range(1, n_tokens + 1):
        lemma = vocab[int(rng.zipf(1.6)) % len(vocab)]
        suffix = "ta" if rng.random() < 0.3 else ""
        if i == n_tokens:
            head, deprel, upos = 0, "root", "VERB"
        else:
            head = int(rng.integers(i + 1, n_tokens + 1))
            deprel = _DEPRELS[int(rng.integers(0, len(_DEPRELS)))]
            upos = "NOUN" if deprel in ("nsubj", "obj", "iobj", "obl", "nmod") else "ADP"
        tokens.append(
            Token(
                index=i,
                form=lemma + suffix,
                lemma=lemma,
                upos=upos,
                xpos="XJ",
                head=head,
                deprel=deprel,
            )
        )
    return Sentence(tokens=tokens)


def _random_regions(rng: np.random.Generator, doc_id: str, sent_index: int, n_tokens: int,
                    min_regions: int) -> list[RegionEntry]:
    # Random contiguous partition with at least min_regions spans.
    n_regions = int(rng.integers(min_regions, max(min_regions, n_tokens) + 1))
    n_regions = min(n_regions, n_tokens)
    cuts = sorted(rng.choice(np.arange(1, n_tokens), size=n_regions - 1, replace=False))
    bounds = [0, *cuts, n_tokens]
    return [
        RegionEntry(doc_id, sent_index, r + 1, bounds[r] + 1, bounds[r + 1])
        for r in range(n_regions)
    ]


def make_corpus(
    seed: int,
    n_docs: int = 5,
    sentences_per_doc: int = 20,
    n_participants: int = 6,
    min_tokens: int = 8,
    max_tokens: int = 16,
    min_regions: int = 5,
    particle_rate: float = 0.15,
) -> SynthCorpus:
    """Build a deterministic synthetic dataset with planted RT coefficients."""
    rng = np.random.default_rng(seed)
    vocab = [f"go{i:03d}" for i in range(120)]
    particle_lemmas = ["ない", "か"]

    documents: list[Document] = []
    region_entries: list[RegionEntry] = []
    freq_counts: dict[str, int] = {lemma: 1 + int(rng.integers(1, 400)) for lemma in vocab}
    for lemma in particle_lemmas:
        freq_counts[lemma] = 500
    lm_lines: list[str] = []
    lm_values: dict[tuple[str, int, int], float] = {}

    for d in range(1, n_docs + 1):
        doc = Document(doc_id=f"d{d:02d}")
        for sent_index in range(1, sentences_per_doc + 1):
            n_tokens = int(rng.integers(min_tokens, max_tokens + 1))
            sentence = _head_final_sentence(rng, vocab, n_tokens)
            if rng.random() < particle_rate:
                # Plant a negation/question particle lemma on a middle token.
                t = sentence.tokens[int(rng.integers(1, n_tokens - 1))]
                t.lemma = particle_lemmas[int(rng.integers(0, len(particle_lemmas)))]
            doc.sentences.append(sentence)
            region_entries.extend(
                _random_regions(rng, doc.doc_id, sent_index, n_tokens, min_regions)
            )
            for t in sentence.tokens:
                value = float(np.round(rng.gamma(4.0, 2.0), 4))
                lm_values[(doc.doc_id, sent_index, t.index)] = value
                lm_lines.append(f"{doc.doc_id}\t{sent_index}\t{t.index}\t{value}")
        documents.append(doc)

    corpus = Corpus(documents)
    segmentation = segment_corpus(corpus, region_entries, fallback="error")
    freq_table = FreqTable(counts=freq_counts)

    rt_lines: list[str] = []
    participants = [f"p{j:02d}" for j in range(1, n_participants + 1)]
    offsets = rng.normal(0.0, 25.0, size=n_participants)
    for doc in documents:
        for sent_index, sentence in enumerate(doc.sentences, start=1):
            regions = segmentation[(doc.doc_id, sent_index)]
            profiles = region_profile(sentence, regions, HEAD_FINAL_POLICY)
            for region, profile in zip(regions, profiles):
                n_chars = sum(sentence.tokens[i - 1].char_count for i in region.span)
                uni = unigram_surprisal(region, sentence, freq_table, alpha=1.0)
                lm = sum(lm_values[(doc.doc_id, sent_index, i)] for i in region.span)
                mean_rt = (
                    RT_INTERCEPT
                    + TRUE_COEFFICIENTS["n_chars"] * n_chars
                    + TRUE_COEFFICIENTS["unigram_surprisal"] * uni
                    + TRUE_COEFFICIENTS["lm_surprisal"] * lm
                    + TRUE_COEFFICIENTS["n_heads"] * profile.predicted_heads
                    + TRUE_COEFFICIENTS["n_deps"] * profile.incomplete_deps
                    + TRUE_COEFFICIENTS["n_completions"] * profile.completions
                )
                for j, participant in enumerate(participants):
                    rt = mean_rt + offsets[j] + rng.normal(0.0, RT_NOISE_SD)
                    rt = max(30.0, float(np.round(rt, 2)))
                    rt_lines.append(
                        f"{doc.doc_id}\t{sent_index}\t{region.region_index}\t{participant}\t{rt}"
                    )

    return SynthCorpus(
        documents=documents,
        region_entries=region_entries,
        rt_lines=rt_lines,
        freq_counts=freq_counts,
        lm_lines=lm_lines,
    )


def default_config_text(stats_seed: int) -> str:
    return f"""paths:
  treebank: corpus.conllu
  regions: regions.tsv
  reading_times: reading_times.tsv
  freq_table: freq.tsv
  lm_surprisal: lm_surprisal.tsv
language_mode: head-final
arc_policy:
  exclude_right_adjuncts: false
  count_root_arc: false
  count_punct: false
filters:
  exclude_particles: false
smoothing:
  alpha: 1.0
aggregation:
  mode: mean
regions:
  fallback: error
  strict_sent_ids: true
invalid_trees: drop
statistics:
  k: 10
  repeats: 10
  n_perm: 2000
  seed: {stats_seed}
  alpha: 0.05
  min_rows: 100
"""


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Write a synthetic demo dataset.")
    parser.add_argument("--out-dir", type=Path, required=True)
    parser.add_argument("--seed", type=int, required=True)
    parser.add_argument("--participants", type=int, default=6)
    parser.add_argument("--docs", type=int, default=5)
    parser.add_argument("--sentences-per-doc", type=int, default=20)
    args = parser.parse_args(argv)
    corpus = make_corpus(
        seed=args.seed,
        n_docs=args.docs,
        sentences_per_doc=args.sentences_per_doc,
        n_participants=args.participants,
    )
    files = corpus.write(args.out_dir)
    config_path = Path(args.out_dir) / "config.yaml"
    config_path.write_text(default_config_text(args.seed), encoding="utf-8")
    for name, path in {**files, "config": config_path}.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
