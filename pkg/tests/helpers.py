"""Shared test utilities: independent oracles and synthetic data generators.

The oracles here re-derive everything from first principles (naive loops
over the arc set, normal equations, exhaustive enumeration) so they stay
independent of the library code paths they check.
"""

from __future__ import annotations

import heapq
import itertools
from types import SimpleNamespace

import numpy as np

from memcost.corpus import Region, Token

ADJUNCT_POOL = ["advmod", "acl", "nmod", "conj", "amod", "appos"]
NON_ADJUNCT_POOL = ["nsubj", "obj", "iobj", "case", "aux", "obl", "xcomp"]


def make_sentence(heads, deprels=None, upos=None, lemmas=None, forms=None):
    n = len(heads)
    deprels = deprels or ["root" if h == 0 else "dep" for h in heads]
    upos = upos or ["NOUN"] * n
    lemmas = lemmas or [f"w{i}" for i in range(1, n + 1)]
    forms = forms or list(lemmas)
    return [
        Token(
            index=i + 1,
            form=forms[i],
            lemma=lemmas[i],
            upos=upos[i],
            xpos="X",
            head=heads[i],
            deprel=deprels[i],
        )
        for i in range(n)
    ]


def _prufer_edges(seq: list[int], n: int) -> list[tuple[int, int]]:
    degree = [1] * (n + 1)
    for x in seq:
        degree[x] += 1
    leaves = [i for i in range(1, n + 1) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, x))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((u, v))
    return edges


def random_tree_heads(rng: np.random.Generator, n: int) -> list[int]:
    """Heads of a uniformly random labeled tree rooted at a random node."""
    if n == 1:
        return [0]
    if n == 2:
        root = int(rng.integers(1, 3))
        return [0, 1] if root == 1 else [2, 0]
    seq = [int(x) for x in rng.integers(1, n + 1, size=n - 2)]
    adjacency: dict[int, list[int]] = {i: [] for i in range(1, n + 1)}
    for u, v in _prufer_edges(seq, n):
        adjacency[u].append(v)
        adjacency[v].append(u)
    root = int(rng.integers(1, n + 1))
    heads = [0] * (n + 1)
    stack = [root]
    seen = {root}
    while stack:
        node = stack.pop()
        for neighbor in adjacency[node]:
            if neighbor not in seen:
                seen.add(neighbor)
                heads[neighbor] = node
                stack.append(neighbor)
    return heads[1:]


def random_sentence(rng: np.random.Generator, n: int) -> list[Token]:
    heads = random_tree_heads(rng, n)
    deprels = []
    upos = []
    for h in heads:
        if h == 0:
            deprels.append("root")
            upos.append("VERB")
        elif rng.random() < 0.12:
            deprels.append("punct")
            upos.append("PUNCT")
        elif rng.random() < 0.5:
            deprels.append(ADJUNCT_POOL[int(rng.integers(len(ADJUNCT_POOL)))])
            upos.append("ADV")
        else:
            deprels.append(NON_ADJUNCT_POOL[int(rng.integers(len(NON_ADJUNCT_POOL)))])
            upos.append("NOUN")
    return make_sentence(heads, deprels, upos)


# --------------------------------------------------------------------------
# Brute-force metric oracle: naive per-prefix counting over the arc set,
# with the policy rules re-stated from scratch.
# --------------------------------------------------------------------------

def oracle_arcs(tokens, policy) -> list[tuple[int, int]]:
    arcs = []
    for t in tokens:
        if t.head == 0:
            if policy.count_root_arc:
                arcs.append((0, t.index))
            continue
        if t.deprel == "punct" and not policy.count_punct:
            continue
        if (
            policy.exclude_right_adjuncts
            and t.deprel in policy.adjunct_deprels
            and t.index > t.head
        ):
            continue
        arcs.append((min(t.index, t.head), max(t.index, t.head)))
    return arcs


def oracle_prefix(tokens, policy, t: int) -> tuple[int, int, int]:
    predicted: set[int] = set()
    incomplete = 0
    completions = 0
    for lo, hi in oracle_arcs(tokens, policy):
        if lo <= t < hi:
            incomplete += 1
            predicted.add(hi)
        if hi == t:
            completions += 1
    return len(predicted), incomplete, completions


def oracle_region_values(tokens, spans: list[tuple[int, int]], policy):
    """Per-region (min heads, min deps, max completions) from the per-prefix
    oracle."""
    out = []
    for a, b in spans:
        values = [oracle_prefix(tokens, policy, t) for t in range(a, b + 1)]
        out.append(
            (
                min(v[0] for v in values),
                min(v[1] for v in values),
                max(v[2] for v in values),
            )
        )
    return out


def spans_to_regions(spans, doc_id="d", sent_index=1):
    return [
        Region(doc_id, sent_index, i + 1, a, b) for i, (a, b) in enumerate(spans)
    ]


def random_partition(rng: np.random.Generator, n: int) -> list[tuple[int, int]]:
    cut_candidates = list(range(1, n))
    n_cuts = int(rng.integers(0, len(cut_candidates) + 1)) if cut_candidates else 0
    cuts = sorted(rng.choice(cut_candidates, size=n_cuts, replace=False)) if n_cuts else []
    bounds = [0, *[int(c) for c in cuts], n]
    return [(bounds[i] + 1, bounds[i + 1]) for i in range(len(bounds) - 1)]


# --------------------------------------------------------------------------
# Regression oracles.
# --------------------------------------------------------------------------

def normal_equations_ols(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.linalg.solve(X.T @ X, X.T @ y)


def exhaustive_sign_flip(d: np.ndarray) -> tuple[float, float]:
    """(p_above, p_below) by explicit enumeration (small n only)."""
    d = np.asarray(d, dtype=float)
    observed = d.sum()
    above = below = 0
    total = 0
    for signs in itertools.product((1.0, -1.0), repeat=len(d)):
        s = float(np.dot(signs, d))
        total += 1
        if s >= observed - 1e-12:
            above += 1
        if s <= observed + 1e-12:
            below += 1
    return above / total, below / total


# --------------------------------------------------------------------------
# Synthetic regression datasets (feature-row shaped).
# --------------------------------------------------------------------------

CONTROL_COEFS = {
    "sent_position": 0.3,
    "region_position": 2.0,
    "n_chars": 1.5,
    "n_chars_lag1": 0.5,
    "n_chars_lag2": 0.2,
    "unigram_surprisal": 3.0,
    "unigram_lag1": 1.0,
    "unigram_lag2": 0.5,
    "lm_surprisal": 2.5,
    "lm_lag1": 1.0,
    "lm_lag2": 0.5,
}


def synth_feature_rows(
    rng: np.random.Generator,
    n: int,
    beta_heads: float = 0.0,
    beta_deps: float = 0.0,
    completions_coef: float = 0.0,
    noise_sd: float = 35.0,
    participant_id: str | None = None,
):
    """Feature-row-shaped records with a planted linear RT model.

    Maintenance metrics satisfy n_deps = n_heads + extra >= n_heads and
    n_additional = n_deps - n_heads by construction.
    """
    columns = {
        "sent_position": rng.integers(1, 80, size=n).astype(float),
        "region_position": rng.integers(3, 9, size=n).astype(float),
        "n_chars": rng.integers(2, 9, size=n).astype(float),
        "n_chars_lag1": rng.integers(2, 9, size=n).astype(float),
        "n_chars_lag2": rng.integers(2, 9, size=n).astype(float),
        "unigram_surprisal": rng.gamma(6.0, 2.0, size=n),
        "unigram_lag1": rng.gamma(6.0, 2.0, size=n),
        "unigram_lag2": rng.gamma(6.0, 2.0, size=n),
        "lm_surprisal": rng.gamma(4.0, 2.0, size=n),
        "lm_lag1": rng.gamma(4.0, 2.0, size=n),
        "lm_lag2": rng.gamma(4.0, 2.0, size=n),
    }
    n_heads = rng.poisson(1.2, size=n).astype(float)
    extra = rng.poisson(0.7, size=n).astype(float)
    columns["n_heads"] = n_heads
    columns["n_deps"] = n_heads + extra
    columns["n_additional"] = extra
    columns["n_completions"] = rng.poisson(0.8, size=n).astype(float)

    rt = np.full(n, 320.0)
    for name, coef in CONTROL_COEFS.items():
        rt += coef * columns[name]
    rt += beta_heads * columns["n_heads"]
    rt += beta_deps * columns["n_deps"]
    rt += completions_coef * columns["n_completions"]
    rt += rng.normal(0.0, noise_sd, size=n)

    rows = []
    for i in range(n):
        rows.append(
            SimpleNamespace(
                doc_id=f"doc{1 + i // 500}",
                sent_index=1 + i // 5,
                region_index=3 + i % 5,
                participant_id=participant_id,
                rt=float(rt[i]),
                **{k: float(v[i]) for k, v in columns.items()},
            )
        )
    return rows


def residual_variance(x: np.ndarray, controls: np.ndarray) -> float:
    """Variance of x after partialling out [1, controls] (oracle-side)."""
    design = np.column_stack([np.ones(len(x)), controls])
    beta, *_ = np.linalg.lstsq(design, x, rcond=None)
    resid = x - design @ beta
    return float(resid.var())


def fold_level_se(rows, target: str, controls: list[str], noise_sd: float, k: int) -> float:
    """Noise-implied standard error of the target coefficient in a fit on a
    single fold (n/k rows)."""
    x = np.array([getattr(r, target) for r in rows], dtype=float)
    c = np.column_stack([[getattr(r, name) for r in rows] for name in controls]).astype(float)
    var_perp = residual_variance(x, c)
    n_fold = len(rows) / k
    return noise_sd / np.sqrt(n_fold * var_perp)
