"""Re-ranking of n-best ASR hypotheses against the dialogue context."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from rapidfuzz.distance import Levenshtein

from .context import ContextEntry
from .retrieval import DEFAULT_TOP_K, ScoredResult, SearchIndex, hypothesis_score, search
from .text import normalize

MAX_NBEST = 5

NO_CORRECTION = "no-correction-needed"
CORRECTED = "corrected"


@dataclass(frozen=True)
class NBestList:
    hypotheses: tuple[str, ...]
    confidences: tuple[float, ...] | None = None

    def __post_init__(self):
        hyps = tuple(self.hypotheses)
        object.__setattr__(self, "hypotheses", hyps)
        if not 1 <= len(hyps) <= MAX_NBEST:
            raise ValueError(f"an n-best list holds 1-{MAX_NBEST} hypotheses, got {len(hyps)}")
        if any(not normalize(h) for h in hyps):
            raise ValueError("empty hypothesis in n-best list")
        if self.confidences is not None:
            conf = tuple(float(c) for c in self.confidences)
            if len(conf) != len(hyps):
                raise ValueError("one confidence per hypothesis")
            object.__setattr__(self, "confidences", conf)

    @property
    def best(self) -> str:
        return self.hypotheses[0]

    def __len__(self) -> int:
        return len(self.hypotheses)


@dataclass(frozen=True)
class RerankThresholds:
    fuzzy_min: int = 96
    cosine_min: float = 0.8

    def __post_init__(self):
        if not 0 <= self.fuzzy_min <= 100:
            raise ValueError(f"fuzzy_min must be in [0, 100], got {self.fuzzy_min}")
        if not 0.0 <= self.cosine_min <= 1.0:
            raise ValueError(f"cosine_min must be in [0, 1], got {self.cosine_min}")


def fuzzy_ratio(a: str, b: str) -> int:
    """Character-level Levenshtein similarity as a rounded percentage."""
    a, b = normalize(a), normalize(b)
    if not a or not b:
        raise ValueError("fuzzy_ratio needs two non-empty texts")
    dist = Levenshtein.distance(a, b)
    return math.floor(100.0 * (1.0 - dist / max(len(a), len(b))) + 0.5)


@dataclass(frozen=True)
class RerankDecision:
    kind: str  # NO_CORRECTION or CORRECTED
    text: str
    rank: int  # position of the chosen hypothesis in the n-best list
    method: str  # "fuzzy" or "semantic"
    score: float
    target: str | None = None
    matched: str | None = None


def _fuzzy_phase(nbest, narrow, fuzzy_min, scorer):
    for rank, hyp in enumerate(nbest.hypotheses):
        best_entry, best = None, -1
        for entry in narrow:
            s = scorer(hyp, entry.text)
            if s > best:
                best_entry, best = entry, s
        if best >= fuzzy_min:
            kind = NO_CORRECTION if rank == 0 else CORRECTED
            return RerankDecision(kind, hyp, rank, "fuzzy", float(best), best_entry.target, best_entry.text)
    return None


def rerank_nbest(
    nbest: NBestList,
    narrow: Sequence[ContextEntry],
    index: SearchIndex | None,
    thresholds: RerankThresholds = RerankThresholds(),
    *,
    k: int = DEFAULT_TOP_K,
    scorer: Callable[[str, str], int] = fuzzy_ratio,
) -> RerankDecision | None:
    """Fuzzy pass over the narrow context, then a semantic pass over the index.

    The fuzzy pass walks hypotheses best-first and stops at the first one
    that reaches ``fuzzy_min``. The semantic pass gives each hypothesis the
    best cosine of its search results and keeps the highest (earlier rank on
    ties). Returns None when neither pass finds anything.
    """
    if narrow:
        hit = _fuzzy_phase(nbest, narrow, thresholds.fuzzy_min, scorer)
        if hit is not None:
            return hit
    if index is None:
        return None

    best_rank, best_score, best_result = -1, -1.0, None
    for rank, hyp in enumerate(nbest.hypotheses):
        results: list[ScoredResult] = search(index, hyp, thresholds.cosine_min, k)
        score = hypothesis_score(results)
        if results and score > best_score:
            best_rank, best_score, best_result = rank, score, results[0]
    if best_result is None or best_score < thresholds.cosine_min:
        return None
    kind = NO_CORRECTION if best_rank == 0 else CORRECTED
    return RerankDecision(
        kind,
        nbest.hypotheses[best_rank],
        best_rank,
        "semantic",
        best_score,
        best_result.entry_id,
        best_result.surface_form,
    )
