"""Phonetic context ranking.

Each context candidate is compared with the best ASR hypothesis through the
longest common subsequence of their phoneme sequences. A candidate is
accepted when the LCS covers enough of it and is not spread too widely over
the hypothesis; the hypothesis tokens touched by the LCS are then replaced
with the candidate tokens they matched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

from .g2p import PhonemePhrase, strip_stress


@dataclass(frozen=True)
class LcsMatch:
    pairs: tuple[tuple[int, int], ...]
    length: int
    coverage: float
    range_in_hyp: int

    @property
    def first(self) -> int | None:
        return self.pairs[0][0] if self.pairs else None


@dataclass(frozen=True)
class PhoneticThresholds:
    alpha: float = 0.5
    range_ratio: float = 1.5
    min_coverage: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.range_ratio < 1.0:
            raise ValueError(f"range_ratio must be >= 1, got {self.range_ratio}")
        if not 0.0 < self.min_coverage <= 1.0:
            raise ValueError(f"min_coverage must be in (0, 1], got {self.min_coverage}")


@dataclass(frozen=True)
class Candidate:
    text: str
    phrase: PhonemePhrase
    target: str


@dataclass(frozen=True)
class RankedCandidate:
    candidate: Candidate
    match: LcsMatch
    rewritten: str

    @property
    def range_ratio(self) -> float:
        return self.match.range_in_hyp / len(self.candidate.phrase.phonemes)


def lcs(a: Sequence[Hashable], b: Sequence[Hashable]) -> LcsMatch:
    """LCS of ``a`` (hypothesis side) and ``b`` (candidate side).

    Backtracking runs from the end: equal symbols are always paired, and on a
    tie between dropping a hypothesis or a candidate symbol the hypothesis
    symbol is dropped. Coverage is relative to ``len(b)``.
    """
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        row, prev = table[i], table[i - 1]
        ai = a[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = prev[j] if prev[j] >= row[j - 1] else row[j - 1]
    pairs = []
    i, j = n, m
    while i and j:
        if a[i - 1] == b[j - 1]:
            pairs.append((i - 1, j - 1))
            i -= 1
            j -= 1
        elif table[i - 1][j] >= table[i][j - 1]:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    length = len(pairs)
    coverage = length / m if m else 0.0
    span = pairs[-1][0] - pairs[0][0] + 1 if pairs else 0
    return LcsMatch(tuple(pairs), length, coverage, span)


def rewrite(hyp: PhonemePhrase, cand: PhonemePhrase, pairs: Sequence[tuple[int, int]]) -> str:
    """Splice candidate tokens into the hypothesis along the LCS pairs.

    A hypothesis token with any matched phoneme is covered. Each maximal run
    of covered tokens is replaced by the candidate tokens owning the matched
    phonemes of that run, in order; uncovered tokens stay where they are.
    """
    owners: dict[int, list[int]] = {}
    for i, j in pairs:
        owners.setdefault(hyp.token_at(i), []).append(cand.token_at(j))

    out: list[str] = []
    claimed: set[int] = set()
    t = 0
    while t < len(hyp.tokens):
        if t not in owners:
            out.append(hyp.tokens[t])
            t += 1
            continue
        run: list[int] = []
        while t < len(hyp.tokens) and t in owners:
            run.extend(owners[t])
            t += 1
        for c in dict.fromkeys(run):
            if c not in claimed:
                claimed.add(c)
                out.append(cand.tokens[c])
    return " ".join(out)


def _passes(match: LcsMatch, cand_len: int, th: PhoneticThresholds) -> bool:
    return match.coverage >= th.min_coverage and match.range_in_hyp / cand_len <= th.range_ratio


def _argmax(values: Sequence[float]) -> int:
    best = 0
    for k, v in enumerate(values):
        if v > values[best]:
            best = k
    return best


def score_candidates(
    best_hyp: PhonemePhrase, candidates: Sequence[Candidate], *, strip: bool = False
) -> list[LcsMatch]:
    hyp_ph = strip_stress(best_hyp.phonemes) if strip else best_hyp.phonemes
    matches = []
    for cand in candidates:
        cand_ph = strip_stress(cand.phrase.phonemes) if strip else cand.phrase.phonemes
        matches.append(lcs(hyp_ph, cand_ph))
    return matches


def rank_context(
    best_hyp: PhonemePhrase,
    candidates: Sequence[Candidate],
    thresholds: PhoneticThresholds = PhoneticThresholds(),
    *,
    strip: bool = False,
) -> RankedCandidate | None:
    """Pick a context candidate for ``best_hyp`` or return None.

    The candidate with the longest LCS is tried first; if it fails the
    coverage/range test, the one with the highest coverage gets a second
    chance (it may be the same candidate). Ties go to the earlier candidate.
    """
    if not candidates:
        return None
    matches = score_candidates(best_hyp, candidates, strip=strip)
    for key in ("length", "coverage"):
        j = _argmax([getattr(m, key) for m in matches])
        cand = candidates[j]
        if _passes(matches[j], len(cand.phrase.phonemes), thresholds):
            text = rewrite(best_hyp, cand.phrase, matches[j].pairs)
            return RankedCandidate(cand, matches[j], text)
    return None
