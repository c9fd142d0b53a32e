"""End-to-end correction of one user turn.

trigger check -> n-best re-ranking -> phonetic context ranking, first over
the narrow context and, when that yields nothing, once more over a broad
context retrieved from the whole task index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .context import ContextEntry, dedupe
from .dialogue import DialogueSnapshot, Intent, derive_narrow_context, should_trigger
from .g2p import EmptyPhraseError, InvalidTokenError, Lexicon, default_lexicon, phonemize_phrase
from .phonetics import Candidate, PhoneticThresholds, rank_context
from .rerank import CORRECTED, NBestList, RerankThresholds, rerank_nbest
from .retrieval import DEFAULT_TOP_K, RetrievalError, SearchIndex, search
from .text import normalize

log = logging.getLogger(__name__)

NO_TRIGGER = "no-trigger"
NO_CORRECTION = "no-correction-needed"


@dataclass(frozen=True)
class CorrectionOutcome:
    kind: str
    corrected_text: str | None = None
    target: str | None = None
    method: str | None = None  # fuzzy | semantic | phonetic
    score: float | None = None
    matched: str | None = None  # the context entry or search hit behind the decision
    context: str | None = None  # "narrow", "broad", or "index" for semantic hits
    details: dict = field(default_factory=dict)
    diagnostics: tuple[str, ...] = ()

    @property
    def prompt(self) -> str | None:
        return f"Did you mean {self.corrected_text}?" if self.kind == CORRECTED else None

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "text": self.corrected_text,
            "target": self.target,
            "method": self.method,
            "score": self.score,
            "matched": self.matched,
            "context": self.context,
            "prompt": self.prompt,
            "details": self.details,
            "diagnostics": list(self.diagnostics),
        }


@dataclass(frozen=True)
class PipelineConfig:
    rerank: RerankThresholds = RerankThresholds()
    phonetic: PhoneticThresholds = PhoneticThresholds()
    broad_search_k: int = DEFAULT_TOP_K
    prefilter_above: int = 50
    strip_stress: bool = False

    def __post_init__(self):
        if self.broad_search_k < 1:
            raise ValueError("broad_search_k must be >= 1")


class Corrector:
    """Holds the immutable resources (lexicon, index, config) for correction."""

    def __init__(
        self,
        index: SearchIndex | None,
        lexicon: Lexicon | None = None,
        config: PipelineConfig | None = None,
    ):
        self.index = index
        self.lexicon = lexicon if lexicon is not None else default_lexicon()
        self.config = config or PipelineConfig()

    def correct(self, nbest: NBestList, snapshot: DialogueSnapshot, intent: Intent) -> CorrectionOutcome:
        if not should_trigger(snapshot, intent):
            return CorrectionOutcome(NO_TRIGGER)
        diagnostics: list[str] = []
        narrow = derive_narrow_context(snapshot)
        outcome = self._rank(nbest, narrow, "narrow", diagnostics, prefilter=len(narrow) > self.config.prefilter_above)
        if outcome is not None:
            return outcome
        broad = self._broad_context(nbest, diagnostics)
        if broad:
            outcome = self._rank(nbest, broad, "broad", diagnostics, prefilter=False)
            if outcome is not None:
                return outcome
        return CorrectionOutcome(NO_CORRECTION, diagnostics=tuple(diagnostics))

    # -- stages ---------------------------------------------------------------

    def _rank(self, nbest, entries, label, diagnostics, *, prefilter) -> CorrectionOutcome | None:
        decision = None
        try:
            decision = rerank_nbest(nbest, entries, self.index, self.config.rerank, k=self.config.broad_search_k)
        except RetrievalError as exc:
            # the fuzzy pass finished before the index was touched
            diagnostics.append(f"semantic re-ranking skipped: {exc}")
        if decision is not None:
            kind = decision.kind
            if kind == CORRECTED and normalize(decision.text) == normalize(nbest.best):
                kind = NO_CORRECTION
            return CorrectionOutcome(
                kind,
                decision.text if kind == CORRECTED else None,
                decision.target,
                decision.method,
                decision.score,
                decision.matched,
                "index" if decision.method == "semantic" else label,
                {"hypothesis_rank": decision.rank},
                tuple(diagnostics),
            )
        if not entries:
            return None
        if prefilter:
            entries = self._prefilter(nbest.best, entries, diagnostics)
        return self._phonetic(nbest.best, entries, label, diagnostics)

    def _prefilter(self, best: str, entries, diagnostics) -> list[ContextEntry]:
        if self.index is None:
            return list(entries)
        embed = self.index.embedder.embed
        try:
            q = embed(best)
            return [e for e in entries if float(np.dot(embed(e.text), q)) >= self.config.phonetic.alpha]
        except RetrievalError as exc:
            diagnostics.append(f"narrow pre-filter skipped: {exc}")
            return list(entries)

    def _phonetic(self, best: str, entries: Sequence[ContextEntry], label, diagnostics) -> CorrectionOutcome | None:
        try:
            hyp = phonemize_phrase(self.lexicon, best)
        except (EmptyPhraseError, InvalidTokenError):
            return None
        candidates = []
        for e in entries:
            try:
                candidates.append(Candidate(e.text, phonemize_phrase(self.lexicon, e.text), e.target))
            except (EmptyPhraseError, InvalidTokenError):
                log.debug("unpronounceable context entry %r skipped", e.text)
        ranked = rank_context(hyp, candidates, self.config.phonetic, strip=self.config.strip_stress)
        if ranked is None:
            return None
        m = ranked.match
        details = {"lcs_length": m.length, "coverage": m.coverage, "range_ratio": ranked.range_ratio}
        kind = NO_CORRECTION if normalize(ranked.rewritten) == normalize(best) else CORRECTED
        return CorrectionOutcome(
            kind,
            ranked.rewritten if kind == CORRECTED else None,
            ranked.candidate.target,
            "phonetic",
            m.coverage,
            ranked.candidate.text,
            label,
            details,
            tuple(diagnostics),
        )

    def _broad_context(self, nbest: NBestList, diagnostics) -> list[ContextEntry]:
        if self.index is None:
            return []
        found: dict[str, ContextEntry] = {}
        for hyp in nbest.hypotheses:
            try:
                results = search(self.index, hyp, self.config.phonetic.alpha, self.config.broad_search_k)
            except RetrievalError as exc:
                diagnostics.append(f"broad retrieval failed: {exc}")
                return []
            for r in results:
                prev = found.get(r.surface_form)
                if prev is None or r.score > prev.score:
                    found[r.surface_form] = ContextEntry(r.surface_form, r.entry_id, "task", r.score)
        ordered = sorted(found.values(), key=lambda e: (-e.score, e.target, e.text))
        return dedupe(ordered)


def correct(
    nbest: NBestList,
    snapshot: DialogueSnapshot,
    intent: Intent,
    index: SearchIndex | None,
    config: PipelineConfig | None = None,
    lexicon: Lexicon | None = None,
) -> CorrectionOutcome:
    return Corrector(index, lexicon, config).correct(nbest, snapshot, intent)
