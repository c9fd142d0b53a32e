"""Offline evaluation: confusion counts, P/R/F1@1, FPR and WER, plus a
seeded generator of phonetically plausible ASR errors for desk-scale runs."""

from __future__ import annotations

import functools
import json
import math
import random
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from rapidfuzz.distance import Levenshtein

from .dialogue import DialogueSnapshot, Intent, IntentLabel, State
from .g2p import Lexicon, phonemize_token
from .pipeline import CorrectionOutcome
from .rerank import CORRECTED, MAX_NBEST, NBestList
from .retrieval import TaskEntry
from .text import normalize, tokenize

TP, FP, FN, TN = "TP", "FP", "FN", "TN"
STRICT = "strict"  # a wrong correction is a false positive wherever it happens
ALTERNATE = "alternate"  # a wrong correction on an error turn is a missed error (FN)
CONVENTIONS = (STRICT, ALTERNATE)

GROUPS = ("search", "selection", "combined")


@dataclass(frozen=True)
class AnnotatedTurn:
    nbest: NBestList
    gold_transcript: str
    snapshot: DialogueSnapshot = field(default_factory=DialogueSnapshot)
    intent_label: str = "Search"
    gold_target: str | None = None
    has_error: bool | None = None
    turn_id: str | None = None

    def __post_init__(self):
        derived = normalize(self.nbest.best) != normalize(self.gold_transcript)
        if self.has_error is None:
            object.__setattr__(self, "has_error", derived)
        elif self.has_error != derived:
            raise ValueError(
                f"has_error={self.has_error} disagrees with the texts for turn {self.turn_id or self.gold_transcript!r}"
            )

    @property
    def intent(self) -> Intent:
        try:
            return Intent(IntentLabel(self.intent_label))
        except ValueError:
            return Intent(IntentLabel.OTHER)

    @property
    def group(self) -> str | None:
        return {"Search": "search", "Select": "selection"}.get(self.intent_label)

    def to_json(self) -> dict:
        return {
            "id": self.turn_id,
            "nbest": list(self.nbest.hypotheses),
            "gold_transcript": self.gold_transcript,
            "gold_target": self.gold_target,
            "intent_label": self.intent_label,
            "snapshot": self.snapshot.to_json(),
            "has_error": self.has_error,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AnnotatedTurn":
        return cls(
            nbest=NBestList(tuple(obj["nbest"])),
            gold_transcript=obj["gold_transcript"],
            snapshot=DialogueSnapshot.from_json(obj.get("snapshot") or {}),
            intent_label=obj.get("intent_label", "Search"),
            gold_target=obj.get("gold_target"),
            has_error=obj.get("has_error"),
            turn_id=obj.get("id"),
        )


def read_corpus(path: str | Path) -> list[AnnotatedTurn]:
    turns = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    turns.append(AnnotatedTurn.from_json(json.loads(line)))
                except (KeyError, TypeError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return turns


def write_corpus(turns: Iterable[AnnotatedTurn], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in turns:
            fh.write(json.dumps(t.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


# -- scoring -------------------------------------------------------------------


def judge(outcome: CorrectionOutcome, turn: AnnotatedTurn, convention: str = STRICT) -> str:
    if outcome.kind == CORRECTED:
        right = normalize(outcome.corrected_text or "") == normalize(turn.gold_transcript) or (
            turn.gold_target is not None and outcome.target == turn.gold_target
        )
        if right:
            return TP
        return FN if (convention == ALTERNATE and turn.has_error) else FP
    return FN if turn.has_error else TN


def wer(hypothesis: str, reference: str) -> float:
    ref = tokenize(reference)
    if not ref:
        raise ValueError("WER is undefined for an empty reference")
    return Levenshtein.distance(tokenize(hypothesis), ref) / len(ref)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class GroupMetrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float | None:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float | None:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float | None:
        p, r = self.precision, self.recall
        if p is None or r is None:
            return None
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)

    @property
    def fpr(self) -> float | None:
        return _ratio(self.fp, self.fp + self.tn)

    def add(self, label: str) -> "GroupMetrics":
        key = label.lower()
        return GroupMetrics(**{**self.counts(), key: self.counts()[key] + 1})

    def counts(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}

    def to_json(self) -> dict:
        return {
            "counts": self.counts(),
            "n": self.n,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fpr": self.fpr,
        }


def _mean_sd(values: Sequence[float]) -> dict:
    if not values:
        return {"mean": None, "sd": None}
    # fsum and statistics' exact arithmetic keep the result independent of order
    return {
        "mean": math.fsum(values) / len(values),
        "sd": statistics.stdev(values) if len(values) > 1 else None,
    }


@dataclass(frozen=True)
class MetricsReport:
    groups: dict[str, GroupMetrics]
    wer_none: dict
    wer_engine: dict
    convention: str = STRICT

    def to_json(self) -> dict:
        return {
            "convention": self.convention,
            "groups": {g: self.groups[g].to_json() for g in GROUPS},
            "wer": {"none": self.wer_none, "engine": self.wer_engine},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    def table(self) -> str:
        def fmt(v):
            return "   -" if v is None else f"{v:4.2f}"[1:] if 0 <= v < 1 else f"{v:4.2f}"

        head1 = "".join(f"| {g.capitalize():^19} " for g in GROUPS)
        head2 = "| Prec  Rec   F1   FPR " * len(GROUPS)
        row = ""
        for g in GROUPS:
            m = self.groups[g]
            row += "| " + " ".join(f"{fmt(v):>4}" for v in (m.precision, m.recall, m.f1, m.fpr)) + " "
        counts = "  ".join(
            f"{g}: TP={m.tp} FP={m.fp} FN={m.fn} TN={m.tn}" for g, m in ((g, self.groups[g]) for g in GROUPS)
        )

        def w(d):
            return "-" if d["mean"] is None else f"{d['mean']:.3f}" + ("" if d["sd"] is None else f" (sd {d['sd']:.3f})")

        return "\n".join(
            [
                f"{'':8}{head1}",
                f"{'':8}{head2}",
                f"{'engine':8}{row}",
                counts,
                f"WER no correction: {w(self.wer_none)}   engine: {w(self.wer_engine)}",
            ]
        ) + "\n"


def engine_text(outcome: CorrectionOutcome, turn: AnnotatedTurn) -> str:
    return outcome.corrected_text if outcome.kind == CORRECTED else turn.nbest.best


def evaluate(
    corpus: Sequence[AnnotatedTurn],
    correct_fn: Callable[[AnnotatedTurn], CorrectionOutcome],
    convention: str = STRICT,
    workers: int = 1,
) -> tuple[MetricsReport, list[CorrectionOutcome]]:
    """Run ``correct_fn`` on each turn and aggregate.

    Returns the report and the per-turn outcomes (in corpus order).
    """
    if not corpus:
        raise ValueError("cannot evaluate an empty corpus")
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown FPR convention {convention!r}")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(correct_fn, corpus))
    else:
        outcomes = [correct_fn(t) for t in corpus]

    groups = {g: GroupMetrics() for g in GROUPS}
    wer_none, wer_engine = [], []
    for turn, outcome in zip(corpus, outcomes):
        label = judge(outcome, turn, convention)
        groups["combined"] = groups["combined"].add(label)
        if turn.group is not None:
            groups[turn.group] = groups[turn.group].add(label)
        wer_none.append(wer(turn.nbest.best, turn.gold_transcript))
        wer_engine.append(wer(engine_text(outcome, turn), turn.gold_transcript))
    report = MetricsReport(groups, _mean_sd(wer_none), _mean_sd(wer_engine), convention)
    return report, outcomes


# -- synthetic errors ----------------------------------------------------------------

# Substitutions between acoustically close phonemes, on stress-free symbols.
DEFAULT_CONFUSIONS: dict[str, tuple[str, ...]] = {
    "AA": ("AO", "AH"), "AE": ("EH",), "AH": ("AA", "IH"), "AO": ("AA", "OW"),
    "AW": ("AO",), "AY": ("AA",), "EH": ("IH", "AE"), "ER": ("AH",), "EY": ("EH",),
    "IH": ("IY", "EH"), "IY": ("IH",), "OW": ("AO",), "UH": ("UW",), "UW": ("UH",),
    "P": ("B",), "B": ("P",), "T": ("D",), "D": ("T",), "K": ("G",), "G": ("K",),
    "F": ("V", "TH"), "V": ("F",), "S": ("Z",), "Z": ("S",), "SH": ("CH",), "CH": ("SH", "JH"),
    "JH": ("CH",), "TH": ("F",), "DH": ("D",), "M": ("N",), "N": ("M",), "NG": ("N",),
    "L": ("R",), "R": ("L",),
}


@dataclass(frozen=True)
class NoiseConfig:
    token_prob: float = 0.3
    nbest_size: int = 5
    gold_in_nbest: bool = False
    force_error: bool = False
    confusions: dict = field(default_factory=lambda: dict(DEFAULT_CONFUSIONS))

    def __post_init__(self):
        if not 0.0 <= self.token_prob <= 1.0:
            raise ValueError("token_prob must be in [0, 1]")
        if not 1 <= self.nbest_size <= MAX_NBEST:
            raise ValueError(f"nbest_size must be in [1, {MAX_NBEST}]")


@dataclass(frozen=True)
class NoisyNBest:
    nbest: NBestList
    gold_present: bool


@functools.lru_cache(maxsize=4)
def _buckets(lexicon: Lexicon) -> dict[tuple[int, str], list[tuple[str, tuple[str, ...]]]]:
    out: dict[tuple[int, str], list] = {}
    for word, pron in sorted(lexicon.items()):
        if word.isalpha():
            out.setdefault((len(pron), pron[0]), []).append((word.lower(), pron))
    return out


def _confusable_word(token, lexicon, confusions, rng) -> str | None:
    pron = phonemize_token(lexicon, token)
    options = set()
    for k, ph in enumerate(pron):
        base, stress = ph.rstrip("012"), ph[len(ph.rstrip("012")) :]
        for alt in confusions.get(base, ()):
            word = lexicon.word_for(pron[:k] + (alt + stress,) + pron[k + 1 :])
            if word and word.isalpha() and word.lower() != token:
                options.add(word.lower())
    if options:
        return rng.choice(sorted(options))
    # any real word one phoneme away that keeps the first phoneme
    near = [
        w
        for w, p in _buckets(lexicon).get((len(pron), pron[0]), ())
        if w != token and sum(a != b for a, b in zip(p, pron)) == 1
    ]
    return rng.choice(near) if near else None


def _misspell(token: str, rng: random.Random) -> str:
    vowels = [i for i, ch in enumerate(token) if ch in "aeiou"]
    if vowels:
        i = rng.choice(vowels)
        repl = rng.choice([v for v in "aeiou" if v != token[i]])
        return token[:i] + repl + token[i + 1 :]
    return token + token[-1]


def _corrupt(tokens, lexicon, config, rng, force) -> list[str]:
    eligible = [i for i, t in enumerate(tokens) if t.isalpha() and len(t) >= 3] or list(range(len(tokens)))
    out = list(tokens)
    changed = False
    for i in eligible:
        if rng.random() < config.token_prob:
            word = _confusable_word(tokens[i], lexicon, config.confusions, rng)
            if word is not None:
                out[i] = word
                changed = True
    if force and not changed:
        # ASR emits real words, so misspelling is the last resort
        order = list(eligible)
        rng.shuffle(order)
        for i in order:
            word = _confusable_word(tokens[i], lexicon, config.confusions, rng)
            if word is not None:
                out[i] = word
                break
        else:
            i = order[0]
            out[i] = _misspell(tokens[i], rng)
    return out


def inject_errors(gold: str, lexicon: Lexicon, config: NoiseConfig = NoiseConfig(), seed: int = 0) -> NoisyNBest:
    """Deterministic n-best list built by corrupting ``gold``.

    The best hypothesis is corrupted with per-token probability
    ``token_prob`` (at least one token when ``force_error``). Alternates are
    always corrupted and distinct. With ``gold_in_nbest`` the gold text
    replaces one alternate unless the best hypothesis already equals it.
    """
    rng = random.Random(f"{seed}:{normalize(gold)}")
    tokens = tokenize(gold)
    if not tokens:
        raise ValueError("gold transcript is empty")
    gold_text = " ".join(tokens)
    best = " ".join(_corrupt(tokens, lexicon, config, rng, config.force_error))
    hyps = [best]
    for _ in range(20 * config.nbest_size):
        if len(hyps) >= config.nbest_size:
            break
        alt = " ".join(_corrupt(tokens, lexicon, config, rng, True))
        if alt != gold_text and alt not in hyps:
            hyps.append(alt)
    gold_present = best == gold_text
    if config.gold_in_nbest and not gold_present:
        if len(hyps) > 1:
            hyps[rng.randrange(1, len(hyps))] = gold_text
        elif config.nbest_size > 1:
            hyps.append(gold_text)
        gold_present = gold_text in hyps
    return NoisyNBest(NBestList(tuple(hyps)), gold_present)


QUERY_FRAMES = (
    "how to {x}",
    "how do i {x}",
    "how can i {x}",
    "i want to {x}",
    "help me {x}",
    "{x}",
)


def _task_core(title: str) -> str:
    t = normalize(title)
    return t[len("how to ") :] if t.startswith("how to ") else t


def generate_corpus(
    catalog: Sequence[TaskEntry],
    lexicon: Lexicon,
    n_turns: int = 200,
    seed: int = 0,
    error_rate: float = 0.6,
    gold_in_nbest_share: float = 0.5,
    selection_share: float = 0.4,
    token_prob: float = 0.3,
    n_options: int = 3,
) -> list[AnnotatedTurn]:
    """Seeded synthetic corpus of search and selection turns.

    Search turns phrase a task as a free query ("how do i ...", "i want to
    ...") while no options are on screen; selection turns speak one of
    ``n_options`` presented titles, or its distinguishing part.
    Error turns get a corrupted best hypothesis; ``gold_in_nbest_share`` of
    them also carry the gold text further down the n-best list.
    """
    if len(catalog) < n_options:
        raise ValueError(f"need at least {n_options} tasks")
    rng = random.Random(seed)
    turns = []
    for t in range(n_turns):
        selection = rng.random() < selection_share
        task = rng.choice(catalog)
        error = rng.random() < error_rate
        gold_in = error and rng.random() < gold_in_nbest_share
        noise = NoiseConfig(token_prob=token_prob, gold_in_nbest=gold_in, force_error=error, nbest_size=5)
        core = _task_core(task.canonical_text)
        if selection:
            # the option title, or the part of it that sets it apart
            gold = normalize(task.canonical_text) if rng.random() < 0.7 else core
        else:
            gold = rng.choice(QUERY_FRAMES).format(x=core)
        if not error:
            noise = NoiseConfig(token_prob=0.0, nbest_size=5)
        noisy = inject_errors(gold, lexicon, noise, seed=rng.randrange(2**31))
        if selection:
            others = rng.sample([e for e in catalog if e.id != task.id], n_options - 1)
            shown = others + [task]
            rng.shuffle(shown)
            snapshot = DialogueSnapshot(
                State.SELECTING,
                presented_options=tuple(e.canonical_text for e in shown),
                option_ids=tuple(e.id for e in shown),
            )
            label = "Select"
        else:
            snapshot = DialogueSnapshot(State.SEARCHING)
            label = "Search"
        turns.append(
            AnnotatedTurn(
                nbest=noisy.nbest,
                gold_transcript=gold,
                snapshot=snapshot,
                intent_label=label,
                gold_target=task.id,
                turn_id=f"syn-{seed}-{t:04d}",
            )
        )
    return turns
