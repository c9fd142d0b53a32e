"""Grapheme-to-phoneme conversion backed by a CMUdict-format lexicon.

Words found in the lexicon get their first-listed pronunciation. Anything
else goes through a small deterministic letter-to-sound rule set, so every
token with at least one letter or digit produces a non-empty phoneme
sequence.
"""

from __future__ import annotations

import bisect
import functools
import io
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping

from .text import number_words, tokenize

log = logging.getLogger(__name__)

CONSONANTS = frozenset(
    "B CH D DH F G HH JH K L M N NG P R S SH T TH V W Y Z ZH".split()
)
VOWELS = frozenset("AA AE AH AO AW AY EH ER EY IH IY OW OY UH UW".split())
ARPABET = CONSONANTS | frozenset(v + s for v in VOWELS for s in "012")

_VARIANT = re.compile(r"^(.+)\((\d+)\)$")


class LexiconError(ValueError):
    pass


class InvalidTokenError(ValueError):
    pass


class EmptyPhraseError(ValueError):
    pass


class Lexicon:
    """Immutable word -> pronunciation table. Keys are uppercase."""

    def __init__(self, entries: Mapping[str, tuple[str, ...]]):
        self._entries = dict(entries)
        self._by_pron: dict[tuple[str, ...], str] | None = None

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, word: object) -> bool:
        return isinstance(word, str) and word.upper() in self._entries

    def lookup(self, word: str) -> tuple[str, ...] | None:
        return self._entries.get(word.upper())

    def words(self) -> Iterable[str]:
        return self._entries.keys()

    def items(self):
        return self._entries.items()

    @property
    def count(self) -> int:
        return len(self._entries)

    def word_for(self, phonemes: tuple[str, ...]) -> str | None:
        """Reverse lookup: alphabetically first word with this pronunciation."""
        if self._by_pron is None:
            by_pron: dict[tuple[str, ...], str] = {}
            for word in sorted(self._entries):
                by_pron.setdefault(self._entries[word], word)
            self._by_pron = by_pron
        return self._by_pron.get(tuple(phonemes))


def load_lexicon(source: BinaryIO | bytes) -> Lexicon:
    """Parse CMUdict text.

    Accepts both the classic ``WORD  PH PH`` layout and the single-space,
    lowercase layout of newer releases. ``;;;`` lines are comments, ``#``
    starts a trailing comment, and ``WORD(n)`` alternates are skipped.
    """
    data = source if isinstance(source, bytes) else source.read()
    text = data.decode("utf-8", errors="replace")
    entries: dict[str, tuple[str, ...]] = {}
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or raw.startswith(";;;"):
            continue
        word, *phones = line.split()
        if not phones:
            raise LexiconError(f"line {lineno}: no phonemes for {word!r}")
        bad = [p for p in phones if p not in ARPABET]
        if bad:
            raise LexiconError(f"line {lineno}: unknown phoneme(s) {bad} for {word!r}")
        if _VARIANT.match(word):
            continue
        entries.setdefault(word.upper(), tuple(phones))
    log.debug("loaded %d lexicon entries", len(entries))
    return Lexicon(entries)


def load_lexicon_path(path: str | Path) -> Lexicon:
    with open(path, "rb") as fh:
        return load_lexicon(fh)


@functools.lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    """The full CMU Pronouncing Dictionary shipped by the ``cmudict`` package."""
    import cmudict

    with cmudict.dict_stream() as fh:
        return load_lexicon(fh)


# Longest match wins; order inside a length class does not matter.
_RULES: dict[str, tuple[str, ...]] = {
    "tch": ("CH",), "sch": ("S", "K"), "igh": ("AY1",),
    "sh": ("SH",), "ch": ("CH",), "ph": ("F",), "ck": ("K",), "th": ("TH",),
    "ng": ("NG",), "qu": ("K", "W"), "wh": ("W",), "gh": ("G",),
    "ee": ("IY1",), "ea": ("IY1",), "oo": ("UW1",), "ou": ("AW1",),
    "ow": ("OW1",), "ai": ("EY1",), "ay": ("EY1",), "oi": ("OY1",),
    "oy": ("OY1",), "au": ("AO1",), "aw": ("AO1",), "ie": ("IY1",),
    "ei": ("EY1",), "er": ("ER1",), "ar": ("AA1", "R"), "or": ("AO1", "R"),
    "a": ("AE1",), "e": ("EH1",), "i": ("IH1",), "o": ("AA1",), "u": ("AH1",),
    "b": ("B",), "c": ("K",), "d": ("D",), "f": ("F",), "g": ("G",),
    "h": ("HH",), "j": ("JH",), "k": ("K",), "l": ("L",), "m": ("M",),
    "n": ("N",), "p": ("P",), "q": ("K",), "r": ("R",), "s": ("S",),
    "t": ("T",), "v": ("V",), "w": ("W",), "x": ("K", "S"), "z": ("Z",),
}
_MAX_RULE = max(map(len, _RULES))
_VOWEL_LETTERS = set("aeiouy")


def _letter_to_sound(word: str) -> tuple[str, ...]:
    word = word.replace("'", "")
    if len(word) > 2 and word.endswith("e") and word[-2] not in _VOWEL_LETTERS:
        word = word[:-1]
    out: list[str] = []
    i = 0
    while i < len(word):
        ch = word[i]
        if ch == "y":
            if i == 0:
                out.append("Y")
            else:
                out.append("IY0" if i == len(word) - 1 else "IH1")
            i += 1
            continue
        if ch == "c" and i + 1 < len(word) and word[i + 1] in "eiy":
            out.append("S")
            i += 1
            continue
        for size in range(min(_MAX_RULE, len(word) - i), 0, -1):
            chunk = word[i : i + size]
            if chunk in _RULES:
                phones = _RULES[chunk]
                # doubled consonant letters ("ll", "ss") are one sound
                if size == 1 and out and i > 0 and word[i - 1] == ch and ch not in _VOWEL_LETTERS:
                    phones = ()
                out.extend(phones)
                i += size
                break
        else:
            i += 1  # non-letter residue
    # one primary stress: later vowels are reduced
    seen_primary = False
    for k, p in enumerate(out):
        if p[-1] == "1":
            if seen_primary:
                out[k] = p[:-1] + "0"
            seen_primary = True
    return tuple(out)


def phonemize_token(lexicon: Lexicon, token: str) -> tuple[str, ...]:
    """Phonemes for one token; lexicon first, rules otherwise. Never empty."""
    words = tokenize(token)
    if not words:
        raise InvalidTokenError(f"token has no alphanumeric content: {token!r}")
    phones: list[str] = []
    for word in words:
        parts = number_words(word) if word.isdigit() else [word]
        for part in parts:
            found = lexicon.lookup(part)
            phones.extend(found if found is not None else _letter_to_sound(part))
    if not phones:
        # only reachable for pathological tokens like "'''e"; keep the contract
        raise InvalidTokenError(f"no pronunciation derivable for {token!r}")
    return tuple(phones)


@dataclass(frozen=True)
class PhonemePhrase:
    tokens: tuple[str, ...]
    phonemes: tuple[str, ...]
    spans: tuple[tuple[int, int], ...]

    def token_at(self, phoneme_index: int) -> int:
        """Index of the token owning ``phonemes[phoneme_index]``."""
        starts = [s for s, _ in self.spans]
        return bisect.bisect_right(starts, phoneme_index) - 1

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def phonemize_phrase(lexicon: Lexicon, text: str) -> PhonemePhrase:
    tokens = tokenize(text)
    if not tokens:
        raise EmptyPhraseError(f"no tokens in {text!r}")
    phonemes: list[str] = []
    spans = []
    for tok in tokens:
        start = len(phonemes)
        phonemes.extend(phonemize_token(lexicon, tok))
        spans.append((start, len(phonemes)))
    return PhonemePhrase(tuple(tokens), tuple(phonemes), tuple(spans))


def strip_stress(phonemes: Iterable[str]) -> tuple[str, ...]:
    return tuple(p.rstrip("012") for p in phonemes)
