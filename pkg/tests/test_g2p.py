import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asrcorrect.g2p import (
    ARPABET,
    EmptyPhraseError,
    InvalidTokenError,
    LexiconError,
    load_lexicon,
    phonemize_phrase,
    phonemize_token,
    strip_stress,
)

SMALL = b""";;; a comment line
HOUSE  HH AW1 S
HORSE  HH AO1 R S
HENCE  HH EH1 N S
A  AH0
A(1)  EY1
"""


def test_parse_basic_entries():
    lex = load_lexicon(SMALL)
    assert lex.lookup("house") == ("HH", "AW1", "S")
    assert lex.lookup("HORSE") == ("HH", "AO1", "R", "S")
    assert lex.count == 4


def test_variant_lines_are_skipped():
    lex = load_lexicon(b"A  AH0\nA(1)  EY1\n")
    assert lex.lookup("a") == ("AH0",)
    assert lex.count == 1


def test_empty_stream_gives_empty_lexicon():
    assert load_lexicon(b"").count == 0


def test_modern_lowercase_layout_with_trailing_comment():
    lex = load_lexicon(b"tomato T AH0 M EY1 T OW2 # us\n")
    assert lex.lookup("TOMATO") == ("T", "AH0", "M", "EY1", "T", "OW2")


def test_unknown_symbol_names_the_line():
    with pytest.raises(LexiconError, match="line 2"):
        load_lexicon(b"HOUSE  HH AW1 S\nBAD  QQ9\n")


def test_word_without_phonemes_rejected():
    with pytest.raises(LexiconError, match="line 1"):
        load_lexicon(b"LONELY\n")


def test_reverse_lookup_picks_alphabetically_first():
    lex = load_lexicon(b"THEIR  DH EH1 R\nTHERE  DH EH1 R\n")
    assert lex.word_for(("DH", "EH1", "R")) == "THEIR"


def test_full_lexicon_reference_words(lexicon):
    assert phonemize_token(lexicon, "house") == ("HH", "AW1", "S")
    assert phonemize_token(lexicon, "horse") == ("HH", "AO1", "R", "S")
    assert phonemize_token(lexicon, "hence") == ("HH", "EH1", "N", "S")


def test_lookup_is_case_insensitive(lexicon):
    assert phonemize_token(lexicon, "HoUsE") == phonemize_token(lexicon, "house")


def test_out_of_lexicon_rules_are_deterministic(lexicon):
    first = phonemize_token(lexicon, "zzkrx")
    assert first and first == phonemize_token(lexicon, "zzkrx")
    assert set(first) <= ARPABET


@pytest.mark.parametrize("word", ["blorf", "shingleweave", "quixotry", "phlange", "yby"])
def test_rule_output_is_valid_arpabet(word):
    lex = load_lexicon(b"")
    out = phonemize_token(lex, word)
    assert out and set(out) <= ARPABET


def test_digits_are_read_as_words(lexicon):
    assert phonemize_token(lexicon, "3") == phonemize_token(lexicon, "three")


def test_punctuation_only_token_rejected(lexicon):
    with pytest.raises(InvalidTokenError):
        phonemize_token(lexicon, "?!")


def test_phrase_single_token(lexicon):
    p = phonemize_phrase(lexicon, "house")
    assert p.tokens == ("house",)
    assert p.phonemes == ("HH", "AW1", "S")
    assert p.spans == ((0, 3),)


def test_phrase_two_tokens(lexicon):
    p = phonemize_phrase(lexicon, "horse hence")
    assert p.phonemes == ("HH", "AO1", "R", "S", "HH", "EH1", "N", "S")
    assert p.spans == ((0, 4), (4, 8))
    assert [p.token_at(i) for i in range(8)] == [0, 0, 0, 0, 1, 1, 1, 1]


def test_phrase_normalizes_case_and_punctuation(lexicon):
    assert phonemize_phrase(lexicon, "Horse, hence!") == phonemize_phrase(lexicon, "horse hence")


def test_empty_phrase_rejected(lexicon):
    with pytest.raises(EmptyPhraseError):
        phonemize_phrase(lexicon, "  ,, ")


def test_strip_stress():
    assert strip_stress(("HH", "AW1", "S", "AH0")) == ("HH", "AW", "S", "AH")


words = st.lists(st.from_regex(r"[a-z]{1,9}", fullmatch=True), min_size=1, max_size=6)


@settings(max_examples=100, deadline=None)
@given(words)
def test_phrase_is_concatenation_of_tokens(lexicon, toks):
    p = phonemize_phrase(lexicon, " ".join(toks))
    concat = tuple(ph for t in toks for ph in phonemize_token(lexicon, t))
    assert p.phonemes == concat
    assert p.spans[0][0] == 0 and p.spans[-1][1] == len(p.phonemes)
    for (s0, e0), (s1, _) in zip(p.spans, p.spans[1:]):
        assert s0 < e0 == s1


def test_phrase_identical_across_processes(lexicon):
    code = (
        "from asrcorrect.g2p import default_lexicon, phonemize_phrase;"
        "print(phonemize_phrase(default_lexicon(), 'how to fix a bathroom flurbix').phonemes)"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
    assert out.strip() == str(phonemize_phrase(lexicon, "how to fix a bathroom flurbix").phonemes)
