import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asrcorrect.augment import TableGenerator, build_augmented_catalog, AugmentConfig
from asrcorrect.context import ContextEntry
from asrcorrect.rerank import CORRECTED, NO_CORRECTION, NBestList, RerankThresholds, fuzzy_ratio, rerank_nbest
from asrcorrect.retrieval import TaskEntry, build_index
from conftest import DATA


def entries(*texts):
    return [ContextEntry(t, t) for t in texts]


def test_fuzzy_ratio_hand_values():
    assert fuzzy_ratio("fence", "fence") == 100
    assert fuzzy_ratio("fence", "hence") == 80
    assert fuzzy_ratio("wood fence", "wood fences") == 91


def test_fuzzy_ratio_ignores_case_and_punctuation():
    assert fuzzy_ratio("Start another task!", "start another task") == 100


def test_nbest_validation():
    with pytest.raises(ValueError):
        NBestList(())
    with pytest.raises(ValueError):
        NBestList(tuple("abcdef"))
    with pytest.raises(ValueError):
        NBestList(("ok", " ! "))
    with pytest.raises(ValueError):
        NBestList(("a", "b"), (0.5,))
    assert NBestList(("a", "b")).best == "a"


def test_thresholds_validated():
    with pytest.raises(ValueError):
        RerankThresholds(fuzzy_min=101)
    with pytest.raises(ValueError):
        RerankThresholds(cosine_min=-0.1)


def test_best_equal_to_option_needs_no_correction():
    d = rerank_nbest(NBestList(("start another task", "start a mother task")), entries("next", "start another task"), None)
    assert d.kind == NO_CORRECTION and d.rank == 0 and d.method == "fuzzy" and d.score == 100


def test_lower_hypothesis_matching_an_option_is_chosen():
    d = rerank_nbest(NBestList(("go pack", "go back")), entries("next", "go back"), None)
    assert d.kind == CORRECTED and d.text == "go back" and d.rank == 1


def test_camper_hypothesis_loses_to_its_alternative():
    # the bare title "take care plant" is far from both hypotheses under the
    # trigram embedder; its table-generated surface forms carry the match
    private = [TaskEntry("plants", "take care plant"), TaskEntry("guitar", "tune an electric guitar")]
    gen = TableGenerator.from_path(DATA / "variations.tsv")
    aug = build_augmented_catalog(["take care plant"], private, AugmentConfig(n_clusters=1, k_variations=3, generator=gen))
    idx = build_index(aug.catalog)
    nbest = NBestList(("how to camper for outdoor plants", "how to care for outdoor plants"))
    d = rerank_nbest(nbest, [], idx)
    assert d.kind == CORRECTED and d.rank == 1 and d.method == "semantic"
    assert d.text == "how to care for outdoor plants" and d.target == "plants"
    assert d.score >= 0.8


def test_nothing_above_thresholds_defers():
    idx = build_index([TaskEntry("g", "tune an electric guitar")])
    assert rerank_nbest(NBestList(("bake bread",)), [], idx) is None
    assert rerank_nbest(NBestList(("bake bread",)), [], None) is None


def test_semantic_ties_go_to_the_earlier_hypothesis():
    idx = build_index([TaskEntry("a", "bake bread")])
    d = rerank_nbest(NBestList(("bake bread", "Bake bread!")), [], idx)
    assert d.rank == 0 and d.kind == NO_CORRECTION


def test_fuzzy_pass_stops_at_first_hit():
    calls = []

    def counting(a, b):
        calls.append(a)
        return fuzzy_ratio(a, b)

    nbest = NBestList(("go pack", "go back", "go back please"))
    rerank_nbest(nbest, entries("go back", "next"), None, scorer=counting)
    assert "go back please" not in calls


hyps = st.lists(st.sampled_from(["go back", "go pack", "next", "nest", "start another task", "start cooking"]), min_size=1, max_size=5)
opts = st.lists(st.sampled_from(["go back", "next", "start another task", "start cooking", "repeat"]), min_size=1, max_size=4)


@settings(max_examples=200, deadline=None)
@given(hyps, opts, st.integers(50, 100), st.integers(0, 50))
def test_rerank_properties(index, h, o, fmin, drop):
    nbest = NBestList(tuple(h))
    narrow = entries(*o)
    d = rerank_nbest(nbest, narrow, index, RerankThresholds(fmin))
    if d is not None:
        assert d.text in nbest.hypotheses
    if d is not None and d.method == "fuzzy":
        lower = rerank_nbest(nbest, narrow, index, RerankThresholds(max(0, fmin - drop)))
        assert lower is not None and lower.method == "fuzzy"
