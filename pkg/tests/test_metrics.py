import logging
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from refinery import metrics
from refinery.llm import ParseError, ScriptedBackend

from helpers import make_sample
from oracles import VOCAB, oracle_entr, oracle_entropy

corpora = st.lists(
    st.lists(st.sampled_from(VOCAB), max_size=30).map(" ".join), min_size=1, max_size=50
)


@given(corpora)
def test_entr_matches_oracle(texts):
    assert abs(metrics.entr(texts) - oracle_entr(texts)) <= 1e-9
    for n in (1, 2, 3):
        assert abs(metrics.ngram_entropy(texts, n) - oracle_entropy(texts, n)) <= 1e-9


def test_entropy_hand_cases():
    assert metrics.ngram_entropy(["a a a"], 1) == 0.0
    assert abs(metrics.ngram_entropy(["the cat sat"], 1) - math.log2(3)) <= 1e-9
    assert metrics.ngram_entropy(["the cat sat"], 2) == 1.0
    assert metrics.ngram_entropy(["the cat sat"], 3) == 0.0
    assert metrics.entr(["the cat sat"]) == 0.0
    assert metrics.entr(["a a a"]) == 0.0


def test_entropy_degenerate_warns(caplog):
    with caplog.at_level(logging.WARNING):
        assert metrics.ngram_entropy(["hi"], 3) == 0.0
    assert "entropy set to 0" in caplog.text
    with pytest.raises(ValueError):
        metrics.ngram_entropy(["x"], 4)


def test_tokenize():
    assert metrics.tokenize("Don't STOP-me, now!") == ["dont", "stop", "me", "now"]
    assert metrics.tokenize("it’s a_b") == ["its", "a", "b"]


FEATS = {"battery", "screen", "price", "camera"}


def test_fcr_examples():
    assert metrics.fcr(["great battery life", "fair price, battery ok"], FEATS) == 0.5
    assert metrics.fcr(["nothing here"], FEATS) == 0.0
    assert metrics.fcr(["battery screen", "price and camera"], FEATS) == 1.0


def test_feature_matching_whole_tokens_and_phrases():
    feats = {"bat", "hot pot", "price"}
    assert metrics.features_in("battery prices", feats) == set()
    assert metrics.features_in("the hot pot was hot", feats) == {"hot pot"}
    assert metrics.features_in("hot and pot", feats) == set()
    with pytest.raises(ValueError):
        metrics.fcr(["x"], set())


@given(
    st.lists(st.lists(st.sampled_from(sorted(FEATS) + VOCAB), max_size=10).map(" ".join), max_size=10),
    st.lists(st.lists(st.sampled_from(sorted(FEATS) + VOCAB), max_size=10).map(" ".join), max_size=10),
)
def test_fcr_monotone_under_extension(base, extra):
    assert metrics.fcr(base + extra, FEATS) >= metrics.fcr(base, FEATS)


def test_entail_ratio():
    assert metrics.entail_ratio([1, 1, 0, 0]) == 0.5
    assert metrics.entail_ratio([1]) == 1.0
    with pytest.raises(ValueError):
        metrics.entail_ratio([])
    with pytest.raises(ValueError):
        metrics.entail_ratio([2])


def test_cor_examples():
    assert metrics.cor([4.0, 2.0], [1, -1]) == 1.0
    assert metrics.cor([4.0, 2.0], [1, 1]) == 0.5
    assert metrics.cor([3.0], [1]) == 1.0
    with pytest.raises(ValueError):
        metrics.cor([], [])


def test_cor_accepts_samples():
    assert metrics.cor([make_sample(rating=2.0)], [-1]) == 1.0


def _judge(reply):
    return ScriptedBackend({"entail#*": reply, "sentiment#*": reply})


def test_judge_entailment_parsing():
    assert metrics.judge_entailment(_judge("1"), "e", ["r"]) == 1
    assert metrics.judge_entailment(_judge("The answer is 0"), "e", ["r"]) == 0


def test_judge_entailment_prompt_layout():
    b = _judge("1")
    metrics.judge_entailment(b, "tasty broth", ["good broth", "slow"])
    call = b.calls[0]
    assert call.system_prompt == metrics.ENTAILMENT_PROMPT
    assert call.user_prompt == (
        "Recommendation_Explanation: tasty broth\nItem_Reviews:\n1. good broth\n2. slow"
    )


def test_judge_entailment_no_reviews(caplog):
    b = _judge("1")
    with caplog.at_level(logging.WARNING):
        assert metrics.judge_entailment(b, "e", []) == 0
    assert b.calls == []
    assert "no reviews" in caplog.text


def test_classify_sentiment():
    assert metrics.classify_sentiment(_judge("1"), "e") == 1
    assert metrics.classify_sentiment(_judge("-1"), "e") == -1
    b = _judge("positive")
    with pytest.raises(ParseError):
        metrics.classify_sentiment(b, "e")
    assert len(b.calls) == 3


def test_render_reviews_budget():
    text = metrics.render_reviews(["a" * 50, "b" * 50, "c" * 50], budget_chars=110)
    assert text.splitlines() == ["1. " + "a" * 50, "2. " + "b" * 50]
