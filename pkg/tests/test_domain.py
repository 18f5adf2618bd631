import pytest
from hypothesis import given
from hypothesis import strategies as st

from refinery.domain import (
    Aspect,
    EpisodeResult,
    Explanation,
    Interaction,
    PlannerDecision,
    QualitySignal,
    RefinementRecord,
    Reflection,
    ReflectionLevel,
    StopReason,
    Trajectory,
    enforce_word_limit,
    parse_goal,
    render_goal,
    word_count,
)

from helpers import make_sample

F, P, C = Aspect.FACTUALITY, Aspect.PERSONALIZATION, Aspect.SENTIMENT_COHERENCE


def test_tied_goal_prose():
    goal = render_goal([(F, 1), (P, 1), (C, 1)])
    assert goal.prose == (
        "Assign equal importance to three aspects: factuality, personalization and sentiment coherence."
    )
    assert goal.notation == "F=P=C"


def test_ordered_goal_prose():
    goal = render_goal([(F, 1), (P, 2), (C, 3)])
    assert goal.prose == (
        "Assign primary importance to factuality, followed by personalization, and then coherence."
    )


def test_duplicate_aspect_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        render_goal([(F, 1), (F, 2)])


@pytest.mark.parametrize("notation", ["F=P=C", "F>P>C", "P>F>C", "P>F=C", "C"])
def test_parse_goal_roundtrips_notation(notation):
    goal = parse_goal(notation)
    assert goal.notation == notation
    assert goal == render_goal(list(goal.entries))


@pytest.mark.parametrize("notation,prose", [
    ("F=P=C", "Assign equal importance to three aspects: factuality, personalization and sentiment coherence."),
    ("F>P>C", "Assign primary importance to factuality, followed by personalization, and then coherence."),
    ("P>F>C", "Assign primary importance to personalization, followed by factuality, and then coherence."),
])
def test_named_goals_prose(notation, prose):
    assert parse_goal(notation).prose == prose


def test_parse_goal_orders_tiers():
    assert parse_goal("P>F>C").aspects == (P, F, C)
    assert parse_goal("P>F=C").tiers() == [[P], [F, C]]


@pytest.mark.parametrize("bad", ["", "F=F", "X>P", "F>>P", "F=P="])
def test_parse_goal_rejects(bad):
    with pytest.raises(ValueError):
        parse_goal(bad)


def test_word_limit_examples():
    assert enforce_word_limit("great pizza", 20) == "great pizza"
    words = [f"w{i}" for i in range(22)]
    assert enforce_word_limit(" ".join(words), 20) == " ".join(words[:20])
    with pytest.raises(ValueError):
        enforce_word_limit("", 20)


@given(st.lists(st.text(alphabet="abc xyz\t\n", min_size=1), min_size=1, max_size=60), st.integers(1, 30))
def test_word_limit_idempotent(parts, limit):
    text = " ".join(parts)
    if not text.strip():
        return
    once = enforce_word_limit(text, limit)
    assert word_count(once) <= limit
    assert enforce_word_limit(once, limit) == once


def test_planner_decision_codes():
    assert PlannerDecision.from_code(0).is_finish
    assert PlannerDecision.from_code(3).aspect is C
    assert PlannerDecision.refine(P).code == 2
    with pytest.raises(ValueError):
        PlannerDecision.from_code(4)


def test_aspect_labels():
    assert Aspect.from_label("Sentiment Coherence") is C
    assert Aspect.from_label("p") is P
    assert [a.letter for a in Aspect] == ["F", "P", "C"]


def test_interaction_rating_checked():
    with pytest.raises(ValueError):
        Interaction("u", "i", 6, "text", 1)


def test_quality_signal_render_and_checks():
    assert QualitySignal(F, "entail_flag", 1, "desc").render() == "entail_flag=1 (desc)"
    assert QualitySignal(P, "feature_count", 3).render() == "feature_count=3"
    with pytest.raises(ValueError):
        QualitySignal(F, "entail_flag", 2)
    with pytest.raises(ValueError):
        QualitySignal(F, "bogus", 0)


def _record(round_, aspect=F):
    return RefinementRecord(
        Explanation("text", round_), aspect, "instr",
        Reflection(ReflectionLevel.STRATEGIC, round_, "s"),
        Reflection(ReflectionLevel.CONTENT, round_, "c"),
    )


def test_record_rounds_must_agree():
    with pytest.raises(ValueError):
        RefinementRecord(
            Explanation("text", 1), F, "i",
            Reflection(ReflectionLevel.STRATEGIC, 2, "s"),
            Reflection(ReflectionLevel.CONTENT, 1, "c"),
        )


def test_episode_result_invariants():
    s = make_sample()
    recs = (_record(1), _record(2))
    ok = EpisodeResult(s, recs[-1].explanation, Trajectory((F, F)), 2, StopReason.MAX_ROUNDS, recs, max_rounds=2)
    assert not ok.failed
    with pytest.raises(ValueError):
        EpisodeResult(s, recs[-1].explanation, Trajectory((F, F)), 2, StopReason.MAX_ROUNDS, recs, max_rounds=6)
    with pytest.raises(ValueError):
        EpisodeResult(s, recs[-1].explanation, Trajectory((F,)), 2, StopReason.PLANNER_FINISH, recs)


def test_trajectory_notation():
    assert Trajectory((F, P, C)).notation == "[F, P, C]"
    assert Trajectory().notation == "[]"
