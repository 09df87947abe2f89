"""Native metric correctness: hand-computed fixtures, identity, range."""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medmeta.labeler import load_gazetteer
from medmeta.metrics import (
    EntityGraph,
    InvalidGraph,
    MetricScore,
    bleu,
    chexpert_f1,
    extract_graph,
    graph_f1,
    graph_similarity,
    meteor,
    rouge_l,
)

GAZ = load_gazetteer()

TOL = 1e-9


# ---------------------------------------------------------------------------
# hand-computed fixtures


def test_bleu_hand_computed():
    # ref/cand are 4 tokens each; clipped precisions by direct count:
    # 1-grams 3/4, 2-grams 2/3, 3-grams 1/2, 4-grams 0 matches over 1
    # candidate 4-gram -> smoothed to 1/(2*4).  Lengths equal, so no
    # brevity penalty.
    expected = (0.75 * (2.0 / 3.0) * 0.5 * 0.125) ** 0.25
    got = bleu("no acute cardiopulmonary process", "no acute cardiopulmonary disease")
    assert abs(got - expected) < TOL


def test_bleu_brevity_penalty():
    # Candidate is a strict 2-token prefix of a 4-token reference:
    # precisions are exact 1s at orders 1-2, penalty e^(1 - 4/2).
    got = bleu("mild edema is present", "mild edema")
    assert abs(got - math.exp(1.0 - 2.0)) < TOL


def test_rouge_l_hand_computed():
    # Token LCS is (a, small, pleural, effusion) = 4.
    # R = 4/7, P = 4/6, F1 = 2PR/(P+R) = 8/13.
    got = rouge_l("there is a small left pleural effusion", "a small pleural effusion is seen")
    assert abs(got - 8.0 / 13.0) < TOL


def test_meteor_hand_computed():
    # Exact matches: lungs, clear -> m=2, P=2/3, R=2/4.
    # Fmean = 10PR/(R+9P) = (10/3)/(13/2) = 20/39.
    # The two matches are non-adjacent in both texts -> 2 chunks,
    # penalty 0.5 * (2/2)^3 = 0.5.
    expected = (20.0 / 39.0) * 0.5
    got = meteor("lungs are clear bilaterally", "lungs remain clear")
    assert abs(got - expected) < TOL


def test_meteor_stem_stage_matches():
    # "effusions" aligns to "effusion" only through the stemmer.
    assert meteor("small effusion", "small effusions") > meteor("small effusion", "small nodule")


def test_empty_inputs():
    assert bleu("anything here", "") == 0.0
    assert rouge_l("", "") == 1.0
    assert rouge_l("a report", "") == 0.0
    assert meteor("", "") == 1.0
    assert meteor("a report", "") == 0.0


def test_disjoint_texts_score_near_zero():
    ref = "heart size is normal with clear lungs bilaterally"
    cand = "abdominal drain removed yesterday without complication"
    assert rouge_l(ref, cand) == 0.0
    assert meteor(ref, cand) == 0.0
    assert bleu(ref, cand) < 0.2  # smoothing keeps it positive but small


# ---------------------------------------------------------------------------
# identity suite

_VOCAB = (
    "there is no evidence of mild moderate severe left right pleural effusion "
    "pneumothorax edema atelectasis consolidation opacity the lungs are clear "
    "heart cardiomegaly unchanged stable increased catheter tube tip carina"
).split()


def _random_text(rnd, lo=10, hi=40):
    n = rnd.randint(lo, hi)
    words = [rnd.choice(_VOCAB) for _ in range(n)]
    return " ".join(words).capitalize() + "."


def test_identity_suite_50_pairs():
    rnd = random.Random(99)
    for _ in range(50):
        text = _random_text(rnd)
        assert bleu(text, text) == 1.0
        assert rouge_l(text, text) == 1.0
        assert meteor(text, text) >= 0.999
        assert chexpert_f1(text, text, GAZ) == 1.0
        assert graph_similarity(text, text, GAZ) == 1.0


def test_meteor_identity_closed_form():
    # Identity alignment is one chunk of m matches, so the score is
    # exactly 1 - 0.5/m^3.
    text = "one two three four five six seven eight nine ten"
    assert abs(meteor(text, text) - (1.0 - 0.5 / 10**3)) < TOL


# ---------------------------------------------------------------------------
# range fuzzing


def test_fuzz_5000_pairs_all_metrics_in_unit_interval():
    rnd = random.Random(4242)
    for i in range(5000):
        a = _random_text(rnd, 1, 25)
        b = _random_text(rnd, 1, 25)
        for fn in (bleu, rouge_l, meteor):
            v = fn(a, b)
            assert 0.0 <= v <= 1.0, (fn.__name__, a, b, v)
        # Label metrics are slower; sample every fourth pair.
        if i % 4 == 0:
            for fn in (chexpert_f1, graph_similarity):
                v = fn(a, b, GAZ)
                assert 0.0 <= v <= 1.0, (fn.__name__, a, b, v)


@settings(max_examples=300, deadline=None)
@given(st.text("abcdefgh .,", max_size=60), st.text("abcdefgh .,", max_size=60))
def test_fuzz_arbitrary_strings(a, b):
    for fn in (bleu, rouge_l, meteor):
        assert 0.0 <= fn(a, b) <= 1.0


# ---------------------------------------------------------------------------
# label metric


def test_chexpert_f1_flip_detected():
    ref = "There is a small left pleural effusion."
    cand = "There is no pleural effusion."
    assert chexpert_f1(ref, cand, GAZ) < 1.0
    assert chexpert_f1(ref, "A small left pleural effusion is seen.", GAZ) == 1.0


def test_chexpert_f1_ignores_style():
    ref = "The lungs are clear. No pleural effusion is seen."
    cand = "Lungs are clear. Without evidence of pleural effusion."
    assert chexpert_f1(ref, cand, GAZ) == 1.0


# ---------------------------------------------------------------------------
# entity graphs


def test_extract_graph_links_observation_to_anatomy():
    g = extract_graph("There is consolidation in the right lower lobe.", GAZ)
    labels = {label for _, label in g.entities}
    assert labels == {"obs", "anat"}
    resolved = g.resolved_relations()
    assert any(
        head[1] == "obs" and tail == ("right lower lobe", "anat") and rel == "located_at"
        for head, tail, rel in resolved
    )


def test_graph_f1_hand_computed():
    a = EntityGraph(entities=(("effusion", "obs"), ("left base", "anat")), relations=((0, 1, "located_at"),))
    b = EntityGraph(entities=(("effusion", "obs"), ("right base", "anat")), relations=((0, 1, "located_at"),))
    # Entities: tp=1, fp=1, fn=1 -> F1 = 2/4.  Relations: disjoint -> 0.
    assert abs(graph_f1(a, b) - 0.25) < TOL


def test_graph_f1_empty_graphs():
    empty = EntityGraph(entities=(), relations=())
    assert graph_f1(empty, empty) == 1.0


def test_invalid_graph_rejected():
    with pytest.raises(InvalidGraph):
        EntityGraph(entities=(("effusion", "obs"),), relations=((0, 5, "located_at"),))


def test_graph_similarity_penalizes_moved_finding():
    ref = "There is consolidation in the right lower lobe."
    moved = "There is consolidation in the left lower lobe."
    assert graph_similarity(ref, moved, GAZ) < 1.0


# ---------------------------------------------------------------------------
# score record


def test_metric_score_rejects_out_of_range():
    with pytest.raises(ValueError):
        MetricScore("bleu", "p1", 1.5)
    with pytest.raises(ValueError):
        MetricScore("bleu", "p1", float("nan"))
    assert MetricScore("bleu", "p1", 0.0).value == 0.0
