"""Condition labeling: phrase matching, negation, uncertainty, F1."""

import pytest

from medmeta.labeler import (
    Condition,
    LabelState,
    label_f1,
    label_report,
    load_gazetteer,
    mention_states,
    sentence_states,
)

GAZ = load_gazetteer()


def _labels(text):
    return label_report(text, GAZ)


# ---------------------------------------------------------------------------
# basic polarity


def test_positive_mention():
    v = _labels("There is a small left pleural effusion.")
    assert v[Condition.PLEURAL_EFFUSION] is LabelState.POSITIVE


def test_negated_mention():
    v = _labels("No pleural effusion is seen.")
    assert v[Condition.PLEURAL_EFFUSION] is LabelState.NEGATIVE


def test_uncertain_mention():
    v = _labels("There is a possible right pleural effusion.")
    assert v[Condition.PLEURAL_EFFUSION] is LabelState.UNCERTAIN


def test_unmentioned_stays_blank():
    v = _labels("There is a small left pleural effusion.")
    assert v[Condition.FRACTURE] is LabelState.BLANK


def test_post_trigger_negation():
    v = _labels("Previously seen pneumomediastinum has resolved.")
    assert v[Condition.PNEUMOTHORAX] is LabelState.NEGATIVE


def test_compound_negation_covers_conjunction():
    v = _labels("No pleural effusion or pneumothorax is seen.")
    assert v[Condition.PLEURAL_EFFUSION] is LabelState.NEGATIVE
    assert v[Condition.PNEUMOTHORAX] is LabelState.NEGATIVE


def test_positive_beats_negative_across_sentences():
    text = "No pleural effusion is seen. A small left pleural effusion is present."
    assert _labels(text)[Condition.PLEURAL_EFFUSION] is LabelState.POSITIVE


def test_device_removal_is_negative():
    v = _labels("The previous right internal jugular vein catheter was removed.")
    assert v[Condition.SUPPORT_DEVICES] is LabelState.NEGATIVE


def test_device_in_place_is_positive():
    v = _labels("A right chest tube remains in place.")
    assert v[Condition.SUPPORT_DEVICES] is LabelState.POSITIVE


# ---------------------------------------------------------------------------
# no-finding semantics


def test_clear_report_sets_no_finding():
    v = _labels("The lungs are clear. No acute cardiopulmonary process.")
    assert v[Condition.NO_FINDING] is LabelState.POSITIVE


def test_negations_alone_set_no_finding():
    v = _labels("No pleural effusion or pneumothorax.")
    assert v[Condition.NO_FINDING] is LabelState.POSITIVE


def test_positive_finding_blocks_no_finding():
    v = _labels("The lungs are clear. There is moderate cardiomegaly.")
    assert v[Condition.NO_FINDING] is LabelState.BLANK
    assert v[Condition.CARDIOMEGALY] is LabelState.POSITIVE


def test_silent_report_has_no_claim():
    v = _labels("Portable radiograph of the chest was obtained.")
    assert v[Condition.NO_FINDING] is LabelState.BLANK


# ---------------------------------------------------------------------------
# sentence and mention granularity


def test_sentence_states_are_per_sentence():
    text = "No pneumothorax is seen. There is mild pulmonary edema."
    states = sentence_states(text, GAZ)
    assert len(states) == 2
    assert states[0][Condition.PNEUMOTHORAX] is LabelState.NEGATIVE
    assert states[1][Condition.EDEMA] is LabelState.POSITIVE
    assert Condition.EDEMA not in states[0]


def test_mention_states_reading_order():
    text = "No pneumothorax. A small left pleural effusion is seen."
    mentions = mention_states(text, GAZ)
    assert [(si, cond, state) for si, cond, _, state in mentions] == [
        (0, Condition.PNEUMOTHORAX, LabelState.NEGATIVE),
        (1, Condition.PLEURAL_EFFUSION, LabelState.POSITIVE),
    ]
    assert mentions[0][2] == "pneumothorax"


def test_mention_states_capture_matched_phrase():
    mentions = mention_states("The heart is moderately enlarged.", GAZ)
    assert any(cond is Condition.CARDIOMEGALY for _, cond, _, _ in mentions)


# ---------------------------------------------------------------------------
# negation scope boundaries


def test_scope_stops_at_conjunction_boundary():
    # "but" ends the negation scope, so edema stays positive
    v = _labels("No pleural effusion but there is mild edema.")
    assert v[Condition.PLEURAL_EFFUSION] is LabelState.NEGATIVE
    assert v[Condition.EDEMA] is LabelState.POSITIVE


def test_scope_does_not_cross_sentences():
    v = _labels("No pneumothorax. Moderate cardiomegaly.")
    assert v[Condition.CARDIOMEGALY] is LabelState.POSITIVE


# ---------------------------------------------------------------------------
# label F1


def test_label_f1_identical():
    v = _labels("There is moderate cardiomegaly. No pleural effusion.")
    assert label_f1(v, v) == 1.0


def test_label_f1_both_blank():
    blank = {cond: LabelState.BLANK for cond in Condition}
    assert label_f1(blank, blank) == 1.0


def test_label_f1_hand_computed():
    gt = {cond: LabelState.BLANK for cond in Condition}
    me = {cond: LabelState.BLANK for cond in Condition}
    gt[Condition.CARDIOMEGALY] = LabelState.POSITIVE      # matched
    me[Condition.CARDIOMEGALY] = LabelState.POSITIVE
    gt[Condition.EDEMA] = LabelState.POSITIVE             # missed -> fn
    me[Condition.PNEUMOTHORAX] = LabelState.NEGATIVE      # spurious -> fp
    # F1 = 2*1 / (2*1 + 1 + 1)
    assert label_f1(gt, me) == pytest.approx(0.5, abs=1e-12)


def test_label_f1_state_flip_counts_both_ways():
    gt = {cond: LabelState.BLANK for cond in Condition}
    me = {cond: LabelState.BLANK for cond in Condition}
    gt[Condition.PLEURAL_EFFUSION] = LabelState.POSITIVE
    me[Condition.PLEURAL_EFFUSION] = LabelState.NEGATIVE
    # one fp plus one fn, no tp
    assert label_f1(gt, me) == 0.0


# ---------------------------------------------------------------------------
# gazetteer override hook


def test_env_override_loads_alternate_gazetteer(tmp_path, monkeypatch):
    import json

    from medmeta.labeler import default_gazetteer_path

    with open(default_gazetteer_path(), encoding="utf-8") as fh:
        raw = json.load(fh)
    alt = tmp_path / "gazetteer.json"
    alt.write_text(json.dumps(raw))
    monkeypatch.setenv("MEDMETA_GAZETTEER", str(alt))
    g = load_gazetteer()
    assert label_report("No pneumothorax.", g)[Condition.PNEUMOTHORAX] is LabelState.NEGATIVE
