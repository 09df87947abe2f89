"""Rule-based condition labeler over a curated phrase gazetteer.

Matching is purely lexical: condition phrases are located in each
tokenized sentence (longest phrase first), then trigger scopes decide
the state of every mention.

Scope conventions:

* A pre-negation trigger opens a forward scope over the next six
  tokens of its sentence, truncated at the clause boundaries ``but``,
  ``although``, ``however``.  A mention whose first token falls inside
  the scope is negated.
* A post-negation trigger (``was removed``, ``has resolved``) opens the
  mirror-image backward scope over the preceding six tokens.
* Uncertainty triggers open forward scopes with the same truncation.

When a mention sits in both an uncertainty and a negation scope the
uncertainty reading wins.  Hedged negations like ``no definite X``
still come out Negative because ``definite`` is not an uncertainty
trigger; the hedge only softens the wording, not the claim.
"""

from __future__ import annotations

import enum
import json
import os
from importlib import resources

from .textops import CONJUNCTION_BOUNDARIES, TokenSeq, split_sentences, tokenize

NEGATION_SCOPE_TOKENS = 6


class Condition(enum.Enum):
    ENLARGED_CARDIOMEDIASTINUM = "enlarged_cardiomediastinum"
    CARDIOMEGALY = "cardiomegaly"
    LUNG_OPACITY = "lung_opacity"
    LUNG_LESION = "lung_lesion"
    EDEMA = "edema"
    CONSOLIDATION = "consolidation"
    PNEUMONIA = "pneumonia"
    ATELECTASIS = "atelectasis"
    PNEUMOTHORAX = "pneumothorax"
    PLEURAL_EFFUSION = "pleural_effusion"
    PLEURAL_OTHER = "pleural_other"
    FRACTURE = "fracture"
    SUPPORT_DEVICES = "support_devices"
    NO_FINDING = "no_finding"


class LabelState(enum.Enum):
    BLANK = "blank"
    POSITIVE = "positive"
    NEGATIVE = "negative"
    UNCERTAIN = "uncertain"


# Merge precedence when one condition is mentioned more than once.
_STATE_RANK = {LabelState.POSITIVE: 3, LabelState.UNCERTAIN: 2, LabelState.NEGATIVE: 1}

LabelVector = dict


class InvalidGazetteer(Exception):
    """Raised when a gazetteer file violates its structural contract."""


class Gazetteer:
    """Condition phrases plus negation and uncertainty trigger sets.

    Data lives in a versioned JSON file so the phrase inventory can be
    extended without touching code.
    """

    def __init__(self, conditions, negation_pre, negation_post, uncertainty, version=1):
        self.version = version
        self.conditions: dict[Condition, tuple[str, ...]] = conditions
        self.negation_pre: tuple[str, ...] = tuple(negation_pre)
        self.negation_post: tuple[str, ...] = tuple(negation_post)
        self.uncertainty: tuple[str, ...] = tuple(uncertainty)
        self._validate()
        self._phrase_index = _TokenPhraseIndex(
            (tuple(tokenize(p)), cond) for cond, phrases in sorted(conditions.items(), key=lambda kv: kv[0].value) for p in phrases
        )
        self._pre_index = _TokenPhraseIndex((tuple(tokenize(p)), None) for p in self.negation_pre)
        self._post_index = _TokenPhraseIndex((tuple(tokenize(p)), None) for p in self.negation_post)
        self._unc_index = _TokenPhraseIndex((tuple(tokenize(p)), None) for p in self.uncertainty)

    def _validate(self) -> None:
        for cond in Condition:
            phrases = self.conditions.get(cond)
            if not phrases:
                raise InvalidGazetteer(f"condition {cond.value!r} has no phrases")
            if any(not p.strip() for p in phrases):
                raise InvalidGazetteer(f"condition {cond.value!r} has a blank phrase")
        negs = set(self.negation_pre) | set(self.negation_post)
        overlap = negs & set(self.uncertainty)
        if overlap:
            raise InvalidGazetteer(f"triggers in both negation and uncertainty sets: {sorted(overlap)}")

    def phrases_for(self, condition: Condition) -> tuple[str, ...]:
        return tuple(self.conditions[condition])


class _TokenPhraseIndex:
    """Token-sequence phrase matcher, longest match first."""

    def __init__(self, entries):
        self._by_first: dict[str, list[tuple[tuple[str, ...], object]]] = {}
        for tokens, payload in entries:
            if not tokens:
                continue
            self._by_first.setdefault(tokens[0], []).append((tokens, payload))
        for options in self._by_first.values():
            options.sort(key=lambda e: (-len(e[0]), e[0]))

    def match_at(self, tokens: TokenSeq, i: int):
        """Longest (phrase_tokens, payload) starting at index i, or None."""
        for phrase, payload in self._by_first.get(tokens[i], ()):
            if tuple(tokens[i : i + len(phrase)]) == phrase:
                return phrase, payload
        return None

    def find_all(self, tokens: TokenSeq) -> list[tuple[int, int, object]]:
        """Non-overlapping (start, end, payload) matches, left to right."""
        out = []
        i = 0
        n = len(tokens)
        while i < n:
            hit = self.match_at(tokens, i)
            if hit is not None:
                phrase, payload = hit
                out.append((i, i + len(phrase), payload))
                i += len(phrase)
            else:
                i += 1
        return out


def default_gazetteer_path() -> str:
    return str(resources.files("medmeta").joinpath("data/gazetteer.json"))


def load_gazetteer(path=None) -> Gazetteer:
    """Load a gazetteer JSON file, defaulting to the packaged one.

    The MEDMETA_GAZETTEER environment variable, when set, overrides the
    default path (but never an explicit ``path`` argument).
    """
    if path is None:
        path = os.environ.get("MEDMETA_GAZETTEER") or default_gazetteer_path()
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict) or "conditions" not in raw:
        raise InvalidGazetteer(f"{path}: missing conditions table")
    conditions: dict[Condition, tuple[str, ...]] = {}
    for name, phrases in raw["conditions"].items():
        try:
            cond = Condition(name)
        except ValueError as exc:
            raise InvalidGazetteer(f"{path}: unknown condition {name!r}") from exc
        if not isinstance(phrases, list):
            raise InvalidGazetteer(f"{path}: phrases for {name!r} must be a list")
        conditions[cond] = tuple(phrases)
    return Gazetteer(
        conditions=conditions,
        negation_pre=raw.get("negation_triggers", ()),
        negation_post=raw.get("post_negation_triggers", ()),
        uncertainty=raw.get("uncertainty_triggers", ()),
        version=raw.get("version", 1),
    )


def detect_negation_scopes(sentence_tokens: TokenSeq, gazetteer: Gazetteer) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Forward scopes of the pre-negation triggers in one sentence.

    Returns (trigger_span, scope_span) pairs with half-open token
    index ranges.  Each scope covers up to six tokens after its
    trigger, stopping at the sentence end or at a clause boundary.
    """
    scopes = []
    for start, end, _ in gazetteer._pre_index.find_all(sentence_tokens):
        stop = min(end + NEGATION_SCOPE_TOKENS, len(sentence_tokens))
        for j in range(end, stop):
            if sentence_tokens[j] in CONJUNCTION_BOUNDARIES:
                stop = j
                break
        scopes.append(((start, end), (end, stop)))
    return scopes


def _backward_scopes(sentence_tokens: TokenSeq, gazetteer: Gazetteer) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    scopes = []
    for start, end, _ in gazetteer._post_index.find_all(sentence_tokens):
        lo = max(start - NEGATION_SCOPE_TOKENS, 0)
        for j in range(start - 1, lo - 1, -1):
            if sentence_tokens[j] in CONJUNCTION_BOUNDARIES:
                lo = j + 1
                break
        scopes.append(((start, end), (lo, start)))
    return scopes


def _uncertainty_scopes(sentence_tokens: TokenSeq, gazetteer: Gazetteer) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    scopes = []
    for start, end, _ in gazetteer._unc_index.find_all(sentence_tokens):
        stop = min(end + NEGATION_SCOPE_TOKENS, len(sentence_tokens))
        for j in range(end, stop):
            if sentence_tokens[j] in CONJUNCTION_BOUNDARIES:
                stop = j
                break
        scopes.append(((start, end), (end, stop)))
    return scopes


def _in_any_scope(position: int, scopes) -> bool:
    return any(lo <= position < hi for _, (lo, hi) in scopes)


def mention_states(text: str, gazetteer: Gazetteer) -> list[tuple[int, Condition, str, LabelState]]:
    """Every condition mention with its resolved state.

    Returns (sentence_index, condition, matched_phrase, state) tuples in
    reading order; the phrase is the matched token run joined with
    single spaces.  Unlike :func:`sentence_states` nothing is merged,
    so repeated mentions of one condition all appear.
    """
    out: list[tuple[int, Condition, str, LabelState]] = []
    for si, sentence in enumerate(split_sentences(text)):
        tokens = tokenize(sentence)
        neg = detect_negation_scopes(tokens, gazetteer) + _backward_scopes(tokens, gazetteer)
        unc = _uncertainty_scopes(tokens, gazetteer)
        for start, end, cond in gazetteer._phrase_index.find_all(tokens):
            if cond is Condition.NO_FINDING:
                state = LabelState.POSITIVE
            elif _in_any_scope(start, unc):
                state = LabelState.UNCERTAIN
            elif _in_any_scope(start, neg):
                state = LabelState.NEGATIVE
            else:
                state = LabelState.POSITIVE
            out.append((si, cond, " ".join(tokens[start:end]), state))
    return out


def sentence_states(text: str, gazetteer: Gazetteer) -> list[dict]:
    """Per-sentence condition states, one dict per sentence.

    NO_FINDING appears in a sentence dict (as POSITIVE) only where a
    normal-statement phrase matched; the report-level rule lives in
    :func:`label_report`.
    """
    states: list[dict] = [{} for _ in split_sentences(text)]
    for si, cond, _phrase, state in mention_states(text, gazetteer):
        prev = states[si].get(cond)
        if prev is None or _STATE_RANK[state] > _STATE_RANK[prev]:
            states[si][cond] = state
    return states


def label_report(text: str, gazetteer: Gazetteer) -> LabelVector:
    """Label one report with a state for each of the 14 conditions.

    Sentence states merge with precedence Positive > Uncertain >
    Negative; unmentioned conditions stay Blank.  NO_FINDING turns
    Positive only when every other condition is Blank or Negative and
    the report makes at least one explicit normal claim, either a
    normal-statement phrase or a negated condition mention.
    """
    vector: LabelVector = {cond: LabelState.BLANK for cond in Condition}
    normal_statement = False
    for sentence in sentence_states(text, gazetteer):
        for cond, state in sentence.items():
            if cond is Condition.NO_FINDING:
                normal_statement = True
                continue
            prev = vector[cond]
            if prev is LabelState.BLANK or _STATE_RANK[state] > _STATE_RANK[prev]:
                vector[cond] = state

    others = [vector[c] for c in Condition if c is not Condition.NO_FINDING]
    all_clear = all(s in (LabelState.BLANK, LabelState.NEGATIVE) for s in others)
    has_negative = any(s is LabelState.NEGATIVE for s in others)
    if all_clear and (normal_statement or has_negative):
        vector[Condition.NO_FINDING] = LabelState.POSITIVE
    return vector


def label_f1(gt: LabelVector, me: LabelVector) -> float:
    """Micro-averaged F1 over the non-Blank label assignments.

    A condition counts as a true positive when both vectors carry the
    same non-Blank state.  Two all-Blank vectors score 1.0, there is
    nothing to retrieve and nothing spurious.
    """
    tp = fp = fn = 0
    for cond in Condition:
        g = gt.get(cond, LabelState.BLANK)
        m = me.get(cond, LabelState.BLANK)
        if g is LabelState.BLANK and m is LabelState.BLANK:
            continue
        if g == m:
            tp += 1
            continue
        if m is not LabelState.BLANK:
            fp += 1
        if g is not LabelState.BLANK:
            fn += 1
    denominator = 2 * tp + fp + fn
    if denominator == 0:
        return 1.0
    return 2 * tp / denominator
