"""Native text metrics: BLEU, ROUGE-L, METEOR, label F1, entity-graph F1.

Every scorer maps a (reference, candidate) text pair into [0, 1] and
returns exactly 1.0 when the two texts are identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .labeler import Condition, Gazetteer, label_f1, label_report
from .textops import lcs_length, ngrams, porter_stem, sentence_spans, tokenize

BLEU_MAX_ORDER = 4


class InvalidGraph(Exception):
    """Raised when relation endpoints do not reference existing entities."""


@dataclass(frozen=True)
class MetricScore:
    """One metric's value for one report pair."""

    metric_id: str
    pair_id: str
    value: float

    def __post_init__(self):
        if math.isnan(self.value) or not 0.0 <= self.value <= 1.0:
            raise ValueError(f"score {self.value!r} for pair {self.pair_id!r} is outside [0, 1]")


def bleu(reference: str, candidate: str) -> float:
    """Sentence-level BLEU with clipped n-gram precisions up to order 4.

    Orders longer than the candidate are skipped, so identical texts
    score exactly 1.0 at any length.  A populated order with zero
    matches is smoothed to 1 / (2 * candidate_length).  Brevity
    penalty: min(1, e^(1 - r/c)).  An empty candidate scores 0.
    """
    ref = tokenize(reference)
    cand = tokenize(candidate)
    if not cand:
        return 0.0
    c = len(cand)
    r = len(ref)
    epsilon = 1.0 / (2.0 * c)
    log_sum = 0.0
    orders = min(BLEU_MAX_ORDER, c)
    for n in range(1, orders + 1):
        cand_counts = ngrams(cand, n)
        ref_counts = ngrams(ref, n)
        matched = sum(min(count, ref_counts.get(gram, 0)) for gram, count in cand_counts.items())
        total = sum(cand_counts.values())
        precision = matched / total if matched else epsilon
        log_sum += math.log(precision)
    brevity = min(1.0, math.exp(1.0 - r / c))
    return brevity * math.exp(log_sum / orders)


def rouge_l(reference: str, candidate: str) -> float:
    """ROUGE-L F1 over token longest common subsequences.

    R = LCS/|ref|, P = LCS/|cand|, F1 with beta = 1.  Two empty texts
    score 1.0; a zero-length LCS scores 0.
    """
    ref = tokenize(reference)
    cand = tokenize(candidate)
    if not ref and not cand:
        return 1.0
    if not ref or not cand:
        return 0.0
    lcs = lcs_length(ref, cand)
    if lcs == 0:
        return 0.0
    recall = lcs / len(ref)
    precision = lcs / len(cand)
    return 2 * precision * recall / (precision + recall)


def _meteor_alignment(ref: list[str], cand: list[str]) -> list[tuple[int, int]]:
    # Stage 1 matches exact surface forms, stage 2 matches Porter stems
    # on the leftovers.  Candidate tokens scan left to right and take
    # the leftmost unmatched reference token, which fixes all ties.
    matched_ref = [False] * len(ref)
    pairs: list[tuple[int, int]] = []
    unmatched_cand: list[int] = []
    for ci, tok in enumerate(cand):
        for ri, rtok in enumerate(ref):
            if not matched_ref[ri] and rtok == tok:
                matched_ref[ri] = True
                pairs.append((ci, ri))
                break
        else:
            unmatched_cand.append(ci)
    ref_stems = [porter_stem(t) for t in ref]
    for ci in unmatched_cand:
        stem = porter_stem(cand[ci])
        for ri in range(len(ref)):
            if not matched_ref[ri] and ref_stems[ri] == stem:
                matched_ref[ri] = True
                pairs.append((ci, ri))
                break
    pairs.sort()
    return pairs


def meteor(reference: str, candidate: str) -> float:
    """Unigram METEOR with exact then stem matching.

    Fmean = 10PR / (R + 9P); the fragmentation penalty is
    0.5 * (chunks / matches)^3, where a chunk is a maximal run of
    matches contiguous in both texts.  No matches scores 0.
    """
    ref = tokenize(reference)
    cand = tokenize(candidate)
    if not ref or not cand:
        return 1.0 if not ref and not cand else 0.0
    pairs = _meteor_alignment(ref, cand)
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    fmean = 10 * precision * recall / (recall + 9 * precision)
    chunks = 1
    for (pc, pr), (cc, cr) in zip(pairs, pairs[1:]):
        if cc != pc + 1 or cr != pr + 1:
            chunks += 1
    penalty = 0.5 * (chunks / m) ** 3
    return fmean * (1.0 - penalty)


def chexpert_f1(reference: str, candidate: str, gazetteer: Gazetteer) -> float:
    """Micro F1 between the label vectors of the two texts."""
    return label_f1(label_report(reference, gazetteer), label_report(candidate, gazetteer))


# ---------------------------------------------------------------------------
# Entity graphs

# Anatomy phrases recognized as graph nodes.  Multi-word phrases match
# before their sub-phrases.
ANATOMY_PHRASES = (
    "right lower lobe",
    "left lower lobe",
    "right upper lobe",
    "left upper lobe",
    "right middle lobe",
    "right base",
    "left base",
    "lung bases",
    "right apex",
    "left apex",
    "costophrenic angle",
    "right hemidiaphragm",
    "left hemidiaphragm",
    "hemidiaphragm",
    "diaphragm",
    "carina",
    "lingula",
    "mediastinum",
    "right hilum",
    "left hilum",
    "svc",
    "thoracic spine",
    "spine",
    "sternum",
    "trachea",
    "stomach",
    "retrocardiac region",
    "chest wall",
    "upper quadrant",
)

OBSERVATION_LABEL = "obs"
ANATOMY_LABEL = "anat"
LOCATED_AT = "located_at"


@dataclass(frozen=True)
class EntityGraph:
    """Entities as (span_text, label) plus located_at relations.

    Entities are stored in extraction order; relations reference them
    by position.  Comparison semantics are set-based.
    """

    entities: tuple[tuple[str, str], ...]
    relations: tuple[tuple[int, int, str], ...]

    def __post_init__(self):
        n = len(self.entities)
        for head, tail, label in self.relations:
            if not (0 <= head < n and 0 <= tail < n):
                raise InvalidGraph(f"relation ({head}, {tail}, {label!r}) references a missing entity")

    def resolved_relations(self) -> set[tuple[tuple[str, str], tuple[str, str], str]]:
        return {(self.entities[h], self.entities[t], label) for h, t, label in self.relations}


def _component_f1(gt: set, me: set) -> float:
    if not gt and not me:
        return 1.0
    tp = len(gt & me)
    fp = len(me - gt)
    fn = len(gt - me)
    denominator = 2 * tp + fp + fn
    if denominator == 0:
        return 1.0
    return 2 * tp / denominator


def graph_f1(gt: EntityGraph, me: EntityGraph) -> float:
    """Mean of entity F1 and relation F1 between two graphs.

    Entities match on exact (span_text, label); relations on resolved
    endpoints plus relation label.  Two empty graphs score 1.0.
    """
    entity_f1 = _component_f1(set(gt.entities), set(me.entities))
    relation_f1 = _component_f1(gt.resolved_relations(), me.resolved_relations())
    return (entity_f1 + relation_f1) / 2.0


_ANATOMY_INDEX: dict[str, list[tuple[str, ...]]] = {}
for _phrase in ANATOMY_PHRASES:
    _tokens = tuple(tokenize(_phrase))
    _ANATOMY_INDEX.setdefault(_tokens[0], []).append(_tokens)
for _options in _ANATOMY_INDEX.values():
    _options.sort(key=lambda t: (-len(t), t))


def _find_anatomy(tokens: list[str]) -> list[tuple[int, int]]:
    spans = []
    i = 0
    n = len(tokens)
    while i < n:
        matched = None
        for phrase in _ANATOMY_INDEX.get(tokens[i], ()):
            if tuple(tokens[i : i + len(phrase)]) == phrase:
                matched = len(phrase)
                break
        if matched:
            spans.append((i, i + matched))
            i += matched
        else:
            i += 1
    return spans


def extract_graph(text: str, gazetteer: Gazetteer) -> EntityGraph:
    """Entity graph of one report.

    Observation entities are gazetteer condition mentions (normal
    statements excluded); anatomy entities come from a fixed phrase
    list.  Each observation links located_at to the token-nearest
    anatomy entity of its own sentence, earlier one on ties.
    """
    entities: list[tuple[str, str]] = []
    entity_index: dict[tuple[str, str], int] = {}
    relations: list[tuple[int, int, str]] = []

    def intern(span_text: str, label: str) -> int:
        key = (span_text, label)
        if key not in entity_index:
            entity_index[key] = len(entities)
            entities.append(key)
        return entity_index[key]

    for a, b in sentence_spans(text):
        tokens = tokenize(text[a:b])
        obs = [
            (start, end)
            for start, end, cond in gazetteer._phrase_index.find_all(tokens)
            if cond is not Condition.NO_FINDING
        ]
        anat = _find_anatomy(tokens)
        anat_ids = [intern(" ".join(tokens[s:e]), ANATOMY_LABEL) for s, e in anat]
        for start, end in obs:
            obs_id = intern(" ".join(tokens[start:end]), OBSERVATION_LABEL)
            if anat:
                best = min(range(len(anat)), key=lambda k: (abs(anat[k][0] - start), anat[k][0]))
                relation = (obs_id, anat_ids[best], LOCATED_AT)
                if relation not in relations:
                    relations.append(relation)
    return EntityGraph(entities=tuple(entities), relations=tuple(relations))


def graph_similarity(reference: str, candidate: str, gazetteer: Gazetteer) -> float:
    """graph_f1 between the extracted graphs of two texts."""
    return graph_f1(extract_graph(reference, gazetteer), extract_graph(candidate, gazetteer))
