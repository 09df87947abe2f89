"""Seeded rule-driven rewriters that build GT-ME pairs and severity fixtures.

Every rewrite is data-driven: ``rules/<aspect>.json`` holds the phrase
maps, ladders, templates, and match specifications, while this module
interprets them.  All randomness flows through ``random.Random`` seeded
from the caller, so identical inputs reproduce byte-identical outputs.

Conventions pinned here:

* Site selection is uniform over the applicable sites sorted by
  character offset (ties broken by rule id, then target text).
* Significant pairs keep the full report text; insignificant pairs are
  trimmed to the edited sentence plus at most one neighbor (the
  preceding sentence when one exists) before the edit is applied, so
  ``edited_span`` always refers to the pair's own gt text.
* In-place edits report a ``(char_start, char_end)`` span covering the
  whole diff; sentence insertions and deletions report the sentence
  index instead.
* Measurement rewrites keep the original precision (integers stay
  integers); the insignificant jitter falls back to one extra decimal
  when rounding would erase the change.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, replace
from importlib import resources

from .corpus import (
    HIGH_IMPACT_ASPECTS,
    PAIRS_PER_CELL,
    Aspect,
    ErrorType,
    PairDataset,
    Report,
    ReportPair,
    Significance,
    SeverityFixture,
)
from .labeler import (
    Condition,
    Gazetteer,
    LabelState,
    label_report,
    load_gazetteer,
    mention_states,
    sentence_states,
)
from .textops import CONJUNCTION_BOUNDARIES, sentence_spans, tokenize

_MAX_TRIES = 16

# Kinds whose edits are character splices (edited_span is a char span).
_CHAR_KINDS = frozenset(
    {"phrase_swap", "phrase_swap_all", "ladder_shift", "measurement_scale", "negation_hedge", "polarity_flip", "scramble"}
)
_ALL_KINDS = _CHAR_KINDS | frozenset(
    {"sentence_delete", "sentence_insert", "contradiction_append", "hedge_append", "typo_inject", "block_swap"}
)

# Appended hedges and contradictions need a noun-like phrase; mentions
# matched through verbal gazetteer phrases cannot be slotted into the
# sentence templates.
_VERB_PHRASE_MARKERS = (" is ", " are ")

_WORD_RE = re.compile(r"[A-Za-z0-9]+(?:[-.'][A-Za-z0-9]+)*")
_MEASUREMENT_RE = re.compile(r"\b(\d+(?:\.\d+)?)([ -])(cm|mm)\b")


class PerturbError(Exception):
    """Base class for perturbation failures."""


class InvalidRulePack(PerturbError):
    """A rules/<aspect>.json file violates the pack schema."""


class NoMatchingSite(PerturbError):
    def __init__(self, report_id: str, aspect: Aspect, error_type: ErrorType, significance: Significance):
        self.report_id = report_id
        self.aspect = aspect
        self.error_type = error_type
        self.significance = significance
        super().__init__(
            f"report {report_id!r} has no applicable site for "
            f"{aspect.value}/{error_type.value}/{significance.value}"
        )


class QuotaUnfillable(PerturbError):
    def __init__(self, cells):
        self.cells = list(cells)
        names = ", ".join(f"{a.value}/{e.value}/{s.value}" for a, e, s in self.cells)
        super().__init__(f"cells without enough sites: {names}")


class InsufficientSites(PerturbError):
    def __init__(self, report_id: str, group: int):
        self.report_id = report_id
        self.group = group
        super().__init__(f"report {report_id!r} cannot supply severity group {group}")


@dataclass(frozen=True)
class PerturbationRule:
    """One data-driven rewrite, bound to a single dataset cell."""

    rule_id: str
    aspect: Aspect
    error_type: ErrorType
    significance: Significance
    pattern: dict
    rewrite: dict
    explanation_template: str

    @property
    def kind(self) -> str:
        return self.pattern["kind"]


@dataclass(frozen=True)
class PerturbationOutcome:
    pair: ReportPair
    edited_span: object  # (char_start, char_end) for in-place edits, sentence index for insert/delete
    rule_id: str


# ---------------------------------------------------------------------------
# rule packs


def rules_path(aspect: Aspect) -> str:
    return str(resources.files("medmeta").joinpath(f"rules/{aspect.value}.json"))


_PACKS: dict[Aspect, tuple[PerturbationRule, ...]] = {}
_PACK_RAW: dict[Aspect, dict] = {}


def _raw_pack(aspect: Aspect) -> dict:
    if aspect not in _PACK_RAW:
        with open(rules_path(aspect), encoding="utf-8") as fh:
            _PACK_RAW[aspect] = json.load(fh)
    return _PACK_RAW[aspect]


def load_rule_pack(aspect: Aspect) -> tuple[PerturbationRule, ...]:
    """Parse and validate the rule pack for one aspect (cached)."""
    if aspect in _PACKS:
        return _PACKS[aspect]
    raw = _raw_pack(aspect)
    if not isinstance(raw, dict) or raw.get("aspect") != aspect.value or not isinstance(raw.get("rules"), list):
        raise InvalidRulePack(f"{aspect.value}: pack must be an object with matching aspect and a rules list")
    rules = []
    seen_ids = set()
    for entry in raw["rules"]:
        try:
            rule = PerturbationRule(
                rule_id=entry["id"],
                aspect=aspect,
                error_type=ErrorType(entry["error_type"]),
                significance=Significance(entry["significance"]),
                pattern=dict(entry["pattern"]),
                rewrite=dict(entry.get("rewrite", {})),
                explanation_template=entry.get("explanation", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidRulePack(f"{aspect.value}: malformed rule entry: {exc}") from exc
        if rule.kind not in _ALL_KINDS:
            raise InvalidRulePack(f"{aspect.value}: rule {rule.rule_id!r} has unknown kind {rule.kind!r}")
        if rule.rule_id in seen_ids:
            raise InvalidRulePack(f"{aspect.value}: duplicate rule id {rule.rule_id!r}")
        seen_ids.add(rule.rule_id)
        rules.append(rule)
    _PACKS[aspect] = tuple(rules)
    return _PACKS[aspect]


def fixture_paraphrases() -> dict[str, str]:
    """Style paraphrase table used by severity group 0."""
    table = _raw_pack(Aspect.STYLISTIC_VARIATION).get("fixture_paraphrases")
    if not isinstance(table, dict) or not table:
        raise InvalidRulePack("stylistic_variation: missing fixture_paraphrases table")
    return dict(table)


_DEFAULT_GAZ: Gazetteer | None = None


def _default_gazetteer() -> Gazetteer:
    global _DEFAULT_GAZ
    if _DEFAULT_GAZ is None:
        _DEFAULT_GAZ = load_gazetteer()
    return _DEFAULT_GAZ


def _derive_seed(seed: int, *parts) -> int:
    text = ":".join([str(seed), *map(str, parts)])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


# ---------------------------------------------------------------------------
# text helpers


def _sentences(text: str) -> tuple[list[tuple[int, int]], list[str]]:
    spans = sentence_spans(text)
    return spans, [text[a:b] for a, b in spans]


def _sentence_index_at(spans, position: int) -> int:
    for i, (a, b) in enumerate(spans):
        if a <= position < b:
            return i
    return len(spans) - 1


def _trim_window(text: str, si: int) -> tuple[str, list[int]]:
    """Sentence ``si`` plus at most one neighbor, preceding preferred."""
    spans, sents = _sentences(text)
    if len(sents) == 1:
        return sents[0], [si]
    idxs = [si - 1, si] if si > 0 else [si, si + 1]
    return " ".join(sents[i] for i in idxs), idxs


def _match_case(orig: str, repl: str) -> str:
    if orig[:1].isupper() and repl[:1].islower():
        return repl[0].upper() + repl[1:]
    return repl


def _splice(text: str, start: int, end: int, repl: str) -> str:
    return text[:start] + repl + text[end:]


def _append_sentence(text: str, sentence: str) -> str:
    base = text.rstrip()
    if base and base[-1] not in ".!?":
        base += "."
    return base + " " + sentence


def _map_regex(rule: PerturbationRule) -> re.Pattern:
    key = (rule.rule_id, "map")
    pat = _REGEX_CACHE.get(key)
    if pat is None:
        keys = sorted(rule.rewrite["map"], key=len, reverse=True)
        pat = re.compile(r"\b(" + "|".join(re.escape(k) for k in keys) + r")\b", re.IGNORECASE)
        _REGEX_CACHE[key] = pat
    return pat


_REGEX_CACHE: dict = {}


def _word_spans(text: str) -> list[tuple[str, int, int]]:
    return [(m.group(0).lower(), m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def _covered_word_indices(words: list[str], gazetteer: Gazetteer) -> set[int]:
    covered: set[int] = set()
    for index in (gazetteer._phrase_index, gazetteer._pre_index, gazetteer._post_index, gazetteer._unc_index):
        for start, end, _ in index.find_all(words):
            covered.update(range(start, end))
    return covered


def _trigger_tokens(gazetteer: Gazetteer) -> frozenset[str]:
    key = id(gazetteer)
    toks = _TRIGGER_CACHE.get(key)
    if toks is None:
        bag: set[str] = set(CONJUNCTION_BOUNDARIES)
        for phrase in (*gazetteer.negation_pre, *gazetteer.negation_post, *gazetteer.uncertainty):
            bag.update(tokenize(phrase))
        toks = frozenset(bag)
        _TRIGGER_CACHE[key] = toks
    return toks


_TRIGGER_CACHE: dict = {}


def _eligible_typo_words(text: str, gazetteer: Gazetteer, min_length: int) -> list[tuple[str, int, int]]:
    words = _word_spans(text)
    covered = _covered_word_indices([w for w, _, _ in words], gazetteer)
    triggers = _trigger_tokens(gazetteer)
    out = []
    for i, (w, a, b) in enumerate(words):
        if len(w) < min_length or not w.isalpha():
            continue
        if i in covered or w in triggers:
            continue
        out.append((w, a, b))
    return out


def _typo(word: str, rng: random.Random) -> str:
    interior = range(1, len(word) - 1)
    ops = []
    if any(word[i] != word[i + 1] for i in interior):
        ops.append("transpose")
    ops.extend(["drop", "double"])
    op = rng.choice(ops)
    if op == "transpose":
        spots = [i for i in interior if word[i] != word[i + 1]]
        i = rng.choice(spots)
        return word[:i] + word[i + 1] + word[i] + word[i + 2 :]
    i = rng.choice(list(interior))
    if op == "drop":
        return word[:i] + word[i + 1 :]
    return word[:i] + word[i] + word[i:]


def has_polarity_contradiction(text: str, gazetteer: Gazetteer) -> bool:
    """True when two sentences assert opposite polarity for one condition."""
    seen: dict[Condition, list[tuple[int, LabelState]]] = {}
    for si, states in enumerate(sentence_states(text, gazetteer)):
        for cond, state in states.items():
            if cond is Condition.NO_FINDING or state not in (LabelState.POSITIVE, LabelState.NEGATIVE):
                continue
            for prev_si, prev_state in seen.get(cond, ()):
                if prev_si != si and prev_state is not state:
                    return True
            seen.setdefault(cond, []).append((si, state))
    return False


def _final_sentence_contradicts(text: str, gazetteer: Gazetteer) -> bool:
    """True when the last sentence opposes an earlier one on some condition.

    Stricter than :func:`has_polarity_contradiction`: a report that already
    mixes polarities (a removed device alongside a present one) must not
    let an inert appended sentence pass the guard.
    """
    states = sentence_states(text, gazetteer)
    if len(states) < 2:
        return False
    last = len(states) - 1
    for cond, state in states[last].items():
        if cond is Condition.NO_FINDING or state not in (LabelState.POSITIVE, LabelState.NEGATIVE):
            continue
        for si in range(last):
            prev = states[si].get(cond)
            if prev in (LabelState.POSITIVE, LabelState.NEGATIVE) and prev is not state:
                return True
    return False


# ---------------------------------------------------------------------------
# site discovery


def _find_sites(rule: PerturbationRule, text: str, gazetteer: Gazetteer) -> list[dict]:
    kind = rule.kind
    spans, sents = _sentences(text)
    sites: list[dict] = []

    if kind in ("phrase_swap", "phrase_swap_all"):
        mapping = rule.rewrite["map"]
        matches = list(_map_regex(rule).finditer(text))
        if kind == "phrase_swap_all":
            if matches:
                sites.append(
                    {
                        "start": matches[0].start(),
                        "end": matches[-1].end(),
                        "count": len(matches),
                        "order": (matches[0].start(), "all"),
                    }
                )
        else:
            for m in matches:
                orig = m.group(0)
                new = _match_case(orig, mapping[orig.lower()])
                sites.append({"start": m.start(), "end": m.end(), "orig": orig, "new": new, "order": (m.start(), new)})

    elif kind == "ladder_shift":
        for ladder in rule.rewrite["ladders"]:
            pat = _ladder_regex(rule.rule_id, ladder)
            index = {w: i for i, w in enumerate(ladder)}
            for m in pat.finditer(text):
                i = index[m.group(0).lower()]
                if rule.rewrite.get("adjacent"):
                    targets = [ladder[j] for j in (i - 1, i + 1) if 0 <= j < len(ladder)]
                else:
                    jump = rule.rewrite["min_jump"]
                    targets = [ladder[j] for j in range(len(ladder)) if abs(j - i) >= jump]
                for t in targets:
                    new = _match_case(m.group(0), t)
                    sites.append({"start": m.start(), "end": m.end(), "orig": m.group(0), "new": new, "order": (m.start(), new)})

    elif kind == "measurement_scale":
        for m in _MEASUREMENT_RE.finditer(text):
            numeral = m.group(1)
            value = float(numeral)
            precision = len(numeral.split(".")[1]) if "." in numeral else 0
            if "factors" in rule.rewrite:
                options = [value * f for f in rule.rewrite["factors"]]
            else:
                rel = rule.rewrite["relative"]
                options = [value * (1.0 + rel), value * (1.0 - rel)]
            for scaled in options:
                new = f"{scaled:.{precision}f}" if precision else str(round(scaled))
                if new == numeral:
                    new = f"{scaled:.{precision + 1}f}"
                sites.append(
                    {"start": m.start(1), "end": m.end(1), "orig": numeral, "new": new, "order": (m.start(1), new)}
                )

    elif kind == "negation_hedge":
        hedge = rule.rewrite["hedge"]
        for m in _map_regex(rule).finditer(text):
            new = _match_case(m.group(0), rule.rewrite["map"][m.group(0).lower()])
            sites.append({"start": m.start(), "end": m.end(), "orig": m.group(0), "new": new, "order": (m.start(), new)})
        for m in _bare_trigger_regex(rule, gazetteer).finditer(text):
            trigger = m.group(1)
            new = trigger + " " + hedge + m.group(0)[len(trigger) :]
            sites.append({"start": m.start(), "end": m.end(), "orig": m.group(0), "new": new, "order": (m.start(), new)})

    elif kind == "polarity_flip":
        mention_count: dict[int, int] = {}
        entries = mention_states(text, gazetteer)
        for si, _cond, _phrase, _state in entries:
            mention_count[si] = mention_count.get(si, 0) + 1
        for si, cond, phrase, state in entries:
            if cond is Condition.NO_FINDING or mention_count[si] != 1:
                continue
            if state is LabelState.NEGATIVE:
                template = rule.rewrite["positive_template"]
            elif state is LabelState.POSITIVE:
                template = rule.rewrite["negative_template"]
            else:
                continue
            new = template.format(phrase=phrase)
            new = new[0].upper() + new[1:]
            a, b = spans[si]
            sites.append(
                {"start": a, "end": b, "orig": sents[si], "new": new, "order": (a, new), "si": si}
            )

    elif kind == "scramble":
        min_tokens = rule.pattern.get("min_tokens", 5)
        for si, sent in enumerate(sents):
            if len(sent.rstrip(".!?").split()) >= min_tokens:
                a, b = spans[si]
                sites.append({"start": a, "end": b, "si": si, "order": (a, "")})

    elif kind == "typo_inject":
        min_count = rule.rewrite.get("min_count", 2)
        if len(_eligible_typo_words(text, gazetteer, rule.pattern.get("min_word_length", 4))) >= min_count:
            for si in range(len(sents)):
                a, b = spans[si]
                sites.append({"si": si, "order": (a, "")})

    elif kind == "block_swap":
        for si in range(len(sents) - 1):
            a, _ = spans[si]
            sites.append({"si": si, "order": (a, "")})

    elif kind == "sentence_delete":
        if len(sents) >= 2:
            for si, sent in enumerate(sents):
                if _sentence_matches(rule.pattern, sent, gazetteer):
                    a, b = spans[si]
                    sites.append({"si": si, "start": a, "end": b, "sentence": sent, "order": (a, "")})

    elif kind == "sentence_insert":
        labels = label_report(text, gazetteer)
        lowered = text.lower()
        for idx, template in enumerate(rule.rewrite["templates"]):
            if template["text"].lower() in lowered:
                continue
            blanks = template.get("conditions_blank", ())
            if any(labels[Condition(c)] is not LabelState.BLANK for c in blanks):
                continue
            sites.append({"template": template["text"], "order": (len(text) + idx, template["text"])})

    elif kind in ("contradiction_append", "hedge_append"):
        exclude = {Condition(c) for c in rule.rewrite.get("exclude_conditions", ())}
        wanted = (
            (LabelState.POSITIVE, LabelState.NEGATIVE) if kind == "contradiction_append" else (LabelState.POSITIVE,)
        )
        for si, cond, phrase, state in mention_states(text, gazetteer):
            if cond is Condition.NO_FINDING or cond in exclude or state not in wanted:
                continue
            if any(marker in f" {phrase} " for marker in _VERB_PHRASE_MARKERS):
                continue
            sites.append(
                {"si": si, "cond": cond, "phrase": phrase, "state": state, "order": (len(text) + si, phrase)}
            )

    sites.sort(key=lambda s: s["order"])
    return sites


def _ladder_regex(rule_id: str, ladder: list[str]) -> re.Pattern:
    key = (rule_id, tuple(ladder))
    pat = _REGEX_CACHE.get(key)
    if pat is None:
        words = sorted(ladder, key=len, reverse=True)
        pat = re.compile(r"\b(" + "|".join(re.escape(w) for w in words) + r")\b", re.IGNORECASE)
        _REGEX_CACHE[key] = pat
    return pat


def _bare_trigger_regex(rule: PerturbationRule, gazetteer: Gazetteer) -> re.Pattern:
    key = (rule.rule_id, "bare", id(gazetteer))
    pat = _REGEX_CACHE.get(key)
    if pat is None:
        triggers = rule.rewrite.get("immediate_triggers", ())
        phrases = sorted(
            {p for phrases in gazetteer.conditions.values() for p in phrases}, key=len, reverse=True
        )
        trig = "|".join(re.escape(t) for t in triggers)
        body = "|".join(re.escape(p) for p in phrases)
        pat = re.compile(rf"\b({trig})( (?:{body}))\b", re.IGNORECASE)
        _REGEX_CACHE[key] = pat
    return pat


def _sentence_matches(pattern: dict, sentence: str, gazetteer: Gazetteer) -> bool:
    lowered = sentence.lower()
    match_any = pattern.get("match_any", ())
    if match_any and not any(re.search(p, lowered) for p in match_any):
        return False
    also = pattern.get("also_match_any", ())
    if also and not any(re.search(p, lowered) for p in also):
        return False
    if any(re.search(p, lowered) for p in pattern.get("forbid_any", ())):
        return False
    has_condition = any(
        cond is not Condition.NO_FINDING for _, _, cond in gazetteer._phrase_index.find_all(tokenize(sentence))
    )
    if pattern.get("require_condition") and not has_condition:
        return False
    if pattern.get("forbid_condition") and has_condition:
        return False
    return True


# ---------------------------------------------------------------------------
# realization


def _realize(rule: PerturbationRule, site: dict, text: str, gazetteer: Gazetteer, rng: random.Random):
    """Produce (gt_text, me_text, edited_span, detail) or None to retry."""
    kind = rule.kind
    insilent = rule.significance is Significance.INSIGNIFICANT

    if kind in _CHAR_KINDS and kind != "scramble":
        if insilent:
            spans, _ = _sentences(text)
            window, _idxs = _trim_window(text, _sentence_index_at(spans, site["start"]))
            wsites = _find_sites(rule, window, gazetteer)
            if not wsites:
                return None
            wsite = wsites[rng.randrange(len(wsites))]
            return _apply_char(window, wsite)
        return _apply_char(text, site)

    if kind == "scramble":
        a, b = site["start"], site["end"]
        sentence = text[a:b]
        trailing = sentence[-1] if sentence[-1] in ".!?" else ""
        words = sentence.rstrip(".!?").split()
        shuffled = list(words)
        for _ in range(10):
            rng.shuffle(shuffled)
            if shuffled != words:
                break
        else:
            return None
        new = " ".join(shuffled) + trailing
        return text, _splice(text, a, b, new), (a, b), {"sentence": sentence}

    if kind == "typo_inject":
        window, _idxs = _trim_window(text, site["si"]) if insilent else (text, None)
        eligible = _eligible_typo_words(window, gazetteer, rule.pattern.get("min_word_length", 4))
        min_count = rule.rewrite.get("min_count", 2)
        max_count = rule.rewrite.get("max_count", 4)
        if len(eligible) < min_count:
            return None
        k = rng.randint(min_count, min(max_count, len(eligible)))
        chosen = sorted(rng.sample(range(len(eligible)), k))
        me = window
        for i in reversed(chosen):
            w, a, b = eligible[i]
            me = _splice(me, a, b, _typo(window[a:b].lower(), rng))
        hull = (eligible[chosen[0]][1], eligible[chosen[-1]][2])
        return window, me, hull, {"count": k}

    if kind == "block_swap":
        spans, sents = _sentences(text)
        si = site["si"]
        gt_text = sents[si] + " " + sents[si + 1]
        me_text = sents[si + 1] + " " + sents[si]
        return gt_text, me_text, (0, len(gt_text)), {}

    if kind == "sentence_delete":
        spans, sents = _sentences(text)
        si = site["si"]
        if insilent:
            window, idxs = _trim_window(text, si)
            if len(idxs) < 2:
                return None
            keep = [sents[i] for i in idxs if i != si]
            return window, " ".join(keep), idxs.index(si), {"sentence": sents[si]}
        a, b = spans[si]
        cut_end = b
        while cut_end < len(text) and text[cut_end].isspace():
            cut_end += 1
        me = text[:a] + text[cut_end:] if cut_end < len(text) else text[:a].rstrip()
        return text, me, si, {"sentence": sents[si]}

    if kind == "sentence_insert":
        template = site["template"]
        if insilent:
            spans, sents = _sentences(text)
            anchor = rng.randrange(len(sents))
            window, idxs = _trim_window(text, anchor)
            return window, _append_sentence(window, template), len(idxs), {"sentence": template}
        n = len(sentence_spans(text))
        return text, _append_sentence(text, template), n, {"sentence": template}

    if kind == "contradiction_append":
        phrase = rule.rewrite.get("phrase_aliases", {}).get(site["phrase"], site["phrase"])
        if site["state"] is LabelState.NEGATIVE:
            template = rule.rewrite.get("positive_templates", {}).get(site["cond"].value, rule.rewrite["positive_default"])
        else:
            template = rule.rewrite.get("negative_templates", {}).get(site["cond"].value, rule.rewrite["negative_default"])
        sentence = template.format(phrase=phrase)
        n = len(sentence_spans(text))
        return text, _append_sentence(text, sentence), n, {"sentence": sentence}

    if kind == "hedge_append":
        sentence = rule.rewrite["template"].format(phrase=site["phrase"])
        if insilent:
            window, idxs = _trim_window(text, site["si"])
            return window, _append_sentence(window, sentence), len(idxs), {"sentence": sentence}
        n = len(sentence_spans(text))
        return text, _append_sentence(text, sentence), n, {"sentence": sentence}

    raise InvalidRulePack(f"rule {rule.rule_id!r}: unhandled kind {kind!r}")


def _apply_char(text: str, site: dict):
    return text, _splice(text, site["start"], site["end"], site["new"]), (site["start"], site["end"]), {
        "orig": site.get("orig", ""),
        "new": site.get("new", ""),
    }


def _apply_swap_all(rule: PerturbationRule, text: str):
    mapping = rule.rewrite["map"]
    matches = list(_map_regex(rule).finditer(text))
    me = text
    for m in reversed(matches):
        me = _splice(me, m.start(), m.end(), _match_case(m.group(0), mapping[m.group(0).lower()]))
    span = (matches[0].start(), matches[-1].end())
    return text, me, span, {"count": len(matches)}


def _guard_ok(rule: PerturbationRule, gt_text: str, me_text: str, gazetteer: Gazetteer) -> bool:
    guard = rule.rewrite.get("guard")
    if guard is None:
        return True
    if guard == "label_equal":
        return label_report(gt_text, gazetteer) == label_report(me_text, gazetteer)
    if guard == "label_change":
        return label_report(gt_text, gazetteer) != label_report(me_text, gazetteer)
    if guard == "contradiction":
        return _final_sentence_contradicts(me_text, gazetteer)
    raise InvalidRulePack(f"rule {rule.rule_id!r}: unknown guard {guard!r}")


# ---------------------------------------------------------------------------
# public operations


def perturb(
    gt: Report,
    aspect: Aspect,
    error_type: ErrorType,
    significance: Significance,
    seed: int,
    *,
    gazetteer: Gazetteer | None = None,
    pair_id: str | None = None,
) -> PerturbationOutcome:
    """Apply one seeded rewrite from the requested cell to ``gt``.

    Raises :class:`NoMatchingSite` when no rule of the cell applies, or
    when every applicable site fails its semantic guard.
    """
    g = gazetteer or _default_gazetteer()
    rules = [
        r for r in load_rule_pack(aspect) if r.error_type is error_type and r.significance is significance
    ]
    rng = random.Random(seed)

    candidates: list[tuple[PerturbationRule, dict]] = []
    for rule in sorted(rules, key=lambda r: r.rule_id):
        for site in _find_sites(rule, gt.text, g):
            candidates.append((rule, site))
    candidates.sort(key=lambda rs: (rs[1]["order"], rs[0].rule_id))
    if not candidates:
        raise NoMatchingSite(gt.id, aspect, error_type, significance)

    for _ in range(_MAX_TRIES):
        rule, site = candidates[rng.randrange(len(candidates))]
        if rule.kind == "phrase_swap_all":
            built = _apply_swap_all(rule, gt.text)
        else:
            built = _realize(rule, site, gt.text, g, rng)
        if built is None:
            continue
        gt_text, me_text, span, detail = built
        if me_text == gt_text or not me_text.strip():
            continue
        if not _guard_ok(rule, gt_text, me_text, g):
            continue
        pid = pair_id or f"{gt.id}-{aspect.value}-{error_type.value}-{significance.value}-s{seed}"
        explanation = _render_explanation(rule.explanation_template, gt.id, detail)
        pair = ReportPair(
            pair_id=pid,
            gt=Report(id=f"{pid}.gt", text=gt_text, source=gt.source),
            me=Report(id=f"{pid}.me", text=me_text, source=gt.source),
            aspect=aspect,
            error_type=error_type,
            significance=significance,
            explanation=explanation,
        )
        return PerturbationOutcome(pair=pair, edited_span=span, rule_id=rule.rule_id)
    raise NoMatchingSite(gt.id, aspect, error_type, significance)


def _render_explanation(template: str, report_id: str, detail: dict) -> str:
    rendered = template.format(**detail) if template else ""
    return f"{report_id}: {rendered}" if rendered else report_id


# The eight aspects outside the high-impact four contribute ten pairs
# per significance through one designated error type each.
_CANONICAL_ERROR_TYPE = {
    Aspect.NEGATION: ErrorType.INACCURACY,
    Aspect.MODALITY: ErrorType.INACCURACY,
    Aspect.SIZE_DISTANCE: ErrorType.INACCURACY,
    Aspect.INTERNAL_CONTRADICTION: ErrorType.FABRICATION,
    Aspect.UNCERTAINTY: ErrorType.INACCURACY,
    Aspect.TERMINOLOGY: ErrorType.INACCURACY,
    Aspect.NOISE: ErrorType.INACCURACY,
    Aspect.STYLISTIC_VARIATION: ErrorType.INACCURACY,
}


def dataset_cells() -> list[tuple[Aspect, ErrorType, Significance]]:
    """The 32 generation cells, in emission order."""
    cells = []
    for aspect in Aspect:
        if aspect in HIGH_IMPACT_ASPECTS:
            for et in ErrorType:
                for sig in Significance:
                    cells.append((aspect, et, sig))
        else:
            for sig in Significance:
                cells.append((aspect, _CANONICAL_ERROR_TYPE[aspect], sig))
    return cells


def _fill_cell(
    reports: list[Report],
    seed: int,
    aspect: Aspect,
    error_type: ErrorType,
    significance: Significance,
    gazetteer: Gazetteer,
) -> list[ReportPair]:
    """One quota cell's pairs, or [] when no report offers a site.

    Rotates through the reports with per-attempt sub-seeds, keeping
    distinct (gt, me) texts; short cells repeat their pairs cyclically
    up to the quota.
    """
    cell_pairs: list[ReportPair] = []
    seen: set[tuple[str, str]] = set()
    attempts = 0
    max_attempts = 40 * PAIRS_PER_CELL
    while reports and len(cell_pairs) < PAIRS_PER_CELL and attempts < max_attempts:
        report = reports[attempts % len(reports)]
        sub = _derive_seed(seed, aspect.value, error_type.value, significance.value, attempts)
        attempts += 1
        try:
            outcome = perturb(report, aspect, error_type, significance, sub, gazetteer=gazetteer)
        except NoMatchingSite:
            continue
        key = (outcome.pair.gt.text, outcome.pair.me.text)
        if key in seen:
            continue
        seen.add(key)
        cell_pairs.append(outcome.pair)
    if not cell_pairs:
        return []
    base = len(cell_pairs)
    i = 0
    while len(cell_pairs) < PAIRS_PER_CELL:
        cell_pairs.append(cell_pairs[i % base])
        i += 1
    return cell_pairs


def generate_cell(
    reports: list[Report],
    seed: int,
    aspect: Aspect,
    error_type: ErrorType,
    significance: Significance,
    *,
    gazetteer: Gazetteer | None = None,
) -> PairDataset:
    """Quota-sized dataset for a single (aspect, error type, significance) cell."""
    g = gazetteer or _default_gazetteer()
    cell_pairs = _fill_cell(reports, seed, aspect, error_type, significance, g)
    if not cell_pairs:
        raise QuotaUnfillable([(aspect, error_type, significance)])
    return PairDataset(pairs=_renumber(cell_pairs))


def generate_dataset(reports: list[Report], seed: int, *, gazetteer: Gazetteer | None = None) -> PairDataset:
    """Fill the full composition quota from ``reports``, deterministically.

    Cells are filled independently with sub-seeds derived by hashing, so
    adding reports never reshuffles unrelated cells.  Within a cell,
    distinct (gt, me) texts are preferred; once attempts are exhausted
    the collected outcomes repeat to reach the quota.  Cells with no
    usable site at all are reported together via QuotaUnfillable.
    """
    g = gazetteer or _default_gazetteer()
    unfillable = []
    collected: list[ReportPair] = []
    for aspect, et, sig in dataset_cells():
        cell_pairs = _fill_cell(reports, seed, aspect, et, sig, g)
        if not cell_pairs:
            unfillable.append((aspect, et, sig))
            continue
        collected.extend(cell_pairs)
    if unfillable:
        raise QuotaUnfillable(unfillable)
    return PairDataset(pairs=_renumber(collected))


def _renumber(pairs: list[ReportPair]) -> list[ReportPair]:
    final: list[ReportPair] = []
    for n, pair in enumerate(pairs, start=1):
        pid = f"p{n:04d}"
        final.append(
            replace(
                pair,
                pair_id=pid,
                gt=replace(pair.gt, id=f"{pid}.gt"),
                me=replace(pair.me, id=f"{pid}.me"),
            )
        )
    return final


# ---------------------------------------------------------------------------
# severity fixtures


_FIXTURE_EDIT_ASPECTS = (
    Aspect.SEVERITY,
    Aspect.SIZE_DISTANCE,
    Aspect.LOCATION,
    Aspect.DESCRIPTION,
    Aspect.COMPARISON_PROGRESSION,
    Aspect.NEGATION,
    Aspect.UNCERTAINTY,
    Aspect.TERMINOLOGY,
    Aspect.MODALITY,
)

# Fixture edits stay within single-span rewrites so group 3 can apply
# three of them independently.
_FIXTURE_KINDS = frozenset({"phrase_swap", "ladder_shift", "measurement_scale", "negation_hedge", "polarity_flip"})


def _fixture_sites(text: str, significance: Significance, gazetteer: Gazetteer):
    pool = []
    for aspect in _FIXTURE_EDIT_ASPECTS:
        for rule in load_rule_pack(aspect):
            if rule.error_type is not ErrorType.INACCURACY or rule.significance is not significance:
                continue
            if rule.kind not in _FIXTURE_KINDS:
                continue
            for site in _find_sites(rule, text, gazetteer):
                pool.append((rule, site))
    pool.sort(key=lambda rs: (rs[1]["order"], rs[0].rule_id))
    return pool


def _apply_fixture_edit(text: str, pool, rng: random.Random, gazetteer: Gazetteer):
    for _ in range(_MAX_TRIES):
        rule, site = pool[rng.randrange(len(pool))]
        gt_text, me_text, _span, _detail = _apply_char(text, site)
        if me_text != gt_text and _guard_ok(rule, gt_text, me_text, gazetteer):
            return me_text
    return None


def _stylistic_rewrite(text: str) -> str:
    table = fixture_paraphrases()
    keys = sorted(table, key=len, reverse=True)
    pat = re.compile(r"\b(" + "|".join(re.escape(k) for k in keys) + r")\b", re.IGNORECASE)
    return pat.sub(lambda m: _match_case(m.group(0), table[m.group(0).lower()]), text)


def _contradiction_rule() -> PerturbationRule:
    for rule in load_rule_pack(Aspect.INTERNAL_CONTRADICTION):
        if rule.kind == "contradiction_append":
            return rule
    raise InvalidRulePack("internal_contradiction: no contradiction_append rule")


def _append_contradiction(text: str, gazetteer: Gazetteer) -> str | None:
    """Contradict the earliest determinate mention, negated claims first."""
    rule = _contradiction_rule()
    sites = _find_sites(rule, text, gazetteer)
    sites.sort(key=lambda s: (s["state"] is not LabelState.NEGATIVE, s["si"]))
    for site in sites:
        _gt, me_text, _span, _detail = _realize(rule, site, text, gazetteer, random.Random(0))
        if _final_sentence_contradicts(me_text, gazetteer):
            return me_text
    return None


def compose_severity_fixtures(
    reports: list[Report], seed: int, *, gazetteer: Gazetteer | None = None
) -> list[SeverityFixture]:
    """Grade each of four reports into variants of increasing damage.

    Group 0 rewrites style only; group 1 applies one insignificant
    factual edit; group 2 one significant edit; group 3 three
    span-disjoint significant edits; group 4 appends a sentence that
    contradicts an earlier claim on top of the group-0 text.
    """
    if len(reports) != 4:
        raise ValueError(f"severity fixtures need exactly 4 reports, got {len(reports)}")
    g = gazetteer or _default_gazetteer()
    fixtures = []
    for report in reports:
        rng = random.Random(_derive_seed(seed, "fixtures", report.id))
        text = report.text

        g0 = _stylistic_rewrite(text)
        if g0 == text or label_report(g0, g) != label_report(text, g):
            raise InsufficientSites(report.id, 0)

        insig_pool = _fixture_sites(text, Significance.INSIGNIFICANT, g)
        g1 = _apply_fixture_edit(text, insig_pool, rng, g) if insig_pool else None
        if g1 is None:
            raise InsufficientSites(report.id, 1)

        sig_pool = _fixture_sites(text, Significance.SIGNIFICANT, g)
        g2 = _apply_fixture_edit(text, sig_pool, rng, g) if sig_pool else None
        if g2 is None:
            raise InsufficientSites(report.id, 2)

        order = rng.sample(range(len(sig_pool)), len(sig_pool))
        chosen: list[dict] = []
        for idx in order:
            site = sig_pool[idx][1]
            if all(site["end"] <= c["start"] or site["start"] >= c["end"] for c in chosen):
                chosen.append(site)
            if len(chosen) == 3:
                break
        if len(chosen) < 3:
            raise InsufficientSites(report.id, 3)
        g3 = text
        for site in sorted(chosen, key=lambda s: -s["start"]):
            g3 = _splice(g3, site["start"], site["end"], site["new"])
        if g3 == text:
            raise InsufficientSites(report.id, 3)

        g4 = _append_contradiction(g0, g)
        if g4 is None:
            raise InsufficientSites(report.id, 4)

        variants = {
            k: Report(id=f"{report.id}.g{k}", text=t, source=report.source)
            for k, t in ((0, g0), (1, g1), (2, g2), (3, g3), (4, g4))
        }
        fixtures.append(SeverityFixture(report_id=report.id, gt=report, variants=variants))
    return fixtures
