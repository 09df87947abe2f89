"""Data model and file IO for report pairs, severity fixtures, annotations.

All enums serialize as snake_case strings; unknown values in input files
are hard errors, never silently coerced.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from typing import Iterable


class CorpusError(Exception):
    """Base class for corpus loading and validation errors."""


class MalformedRecord(CorpusError):
    def __init__(self, line_number: int, detail: str):
        super().__init__(f"line {line_number}: {detail}")
        self.line_number = line_number
        self.detail = detail


class DuplicateId(CorpusError):
    def __init__(self, record_id: str):
        super().__init__(f"duplicate id: {record_id!r}")
        self.record_id = record_id


class MissingGroup(CorpusError):
    def __init__(self, item_id: str, group: int):
        super().__init__(f"{item_id!r} is missing severity group {group}")
        self.item_id = item_id
        self.group = group


class Aspect(enum.Enum):
    LOCATION = "location"
    SEVERITY = "severity"
    DESCRIPTION = "description"
    NEGATION = "negation"
    MODALITY = "modality"
    SIZE_DISTANCE = "size_distance"
    COMPARISON_PROGRESSION = "comparison_progression"
    INTERNAL_CONTRADICTION = "internal_contradiction"
    UNCERTAINTY = "uncertainty"
    TERMINOLOGY = "terminology"
    NOISE = "noise"
    STYLISTIC_VARIATION = "stylistic_variation"

    @classmethod
    def clinical(cls) -> tuple["Aspect", ...]:
        """The ten aspects describing clinical content errors."""
        return tuple(a for a in cls if a not in _ROBUSTNESS)

    @classmethod
    def robustness(cls) -> tuple["Aspect", ...]:
        """The two aspects probing tolerance of harmless rewrites."""
        return _ROBUSTNESS


_ROBUSTNESS = (Aspect.NOISE, Aspect.STYLISTIC_VARIATION)

# Aspects whose dataset cells are balanced per error type.
HIGH_IMPACT_ASPECTS = (
    Aspect.LOCATION,
    Aspect.SEVERITY,
    Aspect.DESCRIPTION,
    Aspect.COMPARISON_PROGRESSION,
)

PAIRS_PER_CELL = 10


class ErrorType(enum.Enum):
    OMISSION = "omission"
    FABRICATION = "fabrication"
    INACCURACY = "inaccuracy"


class Significance(enum.Enum):
    SIGNIFICANT = "significant"
    INSIGNIFICANT = "insignificant"


class AnnotationCategory(enum.Enum):
    FALSE_PREDICTION = "a"
    OMISSION_OF_FINDING = "b"
    INCORRECT_LOCATION = "c"
    INCORRECT_SEVERITY = "d"
    SPURIOUS_COMPARISON = "e"
    OMITTED_COMPARISON = "f"


@dataclass(frozen=True)
class Report:
    """One report text with a stable id and a provenance tag."""

    id: str
    text: str
    source: str = "synthetic"

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"report {self.id!r} has empty text")
        if self.source not in ("synthetic", "external"):
            raise ValueError(f"report {self.id!r} has unknown source {self.source!r}")


@dataclass(frozen=True)
class ReportPair:
    """A ground-truth report and a model-report rewrite of it.

    Generated pairs always differ textually; hand-built pair files may
    carry identical texts (useful for scoring-path checks), so equality
    of the two texts is not rejected here.
    """

    pair_id: str
    gt: Report
    me: Report
    aspect: Aspect
    error_type: ErrorType
    significance: Significance
    explanation: str = ""


@dataclass
class PairDataset:
    """An ordered collection of report pairs."""

    pairs: list[ReportPair] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def filter(self, aspect=None, error_type=None, significance=None) -> list[ReportPair]:
        out = []
        for p in self.pairs:
            if aspect is not None and p.aspect is not aspect:
                continue
            if error_type is not None and p.error_type is not error_type:
                continue
            if significance is not None and p.significance is not significance:
                continue
            out.append(p)
        return out


@dataclass(frozen=True)
class SeverityFixture:
    """A source report and its five graded rewrites, groups 0 through 4."""

    report_id: str
    gt: Report
    variants: dict[int, Report]

    def __post_init__(self):
        for g in range(5):
            if g not in self.variants:
                raise MissingGroup(self.report_id, g)
            if self.variants[g].text == self.gt.text:
                raise ValueError(f"fixture {self.report_id!r}: group {g} variant equals the source text")


@dataclass(frozen=True)
class AnnotationRecord:
    """One annotator's error counts for one item and error category."""

    item_id: str
    retrieval_metric: str
    annotator_id: str
    category: AnnotationCategory
    significant_count: int
    insignificant_count: int

    def __post_init__(self):
        if self.significant_count < 0 or self.insignificant_count < 0:
            raise ValueError(f"negative count in annotation for item {self.item_id!r}")

    def count(self, significance: Significance) -> int:
        if significance is Significance.SIGNIFICANT:
            return self.significant_count
        return self.insignificant_count


@dataclass(frozen=True)
class CellShortfall:
    """One (error_type, significance) slot whose pair count is off."""

    error_type: ErrorType | None
    significance: Significance
    expected: int
    found: int


@dataclass(frozen=True)
class CompositionViolation:
    """All failed slots for one aspect of the composition rule."""

    aspect: Aspect
    shortfalls: tuple[CellShortfall, ...]


CompositionReport = list


# ---------------------------------------------------------------------------
# pairs.jsonl

_PAIR_FIELDS = ("pair_id", "aspect", "error_type", "significance", "gt_text", "me_text", "explanation", "source")


def load_pairs(path) -> PairDataset:
    """Load a line-delimited JSON pair file.

    Raises MalformedRecord with the offending line number, DuplicateId
    on repeated pair ids.
    """
    pairs: list[ReportPair] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(lineno, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(raw, dict):
                raise MalformedRecord(lineno, "record is not an object")
            missing = [k for k in _PAIR_FIELDS if k not in raw]
            if missing:
                raise MalformedRecord(lineno, f"missing fields: {', '.join(missing)}")
            pair_id = raw["pair_id"]
            if not isinstance(pair_id, str) or not pair_id:
                raise MalformedRecord(lineno, "pair_id must be a non-empty string")
            if pair_id in seen:
                raise DuplicateId(pair_id)
            seen.add(pair_id)
            try:
                aspect = Aspect(raw["aspect"])
                error_type = ErrorType(raw["error_type"])
                significance = Significance(raw["significance"])
            except ValueError as exc:
                raise MalformedRecord(lineno, str(exc)) from exc
            for key in ("gt_text", "me_text", "explanation", "source"):
                if not isinstance(raw[key], str):
                    raise MalformedRecord(lineno, f"{key} must be a string")
            try:
                gt = Report(id=f"{pair_id}.gt", text=raw["gt_text"], source=raw["source"])
                me = Report(id=f"{pair_id}.me", text=raw["me_text"], source=raw["source"])
            except ValueError as exc:
                raise MalformedRecord(lineno, str(exc)) from exc
            pairs.append(
                ReportPair(
                    pair_id=pair_id,
                    gt=gt,
                    me=me,
                    aspect=aspect,
                    error_type=error_type,
                    significance=significance,
                    explanation=raw["explanation"],
                )
            )
    return PairDataset(pairs)


def pair_record(pair: ReportPair) -> dict:
    """The serialized form of one pair, fields in schema order."""
    return {
        "pair_id": pair.pair_id,
        "aspect": pair.aspect.value,
        "error_type": pair.error_type.value,
        "significance": pair.significance.value,
        "gt_text": pair.gt.text,
        "me_text": pair.me.text,
        "explanation": pair.explanation,
        "source": pair.gt.source,
    }


def dump_pairs(dataset: PairDataset) -> str:
    return "".join(json.dumps(pair_record(p), ensure_ascii=False) + "\n" for p in dataset)


def save_pairs(dataset: PairDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_pairs(dataset))


# ---------------------------------------------------------------------------
# Composition rule

def validate_composition(dataset: PairDataset) -> CompositionReport:
    """Check the 400-pair composition rule.

    High-impact aspects need ten pairs per (error type, significance)
    slot; every other aspect needs ten per significance with any error
    type mix.  Returns one violation per aspect with failing slots;
    an empty list means the dataset conforms.  The 400-pair total is
    implied by the per-aspect quotas.
    """
    by_cell: dict[tuple, int] = {}
    by_sig: dict[tuple, int] = {}
    for p in dataset:
        by_cell[(p.aspect, p.error_type, p.significance)] = by_cell.get((p.aspect, p.error_type, p.significance), 0) + 1
        by_sig[(p.aspect, p.significance)] = by_sig.get((p.aspect, p.significance), 0) + 1

    violations: list[CompositionViolation] = []
    for aspect in Aspect:
        shortfalls: list[CellShortfall] = []
        if aspect in HIGH_IMPACT_ASPECTS:
            for et in ErrorType:
                for sig in Significance:
                    found = by_cell.get((aspect, et, sig), 0)
                    if found != PAIRS_PER_CELL:
                        shortfalls.append(CellShortfall(et, sig, PAIRS_PER_CELL, found))
        else:
            for sig in Significance:
                found = by_sig.get((aspect, sig), 0)
                if found != PAIRS_PER_CELL:
                    shortfalls.append(CellShortfall(None, sig, PAIRS_PER_CELL, found))
        if shortfalls:
            violations.append(CompositionViolation(aspect, tuple(shortfalls)))
    return violations


EXPECTED_DATASET_SIZE = (
    len(HIGH_IMPACT_ASPECTS) * len(ErrorType) * len(Significance) * PAIRS_PER_CELL
    + (len(Aspect) - len(HIGH_IMPACT_ASPECTS)) * len(Significance) * PAIRS_PER_CELL
)


# ---------------------------------------------------------------------------
# severity.jsonl

def load_severity_fixtures(path) -> list[SeverityFixture]:
    """Load severity fixtures; every record must carry groups 0 through 4."""
    fixtures: list[SeverityFixture] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(lineno, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(raw, dict) or not {"report_id", "gt_text", "variants"} <= raw.keys():
                raise MalformedRecord(lineno, "record needs report_id, gt_text, variants")
            report_id = raw["report_id"]
            if not isinstance(report_id, str) or not report_id:
                raise MalformedRecord(lineno, "report_id must be a non-empty string")
            if report_id in seen:
                raise DuplicateId(report_id)
            seen.add(report_id)
            variants_raw = raw["variants"]
            if not isinstance(variants_raw, dict):
                raise MalformedRecord(lineno, "variants must be an object")
            variants: dict[int, Report] = {}
            for key, text in variants_raw.items():
                if key not in {"0", "1", "2", "3", "4"}:
                    raise MalformedRecord(lineno, f"unknown severity group {key!r}")
                if not isinstance(text, str):
                    raise MalformedRecord(lineno, f"group {key} text must be a string")
                variants[int(key)] = Report(id=f"{report_id}.g{key}", text=text)
            for g in range(5):
                if g not in variants:
                    raise MissingGroup(report_id, g)
            try:
                fixture = SeverityFixture(
                    report_id=report_id,
                    gt=Report(id=report_id, text=raw["gt_text"]),
                    variants=variants,
                )
            except ValueError as exc:
                raise MalformedRecord(lineno, str(exc)) from exc
            fixtures.append(fixture)
    return fixtures


def dump_severity_fixtures(fixtures: Iterable[SeverityFixture]) -> str:
    lines = []
    for f in fixtures:
        record = {
            "report_id": f.report_id,
            "gt_text": f.gt.text,
            "variants": {str(g): f.variants[g].text for g in range(5)},
        }
        lines.append(json.dumps(record, ensure_ascii=False) + "\n")
    return "".join(lines)


def save_severity_fixtures(fixtures: Iterable[SeverityFixture], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_severity_fixtures(fixtures))


# ---------------------------------------------------------------------------
# reports.jsonl

def load_reports(path) -> list[Report]:
    """Load source reports: one {"id", "text", "source"} object per line."""
    reports: list[Report] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(lineno, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(raw, dict) or "id" not in raw or "text" not in raw:
                raise MalformedRecord(lineno, "record needs id and text")
            if not isinstance(raw["id"], str) or not raw["id"]:
                raise MalformedRecord(lineno, "id must be a non-empty string")
            if raw["id"] in seen:
                raise DuplicateId(raw["id"])
            seen.add(raw["id"])
            try:
                reports.append(Report(id=raw["id"], text=raw["text"], source=raw.get("source", "synthetic")))
            except ValueError as exc:
                raise MalformedRecord(lineno, str(exc)) from exc
    return reports


def default_reports_path():
    """Path of the bundled synthetic demo corpus."""
    from importlib import resources

    return resources.files("medmeta").joinpath("data", "demo_reports.jsonl")


# ---------------------------------------------------------------------------
# annotations.csv

_ANNOTATION_HEADER = ["item_id", "retrieval_metric", "annotator_id", "category", "significant_count", "insignificant_count"]


def load_annotations(path) -> list[AnnotationRecord]:
    """Load annotation counts from CSV.

    The (item, annotator, category, retrieval_metric) key must be
    unique; duplicates and malformed rows raise MalformedRecord.
    """
    records: list[AnnotationRecord] = []
    seen: set[tuple] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRecord(1, "empty file") from None
        if header != _ANNOTATION_HEADER:
            raise MalformedRecord(1, f"bad header: expected {','.join(_ANNOTATION_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_ANNOTATION_HEADER):
                raise MalformedRecord(lineno, f"expected {len(_ANNOTATION_HEADER)} columns, found {len(row)}")
            item_id, metric, annotator, category_raw, sig_raw, insig_raw = row
            if not item_id or not metric or not annotator:
                raise MalformedRecord(lineno, "empty key column")
            try:
                category = AnnotationCategory(category_raw)
            except ValueError as exc:
                raise MalformedRecord(lineno, f"unknown category {category_raw!r}") from exc
            try:
                sig = int(sig_raw)
                insig = int(insig_raw)
            except ValueError as exc:
                raise MalformedRecord(lineno, "counts must be integers") from exc
            key = (item_id, annotator, category, metric)
            if key in seen:
                raise MalformedRecord(lineno, f"duplicate annotation for {key}")
            seen.add(key)
            try:
                records.append(
                    AnnotationRecord(
                        item_id=item_id,
                        retrieval_metric=metric,
                        annotator_id=annotator,
                        category=category,
                        significant_count=sig,
                        insignificant_count=insig,
                    )
                )
            except ValueError as exc:
                raise MalformedRecord(lineno, str(exc)) from exc
    return records
