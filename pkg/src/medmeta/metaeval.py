"""Aggregate statistics over metric scores.

Computes per-cell discrimination and robustness means with bootstrap
confidence intervals, severity monotonicity profiles, and
inter-annotator agreement matrices.

Conventions pinned here rather than left to callers:
  * Confidence intervals are percentile bootstraps of the mean
    (default 10,000 resamples at the 95% level) with an explicit seed.
  * Overall rows average over all pairs of a significance, not over
    cell means, so unequal cell sizes cannot skew them.
  * A severity transition counts as a violation only when the group
    mean strictly increases; flat profiles are compliant.
  * Pearson cells that are undefined (a constant vector) stay None and
    are never coerced to 0.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import (
    AnnotationCategory,
    AnnotationRecord,
    Aspect,
    ErrorType,
    MissingGroup,
    PairDataset,
    Significance,
)
from .metrics import MetricScore

SEVERITY_GROUPS = (0, 1, 2, 3, 4)
DEFAULT_RESAMPLES = 10_000
DEFAULT_CI_LEVEL = 0.95


class MetaEvalError(Exception):
    pass


class LengthMismatch(MetaEvalError):
    def __init__(self, len_x: int, len_y: int):
        super().__init__(f"vectors of length {len_x} and {len_y}")
        self.len_x = len_x
        self.len_y = len_y


class DegenerateInput(MetaEvalError):
    pass


class EmptyCell(MetaEvalError):
    pass


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation of two equal-length vectors.

    Raises LengthMismatch on unequal or sub-2 lengths and
    DegenerateInput when either vector is constant (the correlation is
    undefined, not zero).
    """
    if len(x) != len(y) or len(x) < 2:
        raise LengthMismatch(len(x), len(y))
    ax = np.asarray(x, dtype=float)
    ay = np.asarray(y, dtype=float)
    dx = ax - ax.mean()
    dy = ay - ay.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        raise DegenerateInput("constant vector has no defined correlation")
    r = float(dx @ dy) / denom
    return max(-1.0, min(1.0, r))


def bootstrap_ci(
    values: Sequence[float],
    resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_CI_LEVEL,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of `values`.

    Draws `resamples` resamples with replacement and returns the
    (1-level)/2 and (1+level)/2 empirical quantiles of the resampled
    means.  Deterministic for a fixed seed; a constant input yields a
    zero-width interval.
    """
    if len(values) < 2:
        raise DegenerateInput(f"need at least 2 values, got {len(values)}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if resamples < 1:
        raise ValueError(f"resamples must be positive, got {resamples}")
    arr = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(resamples, arr.size))
    means = arr[idx].mean(axis=1)
    lo, hi = np.quantile(means, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    # The band must bracket the sample mean; rounding in the summation
    # order (or a tiny resample count) can leave it a few ulp outside.
    sample_mean = float(arr.mean())
    return min(float(lo), sample_mean), max(float(hi), sample_mean)


@dataclass(frozen=True)
class AspectCell:
    """Mean score and CI for one slice of the pair dataset.

    aspect/error_type are None for overall (all-pairs) aggregates.
    """

    aspect: Aspect | None
    error_type: ErrorType | None
    significance: Significance
    mean: float
    ci_low: float
    ci_high: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("cell must cover at least one pair")
        if not self.ci_low <= self.mean <= self.ci_high:
            raise ValueError(
                f"mean {self.mean} outside its interval [{self.ci_low}, {self.ci_high}]"
            )


@dataclass(frozen=True)
class MetaEvalReport:
    """Discrimination and robustness cells for one metric over one dataset."""

    metric_id: str
    discriminative_cells: tuple[AspectCell, ...]
    robustness_cells: tuple[AspectCell, ...]
    overall_discriminative: AspectCell
    overall_robustness: AspectCell

    @property
    def separation_gap(self) -> float:
        """Robustness minus discrimination; 0 means no separation at all."""
        return self.overall_robustness.mean - self.overall_discriminative.mean


@dataclass(frozen=True)
class MonotonicityProfile:
    """Per-group mean scores and the adjacent transitions that rise."""

    metric_id: str
    group_means: Mapping[int, float]
    violations: tuple[tuple[int, int, float], ...]


@dataclass(frozen=True)
class AgreementMatrix:
    """Mean pairwise annotator correlation per (category, significance).

    values maps each cell to the average Pearson r over annotator
    pairs, or None when no pair has a defined correlation.  pair_counts
    records how many pairwise correlations each cell computed, which is
    C(k, 2) for k annotators sharing enough items.
    """

    retrieval_metric: str
    values: Mapping[tuple[AnnotationCategory, Significance], float | None]
    pair_counts: Mapping[tuple[AnnotationCategory, Significance], int] = field(default_factory=dict)


def derive_cell_seed(seed: int, metric_id: str, *parts: str) -> int:
    """Stable per-cell RNG seed from a run seed and cell coordinates."""
    tag = ":".join((str(seed), metric_id) + parts)
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:8], "big")


def _cell(
    values: list[float],
    aspect: Aspect | None,
    error_type: ErrorType | None,
    significance: Significance,
    resamples: int,
    level: float,
    seed: int,
) -> AspectCell:
    # Same summation path as the bootstrap so a constant vector lands
    # exactly on its zero-width interval.
    mean = float(np.asarray(values, dtype=float).mean())
    if len(values) == 1:
        lo = hi = mean
    else:
        lo, hi = bootstrap_ci(values, resamples=resamples, level=level, seed=seed)
    return AspectCell(
        aspect=aspect,
        error_type=error_type,
        significance=significance,
        mean=mean,
        ci_low=lo,
        ci_high=hi,
        n=len(values),
    )


def _filtered_values(
    scores: Sequence[MetricScore],
    dataset: PairDataset,
    significance: Significance,
    aspect: Aspect | None,
    error_type: ErrorType | None,
) -> list[float]:
    by_pair = {s.pair_id: s.value for s in scores}
    values = []
    for pair in dataset.filter(aspect=aspect, error_type=error_type, significance=significance):
        if pair.pair_id not in by_pair:
            raise ValueError(f"no score for pair {pair.pair_id!r}")
        values.append(by_pair[pair.pair_id])
    return values


def discriminative_score(
    scores: Sequence[MetricScore],
    dataset: PairDataset,
    aspect: Aspect | None = None,
    error_type: ErrorType | None = None,
    *,
    resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_CI_LEVEL,
    seed: int = 0,
) -> AspectCell:
    """Mean score over the Significant pairs matching the filter.

    Lower is better: a discriminating metric drives these scores down.
    Raises EmptyCell when the filter matches nothing.
    """
    values = _filtered_values(scores, dataset, Significance.SIGNIFICANT, aspect, error_type)
    if not values:
        raise EmptyCell(f"no significant pairs for aspect={aspect}, error_type={error_type}")
    return _cell(values, aspect, error_type, Significance.SIGNIFICANT, resamples, level, seed)


def robustness_score(
    scores: Sequence[MetricScore],
    dataset: PairDataset,
    aspect: Aspect | None = None,
    error_type: ErrorType | None = None,
    *,
    resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_CI_LEVEL,
    seed: int = 0,
) -> AspectCell:
    """Mean score over the Insignificant pairs matching the filter.

    Higher is better: a robust metric keeps these scores up.
    """
    values = _filtered_values(scores, dataset, Significance.INSIGNIFICANT, aspect, error_type)
    if not values:
        raise EmptyCell(f"no insignificant pairs for aspect={aspect}, error_type={error_type}")
    return _cell(values, aspect, error_type, Significance.INSIGNIFICANT, resamples, level, seed)


def build_report(
    metric_id: str,
    scores: Sequence[MetricScore],
    dataset: PairDataset,
    *,
    resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_CI_LEVEL,
    seed: int = 0,
) -> MetaEvalReport:
    """Cell-by-cell report covering every populated (aspect, error type,
    significance) combination in the dataset, plus overall rows.

    Each cell's bootstrap gets its own seed derived from the run seed
    and the cell coordinates, so adding or removing cells never shifts
    another cell's interval.
    """
    populated: dict[tuple[Aspect, ErrorType, Significance], None] = {}
    for pair in dataset:
        populated.setdefault((pair.aspect, pair.error_type, pair.significance), None)

    def ordering(key):
        aspect, error_type, _ = key
        return (list(Aspect).index(aspect), list(ErrorType).index(error_type))

    disc: list[AspectCell] = []
    robu: list[AspectCell] = []
    for aspect, error_type, significance in sorted(populated, key=ordering):
        cell_seed = derive_cell_seed(
            seed, metric_id, aspect.value, error_type.value, significance.value
        )
        builder = (
            discriminative_score if significance is Significance.SIGNIFICANT else robustness_score
        )
        cell = builder(
            scores, dataset, aspect, error_type, resamples=resamples, level=level, seed=cell_seed
        )
        (disc if significance is Significance.SIGNIFICANT else robu).append(cell)

    overall_d = discriminative_score(
        scores,
        dataset,
        resamples=resamples,
        level=level,
        seed=derive_cell_seed(seed, metric_id, "overall", Significance.SIGNIFICANT.value),
    )
    overall_r = robustness_score(
        scores,
        dataset,
        resamples=resamples,
        level=level,
        seed=derive_cell_seed(seed, metric_id, "overall", Significance.INSIGNIFICANT.value),
    )
    return MetaEvalReport(
        metric_id=metric_id,
        discriminative_cells=tuple(disc),
        robustness_cells=tuple(robu),
        overall_discriminative=overall_d,
        overall_robustness=overall_r,
    )


def monotonicity_profile(
    metric_id: str,
    scores_by_fixture: Mapping[str, Mapping[int, float]],
) -> MonotonicityProfile:
    """Group means over severity fixtures and the transitions that rise.

    `scores_by_fixture` maps report_id -> group -> score and must cover
    groups 0..4 for every fixture (MissingGroup otherwise).  A
    violation (g, g+1, delta) is recorded whenever the mean strictly
    increases from group g to g+1.
    """
    if not scores_by_fixture:
        raise ValueError("no fixtures scored")
    for report_id, by_group in scores_by_fixture.items():
        for g in SEVERITY_GROUPS:
            if g not in by_group:
                raise MissingGroup(report_id, g)
    group_means = {
        g: sum(by_group[g] for by_group in scores_by_fixture.values()) / len(scores_by_fixture)
        for g in SEVERITY_GROUPS
    }
    violations = []
    for g in SEVERITY_GROUPS[:-1]:
        delta = group_means[g + 1] - group_means[g]
        if delta > 0:
            violations.append((g, g + 1, delta))
    return MonotonicityProfile(
        metric_id=metric_id, group_means=group_means, violations=tuple(violations)
    )


def agreement_matrix(records: Sequence[AnnotationRecord]) -> list[AgreementMatrix]:
    """Per-retrieval-metric agreement across annotators.

    For each (retrieval metric, category, significance) cell: restrict
    to items every annotator of that cell covered, build per-annotator
    count vectors over those items, correlate every annotator pair, and
    average the defined correlations.  Cells with fewer than two
    annotators, fewer than two shared items, or no defined pair stay
    None.
    """
    by_metric: dict[str, dict[AnnotationCategory, dict[str, dict[str, AnnotationRecord]]]] = {}
    for rec in records:
        by_metric.setdefault(rec.retrieval_metric, {}).setdefault(rec.category, {}).setdefault(
            rec.annotator_id, {}
        )[rec.item_id] = rec

    matrices = []
    for retrieval_metric in sorted(by_metric):
        values: dict[tuple[AnnotationCategory, Significance], float | None] = {}
        pair_counts: dict[tuple[AnnotationCategory, Significance], int] = {}
        for category in AnnotationCategory:
            annotators = by_metric[retrieval_metric].get(category, {})
            shared: set[str] | None = None
            for items in annotators.values():
                shared = set(items) if shared is None else shared & set(items)
            item_order = sorted(shared) if shared else []
            ids = sorted(annotators)
            for significance in Significance:
                key = (category, significance)
                if len(ids) < 2 or len(item_order) < 2:
                    values[key] = None
                    pair_counts[key] = 0
                    continue
                vectors = {
                    a: [annotators[a][item].count(significance) for item in item_order]
                    for a in ids
                }
                correlations = []
                computed = 0
                for i, a in enumerate(ids):
                    for b in ids[i + 1 :]:
                        computed += 1
                        try:
                            correlations.append(pearson(vectors[a], vectors[b]))
                        except DegenerateInput:
                            pass
                values[key] = sum(correlations) / len(correlations) if correlations else None
                pair_counts[key] = computed
        matrices.append(
            AgreementMatrix(
                retrieval_metric=retrieval_metric, values=values, pair_counts=pair_counts
            )
        )
    return matrices
