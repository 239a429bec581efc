"""Two-model ensembling by set union or intersection of candidate term sets.

Union trades precision for recall, intersection the reverse. Members are
picked from a run ledger: the best monolingual plus the best multilingual
run, or the top two within either pool. Selection uses validation F1 by
default to keep the test set out of the loop; test-F1 selection is available
behind an explicit flag for post-hoc analysis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ate.decode import TermSet
from ate.errors import InsufficientRuns, SplitMismatch, ValidationError
from ate.evaluate import EvalReport

STRATEGIES = ("union", "intersection")
COMBINATIONS = ("best_mono_plus_multi", "two_best_mono", "two_best_multi")
SELECTION_METRICS = ("val_f1", "test_f1")


@dataclass(frozen=True)
class EnsembleSpec:
    strategy: str
    combination: str
    member_runs: tuple[str, str]

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if self.combination not in COMBINATIONS:
            raise ValidationError(f"unknown combination {self.combination!r}")
        if self.member_runs[0] == self.member_runs[1]:
            raise ValidationError("ensemble members must be distinct runs")


@dataclass(frozen=True)
class ImprovementReport:
    delta_f1_vs_best_single: float
    best_single_f1: float


def combine(a: TermSet, b: TermSet, strategy: str) -> TermSet:
    """Set union or intersection of two candidate term sets.

    Commutative and idempotent; refuses members evaluated on different
    splits when both carry split metadata.
    """
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy!r}")
    if a.split is not None and b.split is not None and a.split != b.split:
        raise SplitMismatch(f"cannot combine {a.split!r} with {b.split!r}")
    entries = a.entries | b.entries if strategy == "union" else a.entries & b.entries
    members = ",".join(sorted((a.provenance, b.provenance)))
    return TermSet(
        entries=entries,
        provenance=f"{strategy}({members})",
        split=a.split if a.split is not None else b.split,
    )


def _metric(record, selection_metric: str) -> float:
    if selection_metric == "val_f1":
        return record.val_f1
    if selection_metric == "test_f1":
        return record.metrics.f1
    raise ValidationError(f"unknown selection metric {selection_metric!r}")


def _top(records, selection_metric: str, count: int, pool: str) -> list:
    eligible = [r for r in records if r.pool == pool]
    if len(eligible) < count:
        raise InsufficientRuns(
            f"need {count} {pool} run(s), found {len(eligible)}"
        )
    eligible.sort(key=lambda r: (-_metric(r, selection_metric), r.run_id))
    return eligible[:count]


def select_members(
    run_ledger: Sequence,
    combination: str,
    selection_metric: str = "val_f1",
) -> tuple[str, str]:
    """Pick the two member run ids for `combination` from ledger records.

    All records must belong to one (language, test domain, variant) group.
    Ties break by run id. For best_mono_plus_multi the pair comes back
    (mono, multi); otherwise ordered by descending metric.
    """
    if combination not in COMBINATIONS:
        raise ValidationError(f"unknown combination {combination!r}")
    keys = {r.split_key for r in run_ledger}
    if len(keys) > 1:
        raise SplitMismatch(
            f"ledger records span multiple splits: {sorted(keys)}"
        )
    if combination == "best_mono_plus_multi":
        best_mono = _top(list(run_ledger), selection_metric, 1, "mono")[0]
        best_multi = _top(list(run_ledger), selection_metric, 1, "multi")[0]
        return (best_mono.run_id, best_multi.run_id)
    pool = "mono" if combination == "two_best_mono" else "multi"
    first, second = _top(list(run_ledger), selection_metric, 2, pool)
    return (first.run_id, second.run_id)


def improvement_report(
    ensemble_report: EvalReport, member_reports: tuple[EvalReport, EvalReport]
) -> ImprovementReport:
    """F1 gain (or decline) of the ensemble over its best single member."""
    best = max(report.f1 for report in member_reports)
    return ImprovementReport(
        delta_f1_vs_best_single=ensemble_report.f1 - best,
        best_single_f1=best,
    )
