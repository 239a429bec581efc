"""Term-level evaluation: exact set comparison of candidates vs gold.

Scores are percentages in [0, 100]. The recall denominator is the full gold
list of the test domain, including gold terms that never occur literally in
the test text. An empty candidate set scores precision 0 by convention so F1
stays total and comparable across runs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

from ate.errors import EmptyGold


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "EvalReport":
        precision = 100.0 * tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = 100.0 * tp / (tp + fn) if tp + fn > 0 else 0.0
        return cls(
            tp=tp,
            fp=fp,
            fn=fn,
            precision=precision,
            recall=recall,
            f1=f1(precision, recall),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(**{k: data[k] for k in ("tp", "fp", "fn", "precision", "recall", "f1")})

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _entries(termset) -> frozenset:
    if hasattr(termset, "entries"):
        return termset.entries
    return frozenset(termset)


def compare(candidates, gold) -> EvalReport:
    """Exact-string comparison of two normalized term sets.

    Accepts TermSet objects or plain sets of strings.

    >>> compare({"a", "b"}, {"b", "c"}).f1
    50.0
    """
    candidate_set = _entries(candidates)
    gold_set = _entries(gold)
    if not gold_set:
        raise EmptyGold("gold term set is empty; evaluation undefined")
    tp = len(candidate_set & gold_set)
    return EvalReport.from_counts(
        tp=tp, fp=len(candidate_set - gold_set), fn=len(gold_set - candidate_set)
    )


def f1(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (percent scale), 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def delta(report_a: EvalReport, report_b: EvalReport) -> float:
    """Signed F1 difference a - b."""
    return report_a.f1 - report_b.f1


def format_pct(value: float) -> str:
    """Two-decimal percentage formatting, round-half-to-even."""
    return str(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))
