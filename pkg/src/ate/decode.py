"""Term normalization and IOB-to-term-set decoding.

Predicted label sequences may be ill-formed (orphan I labels); they are
repaired before span extraction. Evaluation is type-level, so decoded
mentions are aggregated into a deduplicated set per test split.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ate.errors import EmptyTerm, LengthMismatch

B, I, O = "B", "I", "O"
VALID_LABELS = frozenset((B, I, O))


@dataclass(frozen=True)
class TermSet:
    """A normalized, deduplicated set of terms with a provenance tag.

    `split` is optional bookkeeping ("language/test_domain/variant") used to
    refuse cross-split ensembling; it is not part of the on-disk format.
    """

    entries: frozenset[str]
    provenance: str
    split: str | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, term: str) -> bool:
        return term in self.entries


def normalize_term(raw: str) -> str:
    """Canonical form used for all exact-match comparisons.

    Unicode NFC, simple lowercasing, internal whitespace runs collapsed to a
    single space, leading/trailing whitespace removed.

    >>> normalize_term("Wind  Energy ")
    'wind energy'
    """
    normalized = unicodedata.normalize("NFC", raw).lower()
    normalized = " ".join(normalized.split())
    if not normalized:
        raise EmptyTerm(f"term is empty after normalization: {raw!r}")
    return normalized


def repair_labels(labels: Sequence[str]) -> list[str]:
    """Rewrite every orphan I (at position 0 or after O) to B.

    Idempotent; well-formed input comes back unchanged.
    """
    repaired = []
    prev = O
    for label in labels:
        if label not in VALID_LABELS:
            raise ValueError(f"unknown IOB label: {label!r}")
        if label == I and prev == O:
            label = B
        repaired.append(label)
        prev = label
    return repaired


def _surface(token) -> str:
    return token if isinstance(token, str) else token.surface


def decode_terms(tokens: Sequence, labels: Sequence[str]) -> list[str]:
    """Extract one normalized term per maximal B I* run.

    Tokens may be `labeling.Token` objects or plain surface strings.

    >>> decode_terms(["heart", "failure", "occurs"], ["B", "I", "O"])
    ['heart failure']
    """
    if len(tokens) != len(labels):
        raise LengthMismatch(
            f"{len(tokens)} tokens vs {len(labels)} labels"
        )
    repaired = repair_labels(labels)
    terms = []
    span: list[str] = []
    for token, label in zip(tokens, repaired):
        if label == B:
            if span:
                terms.append(normalize_term(" ".join(span)))
            span = [_surface(token)]
        elif label == I:
            span.append(_surface(token))
        else:
            if span:
                terms.append(normalize_term(" ".join(span)))
                span = []
    if span:
        terms.append(normalize_term(" ".join(span)))
    return terms


def aggregate(
    per_sequence_terms: Iterable[Sequence[str]],
    provenance: str,
    split: str | None = None,
) -> TermSet:
    """Union of decoded terms across a whole test split (order-insensitive)."""
    entries = set()
    for terms in per_sequence_terms:
        entries.update(terms)
    return TermSet(entries=frozenset(entries), provenance=provenance, split=split)


def termset_filename(run_id: str) -> str:
    return f"{run_id}.terms.txt"


def write_termset(termset: TermSet, path: str | Path) -> Path:
    """Write one term per line, code-point sorted, UTF-8, LF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "".join(term + "\n" for term in sorted(termset.entries))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(body)
    return path


def read_termset(
    path: str | Path, provenance: str | None = None, split: str | None = None
) -> TermSet:
    path = Path(path)
    entries = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.strip():
                entries.add(normalize_term(line))
    return TermSet(
        entries=frozenset(entries),
        provenance=provenance if provenance is not None else path.stem,
        split=split,
    )
