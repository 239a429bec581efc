"""Tokenization and gold-term-to-IOB compilation.

Documents are split into sentences by a small rule set (no model in the data
path), tokenized on whitespace with edge punctuation detached, and labeled by
greedy longest-leftmost matching of gold terms against token n-grams. All the
alignment policy lives here so it can be varied in one place.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from ate.corpus import Document, GoldStandard
from ate.decode import B, I, O, normalize_term
from ate.errors import ValidationError

_TERMINAL_RUN = re.compile(r"[.!?…]+")
_BLANK_LINE = re.compile(r"\n[ \t]*\n")
_WORD_BEFORE = re.compile(r"(\S+)$")
_NONSPACE = re.compile(r"\S+")
_OPENERS = "([{\"'„“‘«‹"


@dataclass(frozen=True)
class Token:
    """One token with character offsets into its source document text."""

    surface: str
    char_start: int
    char_end: int

    def __post_init__(self):
        if not (0 <= self.char_start < self.char_end):
            raise ValidationError(
                f"bad token offsets [{self.char_start}, {self.char_end})"
            )


@dataclass(frozen=True)
class LabeledSequence:
    """A tokenized sentence with aligned IOB labels."""

    doc_id: str
    tokens: tuple[Token, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise ValidationError(
                f"{len(self.tokens)} tokens vs {len(self.labels)} labels "
                f"in {self.doc_id!r}"
            )

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def is_well_formed(self) -> bool:
        prev = O
        for label in self.labels:
            if label == I and prev == O:
                return False
            prev = label
        return True


@lru_cache(maxsize=None)
def _abbreviations(language: str | None) -> frozenset[str]:
    names = ["common"]
    if language:
        names.append(language)
    entries = set()
    base = resources.files("ate").joinpath("data/abbreviations")
    for name in names:
        candidate = base.joinpath(f"{name}.txt")
        if candidate.is_file():
            for line in candidate.read_text(encoding="utf-8").splitlines():
                line = line.strip().lower()
                if line and not line.startswith("#"):
                    entries.add(line)
    return frozenset(entries)


def _is_abbreviation(text: str, punct_start: int, language: str | None) -> bool:
    match = _WORD_BEFORE.search(text, 0, punct_start)
    if not match:
        return False
    word = match.group(1).lstrip(_OPENERS)
    # single uppercase letter = personal initial ("J. Smith")
    if len(word) == 1 and word.isalpha() and word.isupper():
        return True
    return word.lower() in _abbreviations(language)


def sentence_split(text: str, language: str | None = None) -> list[tuple[int, int]]:
    """Return (char_start, char_end) sentence spans covering all non-whitespace.

    A boundary falls after a run of terminal punctuation (.!?) followed by
    whitespace and an uppercase letter or digit, unless the preceding word is
    a known abbreviation or a single-letter initial. Blank lines always end a
    sentence.
    """
    if not text.strip():
        return []
    cuts = set()
    for match in _TERMINAL_RUN.finditer(text):
        end = match.end()
        if end >= len(text) or not text[end].isspace():
            continue
        rest = text[end:].lstrip()
        if not rest:
            continue
        first = rest[0]
        if not (first.isupper() or first.isdigit()):
            continue
        if match.group() == "." and _is_abbreviation(text, match.start(), language):
            continue
        cuts.add(end)
    for match in _BLANK_LINE.finditer(text):
        cuts.add(match.start())

    spans = []
    start = 0
    for cut in sorted(cuts) + [len(text)]:
        segment = text[start:cut]
        stripped = segment.strip()
        if stripped:
            lead = len(segment) - len(segment.lstrip())
            spans.append((start + lead, start + lead + len(stripped)))
        start = cut
    return spans


def _is_punct(char: str) -> bool:
    return unicodedata.category(char).startswith("P")


def tokenize(sentence_text: str, base_offset: int = 0) -> list[Token]:
    """Whitespace tokenization with leading/trailing punctuation detached.

    Internal punctuation (hyphens, apostrophes, internal periods) is kept, so
    hyphenated words stay whole:

    >>> [t.surface for t in tokenize("C-value (ATR)")]
    ['C-value', '(', 'ATR', ')']
    """
    tokens = []

    def emit(start: int, end: int):
        tokens.append(
            Token(
                surface=sentence_text[start:end],
                char_start=base_offset + start,
                char_end=base_offset + end,
            )
        )

    for match in _NONSPACE.finditer(sentence_text):
        start, end = match.start(), match.end()
        while end - start > 1 and _is_punct(sentence_text[start]):
            emit(start, start + 1)
            start += 1
        trailing = []
        while end - start > 1 and _is_punct(sentence_text[end - 1]):
            trailing.append(end - 1)
            end -= 1
        emit(start, end)
        for pos in reversed(trailing):
            emit(pos, pos + 1)
    return tokens


def _max_term_tokens(gold_terms) -> int:
    return max((term.count(" ") + 1 for term in gold_terms), default=0)


def greedy_match_labels(
    surfaces: Sequence[str], gold_terms, max_len: int | None = None
) -> list[str]:
    """Greedy left-to-right longest-match IOB labeling of token surfaces.

    At each position the longest n-gram whose normalized form is in
    `gold_terms` is labeled B I...I; matching resumes after it. This single
    policy is shared by gold compilation and the lexicon tagger.
    """
    n = len(surfaces)
    labels = [O] * n
    if not gold_terms:
        return labels
    if max_len is None:
        max_len = _max_term_tokens(gold_terms)
    i = 0
    while i < n:
        matched = 0
        for length in range(min(max_len, n - i), 0, -1):
            candidate = normalize_term(" ".join(surfaces[i : i + length]))
            if candidate in gold_terms:
                matched = length
                break
        if matched:
            labels[i] = B
            for j in range(i + 1, i + matched):
                labels[j] = I
            i += matched
        else:
            i += 1
    return labels


def annotate_iob(tokens: Sequence[Token], gold, doc_id: str = "") -> LabeledSequence:
    """Compile a gold term inventory into IOB labels for one sentence.

    `gold` is a set of normalized term strings. Nested or overlapping terms
    flatten to the longest-leftmost match (IOB cannot represent nesting).
    """
    labels = greedy_match_labels([t.surface for t in tokens], gold)
    return LabeledSequence(doc_id=doc_id, tokens=tuple(tokens), labels=tuple(labels))


def tokenize_document(doc: Document) -> list[tuple[int, list[Token]]]:
    """Sentence-split and tokenize one document.

    Returns (sentence_index, tokens) pairs; empty sentences are dropped.
    """
    out = []
    for index, (start, end) in enumerate(sentence_split(doc.text, doc.language)):
        tokens = tokenize(doc.text[start:end], base_offset=start)
        if tokens:
            out.append((index, tokens))
    return out


def compile_dataset(
    docs: Iterable[Document], gold: GoldStandard
) -> list[LabeledSequence]:
    """Compile IOB training data for a document group against one gold standard.

    Deterministic order: documents sorted by id, sentences in text order.
    Terms never match across sentence boundaries.
    """
    docs = sorted(docs, key=lambda d: d.id)
    for doc in docs:
        if doc.language != gold.language:
            raise ValidationError(
                f"document {doc.id!r} is {doc.language!r} but gold standard "
                f"is {gold.language!r}"
            )
    sequences = []
    for doc in docs:
        for _, tokens in tokenize_document(doc):
            sequences.append(annotate_iob(tokens, gold.terms, doc_id=doc.id))
    return sequences


def save_dataset(sequences: Iterable[LabeledSequence], path: str | Path) -> Path:
    """Write sequences as line-delimited JSON records."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for seq in sequences:
            record = {
                "doc_id": seq.doc_id,
                "tokens": seq.surfaces,
                "labels": list(seq.labels),
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def load_dataset(path: str | Path) -> list[LabeledSequence]:
    """Read a JSONL dataset.

    Offsets are reconstructed over the space-joined surfaces since the
    original document text is not stored.
    """
    sequences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            tokens = []
            offset = 0
            for surface in record["tokens"]:
                tokens.append(Token(surface, offset, offset + len(surface)))
                offset += len(surface) + 1
            sequences.append(
                LabeledSequence(
                    doc_id=record["doc_id"],
                    tokens=tuple(tokens),
                    labels=tuple(record["labels"]),
                )
            )
    return sequences
