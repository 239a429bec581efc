"""Corpus loading, validation, and train/validation/test splitting.

Canonical on-disk layout:

    <root>/<language>/<domain>/texts/<docid>.txt          UTF-8, LF
    <root>/<language>/<domain>/annotations/ann.tsv        one term per line
    <root>/<language>/<domain>/annotations/nes.tsv        (optional 2nd TAB
                                                           column is ignored)

Two split styles are supported: rotating two-train/one-val/one-test over a
four-domain corpus, and a three-train-domains mode where the validation set
is a 10% per-domain holdout of the training documents (used when no separate
validation domain is named).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from ate.decode import normalize_term
from ate.errors import (
    DuplicateDocumentId,
    EncodingError,
    MissingAnnotation,
    OverlappingSplit,
    UnknownDomain,
    ValidationError,
    WrongDomainCount,
)

logger = logging.getLogger(__name__)

VARIANTS = ("ANN", "NES")
_VARIANT_FILES = {"ANN": "ann.tsv", "NES": "nes.tsv"}

# four-domain rotation layout: ((train_a, train_b), val, test) as indices into
# the canonical domain order
RSDO5_DOMAINS = ("bim", "kem", "vet", "ling")
_ROTATION_PATTERN = (
    ((0, 1), 2, 3),
    ((0, 2), 1, 3),
    ((1, 2), 0, 3),
    ((0, 1), 3, 2),
    ((0, 3), 1, 2),
    ((3, 1), 0, 2),
    ((0, 2), 3, 1),
    ((0, 3), 2, 1),
    ((3, 2), 0, 1),
    ((2, 1), 3, 0),
    ((2, 3), 1, 0),
    ((3, 1), 2, 0),
)

VAL_HOLDOUT_FRACTION = 0.1


@dataclass(frozen=True)
class Document:
    id: str
    language: str
    domain: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError(f"document {self.id!r} has empty text")


@dataclass(frozen=True)
class GoldStandard:
    """Gold term inventory for one (language, domain, variant)."""

    language: str
    domain: str
    variant: str
    terms: frozenset[str]

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if not self.terms:
            raise ValidationError(
                f"empty gold standard for {self.language}/{self.domain}/{self.variant}"
            )


@dataclass(frozen=True)
class SplitSpec:
    """Domain assignment for one experiment.

    `val_domain=None` selects holdout-validation mode: 10% of each training
    domain's documents (by sorted id) are set aside for validation.
    """

    language: str
    train_domains: tuple[str, ...]
    val_domain: str | None
    test_domain: str
    variant: str

    def validate(self, corpus: "Corpus | None" = None) -> None:
        named = list(self.train_domains) + [self.test_domain]
        if self.val_domain is not None:
            named.append(self.val_domain)
        if len(set(named)) != len(named):
            raise OverlappingSplit(f"split domains overlap: {named}")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if corpus is not None:
            known = corpus.domains(self.language)
            for domain in named:
                if domain not in known:
                    raise UnknownDomain(
                        f"domain {domain!r} not in corpus for language "
                        f"{self.language!r} (known: {sorted(known)})"
                    )

    def merged_train_name(self) -> str:
        return "+".join(self.train_domains)


@dataclass(frozen=True)
class Split:
    train_docs: tuple[Document, ...]
    val_docs: tuple[Document, ...]
    test_docs: tuple[Document, ...]
    train_gold: GoldStandard
    val_gold: GoldStandard
    test_gold: GoldStandard


class Corpus:
    """Documents plus gold standards, read-only after construction."""

    def __init__(self, documents: Iterable[Document], gold_standards: Iterable[GoldStandard]):
        self.documents = tuple(sorted(documents, key=lambda d: d.id))
        seen = set()
        for doc in self.documents:
            if doc.id in seen:
                raise DuplicateDocumentId(doc.id)
            seen.add(doc.id)
        self.gold = {}
        for gs in gold_standards:
            self.gold[(gs.language, gs.domain, gs.variant)] = gs

    def languages(self) -> set[str]:
        langs = {d.language for d in self.documents}
        langs.update(key[0] for key in self.gold)
        return langs

    def domains(self, language: str) -> set[str]:
        found = {d.domain for d in self.documents if d.language == language}
        found.update(key[1] for key in self.gold if key[0] == language)
        return found

    def documents_for(self, language: str, domain: str) -> list[Document]:
        return [
            d for d in self.documents if d.language == language and d.domain == domain
        ]

    def gold_for(self, language: str, domain: str, variant: str) -> GoldStandard:
        try:
            return self.gold[(language, domain, variant)]
        except KeyError:
            raise MissingAnnotation(
                f"no {variant} gold standard for {language}/{domain}"
            ) from None

    def content_checksum(self) -> str:
        """Stable digest of the loaded content, used in run ids."""
        payload = {
            "documents": [
                [d.id, d.language, d.domain, d.text] for d in self.documents
            ],
            "gold": [
                [lang, dom, var, sorted(gs.terms)]
                for (lang, dom, var), gs in sorted(self.gold.items())
            ],
        }
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def summary(self) -> str:
        lines = [f"{len(self.documents)} documents, {len(self.gold)} gold standards"]
        for language in sorted(self.languages()):
            for domain in sorted(self.domains(language)):
                n_docs = len(self.documents_for(language, domain))
                sizes = []
                for variant in VARIANTS:
                    gs = self.gold.get((language, domain, variant))
                    if gs is not None:
                        sizes.append(f"{variant}={len(gs.terms)}")
                lines.append(
                    f"  {language}/{domain}: {n_docs} docs, gold "
                    + (" ".join(sizes) if sizes else "none")
                )
        return "\n".join(lines)


def _read_gold_file(path: Path, language: str, domain: str, variant: str) -> GoldStandard:
    terms = set()
    try:
        content = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"{path}: {exc}") from exc
    for line in content.splitlines():
        raw = line.split("\t")[0]
        if raw.strip():
            terms.add(normalize_term(raw))
    if not terms:
        raise MissingAnnotation(f"{path} contains no terms")
    return GoldStandard(
        language=language, domain=domain, variant=variant, terms=frozenset(terms)
    )


def load_corpus(
    root_path: str | Path,
    layout: str = "canonical",
    variants: tuple[str, ...] = VARIANTS,
) -> Corpus:
    """Load every language/domain found under `root_path`.

    A domain directory with texts but without a gold file for one of the
    requested `variants` raises MissingAnnotation.
    """
    if layout != "canonical":
        raise ValidationError(f"unknown corpus layout {layout!r}")
    root = Path(root_path)
    if not root.is_dir():
        raise ValidationError(f"corpus root {root} does not exist")
    for variant in variants:
        if variant not in VARIANTS:
            raise ValidationError(f"unknown variant {variant!r}")

    documents = []
    gold_standards = []
    for lang_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        language = lang_dir.name
        for domain_dir in sorted(p for p in lang_dir.iterdir() if p.is_dir()):
            domain = domain_dir.name
            texts_dir = domain_dir / "texts"
            ann_dir = domain_dir / "annotations"
            has_texts = texts_dir.is_dir() and any(texts_dir.glob("*.txt"))
            if has_texts:
                for text_file in sorted(texts_dir.glob("*.txt")):
                    try:
                        text = text_file.read_text(encoding="utf-8")
                    except UnicodeDecodeError as exc:
                        raise EncodingError(f"{text_file}: {exc}") from exc
                    documents.append(
                        Document(
                            id=f"{language}/{domain}/{text_file.stem}",
                            language=language,
                            domain=domain,
                            text=text,
                        )
                    )
            for variant in variants:
                gold_path = ann_dir / _VARIANT_FILES[variant]
                if not gold_path.is_file():
                    if has_texts:
                        raise MissingAnnotation(
                            f"{language}/{domain} has texts but no "
                            f"{_VARIANT_FILES[variant]}"
                        )
                    continue
                gold_standards.append(
                    _read_gold_file(gold_path, language, domain, variant)
                )

    corpus = Corpus(documents, gold_standards)
    logger.info("loaded corpus from %s:\n%s", root, corpus.summary())
    return corpus


def bundled_corpus_root(name: str) -> Path:
    """Path of a corpus shipped with the package (e.g. the synthetic "s1")."""
    path = Path(str(resources.files("ate").joinpath(f"data/{name}")))
    if not path.is_dir():
        raise ValidationError(f"no bundled corpus named {name!r}")
    return path


def _merge_gold(
    corpus: Corpus, spec: SplitSpec, domains: Iterable[str], name: str
) -> GoldStandard:
    terms = set()
    for domain in domains:
        terms.update(corpus.gold_for(spec.language, domain, spec.variant).terms)
    return GoldStandard(
        language=spec.language,
        domain=name,
        variant=spec.variant,
        terms=frozenset(terms),
    )


def _holdout_validation(
    train_docs: list[Document], train_domains: tuple[str, ...]
) -> tuple[list[Document], list[Document]]:
    # first 10% (rounded up) of each training domain, by sorted id
    val_ids = set()
    for domain in train_domains:
        ids = sorted(d.id for d in train_docs if d.domain == domain)
        if ids:
            val_ids.update(ids[: math.ceil(VAL_HOLDOUT_FRACTION * len(ids))])
    kept = [d for d in train_docs if d.id not in val_ids]
    held = [d for d in train_docs if d.id in val_ids]
    return kept, held


def make_split(corpus: Corpus, spec: SplitSpec) -> Split:
    """Partition documents by domain and attach the group gold standards.

    The training gold standard is the union over the training domains. In
    holdout mode (no val domain) the validation gold is that same union.
    """
    spec.validate(corpus)
    train_docs = []
    for domain in spec.train_domains:
        train_docs.extend(corpus.documents_for(spec.language, domain))
    test_docs = corpus.documents_for(spec.language, spec.test_domain)
    train_gold = _merge_gold(
        corpus, spec, spec.train_domains, spec.merged_train_name()
    )
    test_gold = corpus.gold_for(spec.language, spec.test_domain, spec.variant)

    if spec.val_domain is not None:
        val_docs = corpus.documents_for(spec.language, spec.val_domain)
        val_gold = corpus.gold_for(spec.language, spec.val_domain, spec.variant)
    else:
        train_docs, val_docs = _holdout_validation(train_docs, spec.train_domains)
        val_gold = train_gold

    return Split(
        train_docs=tuple(train_docs),
        val_docs=tuple(val_docs),
        test_docs=tuple(test_docs),
        train_gold=train_gold,
        val_gold=val_gold,
        test_gold=test_gold,
    )


def enumerate_rsdo5_splits(
    corpus: Corpus, language: str | None = None, variant: str = "ANN"
) -> list[SplitSpec]:
    """The 12 (train-pair, val, test) rotations of a four-domain corpus.

    Three rotations per test domain. For the RSDO5 domain set the canonical
    order (bim, kem, vet, ling) is used so the rotations come out in the
    standard published layout; any other four-domain corpus gets the same
    pattern over its sorted domain names.
    """
    if language is None:
        languages = corpus.languages()
        if len(languages) != 1:
            raise ValidationError(
                f"corpus has {len(languages)} languages; pass `language`"
            )
        language = next(iter(languages))
    domains = corpus.domains(language)
    if len(domains) != 4:
        raise WrongDomainCount(
            f"need exactly 4 domains, found {len(domains)}: {sorted(domains)}"
        )
    if domains == set(RSDO5_DOMAINS):
        order = RSDO5_DOMAINS
    else:
        order = tuple(sorted(domains))
    specs = []
    for (a, b), val, test in _ROTATION_PATTERN:
        specs.append(
            SplitSpec(
                language=language,
                train_domains=(order[a], order[b]),
                val_domain=order[val],
                test_domain=order[test],
                variant=variant,
            )
        )
    return specs
