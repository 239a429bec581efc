"""Experiment orchestration and the append-only run ledger.

A run is identified by a content hash covering the corpus checksum, split,
backend spec (seed included), variant, pool, and code version — re-running
the same configuration reproduces the same run id and is refused unless
forced. Records land in `<output_dir>/runs.jsonl` only after the run has
fully completed; term set files go to `<output_dir>/termsets/`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

try:
    import fcntl
except ImportError:  # non-POSIX; advisory locking degrades to no-op
    fcntl = None

import ate
from ate.corpus import (
    Corpus,
    SplitSpec,
    enumerate_rsdo5_splits,
    load_corpus,
    make_split,
)
from ate.decode import (
    TermSet,
    aggregate,
    decode_terms,
    read_termset,
    termset_filename,
    write_termset,
)
from ate.ensemble import (
    EnsembleSpec,
    combine,
    improvement_report,
    select_members,
)
from ate.errors import (
    AteError,
    ConfigError,
    DuplicateRun,
    EmptyLedger,
    InsufficientRuns,
    ValidationError,
)
from ate.evaluate import EvalReport, compare
from ate.labeling import compile_dataset, tokenize_document
from ate.tagger import BackendSpec, fit, predict

logger = logging.getLogger(__name__)

# multilingual checkpoints get pool="multi" unless the config says otherwise
MULTILINGUAL_MODEL_IDS = frozenset(
    {
        "bert-base-multilingual-uncased",
        "bert-base-multilingual-cased",
        "distilbert-base-multilingual-cased",
        "microsoft/infoxlm-base",
        "infoxlm-base",
        "xlm-roberta-base",
        "xlm-roberta-large",
    }
)


def _infer_pool(backend: BackendSpec) -> str:
    return "multi" if backend.model_id in MULTILINGUAL_MODEL_IDS else "mono"


@dataclass(frozen=True)
class RunConfig:
    corpus_root: str
    language: str
    split: SplitSpec
    backend: BackendSpec
    variant: str
    pool: str
    output_dir: str

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            corpus = data["corpus"]
            split = data["split"]
            backend_data = data["backend"]
            variant = data["variant"]
            output_dir = data["output_dir"]
        except KeyError as exc:
            raise ConfigError(f"config is missing section {exc}") from None
        language = corpus.get("language")
        if not language:
            raise ConfigError("corpus.language is required")
        try:
            backend = BackendSpec.from_dict(backend_data)
            split_spec = SplitSpec(
                language=language,
                train_domains=tuple(split["train_domains"]),
                val_domain=split.get("val_domain"),
                test_domain=split["test_domain"],
                variant=variant,
            )
            split_spec.validate()
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad split/backend section: {exc}") from exc
        pool = data.get("pool") or _infer_pool(backend)
        if pool not in ("mono", "multi"):
            raise ConfigError(f"pool must be mono or multi, got {pool!r}")
        return cls(
            corpus_root=corpus["root"],
            language=language,
            split=split_spec,
            backend=backend,
            variant=variant,
            pool=pool,
            output_dir=output_dir,
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def with_seed(self, seed: int) -> "RunConfig":
        return RunConfig(
            corpus_root=self.corpus_root,
            language=self.language,
            split=self.split,
            backend=self.backend.with_seed(seed),
            variant=self.variant,
            pool=self.pool,
            output_dir=self.output_dir,
        )


def compute_run_id(config: RunConfig, corpus_checksum: str) -> str:
    """Content hash of the effective configuration (output location excluded)."""
    payload = {
        "corpus_checksum": corpus_checksum,
        "language": config.language,
        "split": {
            "train_domains": list(config.split.train_domains),
            "val_domain": config.split.val_domain,
            "test_domain": config.split.test_domain,
        },
        "backend": config.backend.to_dict(),
        "variant": config.variant,
        "pool": config.pool,
        "code_version": ate.__version__,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    language: str
    train_domains: tuple[str, ...]
    val_domain: str | None
    test_domain: str
    backend: BackendSpec
    variant: str
    pool: str
    metrics: EvalReport
    val_f1: float
    termset_path: str
    timestamp: str

    @property
    def split_key(self) -> str:
        return f"{self.language}/{self.test_domain}/{self.variant}"

    @property
    def model_label(self) -> str:
        return self.backend.model_id or self.backend.kind

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "language": self.language,
            "split": {
                "train_domains": list(self.train_domains),
                "val_domain": self.val_domain,
                "test_domain": self.test_domain,
            },
            "backend": self.backend.to_dict(),
            "variant": self.variant,
            "pool": self.pool,
            "metrics": self.metrics.to_dict(),
            "val_f1": self.val_f1,
            "termset_path": self.termset_path,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(
            run_id=data["run_id"],
            language=data["language"],
            train_domains=tuple(data["split"]["train_domains"]),
            val_domain=data["split"].get("val_domain"),
            test_domain=data["split"]["test_domain"],
            backend=BackendSpec.from_dict(data["backend"]),
            variant=data["variant"],
            pool=data["pool"],
            metrics=EvalReport.from_dict(data["metrics"]),
            val_f1=data["val_f1"],
            termset_path=data["termset_path"],
            timestamp=data["timestamp"],
        )


class Ledger:
    """Append-only JSONL run ledger with advisory locking around appends."""

    def __init__(self, output_dir: str | Path):
        self.output_dir = Path(output_dir)
        self.path = self.output_dir / "runs.jsonl"

    def read(self) -> list[RunRecord]:
        if not self.path.is_file():
            return []
        records = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    records.append(RunRecord.from_dict(json.loads(line)))
        return records

    def run_ids(self) -> set[str]:
        return {r.run_id for r in self.read()}

    def append(self, record: RunRecord) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        line = json.dumps(record.to_dict(), ensure_ascii=False) + "\n"
        with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
            if fcntl is not None:
                fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                fh.write(line)
                fh.flush()
            finally:
                if fcntl is not None:
                    fcntl.flock(fh, fcntl.LOCK_UN)

    def get(self, run_id: str) -> RunRecord:
        for record in self.read():
            if record.run_id == run_id:
                return record
        raise EmptyLedger(f"run {run_id!r} not in ledger {self.path}")


def _split_key(language: str, test_domain: str, variant: str) -> str:
    return f"{language}/{test_domain}/{variant}"


def run_experiment(
    config: RunConfig,
    *,
    force: bool = False,
    corpus: Corpus | None = None,
) -> RunRecord:
    """Execute load -> split -> compile -> fit -> predict -> decode -> evaluate.

    The ledger entry is written only at the end, so failed runs leave no
    record. Pass `corpus` to reuse an already-loaded corpus across runs.
    """
    if corpus is None:
        corpus = load_corpus(config.corpus_root, variants=(config.variant,))
    config.split.validate(corpus)

    run_id = compute_run_id(config, corpus.content_checksum())
    ledger = Ledger(config.output_dir)
    if not force and run_id in ledger.run_ids():
        raise DuplicateRun(
            f"run {run_id} already in {ledger.path}; use --force to re-run"
        )

    split = make_split(corpus, config.split)
    train_seqs = compile_dataset(split.train_docs, split.train_gold)
    val_seqs = compile_dataset(split.val_docs, split.val_gold) if split.val_docs else []

    tagger = fit(train_seqs, val_seqs, split.val_gold, config.backend)

    test_units = []  # (tokens per sentence), document order
    for doc in sorted(split.test_docs, key=lambda d: d.id):
        for _, tokens in tokenize_document(doc):
            test_units.append(tokens)
    predicted = predict(tagger, [[t.surface for t in tokens] for tokens in test_units])
    terms = [
        decode_terms(tokens, labels) for tokens, labels in zip(test_units, predicted)
    ]
    split_key = _split_key(config.language, config.split.test_domain, config.variant)
    candidates = aggregate(terms, provenance=run_id, split=split_key)

    report = compare(candidates, split.test_gold.terms)

    out_dir = Path(config.output_dir)
    termset_path = write_termset(
        candidates, out_dir / "termsets" / termset_filename(run_id)
    )
    report.save(out_dir / "reports" / f"{run_id}.report.json")

    record = RunRecord(
        run_id=run_id,
        language=config.language,
        train_domains=config.split.train_domains,
        val_domain=config.split.val_domain,
        test_domain=config.split.test_domain,
        backend=config.backend,
        variant=config.variant,
        pool=config.pool,
        metrics=report,
        val_f1=tagger.val_f1,
        termset_path=str(termset_path),
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    )
    ledger.append(record)
    logger.info(
        "run %s: P=%.2f R=%.2f F1=%.2f (val F1=%.2f)",
        run_id,
        report.precision,
        report.recall,
        report.f1,
        tagger.val_f1,
    )
    return record


@dataclass
class MatrixResult:
    records: list[RunRecord] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)  # (index, message)


def expand_matrix(data: dict | list) -> list[RunConfig]:
    """Turn a matrix config into concrete run configs.

    Accepts either a plain list of run configs, {"runs": [...]}, or a
    {"base": {...}, "rsdo5_rotations": true, "backends": [...]} template that
    crosses the 12 four-domain rotations with one or more backends.
    """
    if isinstance(data, list):
        return [RunConfig.from_dict(entry) for entry in data]
    if "runs" in data:
        return [RunConfig.from_dict(entry) for entry in data["runs"]]
    if not data.get("rsdo5_rotations"):
        raise ConfigError(
            "matrix config needs 'runs' or 'rsdo5_rotations': true with 'base'"
        )
    base = data.get("base")
    if not base:
        raise ConfigError("rsdo5_rotations matrix needs a 'base' config section")
    corpus = load_corpus(base["corpus"]["root"], variants=(base["variant"],))
    splits = enumerate_rsdo5_splits(
        corpus, language=base["corpus"]["language"], variant=base["variant"]
    )
    backends = data.get("backends") or [base["backend"]]
    configs = []
    for backend_data in backends:
        pool = backend_data.pop("pool", None) if isinstance(backend_data, dict) else None
        for spec in splits:
            entry = dict(base)
            entry["backend"] = backend_data
            entry["split"] = {
                "train_domains": list(spec.train_domains),
                "val_domain": spec.val_domain,
                "test_domain": spec.test_domain,
            }
            if pool:
                entry["pool"] = pool
            configs.append(RunConfig.from_dict(entry))
    return configs


def run_matrix(configs: Iterable[RunConfig], *, force: bool = False) -> MatrixResult:
    """Run configs sequentially; failures are recorded and skipped."""
    result = MatrixResult()
    cache: dict[tuple[str, str], Corpus] = {}
    for index, config in enumerate(configs):
        try:
            key = (config.corpus_root, config.variant)
            if key not in cache:
                cache[key] = load_corpus(config.corpus_root, variants=(config.variant,))
            record = run_experiment(config, force=force, corpus=cache[key])
            result.records.append(record)
        except AteError as exc:
            logger.error("matrix entry %d failed: %s", index, exc)
            result.failures.append((index, f"{type(exc).__name__}: {exc}"))
    return result


@dataclass(frozen=True)
class EnsembleOutcome:
    ensemble_id: str
    spec: EnsembleSpec
    split_key: str
    report: EvalReport
    member_reports: tuple[EvalReport, EvalReport]
    delta_f1_vs_best_single: float
    best_single_f1: float
    termset_path: str

    def to_dict(self) -> dict:
        return {
            "ensemble_id": self.ensemble_id,
            "strategy": self.spec.strategy,
            "combination": self.spec.combination,
            "member_runs": list(self.spec.member_runs),
            "split_key": self.split_key,
            "report": self.report.to_dict(),
            "member_reports": [r.to_dict() for r in self.member_reports],
            "delta_f1_vs_best_single": self.delta_f1_vs_best_single,
            "best_single_f1": self.best_single_f1,
            "termset_path": self.termset_path,
        }


def ensemble_runs(
    output_dir: str | Path,
    *,
    strategy: str,
    combination: str,
    language: str,
    test_domain: str,
    variant: str,
    gold_terms,
    selection_metric: str = "val_f1",
    member_runs: tuple[str, str] | None = None,
) -> EnsembleOutcome:
    """Combine two ledger runs on one split and persist the ensemble artifacts.

    Writes `<output_dir>/ensembles/<id>/` with the combined term set file,
    the evaluation report, and an ensemble.json sidecar naming strategy,
    combination, and members.
    """
    ledger = Ledger(output_dir)
    key = _split_key(language, test_domain, variant)
    records = [r for r in ledger.read() if r.split_key == key]
    if not records:
        raise EmptyLedger(f"no runs for split {key} in {ledger.path}")
    if member_runs is None:
        member_runs = select_members(records, combination, selection_metric)
    by_id = {r.run_id: r for r in records}
    try:
        members = (by_id[member_runs[0]], by_id[member_runs[1]])
    except KeyError as exc:
        raise InsufficientRuns(f"run {exc} not found for split {key}") from None

    spec = EnsembleSpec(
        strategy=strategy, combination=combination, member_runs=tuple(member_runs)
    )
    termsets = tuple(
        read_termset(m.termset_path, provenance=m.run_id, split=key) for m in members
    )
    combined = combine(termsets[0], termsets[1], strategy)
    report = compare(combined, gold_terms)
    member_reports = (members[0].metrics, members[1].metrics)
    improvement = improvement_report(report, member_reports)

    blob = json.dumps(
        {
            "strategy": strategy,
            "combination": combination,
            "members": sorted(member_runs),
            "split": key,
        },
        sort_keys=True,
    )
    ensemble_id = "ens-" + hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]
    ens_dir = Path(output_dir) / "ensembles" / ensemble_id
    termset_path = write_termset(combined, ens_dir / termset_filename(ensemble_id))
    report.save(ens_dir / "report.json")

    outcome = EnsembleOutcome(
        ensemble_id=ensemble_id,
        spec=spec,
        split_key=key,
        report=report,
        member_reports=member_reports,
        delta_f1_vs_best_single=improvement.delta_f1_vs_best_single,
        best_single_f1=improvement.best_single_f1,
        termset_path=str(termset_path),
    )
    (ens_dir / "ensemble.json").write_text(
        json.dumps(outcome.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return outcome


def load_ensembles(output_dir: str | Path) -> list[EnsembleOutcome]:
    base = Path(output_dir) / "ensembles"
    if not base.is_dir():
        return []
    outcomes = []
    for sidecar in sorted(base.glob("*/ensemble.json")):
        data = json.loads(sidecar.read_text(encoding="utf-8"))
        outcomes.append(
            EnsembleOutcome(
                ensemble_id=data["ensemble_id"],
                spec=EnsembleSpec(
                    strategy=data["strategy"],
                    combination=data["combination"],
                    member_runs=tuple(data["member_runs"]),
                ),
                split_key=data["split_key"],
                report=EvalReport.from_dict(data["report"]),
                member_reports=tuple(
                    EvalReport.from_dict(r) for r in data["member_reports"]
                ),
                delta_f1_vs_best_single=data["delta_f1_vs_best_single"],
                best_single_f1=data["best_single_f1"],
                termset_path=data["termset_path"],
            )
        )
    return outcomes
