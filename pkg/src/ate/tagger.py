"""Pluggable token-classifier backends behind one train/predict contract.

Two backends:

* ``mock_lexicon`` — memorizes every gold span seen in training and labels by
  greedy longest-leftmost lexicon matching. Deterministic, dependency-free;
  the test-suite stand-in for fine-tuning.
* ``encoder`` — fine-tunes a pretrained transformer token classifier (see
  `ate.encoder`; requires the optional torch/transformers runtime).

Both backends guarantee one output label per input token and process inputs
in windows of at most `max_seq_tokens` tokens.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from ate.corpus import GoldStandard
from ate.decode import aggregate, decode_terms
from ate.errors import EmptyTraining, NotFitted, ValidationError
from ate.evaluate import compare
from ate.labeling import LabeledSequence, greedy_match_labels

BACKEND_KINDS = ("mock_lexicon", "encoder")


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 2e-5
    epochs: int = 5
    batch_size: int = 16
    max_seq_tokens: int = 256
    seed: int = 42

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.max_seq_tokens < 16:
            raise ValidationError("max_seq_tokens must be >= 16")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "max_seq_tokens": self.max_seq_tokens,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown hyperparams: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class BackendSpec:
    kind: str
    model_id: str = ""
    hyperparams: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValidationError(f"unknown backend kind {self.kind!r}")
        if self.kind == "encoder" and not self.model_id:
            raise ValidationError("encoder backend needs a model_id")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "model_id": self.model_id,
            "hyperparams": self.hyperparams.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BackendSpec":
        hp = data.get("hyperparams", {})
        return cls(
            kind=data["kind"],
            model_id=data.get("model_id", ""),
            hyperparams=hp if isinstance(hp, Hyperparams) else Hyperparams.from_dict(hp),
        )

    def with_seed(self, seed: int) -> "BackendSpec":
        return replace(self, hyperparams=replace(self.hyperparams, seed=seed))


@dataclass
class TrainedTagger:
    spec: BackendSpec
    fitted_state: object
    val_f1: float


def _as_surfaces(sequence) -> list[str]:
    return [t if isinstance(t, str) else t.surface for t in sequence]


def chunk_indices(n_tokens: int, max_tokens: int, labels: Sequence[str] | None = None):
    """Yield (start, end) windows of at most `max_tokens` tokens.

    With labels given, a boundary that would fall inside a B..I span is moved
    left to the span start so training chunks never split a gold term (unless
    a single span exceeds the window, in which case it is split anyway).
    """
    start = 0
    while start < n_tokens:
        end = min(start + max_tokens, n_tokens)
        if labels is not None and end < n_tokens:
            cut = end
            while cut > start and labels[cut] == "I":
                cut -= 1
            if cut > start:
                end = cut
        yield start, end
        start = end


def validation_f1(
    predict_fn, val: Sequence[LabeledSequence], val_gold: GoldStandard | None
) -> float:
    """Term-level F1 of decoded predictions on the validation split."""
    if not val or val_gold is None:
        return 0.0
    surfaces = [seq.surfaces for seq in val]
    predicted = predict_fn(surfaces)
    terms = [decode_terms(s, labels) for s, labels in zip(surfaces, predicted)]
    return compare(aggregate(terms, provenance="val"), val_gold.terms).f1


class _LexiconState:
    def __init__(self, lexicon: frozenset[str]):
        self.lexicon = lexicon
        self.max_words = max((t.count(" ") + 1 for t in lexicon), default=0)


def _fit_mock(train: Sequence[LabeledSequence], spec: BackendSpec) -> _LexiconState:
    lexicon = set()
    for seq in train:
        lexicon.update(decode_terms(seq.tokens, seq.labels))
    return _LexiconState(frozenset(lexicon))


def _predict_mock(
    state: _LexiconState, sequences: Sequence[Sequence], max_seq_tokens: int
) -> list[list[str]]:
    out = []
    for sequence in sequences:
        surfaces = _as_surfaces(sequence)
        labels = []
        for start, end in chunk_indices(len(surfaces), max_seq_tokens):
            labels.extend(
                greedy_match_labels(
                    surfaces[start:end], state.lexicon, state.max_words
                )
            )
        out.append(labels)
    return out


def fit(
    train: Sequence[LabeledSequence],
    val: Sequence[LabeledSequence],
    val_gold: GoldStandard | None,
    spec: BackendSpec,
) -> TrainedTagger:
    """Train a tagger and record its validation term-level F1.

    The encoder backend keeps the epoch checkpoint with the best validation
    F1; the lexicon backend memorizes all gold spans observed in training.
    """
    if not train:
        raise EmptyTraining("no training sequences")
    if spec.kind == "mock_lexicon":
        state = _fit_mock(train, spec)
        tagger = TrainedTagger(spec=spec, fitted_state=state, val_f1=0.0)
        tagger.val_f1 = validation_f1(
            lambda seqs: predict(tagger, seqs), val, val_gold
        )
        return tagger
    from ate import encoder

    return encoder.fit_encoder(train, val, val_gold, spec)


def predict(tagger: TrainedTagger, sequences: Sequence[Sequence]) -> list[list[str]]:
    """Label token sequences; output lengths always match input lengths."""
    if tagger.fitted_state is None:
        raise NotFitted("tagger has no fitted state")
    if not sequences:
        return []
    if tagger.spec.kind == "mock_lexicon":
        return _predict_mock(
            tagger.fitted_state, sequences, tagger.spec.hyperparams.max_seq_tokens
        )
    from ate import encoder

    return encoder.predict_encoder(tagger, sequences)


def save_tagger(tagger: TrainedTagger, path: str | Path) -> Path:
    """Persist a tagger: JSON for the lexicon backend, a checkpoint directory
    for the encoder backend."""
    path = Path(path)
    if tagger.spec.kind == "mock_lexicon":
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "spec": tagger.spec.to_dict(),
            "val_f1": tagger.val_f1,
            "lexicon": sorted(tagger.fitted_state.lexicon),
        }
        path.write_text(
            json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        return path
    from ate import encoder

    return encoder.save_encoder(tagger, path)


def load_tagger(path: str | Path) -> TrainedTagger:
    path = Path(path)
    if path.is_dir():
        from ate import encoder

        return encoder.load_encoder(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    spec = BackendSpec.from_dict(payload["spec"])
    return TrainedTagger(
        spec=spec,
        fitted_state=_LexiconState(frozenset(payload["lexicon"])),
        val_f1=payload.get("val_f1", 0.0),
    )
