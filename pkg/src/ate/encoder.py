"""Transformer token-classification backend.

Fine-tunes a pretrained encoder with a 3-way (B/I/O) token classification
head. Only the first subword of each token carries a label during training;
at prediction time the first subword's label is taken for the whole token.
Requires torch + transformers, imported lazily so the rest of the package
works without them.

`model_id` values starting with "tiny-random" build a small randomly
initialized BERT with a WordPiece tokenizer trained on the task data instead
of downloading a checkpoint; that path is used for offline smoke tests.
"""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ate.errors import BackendUnavailable
from ate.tagger import (
    BackendSpec,
    TrainedTagger,
    _as_surfaces,
    chunk_indices,
    validation_f1,
)

LABEL2ID = {"O": 0, "B": 1, "I": 2}
ID2LABEL = {v: k for k, v in LABEL2ID.items()}

_TINY_PREFIX = "tiny-random"
_TINY_VOCAB = 1000


@dataclass
class EncoderState:
    model: object
    tokenizer: object
    loss_history: list[float]
    val_f1_history: list[float]


def _require_runtime():
    try:
        import torch
        import transformers
    except ImportError as exc:
        raise BackendUnavailable(
            "encoder backend needs the optional torch/transformers runtime "
            "(pip install 'ate[encoder]')"
        ) from exc
    return torch, transformers


def _train_tiny_tokenizer(texts, transformers):
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
    from tokenizers.trainers import WordPieceTrainer

    tok = Tokenizer(models.WordPiece(unk_token="[UNK]"))
    tok.normalizer = normalizers.Lowercase()
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = WordPieceTrainer(
        vocab_size=_TINY_VOCAB,
        special_tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]"],
        show_progress=False,
    )
    tok.train_from_iterator(texts, trainer)
    tok.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[
            ("[CLS]", tok.token_to_id("[CLS]")),
            ("[SEP]", tok.token_to_id("[SEP]")),
        ],
    )
    return transformers.PreTrainedTokenizerFast(
        tokenizer_object=tok,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        model_max_length=512,
    )


def _build(spec: BackendSpec, train_texts, transformers):
    common = dict(num_labels=3, id2label=ID2LABEL, label2id=LABEL2ID)
    if spec.model_id.startswith(_TINY_PREFIX):
        tokenizer = _train_tiny_tokenizer(train_texts, transformers)
        config = transformers.BertConfig(
            vocab_size=tokenizer.vocab_size,
            hidden_size=64,
            num_hidden_layers=2,
            num_attention_heads=2,
            intermediate_size=128,
            max_position_embeddings=512,
            pad_token_id=tokenizer.pad_token_id,
            **common,
        )
        return tokenizer, transformers.BertForTokenClassification(config)
    try:
        tokenizer = transformers.AutoTokenizer.from_pretrained(spec.model_id)
        model = transformers.AutoModelForTokenClassification.from_pretrained(
            spec.model_id, **common
        )
    except Exception as exc:
        raise BackendUnavailable(
            f"could not load checkpoint {spec.model_id!r}: {exc}"
        ) from exc
    return tokenizer, model


def _piece_limit(tokenizer) -> int:
    limit = getattr(tokenizer, "model_max_length", 512)
    if not isinstance(limit, int) or limit <= 0 or limit > 100_000:
        limit = 512
    return limit


def _encode(tokenizer, token_batches, max_length):
    return tokenizer(
        [list(tokens) for tokens in token_batches],
        is_split_into_words=True,
        truncation=True,
        max_length=max_length,
        padding=True,
        return_tensors="pt",
    )


def _aligned_label_ids(encoding, label_batches, torch):
    rows = []
    for i, labels in enumerate(label_batches):
        prev = None
        row = []
        for word_id in encoding.word_ids(i):
            if word_id is None or word_id == prev:
                row.append(-100)
            else:
                row.append(LABEL2ID[labels[word_id]])
            prev = word_id
        rows.append(row)
    return torch.tensor(rows, dtype=torch.long)


def _predict_raw(model, tokenizer, sequences, hp, torch) -> list[list[str]]:
    """One label per token; tokens truncated away by the piece limit get O."""
    max_length = _piece_limit(tokenizer)
    chunks = []  # (sequence index, token offset, surfaces)
    outputs = []
    for seq_index, sequence in enumerate(sequences):
        surfaces = _as_surfaces(sequence)
        outputs.append(["O"] * len(surfaces))
        for start, end in chunk_indices(len(surfaces), hp.max_seq_tokens):
            chunks.append((seq_index, start, surfaces[start:end]))
    model.eval()
    with torch.no_grad():
        for batch_start in range(0, len(chunks), hp.batch_size):
            batch = chunks[batch_start : batch_start + hp.batch_size]
            encoding = _encode(tokenizer, [c[2] for c in batch], max_length)
            logits = model(
                input_ids=encoding["input_ids"],
                attention_mask=encoding["attention_mask"],
            ).logits
            predicted = logits.argmax(dim=-1)
            for i, (seq_index, offset, surfaces) in enumerate(batch):
                prev = None
                for pos, word_id in enumerate(encoding.word_ids(i)):
                    if word_id is not None and word_id != prev:
                        outputs[seq_index][offset + word_id] = ID2LABEL[
                            int(predicted[i][pos])
                        ]
                    prev = word_id
    return outputs


def fit_encoder(train, val, val_gold, spec: BackendSpec) -> TrainedTagger:
    torch, transformers = _require_runtime()
    hp = spec.hyperparams
    torch.manual_seed(hp.seed)
    rng = random.Random(hp.seed)

    train_chunks = []
    for seq in train:
        surfaces = seq.surfaces
        for start, end in chunk_indices(len(surfaces), hp.max_seq_tokens, seq.labels):
            train_chunks.append((surfaces[start:end], list(seq.labels[start:end])))

    tokenizer, model = _build(
        spec, (" ".join(c[0]) for c in train_chunks), transformers
    )
    max_length = _piece_limit(tokenizer)
    optimizer = torch.optim.AdamW(model.parameters(), lr=hp.learning_rate)

    loss_history = []
    val_history = []
    best_f1 = -1.0
    best_state = None
    for epoch in range(hp.epochs):
        model.train()
        order = list(range(len(train_chunks)))
        rng.shuffle(order)
        total_loss = 0.0
        for batch_start in range(0, len(order), hp.batch_size):
            indices = order[batch_start : batch_start + hp.batch_size]
            tokens = [train_chunks[i][0] for i in indices]
            labels = [train_chunks[i][1] for i in indices]
            encoding = _encode(tokenizer, tokens, max_length)
            label_ids = _aligned_label_ids(encoding, labels, torch)
            output = model(
                input_ids=encoding["input_ids"],
                attention_mask=encoding["attention_mask"],
                labels=label_ids,
            )
            output.loss.backward()
            optimizer.step()
            optimizer.zero_grad()
            total_loss += output.loss.item() * len(indices)
        loss_history.append(total_loss / len(train_chunks))

        if val:
            epoch_f1 = validation_f1(
                lambda seqs: _predict_raw(model, tokenizer, seqs, hp, torch),
                val,
                val_gold,
            )
            val_history.append(epoch_f1)
            if epoch_f1 > best_f1:
                best_f1 = epoch_f1
                best_state = copy.deepcopy(model.state_dict())

    if best_state is not None:
        model.load_state_dict(best_state)
    state = EncoderState(
        model=model,
        tokenizer=tokenizer,
        loss_history=loss_history,
        val_f1_history=val_history,
    )
    return TrainedTagger(
        spec=spec, fitted_state=state, val_f1=max(best_f1, 0.0)
    )


def predict_encoder(tagger: TrainedTagger, sequences: Sequence) -> list[list[str]]:
    torch, _ = _require_runtime()
    state = tagger.fitted_state
    return _predict_raw(
        state.model, state.tokenizer, sequences, tagger.spec.hyperparams, torch
    )


def save_encoder(tagger: TrainedTagger, path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    state = tagger.fitted_state
    state.model.save_pretrained(path)
    state.tokenizer.save_pretrained(path)
    meta = {
        "spec": tagger.spec.to_dict(),
        "val_f1": tagger.val_f1,
        "loss_history": state.loss_history,
        "val_f1_history": state.val_f1_history,
    }
    (path / "ate_meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return path


def load_encoder(path: str | Path) -> TrainedTagger:
    _, transformers = _require_runtime()
    path = Path(path)
    meta = json.loads((path / "ate_meta.json").read_text(encoding="utf-8"))
    model = transformers.AutoModelForTokenClassification.from_pretrained(path)
    tokenizer = transformers.AutoTokenizer.from_pretrained(path)
    state = EncoderState(
        model=model,
        tokenizer=tokenizer,
        loss_history=meta.get("loss_history", []),
        val_f1_history=meta.get("val_f1_history", []),
    )
    return TrainedTagger(
        spec=BackendSpec.from_dict(meta["spec"]),
        fitted_state=state,
        val_f1=meta.get("val_f1", 0.0),
    )
