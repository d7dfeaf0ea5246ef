"""Run a pretrained transformer over a text file and export token embeddings.

source="encoder" takes hidden states from the encoder (or from the model
itself for encoder-only architectures). source="decoder" requires an
encoder-decoder model and takes decoder hidden states: teacher-forced
over a reference target when a targets file is supplied, otherwise over
a greedy generation. The hidden layer is selectable (default: final).

Inference runs in eval mode under no_grad, so output is deterministic
given fixed weights and inputs. Lines that fail to tokenize are skipped
and logged with their index; an extraction yielding no sequences at all
is an error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .format import write_embsq

log = logging.getLogger("embsq_extract")


class ExtractError(Exception):
    pass


@dataclass
class ExtractSpec:
    model_id: str
    source: str               # "encoder" | "decoder"
    dataset_path: str
    max_len: int
    out_path: str
    targets_path: str | None = None   # teacher forcing for source="decoder"
    layer: int = -1                   # hidden-state layer, -1 = final
    batch_size: int = 8

    def validate(self) -> None:
        if self.source not in ("encoder", "decoder"):
            raise ExtractError(f"source must be encoder or decoder, got {self.source!r}")
        if self.max_len < 1:
            raise ExtractError("max_len must be >= 1")
        if self.batch_size < 1:
            raise ExtractError("batch_size must be >= 1")


def _read_lines(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as f:
            return [line.rstrip("\n") for line in f]
    except OSError as exc:
        raise ExtractError(f"cannot read {path}: {exc}") from exc


def _load_model(spec: ExtractSpec):
    from transformers import AutoModel, AutoModelForSeq2SeqLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(spec.model_id)
    if spec.source == "decoder":
        model = AutoModelForSeq2SeqLM.from_pretrained(spec.model_id)
        if not model.config.is_encoder_decoder:
            raise ExtractError("source=decoder needs an encoder-decoder model")
    else:
        model = AutoModel.from_pretrained(spec.model_id)
    model.eval()
    return tokenizer, model


def _encode_batch(tokenizer, texts: list[str], max_len: int):
    return tokenizer(texts, return_tensors="pt", padding=True,
                     truncation=True, max_length=max_len)


@torch.no_grad()
def _encoder_states(model, enc, layer: int) -> torch.Tensor:
    if getattr(model.config, "is_encoder_decoder", False):
        encoder = model.get_encoder()
    else:
        encoder = model
    out = encoder(input_ids=enc["input_ids"],
                  attention_mask=enc["attention_mask"],
                  output_hidden_states=True)
    return out.hidden_states[layer]


@torch.no_grad()
def _decoder_states(model, tokenizer, enc, target: str | None,
                    max_len: int, layer: int) -> torch.Tensor:
    if target is not None:
        labels = tokenizer(target, return_tensors="pt", truncation=True,
                           max_length=max_len)["input_ids"]
        out = model(input_ids=enc["input_ids"],
                    attention_mask=enc["attention_mask"],
                    labels=labels, output_hidden_states=True)
        return out.decoder_hidden_states[layer]
    ids = model.generate(input_ids=enc["input_ids"],
                         attention_mask=enc["attention_mask"],
                         max_new_tokens=max_len, num_beams=1, do_sample=False)
    ids = ids[:, : max_len]
    out = model(input_ids=enc["input_ids"],
                attention_mask=enc["attention_mask"],
                decoder_input_ids=ids, output_hidden_states=True)
    return out.decoder_hidden_states[layer]


def extract(spec: ExtractSpec) -> int:
    """Write one embedding sequence per dataset line; returns the count."""
    spec.validate()
    lines = _read_lines(spec.dataset_path)
    if not lines:
        raise ExtractError(f"{spec.dataset_path} is empty")
    targets: list[str] | None = None
    if spec.targets_path is not None:
        targets = _read_lines(spec.targets_path)
        if len(targets) != len(lines):
            raise ExtractError("targets file must have one line per input line")

    tokenizer, model = _load_model(spec)
    sequences: list[np.ndarray] = []

    if spec.source == "encoder":
        for start in range(0, len(lines), spec.batch_size):
            batch = lines[start : start + spec.batch_size]
            try:
                enc = _encode_batch(tokenizer, batch, spec.max_len)
                states = _encoder_states(model, enc, spec.layer)
            except Exception as exc:  # whole batch failed: retry line by line
                log.warning("batch at line %d failed (%s); retrying singly",
                            start, exc)
                enc = states = None
            if states is not None:
                mask = enc["attention_mask"]
                for row in range(len(batch)):
                    n_tok = int(mask[row].sum())
                    if n_tok < 1:
                        log.warning("skipping line %d: no tokens", start + row)
                        continue
                    sequences.append(states[row, :n_tok].numpy().astype(np.float32))
                continue
            for row, text in enumerate(batch):
                idx = start + row
                try:
                    enc = _encode_batch(tokenizer, [text], spec.max_len)
                    states = _encoder_states(model, enc, spec.layer)
                    n_tok = int(enc["attention_mask"][0].sum())
                    if n_tok < 1:
                        raise ExtractError("no tokens")
                    sequences.append(states[0, :n_tok].numpy().astype(np.float32))
                except Exception as exc:
                    log.warning("skipping line %d: %s", idx, exc)
    else:
        for idx, text in enumerate(lines):
            try:
                enc = _encode_batch(tokenizer, [text], spec.max_len)
                target = targets[idx] if targets is not None else None
                states = _decoder_states(model, tokenizer, enc, target,
                                         spec.max_len, spec.layer)
                if states.shape[1] < 1:
                    raise ExtractError("no decoder tokens")
                sequences.append(states[0].numpy().astype(np.float32))
            except Exception as exc:
                log.warning("skipping line %d: %s", idx, exc)

    if not sequences:
        raise ExtractError("no line could be embedded")
    dims = {s.shape[1] for s in sequences}
    if len(dims) != 1:
        raise ExtractError(f"inconsistent hidden sizes {dims}")
    write_embsq(sequences, spec.out_path)
    return len(sequences)
