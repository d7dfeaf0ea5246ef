"""Offline model fixtures: tiny randomly initialized transformers.

These write fully self-contained model directories loadable through the
standard from_pretrained machinery without network access. Weights are
seeded, so extraction over them is reproducible.
"""

from __future__ import annotations

import os


def build_tiny_encoder(path, hidden_size: int = 32):
    """BERT-style encoder-only model with a small wordpiece vocabulary."""
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    os.makedirs(path, exist_ok=True)
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += list("abcdefghijklmnopqrstuvwxyz0123456789")
    vocab += [f"##{c}" for c in "abcdefghijklmnopqrstuvwxyz0123456789"]
    vocab += ["sample", "sentence", "number", "the", "quick", "brown", "fox"]
    vocab_file = os.path.join(path, "vocab.txt")
    with open(vocab_file, "w") as f:
        f.write("\n".join(vocab) + "\n")
    tokenizer = BertTokenizer(vocab_file)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=hidden_size,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=2 * hidden_size,
        max_position_embeddings=64,
    )
    torch.manual_seed(0)
    model = BertModel(config)
    model.save_pretrained(path)
    tokenizer.save_pretrained(path)
    return path


def _byte_level_alphabet() -> list[str]:
    """The byte-to-unicode alphabet used by GPT2-style BPE tokenizers."""
    bs = list(range(ord("!"), ord("~") + 1)) + \
        list(range(ord("\xa1"), ord("\xac") + 1)) + \
        list(range(ord("\xae"), ord("\xff") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return [chr(c) for c in cs]


def build_tiny_seq2seq(path, hidden_size: int = 32):
    """BART-style encoder-decoder with a byte-level vocabulary (no merges)."""
    import json

    import torch
    from transformers import BartConfig, BartForConditionalGeneration, BartTokenizer

    os.makedirs(path, exist_ok=True)
    specials = ["<s>", "<pad>", "</s>", "<unk>", "<mask>"]
    byte_chars = _byte_level_alphabet()
    vocab = {tok: i for i, tok in enumerate(specials + byte_chars)}
    vocab_file = os.path.join(path, "vocab.json")
    merges_file = os.path.join(path, "merges.txt")
    with open(vocab_file, "w") as f:
        json.dump(vocab, f)
    with open(merges_file, "w") as f:
        f.write("#version: 0.2\n")
    tokenizer = BartTokenizer(vocab_file, merges_file)
    config = BartConfig(
        vocab_size=len(vocab),
        d_model=hidden_size,
        encoder_layers=2,
        decoder_layers=2,
        encoder_attention_heads=4,
        decoder_attention_heads=4,
        encoder_ffn_dim=2 * hidden_size,
        decoder_ffn_dim=2 * hidden_size,
        max_position_embeddings=128,
        pad_token_id=vocab["<pad>"],
        bos_token_id=vocab["<s>"],
        eos_token_id=vocab["</s>"],
        decoder_start_token_id=vocab["</s>"],
        forced_eos_token_id=None,
    )
    torch.manual_seed(0)
    model = BartForConditionalGeneration(config)
    model.save_pretrained(path)
    tokenizer.save_pretrained(path)
    return path
