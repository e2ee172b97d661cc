"""Builds a tiny local transformer so tests run without hub access."""

import json

import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import GPT2Config, GPT2Model, PreTrainedTokenizerFast

WORDS = (
    "the quick brown fox jumps over lazy dog hello world good bad happy sad "
    "bank river money tree light dark fast slow big small one two three"
).split()


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    vocab = {"[PAD]": 0, "[UNK]": 1}
    for word in WORDS:
        vocab[word] = len(vocab)
    tok = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    fast = PreTrainedTokenizerFast(tokenizer_object=tok, pad_token="[PAD]", unk_token="[UNK]")

    config = GPT2Config(
        vocab_size=len(vocab), n_positions=64, n_embd=32, n_layer=2, n_head=2,
        bos_token_id=0, eos_token_id=0,
    )
    torch.manual_seed(0)
    model = GPT2Model(config)
    assert sum(p.numel() for p in model.parameters()) < 30_000_000

    target = tmp_path_factory.mktemp("tiny-model")
    model.save_pretrained(target)
    fast.save_pretrained(target)
    return str(target)


@pytest.fixture()
def classification_jsonl(tmp_path):
    rows = [
        {"text": "the quick brown fox", "label": 0, "split": "train"},
        {"text": "hello world", "label": 1, "split": "train"},
        {"text": "good happy light", "label": 0, "split": "train"},
        {"text": "bad sad dark", "label": 1, "split": "train"},
        {"text": "fast river money", "label": 0, "split": "validation"},
        {"text": "slow bank tree", "label": 1, "split": "validation"},
        {"text": "one two three", "label": 0, "split": "test"},
        {"text": "big small dog", "label": 1, "split": "test"},
        {"text": "lazy dog jumps over", "label": 0},
        {"text": "the world is good", "label": 1},
    ]
    path = tmp_path / "cls.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows))
    return str(path)


@pytest.fixture()
def pair_jsonl(tmp_path):
    rows = [
        {"text_a": "hello world", "text_b": "hello world", "score": 5.0, "split": "train"},
        {"text_a": "good happy", "text_b": "bad sad", "score": 1.0, "split": "train"},
        {"text_a": "fast fox", "text_b": "quick fox", "score": 4.0, "split": "validation"},
        {"text_a": "river bank", "text_b": "money bank", "score": 2.5, "split": "test"},
    ]
    path = tmp_path / "pairs.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows))
    return str(path)
