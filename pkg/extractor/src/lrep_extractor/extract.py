"""Extract mean-pooled per-layer hidden states from a frozen transformer.

For every example, the model runs once with all hidden states returned (the
embedding output plus each block's output, so L = num_hidden_layers + 1), each
layer is mean-pooled over the non-padding token positions only, and the
resulting (L, d) stacks are written to an LREP file with the example's label
or pair score.

Datasets are JSONL files: one object per line with either
    {"text": ..., "label": ...}                       (classification)
    {"text_a": ..., "text_b": ..., "score": ...}      (pair regression)
plus an optional "split" field (train / validation / test).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from . import lrep


@dataclass
class ExtractionJob:
    model: str  # model id or local path
    dataset: str  # JSONL path
    task: str = "classification"  # "classification" | "pair"
    output: str = "out.lrep"
    batch_size: int = 8
    max_length: int = 128
    default_split: str = "test"
    score_scale: float = 1.0  # pair scores are divided by this (e.g. 5 for 0-5 scales)
    device: str = "cpu"

    def __post_init__(self):
        if self.task not in ("classification", "pair"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.default_split not in lrep.SPLIT_TAGS:
            raise ValueError(f"unknown split {self.default_split!r}")
        if self.batch_size < 1 or self.max_length < 1:
            raise ValueError("batch_size and max_length must be positive")


def read_jsonl(path: str) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: dataset is empty")
    return rows


def load_model(name_or_path: str, device: str):
    tokenizer = AutoTokenizer.from_pretrained(name_or_path)
    model = AutoModel.from_pretrained(name_or_path)
    if tokenizer.pad_token is None:
        # batching needs a pad id; padding positions are masked out of the
        # pooling, so reusing EOS changes nothing downstream
        tokenizer.pad_token = tokenizer.eos_token
    model.eval()
    model.to(device)
    return tokenizer, model


@torch.no_grad()
def pooled_stacks(texts: list[str], tokenizer, model, job: ExtractionJob) -> np.ndarray:
    """Return (N, L, d) float32 stacks, mean-pooled over non-padding tokens."""
    stacks = []
    overflowed = 0
    for start in range(0, len(texts), job.batch_size):
        batch = texts[start : start + job.batch_size]
        enc = tokenizer(
            batch,
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=job.max_length,
        )
        if (enc["attention_mask"].sum(dim=1) == job.max_length).any():
            overflowed += int((enc["attention_mask"].sum(dim=1) == job.max_length).sum())
        enc = {k: v.to(job.device) for k, v in enc.items()}
        out = model(**enc, output_hidden_states=True)
        hidden = torch.stack(out.hidden_states, dim=1)  # (B, L, T, d)
        mask = enc["attention_mask"][:, None, :, None].to(hidden.dtype)  # (B, 1, T, 1)
        pooled = (hidden * mask).sum(dim=2) / mask.sum(dim=2)
        stacks.append(pooled.to(torch.float32).cpu().numpy())
    if overflowed:
        warnings.warn(f"{overflowed} sequence(s) hit max_length={job.max_length} and were truncated")
    return np.concatenate(stacks, axis=0)


def _split_tags(rows: list[dict], job: ExtractionJob) -> np.ndarray:
    tags = np.empty(len(rows), dtype=np.uint8)
    for i, row in enumerate(rows):
        name = row.get("split", job.default_split)
        if name not in lrep.SPLIT_TAGS:
            raise ValueError(f"example {i}: unknown split {name!r}")
        tags[i] = lrep.SPLIT_TAGS[name]
    return tags


def extract(job: ExtractionJob) -> dict:
    """Run the job and write the LREP file; returns a summary dict."""
    rows = read_jsonl(job.dataset)
    tokenizer, model = load_model(job.model, job.device)
    expected_layers = model.config.num_hidden_layers + 1  # embedding + blocks
    splits = _split_tags(rows, job)

    def check_layers(stacks: np.ndarray) -> np.ndarray:
        if stacks.shape[1] != expected_layers:
            raise RuntimeError(
                f"model produced {stacks.shape[1]} layer representations, config says {expected_layers}"
            )
        return stacks

    if job.task == "classification":
        texts = [str(row["text"]) for row in rows]
        labels = np.array([int(row["label"]) for row in rows], dtype=np.int64)
        if labels.min() < 0:
            raise ValueError("labels must be nonnegative integers")
        n_classes = int(labels.max()) + 1
        stacks = check_layers(pooled_stacks(texts, tokenizer, model, job))
        lrep.write_classification(job.output, stacks, labels, splits, n_classes)
        summary_extra = {"K": n_classes}
    else:
        texts_a = [str(row["text_a"]) for row in rows]
        texts_b = [str(row["text_b"]) for row in rows]
        gold = np.array([float(row["score"]) for row in rows]) / job.score_scale
        if gold.min() < 0.0 or gold.max() > 1.0:
            raise ValueError("scores must land in [0, 1] after score_scale division")
        stacks_a = check_layers(pooled_stacks(texts_a, tokenizer, model, job))
        stacks_b = check_layers(pooled_stacks(texts_b, tokenizer, model, job))
        lrep.write_pairs(job.output, stacks_a, stacks_b, gold, splits)
        stacks = stacks_a
        summary_extra = {"K": 0}

    return {
        "output": job.output,
        "task": job.task,
        "n_examples": len(rows),
        "L": int(stacks.shape[1]),
        "d": int(stacks.shape[2]),
        "model": job.model,
        **summary_extra,
    }
