"""Dump mean-pooled per-layer transformer representations into LREP files."""

from .extract import ExtractionJob, extract, pooled_stacks, read_jsonl
from .lrep import write_classification, write_pairs

__version__ = "0.1.0"
