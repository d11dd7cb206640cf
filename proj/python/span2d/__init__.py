"""Nested entity extraction with a two-dimensional span head."""

from ._span2d import (
    DataError,
    Model,
    NumericError,
    Tokenizer,
    UsageError,
    decode,
    evaluate,
    predict,
    run_cli,
    synthetic_corpus,
    talu,
)

__all__ = [
    "DataError",
    "Model",
    "NumericError",
    "Tokenizer",
    "UsageError",
    "decode",
    "evaluate",
    "predict",
    "run_cli",
    "synthetic_corpus",
    "talu",
]
