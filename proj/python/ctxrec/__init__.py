"""Context-aware pre-training for ranking."""

import json

from ._core import (
    ConfigError,
    DataError,
    DimensionError,
    Error,
    NumericError,
    PretrainModel,
    auc,
    cosine_similarity,
    gaussian_kl,
    hidden_moments,
    ndcg_at_k,
    pretrain_fit,
    similarity_penalty,
    softmax,
    synthetic_tsv,
)
from . import _core


def parse_config(config, preset=None, seed=None):
    """Validate a config (dict or JSON text) and return the resolved snapshot as a dict."""
    text = config if isinstance(config, str) else json.dumps(config)
    return json.loads(_core.parse_config(text, preset, seed))


def run_experiment(config):
    """Run pre-training, ranker training and evaluation for a config dict."""
    text = config if isinstance(config, str) else json.dumps(config)
    return _core.run_experiment(text)


__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "Error",
    "NumericError",
    "PretrainModel",
    "auc",
    "cosine_similarity",
    "gaussian_kl",
    "hidden_moments",
    "ndcg_at_k",
    "parse_config",
    "pretrain_fit",
    "run_experiment",
    "similarity_penalty",
    "softmax",
    "synthetic_tsv",
]
