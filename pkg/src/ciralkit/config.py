"""Pipeline configuration: TOML file, then command-line overrides."""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .jhpolo.qc import BANNED_WORDS
from .train import TRAINING_METADATA

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "paths": {
        "corpus": None,
        "sparse_index": None,
        "plaid_index": None,
        "embeddings": None,
        "queries": None,
        "qrels": None,
        "pairs": None,
        "examples": None,
        "triples": None,
    },
    "bm25": {"k1": 0.9, "b": 0.4},
    "rm3": {"fb_docs": 10, "fb_terms": 10, "orig_weight": 0.5},
    "encoder": {"dim": 128, "query_len": 32, "doc_maxlen": 180, "mask_symbol": "[MASK]"},
    "index": {"k_centroids": 0, "iters": 20},
    "search": {"k": 100, "n_probe": 4, "n_candidates": 0},
    "mining": {
        "min_query_doc_chars": 150,
        "top_k": 20,
        "max_score_ratio": 0.65,
        "max_lcs_frac": 0.60,
        "min_non_lcs_chars": 20,
        "min_cand_chars": 150,
        "matching": "max",
        "workers": 1,
    },
    "qc": {"banned_words": sorted(BANNED_WORDS), "margin": 0.15, "scorer": "stub"},
    "llm": {"url": "", "model": "", "max_retries": 4, "base_delay": 1.0, "concurrency": 4, "rate_limit": 0.0},
    "training": TRAINING_METADATA,
}


class ConfigError(ValueError):
    pass


def _merge(base: dict[str, Any], extra: dict[str, Any], where: str = "") -> None:
    for key, value in extra.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict) and key != "training":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key} must be a table")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value


def load_config(path: str | Path | None) -> dict[str, Any]:
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _merge(cfg, data)
    return cfg


def config_hash(settings: dict[str, Any]) -> str:
    blob = json.dumps(settings, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
