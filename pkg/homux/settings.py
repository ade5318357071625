"""
homux Settings Module
User-configurable pipeline settings: defaults, JSON loading and the
configuration hash stamped into every artifact.
"""

import copy
import json
import os
from typing import Any, Dict, Optional

from homux.errors import ConfigError
from homux.utils import canonical_json, sha256_text

# Default pipeline settings
DEFAULT_SETTINGS: Dict[str, Any] = {
    "seed": None,                 # Mandatory master seed
    "jobs": 1,                    # Worker cap; never changes results
    "output_dir": "homux_out",
    "layers": {},                 # name -> {"data": path or [paths], "ground_truth": path}
    "scale_map": None,            # JSON {scale: [item numbers]}
    "network": {
        "methods": ["nonparanormal"],   # nonparanormal and/or polychoric
        "winsorize": False,
        "ebic_gamma": 0.5,
        "n_lambda": 100,
        "lambda_min_ratio": 0.01,
        "lambda_grid": None,
    },
    "candidates": {
        "k_min": 3,
        "k_max": 5,
        "network_based": True,
        "gamma_potts": 1.0,
        "spins_max": 25,
        "start_temp": 1.0,
        "stop_temp": 0.01,
        "cool_fact": 0.99,
        "restarts": 5,
        "positive_only": False,
        "top_m": 200,
        "min_gain": 0.02,
        "sample_per_pair": 100,
        "intra_cap": 5000,
        "intra_exhaustive": False,
        "inter_subscale": True,
    },
    "validation": {
        "n_perm": 1000,
        "n_boot": 2000,
        "alpha_fdr": 0.05,
        "ci_level": 0.95,
        "effect_floor": 0.15,     # nats
        "outlier_level": 0.99,
        "max_dropped": 0.05,
        "batch_size": 100,
        "fdr_family": "order",    # "order": per (layer, order); "layer": per layer
    },
    "metrics": {
        "top_n": 10,
        "multiscale_only": False,
    },
}

# Keys that must not influence artifact contents
HASH_EXCLUDED_KEYS = ("jobs", "output_dir")


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge `override` into a copy of `base`."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and merged[key]:
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_settings(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load settings from a JSON file merged over the defaults.

    Args:
        path: Config file; None returns the defaults

    Returns:
        Resolved settings dict
    """
    if path is None:
        return copy.deepcopy(DEFAULT_SETTINGS)
    if not os.path.isfile(path):
        raise ConfigError(f"Config file not found: {path}")

    try:
        with open(path, "r") as f:
            loaded = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e

    if not isinstance(loaded, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    unknown = sorted(set(loaded) - set(DEFAULT_SETTINGS))
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
    return deep_merge(DEFAULT_SETTINGS, loaded)


def save_settings(settings: Dict[str, Any], path: str) -> None:
    """Write resolved settings as indented, key-sorted JSON."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(settings, f, indent=2, sort_keys=True)
        f.write("\n")


def hashable_settings(settings: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in settings.items() if k not in HASH_EXCLUDED_KEYS}


def config_hash(settings: Dict[str, Any], input_digests: Optional[Dict[str, str]] = None) -> str:
    """
    SHA-256 of the canonical settings JSON (minus jobs and output_dir),
    optionally bound to the digests of the input files.
    """
    payload = {"settings": hashable_settings(settings)}
    if input_digests:
        payload["inputs"] = dict(sorted(input_digests.items()))
    return sha256_text(canonical_json(payload))
