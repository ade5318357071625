"""
homux Utility Functions
File checks, logging setup, seed derivation and stage completion flags.
"""

import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from homux import __version__

try:
    from rich.logging import RichHandler
    RICH_AVAILABLE = True
except ImportError:
    RICH_AVAILABLE = False

LOG_ENV_VAR = "HOMUX_LOG"
LOG_FORMAT = "[%(asctime)s] [%(levelname)s] %(message)s"
LOG_DATEFMT = "%H:%M:%S"


def setup_logging(level: str = None) -> int:
    """
    Configure the root logger from HOMUX_LOG (or an explicit level).

    Returns:
        The numeric level applied
    """
    name = (level or os.environ.get(LOG_ENV_VAR, "INFO")).upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        numeric = logging.INFO

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    if RICH_AVAILABLE:
        handler = RichHandler(show_path=False, log_time_format=LOG_DATEFMT)
        handler.setFormatter(logging.Formatter("%(message)s"))
    else:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))

    root.addHandler(handler)
    root.setLevel(numeric)
    return numeric


def check_input_files(paths: Sequence[str]) -> Tuple[List[str], List[str]]:
    """
    Check which input files exist.

    Args:
        paths: File paths to check

    Returns:
        Tuple of (found_files, missing_files)
    """
    found = []
    missing = []

    for path in paths:
        if os.path.isfile(path):
            found.append(path)
        else:
            missing.append(path)

    return found, missing


# === Hashing and seed derivation ===

def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and fixed separators (hash-stable)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def name_key(name: Any) -> int:
    """Stable 32-bit integer key for a stream name."""
    return int.from_bytes(hashlib.sha256(str(name).encode("utf-8")).digest()[:4], "big")


def derive_rng(seed: int, *names: Any) -> np.random.Generator:
    """
    Counter-based generator for a named stream under a master seed.

    The stream depends only on (seed, names), never on call order, so
    parallel schedules reproduce serial results exactly.

    Args:
        seed: Master seed
        names: Stream path, e.g. ("stage1", layer, candidate_id)

    Returns:
        numpy Generator backed by Philox
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(name_key(n) for n in names))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed: int, *names: Any) -> int:
    """Integer seed for libraries that take a plain seed (igraph, random)."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(name_key(n) for n in names))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


# === Stage Completion Flags ===

STAGE_NAMES = ["network", "candidates", "validate", "multiplex", "metrics"]


def get_done_flag_path(stage: str, directory: str = ".") -> str:
    """Get path to .done flag file for a stage."""
    return os.path.join(directory, f".{stage}.done")


def is_stage_complete(stage: str, directory: str = ".", config_hash: str = None) -> bool:
    """
    Check if a stage has completed (has .done flag).

    When a config hash is given, the flag only counts if it was written
    under the same configuration.
    """
    flag_path = get_done_flag_path(stage, directory)
    if not os.path.exists(flag_path):
        return False
    if config_hash is None:
        return True
    with open(flag_path, "r") as f:
        return f.read().strip() == f"config={config_hash}"


def mark_stage_complete(stage: str, directory: str, config_hash: str) -> None:
    """Mark a stage as complete; the flag records the config hash only."""
    os.makedirs(directory, exist_ok=True)
    with open(get_done_flag_path(stage, directory), "w") as f:
        f.write(f"config={config_hash}\n")


def clear_stage_flag(stage: str, directory: str = ".") -> None:
    """Remove .done flag for a stage."""
    flag_path = get_done_flag_path(stage, directory)
    if os.path.exists(flag_path):
        os.remove(flag_path)


def format_float(value: float) -> str:
    """Fixed, platform-stable float rendering for TSV artifacts."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "nan"
    return repr(float(value))


def meta_block(config_hash: str, extra: Dict[str, Any] = None) -> Dict[str, Any]:
    """Metadata header carried by every artifact."""
    block = {"tool": "homux", "version": __version__, "config_hash": config_hash}
    if extra:
        block.update(extra)
    return block
