"""
Utilities Module

This module contains utility functions shared by the toolkit: logging setup,
seed stream derivation, the thread pool used for replica ensembles and the
provenance-stamped CSV writer.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, TypeVar, Union

import numpy as np
import pandas as pd

LIBRARY_VERSION = "0.3.0"

SeedLike = Union[int, np.random.SeedSequence]

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def setup_logging(level: int = logging.INFO) -> None:
    """
    Set up logging configuration.

    Args:
        level: Logging level (default: INFO)
    """
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    )


def child_seed(seed: SeedLike, *keys: int) -> np.random.SeedSequence:
    """
    Derive an independent seed stream from a master seed.

    The child depends only on (seed, keys), so adding modes or replicas never
    reshuffles the streams handed out earlier.

    Args:
        seed: Master seed or an already derived SeedSequence
        keys: Path of non-negative integers below the master

    Returns:
        SeedSequence for the requested stream
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(int(k) for k in keys)
        )
    if int(seed) < 0:
        raise ValueError(f"Seeds must be non-negative, got {seed}")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))


def make_rng(seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(seed)


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Map func over items, optionally on a thread pool.

    Results keep the order of items whatever the thread count, so reductions
    done afterwards are reproducible.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def write_csv(
    path: str,
    frame: pd.DataFrame,
    header: Optional[Dict[str, Any]] = None,
    float_format: str = "%.10g",
) -> str:
    """
    Write a data frame as CSV preceded by `# key=value` provenance lines.

    Args:
        path: Destination file
        frame: Table to write
        header: Provenance entries, written in the given order
        float_format: printf-style format for floats

    Returns:
        The path written
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as handle:
        for key, value in (header or {}).items():
            handle.write(f"# {key}={value}\n")
        frame.to_csv(handle, index=False, float_format=float_format, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: str) -> pd.DataFrame:
    """Read a CSV written by write_csv, skipping its provenance lines."""
    return pd.read_csv(path, comment="#")


def read_csv_header(path: str) -> Dict[str, str]:
    header: Dict[str, str] = {}
    with open(path) as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
    return header
