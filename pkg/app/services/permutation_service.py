"""Routing input generation"""

import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from app.models.experiment import PermSource
from app.models.network import NetworkConfig
from app.services.rng_service import Purpose, keyed_hash, uniform_below
from app.utils.exceptions import DomainError, PermutationValidationError, ReportIOError
from app.utils.validators import validate_permutation, validate_positive

logger = logging.getLogger(__name__)


def uniform_permutation(n: int, seed: int) -> np.ndarray:
    """Fisher-Yates shuffle of [0, n) driven by the keyed generator"""
    perm = list(range(n))
    if n > 1:
        positions = np.arange(n - 1, 0, -1, dtype=np.int64)
        swaps = uniform_below(keyed_hash(seed, positions, 0, Purpose.SHUFFLE), positions + 1).tolist()
        for k, j in zip(positions.tolist(), swaps):
            perm[k], perm[j] = perm[j], perm[k]
    return np.asarray(perm, dtype=np.int64)


def stress_permutation(cfg: NetworkConfig) -> np.ndarray:
    """
    Permutation that packs destinations sharing (group, temporary destination
    group) onto packets from consecutive, distinct source groups

    Destinations are ordered by (group, j mod g, j), so j and j+g inside a
    group are neighbours; sources are taken round-robin over the groups.

    Raises:
        DomainError: If d <= g
    """
    if cfg.d <= cfg.g:
        raise DomainError(f"The stress permutation needs d > g, got {cfg}")
    j = np.arange(cfg.n, dtype=np.int64)
    dests = j[np.lexsort((j, j % cfg.g, j // cfg.d))]
    m = np.arange(cfg.n, dtype=np.int64)
    sources = (m % cfg.g) * cfg.d + m // cfg.g
    perm = np.empty(cfg.n, dtype=np.int64)
    perm[sources] = dests
    return perm


def load_permutation(path: Path, n: int) -> np.ndarray:
    """
    Read a permutation from a JSON array or whitespace/comma separated integers

    Raises:
        ReportIOError: If the file cannot be read
        PermutationValidationError: If its contents are not a bijection on [0, n)
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ReportIOError(f"Cannot read permutation file {path}: {e}")
    text = text.strip()
    try:
        values = json.loads(text) if text.startswith("[") else [int(t) for t in text.replace(",", " ").split()]
    except ValueError as e:
        raise PermutationValidationError(f"Permutation file {path} is not a list of integers: {e}")
    return validate_permutation(values, n)


def generate_permutation(
    source: PermSource,
    cfg: NetworkConfig,
    seed: int = 0,
    path: Optional[Path] = None,
) -> np.ndarray:
    """
    Build a routing input

    Args:
        source: UNIFORM, IDENTITY, REVERSAL, STRESS or FILE
        cfg: Network configuration (n = d * g)
        seed: Seed of the UNIFORM shuffle
        path: Permutation file for FILE

    Returns:
        perm with perm[i] = destination of packet i

    Raises:
        DomainError: STRESS with d <= g, FILE without path
        PermutationValidationError: FILE contents not a bijection
    """
    n = cfg.n
    validate_positive("n", n)

    if source is PermSource.UNIFORM:
        return uniform_permutation(n, seed)
    if source is PermSource.IDENTITY:
        return np.arange(n, dtype=np.int64)
    if source is PermSource.REVERSAL:
        return np.arange(n - 1, -1, -1, dtype=np.int64)
    if source is PermSource.STRESS:
        return stress_permutation(cfg)
    if source is PermSource.FILE:
        if path is None:
            raise DomainError("A FILE permutation source needs a path")
        logger.info(f"Loading permutation for {cfg} from {path}")
        return load_permutation(path, n)
    raise DomainError(f"Unknown permutation source: {source}")
