"""Counter-based keyed randomness

Every draw is a pure function of (seed, packet id, step, purpose). The key is
folded through the splitmix64 finalizer three times:

    h = mix(seed ^ SALT[purpose])
    h = mix(h ^ packet_id)
    h = mix(h ^ step)

    mix(x): z = x + 0x9E3779B97F4A7C15
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
            return z ^ (z >> 31)            (all arithmetic mod 2^64)

Uniform group:   ((h >> 32) * g) >> 32            for 1 <= g < 2^32
Bernoulli(p):    (h >> 11) < floor(p * 2^53)
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from app.utils.exceptions import DomainError
from app.utils.validators import validate_probability

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX_MUL_1 = np.uint64(0xBF58476D1CE4E5B9)
MIX_MUL_2 = np.uint64(0x94D049BB133111EB)
BERNOULLI_BITS = 53
MAX_GROUPS = 1 << 32


class Purpose(IntEnum):
    """What a draw is used for; distinct purposes never share a stream"""

    COLOR = 1
    COIN = 2
    SHUFFLE = 3
    RUN = 4


PURPOSE_SALT = {
    Purpose.COLOR: 0x243F6A8885A308D3,
    Purpose.COIN: 0x13198A2E03707344,
    Purpose.SHUFFLE: 0xA4093822299F31D0,
    Purpose.RUN: 0x082EFA98EC4E6C89,
}


@dataclass(frozen=True)
class RandomKey:
    """Key of a single draw"""

    seed: int
    packet_id: int
    step: int
    purpose: Purpose


def parse_seed(text: str | int) -> int:
    """
    Parse a 64-bit unsigned seed given in decimal or 0x-hex

    Raises:
        DomainError: If the value is not an integer in [0, 2^64)
    """
    if isinstance(text, int):
        value = text
    else:
        try:
            value = int(text.strip(), 0)
        except ValueError:
            raise DomainError(f"Seed must be a decimal or 0x-hex integer, got {text!r}")
    if not 0 <= value <= MASK64:
        raise DomainError(f"Seed must fit in 64 unsigned bits, got {value}")
    return value


def mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer over a uint64 array"""
    z = x + GOLDEN_GAMMA
    z = (z ^ (z >> np.uint64(30))) * MIX_MUL_1
    z = (z ^ (z >> np.uint64(27))) * MIX_MUL_2
    return z ^ (z >> np.uint64(31))


def _as_u64(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == np.uint64:
        return np.atleast_1d(arr)
    return np.atleast_1d(arr.astype(np.int64).astype(np.uint64))


def keyed_hash(seed: int, packet_ids, step: int, purpose: Purpose) -> np.ndarray:
    """64-bit hash of every key (seed, packet_ids[k], step, purpose)"""
    with np.errstate(over="ignore"):
        base = np.atleast_1d(np.uint64((seed ^ PURPOSE_SALT[purpose]) & MASK64))
        h = mix64(base)
        h = mix64(h ^ _as_u64(packet_ids))
        return mix64(h ^ np.uint64(step & MASK64))


def uniform_below(hashes: np.ndarray, bounds) -> np.ndarray:
    """Map 64-bit hashes to [0, bound) by a 32x32 multiply-shift"""
    bounds_u = _as_u64(bounds)
    with np.errstate(over="ignore"):
        return ((hashes >> np.uint64(32)) * bounds_u >> np.uint64(32)).astype(np.int64)


def uniform_groups(seed: int, packet_ids, step: int, g: int) -> np.ndarray:
    """Vectorized derive_uniform_group over many packets"""
    if not 1 <= g < MAX_GROUPS:
        raise DomainError(f"Group count must lie in [1, 2^32), got {g}")
    return uniform_below(keyed_hash(seed, packet_ids, step, Purpose.COLOR), g)


def bernoulli_draws(seed: int, packet_ids, step: int, p) -> np.ndarray:
    """Vectorized derive_bernoulli; p is a scalar or one probability per packet"""
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any((p_arr < 0.0) | (p_arr > 1.0)) or np.any(np.isnan(p_arr)):
        raise DomainError("Probabilities must lie in [0, 1]")
    threshold = np.floor(p_arr * float(1 << BERNOULLI_BITS)).astype(np.uint64)
    draws = keyed_hash(seed, packet_ids, step, Purpose.COIN) >> np.uint64(64 - BERNOULLI_BITS)
    return draws < threshold


def derive_uniform_group(key: RandomKey, g: int) -> int:
    """
    Uniform group in [0, g), deterministic in key

    Raises:
        DomainError: If g < 1
    """
    if g < 1:
        raise DomainError(f"Group count must be positive, got {g}")
    h = keyed_hash(key.seed, key.packet_id, key.step, key.purpose)
    return int(uniform_below(h, g)[0])


def derive_bernoulli(key: RandomKey, p: float) -> bool:
    """
    True with probability p, deterministic in key

    Raises:
        DomainError: If p is outside [0, 1]
    """
    validate_probability(p)
    threshold = int(p * (1 << BERNOULLI_BITS))
    h = keyed_hash(key.seed, key.packet_id, key.step, key.purpose)
    return int(h[0] >> np.uint64(64 - BERNOULLI_BITS)) < threshold


def derive_run_seed(seed: int, index: int) -> int:
    """Seed of the index-th run of a block started from seed"""
    return int(keyed_hash(seed, index, 0, Purpose.RUN)[0])


def random_keys(seed: int, count: int, bound: int = 1 << 31, step: int = 1) -> np.ndarray:
    """
    count keys uniform in [0, bound) from the SHUFFLE stream

    Step 0 of that stream drives uniform_permutation, so keys default to step 1.

    Raises:
        DomainError: If bound is outside [1, 2^32)
    """
    if not 1 <= bound < MAX_GROUPS:
        raise DomainError(f"Key bound must lie in [1, 2^32), got {bound}")
    return uniform_below(keyed_hash(seed, np.arange(count, dtype=np.int64), step, Purpose.SHUFFLE), bound)
