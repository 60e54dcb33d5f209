"""Shared plumbing: counter-based random streams, stable seed derivation,
nearest-rank quantiles, ordered parallel mapping, and float formatting."""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

MASK64 = (1 << 64) - 1
MASK63 = (1 << 63) - 1

# Stream roles keep draws for different purposes statistically disjoint even
# when they share a seed and a lane index.
ROLE_DESIGN = 1
ROLE_NOISE = 2
ROLE_THETA = 3
ROLE_BASIS = 4
ROLE_PROBE = 5
ROLE_NEWX = 6
ROLE_BAIYIN = 7


def philox_stream(seed: int, lane: int, role: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, lane, role).

    The 128-bit Philox key is (seed, role << 48 ^ lane), so any (seed, lane,
    role) triple addresses an independent stream regardless of what other
    streams were opened before it.
    """
    if lane < 0 or lane >= (1 << 48):
        raise ValueError(f"lane {lane} outside [0, 2^48)")
    key = np.array(
        [seed & MASK64, ((role & 0xFFFF) << 48) ^ lane], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))


def uniforms(gen: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1), taken from the 2^-53 lattice.

    Each value is (k + 0.5) * 2^-53 with k a 53-bit integer, so 0 and 1 are
    unreachable and inverse CDFs stay finite. A power-of-two bound makes each
    integer draw consume exactly one 64-bit word, which keeps prefixes of a
    stream stable no matter how many values are ultimately drawn.
    """
    k = gen.integers(0, 1 << 53, size=size, dtype=np.int64)
    return (k + 0.5) * (2.0 ** -53)


def stable_hash64(token: str) -> int:
    """Platform-independent 63-bit hash of a text token (blake2b based)."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & MASK63


def replicate_seed(base_seed: int, replicate: int, n: int) -> int:
    """Per-replicate seed: base + replicate index + a stable hash of n.

    Adding grid points therefore never changes the draws of existing rows.
    """
    return (base_seed + replicate + stable_hash64(f"n:{n}")) & MASK63


def nearest_rank(values, q: float) -> float:
    """Nearest-rank quantile (no interpolation) of an iterable of reals."""
    vals = sorted(values)
    if not vals:
        raise ValueError("quantile of empty data")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile level {q} outside [0, 1]")
    rank = min(len(vals), max(1, math.ceil(q * len(vals))))
    return vals[rank - 1]


def pmap_indexed(fn, items, threads: int | None):
    """Map fn over items, preserving item order in the result list.

    threads=1 runs inline; otherwise a process pool is used. Results are
    collected in submission order, so the output is independent of how the
    pool schedules the work.
    """
    items = list(items)
    if threads is not None and threads < 1:
        raise ValueError("threads must be >= 1")
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=1))


def fmt17(value) -> str:
    """Format a float with 17 significant digits (binary64 round-trips)."""
    return f"{float(value):.17g}"
