"""Deterministic randomness helpers.

All randomness in the toolkit flows from a single integer seed. Purpose-
specific streams are derived by stable hashing of (seed, label) so that
adding a consumer never shifts the draws of another. Streams are backed by
the counter-based Philox generator, and Gaussian draws use Box-Muller on
Philox uniforms; only statistical equivalence (not bit compatibility with
other stacks) is promised.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, label: str) -> int:
    """Derive a 64-bit child seed from a master seed and a purpose label."""
    digest = hashlib.blake2b(f"{seed}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Philox generator keyed by the derived (seed, label) stream."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, label)))


def box_muller(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard-normal draws via Box-Muller on uniform pairs.

    Draws ceil(n/2) uniform pairs and discards the surplus value when n is
    odd, keeping the stream layout independent of downstream reshaping.
    """
    n = int(np.prod(shape)) if shape else 1
    pairs = (n + 1) // 2
    # (0, 1] to keep log() finite
    u1 = 1.0 - rng.random(pairs)
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2.0 * np.pi * u2),
                        radius * np.sin(2.0 * np.pi * u2)])[:n]
    return z.reshape(shape)
