"""Seeded random streams and the distributions used by the optimizers.

Every consumer of randomness receives an :class:`RngStream`. Streams are
derived from ``(seed, stream_id)`` through :class:`numpy.random.SeedSequence`
spawn keys, so a sub-stream can be rebuilt anywhere (another process, a later
run) from its key alone.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "RngStream",
    "uniform",
    "cscg",
    "levy_sigma",
    "levy_matrix",
]

_TINY = np.finfo(float).eps


def _as_key(stream_id) -> tuple[int, ...]:
    if stream_id is None:
        return ()
    if isinstance(stream_id, (int, np.integer)):
        return (int(stream_id),)
    return tuple(int(s) for s in stream_id)


class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Parameters
    ----------
    seed : int
        Root seed (any non-negative integer).
    stream_id : int or tuple of int, optional
        Sub-stream key. Distinct keys give independent sequences.
    """

    def __init__(self, seed: int, stream_id=()):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.stream_id = _as_key(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def spawn(self, *key) -> "RngStream":
        """Child stream whose key extends this stream's key."""
        return RngStream(self.seed, self.stream_id + _as_key(key))

    # thin wrappers; the optimizers only use these calls so tests can script them
    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high, size=None):
        """Integers in ``[low, high)``."""
        return self.generator.integers(low, high, size=size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def permutation(self, n):
        return self.generator.permutation(n)


def uniform(rng: RngStream, lo: float, hi: float, size=None):
    """Uniform draw(s) on ``[lo, hi]``."""
    if lo > hi:
        raise ValueError(f"invalid range: lo={lo} > hi={hi}")
    if lo == hi:
        return lo if size is None else np.full(size, float(lo))
    return lo + (hi - lo) * rng.random(size)


def cscg(rng: RngStream, variance: float, size=None):
    """Circularly-symmetric complex Gaussian draw(s) with ``E|x|^2 = variance``."""
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    scale = math.sqrt(variance / 2.0)
    re = rng.normal(size)
    im = rng.normal(size)
    return scale * (re + 1j * im)


def levy_sigma(beta: float) -> float:
    """Scale factor of the Levy step generator (Mantegna form)."""
    if not 0 < beta <= 2:
        raise ValueError(f"beta must lie in (0, 2], got {beta}")
    # sin(pi b / 2) written as sin(pi (1 - b / 2)) stays accurate near b = 2
    num = math.gamma(1 + beta) * math.sin(math.pi * (1 - beta / 2))
    den = math.gamma((1 + beta) / 2) * beta * 2 ** ((beta - 1) / 2)
    return (num / den) ** (1 / beta)


def levy_matrix(rng: RngStream, rows: int, cols: int, beta: float) -> np.ndarray:
    """Heavy-tailed step matrix ``0.05 * R_u * sigma_u / |R_v|^(1/beta)``.

    ``R_u`` and ``R_v`` are independent U(0, 1) matrices drawn in that order.
    The denominator is floored at machine epsilon.
    """
    sigma_u = levy_sigma(beta)
    if rows < 1 or cols < 1:
        raise ValueError(f"shape must be positive, got ({rows}, {cols})")
    r_u = rng.random((rows, cols))
    r_v = rng.random((rows, cols))
    den = np.maximum(np.abs(r_v) ** (1.0 / beta), _TINY)
    return 0.05 * r_u * sigma_u / den
