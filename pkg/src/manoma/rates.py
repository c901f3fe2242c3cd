"""SINRs and achievable rates under adaptive SIC decoding.

Everything here is indexed in decoding order: position ``k`` refers to user
``order[k]``, the user with the k-th largest channel gain. The decoding
indicator ``m`` is a K x K 0/1 matrix in that order; ``m[k, j] = 1`` means the
user at position k decodes (and cancels) the message of position j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Precoder",
    "RateResult",
    "order_users",
    "check_decoding",
    "identity_decoding",
    "fixed_sic_decoding",
    "gain_table",
    "sinr_self",
    "sinr_cross",
    "sinr_table",
    "achievable_rates",
    "min_rate",
]


@dataclass(frozen=True)
class Precoder:
    """N x K precoding matrix (column k serves user k) and its power budget."""

    w: np.ndarray
    power_budget: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=complex)
        if w.ndim != 2:
            raise ValueError(f"precoder must be a matrix, got shape {w.shape}")
        if self.power > self.power_budget * (1 + 1e-9) + 1e-9:
            raise ValueError(f"precoder power {self.power} exceeds budget {self.power_budget}")
        object.__setattr__(self, "w", w)

    @property
    def power(self) -> float:
        w = np.asarray(self.w)
        return float(np.vdot(w, w).real)


@dataclass(frozen=True)
class RateResult:
    """Rates in decoding order, their minimum, and the SINR table.

    ``sinr_table[k, j]`` holds the SINR of position k decoding position j for
    ``k <= j``; entries below the diagonal are zero.
    """

    per_user_rates: np.ndarray
    min_rate: float
    sinr_table: np.ndarray

    def natural(self, order) -> np.ndarray:
        """Rates re-indexed by natural user index."""
        out = np.empty_like(self.per_user_rates)
        out[np.asarray(order)] = self.per_user_rates
        return out


def order_users(h) -> np.ndarray:
    """Users sorted by decreasing squared channel norm, ties by index."""
    gains = np.sum(np.abs(np.asarray(h)) ** 2, axis=0)
    return np.argsort(-gains, kind="stable")


def check_decoding(m) -> np.ndarray:
    m = np.asarray(m)
    K = m.shape[0]
    if m.shape != (K, K):
        raise ValueError(f"decoding matrix must be square, got {m.shape}")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("decoding matrix entries must be binary")
    if not np.all(np.diag(m) == 1):
        raise ValueError("decoding matrix needs ones on the diagonal")
    if np.any(np.tril(m, -1) != 0):
        raise ValueError("decoding matrix must be zero below the diagonal")
    return m.astype(np.int8)


def identity_decoding(K: int) -> np.ndarray:
    """No user decodes another (SDMA)."""
    return np.eye(K, dtype=np.int8)


def fixed_sic_decoding(K: int) -> np.ndarray:
    """Conventional SIC: every user decodes all weaker users."""
    return np.triu(np.ones((K, K), dtype=np.int8))


def gain_table(h, w, order) -> np.ndarray:
    """``G[k, i] = |h_{order[k]}^H w_{order[i]}|^2``."""
    hp = np.asarray(h)[:, order]
    wp = np.asarray(w)[:, order]
    return np.abs(hp.conj().T @ wp) ** 2


def sinr_self(h, w, m, order, sigma2: float, k: int) -> float:
    g = gain_table(h, w, order)[k]
    interference = np.dot(g, 1 - np.asarray(m, dtype=float)[k])
    return float(g[k] / (interference + sigma2))


def sinr_cross(h, w, m, order, sigma2: float, k: int, j: int) -> float:
    """SINR of position k decoding the message of position j (k < j)."""
    if not k < j:
        raise IndexError(f"cross SINR needs k < j, got k={k}, j={j}")
    g = gain_table(h, w, order)[k]
    m = np.asarray(m, dtype=float)
    interference = g[:j].sum() + np.dot(g[j:], 1 - m[k, j:])
    return float(g[j] / (interference + sigma2))


def _sinr_table(g, m, sigma2):
    K = g.shape[0]
    keep = g * (1.0 - m)
    # undecoded tail sums: tail[k, j] = sum_{i >= j} g[k, i] (1 - m[k, i])
    tail = np.cumsum(keep[:, ::-1], axis=1)[:, ::-1]
    head = np.concatenate([np.zeros((K, 1)), np.cumsum(g, axis=1)[:, :-1]], axis=1)
    table = g / (head + tail + sigma2)
    self_sinr = np.diag(g) / (keep.sum(axis=1) + sigma2)
    table[np.diag_indices(K)] = self_sinr
    return np.triu(table)


def sinr_table(h, w, m, order, sigma2: float) -> np.ndarray:
    g = gain_table(h, w, order)
    return _sinr_table(g, np.asarray(m, dtype=float), sigma2)


def achievable_rates(h, w, m, order, sigma2: float) -> RateResult:
    """Rates ``log2(1 + min_{k: m[k, j] = 1} SINR(k -> j))`` for every position j."""
    m = np.asarray(m, dtype=float)
    table = sinr_table(h, w, m, order, sigma2)
    masked = np.where(m == 1, table, np.inf)
    gamma = masked.min(axis=0)
    rates = np.log2(1.0 + gamma)
    return RateResult(per_user_rates=rates, min_rate=float(rates.min()), sinr_table=table)


def min_rate(h, w, m, order, sigma2: float) -> float:
    return achievable_rates(h, w, m, order, sigma2).min_rate
