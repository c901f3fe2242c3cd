"""Search over decoding matrices for a fixed precoder.

:func:`greedy_search` makes one pass over the strict upper triangle, flipping
each entry once and keeping improvements. Worse candidates may be remembered
with probability ``xi * T``, and the final choice passes a Metropolis test
against the previous rate. :func:`exhaustive_search` enumerates every matrix
and serves as a reference for small K.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .rates import _sinr_table, check_decoding, gain_table

__all__ = ["AnnealParams", "greedy_search", "exhaustive_search", "rate_evaluator"]

EXHAUSTIVE_MAX_USERS = 5


@dataclass(frozen=True)
class AnnealParams:
    """Bad-acceptance coefficient ``xi`` and current temperature."""

    xi: float
    temperature: float

    def __post_init__(self):
        if self.xi < 0:
            raise ValueError(f"xi must be non-negative, got {self.xi}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    @property
    def bad_accept_probability(self) -> float:
        return min(max(self.xi * self.temperature, 0.0), 1.0)


def rate_evaluator(h, w, order, sigma2: float):
    """Return ``f(m)``, the minimum rate at a fixed precoder.

    The gain table is computed once, so each evaluation costs O(K^2).
    """
    g = gain_table(h, np.asarray(getattr(w, "w", w)), order)

    def f(m) -> float:
        m = np.asarray(m, dtype=float)
        table = _sinr_table(g, m, sigma2)
        gamma = np.where(m == 1, table, np.inf).min(axis=0)
        return float(np.log2(1.0 + gamma).min())

    return f


def greedy_search(h, w, m_prev, r_prev: float, params: AnnealParams, order, sigma2: float,
                  rng, trace: list | None = None) -> np.ndarray:
    """One greedy pass with annealed acceptance.

    Parameters
    ----------
    h : ndarray, shape (N, K)
    w : Precoder or ndarray
    m_prev : ndarray
        Decoding matrix of the previous iteration (decoding order).
    r_prev : float
        Minimum rate at ``(w, m_prev)``, supplied by the caller.
    params : AnnealParams
    order : sequence of int
    sigma2 : float
    rng : RngStream
        Consumed once per rejected flip and once by the final Metropolis test.
    trace : list, optional
        If given, receives ``(k, j, rate, outcome)`` per visited entry with
        outcome ``"good"``, ``"bad-kept"`` or ``"rejected"``.

    Returns
    -------
    ndarray
        The chosen decoding matrix.
    """
    m_prev = check_decoding(m_prev)
    K = m_prev.shape[0]
    f = rate_evaluator(h, w, order, sigma2)
    p_bad = params.bad_accept_probability
    m_bar = m_prev.copy()
    r_bar = r_prev
    r_good = r_bad = 0.0
    m_good = m_bad = None
    for k in range(K):
        for j in range(k + 1, K):
            m_bar[k, j] = 1 - m_bar[k, j]
            r_temp = f(m_bar)
            if r_temp > r_bar:
                r_bar = r_good = r_temp
                m_good = m_bar.copy()
                outcome = "good"
            else:
                outcome = "rejected"
                if rng.random() < p_bad and r_temp > r_bad:
                    r_bad = r_temp
                    m_bad = m_bar.copy()
                    outcome = "bad-kept"
                m_bar[k, j] = 1 - m_bar[k, j]
            if trace is not None:
                trace.append((k, j, r_temp, outcome))
    if m_good is None and m_bad is None:
        return m_prev
    if r_good >= r_bad:
        r_max, m_max = r_good, m_good
    else:
        r_max, m_max = r_bad, m_bad
    if r_max > r_prev:
        return m_max
    if rng.random() < math.exp((r_max - r_prev) / params.temperature):
        return m_max
    return m_prev


def exhaustive_search(h, w, order, sigma2: float) -> np.ndarray:
    """Best decoding matrix by enumeration (K <= 5). Ties keep the first found."""
    K = np.asarray(h).shape[1]
    if K > EXHAUSTIVE_MAX_USERS:
        raise ValueError(f"exhaustive search supports K <= {EXHAUSTIVE_MAX_USERS}, got {K}")
    f = rate_evaluator(h, w, order, sigma2)
    iu = np.triu_indices(K, 1)
    best, best_m = -np.inf, None
    for bits in itertools.product((0, 1), repeat=len(iu[0])):
        m = np.eye(K, dtype=np.int8)
        m[iu] = bits
        r = f(m)
        if r > best:
            best, best_m = r, m
    return best_m
