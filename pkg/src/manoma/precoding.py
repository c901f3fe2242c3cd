"""Max-min precoding by successive convex approximation, plus a ZF baseline.

The SCA subproblem works in decoding order. For a decoding matrix ``m`` and
SINR targets ``q`` it requires, for every position j,

    interference_j + sigma2 <= T(h_j, w_j, q_j)

and, for every decoder k < j with ``m[k, j] = 1``,

    interference_{k->j} + sigma2 <= T(h_k, w_j, q_j)

where ``T`` is the first-order under-estimator of ``|h^H w|^2 / q`` around the
previous point. Each inequality ``I + s <= T`` is written as the cone
``||[2 sqrt(weights) h^H w_i ..., 2 sigma, T - 1]|| <= T + 1``.

Decision vector layout (real): ``[Re vec(W); Im vec(W); q_0..q_{K-1}; t]``
with ``vec`` stacking the columns of W in natural user order and ``q`` in
decoding order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import socp
from .rates import Precoder, achievable_rates, check_decoding

__all__ = [
    "ScaState",
    "taylor_lower_bound",
    "build_sca_socp",
    "sca_step",
    "zf_precoder",
    "Layout",
]

Q_FLOOR = 1e-8


@dataclass(frozen=True)
class ScaState:
    """Expansion point of the SCA step.

    Attributes
    ----------
    w_bar : Precoder
        Previous precoder.
    q_bar : ndarray
        Previous SINR targets in decoding order, all strictly positive.
    """

    w_bar: Precoder
    q_bar: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q_bar, dtype=float)
        if q.ndim != 1 or q.size != self.w_bar.w.shape[1]:
            raise ValueError(f"q_bar must hold one target per user, got shape {q.shape}")
        if not np.all(q > 0):
            raise ValueError("q_bar must be strictly positive")
        object.__setattr__(self, "q_bar", q)

    @classmethod
    def at(cls, h, w: Precoder, m, order, sigma2: float) -> "ScaState":
        """Expansion point with ``q_bar_j = max(SINR_j(W, m), 1e-8)``."""
        rates = achievable_rates(h, w.w, m, order, sigma2).per_user_rates
        gamma = 2.0 ** rates - 1.0
        return cls(w, np.maximum(gamma, Q_FLOOR))


def taylor_lower_bound(h, w, q: float, w_bar, q_bar: float) -> float:
    """Linear under-estimator of ``|h^H w|^2 / q`` expanded at ``(w_bar, q_bar)``."""
    if not q_bar > 0:
        raise ValueError(f"q_bar must be positive, got {q_bar}")
    h, w, w_bar = (np.asarray(v, dtype=complex) for v in (h, w, w_bar))
    c = np.vdot(h, w_bar)               # h^H w_bar
    cross = np.vdot(w_bar, h) * np.vdot(h, w)
    return float(2.0 * cross.real / q_bar - abs(c) ** 2 * q / q_bar ** 2)


class Layout:
    """Index bookkeeping for the real decision vector."""

    def __init__(self, n: int, k: int):
        self.n, self.k = n, k
        self.nw = n * k
        self.nvars = 2 * self.nw + k + 1

    def w_re(self, user: int) -> slice:
        return slice(user * self.n, (user + 1) * self.n)

    def w_im(self, user: int) -> slice:
        return slice(self.nw + user * self.n, self.nw + (user + 1) * self.n)

    def q(self, j: int) -> int:
        return 2 * self.nw + j

    @property
    def t(self) -> int:
        return self.nvars - 1

    def pack(self, w, q, t) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        vec = w.ravel(order="F")
        return np.concatenate([vec.real, vec.imag, np.asarray(q, dtype=float), [t]])

    def unpack(self, x):
        vec = x[:self.nw] + 1j * x[self.nw:2 * self.nw]
        w = vec.reshape((self.n, self.k), order="F")
        return w, x[2 * self.nw:2 * self.nw + self.k].copy(), float(x[-1])


def _inner_rows(lay: Layout, h, user: int) -> np.ndarray:
    """Two rows mapping x to ``[Re(h^H w_user), Im(h^H w_user)]``."""
    rows = np.zeros((2, lay.nvars))
    hr, hi = h.real, h.imag
    rows[0, lay.w_re(user)] = hr
    rows[0, lay.w_im(user)] = hi
    rows[1, lay.w_re(user)] = -hi
    rows[1, lay.w_im(user)] = hr
    return rows


def _taylor_row(lay: Layout, h, user: int, j: int, w_bar_col, q_bar: float) -> np.ndarray:
    """Coefficients of ``T(h, w_user, q_j)`` on x."""
    c = np.vdot(h, w_bar_col)
    a = h * c
    row = np.zeros(lay.nvars)
    row[lay.w_re(user)] = 2.0 * a.real / q_bar
    row[lay.w_im(user)] = 2.0 * a.imag / q_bar
    row[lay.q(j)] = -abs(c) ** 2 / q_bar ** 2
    return row


def _sinr_cone(lay, hk, order, weights, sigma, taylor) -> socp.SocCone:
    """``||[2 sqrt(weights_i) h^H w_i]_i, 2 sigma, T - 1|| <= T + 1``."""
    K = lay.k
    A = np.zeros((2 * K + 2, lay.nvars))
    b = np.zeros(2 * K + 2)
    for i in range(K):
        A[2 * i:2 * i + 2] = 2.0 * np.sqrt(weights[i]) * _inner_rows(lay, hk, order[i])
    b[2 * K] = 2.0 * sigma
    A[2 * K + 1] = taylor
    b[2 * K + 1] = -1.0
    return socp.SocCone(A, b, taylor, 1.0)


def build_sca_socp(h, m, order, sca: ScaState, sigma2: float, p_max: float) -> socp.SocpProblem:
    """Convex subproblem of one SCA step (maximize the smallest SINR target).

    Parameters
    ----------
    h : ndarray, shape (N, K)
        Channel matrix, column k for user k (natural order).
    m : ndarray, shape (K, K)
        Decoding matrix in decoding order.
    order : sequence of int
        Decoding order; position k is user ``order[k]``.
    sca : ScaState
    sigma2, p_max : float
    """
    h = np.asarray(h, dtype=complex)
    m = check_decoding(m).astype(float)
    order = np.asarray(order)
    N, K = h.shape
    lay = Layout(N, K)
    w_bar = sca.w_bar.w
    sigma = np.sqrt(sigma2)
    cones = []
    for j in range(K):
        hj = h[:, order[j]]
        taylor = _taylor_row(lay, hj, order[j], j, w_bar[:, order[j]], sca.q_bar[j])
        cones.append(_sinr_cone(lay, hj, order, 1.0 - m[j], sigma, taylor))
    for k in range(K):
        hk = h[:, order[k]]
        for j in range(k + 1, K):
            if m[k, j] != 1:
                continue
            weights = np.where(np.arange(K) < j, 1.0, 1.0 - m[k])
            taylor = _taylor_row(lay, hk, order[j], j, w_bar[:, order[j]], sca.q_bar[j])
            cones.append(_sinr_cone(lay, hk, order, weights, sigma, taylor))
    power = np.zeros((2 * lay.nw, lay.nvars))
    power[:, :2 * lay.nw] = np.eye(2 * lay.nw)
    cones.append(socp.SocCone(power, np.zeros(2 * lay.nw), np.zeros(lay.nvars), np.sqrt(p_max)))
    for j in range(K):
        c = np.zeros(lay.nvars)
        c[lay.q(j)] = 1.0
        c[lay.t] = -1.0
        cones.append(socp.SocCone(np.zeros((0, lay.nvars)), np.zeros(0), c, 0.0))
    objective = np.zeros(lay.nvars)
    objective[lay.t] = 1.0
    return socp.SocpProblem(lay.nvars, objective, cones)


def sca_step(h, m, order, sca: ScaState, sigma2: float, p_max: float,
             feas_tol: float = 1e-8, gap_tol: float = 1e-8, max_iters: int = 200):
    """One SCA update.

    Returns
    -------
    precoder : Precoder
        New precoder, scaled back onto the power ball if the solver lands
        marginally outside it.
    q : ndarray
        SINR targets in decoding order (lower bounds on the true SINRs).
    report : SolveReport
        Solver report; a non-optimal status carries the best iterate.
    """
    h = np.asarray(h, dtype=complex)
    problem = build_sca_socp(h, m, order, sca, sigma2, p_max)
    report = socp.solve(problem, feas_tol=feas_tol, gap_tol=gap_tol, max_iters=max_iters)
    w, q, _ = Layout(*h.shape).unpack(report.x)
    power = float(np.vdot(w, w).real)
    if power > p_max:
        w = w * np.sqrt(p_max / power)
    return Precoder(w, p_max), q, report


def zf_precoder(h, p_max: float, sigma2: float, delta: float | None = None) -> Precoder:
    """Zero-forcing (regularized when needed) with SNR-equalizing power loading.

    Directions are the normalized columns of ``H (H^H H + delta I)^{-1}``.
    ``delta`` defaults to 0 when H has full column rank with K <= N and to
    ``sigma2 K / p_max`` otherwise. Powers ``p_k ∝ 1 / |h_k^H v_k|^2`` sum
    to ``p_max``.
    """
    h = np.asarray(h, dtype=complex)
    N, K = h.shape
    if K < 1:
        raise ValueError("need at least one user")
    gram = h.conj().T @ h
    if delta is None:
        full_rank = K <= N and np.linalg.matrix_rank(h) == K
        delta = 0.0 if full_rank else sigma2 * K / p_max
    v = h @ np.linalg.pinv(gram + delta * np.eye(K))
    norms = np.linalg.norm(v, axis=0)
    v = v / np.where(norms > 0, norms, 1.0)
    g = np.abs(np.einsum("nk,nk->k", h.conj(), v)) ** 2
    g = np.maximum(g, np.finfo(float).tiny)
    inv = 1.0 / g
    powers = p_max * inv / inv.sum()
    return Precoder(v * np.sqrt(powers), p_max)
