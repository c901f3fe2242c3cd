"""Alternating optimization of precoder and decoding matrix for fixed positions.

The loop alternates one SCA precoder update with one greedy decoding pass
while an annealing temperature ``T = alpha^t T0`` decays. It stops when the
minimum rate changes by less than ``eps2`` or the temperature drops to
``eps1``. The minimum rate reached is the fitness of an antenna position
vector.

Channels are normalized by the noise standard deviation, so every SINR below
is computed with unit noise power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import Apv, Scenario, normalized_channel
from .decoding import AnnealParams, greedy_search
from .precoding import ScaState, sca_step, zf_precoder
from .rates import Precoder, fixed_sic_decoding, identity_decoding, min_rate, order_users
from .stochastic import RngStream, cscg

__all__ = [
    "AoParams",
    "AoResult",
    "ao_solve",
    "fitness",
    "NomaFitness",
    "SdmaFitness",
    "DECODING_MODES",
]

DECODING_MODES = ("adaptive", "fixed", "sdma")
HARD_ITERATION_CAP = 100


@dataclass(frozen=True)
class AoParams:
    t0: float = 5.0
    alpha: float = 0.8
    eps1: float = 1e-3
    eps2: float = 1e-3
    xi: float = 0.1
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    solver_max_iters: int = 200
    max_iters: int = HARD_ITERATION_CAP

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.t0 > self.eps1 > 0:
            raise ValueError(f"need t0 > eps1 > 0, got t0={self.t0}, eps1={self.eps1}")
        if not self.eps2 > 0:
            raise ValueError(f"eps2 must be positive, got {self.eps2}")
        if self.xi < 0:
            raise ValueError(f"xi must be non-negative, got {self.xi}")

    @classmethod
    def from_config(cls, cfg, **overrides) -> "AoParams":
        values = dict(t0=cfg.t0, alpha=cfg.alpha, eps1=cfg.eps1, eps2=cfg.eps2, xi=cfg.xi)
        values.update(overrides)
        return cls(**values)

    @property
    def iteration_bound(self) -> int:
        """``ceil(log_alpha(eps1 / t0))``, the most loop passes the schedule allows."""
        return math.ceil(math.log(self.eps1 / self.t0) / math.log(self.alpha))


@dataclass(frozen=True)
class AoResult:
    """Outcome of one inner loop.

    ``precoder`` is in the scenario's physical units; ``decoding`` and
    ``order`` are in decoding order. ``trace[0]`` is the rate at the random
    initial precoder with ``M = I`` and ``trace[t]`` the rate after pass t.
    """

    rate: float
    precoder: Precoder
    decoding: np.ndarray
    iterations: int
    trace: tuple
    order: np.ndarray = field(repr=False)
    solver_failures: int = 0


def _initial_precoder(rng: RngStream, n: int, k: int, p_max: float) -> Precoder:
    w = cscg(rng, 1.0, (n, k))
    w *= math.sqrt(p_max) / np.linalg.norm(w)
    return Precoder(w, p_max)


def ao_solve(sc: Scenario, apv: Apv, params: AoParams, rng: RngStream,
             decoding: str = "adaptive", warm_start: Precoder | None = None) -> AoResult:
    """Optimize ``(W, M)`` for fixed antenna positions.

    Parameters
    ----------
    sc : Scenario
    apv : Apv
    params : AoParams
    rng : RngStream
        Draws the initial precoder, then feeds the decoding search.
    decoding : {"adaptive", "fixed", "sdma"}
        ``"adaptive"`` runs the greedy decoding search; ``"fixed"`` freezes
        M to full SIC (all ones on and above the diagonal); ``"sdma"``
        freezes M to the identity.
    warm_start : Precoder, optional
        Initial precoder (physical units) in place of the random draw.
    """
    if decoding not in DECODING_MODES:
        raise ValueError(f"decoding must be one of {DECODING_MODES}, got {decoding!r}")
    h = normalized_channel(apv, sc)
    n, k = h.shape
    p_max = sc.p_max
    order = order_users(h)
    if warm_start is None:
        w = _initial_precoder(rng, n, k, p_max)
    else:
        w = Precoder(np.asarray(warm_start.w, dtype=complex), p_max)
    m = fixed_sic_decoding(k) if decoding == "fixed" else identity_decoding(k)
    f_prev = min_rate(h, w.w, m, order, 1.0)
    trace = [f_prev]
    temperature, t, passes, failures = params.t0, 1, 0, 0
    while temperature > params.eps1 and passes < params.max_iters:
        sca = ScaState.at(h, w, m, order, 1.0)
        w_new, _, report = sca_step(h, m, order, sca, 1.0, p_max, feas_tol=params.feas_tol,
                                    gap_tol=params.gap_tol, max_iters=params.solver_max_iters)
        if report.status == "optimal":
            w = w_new
        else:
            failures += 1
        r_prev = min_rate(h, w.w, m, order, 1.0)
        if decoding == "adaptive":
            m = greedy_search(h, w, m, r_prev, AnnealParams(params.xi, temperature), order, 1.0, rng)
        f_new = min_rate(h, w.w, m, order, 1.0)
        trace.append(f_new)
        passes += 1
        if abs(f_new - f_prev) < params.eps2:
            break
        f_prev = f_new
        t += 1
        temperature = params.alpha ** t * params.t0
    return AoResult(rate=trace[-1], precoder=w, decoding=m, iterations=passes,
                    trace=tuple(trace), order=order, solver_failures=failures)


def fitness(sc: Scenario, apv: Apv, params: AoParams, rng: RngStream,
            decoding: str = "adaptive") -> float:
    """Minimum rate reached by :func:`ao_solve` at ``apv``."""
    return ao_solve(sc, apv, params, rng, decoding=decoding).rate


class NomaFitness:
    """Picklable fitness ``(position vector, key) -> rate`` for the position search.

    ``key`` is a tuple of integers; the initial precoder and decoding search
    draw from ``RngStream(seed, stream + key)``, so equal keys give equal
    values.
    """

    def __init__(self, sc: Scenario, params: AoParams, seed: int, decoding: str = "adaptive",
                 stream: tuple = ()):
        if decoding not in DECODING_MODES:
            raise ValueError(f"decoding must be one of {DECODING_MODES}, got {decoding!r}")
        self.sc, self.params, self.seed, self.decoding = sc, params, seed, decoding
        self.stream = tuple(stream)

    def rng(self, key) -> RngStream:
        return RngStream(self.seed, self.stream + tuple(key))

    def solve(self, position, key) -> AoResult:
        apv = Apv.from_vector(position, self.sc.region_half)
        return ao_solve(self.sc, apv, self.params, self.rng(key), self.decoding)

    def __call__(self, position, key) -> float:
        return self.solve(position, key).rate


class SdmaFitness:
    """Minimum rate of ZF precoding with ``M = I``; deterministic, ``key`` is ignored."""

    def __init__(self, sc: Scenario):
        self.sc = sc

    def precoder(self, position) -> tuple[np.ndarray, Precoder]:
        apv = Apv.from_vector(position, self.sc.region_half)
        h = normalized_channel(apv, self.sc)
        return h, zf_precoder(h, self.sc.p_max, 1.0)

    def __call__(self, position, key=None) -> float:
        h, w = self.precoder(position)
        k = h.shape[1]
        return min_rate(h, w.w, identity_decoding(k), order_users(h), 1.0)
