"""Reference schemes, the maximum-channel-power placement and the FRI protocol.

Six schemes are compared:

========================  ==============================================
MA-NOMA                   position search + adaptive decoding
MA-NOMA-fixed-SIC         position search, M frozen to full SIC
MCP-NOMA                  per-user max channel power placement + AO
FPA-NOMA                  antennas at the origin + AO
MA-SDMA                   position search with a ZF fitness, M = I
FPA-SDMA                  antennas at the origin, ZF, M = I
========================  ==============================================

The SDMA schemes use a regularized ZF precoder with SNR-equalizing power
loading. It stands in for a block-coordinate ZF design and every SDMA
result carries a note saying so.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .ao import AoParams, NomaFitness, SdmaFitness, ao_solve
from .channel import Apv, Scenario, normalized_channel, perturb_fri
from .ho import FITNESS_STREAM, SEARCH_STREAM, HoParams, optimize, search
from .rates import Precoder, achievable_rates, identity_decoding, order_users
from .stochastic import RngStream

__all__ = [
    "Scheme",
    "SchemeResult",
    "FriStats",
    "channel_power_grid",
    "mcp_positions",
    "run_scheme",
    "fri_experiment",
    "SDMA_NOTE",
]

SDMA_NOTE = "zf-baseline"
# hippo 0 sits at the origin and is evaluated with this key
ORIGIN_KEY = (0, 0, 0, 0)


class Scheme(enum.Enum):
    MA_NOMA = "MA-NOMA"
    MA_NOMA_FIXED_SIC = "MA-NOMA-fixed-SIC"
    MCP_NOMA = "MCP-NOMA"
    FPA_NOMA = "FPA-NOMA"
    MA_SDMA = "MA-SDMA"
    FPA_SDMA = "FPA-SDMA"

    @classmethod
    def parse(cls, tag: str) -> "Scheme":
        for s in cls:
            if s.value.lower() == tag.lower() or s.name.lower() == tag.lower():
                return s
        raise ValueError(f"unknown scheme {tag!r}; choose from {[s.value for s in cls]}")

    @property
    def is_sdma(self) -> bool:
        return self in (Scheme.MA_SDMA, Scheme.FPA_SDMA)


@dataclass
class SchemeResult:
    """Outcome of one scheme on one scenario.

    ``per_user_rates`` is indexed by natural user index; ``decoding`` is in
    decoding order (see ``order``).
    """

    scheme: Scheme
    min_rate: float
    per_user_rates: np.ndarray
    apv: Apv
    wallclock: float
    seed: int
    precoder: Precoder = field(repr=False, default=None)
    decoding: np.ndarray = field(repr=False, default=None)
    order: np.ndarray = field(repr=False, default=None)
    history: object = field(repr=False, default=None)
    note: str = ""

    def __post_init__(self):
        if not np.isclose(self.min_rate, np.min(self.per_user_rates), rtol=0, atol=1e-12):
            raise ValueError("min_rate disagrees with per_user_rates")


def channel_power_grid(fr, wavelength: float, points) -> np.ndarray:
    """``||h(u)||^2`` for every row ``u`` of ``points`` (P x 3)."""
    b = fr.prm @ fr.tx_frm                      # L x N
    phase = np.exp(1j * 2 * np.pi / wavelength * (np.asarray(points) @ fr.rx_angles.T))
    h = phase.conj() @ b                         # P x N, row p is h(u_p)^T
    return np.sum(np.abs(h) ** 2, axis=1)


def _grid_axis(half: float, step: float) -> np.ndarray:
    n = int(np.floor(half / step * (1 + 1e-12)))
    return np.arange(-n, n + 1) * step


def mcp_positions(sc: Scenario, grid_step: float) -> Apv:
    """Per-user grid search for the maximum channel power position.

    The grid is ``{k * grid_step}`` in every coordinate, symmetric about
    the origin (so the origin is a grid point), scanned with x outermost and
    z innermost. The first point within ``1e-12`` relative of the maximum
    wins, which makes near-flat cases deterministic.
    """
    if not grid_step > 0:
        raise ValueError(f"grid_step must be positive, got {grid_step}")
    axis = _grid_axis(sc.region_half, grid_step)
    pts = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    out = []
    for fr in sc.users:
        power = channel_power_grid(fr, sc.wavelength, pts)
        top = power.max()
        out.append(pts[np.argmax(power >= top - 1e-12 * top)])
    return Apv(np.array(out), sc.region_half)


def _result(scheme, sc, apv, w, m, seed, t0, history=None, note="") -> SchemeResult:
    h = normalized_channel(apv, sc)
    order = order_users(h)
    rates = achievable_rates(h, w.w, m, order, 1.0)
    return SchemeResult(scheme=scheme, min_rate=rates.min_rate,
                        per_user_rates=rates.natural(order), apv=apv,
                        wallclock=time.perf_counter() - t0, seed=seed, precoder=w,
                        decoding=np.asarray(m), order=order, history=history, note=note)


def run_scheme(scheme: Scheme, sc: Scenario, ho: HoParams, ao: AoParams, rng: RngStream,
               map_fn=map, grid_step: float | None = None) -> SchemeResult:
    """Run one scheme on one scenario.

    All schemes derived from the same ``rng`` share common random numbers:
    FPA-NOMA and MCP-NOMA run the inner loop on the stream the position
    search uses for its origin hippo, so with origin seeding MA-NOMA can
    never end below FPA-NOMA.

    ``grid_step`` defaults to a twentieth of the wavelength.
    """
    scheme = Scheme(scheme) if not isinstance(scheme, Scheme) else scheme
    t0 = time.perf_counter()
    K = sc.n_users
    if scheme in (Scheme.MA_NOMA, Scheme.MA_NOMA_FIXED_SIC):
        decoding = "adaptive" if scheme is Scheme.MA_NOMA else "fixed"
        res = optimize(sc, ho, ao, rng, decoding=decoding, map_fn=map_fn)
        return _result(scheme, sc, res.apv, res.precoder, res.decoding, rng.seed, t0,
                       history=res.history)
    if scheme in (Scheme.MCP_NOMA, Scheme.FPA_NOMA):
        if scheme is Scheme.FPA_NOMA:
            apv = Apv.origin(K, sc.region_half)
        else:
            apv = mcp_positions(sc, sc.wavelength / 20 if grid_step is None else grid_step)
        fitness = NomaFitness(sc, ao, rng.seed, "adaptive",
                              stream=rng.stream_id + (FITNESS_STREAM,))
        inner = ao_solve(sc, apv, ao, fitness.rng(ORIGIN_KEY), "adaptive")
        return _result(scheme, sc, apv, inner.precoder, inner.decoding, rng.seed, t0)
    fitness = SdmaFitness(sc)
    if scheme is Scheme.MA_SDMA:
        outcome = search(fitness, 3 * K, ho, rng.spawn(SEARCH_STREAM), map_fn=map_fn)
        apv = Apv.from_vector(outcome.best.position, sc.region_half)
        history = outcome.history
    else:
        apv, history = Apv.origin(K, sc.region_half), None
    _, w = fitness.precoder(apv.as_vector())
    return _result(scheme, sc, apv, w, identity_decoding(K), rng.seed, t0, history=history,
                   note=SDMA_NOTE)


@dataclass(frozen=True)
class FriStats:
    """Min rates on perturbed channels with the design frozen."""

    reference_rate: float
    rates: np.ndarray
    mu: float
    nu: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.rates))

    def quantiles(self, qs=(0.1, 0.5, 0.9)) -> np.ndarray:
        return np.quantile(self.rates, qs)


def fri_experiment(sc: Scenario, apv: Apv, precoder: Precoder, decoding, mu: float, nu: float,
                   trials: int, rng: RngStream) -> FriStats:
    """Evaluate a design optimized on ``sc`` when the true channel differs.

    Positions, precoder, decoding matrix and decoding order all stay as
    designed on ``sc``; trial t perturbs ``sc`` with ``rng.spawn(t)``. The
    perturbation streams do not depend on ``mu`` or ``nu``, so sweeps over
    either reuse the same underlying draws.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    w = precoder.w if isinstance(precoder, Precoder) else np.asarray(precoder)
    m = np.asarray(decoding)
    order = order_users(normalized_channel(apv, sc))
    reference = achievable_rates(normalized_channel(apv, sc), w, m, order, 1.0).min_rate
    rates = np.empty(trials)
    for t in range(trials):
        true_sc = perturb_fri(sc, mu, nu, rng.spawn(t))
        rates[t] = achievable_rates(normalized_channel(apv, true_sc), w, m, order, 1.0).min_rate
    return FriStats(reference_rate=reference, rates=rates, mu=mu, nu=nu)
