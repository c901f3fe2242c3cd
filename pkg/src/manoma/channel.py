"""Field-response channel model for single-antenna movable users.

A user's channel is ``h(u) = (f(u)^H  Sigma  G)^T`` where ``f(u)`` is the
receive field-response vector evaluated at the antenna position ``u``,
``Sigma`` the path-response matrix and ``G`` the transmit field-response
matrix of the base-station array.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .stochastic import RngStream, cscg

__all__ = [
    "ArrayGeometry",
    "FieldResponse",
    "Apv",
    "Scenario",
    "virtual_angles",
    "propagation_delta",
    "receive_frv",
    "transmit_frm",
    "channel_vector",
    "channel_matrix",
    "normalized_channel",
    "sample_angles",
    "sample_scenario",
    "perturb_fri",
    "save_scenario",
    "load_scenario",
]

_REGION_TOL = 1e-12


@dataclass(frozen=True)
class ArrayGeometry:
    """Base-station antenna positions (N x 3, metres) and carrier wavelength."""

    fpa_positions: np.ndarray
    wavelength: float

    def __post_init__(self):
        pos = np.asarray(self.fpa_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError(f"fpa_positions must be N x 3 with N >= 1, got {pos.shape}")
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        object.__setattr__(self, "fpa_positions", pos)

    @property
    def n_antennas(self) -> int:
        return self.fpa_positions.shape[0]

    @classmethod
    def upa(cls, n_antennas: int, wavelength: float, spacing: float | None = None):
        """Planar array in the y-z plane, ``ceil(sqrt(N))`` columns, centred.

        Elements fill the grid column-major and the first ``N`` are kept.
        """
        if n_antennas < 1:
            raise ValueError(f"n_antennas must be >= 1, got {n_antennas}")
        d = wavelength / 2 if spacing is None else spacing
        n1 = math.ceil(math.sqrt(n_antennas))
        n2 = math.ceil(n_antennas / n1)
        ys = (np.arange(n1) - (n1 - 1) / 2) * d
        zs = (np.arange(n2) - (n2 - 1) / 2) * d
        pos = [(0.0, y, z) for z in zs for y in ys][:n_antennas]
        return cls(np.array(pos), wavelength)


def virtual_angles(theta, phi) -> np.ndarray:
    """Direction cosines ``(cos t cos p, cos t sin p, sin t)``; shape ``(..., 3)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack([np.cos(theta) * np.cos(phi),
                     np.cos(theta) * np.sin(phi),
                     np.sin(theta)], axis=-1)


def propagation_delta(pos, angle) -> np.ndarray:
    """Path-length difference ``x*vtheta + y*vphi + z*vomega``."""
    return np.asarray(angle, dtype=float) @ np.asarray(pos, dtype=float)


@dataclass(frozen=True)
class FieldResponse:
    """Multi-path description of one user's channel.

    Attributes
    ----------
    rx_angles : (L, 3) virtual angles of the receive paths.
    prm : (L, L) complex path-response matrix.
    tx_frm : (L, N) transmit field-response matrix.
    distance : BS-user distance in metres.
    rx_theta, rx_phi, tx_theta, tx_phi : physical angles (radians), kept for
        provenance; ``tx_frm`` and ``rx_angles`` are what the model uses.
    """

    rx_angles: np.ndarray
    prm: np.ndarray
    tx_frm: np.ndarray
    distance: float
    rx_theta: np.ndarray = field(default=None)
    rx_phi: np.ndarray = field(default=None)
    tx_theta: np.ndarray = field(default=None)
    tx_phi: np.ndarray = field(default=None)

    def __post_init__(self):
        rx = np.atleast_2d(np.asarray(self.rx_angles, dtype=float))
        prm = np.atleast_2d(np.asarray(self.prm, dtype=complex))
        g = np.atleast_2d(np.asarray(self.tx_frm, dtype=complex))
        if rx.shape[1] != 3:
            raise ValueError(f"rx_angles must be L x 3, got {rx.shape}")
        if prm.shape != (rx.shape[0], g.shape[0]):
            raise ValueError(f"prm shape {prm.shape} does not match "
                             f"{rx.shape[0]} receive / {g.shape[0]} transmit paths")
        object.__setattr__(self, "rx_angles", rx)
        object.__setattr__(self, "prm", prm)
        object.__setattr__(self, "tx_frm", g)

    @property
    def paths(self) -> int:
        return self.rx_angles.shape[0]


@dataclass(frozen=True)
class Apv:
    """Antenna position vector: one 3-D position per user inside the cube."""

    positions: np.ndarray
    region_half: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if np.any(np.abs(pos) > self.region_half * (1 + _REGION_TOL) + _REGION_TOL):
            raise ValueError("antenna position outside the movable region "
                             f"[-{self.region_half}, {self.region_half}]^3")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def origin(cls, n_users: int, region_half: float) -> "Apv":
        return cls(np.zeros((n_users, 3)), region_half)

    @classmethod
    def from_vector(cls, vec, region_half: float) -> "Apv":
        return cls(np.asarray(vec, dtype=float).reshape(-1, 3), region_half)

    def as_vector(self) -> np.ndarray:
        """Stacked ``[x1, y1, z1, x2, ...]`` layout."""
        return self.positions.reshape(-1).copy()


@dataclass(frozen=True)
class Scenario:
    """A channel realisation plus the system constants that go with it."""

    geometry: ArrayGeometry
    users: tuple
    noise_power: float
    g0: float
    path_loss_exp: float
    region_half: float
    p_max: float

    def __post_init__(self):
        if len(self.users) < 1:
            raise ValueError("scenario needs at least one user")
        if not self.noise_power > 0:
            raise ValueError(f"noise_power must be positive, got {self.noise_power}")
        object.__setattr__(self, "users", tuple(self.users))

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_antennas(self) -> int:
        return self.geometry.n_antennas

    @property
    def wavelength(self) -> float:
        return self.geometry.wavelength


def receive_frv(u, fr: FieldResponse, wavelength: float) -> np.ndarray:
    """Receive field-response vector ``exp(j 2 pi rho_j(u) / lambda)``."""
    rho = fr.rx_angles @ np.asarray(u, dtype=float)
    return np.exp(1j * 2 * np.pi / wavelength * rho)


def transmit_frm(tx_angles, fpa_positions, wavelength: float) -> np.ndarray:
    """Transmit field-response matrix ``G[i, n] = exp(j 2 pi rho_i(v_n) / lambda)``."""
    rho = np.asarray(tx_angles, dtype=float) @ np.asarray(fpa_positions, dtype=float).T
    return np.exp(1j * 2 * np.pi / wavelength * rho)


def channel_vector(u, fr: FieldResponse, wavelength: float) -> np.ndarray:
    f = receive_frv(u, fr, wavelength)
    return (f.conj() @ fr.prm @ fr.tx_frm).T


def channel_matrix(apv: Apv, sc: Scenario) -> np.ndarray:
    """N x K channel matrix, column k for user k at ``apv.positions[k]``."""
    if apv.positions.shape[0] != sc.n_users:
        raise ValueError(f"APV has {apv.positions.shape[0]} users, scenario has {sc.n_users}")
    if np.any(np.abs(apv.positions) > sc.region_half * (1 + _REGION_TOL) + _REGION_TOL):
        raise ValueError("APV violates the movable region")
    cols = [channel_vector(u, fr, sc.wavelength) for u, fr in zip(apv.positions, sc.users)]
    return np.stack(cols, axis=1)


def normalized_channel(apv: Apv, sc: Scenario) -> np.ndarray:
    """Channel matrix divided by the noise standard deviation (unit noise power)."""
    return channel_matrix(apv, sc) / math.sqrt(sc.noise_power)


def sample_angles(rng: RngStream, size) -> tuple[np.ndarray, np.ndarray]:
    """Elevation/azimuth pairs with density ``cos(theta) / (2 pi)`` on the half space.

    Elevation by inverse CDF ``sin(theta) = 2r - 1``, azimuth uniform.
    """
    theta = np.arcsin(2 * rng.random(size) - 1)
    phi = np.pi * (rng.random(size) - 0.5)
    return theta, phi


def sample_scenario(cfg, rng: RngStream) -> Scenario:
    """Draw a geometric channel realisation for ``cfg.n_users`` users.

    Each user gets its own sub-stream, so adding users does not change the
    channels of existing ones.
    """
    geom = ArrayGeometry.upa(cfg.n_antennas, cfg.wavelength)
    L = cfg.n_paths
    users = []
    for k in range(cfg.n_users):
        r = rng.spawn(k)
        d = cfg.d_min + (cfg.d_max - cfg.d_min) * r.random()
        c2 = cfg.g0 * d ** (-cfg.zeta)
        rx_theta, rx_phi = sample_angles(r, L)
        tx_theta, tx_phi = sample_angles(r, L)
        prm = np.diag(cscg(r, c2 / L, L))
        users.append(FieldResponse(
            rx_angles=virtual_angles(rx_theta, rx_phi),
            prm=prm,
            tx_frm=transmit_frm(virtual_angles(tx_theta, tx_phi), geom.fpa_positions,
                                cfg.wavelength),
            distance=d,
            rx_theta=rx_theta, rx_phi=rx_phi, tx_theta=tx_theta, tx_phi=tx_phi,
        ))
    return Scenario(geometry=geom, users=tuple(users), noise_power=cfg.noise_power,
                    g0=cfg.g0, path_loss_exp=cfg.zeta, region_half=cfg.region_half,
                    p_max=cfg.p_max)


def perturb_fri(sc: Scenario, mu: float, nu: float, rng: RngStream) -> Scenario:
    """Imperfect field-response information.

    Every receive virtual-angle component is shifted by U[-mu/2, mu/2]
    (no re-projection onto the unit sphere) and every path coefficient gets a
    relative CSCG(0, nu) error scaled by its own magnitude. Transmit-side
    quantities are untouched.
    """
    if mu < 0 or nu < 0:
        raise ValueError(f"mu and nu must be non-negative, got mu={mu}, nu={nu}")
    users = []
    for k, fr in enumerate(sc.users):
        r = rng.spawn(k)
        shift = mu * (r.random(fr.rx_angles.shape) - 0.5)
        err = cscg(r, nu, fr.prm.shape)
        mask = fr.prm != 0
        prm = np.where(mask, fr.prm + np.abs(fr.prm) * err, fr.prm)
        users.append(replace(fr, rx_angles=fr.rx_angles + shift, prm=prm))
    return replace(sc, users=tuple(users))


# -- serialisation ---------------------------------------------------------

def _cplx(a) -> list:
    a = np.asarray(a)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _from_cplx(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[..., 0] + 1j * x[..., 1]


def _opt(a):
    return None if a is None else np.asarray(a).tolist()


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "wavelength": sc.wavelength,
        "fpa_positions": sc.geometry.fpa_positions.tolist(),
        "noise_power": sc.noise_power,
        "g0": sc.g0,
        "path_loss_exp": sc.path_loss_exp,
        "region_half": sc.region_half,
        "p_max": sc.p_max,
        "users": [{
            "distance": fr.distance,
            "rx_angles": fr.rx_angles.tolist(),
            "prm": _cplx(fr.prm),
            "tx_frm": _cplx(fr.tx_frm),
            "rx_theta": _opt(fr.rx_theta), "rx_phi": _opt(fr.rx_phi),
            "tx_theta": _opt(fr.tx_theta), "tx_phi": _opt(fr.tx_phi),
        } for fr in sc.users],
    }


def scenario_from_dict(data: dict) -> Scenario:
    def arr(v):
        return None if v is None else np.asarray(v, dtype=float)

    users = tuple(FieldResponse(
        rx_angles=np.asarray(u["rx_angles"], dtype=float),
        prm=_from_cplx(u["prm"]),
        tx_frm=_from_cplx(u["tx_frm"]),
        distance=float(u["distance"]),
        rx_theta=arr(u.get("rx_theta")), rx_phi=arr(u.get("rx_phi")),
        tx_theta=arr(u.get("tx_theta")), tx_phi=arr(u.get("tx_phi")),
    ) for u in data["users"])
    geom = ArrayGeometry(np.asarray(data["fpa_positions"], dtype=float), float(data["wavelength"]))
    return Scenario(geometry=geom, users=users, noise_power=float(data["noise_power"]),
                    g0=float(data["g0"]), path_loss_exp=float(data["path_loss_exp"]),
                    region_half=float(data["region_half"]), p_max=float(data["p_max"]))


def save_scenario(sc: Scenario, path) -> None:
    """Write a scenario as JSON (radians, metres, complex as ``[re, im]``)."""
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=1))


def load_scenario(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))
