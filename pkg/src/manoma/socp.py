"""Dense second-order cone programming.

Problems are posed as::

    maximize    c^T x
    subject to  ||A_i x + b_i||_2 <= c_i^T x + d_i     for every cone i
                lo <= x <= hi                          (optional)

A cone with zero rows in ``A_i`` is a linear inequality. Internally the
problem is rewritten as ``min -c^T x  s.t.  G x + s = h, s in K`` and solved
with a homogeneous self-dual primal-dual interior-point method using
Nesterov-Todd scaling and a Mehrotra predictor-corrector. Cones of equal
dimension are processed as one batch.

Complex data is mapped to real vectors by stacking ``[Re z; Im z]``, so that
``|z|^2 == ||stack(z)||^2``; see :func:`stack_complex`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import dtrtrs as _trtrs

__all__ = [
    "SocCone",
    "SocpProblem",
    "SolveReport",
    "solve",
    "residuals",
    "stack_complex",
    "unstack_complex",
    "dump_problem",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERATIONS = "max-iterations"


def stack_complex(z) -> np.ndarray:
    z = np.asarray(z)
    return np.concatenate([z.real.ravel(), z.imag.ravel()])


def unstack_complex(v, shape=None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = v.size // 2
    z = v[:n] + 1j * v[n:]
    return z if shape is None else z.reshape(shape)


@dataclass(frozen=True)
class SocCone:
    """``||A x + b|| <= c^T x + d``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float

    @property
    def rows(self) -> int:
        return self.A.shape[0]


@dataclass
class SocpProblem:
    nvars: int
    objective: np.ndarray
    cones: list
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (self.nvars,):
            raise ValueError(f"objective has shape {self.objective.shape}, expected ({self.nvars},)")
        if not self.cones and self.lower is None and self.upper is None:
            raise ValueError("problem needs at least one constraint")
        cones = []
        for i, cone in enumerate(self.cones):
            A = np.asarray(cone.A, dtype=float).reshape(-1, self.nvars) if np.size(cone.A) \
                else np.zeros((0, self.nvars))
            b = np.asarray(cone.b, dtype=float).reshape(-1)
            c = np.asarray(cone.c, dtype=float).reshape(-1)
            if A.shape[1] != self.nvars or b.shape[0] != A.shape[0] or c.shape[0] != self.nvars:
                raise ValueError(f"cone {i}: inconsistent dimensions A{A.shape}, b{b.shape}, c{c.shape}")
            cones.append(SocCone(A, b, c, float(cone.d)))
        self.cones = cones
        for name in ("lower", "upper"):
            bound = getattr(self, name)
            if bound is not None:
                bound = np.broadcast_to(np.asarray(bound, dtype=float), (self.nvars,)).copy()
                setattr(self, name, bound)


@dataclass
class SolveReport:
    x: np.ndarray
    objective_value: float
    status: str
    primal_residual: float
    dual_gap_estimate: float
    iterations: int
    dual_residual: float = float("nan")
    z: np.ndarray | None = field(default=None, repr=False)


def residuals(p: SocpProblem, x) -> tuple[float, np.ndarray]:
    """Largest constraint violation and per-cone slacks ``c^T x + d - ||A x + b||``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.nvars,):
        raise ValueError(f"x has shape {x.shape}, expected ({p.nvars},)")
    slacks = np.array([cone.c @ x + cone.d - np.linalg.norm(cone.A @ x + cone.b)
                       for cone in p.cones])
    worst = float(np.max(-slacks, initial=0.0))
    if p.lower is not None:
        worst = max(worst, float(np.max(p.lower - x, initial=0.0)))
    if p.upper is not None:
        worst = max(worst, float(np.max(x - p.upper, initial=0.0)))
    return max(worst, 0.0), slacks


def dump_problem(p: SocpProblem, path) -> None:
    """Write the problem data as JSON for cross-checking with other solvers."""
    data = {
        "sense": "maximize",
        "nvars": p.nvars,
        "objective": p.objective.tolist(),
        "cones": [{"A": c.A.tolist(), "b": c.b.tolist(), "c": c.c.tolist(), "d": c.d}
                  for c in p.cones],
        "lower": None if p.lower is None else p.lower.tolist(),
        "upper": None if p.upper is None else p.upper.tolist(),
    }
    Path(path).write_text(json.dumps(data))


# -- standard form -----------------------------------------------------------

class _Cones:
    """Layout of ``K = R_+^l x Q^{p_1} x ...`` with SOCs batched by size."""

    def __init__(self, l, groups):
        self.l = l
        self.groups = groups          # list of (offset, count, dim)
        self.m = l + sum(cnt * dim for _, cnt, dim in groups)
        self.degree = l + sum(cnt for _, cnt, _ in groups)
        self._index = {}
        heads, tails, seg = [], [], []
        for off, cnt, dim in groups:
            first = off + dim * np.arange(cnt)
            heads.append(first)
            tails.append((first[:, None] + np.arange(1, dim)[None, :]).ravel())
            seg.append(np.repeat(np.arange(cnt), dim - 1))
        self.nsoc = sum(cnt for _, cnt, _ in groups)
        self.heads = np.concatenate(heads) if heads else np.zeros(0, dtype=int)
        self.tails = np.concatenate(tails) if tails else np.zeros(0, dtype=int)
        # cone number of each tail entry, counted across groups
        counts = np.cumsum([0] + [cnt for _, cnt, _ in groups])
        self.seg = (np.concatenate([sg + c0 for sg, c0 in zip(seg, counts)])
                    if seg else np.zeros(0, dtype=int))
        self.is_lin = np.zeros(self.m, dtype=bool)
        self.is_lin[:l] = True

    def split(self, v):
        """Orthant part and one (count, dim, ...) view per SOC group."""
        blocks = [v[off:off + cnt * dim].reshape((cnt, dim) + v.shape[1:])
                  for off, cnt, dim in self.groups]
        return v[:self.l], blocks

    def block_index(self, off, cnt, dim):
        """Flat (row, col) indices of the diagonal blocks of one SOC group."""
        key = (off, cnt, dim)
        if key not in self._index:
            base = off + dim * np.arange(cnt)[:, None, None]
            a = np.arange(dim)
            rows = np.broadcast_to(base + a[None, :, None], (cnt, dim, dim)).ravel()
            cols = np.broadcast_to(base + a[None, None, :], (cnt, dim, dim)).ravel()
            self._index[key] = (rows, cols)
        return self._index[key]

    def identity(self):
        e = np.zeros(self.m)
        e[:self.l] = 1.0
        e[self.heads] = 1.0
        return e

    def _jdot(self, u, v):
        """``u0 v0 - u1.v1`` per SOC."""
        tail = np.bincount(self.seg, u[self.tails] * v[self.tails], minlength=self.nsoc)
        return u[self.heads] * v[self.heads] - tail

    def min_eig(self, v):
        """Smallest Jordan eigenvalue, cone by cone (x0 - ||x1|| for SOCs)."""
        tail = np.sqrt(np.bincount(self.seg, v[self.tails] ** 2, minlength=self.nsoc))
        return np.concatenate([v[:self.l], v[self.heads] - tail])

    def circ(self, u, v):
        """Jordan product."""
        out = u * v
        h, t, seg = self.heads, self.tails, self.seg
        out[h] += np.bincount(seg, out[t], minlength=self.nsoc)
        out[t] = u[h][seg] * v[t] + v[h][seg] * u[t]
        return out

    def circ_solve(self, lam, d):
        """Solve ``lam o u = d`` for u."""
        out = d / np.where(self.is_lin, lam, 1.0)
        h, t, seg = self.heads, self.tails, self.seg
        a0 = lam[h]
        det = self._jdot(lam, lam)
        u0 = (a0 * d[h] - np.bincount(seg, lam[t] * d[t], minlength=self.nsoc)) / det
        out[h] = u0
        out[t] = (d[t] - u0[seg] * lam[t]) / a0[seg]
        return out

    def jnorm2(self, v):
        """``v0^2 - ||v1||^2`` per SOC."""
        return self._jdot(v, v)

    def max_step(self, lam, d):
        """Largest alpha with ``lam + alpha d`` in the cone (lam interior)."""
        alpha = np.inf
        lin = d[:self.l]
        neg = lin < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-lam[:self.l][neg] / lin[neg])))
        if self.nsoc:
            a = self._jdot(d, d)
            b = self._jdot(lam, d)
            c = self._jdot(lam, lam)
            disc = b * b - a * c
            den = -b + np.sqrt(np.maximum(disc, 0.0))
            ok = (disc >= 0) & (den > 0)
            if np.any(ok):
                alpha = min(alpha, float(np.min(c[ok] / den[ok])))
        return alpha


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-1} s = lam``.

    ``W`` and ``W^{-1}`` are stored as dense block-diagonal matrices; the
    problems solved here are small enough that one matrix product beats many
    per-cone operations.
    """

    def __init__(self, cones: _Cones, s, z, sjs=None, zjz=None):
        self.cones = cones
        l, m = cones.l, cones.m
        mat = np.zeros((m, m))
        inv = np.zeros((m, m))
        d = np.sqrt(s[:l] / z[:l])
        idx = np.arange(l)
        mat[idx, idx] = d
        inv[idx, idx] = 1.0 / d
        h, t, seg = cones.heads, cones.tails, cones.seg
        sn = np.sqrt(cones.jnorm2(s) if sjs is None else sjs)
        zn = np.sqrt(cones.jnorm2(z) if zjz is None else zjz)
        sbar = s.copy()
        zbar = z.copy()
        sbar[h] /= sn
        sbar[t] /= sn[seg]
        zbar[h] /= zn
        zbar[t] /= zn[seg]
        dot = sbar[h] * zbar[h] + np.bincount(seg, sbar[t] * zbar[t], minlength=cones.nsoc)
        gamma = np.sqrt(np.maximum((1 + dot) / 2, 0.0))
        # NT point, then its Jordan square root w (W = beta (2 w w^T - J))
        nt0 = (sbar[h] + zbar[h]) / (2 * gamma)
        w = np.empty(m)
        norm = np.sqrt(2 * (1 + nt0))
        w[h] = (nt0 + 1.0) / norm
        w[t] = (sbar[t] - zbar[t]) / (2 * gamma[seg]) / norm[seg]
        beta = np.sqrt(sn / zn)
        pos = 0
        for off, cnt, dim in cones.groups:
            wg = w[off:off + cnt * dim].reshape(cnt, dim)
            bg = beta[pos:pos + cnt, None, None]
            pos += cnt
            J = np.diag(np.concatenate([[1.0], -np.ones(dim - 1)]))
            wi = wg.copy()
            wi[:, 1:] *= -1
            rows, cols = cones.block_index(off, cnt, dim)
            mat[rows, cols] = ((2 * wg[:, :, None] * wg[:, None, :] - J) * bg).ravel()
            inv[rows, cols] = ((2 * wi[:, :, None] * wi[:, None, :] - J) / bg).ravel()
        self.mat = mat
        self.inv = inv
        self.beta2 = beta ** 2
        self.lam = mat @ z

    def apply(self, v, inverse=False):
        """``W v`` (or ``W^{-1} v``) for a vector or an m x n matrix."""
        return (self.inv if inverse else self.mat) @ v

    def scaled_jnorm_factor(self):
        """beta^2 per SOC: ``s^T J s = beta^2 * s~^T J s~`` for ``s = W s~``."""
        return self.beta2


def _standard_form(p: SocpProblem):
    """``G x + s = h`` rows: linear first, then SOCs grouped by dimension."""
    n = p.nvars
    lin_G, lin_h = [], []
    socs = {}
    for cone in p.cones:
        if cone.rows == 0:
            lin_G.append(-cone.c[None, :])
            lin_h.append([cone.d])
        else:
            Gi = -np.vstack([cone.c[None, :], cone.A])
            hi = np.concatenate([[cone.d], cone.b])
            socs.setdefault(cone.rows + 1, []).append((Gi, hi))
    eye = np.eye(n)
    if p.lower is not None:
        fin = np.isfinite(p.lower)
        lin_G.append(-eye[fin])
        lin_h.append(-p.lower[fin])
    if p.upper is not None:
        fin = np.isfinite(p.upper)
        lin_G.append(eye[fin])
        lin_h.append(p.upper[fin])
    G_parts = lin_G[:]
    h_parts = [np.asarray(h, dtype=float) for h in lin_h]
    l = sum(g.shape[0] for g in lin_G)
    groups = []
    off = l
    for dim in sorted(socs):
        items = socs[dim]
        groups.append((off, len(items), dim))
        off += len(items) * dim
        G_parts.extend(g for g, _ in items)
        h_parts.extend(h for _, h in items)
    G = np.vstack(G_parts) if G_parts else np.zeros((0, n))
    h = np.concatenate(h_parts) if h_parts else np.zeros(0)
    return G, h, _Cones(l, groups)


class _KKT:
    """Solver for ``[0 G^T; G -W^2] [ux; uz] = [bx; bz]``.

    Eliminating uz leaves ``(W^{-1}G)^T (W^{-1}G) ux = rhs``; a QR factor of
    ``W^{-1}G`` is used instead of forming the normal matrix.
    """

    def __init__(self, G, scaling: _Scaling):
        self.G = G
        self.W = scaling
        self.Gs = scaling.apply(G, inverse=True)
        if not np.all(np.isfinite(self.Gs)):
            raise FloatingPointError("non-finite scaling")
        self.r = scipy.linalg.qr(self.Gs, mode="r", check_finite=False)[0][:G.shape[1]]
        diag = np.abs(np.diag(self.r))
        self.singular = (G.shape[0] < G.shape[1] or diag.size == 0
                         or diag.min() <= 1e-13 * diag.max())

    def _solve_once(self, bx, bz):
        bzs = self.W.apply(bz, inverse=True)
        rhs = bx + self.Gs.T @ bzs
        if self.singular:
            ux = np.linalg.lstsq(self.Gs.T @ self.Gs, rhs, rcond=None)[0]
        else:
            y = _trtrs(self.r, rhs, trans=1)[0]
            ux = _trtrs(self.r, y)[0]
        uz = self.W.apply(self.Gs @ ux - bzs, inverse=True)
        return ux, uz

    def solve(self, bx, bz, refine: int = 1):
        ux, uz = self._solve_once(bx, bz)
        # iterative refinement against the unreduced system
        for _ in range(refine):
            ex = bx - self.G.T @ uz
            ez = bz - (self.G @ ux - self.W.apply(self.W.apply(uz)))
            dx, dz = self._solve_once(ex, ez)
            ux, uz = ux + dx, uz + dz
        return ux, uz


def _equilibrate(G, cones: _Cones, passes: int = 10):
    """Ruiz scaling ``E G D``: D per column, E per orthant row or per SOC block."""
    m, n = G.shape
    D = np.ones(n)
    E = np.ones(m)
    Gs = G.copy()
    for _ in range(passes):
        col = np.max(np.abs(Gs), axis=0, initial=0.0)
        dc = 1.0 / np.sqrt(np.where(col > 1e-12, col, 1.0))
        row = np.max(np.abs(Gs), axis=1, initial=0.0)
        for off, cnt, dim in cones.groups:
            blk = row[off:off + cnt * dim].reshape(cnt, dim)
            blk[:] = blk.max(axis=1, keepdims=True)
        dr = 1.0 / np.sqrt(np.where(row > 1e-12, row, 1.0))
        Gs = dr[:, None] * Gs * dc[None, :]
        D *= dc
        E *= dr
    return Gs, D, E


def _violation(G, h, cones: _Cones, x) -> float:
    return max(0.0, -float(np.min(cones.min_eig(h - G @ x), initial=0.0)))


def _shift_into_cone(cones: _Cones, v):
    t = -np.min(cones.min_eig(v), initial=np.inf)
    if t >= -1e-8 * max(np.linalg.norm(v), 1.0):
        v = v + (1.0 + t) * cones.identity()
    return v


def solve(p: SocpProblem, feas_tol: float = 1e-8, gap_tol: float = 1e-8,
          max_iters: int = 200, x0=None) -> SolveReport:
    """Solve a SOCP.

    Parameters
    ----------
    p : SocpProblem
    feas_tol : float
        Bound on the relative primal/dual residuals and on the absolute cone
        violation of the returned point.
    gap_tol : float
        Bound on the duality gap relative to ``max(1, |objective|)``.
    max_iters : int
    x0 : array, optional
        Primal starting point (warm start).

    Returns
    -------
    SolveReport
        ``status`` is ``"optimal"``, ``"infeasible"``, ``"unbounded"`` or
        ``"max-iterations"``; for the last one ``x`` is the best iterate seen.
    """
    with np.errstate(all="ignore"):
        return _solve(p, feas_tol, gap_tol, max_iters, x0)


def _solve(p: SocpProblem, feas_tol, gap_tol, max_iters, x0) -> SolveReport:
    G0, h0, cones = _standard_form(p)
    # solve the equilibrated problem min (D c)^T y  s.t.  (E G D) y + E s = E h
    G, D, E = _equilibrate(G0, cones)
    h = E * h0
    c = -p.objective * D
    m, n = G.shape
    e = cones.identity()
    resx0 = max(1.0, np.linalg.norm(c))
    resz0 = max(1.0, np.linalg.norm(h))

    if x0 is None:
        x = np.linalg.lstsq(G, h, rcond=None)[0]
    else:
        x = np.asarray(x0, dtype=float) / D
    s = _shift_into_cone(cones, h - G @ x)
    z = _shift_into_cone(cones, -G @ np.linalg.lstsq(G.T @ G, c, rcond=None)[0])
    tau, kappa = 1.0, 1.0
    W = _Scaling(cones, s, z)

    best = None
    status = MAX_ITERATIONS
    it = 0
    for it in range(max_iters + 1):
        rx = G.T @ z + c * tau
        rz = s + G @ x - h * tau
        rt = kappa + c @ x + h @ z
        cx, hz = c @ x, h @ z
        pres = np.linalg.norm(rz) / max(tau * resz0, np.linalg.norm(G @ x))
        dres = np.linalg.norm(rx) / max(tau * resx0, np.linalg.norm(G.T @ z))
        pcost = cx / tau
        gap = s @ z / tau ** 2
        relgap = gap / max(1.0, abs(pcost))
        xs = D * x / tau
        viol = _violation(G0, h0, cones, xs)
        score = max(pres, dres, relgap / max(gap_tol, 1e-300) * feas_tol)
        if best is None or score < best[0]:
            best = (score, xs.copy(), E * z / tau, pres, dres, relgap, viol)
        if pres <= feas_tol and dres <= feas_tol and relgap <= gap_tol and viol <= feas_tol:
            status = OPTIMAL
            break
        if hz < 0 and np.linalg.norm(G.T @ z) / resx0 / (-hz) <= feas_tol:
            status = INFEASIBLE
            break
        if cx < 0 and np.linalg.norm(G @ x + s) / resz0 / (-cx) <= feas_tol:
            status = UNBOUNDED
            break
        if it == max_iters:
            break

        mu = (s @ z + tau * kappa) / (cones.degree + 1)
        lam = W.lam
        try:
            kkt = _KKT(G, W)
        except (ValueError, FloatingPointError):
            break
        px, pz = kkt.solve(-c, h)
        denom = c @ px + h @ pz - kappa / tau

        def newton(r1, r2, r3, ds, dk):
            """Solve the linearized system; returns (Dx, Dz, W^{-1}Ds, dtau, dkappa)."""
            u = cones.circ_solve(lam, ds)
            ax, az = kkt.solve(r1, r2 - W.apply(u))
            dtau = (r3 - dk / tau - c @ ax - h @ az) / denom
            Dx = ax + dtau * px
            Dz = az + dtau * pz
            Dss = u - W.apply(Dz)
            dkappa = (dk - kappa * dtau) / tau
            return Dx, Dz, Dss, dtau, dkappa

        def direction(sigma, ds, dk):
            coef = 1.0 - sigma
            rhs = (-coef * rx, -coef * rz, -coef * rt, ds, dk)
            sol = newton(*rhs)
            # one round of refinement on the full linearized system
            Dx, Dz, Dss, dtau, dkappa = sol
            Dzs = W.apply(Dz)
            err = (rhs[0] - (G.T @ Dz + c * dtau),
                   rhs[1] - (G @ Dx + W.apply(Dss) - h * dtau),
                   rhs[2] - (dkappa + c @ Dx + h @ Dz),
                   rhs[3] - cones.circ(lam, Dss + Dzs),
                   rhs[4] - (kappa * dtau + tau * dkappa))
            corr = newton(*err)
            Dx, Dz, Dss, dtau, dkappa = (a + b for a, b in zip(sol, corr))
            return Dx, Dz, W.apply(Dz), Dss, dtau, dkappa

        def step_to_boundary(Dss, Dzs, dtau, dkappa):
            a = min(cones.max_step(lam, Dss), cones.max_step(lam, Dzs))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        ds_aff = -cones.circ(lam, lam)
        dk_aff = -tau * kappa
        _, _, Dzs_a, Dss_a, dtau_a, dkappa_a = direction(0.0, ds_aff, dk_aff)
        a_aff = min(1.0, step_to_boundary(Dss_a, Dzs_a, dtau_a, dkappa_a))
        sigma = (1.0 - a_aff) ** 3

        # corrector
        ds = ds_aff - cones.circ(Dss_a, Dzs_a) + sigma * mu * e
        dk = dk_aff - dtau_a * dkappa_a + sigma * mu
        Dx, Dz, Dzs, Dss, dtau, dkappa = direction(sigma, ds, dk)
        alpha = min(1.0, 0.99 * step_to_boundary(Dss, Dzs, dtau, dkappa))
        if not np.isfinite(alpha) or alpha <= 1e-14:
            break

        s_scaled = lam + alpha * Dss
        z_scaled = lam + alpha * Dzs
        factor = W.scaled_jnorm_factor()
        sjs = factor * cones.jnorm2(s_scaled)
        zjz = cones.jnorm2(z_scaled) / factor if factor.size else factor
        x = x + alpha * Dx
        s = s + alpha * W.apply(Dss)
        z = z + alpha * Dz
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if (np.any(sjs <= 0) or np.any(zjz <= 0) or not tau > 0 or not kappa > 0
                or not np.all(np.isfinite(s)) or not np.all(np.isfinite(z))):
            break
        W = _Scaling(cones, s, z, sjs, zjz)

    if status == OPTIMAL:
        zs = E * z / tau
    elif status == MAX_ITERATIONS:
        _, xs, zs, pres, dres, relgap, viol = best
    else:
        # certificates are reported unnormalized
        xs, zs = D * x, E * z
        viol = _violation(G0, h0, cones, xs / max(tau, 1e-300))
    return SolveReport(
        x=xs,
        objective_value=float(p.objective @ xs),
        status=status,
        primal_residual=float(viol),
        dual_gap_estimate=float(relgap),
        iterations=it,
        dual_residual=float(dres),
        z=zs,
    )
