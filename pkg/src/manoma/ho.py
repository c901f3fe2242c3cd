"""Hippopotamus optimization over the stacked antenna position vector.

Each hippo is a candidate position vector of length 3K. One iteration:

1. split the herd into a stronger and a weaker half (by fitness, or by
   index for the original variant) and snapshot the dominant hippo;
2. stronger hippos try a "male" and a "female" move and keep the best of
   {current, male, female};
3. weaker hippos flee a random predator with a Levy-scaled step and keep the
   move only if it improves;
4. every hippo tries a local move in a window that shrinks like 1/i.

All candidates are clamped to the cube. All acceptances require strict
improvement, so the best fitness never decreases.

Randomness comes from one sub-stream per (iteration, hippo, phase). Fitness
calls receive a key ``(iteration, hippo, phase, candidate)``, which lets the
fitness derive its own reproducible randomness. Candidate generators take
the stream as an argument and document their draw order, so a scripted
stream can replay them exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .ao import AoParams, AoResult, NomaFitness, ao_solve
from .channel import Apv, Scenario
from .rates import Precoder
from .stochastic import RngStream, levy_matrix, uniform

__all__ = [
    "Hippo",
    "HoParams",
    "HoHistory",
    "HoOutcome",
    "clamp_region",
    "init_population",
    "split_population",
    "male_candidate",
    "female_candidate",
    "predator_position",
    "predator_candidate",
    "local_candidate",
    "phase1_update",
    "phase2_update",
    "phase3_local",
    "search",
    "optimize",
    "Optimized",
    "PHASE_INIT",
    "PHASE_RIVER",
    "PHASE_DEFENSE",
    "PHASE_ESCAPE",
]

PHASE_INIT, PHASE_RIVER, PHASE_DEFENSE, PHASE_ESCAPE = 0, 1, 2, 3
_LEVY_STREAM = 9
SEARCH_STREAM, FITNESS_STREAM = 0, 1
P_I_THRESHOLD = 0.6
DIST_FLOOR = 1e-12
DEN_FLOOR = 1e-12


@dataclass
class Hippo:
    """A candidate position with its cached fitness and the key it was evaluated with."""

    position: np.ndarray
    fitness: float
    id: int
    key: tuple = ()


@dataclass(frozen=True)
class HoParams:
    """Search settings.

    ``split`` selects ``"fitness"`` (stronger half = best fitness) or
    ``"index"`` (first half by id, the original scheme). ``seed_origin``
    replaces hippo 0's random start with the all-zero position.
    """

    n_hippos: int
    max_iters: int
    beta: float
    b_l: float
    b_u: float
    split: str = "fitness"
    seed_origin: bool = True

    def __post_init__(self):
        if self.n_hippos < 2:
            raise ValueError(f"n_hippos must be >= 2, got {self.n_hippos}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0 < self.beta <= 2:
            raise ValueError(f"beta must lie in (0, 2], got {self.beta}")
        if self.b_l > self.b_u:
            raise ValueError(f"b_l={self.b_l} exceeds b_u={self.b_u}")
        if self.split not in ("fitness", "index"):
            raise ValueError(f"split must be 'fitness' or 'index', got {self.split!r}")

    @classmethod
    def from_config(cls, cfg, **overrides) -> "HoParams":
        values = dict(n_hippos=cfg.n_hippos, max_iters=cfg.i_max, beta=cfg.beta,
                      b_l=-cfg.region_half, b_u=cfg.region_half, seed_origin=cfg.seed_origin)
        values.update(overrides)
        return cls(**values)


@dataclass
class HoHistory:
    """Convergence record. Entry i of each list describes iteration i + 1."""

    initial_best: float
    initial_evaluations: int = 0
    best_fitness_per_iter: list = field(default_factory=list)
    best_position_per_iter: list = field(default_factory=list)
    evaluations_per_iter: list = field(default_factory=list)
    evaluation_count: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "best_fitness"])
            writer.writerow([0, repr(float(self.initial_best))])
            for i, value in enumerate(self.best_fitness_per_iter, start=1):
                writer.writerow([i, repr(float(value))])


@dataclass
class HoOutcome:
    best: Hippo
    history: HoHistory
    population: list


def clamp_region(x, params: HoParams) -> np.ndarray:
    """Project every coordinate onto ``[b_l, b_u]``."""
    return np.clip(np.asarray(x, dtype=float), params.b_l, params.b_u)


def _uniform_position(rng, dim: int, params: HoParams) -> np.ndarray:
    return params.b_l + rng.random(dim) * (params.b_u - params.b_l)


class _Counter:
    """Wraps a fitness callable and counts calls."""

    def __init__(self, fn, map_fn=map):
        self.fn, self.map_fn, self.calls = fn, map_fn, 0

    def __call__(self, position, key):
        self.calls += 1
        return float(self.fn(position, key))

    def many(self, positions, keys) -> list:
        self.calls += len(positions)
        return [float(v) for v in self.map_fn(self.fn, positions, keys)]


def init_population(dim: int, params: HoParams, rng: RngStream, fitness, map_fn=map) -> list:
    """Uniform initial herd. Hippo n draws from ``rng.spawn(0, n, 0)``."""
    positions = []
    for n in range(params.n_hippos):
        if n == 0 and params.seed_origin:
            positions.append(clamp_region(np.zeros(dim), params))
        else:
            positions.append(_uniform_position(rng.spawn(0, n, PHASE_INIT), dim, params))
    keys = [(0, n, PHASE_INIT, 0) for n in range(params.n_hippos)]
    counter = fitness if isinstance(fitness, _Counter) else _Counter(fitness, map_fn)
    values = counter.many(positions, keys)
    return [Hippo(p, v, n, k) for n, (p, v, k) in enumerate(zip(positions, values, keys))]


def _rank(pop) -> list:
    """Hippos sorted best first; ties go to the lower id."""
    return sorted(pop, key=lambda h: (-h.fitness, h.id))


def split_population(pop, mode: str = "fitness") -> tuple[list, list]:
    """Stronger and weaker sets; the stronger set gets ``ceil(N/2)`` members."""
    if len(pop) < 2:
        raise ValueError("need at least two hippos to split")
    n_strong = math.ceil(len(pop) / 2)
    ordered = _rank(pop) if mode == "fitness" else sorted(pop, key=lambda h: h.id)
    return ordered[:n_strong], ordered[n_strong:]


def male_candidate(u, gbest, rng, params: HoParams) -> np.ndarray:
    """``u + r1 (gbest - I1 u)``. Draws: I1 in {1, 2}, then r1."""
    i1 = int(rng.integers(1, 3))
    r1 = float(rng.random())
    return clamp_region(u + r1 * (gbest - i1 * u), params)


def _female_event(rng, dim: int, i2: int) -> np.ndarray:
    """One of four random vectors. Draws: the event index, then its values."""
    event = int(rng.integers(0, 4))
    if event == 0:
        r2 = rng.random(dim)
        rho = int(rng.integers(0, 2))
        return i2 * r2 + rho
    if event == 1:
        return 2.0 * rng.random(dim) - 1.0
    if event == 2:
        return rng.random(dim)
    return float(rng.random()) * np.ones(dim)


def female_candidate(u, gbest, population, iteration: int, rng, params: HoParams) -> np.ndarray:
    """Female move around the mean of a random group of hippos.

    Draws, in order: group size in ``1..N``, a permutation choosing the
    group, ``I2`` in {1, 2}, then
    - if ``exp(-i / I_max) > 0.6``: an event vector;
    - otherwise ``r6``, then an event vector if ``r6 > 0.5`` or ``r7`` if not.
    """
    population = np.asarray(population, dtype=float)
    n_pop, dim = population.shape
    size = int(rng.integers(1, n_pop + 1))
    members = np.asarray(rng.permutation(n_pop))[:size]
    u_mg = population[members].mean(axis=0)
    i2 = int(rng.integers(1, 3))
    p_i = math.exp(-iteration / params.max_iters)
    if p_i > P_I_THRESHOLD:
        cand = u + _female_event(rng, dim, i2) * (gbest - i2 * u_mg)
    else:
        r6 = float(rng.random())
        if r6 > 0.5:
            cand = u + _female_event(rng, dim, i2) * (u_mg - gbest)
        else:
            r7 = float(rng.random())
            cand = (params.b_l + r7 * (params.b_u - params.b_l)) * np.ones(dim)
    return clamp_region(cand, params)


def predator_position(rng, dim: int, params: HoParams) -> np.ndarray:
    """Uniform predator. Draws: ``r8`` (a vector)."""
    return _uniform_position(rng, dim, params)


def predator_candidate(u, predator, predator_wins: bool, levy_col, rng,
                       params: HoParams) -> np.ndarray:
    """Flight from a predator.

    Draws, in order: ``rb ~ U(2, 4)``, ``rc ~ U(1, 1.5)``, ``rd ~ U(2, 3)``,
    ``rg ~ U(-1, 1)``, and ``r9`` (a vector) only when the predator does not
    beat the hippo.
    """
    d = np.maximum(np.abs(predator - u), DIST_FLOOR)
    rb = uniform(rng, 2.0, 4.0)
    rc = uniform(rng, 1.0, 1.5)
    rd = uniform(rng, 2.0, 3.0)
    rg = uniform(rng, -1.0, 1.0)
    if predator_wins:
        step = 1.0 / d
    else:
        r9 = rng.random(u.size)
        step = 1.0 / (2.0 * d + r9)
    den = rc - rd * math.cos(2 * math.pi * rg)
    if abs(den) < DEN_FLOOR:
        den = math.copysign(DEN_FLOOR, den)
    return clamp_region(levy_col * predator + rb / den * step, params)


def local_candidate(u, iteration: int, rng, params: HoParams) -> np.ndarray:
    """Local move in ``[b_l / i, b_u / i]``.

    Draws: ``r10``, the event index in {0, 1, 2}, then the event values
    (a uniform vector, a uniform scalar or a standard normal scalar).
    """
    lo, hi = params.b_l / iteration, params.b_u / iteration
    dim = u.size
    r10 = float(rng.random())
    event = int(rng.integers(0, 3))
    if event == 0:
        direction = 2.0 * rng.random(dim) - 1.0
    elif event == 1:
        direction = float(rng.random()) * np.ones(dim)
    else:
        direction = float(rng.normal()) * np.ones(dim)
    return clamp_region(u + r10 * (lo + direction * (hi - lo)), params)


def _better(value: float, incumbent: float) -> bool:
    return value > incumbent


def phase1_update(hippo: Hippo, gbest, population, iteration: int, params: HoParams,
                  rng, fitness) -> Hippo:
    """Male and female moves for one stronger hippo; keeps the strict best."""
    male = male_candidate(hippo.position, gbest, rng, params)
    female = female_candidate(hippo.position, gbest, population, iteration, rng, params)
    keys = [(iteration, hippo.id, PHASE_RIVER, 0), (iteration, hippo.id, PHASE_RIVER, 1)]
    r_male, r_female = fitness(male, keys[0]), fitness(female, keys[1])
    return _accept_river(hippo, male, female, r_male, r_female, keys)


def _accept_river(hippo, male, female, r_male, r_female, keys) -> Hippo:
    if r_male > max(hippo.fitness, r_female):
        return Hippo(male, r_male, hippo.id, keys[0])
    if r_female > max(hippo.fitness, r_male):
        return Hippo(female, r_female, hippo.id, keys[1])
    return hippo


def phase2_update(hippo: Hippo, iteration: int, params: HoParams, rng, fitness,
                  levy_col) -> Hippo:
    """Predator defense for one weaker hippo; keeps the move on strict improvement."""
    dim = hippo.position.size
    predator = predator_position(rng, dim, params)
    key_p = (iteration, hippo.id, PHASE_DEFENSE, 0)
    r_pred = fitness(predator, key_p)
    cand = predator_candidate(hippo.position, predator, r_pred > hippo.fitness, levy_col,
                              rng, params)
    key_c = (iteration, hippo.id, PHASE_DEFENSE, 1)
    r_cand = fitness(cand, key_c)
    if _better(r_cand, hippo.fitness):
        return Hippo(cand, r_cand, hippo.id, key_c)
    return hippo


def phase3_local(hippo: Hippo, iteration: int, params: HoParams, rng, fitness) -> Hippo:
    """Shrinking local search; keeps the move on strict improvement."""
    if iteration < 1:
        raise ValueError(f"iteration must be >= 1, got {iteration}")
    cand = local_candidate(hippo.position, iteration, rng, params)
    key = (iteration, hippo.id, PHASE_ESCAPE, 0)
    r = fitness(cand, key)
    if _better(r, hippo.fitness):
        return Hippo(cand, r, hippo.id, key)
    return hippo


def search(fitness, dim: int, params: HoParams, rng: RngStream, map_fn=map,
           callback=None) -> HoOutcome:
    """Maximize ``fitness(position, key)`` over ``[b_l, b_u]^dim``.

    Parameters
    ----------
    fitness : callable
        ``fitness(position, key) -> float``; must be picklable when
        ``map_fn`` dispatches to other processes.
    dim : int
    params : HoParams
    rng : RngStream
    map_fn : callable, optional
        ``map``-like function used for the independent evaluations of each
        phase (for example ``executor.map``). Results are consumed in order,
        so the outcome does not depend on scheduling.
    callback : callable, optional
        Called as ``callback(iteration, best_hippo)`` after each iteration.
    """
    counter = _Counter(fitness, map_fn)
    pop = init_population(dim, params, rng, counter)
    history = HoHistory(initial_best=_rank(pop)[0].fitness, initial_evaluations=counter.calls)
    for i in range(1, params.max_iters + 1):
        calls_before = counter.calls
        strong, weak = split_population(pop, params.split)
        gbest = _rank(pop)[0].position.copy()
        snapshot = np.array([h.position for h in sorted(pop, key=lambda h: h.id)])
        by_id = {h.id: h for h in pop}

        # river/pond: candidates first, then all evaluations, then acceptance
        moves = []
        for h in sorted(strong, key=lambda h: h.id):
            r = rng.spawn(i, h.id, PHASE_RIVER)
            male = male_candidate(h.position, gbest, r, params)
            female = female_candidate(h.position, gbest, snapshot, i, r, params)
            moves.append((h, male, female))
        positions = [p for _, m, f in moves for p in (m, f)]
        keys = [(i, h.id, PHASE_RIVER, c) for h, _, _ in moves for c in (0, 1)]
        values = counter.many(positions, keys)
        for j, (h, male, female) in enumerate(moves):
            by_id[h.id] = _accept_river(h, male, female, values[2 * j], values[2 * j + 1],
                                        keys[2 * j:2 * j + 2])

        # predator defense: predators are evaluated before the flight moves
        weak_ids = sorted(h.id for h in weak)
        levy = levy_matrix(rng.spawn(i, _LEVY_STREAM), dim, params.n_hippos, params.beta)
        streams = {n: rng.spawn(i, n, PHASE_DEFENSE) for n in weak_ids}
        predators = [predator_position(streams[n], dim, params) for n in weak_ids]
        r_pred = counter.many(predators, [(i, n, PHASE_DEFENSE, 0) for n in weak_ids])
        flights = [predator_candidate(by_id[n].position, p, rp > by_id[n].fitness,
                                      levy[:, n], streams[n], params)
                   for n, p, rp in zip(weak_ids, predators, r_pred)]
        keys = [(i, n, PHASE_DEFENSE, 1) for n in weak_ids]
        values = counter.many(flights, keys)
        for n, cand, v, k in zip(weak_ids, flights, values, keys):
            if _better(v, by_id[n].fitness):
                by_id[n] = Hippo(cand, v, n, k)

        # escape: local search for everyone
        ids = sorted(by_id)
        cands = [local_candidate(by_id[n].position, i, rng.spawn(i, n, PHASE_ESCAPE), params)
                 for n in ids]
        keys = [(i, n, PHASE_ESCAPE, 0) for n in ids]
        values = counter.many(cands, keys)
        for n, cand, v, k in zip(ids, cands, values, keys):
            if _better(v, by_id[n].fitness):
                by_id[n] = Hippo(cand, v, n, k)

        pop = [by_id[n] for n in ids]
        best = _rank(pop)[0]
        history.best_fitness_per_iter.append(best.fitness)
        history.best_position_per_iter.append(best.position.copy())
        history.evaluations_per_iter.append(counter.calls - calls_before)
        if callback is not None:
            callback(i, best)
    history.evaluation_count = counter.calls
    return HoOutcome(best=_rank(pop)[0], history=history, population=pop)


class Optimized(NamedTuple):
    """Result of :func:`optimize`; unpacks as ``(apv, precoder, decoding, history)``."""

    apv: Apv
    precoder: Precoder
    decoding: np.ndarray
    history: HoHistory
    inner: AoResult | None = None


def optimize(sc: Scenario, ho: HoParams, ao: AoParams, rng: RngStream,
             decoding: str = "adaptive", map_fn=map, callback=None) -> Optimized:
    """Joint position, precoder and decoding optimization.

    The position search draws from ``rng.spawn(0)``; every fitness call runs
    :func:`~manoma.ao.ao_solve` on ``rng.spawn(1, *key)``. The final
    ``(W, M)`` is recomputed with the dominant hippo's key, so it reproduces
    the dominant fitness exactly.
    """
    fitness = NomaFitness(sc, ao, rng.seed, decoding,
                          stream=rng.stream_id + (FITNESS_STREAM,))
    outcome = search(fitness, 3 * sc.n_users, ho, rng.spawn(SEARCH_STREAM), map_fn=map_fn,
                     callback=callback)
    best = outcome.best
    apv = Apv.from_vector(best.position, sc.region_half)
    inner = ao_solve(sc, apv, ao, fitness.rng(best.key), decoding)
    return Optimized(apv, inner.precoder, inner.decoding, outcome.history, inner)
