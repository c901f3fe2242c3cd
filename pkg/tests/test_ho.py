import csv
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, strategies as st

from manoma.ao import AoParams
from manoma.channel import sample_scenario
from manoma.config import config_from_dict
from manoma.ho import (Hippo, HoParams, clamp_region, female_candidate, init_population,
                       local_candidate, male_candidate, optimize, phase1_update, phase2_update,
                       phase3_local, predator_candidate, predator_position, search,
                       split_population)
from manoma.stochastic import RngStream

from scripted import ScriptedRng

A = 0.02
P = HoParams(n_hippos=4, max_iters=10, beta=1.5, b_l=-A / 2, b_u=A / 2)


def sphere(target):
    return lambda x, key=None: -float(np.sum((np.asarray(x) - target) ** 2))


def test_params_validation():
    with pytest.raises(ValueError):
        HoParams(1, 5, 1.5, -1, 1)
    with pytest.raises(ValueError):
        HoParams(4, 0, 1.5, -1, 1)
    with pytest.raises(ValueError):
        HoParams(4, 5, 2.5, -1, 1)
    with pytest.raises(ValueError):
        HoParams(4, 5, 1.5, 1, -1)
    with pytest.raises(ValueError):
        HoParams(4, 5, 1.5, -1, 1, split="other")


def test_clamp_examples():
    assert clamp_region([-A / 2 - 0.1], P)[0] == -A / 2
    x = np.array([0.001, -0.002, 0.0])
    assert np.array_equal(clamp_region(x, P), x)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=12))
def test_clamp_matches_minmax(values):
    got = clamp_region(values, P)
    assert got.tolist() == [min(max(v, -A / 2), A / 2) for v in values]


def test_init_population_bounds_and_mean():
    params = HoParams(10_000, 1, 1.5, -A / 2, A / 2, seed_origin=False)
    pop = init_population(3, params, RngStream(0), lambda x, k: 0.0)
    pos = np.array([h.position for h in pop])
    assert np.all(np.abs(pos) <= A / 2)
    assert np.all(np.abs(pos.mean(axis=0)) <= 0.02 * A)
    flat = HoParams(3, 1, 1.5, 0.004, 0.004)
    pop = init_population(2, flat, RngStream(0), lambda x, k: 0.0)
    assert all(np.array_equal(h.position, pop[0].position) for h in pop)


def test_init_population_origin_and_keys():
    calls = []
    pop = init_population(6, P, RngStream(1), lambda x, k: calls.append(k) or 1.0)
    assert np.array_equal(pop[0].position, np.zeros(6))
    assert [h.key for h in pop] == calls == [(0, n, 0, 0) for n in range(4)]


def test_split_examples():
    pop = [Hippo(np.zeros(1), f, i) for i, f in enumerate((3, 1, 2, 4))]
    strong, weak = split_population(pop)
    assert [h.id for h in strong] == [3, 0] and {h.id for h in weak} == {2, 1}
    equal = [Hippo(np.zeros(1), 1.0, i) for i in range(5)]
    strong, weak = split_population(equal)
    assert [h.id for h in strong] == [0, 1, 2] and [h.id for h in weak] == [3, 4]
    strong, weak = split_population(pop, "index")
    assert [h.id for h in strong] == [0, 1]
    with pytest.raises(ValueError):
        split_population(pop[:1])


@given(st.lists(st.integers(0, 5), min_size=2, max_size=15))
def test_split_matches_sort(fits):
    pop = [Hippo(np.zeros(1), float(f), i) for i, f in enumerate(fits)]
    strong, weak = split_population(pop)
    order = sorted(range(len(fits)), key=lambda i: (-fits[i], i))
    n = math.ceil(len(fits) / 2)
    assert [h.id for h in strong] == order[:n]
    assert sorted(h.id for h in weak) == sorted(order[n:])


def test_male_examples():
    u, g = np.array([0.001, 0.002]), np.array([-0.003, 0.004])
    assert np.array_equal(male_candidate(u, g, ScriptedRng([("integers", 1), ("random", 0.0)]), P), u)
    assert np.allclose(male_candidate(u, g, ScriptedRng([("integers", 1), ("random", 1.0)]), P), g)
    got = male_candidate(u, g, ScriptedRng([("integers", 2), ("random", 0.25)]), P)
    assert np.allclose(got, u + 0.25 * (g - 2 * u))


def test_female_early_branch_events():
    u = np.array([0.001, -0.002, 0.003])
    g = np.array([0.004, 0.0, -0.001])
    pop = np.array([[0.0, 0.0, 0.0], [0.002, 0.002, 0.002], [-0.004, 0.001, 0.0]])
    mg = pop[[2, 0]].mean(axis=0)
    r = np.array([0.1, 0.5, 0.9])
    cases = [
        ([("integers", 0), ("random_vec", r), ("integers", 1)], lambda i2: i2 * r + 1),
        ([("integers", 1), ("random_vec", r)], lambda i2: 2 * r - 1),
        ([("integers", 2), ("random_vec", r)], lambda i2: r),
        ([("integers", 3), ("random", 0.3)], lambda i2: 0.3 * np.ones(3)),
    ]
    for event_draws, event in cases:
        script = [("integers", 2), ("permutation", [2, 0, 1]), ("integers", 2)] + event_draws
        rng = ScriptedRng(script)
        got = female_candidate(u, g, pop, 1, rng, HoParams(3, 100, 1.5, -0.005, 0.005))
        expect = np.clip(u + event(2) * (g - 2 * mg), -0.005, 0.005)
        assert np.allclose(got, expect) and rng.exhausted


def test_female_late_branches():
    params = HoParams(3, 10, 1.5, -0.005, 0.005)
    u, g = np.array([0.001, 0.002]), np.array([0.003, -0.001])
    pop = np.array([[0.0, 0.0], [0.002, 0.004], [0.001, 0.001]])
    head = [("integers", 3), ("permutation", [1, 0, 2]), ("integers", 1)]
    # P_I = exp(-9/10) < 0.6; r6 > 0.5 moves relative to the group mean
    rng = ScriptedRng(head + [("random", 0.7), ("integers", 2), ("random_vec", [0.5, 0.25])])
    got = female_candidate(u, g, pop, 9, rng, params)
    assert np.allclose(got, u + np.array([0.5, 0.25]) * (pop.mean(axis=0) - g))
    # r6 <= 0.5 draws a uniform scalar position
    rng = ScriptedRng(head + [("random", 0.2), ("random", 0.75)])
    got = female_candidate(u, g, pop, 9, rng, params)
    assert np.allclose(got, np.full(2, -0.005 + 0.75 * 0.01))


def test_phase1_acceptance_rules():
    params = HoParams(2, 10, 1.5, -1.0, 1.0)
    u = np.array([0.5, 0.5])
    g = np.array([0.0, 0.0])
    pop = np.array([u, g])
    hippo = Hippo(u.copy(), -0.5, 0)
    # male: I1 = 1, r1 = 1 -> gbest; female: event 2 with r = 0 -> stays at u
    script = [("integers", 1), ("random", 1.0), ("integers", 1), ("permutation", [0, 1]),
              ("integers", 1), ("integers", 2), ("random_vec", [0.0, 0.0])]
    out = phase1_update(hippo, g, pop, 1, params, ScriptedRng(script), sphere(np.zeros(2)))
    assert np.array_equal(out.position, g) and out.fitness == 0.0 and out.key == (1, 0, 1, 0)
    # neither candidate improves: keep the incumbent
    keep = Hippo(g.copy(), 0.0, 0)
    script = [("integers", 1), ("random", 0.0), ("integers", 1), ("permutation", [0, 1]),
              ("integers", 1), ("integers", 2), ("random_vec", [0.0, 0.0])]
    out = phase1_update(keep, g, pop, 1, params, ScriptedRng(script), sphere(np.zeros(2)))
    assert out is keep


def test_predator_candidate_both_branches():
    u = np.array([0.001, -0.002])
    pred = np.array([0.003, 0.0])
    levy = np.array([0.2, 0.1])
    rb, rc, rd, rg = 3.0, 1.25, 2.5, 0.5
    # uniform(lo, hi) = lo + (hi - lo) * r
    draws = [("random", (rb - 2) / 2), ("random", (rc - 1) / 0.5), ("random", (rd - 2) / 1),
             ("random", (rg + 1) / 2)]
    den = rc - rd * math.cos(2 * math.pi * rg)
    d = np.abs(pred - u)
    got = predator_candidate(u, pred, True, levy, ScriptedRng(draws), P)
    assert np.allclose(got, np.clip(levy * pred + rb / den / d, -A / 2, A / 2))
    r9 = np.array([0.3, 0.6])
    got = predator_candidate(u, pred, False, levy, ScriptedRng(draws + [("random_vec", r9)]), P)
    expect = np.clip(levy * pred + rb / den / (2 * d + r9), -A / 2, A / 2)
    assert np.allclose(got, expect)


def test_predator_coincident_is_finite():
    u = np.array([0.001, 0.001])
    draws = [("random", 0.5)] * 4
    got = predator_candidate(u, u.copy(), True, np.ones(2), ScriptedRng(draws), P)
    assert np.all(np.isfinite(got)) and np.all(np.abs(got) <= A / 2)


def test_phase2_update_scripted():
    params = HoParams(2, 10, 1.5, -0.01, 0.01)
    hippo = Hippo(np.array([0.002, 0.002]), -1.0, 1)
    pred_r = np.array([0.5, 0.5])              # predator at the origin
    levy = np.array([0.0, 0.0])
    draws = [("random_vec", pred_r), ("random", 0.5), ("random", 0.5), ("random", 0.5),
             ("random", 0.25)]
    fit = sphere(np.zeros(2))
    out = phase2_update(hippo, 3, params, ScriptedRng(draws), fit, levy)
    # predator beats the hippo: step rb / den / d with rb = 3, rc = 1.25, rd = 2.5, rg = -0.5
    den = 1.25 - 2.5 * math.cos(2 * math.pi * -0.5)
    expect = np.clip(3.0 / den / np.full(2, 0.002), -0.01, 0.01)
    if fit(expect) > hippo.fitness:
        assert np.allclose(out.position, expect) and out.key == (3, 1, 2, 1)
    else:
        assert out is hippo
    # a worse candidate leaves the hippo untouched
    good = Hippo(np.zeros(2), 0.0, 1)
    draws = [("random_vec", np.array([1.0, 1.0])), ("random", 0.5), ("random", 0.5),
             ("random", 0.5), ("random", 0.25), ("random_vec", np.array([0.5, 0.5]))]
    out = phase2_update(good, 3, params, ScriptedRng(draws), fit, np.array([1.0, 1.0]))
    assert out is good


def test_local_candidate_events():
    u = np.array([0.001, -0.001, 0.002])
    lo, hi = -A / 2 / 4, A / 2 / 4
    rng = ScriptedRng([("random", 0.0), ("integers", 1), ("random", 0.4)])
    assert np.array_equal(local_candidate(u, 4, rng, P), u)
    r = np.array([0.1, 0.6, 0.9])
    rng = ScriptedRng([("random", 0.5), ("integers", 0), ("random_vec", r)])
    assert np.allclose(local_candidate(u, 4, rng, P), u + 0.5 * (lo + (2 * r - 1) * (hi - lo)))
    rng = ScriptedRng([("random", 0.5), ("integers", 1), ("random", 0.3)])
    assert np.allclose(local_candidate(u, 4, rng, P), u + 0.5 * (lo + 0.3 * (hi - lo)))
    rng = ScriptedRng([("random", 0.5), ("integers", 2), ("normal", -1.2)])
    assert np.allclose(local_candidate(u, 4, rng, P), u + 0.5 * (lo - 1.2 * (hi - lo)))
    far = local_candidate(u, 10**9, RngStream(0), P)
    assert np.abs(far - u).max() < 1e-10


def test_phase3_accepts_only_improvement():
    fit = sphere(np.full(2, 0.003))
    h = Hippo(np.zeros(2), fit(np.zeros(2)), 0)
    rng = ScriptedRng([("random", 1.0), ("integers", 1), ("random", 1.0)])
    out = phase3_local(h, 1, P, rng, fit)
    # candidate u + (lo + (hi - lo)) = hi, clamped, which is further than the incumbent
    assert (out is h) == (fit(np.full(2, A / 2)) <= h.fitness)
    with pytest.raises(ValueError):
        phase3_local(h, 0, P, RngStream(0), fit)


@given(st.integers(0, 1000))
def test_search_elitism_bounds_budget(seed):
    dim = 6
    target = RngStream(seed, (99,)).random(dim) * A - A / 2
    params = HoParams(5, 6, 1.5, -A / 2, A / 2)
    seen = []

    def fit(x, key):
        seen.append(np.asarray(x).copy())
        return sphere(target)(x)

    out = search(fit, dim, params, RngStream(seed))
    hist = out.history
    series = [hist.initial_best] + hist.best_fitness_per_iter
    assert all(b >= a for a, b in zip(series, series[1:]))
    assert np.all(np.abs(np.array(seen)) <= A / 2)
    n = params.n_hippos
    assert all(e <= 2 * n + n + 1 for e in hist.evaluations_per_iter)
    assert hist.evaluation_count == len(seen) == hist.initial_evaluations + sum(hist.evaluations_per_iter)
    assert out.best.fitness == max(h.fitness for h in out.population)
    for h in out.population:
        assert h.fitness == sphere(target)(h.position)


def test_search_parallel_map_is_identical():
    target = np.full(6, 0.002)
    params = HoParams(6, 5, 1.5, -A / 2, A / 2)
    fit = lambda x, key: sphere(target)(x) + 1e-3 * RngStream(7, key).random()  # noqa: E731
    a = search(fit, 6, params, RngStream(3))
    with ThreadPoolExecutor(3) as pool:
        b = search(fit, 6, params, RngStream(3), map_fn=pool.map)
    assert a.history.best_fitness_per_iter == b.history.best_fitness_per_iter
    assert np.array_equal(a.best.position, b.best.position)


def test_history_csv(tmp_path):
    calls = []
    out = search(sphere(np.zeros(3)), 3, HoParams(4, 3, 1.5, -A / 2, A / 2), RngStream(0),
                 callback=lambda i, best: calls.append(i))
    assert calls == [1, 2, 3]
    path = tmp_path / "h.csv"
    out.history.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["iteration", "best_fitness"] and len(rows) == 5
    assert float(rows[-1][1]) == out.history.best_fitness_per_iter[-1]


def test_planted_optimum_low_dimension():
    # a 3-dimensional cube (one antenna) is recovered well inside the window
    errs = []
    for seed in range(10):
        target = RngStream(1000 + seed).random(3) * A - A / 2
        params = HoParams(20, 50, 1.5, -A / 2, A / 2)
        out = search(sphere(target), 3, params, RngStream(seed))
        errs.append(np.abs(out.best.position - target).max())
    assert np.median(errs) <= 1e-2 * A


def test_optimize_smoke():
    cfg = config_from_dict({"n_users": 1, "n_hippos": 2, "i_max": 1}, "desk")
    sc = sample_scenario(cfg, RngStream(0))
    res = optimize(sc, HoParams.from_config(cfg), AoParams.from_config(cfg), RngStream(1))
    apv, w, m, hist = res[:4]
    assert len(hist.best_fitness_per_iter) == 1
    assert res.inner.rate >= hist.initial_best
    assert res.inner.rate == hist.best_fitness_per_iter[-1]
    assert w.power <= sc.p_max * (1 + 1e-8) and m.shape == (1, 1)
