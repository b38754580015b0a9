import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cesmc import rng
from cesmc.ce import (CEConfig, apply_smoothing, ce_optimize, ce_update, find_initial,
                      normalize)
from cesmc.errors import InitialSearchFailed, InternalConsistencyError, NoHitsError
from cesmc.language import parse_property
from cesmc.simulate import TraceSummary, log_path_density, simulate_batch
from enumerate_paths import complete_paths, exact_expectations, path_stats


def summary(z, counts, denom, log_l=0.0):
    return TraceSummary(z, int(sum(counts)), np.array(counts), log_l, np.array(denom), False)


def test_update_hand_example():
    b = summary(1, [0, 1], [0.25, 0.75])
    a = summary(0, [1, 0], [0.25, 0.75])
    raw, seen = ce_update([b, b, b, a], [1, 1])
    assert raw[1] == pytest.approx(4 / 3, rel=1e-15)
    assert seen.tolist() == [False, True]
    raw, _ = ce_update([b], [1, 1])
    assert raw[1] == pytest.approx(4 / 3, rel=1e-15)


def test_update_on_simulated_t1(t1):
    prop = parse_property("F (x = 2)", t1)
    batch = simulate_batch(t1, [1, 1], prop, 200, 0, rng.CE)
    raw, seen = ce_update(batch, [1, 1])
    assert raw[1] == pytest.approx(4 / 3, rel=1e-14) and not seen[0]


def test_update_errors():
    with pytest.raises(NoHitsError):
        ce_update([summary(0, [1, 0], [0.25, 0.75])])
    with pytest.raises(InternalConsistencyError):
        ce_update([summary(1, [1, 1], [0.0, 0.5])])
    with pytest.raises(ValueError):
        ce_update([summary(1, [0, 1], [0.25, 0.75])], [1, 1, 1])


def test_update_is_shift_invariant():
    items = [summary(1, [2, 1], [0.5, 1.5], -800.0), summary(1, [1, 3], [1.0, 2.0], -801.0)]
    raw, _ = ce_update(items)
    w = np.array([1.0, math.exp(-1.0)])
    expect = (w @ [[2, 1], [1, 3]]) / (w @ [[0.5, 1.5], [1.0, 2.0]])
    assert np.allclose(raw, expect, rtol=1e-14)


def test_smoothing_examples():
    out = apply_smoothing([0.0, 1.7], [False, True], [0.8, 1.0])
    assert out.tolist() == [0.4, 1.7]
    out = apply_smoothing([0.0, 1.7], [False, True], [0.8, 1.0], "additive", 0.01)
    assert out[0] == pytest.approx(0.008) and out[1] == 1.7
    assert apply_smoothing([0.0, 1.7], [False, True], [0.8, 1.0], "none")[0] == 0.0
    with pytest.raises(ValueError):
        apply_smoothing([1.0], [True], [1.0], "bogus")


def test_normalize_examples():
    assert np.allclose(normalize([0.5, 4 / 3], 2), [6 / 11, 16 / 11], rtol=1e-15)
    v = np.array([0.3, 1.2, 10.5])
    assert np.allclose(normalize(v, 12), v, rtol=1e-12)
    with pytest.raises(ValueError):
        normalize([0.0, 0.0], 2)
    # fixed entries keep their value exactly
    out = normalize([0.4, 3.0], 2, fixed=[True, False])
    assert out[0] == 0.4 and out.sum() == pytest.approx(2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=12), st.floats(0.1, 100))
def test_normalize_invariant(v, c):
    assert math.isclose(normalize(v, c).sum(), c, rel_tol=1e-12)


def test_t1_run_halves_the_losing_command(t1):
    prop = parse_property("F (x = 2)", t1)
    res = ce_optimize(t1, prop, CEConfig(n_per_iteration=100, max_iterations=8,
                                         stop_on_convergence=False))
    assert res.initial.restarts == 0
    lams = np.vstack([res.lambdas(), res.lam])
    assert np.allclose(lams.sum(axis=1), 2.0, rtol=1e-12)
    a = lams[:, 0]
    assert (a[2:] / a[1:-1] == 0.5).all()
    assert (np.diff(a) < 0).all()


def test_normalisation_recorded_every_iteration(models):
    m = models("tiny-repair2")
    prop = parse_property("F failure", m)
    res = ce_optimize(m, prop, CEConfig(n_per_iteration=500, max_iterations=6,
                                        normalisation_constant=4, master_seed=3))
    for it in res.history:
        assert abs(it.lam.sum() - 4) <= 1e-9 and (it.lam >= 0).all()
    assert len(res.batches) == len(res.history)


def test_first_iteration_without_hits(t1):
    prop = parse_property("F (x = 2)", t1)
    with pytest.raises(NoHitsError) as info:
        ce_optimize(t1, prop, CEConfig(n_per_iteration=50), initial=[1.0, 1e-300])
    assert info.value.history == []


def test_find_initial_tries_mu_first(t1):
    s = find_initial(t1, parse_property("F (x = 2)", t1), 100, 0)
    assert s.restarts == 0 and s.lam.tolist() == [1.0, 1.0] and s.hits > 0


def test_find_initial_restarts_for_rare_property(models):
    m = models("tiny-repair2")
    prop = parse_property("F (a = 0 & b = 0)", m)
    s = find_initial(m, prop, 20, 1, candidates=3)
    assert s.restarts > 0 and s.hits >= 1


def test_find_initial_gives_up(models):
    m = models("chemical")
    prop = parse_property("F (C >= 1001)", m)
    with pytest.raises(InitialSearchFailed) as info:
        find_initial(m, prop, 5, 0, max_restarts=2, max_steps=500)
    assert list(info.value.diagnostics) == ["C >= 1001"]
    assert info.value.diagnostics["C >= 1001"] == 0.0


# the objective sum_i l_i z_i log f(w_i, lam) over a fixed, enumerated trace set

def hitting_paths(model, prop):
    return [cmds for cmds, z in complete_paths(model, prop) if z]


def objective(model, paths, weights, lam):
    return math.fsum(w * log_path_density(model, lam, p) for w, p in zip(weights, paths))


def fixed_point(model, paths, weights, lam, iterations=2000):
    lam = np.asarray(lam, float)
    for _ in range(iterations):
        num = sum(w * path_stats(model, lam, p)[1] for w, p in zip(weights, paths))
        den = sum(w * path_stats(model, lam, p)[2] for w, p in zip(weights, paths))
        lam = normalize(num / den, model.n)
    return lam


@pytest.fixture(scope="module")
def bd(models):
    m = models("tiny-birthdeath")
    prop = parse_property("F (x = 1 & t = 3)", m)
    paths = hitting_paths(m, prop)
    weights = [math.exp(log_path_density(m, [1, 1], p) - log_path_density(m, [2, 0.5], p))
               for p in paths]
    return m, prop, paths, weights


def test_exact_fixed_point(bd):
    m, prop, _, _ = bd
    lam = np.ones(m.n)
    for _ in range(500):
        _, num, den = exact_expectations(m, prop, lam)
        lam = normalize(num / den, m.n)
    _, num, den = exact_expectations(m, prop, lam)
    assert np.allclose(lam * den, num, rtol=1e-6, atol=0)


def test_gradient_vanishes_at_fixed_point(bd):
    m, _, paths, weights = bd
    lam = fixed_point(m, paths, weights, [1.0, 1.0])
    h = 1e-6
    grad = np.array([(objective(m, paths, weights, lam + h * e)
                      - objective(m, paths, weights, lam - h * e)) / (2 * h)
                     for e in np.eye(m.n)])
    radial = lam / np.linalg.norm(lam)
    assert np.linalg.norm(grad - (grad @ radial) * radial) < 1e-4


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2),
       st.lists(st.floats(-1, 1), min_size=2, max_size=2))
def test_objective_concave_in_log_parameters(bd, theta, x):
    m, _, paths, weights = bd
    theta, x = np.array(theta), np.array(x)
    h = 1e-3
    f = [objective(m, paths, weights, np.exp(theta + s * h * x)) for s in (-1, 0, 1)]
    assert (f[0] - 2 * f[1] + f[2]) / h**2 <= 1e-6
