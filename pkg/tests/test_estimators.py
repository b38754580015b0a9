import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cesmc.ce import CEConfig, ce_optimize
from cesmc.estimators import (EstimateResult, bernoulli_result, chernoff_sample_size,
                              is_estimate, mc_estimate, variance_reduction_report,
                              weighted_result)
from cesmc.language import parse_property
from cesmc.oracle import build_state_space, exact_probability
from cesmc.simulate import TraceBatch, log_path_density
from enumerate_paths import complete_paths


def test_chernoff_examples():
    assert chernoff_sample_size(0.01, 0.05) == 18445
    assert chernoff_sample_size(0.1, 0.1) == 150
    assert chernoff_sample_size(0.99, 0.99) == 1
    for bad in [(0, 0.1), (1, 0.1), (0.1, 0), (0.1, 1.5)]:
        with pytest.raises(ValueError):
            chernoff_sample_size(*bad)


def test_mc_on_t1(t1):
    est = mc_estimate(t1, parse_property("F (x = 2)", t1), 100_000, 0)
    assert abs(est.gamma_hat - 0.75) <= 0.005
    n = est.n
    assert est.sample_variance == est.gamma_hat * (1 - est.gamma_hat) * n / (n - 1)
    assert est.undecided == 0


def test_mc_trivial_cases(t1):
    sure = mc_estimate(t1, parse_property("F (x >= 0)", t1), 100, 1)
    assert (sure.gamma_hat, sure.sample_variance) == (1.0, 0.0)
    never = mc_estimate(t1, parse_property("F (x = 3)", t1), 100, 1)
    assert (never.gamma_hat, never.sample_variance) == (0.0, 0.0)
    assert never.relative_error_proxy == math.inf


@settings(max_examples=50)
@given(st.lists(st.integers(0, 1), min_size=2, max_size=500))
def test_bernoulli_identity(z):
    r = bernoulli_result(np.array(z))
    n = len(z)
    assert r.sample_variance == r.gamma_hat * (1 - r.gamma_hat) * n / (n - 1)
    assert r.sample_variance == pytest.approx(np.var(z, ddof=1), abs=1e-12)


def test_is_on_t1(t1):
    prop = parse_property("F (x = 2)", t1)
    est = is_estimate(t1, [3, 1], prop, 100_000, 0)
    assert abs(est.gamma_hat - 0.75) <= 0.01
    plain = is_estimate(t1, [1, 1], prop, 100_000, 0)
    bern = plain.gamma_hat * (1 - plain.gamma_hat)
    assert plain.sample_variance == pytest.approx(bern, rel=0.05)
    assert variance_reduction_report(0.75, plain) == pytest.approx(1.0, rel=0.05)


def test_is_rejects_zero_parameters(t1):
    with pytest.raises(ValueError):
        is_estimate(t1, [0, 1], parse_property("F (x = 2)", t1), 10, 0)


@pytest.mark.parametrize("name, text", [("tiny-t1", "F (x = 2)"),
                                        ("tiny-birthdeath", "F (x = 2)"),
                                        ("tiny-birthdeath", "(x <= 1) U (t = 3)")])
def test_unbiased_by_enumeration(models, name, text):
    m = models(name)
    prop = parse_property(text, m)
    gamma = exact_probability(build_state_space(m), prop)
    gen = np.random.default_rng(7)
    paths = list(complete_paths(m, prop))
    for _ in range(20):
        lam = 10.0 ** gen.uniform(-1, 1, size=m.n)
        ones = np.ones(m.n)
        total = 0.0
        for cmds, z in paths:
            lf = log_path_density(m, lam, cmds)
            total += z * math.exp(lf) * math.exp(log_path_density(m, ones, cmds) - lf)
        assert total == pytest.approx(gamma, abs=1e-9)


def test_variance_reduction_example():
    est = EstimateResult(1 / 11, 8.3e-7, 10_000, 100, 0, 0.0)
    assert variance_reduction_report(1 / 11, est) == pytest.approx(1.0e5, rel=0.01)
    # an estimate as reference falls back to its own gamma_hat
    mc = EstimateResult(0.1, 0.09, 100, 10, 0, 0.0)
    assert variance_reduction_report(mc, est) == pytest.approx(0.09 / 8.3e-7)
    zero = EstimateResult(0.0, 0.0, 100, 0, 0, math.inf)
    assert variance_reduction_report(zero, est) == pytest.approx(
        (1 / 11) * (10 / 11) / 8.3e-7)
    with pytest.raises(ValueError):
        variance_reduction_report(0.5, zero)


def test_degenerate_variance_warns():
    est = EstimateResult(0.5, 0.0, 10, 5, 0, 0.0)
    with pytest.warns(RuntimeWarning, match="degenerate"):
        assert variance_reduction_report(0.5, est) == math.inf
    full = EstimateResult(1.0, 0.0, 10, 10, 0, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert variance_reduction_report(1.0, full) == math.inf


def fake_batch(log_l, z):
    n = len(z)
    return TraceBatch(np.array(z, dtype=np.int8), np.ones(n, dtype=np.int64),
                      np.ones((n, 1), dtype=np.int64), np.array(log_l, dtype=float),
                      np.ones((n, 1)), np.zeros(n, dtype=bool), np.zeros(n, dtype=bool))


def test_weighted_result_warnings():
    with pytest.warns(RuntimeWarning, match="exceeds 1"):
        r = weighted_result(fake_batch([math.log(4.0), 0.0], [1, 0]))
    assert r.gamma_hat == pytest.approx(2.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        r = weighted_result(fake_batch([701.0, 0.0], [1, 0]))
    messages = " ".join(str(w.message) for w in caught)
    assert "overflow" in messages and "exceeds 1" in messages
    assert r.gamma_hat == pytest.approx(math.exp(701.0) / 2, rel=1e-10)
    assert r.hits == 1


def test_weighted_result_matches_numpy():
    log_l = np.log([0.5, 0.25, 2.0, 1.0])
    r = weighted_result(fake_batch(log_l, [1, 0, 1, 1]))
    terms = np.array([0.5, 0.0, 2.0, 1.0])
    assert r.gamma_hat == pytest.approx(terms.mean())
    assert r.sample_variance == pytest.approx(terms.var(ddof=1))
    assert r.relative_error_proxy == pytest.approx(
        math.sqrt(terms.var(ddof=1) / 4) / terms.mean())


@pytest.mark.slow
def test_mc_and_is_confidence_intervals_overlap(models):
    m = models("tiny-repair2")
    prop = parse_property("F (a = 0 & b = 0)", m)
    res = ce_optimize(m, prop, CEConfig(n_per_iteration=2000, max_iterations=10,
                                        normalisation_constant=4, master_seed=1,
                                        initial_candidates=3))
    est = is_estimate(m, res.lam, prop, 10_000, 1)
    mc = mc_estimate(m, prop, 1_000_000, 1)
    z = 2.5758
    hw_is = z * math.sqrt(est.sample_variance / est.n)
    hw_mc = z * math.sqrt(mc.sample_variance / mc.n)
    assert abs(est.gamma_hat - mc.gamma_hat) <= hw_is + hw_mc
    gamma = exact_probability(build_state_space(m), prop)
    assert abs(est.gamma_hat - gamma) <= hw_is
