import math

import numpy as np
import pytest

from cesmc.errors import StateSpaceTooLarge, UnsupportedProperty
from cesmc.language import parse_model, parse_property
from cesmc.oracle import (ExplicitChain, build_state_space, exact_ce_iteration,
                          exact_ce_reference, exact_probability)
from cesmc.simulate import log_path_density
from enumerate_paths import complete_paths, exact_expectations

REPAIR_P = 2.4776180709076575e-07


@pytest.fixture(scope="module")
def repair_chain(models):
    return build_state_space(models("repair"))


def test_t1(t1):
    chain = build_state_space(t1)
    assert chain.size == 3
    for method in ("iteration", "linear", "product"):
        p = exact_probability(chain, parse_property("F (x = 2)", t1), method=method)
        assert p == pytest.approx(0.75, abs=1e-12)


def test_small_repair_variant(models):
    m = models("tiny-repair1")
    chain = build_state_space(m)
    assert chain.size == 3
    prop = parse_property("X ((! init) U failure)", m)
    for method in ("iteration", "linear", "product"):
        assert exact_probability(chain, prop, method=method) == pytest.approx(1 / 11, abs=1e-10)


def test_repair_model(repair_chain, models):
    assert repair_chain.size == 40320
    prop = parse_property("X ((! init) U failure)", models("repair"))
    p_it, r_it = exact_probability(repair_chain, prop, return_residual=True)
    p_lin = exact_probability(repair_chain, prop, method="linear")
    assert abs(p_it - p_lin) <= 1e-9
    assert p_it == pytest.approx(REPAIR_P, rel=1e-9)
    assert r_it < 1e-12
    assert not repair_chain.absorbing.any()


def test_row_stochastic(repair_chain, models):
    for chain in (repair_chain, build_state_space(models("tiny-birthdeath"))):
        P = chain.matrix()
        assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-12)
        lam = np.linspace(0.5, 2.0, chain.model.n)
        Pl = chain.matrix(lam)
        assert np.allclose(np.asarray(Pl.sum(axis=1)).ravel(), 1.0, atol=1e-12)


def test_cap(models, t1):
    with pytest.raises(StateSpaceTooLarge):
        build_state_space(models("chemical"), 10**6)
    with pytest.raises(StateSpaceTooLarge):
        build_state_space(t1, 2)
    with pytest.raises(ValueError):
        build_state_space(t1, 0)


@pytest.mark.parametrize("name, text", [
    ("tiny-t1", "F (x = 2)"), ("tiny-t1", "X (x = 1)"), ("tiny-t1", "!(F (x = 1))"),
    ("tiny-birthdeath", "F (x = 2)"), ("tiny-birthdeath", "(x <= 1) U (t = 3 & x = 1)"),
    ("tiny-birthdeath", "X X (x = 0)"), ("tiny-birthdeath", "X ((x > 0) U (t = 3))"),
])
def test_matches_enumeration(models, name, text):
    m = models(name)
    prop = parse_property(text, m)
    ones = np.ones(m.n)
    brute = math.fsum(z * math.exp(log_path_density(m, ones, c))
                      for c, z in complete_paths(m, prop))
    chain = build_state_space(m)
    assert exact_probability(chain, prop) == pytest.approx(brute, abs=1e-9)
    assert exact_probability(chain, prop, method="product") == pytest.approx(brute, abs=1e-9)


def permuted(chain: ExplicitChain, seed: int) -> ExplicitChain:
    gen = np.random.default_rng(seed)
    perm = np.concatenate([[0], 1 + gen.permutation(chain.size - 1)])  # new row -> old row
    inv = np.empty_like(perm)
    inv[perm] = np.arange(chain.size)
    succ = chain.succ[perm]
    succ = np.where(succ >= 0, inv[np.maximum(succ, 0)], -1)
    return ExplicitChain(chain.model, chain.states[perm], chain.rates[perm], succ)


def test_reordering_invariance(models):
    m = models("tiny-repair2")
    chain = build_state_space(m)
    prop = parse_property("X ((! init) U (a = 0 & b = 0))", m)
    base = exact_probability(chain, prop)
    for seed in range(3):
        assert exact_probability(permuted(chain, seed), prop) == pytest.approx(base, abs=1e-10)


def test_unsupported_fragment(t1):
    chain = build_state_space(t1)
    with pytest.raises(UnsupportedProperty):
        exact_probability(chain, parse_property("F (X (x = 2))", t1))
    # the product construction has no such restriction
    assert exact_probability(chain, parse_property("F (X (x = 2))", t1),
                             method="product") == pytest.approx(0.75)


def test_ce_reference_t1(t1):
    ref = exact_ce_reference(build_state_space(t1), parse_property("F (x = 2)", t1), [1, 1])
    assert ref.gamma == pytest.approx(0.75)
    assert ref.numerators == pytest.approx([0.0, 0.75])
    assert ref.denominators[1] == pytest.approx(9 / 16)
    assert ref.update[1] == pytest.approx(4 / 3) and ref.seen.tolist() == [False, True]


def test_ce_reference_symmetry():
    m = parse_model("var x : [0..2] init 0;\n[a] x = 0 -> 2 : x'=1;\n[b] x = 0 -> 2 : x'=2;")
    ref = exact_ce_reference(build_state_space(m), parse_property("F (x > 0)", m), [1, 1])
    assert ref.numerators[0] == ref.numerators[1] == pytest.approx(0.5)
    assert ref.denominators[0] == ref.denominators[1]


@pytest.mark.parametrize("text", ["F (x = 3)", "(x <= 1) U (t = 3 & x = 1)", "X F (x = 0)"])
def test_ce_reference_matches_enumeration(models, text):
    m = models("tiny-birthdeath")
    prop = parse_property(text, m)
    chain = build_state_space(m)
    for lam in ([1.0, 1.0], [2.5, 0.3], [0.2, 4.0]):
        g, num, den = exact_expectations(m, prop, lam)
        ref = exact_ce_reference(chain, prop, lam)
        assert ref.gamma == pytest.approx(g, abs=1e-12)
        assert np.allclose(ref.numerators, num, atol=1e-12)
        assert np.allclose(ref.denominators, den, atol=1e-12)


def test_exact_iteration_reaches_fixed_point(models):
    m = models("tiny-birthdeath")
    prop = parse_property("F (t = 3 & x = 1)", m)
    chain = build_state_space(m)
    lams = exact_ce_iteration(chain, prop, [1.0, 1.0], 500, tol=1e-13)
    lam = lams[-1]
    ref = exact_ce_reference(chain, prop, lam)
    assert np.allclose(lam * ref.denominators, ref.numerators, rtol=1e-6)
    assert all(abs(v.sum() - 2) < 1e-12 for v in lams)


def test_export(tmp_path, t1):
    path = tmp_path / "t1.txt"
    build_state_space(t1).export(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# states 3"
    assert lines[1:] == ["0 1 0.25", "0 2 0.75", "1 1 1", "2 2 1"]
