import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anion_forge.evaluation import bonferroni, permutation_test, stars


def enumerate_sign_flips(a, b):
    d = [x - y for x, y in zip(a, b)]
    n = len(d)
    observed = sum(d) / n
    hits = 0
    for signs in itertools.product((1, -1), repeat=n):
        stat = sum(s * x for s, x in zip(signs, d)) / n
        if stat >= observed - 1e-12:
            hits += 1
    return hits / 2**n


def ks_uniform(p):
    p = np.sort(np.asarray(p))
    n = p.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - p), np.max(p - (i - 1) / n)))


def test_identical_samples_give_one():
    a = [0.3, 0.5, 0.9, 0.1]
    assert permutation_test(a, a, permutations=1000, seed=0) == 1.0
    assert permutation_test(a * 20, a * 20, permutations=1000, seed=0) == 1.0


def test_exhaustive_n5_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.normal(size=5), rng.normal(size=5)
        expected = enumerate_sign_flips(a, b)
        assert permutation_test(a, b, permutations=2**5, seed=1) == expected
        assert permutation_test(a, b, permutations=10_000, seed=2) == expected


def test_null_calibration():
    rng = np.random.default_rng(123)
    ps = []
    for trial in range(1000):
        a, b = rng.normal(size=20), rng.normal(size=20)
        ps.append(permutation_test(a, b, permutations=1000, seed=trial))
    assert ks_uniform(ps) < 0.05


def test_strong_effect_is_significant():
    rng = np.random.default_rng(5)
    b = rng.normal(size=40)
    assert permutation_test(b + 1.0, b, permutations=10_000, seed=0) < 0.01


def test_deterministic_by_seed():
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=30), rng.normal(size=30)
    assert permutation_test(a, b, 5000, 3) == permutation_test(a, b, 5000, 3)


def test_input_validation():
    with pytest.raises(ValueError):
        permutation_test([], [], 10)
    with pytest.raises(ValueError):
        permutation_test([1.0], [1.0, 2.0], 10)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=25), st.data())
def test_p_value_range_and_monotonicity(a, data):
    b = data.draw(st.lists(st.floats(-5, 5), min_size=len(a), max_size=len(a)))
    i = data.draw(st.integers(0, len(a) - 1))
    bump = data.draw(st.floats(0, 10))
    p = permutation_test(a, b, 2000, 7)
    assert 0.0 < p <= 1.0
    raised = list(a)
    raised[i] += bump
    assert permutation_test(raised, b, 2000, 7) <= p + 1e-12


def test_bonferroni_examples():
    assert bonferroni([0.01, 0.04], 0.05) == [True, False]
    assert bonferroni([0.04], 0.05) == [True]
    assert bonferroni([0.06], 0.05) == [False]
    assert bonferroni([0.002] * 20, 0.05) == [True] * 20
    with pytest.raises(ValueError):
        bonferroni([0.1], 1.0)


def test_stars():
    assert [stars(p) for p in (0.001, 0.01, 0.03, 0.05, None)] == ["**", "*", "*", "", ""]
