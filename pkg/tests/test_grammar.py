import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shapegrammar.grammar import (GrammarError, GrammarParams, expected_counts,
                                  params_from_expectations, validate_params)


def test_default_params_from_expectations():
    t = params_from_expectations(20, 1)
    assert t == pytest.approx((0.15, 0.8, 0.05), abs=1e-15)
    validate_params(GrammarParams(*t))


def test_expected_counts_default():
    s = expected_counts(GrammarParams(0.15, 0.8, 0.05))
    assert s.expected_n == pytest.approx(20)
    assert s.expected_j == pytest.approx(1)
    assert s.m == pytest.approx(0.9)
    assert s.x == pytest.approx(10)
    assert s.y == pytest.approx(0.5)


def test_minimal_grammar():
    assert params_from_expectations(2, 0) == (1.0, 0.0, 0.0)
    s = expected_counts(GrammarParams(1.0, 0.0, 0.0))
    assert (s.expected_n, s.expected_j, s.m) == (2.0, 0.0, 0.0)


@pytest.mark.parametrize("t, word", [
    ((1 / 3, 1 / 3, 1 / 3), "subcriticality"),
    ((0.5, 0.6, 0.05), "simplex"),
    ((-0.1, 1.0, 0.1), "simplex"),
])
def test_invalid_params(t, word):
    with pytest.raises(GrammarError, match=word):
        validate_params(GrammarParams(*t))


def test_degenerate_ideal_rejected():
    bad = ((0, 0), (1, 0), (2, 0))
    p = GrammarParams(0.15, 0.8, 0.05, ideal_triangles=(bad, bad, bad))
    with pytest.raises(GrammarError, match="X_0"):
        validate_params(p)


@pytest.mark.parametrize("en, ej", [(3, 1), (1.5, 0), (10, -1)])
def test_infeasible_expectations(en, ej):
    with pytest.raises(GrammarError):
        params_from_expectations(en, ej)


def test_simplex_tolerance():
    validate_params(GrammarParams(0.15, 0.8 + 5e-13, 0.05))
    with pytest.raises(GrammarError):
        validate_params(GrammarParams(0.15, 0.8 + 1e-10, 0.05))


def test_validated_renormalizes():
    p = GrammarParams(0.15, 0.8 + 5e-13, 0.05).validated()
    assert math.fsum(p.t) == 1.0


@given(st.floats(0, 1), st.floats(2, 500))
def test_round_trip(frac, en):
    ej = frac * (en - 2) / 2
    s = expected_counts(GrammarParams(*params_from_expectations(en, ej)))
    assert s.expected_n == pytest.approx(en, rel=1e-12)
    assert s.expected_j == pytest.approx(ej, rel=1e-12, abs=1e-12)


@given(st.floats(0.01, 0.99), st.floats(0, 1))
def test_subcritical_params_have_m_below_one(t0, r):
    t2 = r * t0 * 0.999
    t1 = 1 - t0 - t2
    if t1 < 0:
        return
    p = GrammarParams(t0, t1, t2)
    validate_params(p)
    assert p.m < 1
    assert expected_counts(p).expected_n >= 2
