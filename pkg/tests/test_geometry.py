import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from aurlab.errors import ConfigError, DimensionError, FormulaInvalidError
from aurlab.geometry import (
    PenaltyMode,
    SetKind,
    UncertaintySet,
    closed_form_moments,
    contains,
    contains_many,
    log_volume,
    per_entry_second_moment,
    ridge_lambda,
    volume,
)

KINDS = [k.value for k in SetKind]


def make(kind, rho=1.0, n=2, k=1, ratio=0.8):
    gamma = ratio * rho if kind == "budget" else None
    return UncertaintySet(kind, rho, n, k, gamma)


# ---------------------------------------------------------------------------
# oracles: direct numerical integration of the indicator in d = 2, 3


def _indicator(uset):
    def inside(*x):
        return 1.0 if contains_many(uset, np.array([x]))[0] else 0.0
    return inside


def _quad_2d(uset, f):
    r = uset.rho
    if uset.kind is SetKind.BOX:
        lim = lambda x: (-r, r)
    elif uset.kind is SetKind.ELLIPSOIDAL:
        lim = lambda x: (-math.sqrt(max(r * r - x * x, 0.0)), math.sqrt(max(r * r - x * x, 0.0)))
    else:
        cap = uset.gamma if uset.kind is SetKind.BUDGET else r
        lim = lambda x: (-min(r - abs(x), cap), min(r - abs(x), cap))
    xr = uset.gamma if uset.kind is SetKind.BUDGET else r
    val, _ = integrate.quad(lambda x: integrate.quad(lambda y: f(x, y), *lim(x), epsabs=1e-13)[0],
                            -xr, xr, epsabs=1e-13, limit=200)
    return val


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("rho", [0.5, 1.0, 1.7])
def test_volume_and_m2_match_planar_quadrature(kind, rho):
    uset = make(kind, rho, n=2, k=1, ratio=0.6)
    vol = _quad_2d(uset, lambda x, y: 1.0)
    m2 = _quad_2d(uset, lambda x, y: x * x) / vol
    assert volume(uset) == pytest.approx(vol, rel=1e-9)
    assert per_entry_second_moment(uset) == pytest.approx(m2, rel=1e-8)


def test_budget_three_dimensional_quadrature():
    uset = UncertaintySet("budget", 1.0, 3, 1, 0.7)
    g = uset.gamma

    def zlim(x, y):
        top = min(1.0 - abs(x) - abs(y), g)
        return (-top, top) if top > 0 else (0.0, 0.0)

    def ylim(x):
        top = min(1.0 - abs(x), g)
        return (-top, top)

    opts = dict(epsabs=1e-11)
    vol = integrate.tplquad(lambda z, y, x: 1.0, -g, g, lambda x: ylim(x)[0], lambda x: ylim(x)[1],
                            lambda x, y: zlim(x, y)[0], lambda x, y: zlim(x, y)[1], **opts)[0]
    mom = integrate.tplquad(lambda z, y, x: x * x, -g, g, lambda x: ylim(x)[0], lambda x: ylim(x)[1],
                            lambda x, y: zlim(x, y)[0], lambda x, y: zlim(x, y)[1], **opts)[0]
    assert volume(uset) == pytest.approx(vol, rel=1e-8)
    assert per_entry_second_moment(uset) == pytest.approx(mom / vol, rel=1e-7)


# ---------------------------------------------------------------------------
# frozen values (hand-derived, see the triangle-corner computation)


def test_frozen_planar_values():
    assert volume(UncertaintySet("diamond", 1.0, 2, 1)) == 2.0
    budget = UncertaintySet("budget", 1.0, 2, 1, 0.6)
    assert volume(budget) == pytest.approx(1.36, rel=1e-14)
    # (1/3 - 0.174933.. - 0.008533..) / 1.36
    assert per_entry_second_moment(budget) == pytest.approx(0.1101960784313725, rel=1e-12)
    assert volume(UncertaintySet("ellipsoidal", 1.0, 2, 1)) == pytest.approx(math.pi, rel=1e-15)
    assert volume(UncertaintySet("box", 0.5, 3, 2)) == 1.0


def test_published_constants_frozen():
    ell = UncertaintySet("ellipsoidal", 0.5, 3, 2)
    assert ridge_lambda(ell, "paper") == pytest.approx(0.125)
    assert ridge_lambda(ell, "derived") == pytest.approx(3 * 0.25 / 8)
    box = UncertaintySet("box", 0.5, 3, 2)
    assert ridge_lambda(box, "paper") == ridge_lambda(box, "derived") == pytest.approx(0.25)
    dia = UncertaintySet("diamond", 0.5, 3, 2)
    assert ridge_lambda(dia, "paper") == pytest.approx(2 * 3 * 0.25 / 56)
    assert ridge_lambda(dia, "paper") == pytest.approx(ridge_lambda(dia, "derived"), rel=1e-15)


def test_budget_paper_mode_reads_published_denominator():
    # transcribed term by term, unsimplified
    n, k, rho, gamma = 3, 2, 0.5, 0.4
    d = n * k
    head = 2 * n * rho ** 2 / ((d + 1) * (d + 2))
    tail = (n * (rho - gamma) ** d * ((d * d + 3 * d - 2) * gamma ** 2 + (4 - 2 * d) * rho * gamma)
            / ((d + 1) * (d + 2) * (rho ** d - (rho - gamma) ** d)))
    expected = head - tail
    uset = UncertaintySet("budget", rho, n, k, gamma)
    assert ridge_lambda(uset, "paper") == pytest.approx(expected, rel=1e-12)


def test_budget_reduces_to_diamond_at_full_cap():
    for d in (2, 6, 40):
        dia = UncertaintySet("diamond", 0.7, d, 1)
        bud = UncertaintySet("budget", 0.7, d, 1, 0.7 * (1 - 1e-8))
        for mode in PenaltyMode:
            assert ridge_lambda(bud, mode) == pytest.approx(ridge_lambda(dia, mode), rel=1e-6)
        assert volume(bud) == pytest.approx(volume(dia), rel=1e-6)
        assert volume(UncertaintySet("budget", 0.7, d, 1, 0.7)) == volume(dia)


def test_invalid_budget_window_raises():
    uset = UncertaintySet("budget", 1.0, 2, 2, 0.3)
    assert not uset.closed_form_valid
    with pytest.raises(FormulaInvalidError):
        volume(uset)
    with pytest.raises(FormulaInvalidError):
        ridge_lambda(uset)
    assert contains(uset, np.zeros((2, 2)))


# ---------------------------------------------------------------------------
# high dimension


@pytest.mark.parametrize("kind", KINDS)
def test_log_volume_finite_in_high_dimension(kind):
    uset = make(kind, 0.3, n=900, k=10)
    assert math.isfinite(log_volume(uset))
    assert volume(uset) >= 0.0
    assert math.isfinite(ridge_lambda(uset))


def test_log_volume_matches_gamma_function_formula():
    for d in (1, 2, 5, 30):
        uset = UncertaintySet("ellipsoidal", 1.3, d, 1)
        ref = math.log(math.pi ** (d / 2) / special.gamma(d / 2 + 1) * 1.3 ** d)
        assert log_volume(uset) == pytest.approx(ref, rel=1e-12)


# ---------------------------------------------------------------------------
# properties


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(KINDS), rho=st.floats(0.01, 10.0), scale=st.floats(0.1, 10.0),
       n=st.integers(1, 6), k=st.integers(1, 4))
def test_scaling_laws(kind, rho, scale, n, k):
    a = make(kind, rho, n, k)
    b = a.with_rho(rho * scale)
    assert per_entry_second_moment(b) == pytest.approx(scale ** 2 * per_entry_second_moment(a), rel=1e-9)
    assert log_volume(b) == pytest.approx(log_volume(a) + a.d * math.log(scale), rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(KINDS), n=st.integers(1, 5), k=st.integers(1, 5),
       seed=st.integers(0, 2**32 - 1))
def test_membership_is_star_shaped(kind, n, k, seed):
    uset = make(kind, 1.0, n, k)
    x = np.random.default_rng(seed).standard_normal((n, k))
    if contains(uset, x):
        assert contains(uset, 0.5 * x)
    else:
        assert not contains(uset, 2.0 * x)
    assert contains(uset, np.zeros((n, k)))


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(KINDS), n=st.integers(1, 5), k=st.integers(1, 5))
def test_modes_are_ordered_sensibly(kind, n, k):
    uset = make(kind, 1.0, n, k)
    m2 = per_entry_second_moment(uset)
    assert 0 < m2 <= uset.rho ** 2 / 3 + 1e-15  # no set beats the box
    assert ridge_lambda(uset) == pytest.approx(uset.n * m2, rel=1e-15)


def test_contains_boundary_tolerance():
    uset = UncertaintySet("diamond", 1.0, 1, 2)
    assert contains(uset, [[0.5, 0.5 * (1 + 1e-13)]])
    assert not contains(uset, [[0.5, 0.5 * (1 + 1e-9)]])


def test_contains_shape_errors():
    uset = UncertaintySet("box", 1.0, 2, 2)
    with pytest.raises(DimensionError):
        contains(uset, np.zeros(4))
    with pytest.raises(DimensionError):
        contains_many(uset, np.zeros((3, 5)))
    assert contains_many(uset, np.zeros((3, 2, 2))).all()


# ---------------------------------------------------------------------------
# descriptors


@pytest.mark.parametrize("kind", KINDS)
def test_descriptor_json_round_trip(kind):
    uset = make(kind, 0.37, 3, 2)
    assert UncertaintySet.from_json(uset.to_json()) == uset
    assert json.loads(uset.to_json())["kind"] == kind


@pytest.mark.parametrize("bad", [
    {"kind": "sphere", "rho": 1, "n": 1, "k": 1},
    {"kind": "box", "rho": -1, "n": 1, "k": 1},
    {"kind": "box", "rho": 1, "n": 0, "k": 1},
    {"kind": "box", "rho": 1, "n": 1.5, "k": 1},
    {"kind": "box", "rho": 1, "n": 1, "k": 1, "gamma": 0.5},
    {"kind": "budget", "rho": 1, "n": 1, "k": 1},
    {"kind": "budget", "rho": 1, "n": 1, "k": 1, "gamma": 1.5},
    {"kind": "box", "rho": 1, "n": 1},
    {"kind": "box", "rho": 1, "n": 1, "k": 1, "extra": 0},
    [1, 2],
])
def test_descriptor_validation(bad):
    with pytest.raises(ConfigError):
        UncertaintySet.from_dict(bad)


def test_from_json_rejects_garbage():
    with pytest.raises(ConfigError):
        UncertaintySet.from_json("{kind: box")


def test_closed_form_moments_report():
    rep = closed_form_moments(UncertaintySet("box", 1.0, 2, 1))
    assert (rep.per_entry_mean, rep.cross_moment) == (0.0, 0.0)
    assert rep.per_entry_second_moment == pytest.approx(1 / 3)
    assert rep.volume == 4.0
