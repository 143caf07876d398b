"""Tests for the real-interval integral scheme.

Oracles: printed single-loop unwinding identities, a Selberg-type product
formula for a two-variable single-interval integral, the Gamma-form
single-visit constant, and the loop back-end for full amplitudes.
"""

import math

import numpy as np
import pytest

from slevisit import realint as ri
from slevisit import specfun as sf
from slevisit.contour import BoundaryConfig, eval_amplitude_loop
from slevisit.qgroup import QValue, q_int


# --- reordering factor ---


def test_reorder_factor_small_k():
    q = QValue(7.1).q
    assert ri.reorder_factor(0, q) == pytest.approx(1.0)
    assert ri.reorder_factor(1, q) == pytest.approx(1.0)
    assert abs(ri.reorder_factor(2, q) - (1.0 + q**-2)) < 1e-12
    with pytest.raises(ValueError):
        ri.reorder_factor(-1, q)


def test_reorder_factor_recursion():
    # f(k)/f(k-1) = [k] q^{-(k-1)}
    q = QValue(6.3).q
    for k in range(1, 6):
        ratio = ri.reorder_factor(k, q) / ri.reorder_factor(k - 1, q)
        assert abs(ratio - q_int(k, q) * q ** (-(k - 1))) < 1e-10


# --- unwinding of single loops ---


def test_unwind_single_loop_around_x():
    # one loop around x for a single right visit
    qv = QValue(7.1)
    q = qv.q
    cfg = BoundaryConfig(0.0, (1.0,), "+")
    combo = ri.unwind_loops((1, 0), cfg, qv)
    assert set(combo) == {(1, 0)}
    assert abs(combo[(1, 0)] - (q - 1 / q)) < 1e-9


def test_unwind_single_loop_around_y():
    qv = QValue(7.1)
    q = qv.q
    cfg = BoundaryConfig(0.0, (1.0,), "+")
    combo = ri.unwind_loops((0, 1), cfg, qv)
    assert set(combo) == {(0, 1), (1, 0)}
    assert abs(combo[(0, 1)] - (q**2 - q**-2)) < 1e-9
    assert abs(combo[(1, 0)] - (q**3 - q**-1)) < 1e-9


def test_unwind_single_loop_left_visit():
    qv = QValue(7.1)
    q = qv.q
    cfg = BoundaryConfig(0.0, (-1.0,), "-")
    combo = ri.unwind_loops((1, 0), cfg, qv)
    assert set(combo) == {(1, 0)}
    assert abs(combo[(1, 0)] - (q**2 - q**-2)) < 1e-9


def test_unwind_coefficients_kappa_independent():
    # the q-monomials do not depend on the geometry, only on the counts
    cfg1 = BoundaryConfig(0.0, (1.0,), "+")
    cfg2 = BoundaryConfig(0.3, (2.9,), "+")
    for kappa in (5.3, 10.7):
        qv = QValue(kappa)
        a = ri.unwind_loops((0, 1), cfg1, qv)
        b = ri.unwind_loops((0, 1), cfg2, qv)
        assert set(a) == set(b)
        for s in a:
            assert abs(a[s] - b[s]) < 1e-9


# --- solver combinations ---


@pytest.mark.parametrize("kappa", (5.3, 7.1, 10.7))
def test_combination_single_visit(kappa):
    combo = ri.real_combination(1, "+", kappa)
    assert set(combo) == {(0, 1)}
    assert combo[(0, 1)] == pytest.approx(1.0, abs=1e-9)
    # mirror: single left visit is also a unit coefficient
    combo = ri.real_combination(1, "-", kappa)
    assert set(combo) == {(0, 1)}
    assert combo[(0, 1)] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("kappa", (5.3, 7.1, 10.7))
def test_combination_two_same_side(kappa):
    q = QValue(kappa).q
    combo = ri.real_combination(2, "++", kappa)
    assert set(combo) == {(0, 0, 2), (0, 1, 1)}
    ref = ((q**-2 + 1 + q**2) / (q**-2 + q**2)).real
    assert combo[(0, 0, 2)] == pytest.approx(ref, rel=1e-9)
    assert combo[(0, 1, 1)] == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("kappa", (5.3, 7.1, 10.7))
def test_combination_two_opposite(kappa):
    q = QValue(kappa).q
    combo = ri.real_combination(2, "-+", kappa)
    assert (0, 2, 0) in combo
    ref = ((q**-2 + 1 + q**2) ** 2 / (q**-3 + q**-1 + q + q**3)).real
    assert combo[(0, 2, 0)] == pytest.approx(ref, rel=1e-9)
    # closedness: no base-point integrations survive
    assert all(s[0] == 0 for s in combo)


@pytest.mark.parametrize("kappa", (5.3, 7.1))
@pytest.mark.parametrize("omega", ("+++", "+-+", "-++", "--+"))
def test_combination_three_closedness(kappa, omega):
    combo = ri.real_combination(3, omega, kappa)
    assert combo, "empty combination"
    assert all(s[0] == 0 for s in combo)
    assert all(isinstance(c, float) for c in combo.values())


# --- counterterm generation ---


def test_counterterm_orders_and_errors():
    cfg = BoundaryConfig(0.0, (1.0, 2.1), "++")
    with pytest.raises(ValueError):
        ri.generate_counterterms((0, 0, 2), cfg, 7.0, order=2)
    with pytest.raises(ValueError):
        # shell expansion diverges below kappa = 4
        ri.generate_counterterms((0, 0, 2), cfg, 3.9)
    with pytest.raises(ValueError):
        # three shells at kappa = 4.5: power 3(1-8/k)+2 < 0 even at order 1
        cfg3 = BoundaryConfig(0.0, (1.0, 2.0, 3.0), "+++")
        ri.generate_counterterms((0, 0, 1, 2), cfg3, 4.5, order=1)


def test_counterterm_leading_two_shell_power():
    # both variables of a doubly-occupied far interval in their shells:
    # power 2(1-8/k), coefficient 1/(1-8/k)^2
    k = 6.5
    a1 = 1.0 - 8.0 / k
    cfg = BoundaryConfig(0.0, (1.0, 2.1), "++")
    terms = ri.generate_counterterms((0, 0, 2), cfg, k)
    match = [
        t for t in terms
        if abs(t[0] - 2 * a1) < 1e-12 and t[2] == (0, 0, 0) and t[4] is None
    ]
    assert len(match) == 1
    assert match[0][1] == pytest.approx(1.0 / a1**2, rel=1e-12)
    # corner terms present at both endpoints with weight-2 frozen entries
    corners = [
        t for t in terms if abs(t[0] - (1 + a1)) < 1e-12 and t[4] is None
    ]
    assert {t[3] for t in corners} == {((1.0, 2),), ((2.1, 2),)}


def test_counterterms_vanish_with_eps_for_large_kappa():
    # kappa > 8: all counterterm powers are positive
    cfg = BoundaryConfig(0.0, (1.0, 2.1), "++")
    for power, const, red, frozen, ld in ri.generate_counterterms(
        (0, 1, 1), cfg, 10.7
    ):
        assert power > 0


# --- regularized evaluation ---


def test_rho_plain_matches_beta_constant():
    # kappa > 8, single-visit spec: the plain integral is B2 again
    k = 10.7
    cfg = BoundaryConfig(0.0, (1.0,), "+")
    _, B2, _ = sf.beta_constants(k)
    v = ri.eval_rho_regularized((0, 1), cfg, k, 0.0)
    assert v == pytest.approx(B2, rel=1e-8)


def test_rho_rejects_bad_inputs():
    cfg = BoundaryConfig(0.0, (1.0,), "+")
    with pytest.raises(ValueError):
        ri.eval_rho_regularized((1, 0), cfg, 10.7, 0.0)  # base-point spec
    with pytest.raises(ValueError):
        ri.eval_rho_regularized((0, 1), cfg, 10.7, 0.6)  # eps too large


def test_rho_regularized_equals_plain_for_large_kappa():
    k = 10.7
    cfg = BoundaryConfig(0.0, (1.0, 2.1), "++")
    for spec in ((0, 0, 2), (0, 1, 1)):
        plain = ri.eval_rho_regularized(spec, cfg, k, 0.0, level=3)
        reg = ri.eval_rho_regularized(spec, cfg, k, 1e-3, level=3)
        assert abs(reg - plain) < 1e-6 * abs(plain)


def test_rho_mirror_symmetry():
    k = 10.7
    a = ri.eval_rho_regularized((0, 1), BoundaryConfig(0.0, (1.3,), "+"), k, 0.0)
    b = ri.eval_rho_regularized((0, 1), BoundaryConfig(0.0, (-1.3,), "-"), k, 0.0)
    assert a == pytest.approx(b, rel=1e-9)


def _selberg2(alpha, beta, g):
    s = 1.0
    for j in (0, 1):
        s *= (
            sf.gamma(alpha + j * g)
            * sf.gamma(beta + j * g)
            * sf.gamma(1 + (j + 1) * g)
            / (sf.gamma(alpha + beta + (1 + j) * g) * sf.gamma(1 + g))
        ).real
    return s


@pytest.mark.parametrize("kappa", (5.0, 7.0, 10.7))
def test_selberg_oracle_two_variable_interval(kappa):
    # two ordered variables between x=0 and y=1: the continued integral
    # has an exact Gamma-product value (ordered half of the n=2 case)
    k = kappa
    cfg = BoundaryConfig(0.0, (1.0,), "+")
    oracle = _selberg2(1.0 - 4.0 / k, 1.0 - 8.0 / k, 4.0 / k) / 2.0
    pref = ri._prefactor(cfg, sf.as_kappa(k))
    if k > 8:
        val = ri.eval_rho_regularized((0, 2), cfg, k, 0.0, level=3) / pref
        assert val == pytest.approx(oracle, rel=1e-7)
        return
    eps = np.geomspace(1e-1, 2e-3, 8)
    vals = np.array(
        [ri.eval_rho_regularized((0, 2), cfg, k, float(e), level=3) for e in eps]
    ) / pref
    a1 = 1.0 - 8.0 / k
    powers = [p for p in (a1 + 2, 2 * a1 + 2, a1 + 3, 2 * a1 + 3) if p > 0]
    c0, err = ri._fit_eps_limit(eps, vals, powers)
    assert c0 == pytest.approx(oracle, rel=1e-4)


@pytest.mark.parametrize("kappa", (5.0, 6.5, 7.0))
def test_extrapolation_single_visit(kappa):
    # eps -> 0 limit of the regularized single-visit integral is the
    # analytic continuation value B2
    cfg = BoundaryConfig(0.0, (1.3,), "+")
    v = ri.eval_amplitude_real(1, "+", cfg, kappa)
    _, B2, _ = sf.beta_constants(kappa)
    ref = B2 * 1.3 ** (1.0 - 8.0 / kappa)
    assert abs(v.value - ref) < 1e-4 * abs(ref)
    assert v.method == "real_regularized"


@pytest.mark.parametrize("kappa", (5.0, 7.0))
@pytest.mark.parametrize("omega,pts", (("++", (1.0, 2.1)), ("-+", (-1.1, 0.9))))
def test_scheme_agreement_two_visits(kappa, omega, pts):
    cfg = BoundaryConfig(0.0, pts, omega)
    a = ri.eval_amplitude_real(2, omega, cfg, kappa)
    b = eval_amplitude_loop(2, omega, cfg, kappa)
    assert abs(a.value - b.value) < 1e-3 * abs(b.value)


def test_scheme_agreement_three_visits():
    kappa = 7.0
    cfg = BoundaryConfig(0.0, (0.8, 1.7, 2.9), "+++")
    a = ri.eval_amplitude_real(3, "+++", cfg, kappa)
    b = eval_amplitude_loop(3, "+++", cfg, kappa)
    assert abs(a.value - b.value) < 1e-2 * abs(b.value)


def test_grid_shift_stability():
    # halving the eps-grid changes the extrapolated value by < 1e-3
    kappa = 5.0
    cfg = BoundaryConfig(0.0, (1.0, 2.1), "++")
    a = ri.eval_amplitude_real(2, "++", cfg, kappa)
    grid = np.geomspace(5e-2, 1e-3, 8)
    b = ri.eval_amplitude_real(2, "++", cfg, kappa, eps_grid=grid)
    assert abs(a.value - b.value) < 1e-3 * abs(a.value)


def test_large_kappa_amplitude_path():
    k = 10.7
    cfg = BoundaryConfig(0.0, (1.0, 2.1), "++")
    a = ri.eval_amplitude_real(2, "++", cfg, k)
    b = eval_amplitude_loop(2, "++", cfg, k)
    assert abs(a.value - b.value) < 1e-6 * abs(b.value)


def test_fit_exponent_values():
    assert ri.fit_exponent(1, 6.0) == pytest.approx(3.0 - 8.0 / 6.0)
    assert ri.fit_exponent(2, 5.0) == pytest.approx(2 * (1 - 8.0 / 5.0) + 2)
    assert ri.fit_exponent(3, 6.0) == pytest.approx(3 * (1 - 8.0 / 6.0) + 2)
    # positive exactly in the documented validity ranges
    assert ri.fit_exponent(2, 4.01) > 0
    assert ri.fit_exponent(3, 16.0 / 3.0 + 0.01) > 0
    # N=3 scheme breaks down below kappa = 24/5
    assert ri.fit_exponent(3, 4.7) < 0
    with pytest.raises(ValueError):
        ri.eval_amplitude_real(
            3, "+++", BoundaryConfig(0.0, (1.0, 2.0, 3.0), "+++"), 4.7
        )
