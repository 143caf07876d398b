"""Tests for the public amplitude API.

Oracles: Gamma/hypergeometric closed forms, the loop and real integral
back-ends cross-checking each other, analytic differentiation of the
closed forms for the PDE residuals, and exact eigenpair algebra.
"""

import math
import warnings

import numpy as np
import pytest

from slevisit import amplitudes as am
from slevisit import specfun as sf
from slevisit.contour import AmplitudeValue, BoundaryConfig, eval_amplitude_loop
from slevisit.qgroup import QValue, VisitOrder


def test_h_exponent():
    assert am.h_exponent(6.0) == pytest.approx(1.0 / 3.0)
    assert am.h_exponent(2.0) == pytest.approx(3.0)
    assert am.h_exponent(8.0) == 0.0
    with pytest.raises(ValueError):
        am.h_exponent(-1.0)


# --- closed forms ---


def test_zeta1_value_and_covariance():
    _, B2, _ = sf.beta_constants(10.0)
    v = am.closed_form_zeta1(0.0, 1.0, 10.0)
    assert v.value.real == pytest.approx(B2, rel=1e-12)
    assert v.method == "closed_form"
    # homogeneity and translation invariance
    v2 = am.closed_form_zeta1(0.0, 2.0, 10.0)
    assert v2.value.real == pytest.approx(
        2.0 ** (1.0 - 8.0 / 10.0) * v.value.real, rel=1e-12
    )
    v3 = am.closed_form_zeta1(3.0, 4.0, 10.0)
    assert v3.value.real == pytest.approx(v.value.real, rel=1e-12)
    with pytest.raises(ValueError):
        am.closed_form_zeta1(1.0, 1.0, 10.0)


def test_zeta1_degenerate_kappa_averages_with_warning():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        v = am.closed_form_zeta1(0.0, 1.0, 6.0)
    assert len(w) == 1 and "degenerate" in str(w[0].message)
    assert v.averaged
    lo = am.closed_form_zeta1(0.0, 1.0, 5.95).value
    hi = am.closed_form_zeta1(0.0, 1.0, 6.05).value
    assert v.value == pytest.approx(0.5 * (lo + hi))
    # the two-sided spread is carried in the error bar
    assert v.abs_error >= 0.5 * abs(hi - lo)


@pytest.mark.parametrize("kappa", (5.3, 7.0))
def test_zeta2_same_side_matches_loop(kappa):
    cfg = BoundaryConfig(0.0, (1.0, 2.0), "++")
    closed = am.closed_form_zeta2(0.0, 1.0, 2.0, kappa)
    loop = eval_amplitude_loop(2, "++", cfg, kappa)
    assert abs(closed.value - loop.value) < 1e-6 * abs(loop.value)


def test_zeta2_opposite_mirror_symmetry():
    a = am.closed_form_zeta2(0.0, 1.0, -1.0, 6.05)
    b = am.closed_form_zeta2(0.0, -1.0, 1.0, 6.05)
    assert a.value.real == pytest.approx(b.value.real, rel=1e-12)


def test_zeta2_validation():
    with pytest.raises(ValueError):
        am.closed_form_zeta2(0.0, 1.0, 2.0, 7.0, side_case="opposite-side")
    with pytest.raises(ValueError):
        am.closed_form_zeta2(0.0, 2.0, 1.0, 7.0)  # not outwards increasing


# --- dispatch ---


def test_zeta_dispatch_n1():
    v = am.zeta(1, "+", (0.0, (1.3,)), 7.0)
    ref = am.closed_form_zeta1(0.0, 1.3, 7.0)
    assert v.value == pytest.approx(ref.value)
    assert v.method == "closed_form"


def test_zeta_invalid_order_is_zero():
    v = am.zeta(2, "++", (0.0, (2.0, 1.0)), 7.0)
    assert v.value == 0.0
    assert v.abs_error == 0.0


def test_zeta_side_mismatch_raises():
    with pytest.raises(ValueError):
        am.zeta(2, "++", (0.0, (1.0, -2.0)), 7.0)
    with pytest.raises(ValueError):
        am.zeta(2, "++", (0.0, (1.0,)), 7.0)  # N mismatch handled upstream


def test_zeta_methods_agree_n2():
    k = 7.0
    cfg = (0.0, (1.0, 2.1))
    closed = am.zeta(2, "++", cfg, k)
    loop = am.zeta(2, "++", cfg, k, method="loop")
    real = am.zeta(2, "++", cfg, k, method="real")
    assert abs(loop.value - closed.value) < 1e-6 * abs(closed.value)
    assert abs(real.value - closed.value) < 1e-3 * abs(closed.value)


def test_zeta_n3_loop_vs_real():
    k = 6.05
    cfg = (0.0, (1.0, -1.0, 2.0))
    loop = am.zeta(3, "+-+", cfg, k)
    real = am.zeta(3, "+-+", cfg, k, method="real")
    assert loop.method == "loop"
    assert abs(real.value - loop.value) < 1e-2 * abs(loop.value)


def test_zeta_near_degenerate_averaging():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        v = am.zeta(1, "+", (0.0, (1.0,)), 6.01)
    assert v.averaged and len(w) == 1
    v2 = am.zeta(1, "+", (0.0, (1.0,)), 6.05)
    assert not v2.averaged


# --- order enumeration and chi ---


def test_valid_orders_counts():
    assert len(am.valid_orders(0.0, (1.0, 2.0, 3.0))) == 1
    assert len(am.valid_orders(0.0, (1.0, -1.0))) == 2
    assert len(am.valid_orders(0.0, (1.0, 2.0, -1.0, -2.0))) == 6
    with pytest.raises(ValueError):
        am.valid_orders(0.0, (1.0, 1.0))


def test_chi_single_order_equals_zeta():
    k = 7.0
    c = am.chi(2, 0.0, (1.0, 2.1), k)
    z = am.zeta(2, "++", (0.0, (1.0, 2.1)), k)
    assert c.value == pytest.approx(z.value)


def test_chi_two_orders_sum():
    k = 7.0
    c = am.chi(2, 0.0, (0.9, -1.1), k)
    zpm = am.zeta(2, "+-", (0.0, (0.9, -1.1)), k)
    zmp = am.zeta(2, "-+", (0.0, (-1.1, 0.9)), k)
    assert c.value == pytest.approx(zpm.value + zmp.value)


def test_zeta_mirror_symmetry():
    k = 7.0
    a = am.zeta(2, "++", (0.0, (1.0, 2.1)), k)
    b = am.zeta(2, "--", (0.0, (-1.0, -2.1)), k)
    assert a.value.real == pytest.approx(b.value.real, rel=1e-10)


def test_positivity_soft_check():
    # probability-amplitude interpretation: report, do not hard-fail
    failures = []
    for k in (5.3, 6.05, 7.1):
        for om, pts in (("+", (1.0,)), ("++", (1.0, 2.1)),
                        ("-+", (-1.1, 0.9))):
            v = am.zeta(len(om), om, (0.0, pts), k)
            if not v.value.real > 0:
                failures.append((k, om, v.value.real))
    if failures:
        warnings.warn(f"non-positive amplitudes: {failures}")


# --- interval hitting ---


def test_hitting_probability_boundary_values():
    assert am.hitting_interval_probability(0.0, 1e-12, 1.0, 6.0) == pytest.approx(
        1.0, abs=1e-3
    )
    assert am.hitting_interval_probability(0.0, 1.0 - 1e-12, 1.0, 6.0) == pytest.approx(
        0.0, abs=1e-3
    )
    with pytest.raises(ValueError):
        am.hitting_interval_probability(0.0, 1.0, 2.0, 3.5)
    with pytest.raises(ValueError):
        am.hitting_interval_probability(0.0, 2.0, 1.0, 6.0)


def test_hitting_probability_monotone():
    k = 6.5
    ps = [am.hitting_interval_probability(0.0, l, 2.0, k)
          for l in (0.1, 0.5, 1.0, 1.5, 1.9)]
    assert all(0.0 < p < 1.0 for p in ps)
    assert all(a > b for a, b in zip(ps, ps[1:]))


def test_hitting_small_interval_asymptote():
    k = 6.0
    eps = 1e-3
    P = am.hitting_interval_probability(0.0, 1.0, 1.0 + eps, k)
    A = am.hitting_amplitude(0.0, 1.0, k)
    h = am.h_exponent(k)
    assert P == pytest.approx(eps**h * A, rel=1e-2)


# --- PDE residuals ---


@pytest.mark.parametrize("which", ("translation", "scaling", "second_order"))
def test_pde_residuals_zeta1(which):
    k = 6.5
    ev = lambda x, ys: am.closed_form_zeta1(x, ys[0], k).value.real
    cfg = BoundaryConfig(0.0, (1.3,), "+")
    assert am.pde_residual(which, ev, cfg, k) < 1e-6


def test_pde_third_order_zeta1():
    k = 6.5
    ev = lambda x, ys: am.closed_form_zeta1(x, ys[0], k).value.real
    cfg = BoundaryConfig(0.0, (1.3,), "+")
    assert am.pde_residual("third_order", ev, cfg, k, j=1) < 1e-4


@pytest.mark.parametrize("j", (1, 2))
def test_pde_third_order_zeta2(j):
    k = 7.0
    ev = lambda x, ys: am.closed_form_zeta2(x, ys[0], ys[1], k).value.real
    cfg = BoundaryConfig(0.0, (1.0, 2.1), "++")
    assert am.pde_residual("third_order", ev, cfg, k, j=j) < 1e-4


def test_pde_second_order_zeta2_opposite():
    k = 6.5
    ev = lambda x, ys: am.closed_form_zeta2(x, ys[0], ys[1], k).value.real
    cfg = BoundaryConfig(0.0, (0.9, -1.1), "+-")
    assert am.pde_residual("second_order", ev, cfg, k) < 1e-6


def test_pde_noise_detection():
    k = 6.5

    def noisy(x, ys):
        # mild deterministic wiggle, far above the declared noise level
        clean = am.closed_form_zeta1(x, ys[0], k).value.real
        wiggle = math.sin(1e9 * x + 7e8 * ys[0])
        return clean * (1.0 + 1e-9 * wiggle)

    cfg = BoundaryConfig(0.0, (1.3,), "+")
    with pytest.raises(am.StepNoiseError):
        am.pde_residual("second_order", noisy, cfg, k, noise=1e-13)


def test_pde_unknown_operator():
    k = 6.5
    ev = lambda x, ys: am.closed_form_zeta1(x, ys[0], k).value.real
    cfg = BoundaryConfig(0.0, (1.3,), "+")
    with pytest.raises(ValueError):
        am.pde_residual("fourth_order", ev, cfg, k)
    with pytest.raises(ValueError):
        am.pde_residual("third_order", ev, cfg, k)  # missing j


# --- boundary asymptotics ---


def test_successive_collapse_slope_and_constant():
    k = 6.5
    a1 = 1.0 - 8.0 / k
    ev = lambda x, ys: am.closed_form_zeta2(x, ys[0], ys[1], k).value.real
    cfg = BoundaryConfig(0.0, (1.0, 2.0), "++")
    fit = am.asymptotic_exponent(ev, cfg, (1, 2), k)
    assert abs(fit.slope - a1) < 0.01 * abs(a1)
    assert fit.r_squared > 0.999
    # the collapse constant in this normalization: both candidate
    # conventions are checked. It equals B2 times the same-side
    # hypergeometric prefactor, which is the triplet constant B3 times
    # the q-combination weight (q^-2 + 1 + q^2)/(q^-2 + q^2), not B3
    # alone.
    z1 = am.closed_form_zeta1(0.0, 1.5, k).value.real
    const = fit.coefficient(a1) / z1
    _, B2, B3 = sf.beta_constants(k)
    c = (
        sf.gamma((16.0 - k) / k) * sf.gamma(4.0 / k)
        / (sf.gamma((12.0 - k) / k) * sf.gamma(8.0 / k))
    ).real
    assert const == pytest.approx(B2 * c, rel=1e-2)
    q = QValue(k).q
    weight = ((q**-2 + 1 + q**2) / (q**-2 + q**2)).real
    assert const == pytest.approx(B3 * weight, rel=1e-2)
    assert abs(const - B3) > 0.5 * abs(B3)  # B3 alone does not match


def test_first_point_collapse_slope_and_b2_ratio():
    k = 6.5
    a1 = 1.0 - 8.0 / k
    ev = lambda x, ys: am.closed_form_zeta2(x, ys[0], ys[1], k).value.real
    cfg = BoundaryConfig(0.0, (1.0, 2.0), "++")
    fit = am.asymptotic_exponent(
        ev, cfg, (0, 1), k, seps=np.geomspace(1e-2, 1e-4, 7)
    )
    assert abs(fit.slope - a1) < 0.01 * abs(a1)
    # collapse constant is B2 times the reduced amplitude
    _, B2, _ = sf.beta_constants(k)
    z1 = am.closed_form_zeta1(0.5, 2.0, k).value.real
    assert fit.coefficient(a1) == pytest.approx(B2 * z1, rel=2e-2)


def test_nonsuccessive_collapse_slope():
    # two same-side visits separated by an opposite-side one: the
    # amplitude vanishes at the quintuplet-channel rate 8/kappa
    k = 6.5
    order = VisitOrder("+-+")

    def ev(x, ys):
        cfg = BoundaryConfig(x, ys, order)
        return eval_amplitude_loop(3, order, cfg, k, tol=2e-6,
                                   max_level=8).value.real

    cfg = BoundaryConfig(0.0, (1.0, -1.0, 1.8), "+-+")
    fit = am.asymptotic_exponent(ev, cfg, (1, 3), k,
                                 seps=np.geomspace(3e-1, 3e-2, 5))
    assert abs(fit.slope - 8.0 / k) < 0.02 * (8.0 / k)


def test_fit_quality_error():
    k = 6.5
    ev = lambda x, ys: am.closed_form_zeta2(x, ys[0], ys[1], k).value.real
    cfg = BoundaryConfig(0.0, (1.0, 2.0), "++")
    with pytest.raises(am.FitQualityError):
        am.asymptotic_exponent(ev, cfg, (0, 1), k, min_r2=1.0 - 1e-12)


# --- conformal transport ---


class _Identity:
    def map(self, u):
        return u

    def deriv(self, u):
        return 1.0


class _Dilation:
    def __init__(self, lam):
        self.lam = lam

    def map(self, u):
        return self.lam * u

    def deriv(self, u):
        return self.lam


def test_conformal_transport_identity_and_dilation():
    k = 7.0
    ev = lambda x, ys: am.closed_form_zeta2(x, ys[0], ys[1], k)
    base = ev(0.0, (1.0, 2.1)).value.real
    same = am.conformal_transport(_Identity(), 0.0, (1.0, 2.1), k, ev)
    assert same.value.real == pytest.approx(base, rel=1e-12)
    moved = am.conformal_transport(_Dilation(1.7), 0.0, (1.0, 2.1), k, ev)
    assert moved.value.real == pytest.approx(base, rel=1e-10)


def test_conformal_transport_degenerate_derivative():
    k = 7.0
    ev = lambda x, ys: am.closed_form_zeta1(x, ys[0], k)

    class Flat:
        def map(self, u):
            return u

        def deriv(self, u):
            return 0.0

    with pytest.raises(ValueError):
        am.conformal_transport(Flat(), 0.0, (1.0,), k, ev)


# --- excursion-generator eigenpair ---


@pytest.mark.parametrize("kappa", (6.0, 5.3, 7.1))
@pytest.mark.parametrize("theta", (0.5, 0.01, 3.7))
def test_bvp_eigenpair_residual(kappa, theta):
    assert am.bvp_eigenpair_residual(kappa, theta) < 1e-10


def test_bvp_eigenpair_kappa8_and_origin():
    assert am.bvp_eigenpair_residual(8.0, 0.3) == pytest.approx(0.0, abs=1e-14)
    assert am.bvp_eigenpair_residual(6.0, 0.0) == pytest.approx(0.0, abs=1e-14)
