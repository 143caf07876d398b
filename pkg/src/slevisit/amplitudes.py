"""Public boundary-visit amplitude API.

zeta(N) is the amplitude for visiting small neighborhoods of N boundary
points in a prescribed order of sides omega; chi(N) sums over all valid
orders.  Closed forms cover N <= 2, the loop back-end is the default for
N >= 3 and the real-integral back-end is available on request inside its
kappa range.  Also here: the exact interval-hitting probability, residual
verifiers for the linear PDE system and the boundary asymptotics, the
conformal covariance transport rule, and the eigenpair entering the
half-plane excursion generator.

At kappa where the amplitude constants degenerate (a Gamma pole or a
vanishing q-integer), requests within a small window are answered by
averaging the two values at kappa +- delta, tagged on the returned
AmplitudeValue.
"""

import itertools
import math
import warnings

import numpy as np

from .specfun import as_kappa, beta_constants, gamma, hyp2f1
from .qgroup import VisitOrder
from .contour import AmplitudeValue, BoundaryConfig, eval_amplitude_loop
from .realint import eval_amplitude_real

__all__ = [
    "h_exponent",
    "closed_form_zeta1",
    "closed_form_zeta2",
    "zeta",
    "chi",
    "valid_orders",
    "OrderSet",
    "hitting_interval_probability",
    "hitting_amplitude",
    "pde_residual",
    "asymptotic_exponent",
    "AsymptoticFit",
    "conformal_transport",
    "bvp_eigenpair_residual",
]


class FitQualityError(Exception):
    pass


class StepNoiseError(Exception):
    pass


def h_exponent(kappa):
    """Boundary one-arm exponent (8 - kappa)/kappa.

    Unlike the amplitude evaluators this is well defined at kappa = 8
    (where it vanishes), so it takes the raw numeric value.
    """
    k = kappa.value if hasattr(kappa, "value") else float(kappa)
    if k <= 0:
        raise ValueError("kappa must be positive")
    return (8.0 - k) / k


# --- degenerate-kappa averaging ---

# numerator / smallest integer pairs whose rationals kappa = num/n make a
# q-integer vanish or put a Gamma argument of the B-constants at a pole
_DEGENERATE_PAIRS = ((4.0, 1), (8.0, 1), (12.0, 2), (16.0, 2))
_NEAR_TOL = 0.02
_AVG_DELTA = 0.05


def _near_degenerate(kappa, tol=_NEAR_TOL):
    """The degenerate rational within tol of kappa, or None."""
    k = as_kappa(kappa).value
    for num, n_min in _DEGENERATE_PAIRS:
        for n in range(n_min, int(num) + 1):
            if abs(k - num / n) <= tol:
                return num / n
    return None


def _dispatch_averaged(fn, kappa, delta=_AVG_DELTA):
    """Evaluate fn(kappa) -> AmplitudeValue, averaging around degeneracies."""
    k = as_kappa(kappa).value
    k0 = _near_degenerate(k)
    if k0 is None:
        return fn(k)
    warnings.warn(
        f"kappa={k} is within {_NEAR_TOL} of the degenerate value {k0}; "
        f"returning the average of kappa +- {delta}",
        stacklevel=3,
    )
    lo = fn(k - delta)
    hi = fn(k + delta)
    value = 0.5 * (lo.value + hi.value)
    err = max(lo.abs_error, hi.abs_error) + 0.5 * abs(hi.value - lo.value)
    return AmplitudeValue(value, err, lo.method, averaged=True)


# --- closed forms for one and two visits ---


def closed_form_zeta1(x, y, kappa):
    """Single-visit amplitude B2 |y - x|^(1 - 8/kappa)."""
    if y == x:
        raise ValueError("visit point must differ from the starting point")

    def fn(k):
        _, B2, _ = beta_constants(k)
        v = B2 * abs(y - x) ** (1.0 - 8.0 / k)
        return AmplitudeValue(v, 1e-14 * abs(v), "closed_form")

    return _dispatch_averaged(fn, kappa)


def _zeta2_same(x, y1, y2, k):
    # both visits on the right, outwards increasing: x < y1 < y2
    _, B2, _ = beta_constants(k)
    c = (
        gamma((16.0 - k) / k)
        * gamma(4.0 / k)
        / (gamma((12.0 - k) / k) * gamma(8.0 / k))
    ).real
    z = (y2 - y1) / (y2 - x)
    return (
        B2**2
        * c
        * (y1 - x) ** (1.0 - 8.0 / k)
        * (y2 - y1) ** (1.0 - 8.0 / k)
        * complex(hyp2f1(4.0 / k, (k - 8.0) / k, 8.0 / k, z)).real
    )


def _zeta2_opposite(x, yp, ym, k):
    # first visit on the right at yp, second on the left at ym
    _, B2, _ = beta_constants(k)
    c = (
        gamma((16.0 - k) / k)
        * gamma(8.0 / k)
        / (gamma((12.0 - k) / k) * gamma(12.0 / k))
    ).real
    z = -(x - ym) / (yp - x)
    return (
        B2**2
        * c
        * (x - ym) ** (4.0 / k)
        * (yp - x) ** (-4.0 / k)
        * (yp - ym) ** (2.0 - 16.0 / k)
        * complex(hyp2f1(8.0 / k, (k - 4.0) / k, 12.0 / k, z)).real
    )


def closed_form_zeta2(x, y1, y2, kappa, side_case=None):
    """Two-visit amplitude in hypergeometric closed form.

    y1, y2 are in visit order; left-side and left-first cases follow by
    the mirror reflection of the two displayed formulas.
    """
    s1 = "+" if y1 > x else "-"
    s2 = "+" if y2 > x else "-"
    case = "same-side" if s1 == s2 else "opposite-side"
    if side_case is not None and side_case != case:
        raise ValueError(f"configuration is {case}, not {side_case}")

    if case == "same-side":
        if abs(y2 - x) <= abs(y1 - x):
            raise ValueError("same-side visits must be outwards increasing")
        if s1 == "+":
            fn = lambda k: _zeta2_same(x, y1, y2, k)
        else:
            fn = lambda k: _zeta2_same(-x, -y1, -y2, k)
    else:
        if s1 == "+":
            fn = lambda k: _zeta2_opposite(x, y1, y2, k)
        else:
            fn = lambda k: _zeta2_opposite(-x, -y1, -y2, k)

    def wrapped(k):
        v = fn(k)
        return AmplitudeValue(v, 1e-12 * abs(v), "closed_form")

    return _dispatch_averaged(wrapped, kappa)


# --- order enumeration ---


class OrderSet:
    """All visit orders valid for given numbers of left/right points."""

    __slots__ = ("orders",)

    def __init__(self, orders):
        self.orders = tuple(
            o if isinstance(o, VisitOrder) else VisitOrder(o) for o in orders
        )

    def __iter__(self):
        return iter(self.orders)

    def __len__(self):
        return len(self.orders)

    def __repr__(self):
        return f"OrderSet({[str(o) for o in self.orders]})"


def valid_orders(x, points):
    """Orders respecting outwards-increasing visits on each side.

    An order is determined by the interleaving of sides alone: on each
    side the points must be visited from nearest to farthest, so there
    are C(N, L) valid orders.
    """
    pts = [float(p) for p in points]
    if len(set(pts)) != len(pts) or any(p == x for p in pts):
        raise ValueError("points must be distinct and differ from x")
    L = sum(1 for p in pts if p < x)
    N = len(pts)
    orders = []
    for left_slots in itertools.combinations(range(N), L):
        sides = ["-" if i in left_slots else "+" for i in range(N)]
        orders.append(VisitOrder(sides))
    return OrderSet(orders)


def _visit_points(x, points, order):
    """Arrange an unordered point set into the visit order's sequence."""
    lefts = sorted((p for p in points if p < x), reverse=True)
    rights = sorted(p for p in points if p > x)
    it_l, it_r = iter(lefts), iter(rights)
    return tuple(next(it_r) if s == "+" else next(it_l) for s in order.sides)


# --- amplitude dispatch ---


def _config_or_invalid(x, points, order):
    """BoundaryConfig, or None when the visit order is not outwards
    increasing (the amplitude then vanishes identically)."""
    pts = [float(p) for p in points]
    for s, p in zip(order.sides, pts):
        if (p > x) != (s == "+"):
            raise ValueError(f"point {p} is not on side {s!r} of x={x}")
    for side in ("+", "-"):
        dists = [abs(p - x) for p, s in zip(pts, order.sides) if s == side]
        if any(b <= a for a, b in zip(dists, dists[1:])):
            return None
    return BoundaryConfig(x, pts, order)


def zeta(N, omega, config, kappa, method="auto", **kwargs):
    """Zig-zag boundary visit amplitude for one visit order.

    config is a BoundaryConfig or an (x, points) pair with the points in
    visit order.  Orders violating the outwards-increasing constraint get
    an exact zero amplitude.
    """
    order = omega if isinstance(omega, VisitOrder) else VisitOrder(omega)
    if order.N != N:
        raise ValueError("N does not match omega")
    if not isinstance(config, BoundaryConfig):
        x, points = config
        config = _config_or_invalid(x, points, order)
        if config is None:
            return AmplitudeValue(0.0, 0.0, "closed_form")
    if config.order != order:
        raise ValueError("config visit order does not match omega")
    if method == "auto":
        method = "closed" if N <= 2 else "loop"
    if method == "closed":
        if N == 1:
            return closed_form_zeta1(config.x, config.points[0], kappa)
        if N == 2:
            return closed_form_zeta2(config.x, *config.points, kappa)
        raise ValueError("closed forms exist only for N <= 2")
    if method == "loop":
        return _dispatch_averaged(
            lambda k: eval_amplitude_loop(N, order, config, k, **kwargs), kappa
        )
    if method == "real":
        return _dispatch_averaged(
            lambda k: eval_amplitude_real(N, order, config, k, **kwargs), kappa
        )
    raise ValueError(f"unknown method {method!r}")


def chi(N, x, ys, kappa, method="auto", **kwargs):
    """Complete correlation function: sum of zeta over all valid orders."""
    ys = tuple(float(y) for y in ys)
    if len(ys) != N:
        raise ValueError("need N visit points")
    total = 0.0 + 0.0j
    err = 0.0
    averaged = False
    meth = None
    for order in valid_orders(x, ys):
        pts = _visit_points(x, ys, order)
        v = zeta(N, order, (x, pts), kappa, method=method, **kwargs)
        total += v.value
        err += v.abs_error
        averaged = averaged or v.averaged
        meth = v.method
    return AmplitudeValue(total, err, meth, averaged=averaged)


# --- interval hitting (exact one-point law) ---


def hitting_interval_probability(x, l, r, kappa):
    """Probability that the trace touches [l, r], for 4 < kappa < 8."""
    k = as_kappa(kappa).value
    if not 4.0 < k < 8.0:
        raise ValueError("interval hitting requires 4 < kappa < 8")
    if not x < l < r:
        raise ValueError("need x < l < r")
    from scipy import special

    a = 1.0 - 4.0 / k
    b = (8.0 - k) / k
    u0 = (l - x) / (r - x)
    const = 4.0 * math.sqrt(math.pi) / (
        2.0 ** (8.0 / k)
        * gamma((8.0 - k) / (2.0 * k)).real
        * gamma((k - 4.0) / k).real
    )
    full = special.beta(a, b)
    return const * full * (1.0 - special.betainc(a, b, u0))


def hitting_amplitude(x, y, kappa):
    """Small-interval asymptote: P[touch [y, y+eps]] ~ eps^h * this."""
    k = as_kappa(kappa).value
    if not 4.0 < k < 8.0:
        raise ValueError("interval hitting requires 4 < kappa < 8")
    if y <= x:
        raise ValueError("need y > x")
    c = 4.0 * math.sqrt(math.pi) * k / (
        (8.0 - k)
        * 2.0 ** (8.0 / k)
        * gamma((8.0 - k) / (2.0 * k)).real
        * gamma((k - 4.0) / k).real
    )
    return c * (y - x) ** ((k - 8.0) / k)


# --- PDE residual verifiers ---


def _fd(ev, z, i, h, order):
    """Central finite difference of ev along coordinate i."""
    def at(d):
        w = list(z)
        w[i] += d
        return ev(w)

    if order == 1:
        return (at(h) - at(-h)) / (2.0 * h)
    if order == 2:
        return (at(h) - 2.0 * ev(z) + at(-h)) / h**2
    if order == 3:
        return (at(2 * h) - 2.0 * at(h) + 2.0 * at(-h) - at(-2 * h)) / (
            2.0 * h**3
        )
    raise ValueError("unsupported derivative order")


def _fd_mixed(ev, z, i, j, h):
    """Mixed second derivative d^2/dz_i dz_j."""
    def at(di, dj):
        w = list(z)
        w[i] += di
        w[j] += dj
        return ev(w)

    return (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h**2)


def _pde_terms(which, ev, z, kappa, h, j=None):
    """(operator value, normalization scale) at step h."""
    kv = as_kappa(kappa)
    k = kv.value
    hh = kv.h
    x = z[0]
    ys = z[1:]
    N = len(ys)
    if which == "translation":
        terms = [_fd(ev, z, i, h, 1) for i in range(N + 1)]
    elif which == "scaling":
        terms = [z[i] * _fd(ev, z, i, h, 1) for i in range(N + 1)]
        terms.append(N * hh * ev(z))
    elif which == "second_order":
        terms = [_fd(ev, z, 0, h, 2)]
        for m, y in enumerate(ys):
            terms.append(
                -(4.0 / k)
                * (
                    -_fd(ev, z, m + 1, h, 1) / (y - x)
                    + hh * ev(z) / (y - x) ** 2
                )
            )
    elif which == "third_order":
        if j is None or not 1 <= j <= N:
            raise ValueError("third-order operator needs a visit index j")
        yj = ys[j - 1]
        ji = j  # coordinate index of y_j in z
        delta = kv.delta

        def lowering(n, d0, dx, dys):
            # d0/dx/dys: the field and its first derivatives at z
            out = -dx / (x - yj) ** (n - 1) + (n - 1) * delta * d0 / (
                x - yj
            ) ** n
            for m, y in enumerate(ys):
                if m == j - 1:
                    continue
                out += -dys[m] / (y - yj) ** (n - 1) + (n - 1) * hh * d0 / (
                    y - yj
                ) ** n
            return out

        g0 = _fd(ev, z, ji, h, 1)
        gx = _fd_mixed(ev, z, 0, ji, h)
        gys = [
            _fd_mixed(ev, z, m + 1, ji, h) if m != j - 1 else 0.0
            for m in range(N)
        ]
        f0 = ev(z)
        fx = _fd(ev, z, 0, h, 1)
        fys = [_fd(ev, z, m + 1, h, 1) for m in range(N)]
        terms = [
            _fd(ev, z, ji, h, 3),
            -(16.0 / k) * lowering(2, g0, gx, gys),
            (8.0 * (8.0 - k) / k**2) * lowering(3, f0, fx, fys),
        ]
    else:
        raise ValueError(f"unknown operator {which!r}")
    scale = sum(abs(t) for t in terms)
    return sum(terms), scale


def pde_residual(which, evaluator, config, kappa, j=None, step=None,
                 noise=1e-13):
    """Relative residual of one of the system's differential operators.

    which: 'translation', 'scaling', 'second_order', or 'third_order'
    (with visit index j).  evaluator maps (x, ys) to a real value.  The
    finite-difference step balances truncation against evaluator noise;
    a noisier-than-expected evaluator is detected by the residual growing
    under step halving.
    """
    z = [config.x] + list(config.points)
    ev = lambda w: evaluator(w[0], tuple(w[1:]))
    charges = sorted(z)
    gap = min(b - a for a, b in zip(charges[:-1], charges[1:]))
    orders = {"translation": 1, "scaling": 1, "second_order": 2,
              "third_order": 3}
    if which not in orders:
        raise ValueError(f"unknown operator {which!r}")
    order = orders[which]
    if step is None:
        # balance h^2 truncation against noise/h^order roundoff
        step = noise ** (1.0 / (order + 2.0)) * gap
    op, scale = _pde_terms(which, ev, z, kappa, step, j=j)
    if scale == 0.0:
        return 0.0
    res = abs(op) / scale
    op2, scale2 = _pde_terms(which, ev, z, kappa, 0.5 * step, j=j)
    res2 = abs(op2) / scale2 if scale2 else 0.0
    if res2 > 3.0 * res and res2 > 1e-4:
        raise StepNoiseError(
            f"residual grows under step halving ({res:.2e} -> {res2:.2e}); "
            "evaluator noise exceeds the assumed level"
        )
    return min(res, res2)


# --- boundary asymptotics ---


class AsymptoticFit:
    """Log-log fit of an amplitude along a two-point collapse ray."""

    __slots__ = ("slope", "intercept", "r_squared", "seps", "values")

    def __init__(self, slope, intercept, r_squared, seps, values):
        self.slope = slope
        self.intercept = intercept
        self.r_squared = r_squared
        self.seps = seps
        self.values = values

    def coefficient(self, power):
        """Prefactor of the sep^power law, from the smallest separation."""
        return self.values[-1] / self.seps[-1] ** power

    def __repr__(self):
        return (
            f"AsymptoticFit(slope={self.slope:.6g}, "
            f"r_squared={self.r_squared:.6f})"
        )


def asymptotic_exponent(evaluator, config, pair, kappa, seps=None,
                        n_points=7, min_r2=0.999):
    """Fitted power of the amplitude as two charges collapse.

    pair is (j, j+1) for two visit points (1-based visit indices) or
    (0, 1) for the starting point collapsing with the first visit; the
    two charges move symmetrically onto their midpoint while all other
    charges stay fixed.  evaluator maps (x, ys) to a value.
    """
    x = config.x
    ys = list(config.points)
    i1, i2 = pair
    if i1 == 0:
        p1, p2 = x, ys[i2 - 1]
    else:
        p1, p2 = ys[i1 - 1], ys[i2 - 1]
    mid = 0.5 * (p1 + p2)
    d1, d2 = p1 - mid, p2 - mid
    base = abs(p2 - p1)
    if seps is None:
        seps = np.geomspace(1e-1, 1e-3, n_points) * base / abs(d2 - d1)
    vals = []
    for s in seps:
        if i1 == 0:
            xs = mid + s * d1
            yy = list(ys)
            yy[i2 - 1] = mid + s * d2
        else:
            xs = x
            yy = list(ys)
            yy[i1 - 1] = mid + s * d1
            yy[i2 - 1] = mid + s * d2
        vals.append(float(evaluator(xs, tuple(yy))))
    vals = np.asarray(vals)
    gaps = np.asarray([abs(d2 - d1) * s for s in seps])
    lx, lv = np.log(gaps), np.log(np.abs(vals))
    slope, intercept = np.polyfit(lx, lv, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((lv - pred) ** 2))
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if r2 < min_r2:
        raise FitQualityError(f"log-log fit r^2 = {r2:.5f} below {min_r2}")
    return AsymptoticFit(float(slope), float(intercept), r2, gaps, vals)


# --- conformal transport ---


def conformal_transport(domain_map, x, points, kappa, evaluator,
                        deriv_tol=1e-12):
    """Amplitude in a domain from the half-plane amplitude.

    domain_map provides map(u) and deriv(u); the domain amplitude is
    prod_j |f'(y_j)|^h times the half-plane amplitude at the images.
    """
    kv = as_kappa(kappa)
    fx = domain_map.map(x)
    fys = tuple(domain_map.map(p) for p in points)
    factor = 1.0
    for p in points:
        d = abs(domain_map.deriv(p))
        if not d > deriv_tol:
            raise ValueError(f"degenerate boundary derivative at {p}")
        factor *= d**kv.h
    amp = evaluator(_real_if_close(fx), tuple(_real_if_close(v) for v in fys))
    if isinstance(amp, AmplitudeValue):
        return AmplitudeValue(
            factor * amp.value, factor * amp.abs_error, amp.method,
            averaged=amp.averaged,
        )
    return factor * amp


def _real_if_close(z, tol=1e-8):
    z = complex(z)
    if abs(z.imag) < tol * max(1.0, abs(z.real)):
        return z.real
    return z


# --- excursion-generator eigenpair ---


def bvp_eigenpair_residual(kappa, theta):
    """Residual of G q0 = lambda0 q0 for the leading eigenpair.

    G = (kappa/4) theta (1+theta)^2 d^2/dtheta^2
        + (1+theta)(1+2 theta) d/dtheta,
    q0 = (1+theta)^(1-8/kappa), lambda0 = 1 - 8/kappa, by analytic
    differentiation.
    """
    # kappa = 8 (lambda0 = 0, q0 = 1) is fine here even though amplitudes
    # degenerate there, so take the raw numeric value
    k = kappa.value if hasattr(kappa, "value") else float(kappa)
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    lam = 1.0 - 8.0 / k
    t = theta
    q0 = (1.0 + t) ** lam
    dq = lam * (1.0 + t) ** (lam - 1.0)
    d2q = lam * (lam - 1.0) * (1.0 + t) ** (lam - 2.0)
    G = (k / 4.0) * t * (1.0 + t) ** 2 * d2q + (1.0 + t) * (1.0 + 2.0 * t) * dq
    return abs(G - lam * q0)
