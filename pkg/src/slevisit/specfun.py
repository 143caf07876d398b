"""Special functions used throughout the package.

Gamma (Lanczos), Gauss hypergeometric 2F1 (series plus Pfaff / 1-z
connection transformations), complete elliptic integral K (AGM), Jacobi
elliptic sn (descending Landen), and the three beta-type asymptotics
constants B1, B2, B3 attached to the SLE parameter kappa.
"""

import cmath
import math

__all__ = [
    "Kappa",
    "is_degenerate",
    "gamma",
    "hyp2f1",
    "beta_constants",
    "elliptic_K",
    "jacobi_sn",
    "jacobi_sn_cn_dn",
]


class SpecfunError(Exception):
    pass


class PoleError(SpecfunError):
    """Argument too close to a pole."""


class DegenerateKappaError(SpecfunError):
    """kappa sits on (or too close to) a degenerate rational."""


# Gamma-pole / q-integer-zero conditions: 4/kappa or 8/kappa a positive
# integer, 12/kappa or 16/kappa an integer >= 2.
_DEGENERATE_NUMERATORS = ((4.0, 1), (8.0, 1), (12.0, 2), (16.0, 2))


def is_degenerate(kappa, tol=1e-6):
    """True if kappa is within tol of a rational where a q-integer vanishes
    or a Gamma argument of B1/B2/B3 hits a pole."""
    k = float(kappa.value) if isinstance(kappa, Kappa) else float(kappa)
    for num, n_min in _DEGENERATE_NUMERATORS:
        t = num / k
        n = round(t)
        if n >= n_min and abs(t - n) < tol:
            return True
    return False


class Kappa:
    """The SLE parameter kappa with derived exponents.

    h = (8-kappa)/kappa is the one-arm boundary exponent and
    delta = (6-kappa)/(2 kappa) the auxiliary exponent of the third-order
    differential operators.
    """

    __slots__ = ("value",)

    def __init__(self, value):
        value = float(value)
        if value < 1e-9:
            raise ValueError("kappa must be positive")
        if abs(value - 8.0) < 1e-9:
            raise ValueError("kappa = 8 is excluded (h = 0 degenerates)")
        self.value = value

    @property
    def h(self):
        return (8.0 - self.value) / self.value

    @property
    def delta(self):
        return (6.0 - self.value) / (2.0 * self.value)

    @property
    def q(self):
        return cmath.exp(4j * math.pi / self.value)

    def is_degenerate(self, tol=1e-6):
        return is_degenerate(self.value, tol)

    def __repr__(self):
        return f"Kappa({self.value})"

    def __eq__(self, other):
        return isinstance(other, Kappa) and other.value == self.value

    def __hash__(self):
        return hash(("Kappa", self.value))


def as_kappa(kappa):
    return kappa if isinstance(kappa, Kappa) else Kappa(kappa)


# Lanczos approximation, g = 7, 9 coefficients (double-precision classic).
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(z):
    """Gamma function for complex z, relative accuracy ~1e-13 away from poles."""
    z = complex(z)
    if abs(z.imag) < 1e-12:
        n = round(z.real)
        if n <= 0 and abs(z.real - n) < 1e-12:
            raise PoleError(f"gamma pole at z = {z}")
    if z.real < 0.5:
        # reflection formula
        return math.pi / (cmath.sin(math.pi * z) * gamma(1.0 - z))
    z = z - 1.0
    x = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        x += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    val = math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * cmath.exp(-t) * x
    if val.imag == 0.0 or (abs(val.imag) < 1e-13 * abs(val.real)):
        # keep real inputs real-valued up to representation
        pass
    return val


def _hyp2f1_series(a, b, c, z, tol=1e-16, max_terms=2000):
    term = 1.0 + 0j
    total = 1.0 + 0j
    for n in range(max_terms):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
        if abs(term) < tol * max(1.0, abs(total)):
            return total
    raise SpecfunError("2F1 series did not converge")


def hyp2f1(a, b, c, z, _depth=0):
    """Gauss hypergeometric function, principal branch (cut on [1, inf)).

    Series inside |z| <= 0.7; otherwise the 1-z connection formula or the
    Pfaff transformation, applied recursively with a small budget.
    """
    a, b, c, z = complex(a), complex(b), complex(c), complex(z)
    if abs(c - round(c.real)) < 1e-12 and round(c.real) <= 0 and abs(c.imag) < 1e-12:
        raise PoleError("2F1 undefined for nonpositive integer c")
    if z == 0:
        return 1.0 + 0j
    if z.imag == 0 and z.real >= 1.0:
        raise SpecfunError("z on the branch cut [1, inf)")
    if _depth > 4:
        raise SpecfunError("2F1 transformation budget exhausted")
    if abs(z) <= 0.7:
        return _hyp2f1_series(a, b, c, z)
    s = c - a - b
    if abs(1.0 - z) <= 0.7:
        if abs(s - round(s.real)) < 1e-10 and abs(s.imag) < 1e-10:
            # logarithmic case; fall back to the (slower) direct series when
            # it still converges
            if abs(z) < 0.95:
                return _hyp2f1_series(a, b, c, z, max_terms=20000)
            raise SpecfunError("1-z connection degenerate: c-a-b near an integer")
        g = gamma
        t1 = (g(c) * g(s) / (g(c - a) * g(c - b))) * _hyp2f1_series(a, b, 1.0 - s, 1.0 - z)
        t2 = (g(c) * g(-s) / (g(a) * g(b))) * (1.0 - z) ** s * _hyp2f1_series(
            c - a, c - b, 1.0 + s, 1.0 - z
        )
        return t1 + t2
    w = z / (z - 1.0)
    if abs(w) < abs(z) - 1e-12:
        # Pfaff: 2F1(a,b;c;z) = (1-z)^(-a) 2F1(a, c-b; c; z/(z-1))
        return (1.0 - z) ** (-a) * hyp2f1(a, c - b, c, w, _depth + 1)
    raise SpecfunError(f"no convergent transformation found for z = {z}")


def beta_constants(kappa):
    """The constants (B1, B2, B3), by analytic continuation via Gamma.

    B2 and B3 are the (generalized) beta-function values controlling the
    first-visit and successive-collapse asymptotics; B1 the two-screening
    analogue. Valid for kappa < 8 as well, away from Gamma poles.
    """
    kappa = as_kappa(kappa)
    if kappa.is_degenerate(1e-9):
        raise DegenerateKappaError(f"Gamma pole in beta constants at kappa = {kappa.value}")
    k = kappa.value
    g = lambda x: gamma(complex(x)).real
    B1 = (
        g((k - 8) / k) ** 2 * g((k - 4) / k) ** 2 * g((k + 8) / k)
        / (2.0 * g(2 - 8 / k) * g(2 * (k - 6) / k) * g((k + 4) / k))
    )
    B2 = g((k - 4) / k) * g((k - 8) / k) / g(2 * (k - 6) / k)
    B3 = g((k - 8) / k) ** 2 / g(2 * (k - 8) / k)
    return B1, B2, B3


def elliptic_K(m):
    """Complete elliptic integral of the first kind, parameter m (= k^2)."""
    m = float(m)
    if not 0.0 <= m < 1.0:
        raise ValueError("elliptic_K requires 0 <= m < 1")
    a, b = 1.0, math.sqrt(1.0 - m)
    for _ in range(64):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return math.pi / (2.0 * a)


def _landen_moduli(m):
    """Descending Landen ladder of moduli k_n, stopping when m_n < 1e-14."""
    ks = []
    k = math.sqrt(m)
    while k * k > 1e-14:
        ks.append(k)
        kp = math.sqrt(1.0 - k * k)
        k = (1.0 - kp) / (1.0 + kp)
    ks.append(k)
    return ks


def jacobi_sn_cn_dn(u, m):
    """Jacobi sn, cn, dn for complex u via descending Landen transformation."""
    if not 0.0 < m < 1.0:
        raise ValueError("jacobi sn requires 0 < m < 1")
    u = complex(u)
    ks = _landen_moduli(m)
    # argument at the deepest level
    v = u
    for i in range(1, len(ks)):
        v = v / (1.0 + ks[i])
    # base: m_n negligible, sn = sin with first-order correction
    mb = ks[-1] ** 2
    s = cmath.sin(v) - 0.25 * mb * (v - cmath.sin(v) * cmath.cos(v)) * cmath.cos(v)
    c = cmath.cos(v) + 0.25 * mb * (v - cmath.sin(v) * cmath.cos(v)) * cmath.sin(v)
    d = 1.0 - 0.5 * mb * cmath.sin(v) ** 2
    # ascend the ladder; the dn step uses dn_low^2 = 1 - k1^2 sn_low^2, so
    # (dn^2 - (1-k1)) / (k1 (1+k1 sn^2)) == (1 - k1 sn^2)/(1 + k1 sn^2),
    # which is cancellation-free even for tiny k1
    for i in range(len(ks) - 1, 0, -1):
        k1 = ks[i]
        den = 1.0 + k1 * s * s
        if abs(den) < 1e-12:
            raise PoleError("sn pole encountered in Landen ascent")
        s_new = (1.0 + k1) * s / den
        c_new = c * d / den
        d_new = (2.0 - den) / den  # = (1 - k1 sn^2)/(1 + k1 sn^2)
        s, c, d = s_new, c_new, d_new
    return s, c, d


def jacobi_sn(u, m):
    return jacobi_sn_cn_dn(u, m)[0]
