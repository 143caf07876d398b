"""Conformal maps from the unit square and equilateral triangle to the half-plane.

Both maps send the polygon boundary to the real line and come with boundary
derivatives, which is what the lattice renormalization needs. The square map
is a Jacobi elliptic sine composed with a Mobius transform; the triangle map
is the inverse of a Schwarz-Christoffel integral, inverted by damped Newton.
"""

import cmath
import math

import numpy as np

from .specfun import PoleError, elliptic_K, gamma, jacobi_sn_cn_dn


class MapDomainError(ValueError):
    """Point outside the map's domain, or too close to a singular corner."""


class NewtonError(RuntimeError):
    """Newton inversion failed to converge within its iteration budget."""


def _square_modulus(tol=1e-15):
    """Elliptic parameter m with K(1-m)/K(m) = 2, by bisection."""
    lo, hi = 1e-15, 1.0 - 1e-15

    def f(m):
        return elliptic_K(1.0 - m) / elliptic_K(m) - 2.0

    # f is decreasing in m; f(lo) > 0 > f(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class SquareMap:
    """Map of the closed unit square [0,1]^2 onto the closed half-plane.

    Corners: 0 -> 0, 1 -> +1, i -> -1, and 1+i to the point at infinity.
    """

    kind = "Square"

    def __init__(self):
        self.m = _square_modulus()
        self.K = elliptic_K(self.m)
        self._a = 1.0 / math.sqrt(self.m)  # pole location in the sn variable
        sK, _, _ = jacobi_sn_cn_dn(self.K, self.m)
        # overall Mobius constant fixing f(1) = +1
        self._c = (sK - self._a) / (sK + 1.0)

    def _sn_arg(self, u):
        u = complex(u)
        if not (-1e-12 <= u.real <= 1.0 + 1e-12 and -1e-12 <= u.imag <= 1.0 + 1e-12):
            raise MapDomainError(f"point {u} outside the closed unit square")
        return (2.0 * u - 1.0) * self.K

    def _sn_cn_dn(self, v):
        # sn has a pole at v = iK' (the top-mid preimage) where the Mobius
        # limit is still finite; step back by the quasi-period there
        try:
            return jacobi_sn_cn_dn(v, self.m)
        except PoleError:
            s0, c0, d0 = jacobi_sn_cn_dn(v - 2j * self.K, self.m)
            rk = math.sqrt(self.m)
            if abs(s0) < 1e-12:
                # exactly on the sn pole; signal with s = None, keep the
                # regular factors for the Mobius limits below
                return None, c0, d0
            return 1.0 / (rk * s0), -1j * d0 / (rk * s0), -1j * c0 / s0

    def map(self, u):
        s, _, _ = self._sn_cn_dn(self._sn_arg(u))
        if s is None:  # sn pole: (s+1)/(s-a) -> 1
            return complex(self._c)
        den = s - self._a
        if abs(den) < 1e-9:
            raise PoleError("square map evaluated too close to the top-right corner")
        return self._c * (s + 1.0) / den

    def deriv(self, u):
        s, c, d = self._sn_cn_dn(self._sn_arg(u))
        rk = math.sqrt(self.m)
        if s is None:  # limit of cn dn / (sn - a)^2 at the sn pole
            return self._c * (1.0 + self._a) * 2.0 * self.K * rk * c * d
        den = s - self._a
        if abs(den) < 1e-9:
            raise PoleError("square map derivative too close to the top-right corner")
        # d/ds of (s+1)/(s-a) = -(1+a)/(s-a)^2; d(sn)/du = 2K cn dn
        return self._c * (-(1.0 + self._a)) / (den * den) * 2.0 * self.K * c * d

    def inverse(self, z, tol=1e-12):
        """Inverse map by damped Newton, seeded from a boundary-aware guess."""
        return _newton_invert(self.map, self.deriv, self._inverse_guess(z), z,
                              inside=_inside_square, tol=tol)

    def _inverse_guess(self, z):
        z = complex(z)
        best, best_d = 0.5 + 0.5j, float("inf")
        for ur in np.linspace(0.02, 0.98, 17):
            for ui in np.linspace(0.02, 0.98, 17):
                try:
                    w = self.map(complex(ur, ui))
                except PoleError:
                    continue
                d = abs(w - z)
                if d < best_d:
                    best, best_d = complex(ur, ui), d
        return best


_TRI_APEX = 0.5j * math.sqrt(3.0)


def _inside_square(u):
    return -1e-9 <= u.real <= 1.0 + 1e-9 and -1e-9 <= u.imag <= 1.0 + 1e-9


def _inside_triangle(u):
    # closed triangle with vertices -1/2, 1/2, i sqrt(3)/2
    if u.imag < -1e-9:
        return False
    return abs(u.real) <= 0.5 - u.imag / math.sqrt(3.0) + 1e-9


def _newton_invert(fwd, dfwd, u0, z, inside, tol=1e-12, budget=50):
    u = u0
    r = fwd(u) - z
    for _ in range(budget):
        if abs(r) < tol:
            return u
        step = -r / dfwd(u)
        lam = 1.0
        while lam > 1e-6:
            u_try = u + lam * step
            if inside(u_try):
                try:
                    r_try = fwd(u_try) - z
                except (PoleError, MapDomainError):
                    r_try = None
                if r_try is not None and abs(r_try) < abs(r):
                    u, r = u_try, r_try
                    break
            lam *= 0.5
        else:
            raise NewtonError(f"inversion stalled at residual {abs(r):.3e}")
    if abs(r) < tol:
        return u
    raise NewtonError(f"inversion did not converge; residual {abs(r):.3e}")


# tanh-sinh nodes on (0, 1): handles the integrable endpoint singularities of
# the Schwarz-Christoffel integrand when the path ends at w = +-1.  Returns
# (x, 1-x, w) with the complement computed without cancellation, since the
# -2/3 power amplifies any relative error in the distance to the endpoint.
def _ts_nodes(level):
    h = 0.5 ** level
    kmax = int(6.0 / h)
    t = h * np.arange(-kmax, kmax + 1)
    s = np.sinh(t)
    x = 1.0 / (1.0 + np.exp(-math.pi * s))
    xc = 1.0 / (1.0 + np.exp(math.pi * s))
    w = 0.25 * math.pi * h * np.cosh(t) / np.cosh(0.5 * math.pi * s) ** 2
    keep = (x > 1e-300) & (xc > 1e-300) & (w > 1e-300)
    return x[keep], xc[keep], w[keep]


class TriangleMap:
    """Map of the closed equilateral triangle {-1/2, 1/2, i sqrt(3)/2} onto
    the closed half-plane.

    The bottom corners -1/2, 1/2 go to -1, +1, the bottom midpoint to the
    origin, and the apex to the point at infinity. The inverse map is the
    Schwarz-Christoffel integral; the forward map inverts it with damped
    Newton seeded from a precomputed forward table.
    """

    kind = "Triangle"

    def __init__(self):
        self.prefactor = gamma(5.0 / 6.0) / (math.sqrt(math.pi) * gamma(1.0 / 3.0))
        self._ts = _ts_nodes(7)
        self._table = None

    @staticmethod
    def _powers(om, op):
        # branch continuous from the upper half-plane: for w there, 1-w sits
        # in the closed lower half-plane, so on its negative real axis the
        # log must carry arg -pi instead of the principal +pi
        om = np.atleast_1d(np.asarray(om, dtype=complex))
        l1 = np.log(om)
        neg = (om.imag == 0.0) & (om.real < 0.0)
        l1[neg] = np.log(-om.real[neg]) - 1j * math.pi
        l2 = np.log(np.asarray(op, dtype=complex))
        out = np.exp(-(2.0 / 3.0) * (l1 + l2))
        return out if out.size > 1 else complex(out[0])

    def _segment(self, a, b):
        """Integral of the integrand along the straight segment a -> b.

        Endpoint distances 1-w, 1+w are interpolated linearly from the
        endpoint values so a singular endpoint at w = +-1 stays exact.
        """
        x, xc, w8 = self._ts
        om = (1.0 - a) * xc + (1.0 - b) * x
        op = (1.0 + a) * xc + (1.0 + b) * x
        return (b - a) * np.sum(w8 * self._powers(om, op))

    def inverse(self, z):
        """Schwarz-Christoffel integral from 0 to z, split at a corner when
        the straight path would cross the singularity at w = +-1."""
        z = complex(z)
        if z.imag < -1e-9:
            raise MapDomainError("inverse map takes points of the closed half-plane")
        if z == 0.0:
            return 0.0 + 0.0j
        if abs(z.real) > 1.0:
            c = math.copysign(1.0, z.real)
            val = self._segment(0.0, c) + self._segment(c, z)
        else:
            val = self._segment(0.0, z)
        return self.prefactor * val

    def inverse_deriv(self, z):
        z = complex(z)
        if abs(z - 1.0) < 1e-12 or abs(z + 1.0) < 1e-12:
            raise MapDomainError("integrand singular at z = +-1")
        return self.prefactor * complex(self._powers(1.0 - z, 1.0 + z))

    def _forward_table(self):
        if self._table is None:
            rs = np.geomspace(1e-2, 1e2, 64)
            ths = np.linspace(1e-3, math.pi - 1e-3, 64)
            zs, us = [], []
            for r in rs:
                for th in ths:
                    z = r * cmath.exp(1j * th)
                    zs.append(z)
                    us.append(self.inverse(z))
            # boundary samples too, so boundary inversions start on-axis
            for xb in np.linspace(-30.0, 30.0, 241):
                if abs(abs(xb) - 1.0) < 1e-9:
                    continue
                zs.append(complex(xb))
                us.append(self.inverse(complex(xb)))
            zs, us = np.asarray(zs), np.asarray(us)
            good = np.isfinite(us)
            self._table = (zs[good], us[good])
        return self._table

    def map(self, u, tol=1e-12):
        u = complex(u)
        if not _inside_triangle(u):
            raise MapDomainError(f"point {u} outside the closed triangle")
        # corners of the triangle map to the singular points +-1 exactly
        if abs(u - 0.5) < 1e-13:
            return 1.0 + 0.0j
        if abs(u + 0.5) < 1e-13:
            return -1.0 + 0.0j
        zs, us = self._forward_table()
        z0 = zs[int(np.argmin(np.abs(us - u)))]
        inside = lambda z: z.imag > -1e-9
        return _newton_invert(self.inverse, self.inverse_deriv, z0, u,
                              inside=inside, tol=tol)

    def deriv(self, u):
        z = self.map(u)
        return 1.0 / self.inverse_deriv(z)


def domain_map(kind):
    """Factory: 'square' or 'triangle' -> a fresh DomainMap."""
    k = str(kind).strip().lower()
    if k == "square":
        return SquareMap()
    if k == "triangle":
        return TriangleMap()
    raise ValueError(f"unknown domain kind {kind!r}")


def boundary_points(kind, n):
    """n points tracing the domain boundary counterclockwise from the corner
    that maps to the origin's left (square: 0; triangle: -1/2)."""
    ts = np.linspace(0.0, 1.0, n, endpoint=False)
    pts = []
    if str(kind).strip().lower() == "square":
        corners = [0.0 + 0.0j, 1.0 + 0.0j, 1.0 + 1.0j, 0.0 + 1.0j]
    else:
        corners = [-0.5 + 0.0j, 0.5 + 0.0j, _TRI_APEX]
    k = len(corners)
    for t in ts:
        seg = int(t * k)
        frac = t * k - seg
        a, b = corners[seg], corners[(seg + 1) % k]
        pts.append(a + frac * (b - a))
    return np.asarray(pts)
