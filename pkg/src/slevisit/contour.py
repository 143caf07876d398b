"""Screening integrals over complex loop contours.

Each integration variable runs over a lasso: two straight lines from a
common anchor point in the lower half plane, tangent to a circle centered
at the encircled charge, plus the connecting arc traversed
counterclockwise.  The multi-branched integrand is realized through
principal branches with explicit phase bookkeeping relative to each loop's
apex, which makes it analytic along the contours and real positive at the
reference point on the real axis just right of each encircled charge.

Basis functions are indexed by per-charge loop counts, listed for the
charges in increasing position order (left outer points, then the curve
end point x, then right outer points); the middle count is 0 or 1, the
others 0, 1 or 2.
"""

import cmath
import math

import numpy as np

from .specfun import as_kappa
from .qgroup import VisitOrder, as_qvalue, solve_zigzag_vector

__all__ = [
    "BoundaryConfig",
    "ContourFamily",
    "AmplitudeValue",
    "build_contours",
    "integrand",
    "eval_loop_basis",
    "eval_amplitude_loop",
]


class GeometryError(Exception):
    pass


class BranchError(Exception):
    pass


class QuadratureError(Exception):
    pass


class BoundaryConfig:
    """The marked boundary points: curve start x and visited points y_j.

    points are listed in visit order, consistent with order; on each side
    later-visited points must lie farther from x (outwards-increasing).
    """

    __slots__ = ("x", "points", "order")

    def __init__(self, x, points, order):
        self.x = float(x)
        self.points = tuple(float(p) for p in points)
        self.order = order if isinstance(order, VisitOrder) else VisitOrder(order)
        if len(self.points) != self.order.N:
            raise ValueError("number of points does not match visit order length")
        last = {"+": self.x, "-": self.x}
        for y, side in zip(self.points, self.order.sides):
            if y == self.x:
                raise ValueError("visited point coincides with x")
            if side == "+" and not y > max(last["+"], self.x):
                raise ValueError("right-side points must increase outwards")
            if side == "-" and not y < min(last["-"], self.x):
                raise ValueError("left-side points must decrease outwards")
            last[side] = y
        if len(set(self.points)) != len(self.points):
            raise ValueError("visited points must be distinct")

    def side_points(self, side):
        """Positions y_1^side, y_2^side, ... from nearest to farthest."""
        return [y for y, s in zip(self.points, self.order.sides) if s == side]

    @property
    def charges(self):
        """All charge positions in increasing order: left points (outermost
        first), x, right points (innermost first)."""
        left = self.side_points("-")
        right = self.side_points("+")
        return list(reversed(left)) + [self.x] + right

    @property
    def x_index(self):
        return self.order.L

    def translated(self, a):
        return BoundaryConfig(self.x + a, [p + a for p in self.points], self.order)

    def scaled(self, lam):
        if lam <= 0:
            raise ValueError("scale factor must be positive")
        return BoundaryConfig(lam * self.x, [lam * p for p in self.points], self.order)

    def __repr__(self):
        return f"BoundaryConfig(x={self.x}, points={self.points}, order={self.order})"


class LoopDescriptor:
    """One lasso: anchor -> tangent line -> counterclockwise arc -> back."""

    __slots__ = ("charge_index", "position", "radius", "depth",
                 "theta_start", "theta_end", "tangent_points", "anchor")

    def __init__(self, charge_index, position, radius, depth, anchor):
        self.charge_index = int(charge_index)
        self.position = float(position)
        self.radius = float(radius)
        self.depth = int(depth)  # 0 = innermost among loops on this charge
        self.anchor = complex(anchor)
        c, r, z0 = self.position, self.radius, self.anchor
        D = abs(c - z0)
        if D <= 1.5 * r:
            raise GeometryError("anchor too close to a loop circle")
        alpha = cmath.phase(z0 - c)
        gamma = math.acos(r / D)
        # pick the tangent point where the incoming line direction matches
        # counterclockwise arc motion
        best = None
        for sgn in (+1, -1):
            th = alpha + sgn * gamma
            T = c + r * cmath.exp(1j * th)
            arc_dir = 1j * cmath.exp(1j * th)
            line_dir = (T - z0) / abs(T - z0)
            score = (arc_dir.conjugate() * line_dir).real
            if best is None or score > best[0]:
                best = (score, th, T)
        if best[0] < 0.999:
            raise GeometryError("tangent construction failed")
        self.theta_start = best[1]
        self.theta_end = best[1] + 2.0 * math.pi - 2.0 * gamma
        T_start = c + r * cmath.exp(1j * self.theta_start)
        T_end = c + r * cmath.exp(1j * self.theta_end)
        self.tangent_points = (T_start, T_end)

    @property
    def apex_theta(self):
        """Arc angle of the highest point of the loop."""
        th = math.pi / 2.0
        while th < self.theta_start:
            th += 2.0 * math.pi
        if th > self.theta_end:
            raise GeometryError("apex not on arc")
        return th

    def nodes(self, panel_order, line_panels=6, arc_panels=8):
        """Quadrature nodes along the loop.

        Returns (w, dw, past_apex): complex nodes, complex weights
        including the parametrization derivative, and the post-apex flag
        per node.  Line panels are graded geometrically toward the circle.
        """
        gl_x, gl_w = _leggauss(panel_order)
        z0 = self.anchor
        c, r = self.position, self.radius
        T_start, T_end = self.tangent_points
        ws, dws, flags = [], [], []

        def add_line(a, b, toward_circle, past):
            L = abs(b - a)
            # geometric panel breakpoints, clustered at the circle end
            fr = np.geomspace(min(1.0, r / L), 1.0, line_panels + 1)[::-1]
            cuts = 1.0 - fr  # 0 .. 1 - r/L
            cuts = np.append(cuts, 1.0)
            if not toward_circle:
                cuts = 1.0 - cuts[::-1]
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                t = lo + (hi - lo) * 0.5 * (gl_x + 1.0)
                ws.append(a + (b - a) * t)
                dws.append(np.full(t.shape, b - a, dtype=complex) * (0.5 * (hi - lo) * gl_w))
                flags.append(np.full(t.shape, past, dtype=bool))

        add_line(z0, T_start, True, False)
        th_a = self.apex_theta
        edges = np.linspace(self.theta_start, self.theta_end, arc_panels + 1)
        if not np.any(np.isclose(edges, th_a)):
            edges = np.sort(np.append(edges, th_a))
        for lo, hi in zip(edges[:-1], edges[1:]):
            th = lo + (hi - lo) * 0.5 * (gl_x + 1.0)
            e = np.exp(1j * th)
            ws.append(c + r * e)
            dws.append(1j * r * e * (0.5 * (hi - lo) * gl_w))
            flags.append(np.full(th.shape, lo >= th_a - 1e-14, dtype=bool))
        add_line(T_end, z0, False, True)
        return np.concatenate(ws), np.concatenate(dws), np.concatenate(flags)


_gl_cache = {}


def _leggauss(n):
    if n not in _gl_cache:
        _gl_cache[n] = np.polynomial.legendre.leggauss(n)
    return _gl_cache[n]


class ContourFamily:
    __slots__ = ("anchor", "loops", "r_min")

    def __init__(self, anchor, loops, r_min):
        self.anchor = complex(anchor)
        self.loops = list(loops)
        self.r_min = float(r_min)

    def __repr__(self):
        return (f"ContourFamily(anchor={self.anchor}, "
                f"{len(self.loops)} loops, r_min={self.r_min:.3g})")


class AmplitudeValue:
    __slots__ = ("value", "abs_error", "method", "averaged")

    def __init__(self, value, abs_error, method, averaged=False):
        if method not in ("loop", "real_regularized", "closed_form"):
            raise ValueError(f"unknown method tag {method!r}")
        if not math.isfinite(abs_error) or abs_error < 0:
            raise ValueError("abs_error must be finite and nonnegative")
        self.value = complex(value)
        self.abs_error = float(abs_error)
        self.method = method
        # set when the value is a two-sided kappa average around a
        # degenerate rational
        self.averaged = bool(averaged)

    @property
    def real(self):
        return self.value.real

    def assert_real(self):
        if abs(self.value.imag) > max(10.0 * self.abs_error, 1e-8 * abs(self.value)):
            raise BranchError(
                f"amplitude not real: {self.value} (abs_error {self.abs_error:.2e})"
            )
        return self

    def __repr__(self):
        return f"AmplitudeValue({self.value}, abs_error={self.abs_error:.2e}, {self.method!r})"


def _validate_counts(config, t_assign):
    charges = config.charges
    t_assign = tuple(int(t) for t in t_assign)
    if len(t_assign) != len(charges):
        raise ValueError("loop counts must list one entry per charge")
    xi = config.x_index
    for i, t in enumerate(t_assign):
        hi = 1 if i == xi else 2
        if not 0 <= t <= hi:
            raise ValueError(f"count {t} out of range at charge {i}")
    return t_assign


def build_contours(config, t_assign, anchor_scale=1.0):
    """Lasso contours for the given per-charge loop counts.

    Radii at a charge with k loops default to g/2 * {1/(k+1) .. k/(k+1)}
    with g the distance to the nearest other charge; all radii are scaled
    down together if the tangent wedges of loops around distinct charges
    would overlap angularly at the anchor (which would break the
    principal-branch phase bookkeeping).
    """
    t_assign = _validate_counts(config, t_assign)
    charges = config.charges
    spread = max(charges) - min(charges)
    if spread <= 0:
        raise GeometryError("degenerate charge configuration")
    s = anchor_scale * spread
    if s <= 0:
        raise GeometryError("anchor_scale must be positive")
    z0 = (min(charges) - s) - 1j * s

    gaps = []
    for i, c in enumerate(charges):
        g = min(abs(c - c2) for j, c2 in enumerate(charges) if j != i)
        gaps.append(g)
        if t_assign[i] > 0 and g < 1e-8 * spread:
            raise GeometryError("charges too close for the radius rule")

    def outer_radius(i, scale):
        k = t_assign[i]
        return scale * gaps[i] / 2.0 * k / (k + 1.0)

    # shrink radii until tangent wedges of different looped charges are
    # angularly separated at the anchor, with a safety margin
    scale = 1.0
    looped = [i for i, t in enumerate(t_assign) if t > 0]
    for _ in range(8):
        ok = True
        for a, b in zip(looped[:-1], looped[1:]):
            th_a = cmath.phase(charges[a] - z0)
            th_b = cmath.phase(charges[b] - z0)
            d_a = abs(charges[a] - z0)
            d_b = abs(charges[b] - z0)
            delta = math.asin(min(1.0, outer_radius(a, scale) / d_a)) + math.asin(
                min(1.0, outer_radius(b, scale) / d_b)
            )
            sep = th_a - th_b  # positive: left charge seen at steeper angle
            if sep <= 1.3 * delta:
                ok = False
                scale *= max(0.5, sep / (1.3 * delta) * 0.95)
        if ok:
            break
    else:
        raise GeometryError("could not separate loop wedges")

    loops = []
    for i in looped:
        k = t_assign[i]
        for depth in range(k):
            r = scale * gaps[i] / 2.0 * (depth + 1.0) / (k + 1.0)
            loops.append(LoopDescriptor(i, charges[i], r, depth, z0))

    # minimum clearance between contour pieces and the singular points
    r_min = min((lp.radius for lp in loops), default=spread)
    for lp in loops:
        for c in charges:
            if c == lp.position:
                continue
            for T in lp.tangent_points:
                r_min = min(r_min, _segment_distance(z0, T, c))
            r_min = min(r_min, abs(c - lp.position) - lp.radius)
    if loops and r_min < 1e-8 * spread:
        raise GeometryError("contour passes too close to a singular point")
    return ContourFamily(z0, loops, r_min)


def _segment_distance(a, b, p):
    """Distance from point p to segment [a, b] in the complex plane."""
    d = b - a
    t = ((p - a).real * d.real + (p - a).imag * d.imag) / abs(d) ** 2
    t = min(1.0, max(0.0, t))
    return abs(a + t * d - p)


# --- branch-resolved integrand factors ---


def _own_factor(w, past, pos, beta):
    """(w - pos)^beta on the loop around pos, branch split at the apex."""
    w = np.asarray(w)
    out = np.empty(w.shape, dtype=complex)
    pre = ~np.asarray(past)
    out[pre] = np.exp(beta * np.log(w[pre] - pos))
    out[~pre] = cmath.exp(1j * math.pi * beta) * np.exp(beta * np.log(pos - w[~pre]))
    return out


def _other_factor(w, own_pos, other_pos, beta):
    """(w - other)^beta for a loop around own_pos != other_pos."""
    w = np.asarray(w)
    if other_pos < own_pos:
        return np.exp(beta * np.log(w - other_pos))
    return np.exp(beta * np.log(other_pos - w))


def _pair_block(w1, pos1, rad1, past1, w2, pos2, rad2, past2, beta):
    """Matrix (w2[j] - w1[i])^beta with the branch case analysis.

    Distinct charges: principal branch of (w_righter - w_lefter).  Same
    charge: branch decided by whether the outer variable is past its apex.
    """
    W1 = np.asarray(w1)[:, None]
    W2 = np.asarray(w2)[None, :]
    if pos1 != pos2:
        if pos1 < pos2:
            return np.exp(beta * np.log(W2 - W1))
        return np.exp(beta * np.log(W1 - W2))
    # nested loops on one charge; the one with larger radius is outer
    if rad1 == rad2:
        raise GeometryError("coincident nested radii")
    if rad1 < rad2:
        outer_past = np.asarray(past2)[None, :]
        win, wout = W1, W2
    else:
        outer_past = np.asarray(past1)[:, None]
        win, wout = W2, W1
    out = np.empty(np.broadcast_shapes(W1.shape, W2.shape), dtype=complex)
    pre = ~np.broadcast_to(outer_past, out.shape)
    diff_pre = np.broadcast_to(wout - win, out.shape)
    out[pre] = np.exp(beta * np.log(diff_pre[pre]))
    out[~pre] = cmath.exp(1j * math.pi * beta) * np.exp(beta * np.log(-diff_pre[~pre]))
    return out


def _prefactor(config, kappa):
    kappa = as_kappa(kappa)
    k = kappa.value
    val = 1.0
    for y in config.points:
        val *= abs(y - config.x) ** (4.0 / k)
    pts = config.points
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            val *= abs(pts[i] - pts[j]) ** (8.0 / k)
    return val


def integrand(w, config, kappa, branch_state):
    """Rephased branch of the screening integrand at one point.

    branch_state is a sequence of (target_position, radius, past_apex)
    per variable, consistent with the contour construction.
    """
    kappa = as_kappa(kappa)
    k = kappa.value
    w = [complex(v) for v in w]
    if len(w) != len(branch_state):
        raise ValueError("one branch-state entry per variable required")
    val = complex(_prefactor(config, kappa))
    charges = config.charges
    xi = config.x_index
    for s, (ws, (pos, rad, past)) in enumerate(zip(w, branch_state)):
        for i, c in enumerate(charges):
            beta = -4.0 / k if i == xi else -8.0 / k
            if c == pos:
                val *= _own_factor(np.array([ws]), np.array([past]), c, beta)[0]
            else:
                val *= _other_factor(np.array([ws]), pos, c, beta)[0]
    for s1 in range(len(w)):
        for s2 in range(s1 + 1, len(w)):
            p1, r1, a1 = branch_state[s1]
            p2, r2, a2 = branch_state[s2]
            val *= _pair_block(
                np.array([w[s1]]), p1, r1, np.array([a1]),
                np.array([w[s2]]), p2, r2, np.array([a2]), 8.0 / k,
            )[0, 0]
    return val


_EINSUM_VARS = "ijkl"


def _eval_at_level(family, config, kappa, level):
    k = as_kappa(kappa).value
    charges = config.charges
    xi = config.x_index
    order = 8 + 6 * level
    vecs = []
    node_data = []
    for lp in family.loops:
        w, dw, past = lp.nodes(order)
        a = dw.astype(complex)
        for i, c in enumerate(charges):
            beta = -4.0 / k if i == xi else -8.0 / k
            if c == lp.position:
                a = a * _own_factor(w, past, c, beta)
            else:
                a = a * _other_factor(w, lp.position, c, beta)
        vecs.append(a)
        node_data.append((w, lp.position, lp.radius, past))
    ell = len(family.loops)
    if ell == 0:
        return complex(_prefactor(config, kappa))
    subs = []
    ops = []
    for s in range(ell):
        subs.append(_EINSUM_VARS[s])
        ops.append(vecs[s])
    for s1 in range(ell):
        for s2 in range(s1 + 1, ell):
            w1, p1, r1, a1 = node_data[s1]
            w2, p2, r2, a2 = node_data[s2]
            subs.append(_EINSUM_VARS[s1] + _EINSUM_VARS[s2])
            ops.append(_pair_block(w1, p1, r1, a1, w2, p2, r2, a2, 8.0 / k))
    total = np.einsum(",".join(subs) + "->", *ops, optimize=True)
    return complex(total) * _prefactor(config, kappa)


def eval_loop_basis(t_assign, config, kappa, tol=1e-9, anchor_scale=1.0,
                    max_level=6):
    """One screening basis function by nested contour quadrature."""
    kappa = as_kappa(kappa)
    family = build_contours(config, t_assign, anchor_scale)
    if not family.loops:
        return AmplitudeValue(_eval_at_level(family, config, kappa, 0), 0.0, "loop")
    prev = None
    for level in range(max_level + 1):
        val = _eval_at_level(family, config, kappa, level)
        if prev is not None:
            diff = abs(val - prev)
            if diff <= tol * max(abs(val), 1e-300):
                return AmplitudeValue(val, diff, "loop")
        prev = val
    raise QuadratureError(
        f"loop quadrature did not converge to tol={tol} within budget"
    )


def basis_counts_from_index(idx, L, R):
    """Per-charge loop counts (left-to-right) for a tensor basis index.

    The tensor factors are ordered (t_R, ..., t_1, d, s_1, ..., s_L) while
    charges run left to right as (y_L^-, ..., y_1^-, x, y_1^+, ..., y_R^+),
    so the argument order is the reverse of the tensor order.
    """
    if len(idx) != L + R + 1:
        raise ValueError("index length mismatch")
    return tuple(reversed(idx))


def eval_amplitude_loop(N, omega, config, kappa, tol=1e-9, anchor_scale=1.0,
                        max_level=6):
    """Boundary visit amplitude via the loop-contour scheme."""
    order = omega if isinstance(omega, VisitOrder) else VisitOrder(omega)
    if order.N != N:
        raise ValueError("N does not match omega")
    if config.order != order:
        raise ValueError("config visit order does not match omega")
    qv = as_qvalue(as_kappa(kappa))
    v = solve_zigzag_vector(N, order, qv)
    total = 0.0 + 0.0j
    err = 0.0
    for idx, coeff in v.coeffs.items():
        counts = basis_counts_from_index(idx, order.L, order.R)
        phi = eval_loop_basis(counts, config, kappa, tol=tol,
                              anchor_scale=anchor_scale, max_level=max_level)
        total += coeff * phi.value
        err += abs(coeff) * phi.abs_error
    scale = max(abs(total), 1e-300)
    out = AmplitudeValue(total, max(err, tol * scale), "loop")
    return out.assert_real()
