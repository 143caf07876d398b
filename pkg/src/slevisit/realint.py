"""Real-line simplex integrals and the regularized evaluation scheme.

Loop basis functions unwind to linear combinations of ordered integrals
over the real intervals between charges.  The combination coefficients are
signed integer powers of q; here they are extracted by evaluating the
branch-resolved integrand on a flattened copy of the loop contours
(anchor depth and circle radii sent to zero) and snapping the resulting
phases onto the +-q^n lattice, which makes them exact.

Real intervals are indexed by their right endpoints: a simplex spec is a
tuple of per-interval ordered-variable counts aligned with the charges in
increasing position order; index 0 is the interval starting at the base
point.  Combinations arising from solver vectors carry no base-point
integrations (checked), so the numeric evaluator only handles specs with
count 0 at index 0.

Regularization: integrals divergent at the visit points are evaluated on
the epsilon-trimmed simplex plus analytically-integrated counterterms:
single-shell pieces at Taylor orders 0 and 1, and the corner classes (two
variables collapsing onto one endpoint, one-sided or straddling) at
leading order, with the corner coefficients corrected for the boundary
mismatch of the shell Taylor terms.  The remaining eps-dependence, all
powers m(1-8/kappa)+j with j >= 2, is fitted away on a geometric grid.
"""

import cmath
import itertools
import math

import numpy as np

from .specfun import as_kappa, gamma, hyp2f1
from .qgroup import VisitOrder, as_qvalue, q_int, solve_zigzag_vector
from .contour import (
    AmplitudeValue,
    BoundaryConfig,
    LoopDescriptor,
    QuadratureError,
    _own_factor,
    _other_factor,
    _pair_block,
    _prefactor,
    _validate_counts,
)

__all__ = [
    "reorder_factor",
    "unwind_loops",
    "real_combination",
    "generate_counterterms",
    "eval_rho_regularized",
    "eval_amplitude_real",
]


class CancellationError(Exception):
    pass


class PhaseSnapError(Exception):
    pass


def reorder_factor(k, q):
    """[k]! q^{-k(k-1)/2}, the interval reordering factor."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    qv = as_qvalue(q).q
    out = 1.0 + 0.0j
    for m in range(2, k + 1):
        out *= q_int(m, qv)
    return out * qv ** (-(k * (k - 1)) // 2)


def _snap_phase(phase, q, nmax, tol=1e-2):
    """Nearest +-q^n to a unit-modulus number; returns the exact monomial."""
    cands = sorted(
        (abs(sign * q**n - phase), sign, n)
        for n in range(-nmax, nmax + 1)
        for sign in (1.0, -1.0)
    )
    d, sign, n = cands[0]
    if d > tol:
        raise PhaseSnapError(f"phase {phase} not near any +-q^n (dist {d:.2e})")
    for d2, s2, n2 in cands[1:]:
        if abs(s2 * q**n2 - sign * q**n) < 1e-6:
            continue  # alias of the same value (q at a root of unity)
        if d2 < 10.0 * max(d, 1e-4):
            raise PhaseSnapError(
                f"ambiguous snap: dists {d:.2e} and {d2:.2e} to distinct values"
            )
        break
    return sign, n


def _flat_loops(config, t_assign):
    """Flattened lasso descriptors (tiny anchor depth and radii)."""
    charges = config.charges
    spread = max(charges) - min(charges)
    # radii must be far smaller than the anchor depth: otherwise the
    # radius-induced stem tilts can flip the sign of Im(w_i - w_j) at
    # negative real part, crossing a principal-branch cut
    s = 1e-5 * spread
    z0 = (min(charges) - 0.05 * spread) - 1j * s
    loops = []
    for i, t in enumerate(t_assign):
        for depth in range(t):
            g = min(abs(charges[i] - c) for j, c in enumerate(charges) if j != i)
            r = 1e-9 * g * (depth + 1.0)
            loops.append(LoopDescriptor(i, charges[i], r, depth, z0))
    return z0, loops


def _stem_point(loop, u, strand):
    """Contour point with real part u on the outgoing (0) / return (1) stem."""
    z0 = loop.anchor
    T = loop.tangent_points[0] if strand == 0 else loop.tangent_points[1]
    t = (u - z0.real) / (T.real - z0.real)
    if not 0.0 <= t <= 1.0:
        raise ValueError("placement point off the stem")
    return z0 + t * (T - z0)


_unwind_cache = {}


def unwind_loops(t_assign, config, q):
    """Express a loop basis function in real-interval integrals.

    Returns a dict mapping simplex specs (per-interval counts, index 0 =
    base-point interval) to coefficients, in the hatted normalization:
    phi = sum coeff * reorder_product(spec) * rho_spec.
    """
    qval = as_qvalue(q)
    t_assign = _validate_counts(config, t_assign)
    key = (t_assign, config.x_index, round(qval.kappa.value, 12))
    if key in _unwind_cache:
        return dict(_unwind_cache[key])
    qv = qval.q
    charges = config.charges
    z0, loops = _flat_loops(config, t_assign)
    ell = len(loops)
    coeffs = {}
    if ell == 0:
        spec = (0,) * len(charges)
        coeffs[spec] = 1.0 + 0.0j
        _unwind_cache[key] = dict(coeffs)
        return coeffs

    # interval i spans (edge[i], edge[i+1]) and is indexed by its right
    # endpoint charge i; edge[0] is the flattened base point
    edges = [z0.real] + list(charges)
    per_var_options = []
    for lp in loops:
        opts = []
        for i in range(lp.charge_index + 1):
            for strand in (0, 1):
                opts.append((i, strand))
        per_var_options.append(opts)

    k = qval.kappa.value
    xi = config.x_index
    for placement in itertools.product(*per_var_options):
        groups = {}
        for s, (i, strand) in enumerate(placement):
            groups.setdefault(i, []).append(s)
        rank_choices = [itertools.permutations(g) for g in groups.values()]
        for ranking in itertools.product(*rank_choices):
            upos = {}
            for (i, _), perm in zip(groups.items(), ranking):
                lo, hi = edges[i], edges[i + 1]
                for rank, s in enumerate(perm):
                    upos[s] = lo + (hi - lo) * (rank + 1.0) / (len(perm) + 1.0)
            ws, pasts = [], []
            for s, (i, strand) in enumerate(placement):
                ws.append(_stem_point(loops[s], upos[s], strand))
                pasts.append(strand == 1)
            val = 1.0 + 0.0j
            for s, lp in enumerate(loops):
                for ci, c in enumerate(charges):
                    beta = -4.0 / k if ci == xi else -8.0 / k
                    if c == lp.position:
                        val *= _own_factor(
                            np.array([ws[s]]), np.array([pasts[s]]), c, beta
                        )[0]
                    else:
                        val *= _other_factor(np.array([ws[s]]), lp.position, c, beta)[0]
            for s1 in range(ell):
                for s2 in range(s1 + 1, ell):
                    val *= _pair_block(
                        np.array([ws[s1]]), loops[s1].position, loops[s1].radius,
                        np.array([pasts[s1]]),
                        np.array([ws[s2]]), loops[s2].position, loops[s2].radius,
                        np.array([pasts[s2]]), 8.0 / k,
                    )[0, 0]
            phase = val / abs(val)
            nret = sum(1 for _, strand in placement if strand == 1)
            sign, n = _snap_phase(phase, qv, 8 * ell + 10)
            contrib = sign * (-1.0) ** nret * qv**n
            spec = [0] * len(charges)
            for i, _ in placement:
                spec[i] += 1
            spec = tuple(spec)
            coeffs[spec] = coeffs.get(spec, 0.0) + contrib

    # hatted normalization: divide out the interval reordering factors
    out = {}
    for spec, c in coeffs.items():
        if abs(c) < 1e-12:
            continue
        rf = 1.0 + 0.0j
        for ki in spec:
            rf *= reorder_factor(ki, qval)
        out[spec] = c / rf
    _unwind_cache[key] = dict(out)
    return out


def real_combination(N, omega, q, config=None):
    """Amplitude as a combination of plain (non-hatted) simplex integrals.

    Composes the solver vector with the loop unwinding and the reordering
    factors, asserts that every base-point-touching spec cancels and that
    the surviving coefficients are real.
    """
    order = omega if isinstance(omega, VisitOrder) else VisitOrder(omega)
    if order.N != N:
        raise ValueError("N does not match omega")
    qval = as_qvalue(q)
    if config is not None and config.order != order:
        raise ValueError("config visit order does not match omega")
    if config is None:
        left = [-(m + 1.0) for m in range(order.L)]
        right = [m + 1.0 for m in range(order.R)]
        pts = []
        it_l, it_r = iter(left), iter(right)
        for side in order.sides:
            pts.append(next(it_r) if side == "+" else next(it_l))
        config = BoundaryConfig(0.0, pts, order)
    v = solve_zigzag_vector(N, order, qval)
    total = {}
    for idx, coeff in v.coeffs.items():
        counts = tuple(reversed(idx))
        hat = unwind_loops(counts, config, qval)
        for spec, c in hat.items():
            rf = 1.0 + 0.0j
            for ki in spec:
                rf *= reorder_factor(ki, qval)
            total[spec] = total.get(spec, 0.0) + coeff * c * rf
    scale = max(abs(c) for c in total.values())
    out = {}
    for spec, c in total.items():
        if abs(c) < 1e-8 * scale:
            continue
        if spec[0] != 0:
            raise CancellationError(
                f"base-point spec {spec} survives with coefficient {c}"
            )
        if abs(c.imag) > 1e-8 * scale:
            raise CancellationError(f"non-real coefficient {c} on spec {spec}")
        out[spec] = c.real
    return out


# --- numeric evaluation of the simplex integrals ---


_de_cache = {}


def _de_nodes(n, beta):
    """tanh-sinh nodes on (0, 1): (t, 1-t exactly, weights).

    The complement is computed through the exponential form so that
    distances to either endpoint stay fully accurate near the boundary.
    beta is the most negative endpoint exponent the rule must absorb; the
    truncation range grows as beta approaches -1 because the transformed
    tail decays like exp(-(1+beta) pi sinh u).
    """
    beta = max(-0.995, min(0.0, beta))
    key = (n, round(beta, 6))
    if key not in _de_cache:
        a = math.asinh(max(45.0 / (math.pi * (1.0 + beta)), 12.0))
        u = np.linspace(-a, a, n)
        h = u[1] - u[0]
        sh = math.pi * np.sinh(u)  # 2 * (pi/2) sinh u
        with np.errstate(over="ignore", under="ignore"):
            t = 1.0 / (1.0 + np.exp(-sh))
            tm = 1.0 / (1.0 + np.exp(sh))
            w = h * 0.25 * math.pi * np.cosh(u) / np.cosh(0.5 * sh) ** 2
        keep = (t > 0.0) & (tm > 0.0) & (w > 0.0) & np.isfinite(w)
        _de_cache[key] = (t[keep], tm[keep], w[keep])
    return _de_cache[key]


class _Block:
    """Quadrature data for the ordered variables of one real interval.

    Distances to the effective interval edges (dlo, dhi) and consecutive
    gaps between variables are carried exactly through the Duffy
    recursion, avoiding cancellation at the singular endpoints.
    """

    __slots__ = ("interval", "lo_eff", "hi_eff", "kvars",
                 "dlo", "dhi", "pair", "wts", "pts", "a", "ld")

    def __init__(self, interval, lo_eff, hi_eff, kvars, n_per_dim, beta):
        self.interval = interval
        self.lo_eff = lo_eff
        self.hi_eff = hi_eff
        self.kvars = kvars
        t, tm, wt = _de_nodes(n_per_dim, beta)
        T = t.size
        L = hi_eff - lo_eff
        dlo, dhi, inc = [], [], []
        wts = np.array([1.0])
        for j in range(kvars):
            prev_dhi = dhi[j - 1] if j else np.full(1, L)
            prev_dlo = dlo[j - 1] if j else np.zeros(1)
            step = (prev_dhi[:, None] * t[None, :]).ravel()
            new_dlo = (prev_dlo[:, None] + prev_dhi[:, None] * t[None, :]).ravel()
            new_dhi = (prev_dhi[:, None] * tm[None, :]).ravel()
            wts = (wts[:, None] * (prev_dhi[:, None] * wt[None, :])).ravel()
            for m in range(j):
                dlo[m] = np.repeat(dlo[m], T)
                dhi[m] = np.repeat(dhi[m], T)
                inc[m] = np.repeat(inc[m], T)
            dlo.append(new_dlo)
            dhi.append(new_dhi)
            inc.append(step)
        self.dlo = dlo
        self.dhi = dhi
        self.wts = wts
        self.pts = [lo_eff + d for d in dlo]
        # pairwise gaps w_{j2} - w_{j1} as sums of positive increments
        self.pair = {}
        for j1 in range(kvars):
            for j2 in range(j1 + 1, kvars):
                gap = inc[j1 + 1].copy()
                for m in range(j1 + 2, j2 + 1):
                    gap += inc[m]
                self.pair[(j1, j2)] = gap
        self.a = None
        self.ld = None


def _build_blocks(config, kappa, spec, eps, level):
    """Weighted quadrature blocks for the trimmed ordered integral."""
    kappa = as_kappa(kappa)
    k = kappa.value
    charges = config.charges
    xi = config.x_index
    n_per_dim = 32 + 16 * level
    blocks = []
    for i in range(1, len(charges)):
        if spec[i] == 0:
            continue
        lo, hi = charges[i - 1], charges[i]
        eps_lo = eps if (i - 1) != xi else 0.0
        eps_hi = eps if i != xi else 0.0
        blk = _Block(i, lo + eps_lo, hi - eps_hi, spec[i], n_per_dim, -8.0 / k)
        a = blk.wts.astype(float)
        for j in range(blk.kvars):
            for ci, c in enumerate(charges):
                beta = -4.0 / k if ci == xi else -8.0 / k
                if ci == i - 1:
                    dist = blk.dlo[j] + eps_lo
                elif ci == i:
                    dist = blk.dhi[j] + eps_hi
                else:
                    dist = np.abs(blk.pts[j] - c)
                a = a * dist**beta
        for (j1, j2), gap in blk.pair.items():
            a = a * gap ** (8.0 / k)
        a[~np.isfinite(a)] = 0.0
        blk.a = a
        blocks.append(blk)
    return blocks


def _edge_distance(blk, j, p, charges):
    """Distance |w_j - p| for an endpoint charge p, cancellation-free."""
    lo, hi = charges[blk.interval - 1], charges[blk.interval]
    if p == lo:
        return blk.dlo[j] + (blk.lo_eff - lo)
    if p == hi:
        return blk.dhi[j] + (hi - blk.hi_eff)
    return np.abs(blk.pts[j] - p)


def _trimmed_integral(config, kappa, spec, eps, frozen=(), logderiv_at=None,
                      level=2):
    """Ordered trimmed integral with optional frozen endpoint variables.

    frozen is a sequence of positions treated as additional fixed
    integration variables (pair factors included, own singular charge
    factor removed); logderiv_at (index into frozen) multiplies the
    integrand by the logarithmic derivative of its smooth environment.
    """
    kappa = as_kappa(kappa)
    k = kappa.value
    charges = config.charges
    xi = config.x_index
    with np.errstate(divide="ignore", invalid="ignore"):
        blocks = _build_blocks(config, kappa, spec, eps, level)

        # frozen entries are (position, weight); a corner (two variables
        # collapsed onto one endpoint) freezes with weight 2
        fro = [(float(p), int(w)) for p, w in frozen]
        const = 1.0
        for p, w in fro:
            for ci, c in enumerate(charges):
                if c == p:
                    continue
                beta = -4.0 / k if ci == xi else -8.0 / k
                const *= abs(p - c) ** (beta * w)
        for i1 in range(len(fro)):
            for i2 in range(i1 + 1, len(fro)):
                p1, w1 = fro[i1]
                p2, w2 = fro[i2]
                const *= abs(p1 - p2) ** (8.0 / k * w1 * w2)
        for blk in blocks:
            for p, w in fro:
                for j in range(blk.kvars):
                    blk.a = blk.a * _edge_distance(blk, j, p, charges) ** (
                        8.0 / k * w
                    )

        if logderiv_at is not None:
            p0 = fro[logderiv_at][0]
            base = 0.0
            for ci, c in enumerate(charges):
                if c == p0:
                    continue
                beta = -4.0 / k if ci == xi else -8.0 / k
                base += beta / (p0 - c)
            for p, w in fro:
                if p != p0:
                    base += w * (8.0 / k) / (p0 - p)
            for blk in blocks:
                ld = np.zeros(blk.a.shape)
                lo, hi = charges[blk.interval - 1], charges[blk.interval]
                for j in range(blk.kvars):
                    d = _edge_distance(blk, j, p0, charges)
                    if p0 == lo:
                        ld -= (8.0 / k) / d
                    elif p0 == hi:
                        ld += (8.0 / k) / d
                    else:
                        ld += (8.0 / k) / (p0 - blk.pts[j])
                blk.ld = ld
            return const * _contract_blocks(blocks, charges, k, base)

        return const * _contract_blocks(blocks, charges, k, None)


def _contract_blocks(blocks, charges, k, logderiv_base):
    """Contract per-interval blocks with cross-interval pair couplings."""
    if not blocks:
        return 1.0 * (logderiv_base if logderiv_base is not None else 1.0)
    subs, ops = [], []
    letters = "abcdef"
    if len(blocks) > len(letters):
        raise QuadratureError("too many interval blocks")
    for bi, blk in enumerate(blocks):
        subs.append(letters[bi])
        ops.append(blk.a)
    for b1 in range(len(blocks)):
        for b2 in range(b1 + 1, len(blocks)):
            blk1, blk2 = blocks[b1], blocks[b2]
            gap_const = blk2.lo_eff - blk1.hi_eff
            m = np.ones((blk1.wts.size, blk2.wts.size))
            for j1 in range(blk1.kvars):
                for j2 in range(blk2.kvars):
                    d = gap_const + blk1.dhi[j1][:, None] + blk2.dlo[j2][None, :]
                    m = m * d ** (8.0 / k)
            subs.append(letters[b1] + letters[b2])
            ops.append(m)
    plain = np.einsum(",".join(subs) + "->", *ops, optimize=True)
    if logderiv_base is None:
        return float(plain)
    # integral of (base + sum_blocks ld_b) * integrand
    total = logderiv_base * plain
    for bi in range(len(blocks)):
        ops_ld = list(ops)
        ops_ld[bi] = blocks[bi].a * blocks[bi].ld
        total += np.einsum(",".join(subs) + "->", *ops_ld, optimize=True)
    return float(total)


def _corner_constant(kappa):
    """Continued value of the two-variable same-endpoint shell integral.

    Duffy substitution factorizes it into a Beta function times a power
    integral; the Beta value is the analytic continuation when 8/k > 1.
    """
    k = as_kappa(kappa).value
    beta = -8.0 / k
    num = gamma(1.0 + beta) * gamma(1.0 + 8.0 / k)
    return float((num / gamma(2.0 + beta + 8.0 / k)).real) / (2.0 - 8.0 / k)


def _straddle_constant(kappa):
    """Continued two-variable shell integral straddling a shared endpoint.

    One variable on each side of the endpoint, pair distance v1 + v2;
    reduces to a Gauss hypergeometric value at argument -1.
    """
    k = as_kappa(kappa).value
    a1 = 1.0 - 8.0 / k
    I = complex(hyp2f1(-8.0 / k, a1, 1.0 + a1, -1.0)).real / a1
    return 2.0 * I / (2.0 - 8.0 / k)


_tip_cache = {}


def _tip_anomaly_constants(kappa):
    """Corrections folded into the corner coefficients.

    The first-order Taylor subtraction of a single-shell piece misses an
    eps^(2-8/k) contribution from the region where the shell variable and
    its nearest free neighbour meet at the trim boundary.  The same-side
    constant corrects one-sided corners; the across-the-endpoint constant
    corrects the straddling corner (once per side).
    """
    k = as_kappa(kappa).value
    key = round(k, 12)
    if key in _tip_cache:
        return _tip_cache[key]
    from scipy import integrate

    g = 8.0 / k
    bt = -8.0 / k

    def make(sgn):
        def inner(a):
            f = lambda b: (1.0 + b) ** bt * (
                (1.0 + b + sgn * a) ** g
                - (1.0 + b) ** g
                - sgn * g * a * (1.0 + b) ** (g - 1.0)
            )
            v, _ = integrate.quad(f, 0.0, np.inf, limit=200)
            return a**bt * v

        v, _ = integrate.quad(inner, 0.0, 1.0, limit=200)
        return v

    res = (make(-1.0), make(1.0))
    _tip_cache[key] = res
    return res


def generate_counterterms(spec, config, kappa, order=1):
    """Shell and corner counterterm descriptors for a trimmed integral.

    Each term: (eps power, constant coefficient, reduced spec, frozen
    (position, weight) pairs, logderiv index or None).  Slots are the
    interval endpoints at visit points; each endpoint holds either one
    shell variable or a leading-order corner (two variables, weight 2).
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    kappa = as_kappa(kappa)
    k = kappa.value
    a1 = 1.0 - 8.0 / k
    if a1 <= -1.0:
        raise ValueError("kappa too small: shell expansion diverges")
    nmax = sum(spec)
    if nmax * a1 + order + 1.0 <= 0.0:
        raise ValueError(
            "requested counterterm order insufficient at this kappa"
        )
    CB, CBx = _tip_anomaly_constants(kappa)
    C0 = _corner_constant(kappa) + CB
    Cx = _straddle_constant(kappa) + 2.0 * CBx
    charges = config.charges
    xi = config.x_index
    nint = len(charges) - 1  # highest interval index carrying a count
    # per endpoint position: intervals it bounds from the left and right
    positions = []
    for ci in range(len(charges)):
        if ci == xi:
            continue
        left = ci if 1 <= ci <= nint else None
        right = ci + 1 if ci + 1 <= nint else None
        positions.append((ci, left, right))
    # modes per position: (vars absorbed from left interval, from right);
    # single shells, one-sided corners, and the straddling corner
    mode_list = ((0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1))
    terms = []
    for modes in itertools.product(mode_list, repeat=len(positions)):
        if all(m == (0, 0) for m in modes):
            continue
        need = {}
        ok = True
        for (ci, left, right), (nL, nR) in zip(positions, modes):
            if (nL and left is None) or (nR and right is None):
                ok = False
                break
            if nL:
                need[left] = need.get(left, 0) + nL
            if nR:
                need[right] = need.get(right, 0) + nR
        if not ok or any(need[i] > spec[i] for i in need):
            continue
        red = list(spec)
        for i, n in need.items():
            red[i] -= n
        red = tuple(red)
        frozen = []
        shells = []  # (frozen index, sign) for Taylor-correctable shells
        power = 0.0
        const = 1.0
        for (ci, left, right), (nL, nR) in zip(positions, modes):
            if nL + nR == 0:
                continue
            frozen.append((charges[ci], nL + nR))
            if (nL, nR) in ((1, 0), (0, 1)):
                power += a1
                const /= a1
                shells.append((len(frozen) - 1, -1.0 if nL else 1.0))
            elif (nL, nR) == (1, 1):
                power += 1.0 + a1
                const *= Cx
            else:
                power += 1.0 + a1
                const *= C0
        frozen = tuple(frozen)
        terms.append((power, const, red, frozen, None))
        if order >= 1:
            for j, sgn in shells:
                cj = const * a1 / (a1 + 1.0) * sgn
                terms.append((power + 1.0, cj, red, frozen, j))
    return terms


def eval_rho_regularized(spec, config, kappa, eps, level=2):
    """Trimmed simplex integral plus shell counterterms at one eps."""
    kappa = as_kappa(kappa)
    k = kappa.value
    spec = tuple(int(s) for s in spec)
    if spec[0] != 0:
        raise ValueError("base-point specs are not numerically evaluable")
    charges = config.charges
    gap = min(b - a for a, b in zip(charges[:-1], charges[1:]))
    if eps < 0 or eps >= 0.5 * gap:
        raise ValueError("eps must satisfy 0 <= eps < half the minimal gap")
    pref = _prefactor(config, kappa)
    # the trimmed edge puts an eps-scale boundary layer next to each
    # endpoint; node counts must grow as eps shrinks to keep resolving it
    if 0.0 < eps < 0.03 * gap:
        level = level + int(math.ceil(2.2 * math.log10(0.03 * gap / eps)))
    total = _trimmed_integral(config, kappa, spec, eps, level=level)
    if eps > 0:
        for power, const, red, frozen, ld in generate_counterterms(
            spec, config, kappa
        ):
            total += const * eps**power * _trimmed_integral(
                config, kappa, red, eps, frozen=frozen, logderiv_at=ld, level=level
            )
    return pref * total


def _fit_eps_limit(eps_vals, vals, powers):
    """Least-squares fit vals ~ c0 + sum_i c_i eps^p_i; returns (c0, err)."""
    eps_vals = np.asarray(eps_vals, dtype=float)
    vals = np.asarray(vals, dtype=float)
    cols = [np.ones(len(eps_vals))] + [eps_vals**p for p in powers]
    A = np.stack(cols, axis=1)
    scale = np.abs(A).max(axis=0)
    sol, *_ = np.linalg.lstsq(A / scale, vals, rcond=None)
    sol = sol / scale
    resid = np.abs(A @ sol - vals).max()
    # stability estimate: refit on the small-eps half of the grid
    half = max(len(powers) + 2, len(eps_vals) // 2)
    sol2, *_ = np.linalg.lstsq(A[-half:] / scale, vals[-half:], rcond=None)
    sol2 = sol2 / scale
    err = resid + abs(sol[0] - sol2[0])
    return sol[0], err


def fit_exponent(N, kappa):
    """Smallest unsubtracted eps-power; must be positive for convergence."""
    k = as_kappa(kappa).value
    a1 = 1.0 - 8.0 / k
    m = N if a1 < 0 else 1
    return m * a1 + 2.0


def fit_exponents(N, kappa, cutoff=2.6):
    """Ascending unsubtracted eps-powers kept in the extrapolation fit.

    With shells subtracted through Taylor order 1 and corners at leading
    order, every residual class (higher Taylor terms of shells and
    corners, and their products) carries a power of the form
    m(1-8/k) + j with 1 <= m <= N and j in {2, 3}.
    """
    k = as_kappa(kappa).value
    a1 = 1.0 - 8.0 / k
    cand = [m * a1 + j for m in range(1, N + 1) for j in (2.0, 3.0)]
    if N >= 3:
        cand.append(3.0)  # triple-shell clusters carry a pure cubic power
    powers = []
    for p in sorted(cand):
        if p <= 0 or p > cutoff:
            continue
        if not any(abs(p - p0) < 1e-9 for p0 in powers):
            powers.append(p)
    return powers


def eval_amplitude_real(N, omega, config, kappa, eps_grid=None, level=2):
    """Boundary visit amplitude via regularized real integrals."""
    order = omega if isinstance(omega, VisitOrder) else VisitOrder(omega)
    kappa = as_kappa(kappa)
    k = kappa.value
    if fit_exponent(N, kappa) <= 0:
        raise ValueError("kappa outside the convergence range of this scheme")
    powers = fit_exponents(N, kappa)
    combo = real_combination(N, order, kappa, config=config)
    charges = config.charges
    gap = min(b - a for a, b in zip(charges[:-1], charges[1:]))
    if k > 8.0:
        total = sum(c * eval_rho_regularized(s, config, kappa, 0.0, level=level)
                    for s, c in combo.items())
        check = sum(
            c * eval_rho_regularized(s, config, kappa, 1e-3 * gap, level=level)
            for s, c in combo.items()
        )
        return AmplitudeValue(total, abs(total - check), "real_regularized")
    if eps_grid is None:
        eps_grid = np.geomspace(1e-1 * gap, 2e-3 * gap, 8)
    eps_grid = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    vals = []
    for eps in eps_grid:
        vals.append(
            sum(c * eval_rho_regularized(s, config, kappa, float(eps), level=level)
                for s, c in combo.items())
        )
    c0, resid = _fit_eps_limit(eps_grid, np.asarray(vals), powers)
    return AmplitudeValue(c0, resid, "real_regularized")
