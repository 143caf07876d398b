"""U_q(sl2) representation algebra.

Irreducible modules M_d, the coproduct action on tensor products
M_3^(x)R (x) M_2 (x) M_3^(x)L, Clebsch-Gordan embeddings/projections for the
pairs 3x3, 2x3, 3x2, and the constrained linear solver producing the
zig-zag coefficient vectors, one per (N, visit order).

Basis indexing: a coefficient key is the tuple of single-factor indices in
tensor order, i.e. (t_R, ..., t_1, d, s_1, ..., s_L) for the space
M_3^(x)R (x) M_2 (x) M_3^(x)L.  The reversal between tensor-factor order and
integration-variable order is handled in the contour module, not here.
"""

import cmath
import importlib.resources
import itertools
import json
import math

import numpy as np

from .specfun import Kappa, as_kappa

__all__ = [
    "QValue",
    "VisitOrder",
    "TensorVector",
    "q_int",
    "generator_action",
    "cg_project",
    "solve_zigzag_vector",
    "multiplicity",
    "reference_vector",
]


class DegenerateQError(Exception):
    pass


class RankDeficiencyError(Exception):
    pass


class QValue:
    """q = exp(4 pi i / kappa) together with its kappa."""

    __slots__ = ("q", "kappa")

    def __init__(self, kappa):
        self.kappa = as_kappa(kappa)
        self.q = cmath.exp(4j * math.pi / self.kappa.value)

    def __repr__(self):
        return f"QValue(kappa={self.kappa.value})"

    def __eq__(self, other):
        return isinstance(other, QValue) and other.kappa == self.kappa

    def __hash__(self):
        return hash(("QValue", self.kappa))


def as_qvalue(q):
    """Accept a QValue, a Kappa, a real kappa, or a unit-modulus complex q."""
    if isinstance(q, QValue):
        return q
    if isinstance(q, complex):
        if abs(abs(q) - 1.0) > 1e-9:
            raise ValueError("complex q must lie on the unit circle")
        phase = cmath.phase(q) % (2.0 * math.pi)
        if phase < 1e-12:
            raise DegenerateQError("q = 1 corresponds to kappa -> infinity")
        return QValue(4.0 * math.pi / phase)
    return QValue(q)


class VisitOrder:
    """Sequence of sides ('+' right / '-' left) in visit order."""

    __slots__ = ("sides",)

    def __init__(self, sides):
        if isinstance(sides, str):
            sides = tuple(sides)
        sides = tuple(sides)
        norm = []
        for s in sides:
            if s in ("+", "right", "R", "r"):
                norm.append("+")
            elif s in ("-", "left", "L", "l"):
                norm.append("-")
            else:
                raise ValueError(f"bad side symbol {s!r}")
        if not norm:
            raise ValueError("visit order must have N >= 1")
        self.sides = tuple(norm)

    @property
    def N(self):
        return len(self.sides)

    @property
    def R(self):
        return self.sides.count("+")

    @property
    def L(self):
        return self.sides.count("-")

    def drop(self, j):
        """Order with the (1-based) j-th visit removed."""
        s = self.sides[: j - 1] + self.sides[j:]
        return VisitOrder(s) if s else None

    def mirrored(self):
        return VisitOrder(tuple("-" if s == "+" else "+" for s in self.sides))

    def __str__(self):
        return "".join(self.sides)

    def __repr__(self):
        return f"VisitOrder({''.join(self.sides)!r})"

    def __eq__(self, other):
        return isinstance(other, VisitOrder) and other.sides == self.sides

    def __hash__(self):
        return hash(self.sides)


def space_dims(L, R):
    return (3,) * R + (2,) + (3,) * L


class TensorVector:
    """Sparse vector in M_3^(x)R (x) M_2 (x) M_3^(x)L."""

    __slots__ = ("L", "R", "coeffs")

    def __init__(self, L, R, coeffs=None):
        self.L = int(L)
        self.R = int(R)
        self.coeffs = dict(coeffs or {})
        dims = self.dims
        for idx in self.coeffs:
            if len(idx) != len(dims) or any(
                not 0 <= i < d for i, d in zip(idx, dims)
            ):
                raise ValueError(f"index {idx} out of bounds for dims {dims}")

    @property
    def dims(self):
        return space_dims(self.L, self.R)

    @property
    def dim(self):
        return 2 * 3 ** (self.L + self.R)

    def to_dense(self):
        arr = np.zeros(self.dims, dtype=complex)
        for idx, c in self.coeffs.items():
            arr[idx] = c
        return arr

    @classmethod
    def from_dense(cls, L, R, arr, tol=0.0):
        arr = np.asarray(arr, dtype=complex).reshape(space_dims(L, R))
        coeffs = {}
        for idx in itertools.product(*(range(d) for d in space_dims(L, R))):
            c = arr[idx]
            if abs(c) > tol:
                coeffs[idx] = complex(c)
        return cls(L, R, coeffs)

    def norm(self):
        return math.sqrt(sum(abs(c) ** 2 for c in self.coeffs.values()))

    def weight_homogeneous(self, tol=1e-12):
        """True if all nonzero coefficients carry the same K-eigenvalue."""
        weights = {
            sum(d - 1 - 2 * j for j, d in zip(idx, self.dims))
            for idx, c in self.coeffs.items()
            if abs(c) > tol
        }
        return len(weights) <= 1

    def __repr__(self):
        return f"TensorVector(L={self.L}, R={self.R}, {len(self.coeffs)} terms)"


def q_int(m, q):
    """q-integer [m] = (q^m - q^-m)/(q - q^-1)."""
    qv = as_qvalue(q).q if not isinstance(q, complex) else q
    d = qv - 1.0 / qv
    if abs(d) < 1e-12:
        raise DegenerateQError("q - 1/q vanishes")
    return (qv**m - qv ** (-m)) / d


def _single_K(d, q, inv=False):
    e = np.array([q ** ((d - 1 - 2 * j) * (-1 if inv else 1)) for j in range(d)])
    return np.diag(e)


def _single_E(d, q):
    m = np.zeros((d, d), dtype=complex)
    for j in range(1, d):
        m[j - 1, j] = q_int(j, q) * q_int(d - j, q)
    return m


def _single_F(d):
    m = np.zeros((d, d), dtype=complex)
    for j in range(d - 1):
        m[j + 1, j] = 1.0
    return m


def _tensor_op(dims, gen, q):
    """Matrix of the iterated-coproduct generator action on prod(dims)."""
    n = len(dims)
    if gen == "K" or gen == "K^-1":
        mats = [[_single_K(d, q, inv=(gen == "K^-1")) for d in dims]]
    elif gen == "E":
        # E on factor i, K on factors after i
        mats = []
        for i in range(n):
            row = []
            for j, d in enumerate(dims):
                if j < i:
                    row.append(np.eye(d, dtype=complex))
                elif j == i:
                    row.append(_single_E(d, q))
                else:
                    row.append(_single_K(d, q))
            mats.append(row)
    elif gen == "F":
        # K^-1 on factors before i, F on factor i
        mats = []
        for i in range(n):
            row = []
            for j, d in enumerate(dims):
                if j < i:
                    row.append(_single_K(d, q, inv=True))
                elif j == i:
                    row.append(_single_F(d))
                else:
                    row.append(np.eye(d, dtype=complex))
            mats.append(row)
    else:
        raise ValueError(f"unknown generator {gen!r}")
    total = None
    for row in mats:
        m = row[0]
        for f in row[1:]:
            m = np.kron(m, f)
        total = m if total is None else total + m
    return total


def generator_action(gen, v, q):
    """Act with E, F, K or K^-1 on a TensorVector via the coproduct."""
    qv = as_qvalue(q).q
    mat = _tensor_op(v.dims, gen, qv)
    out = mat @ v.to_dense().reshape(-1)
    return TensorVector.from_dense(v.L, v.R, out, tol=0.0)


# Clebsch-Gordan embeddings: highest-weight images from the fixed
# normalization table, descended by the pair coproduct F.

def _pair_F(dl, dr, q):
    Fl, Fr = _single_F(dl), _single_F(dr)
    Kl_inv = _single_K(dl, q, inv=True)
    return np.kron(Fl, np.eye(dr)) + np.kron(Kl_inv, Fr)


def _highest_weight_image(dl, dr, d_sub, q):
    v = np.zeros((dl, dr), dtype=complex)
    if (dl, dr) == (3, 3):
        if d_sub == 1:
            c = 1.0 / (q**2 - q**-2) ** 2
            v[0, 2], v[1, 1], v[2, 0] = c, -c, c * q**-2
        elif d_sub == 3:
            c = 1.0 / (q**2 - q**-2)
            v[0, 1], v[1, 0] = -c * q**2, c
        elif d_sub == 5:
            v[0, 0] = 1.0
        else:
            raise ValueError("d_sub for 3x3 must be 1, 3 or 5")
    elif (dl, dr) == (2, 3):
        if d_sub == 2:
            v[0, 1] = q**4 / (1 - q**4)
            v[1, 0] = -q / (1 - q**2)
        elif d_sub == 4:
            v[0, 0] = 1.0
        else:
            raise ValueError("d_sub for 2x3 must be 2 or 4")
    elif (dl, dr) == (3, 2):
        if d_sub == 2:
            v[0, 1] = q**2 / (1 - q**2)
            v[1, 0] = -(q**2) / (1 - q**4)
        elif d_sub == 4:
            v[0, 0] = 1.0
        else:
            raise ValueError("d_sub for 3x2 must be 2 or 4")
    else:
        raise ValueError(f"unsupported pair {dl}x{dr}")
    return v.reshape(-1)


def _pair_summands(dl, dr):
    top = dl + dr - 1
    return list(range(top, abs(dl - dr), -2))


def _pair_maps(dl, dr, q):
    """Embedding and hatted-projection matrices for one tensor pair.

    Returns (embed, hat) dicts keyed by summand dimension d: embed[d] has
    shape (dl*dr, d) with F-descended columns; hat[d] has shape (d, dl*dr)
    and extracts the M_d coordinates (so embed[d] @ hat[d] is pi^(d)).
    """
    F = _pair_F(dl, dr, q)
    embed = {}
    cols = []
    key = []
    for d in _pair_summands(dl, dr):
        u = _highest_weight_image(dl, dr, d, q)
        block = np.zeros((dl * dr, d), dtype=complex)
        block[:, 0] = u
        for j in range(1, d):
            block[:, j] = F @ block[:, j - 1]
        embed[d] = block
        cols.append(block)
        key.extend([d] * d)
    A = np.concatenate(cols, axis=1)
    Ainv = np.linalg.inv(A)
    hat = {}
    row = 0
    for d in _pair_summands(dl, dr):
        hat[d] = Ainv[row : row + d, :]
        row += d
    return embed, hat


def _site_position(L, R, side, m):
    """Tensor-factor position (i, i+1) of a projection site.

    side in '+-'; m is the 1-based pair index for triplet pairs, or None
    for the doublet pair adjacent to the middle M_2.
    """
    if m is None:
        if side == "+":
            if R < 1:
                raise ValueError("no right factor for doublet site")
            return R - 1, (3, 2)
        if L < 1:
            raise ValueError("no left factor for doublet site")
        return R, (2, 3)
    if side == "+":
        if not 1 <= m <= R - 1:
            raise ValueError(f"right triplet pair m={m} out of range")
        return R - m - 1, (3, 3)
    if not 1 <= m <= L - 1:
        raise ValueError(f"left triplet pair m={m} out of range")
    return R + m, (3, 3)


def _lifted_map(L, R, side, m, d_sub, q, identify):
    """Full-space matrix of pi^(d) (or hatted pi) at the given site."""
    dims = space_dims(L, R)
    i, (dl, dr) = _site_position(L, R, side, m)
    assert dims[i] == dl and dims[i + 1] == dr
    embed, hat = _pair_maps(dl, dr, q)
    if d_sub not in embed:
        raise ValueError(f"d_sub={d_sub} not a summand of {dl}x{dr}")
    pair_mat = hat[d_sub] if identify else embed[d_sub] @ hat[d_sub]
    pre = int(np.prod(dims[:i], dtype=int))
    post = int(np.prod(dims[i + 2 :], dtype=int))
    return np.kron(np.eye(pre), np.kron(pair_mat, np.eye(post)))


def cg_project(d_sub, site, v, q, identify=False):
    """Project onto the M_{d_sub} summand at a consecutive-pair site.

    site = (side, m) with side in '+-' and m a 1-based triplet-pair index,
    or m None for the pair involving the middle doublet.  With identify
    set the hatted map into the shorter tensor product is returned.
    """
    qv = as_qvalue(q).q
    side, m = site
    mat = _lifted_map(v.L, v.R, side, m, d_sub, qv, identify)
    out = mat @ v.to_dense().reshape(-1)
    if not identify:
        return TensorVector.from_dense(v.L, v.R, out, tol=0.0)
    # shorter tensor product bookkeeping
    if m is None:
        if d_sub not in (2, 4):
            raise ValueError("doublet site takes d_sub in {2, 4}")
        newL, newR = (v.L, v.R - 1) if side == "+" else (v.L - 1, v.R)
        if d_sub == 2:
            return TensorVector.from_dense(newL, newR, out, tol=0.0)
        raise ValueError("hatted quadruplet image is not an M_2-chain vector")
    if d_sub == 3:
        newL, newR = (v.L, v.R - 1) if side == "+" else (v.L - 1, v.R)
        return TensorVector.from_dense(newL, newR, out, tol=0.0)
    if d_sub == 1:
        newL, newR = (v.L, v.R - 2) if side == "+" else (v.L - 2, v.R)
        return TensorVector.from_dense(newL, newR, out, tol=0.0)
    raise ValueError("hatted quintuplet image is not an M_3-chain vector")


def multiplicity(N):
    """Multiplicity of the doublet M_2 in M_3^(x)R (x) M_2 (x) M_3^(x)L."""
    if N < 1:
        raise ValueError("N >= 1 required")
    mult = {2: 1}
    for _ in range(N):
        new = {}
        for d, c in mult.items():
            for ds in _pair_summands(3, d):
                new[ds] = new.get(ds, 0) + c
        mult = new
    return mult.get(2, 0)


def _right_pair_successive(order, side, m):
    """Is the (m, m+1) consecutive pair on the given side successively visited?"""
    positions = [j for j, s in enumerate(order.sides, start=1) if s == side]
    j1, j2 = positions[m - 1], positions[m]
    return j2 == j1 + 1, j1


_solver_cache = {}


def solve_zigzag_vector(N, order, q, _tol=1e-9):
    """The unique zig-zag vector for (N, order) at the given q.

    Assembles highest-weight, weight, projection and normalization
    constraints into one linear system and solves it by least squares,
    asserting a one-dimensional solution space and small residual.
    """
    order = order if isinstance(order, VisitOrder) else VisitOrder(order)
    if order.N != N:
        raise ValueError("N does not match order length")
    qval = as_qvalue(q)
    key = (order.sides, round(qval.kappa.value, 12))
    if key in _solver_cache:
        return _solver_cache[key]
    qv = qval.q
    L, R = order.L, order.R
    dims = space_dims(L, R)
    dim = int(np.prod(dims, dtype=int))

    rows = []
    rhs = []

    K = _tensor_op(dims, "K", qv)
    rows.append(K - qv * np.eye(dim))
    rhs.append(np.zeros(dim))
    rows.append(_tensor_op(dims, "E", qv))
    rhs.append(np.zeros(dim))

    # previous-level vector for the recursive normalization
    sub = order.drop(1)
    if sub is None:
        v_prev = np.array([1.0, 0.0], dtype=complex)
        prevL = prevR = 0
    else:
        prev = solve_zigzag_vector(N - 1, sub, qval, _tol)
        v_prev = prev.to_dense().reshape(-1)
        prevL, prevR = prev.L, prev.R

    first_side = order.sides[0]
    # triplet-pair conditions on each side
    for side, count in (("+", R), ("-", L)):
        for m in range(1, count):
            successive, j1 = _right_pair_successive(order, side, m)
            rows.append(_lifted_map(L, R, side, m, 1, qv, identify=True))
            rhs.append(np.zeros(rows[-1].shape[0]))
            hat3 = _lifted_map(L, R, side, m, 3, qv, identify=True)
            if successive:
                # hatted triplet image proportional to the collapsed-order
                # vector: annihilate the component orthogonal to it
                collapsed = solve_zigzag_vector(N - 1, order.drop(j1 + 1), qval, _tol)
                w = collapsed.to_dense().reshape(-1)
                w = w / np.linalg.norm(w)
                proj = np.eye(len(w)) - np.outer(w, w.conj())
                rows.append(proj @ hat3)
            else:
                rows.append(hat3)
            rhs.append(np.zeros(rows[-1].shape[0]))

    # doublet conditions: normalization on the first-visited side,
    # vanishing on the opposite side (when a point exists there)
    hat2 = _lifted_map(L, R, first_side, None, 2, qv, identify=True)
    rows.append(hat2)
    rhs.append(v_prev)
    opp = "-" if first_side == "+" else "+"
    if (opp == "+" and R >= 1) or (opp == "-" and L >= 1):
        rows.append(_lifted_map(L, R, opp, None, 2, qv, identify=True))
        rhs.append(np.zeros(rows[-1].shape[0]))

    A = np.concatenate(rows, axis=0)
    b = np.concatenate(rhs, axis=0)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < 1e-6 * sv[0]:
        raise RankDeficiencyError(
            f"solution space not one-dimensional at kappa={qval.kappa.value}"
        )
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = np.linalg.norm(A @ sol - b)
    scale = max(np.linalg.norm(b), np.linalg.norm(sol))
    if resid > _tol * max(scale, 1.0):
        raise RankDeficiencyError(
            f"constraint residual {resid:.2e} too large at kappa={qval.kappa.value}"
        )
    out = TensorVector.from_dense(L, R, sol, tol=1e-13 * max(1.0, np.abs(sol).max()))
    _solver_cache[key] = out
    return out


# Reference fixtures: transcribed explicit solutions, evaluated at q.

def _load_fixtures():
    path = importlib.resources.files("slevisit").joinpath("data/reference_vectors.json")
    with path.open() as f:
        return json.load(f)


_fixture_cache = None


def reference_vector(N, order, q):
    """Explicit transcribed solution vectors (all N <= 3, three N = 4 cases)."""
    global _fixture_cache
    order = order if isinstance(order, VisitOrder) else VisitOrder(order)
    qv = as_qvalue(q).q
    if _fixture_cache is None:
        _fixture_cache = _load_fixtures()
    for rec in _fixture_cache["vectors"]:
        if rec["N"] == N and rec["omega"] == str(order):
            break
    else:
        raise KeyError(f"no fixture for N={N}, omega={order}")
    pref = complex(eval(rec.get("prefactor_expr", "1"), {"q": qv}))
    coeffs = {}
    for term in rec["terms"]:
        c = complex(eval(term["coeff_expr"], {"q": qv})) * pref
        idx = tuple(term["index"])
        coeffs[idx] = coeffs.get(idx, 0.0) + c
    return TensorVector(order.L, order.R, coeffs)
