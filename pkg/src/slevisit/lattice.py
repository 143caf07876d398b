"""Monte Carlo samplers for three lattice interface models with
boundary-visit detection, histogram collection, conformal renormalization
and constant fitting.

Models: loop-erased random walk in the unit square (kappa=2), critical site
percolation exploration in the equilateral triangle (kappa=6), and the
critical FK random cluster model with Dobrushin boundary conditions in the
unit square (Q=2: kappa=16/3, Q=3: kappa=24/5).

Randomness is counter-based (Philox4x32-10) keyed by (seed, worker, sample),
so histograms are bit-reproducible for a fixed (seed, workers, partition)
regardless of thread scheduling.
"""

import math
import os
import warnings
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit, uint64


class LatticeError(Exception):
    pass


_SQRT3 = math.sqrt(3.0)


# --- counter-based RNG (Philox4x32-10) ---

_PH_M0 = np.uint64(0xD2511F53)
_PH_M1 = np.uint64(0xCD9E8D57)
_PH_W0 = np.uint32(0x9E3779B9)
_PH_W1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)


@njit(cache=True, nogil=True, inline="always")
def _philox4(c0, c1, c2, c3, k0, k1):
    """One Philox4x32-10 block; counters and keys are uint32 values."""
    x0, x1, x2, x3 = uint64(c0), uint64(c1), uint64(c2), uint64(c3)
    y0, y1 = uint64(k0), uint64(k1)
    for _ in range(10):
        p0 = _PH_M0 * x0
        p1 = _PH_M1 * x2
        h0, l0 = p0 >> uint64(32), p0 & _MASK32
        h1, l1 = p1 >> uint64(32), p1 & _MASK32
        nx0 = (h1 ^ x1 ^ y0) & _MASK32
        nx2 = (h0 ^ x3 ^ y1) & _MASK32
        x0, x1, x2, x3 = nx0, l1, nx2, l0
        y0 = (y0 + uint64(_PH_W0)) & _MASK32
        y1 = (y1 + uint64(_PH_W1)) & _MASK32
    return x0, x1, x2, x3


@njit(cache=True, nogil=True, inline="always")
def _u01(word):
    # uint32 word -> float in [0, 1)
    return float(word) * (1.0 / 4294967296.0)


def _rng_key(rng):
    """Normalize an int seed or a (seed, worker, sample) tuple to a key."""
    if isinstance(rng, (int, np.integer)):
        return (int(rng), 0, 0)
    seed, worker, sample = rng
    return (int(seed), int(worker), int(sample))


# --- model descriptor ---

class LatticeModel:
    """Interface model descriptor with derived SLE parameters."""

    _KINDS = ("lerw", "percolation", "fk")

    def __init__(self, kind, Q=None):
        kind = str(kind).strip().lower()
        if kind not in self._KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        if kind == "fk":
            if Q not in (2, 3):
                raise ValueError("FK model requires Q in {2, 3}")
        elif Q is not None:
            raise ValueError("Q only applies to the FK model")
        self.kind = kind
        self.Q = Q

    @property
    def kappa(self):
        if self.kind == "lerw":
            return 2.0
        if self.kind == "percolation":
            return 6.0
        return 4.0 * math.pi / math.acos(-math.sqrt(self.Q) / 2.0)

    @property
    def h(self):
        k = self.kappa
        return (8.0 - k) / k

    @property
    def p(self):
        """Critical bond weight (FK only)."""
        if self.kind != "fk":
            raise ValueError("p is defined for the FK model only")
        return math.sqrt(self.Q) / (1.0 + math.sqrt(self.Q))

    @property
    def domain(self):
        return "triangle" if self.kind == "percolation" else "square"

    def __repr__(self):
        if self.kind == "fk":
            return f"LatticeModel('fk', Q={self.Q})"
        return f"LatticeModel({self.kind!r})"

    def __eq__(self, other):
        return (isinstance(other, LatticeModel)
                and self.kind == other.kind and self.Q == other.Q)


class LatticePath:
    """A sampled interface: model kind, mesh, and model-specific data."""

    def __init__(self, kind, delta, data):
        self.kind = kind
        self.delta = delta
        self.data = data

    def __len__(self):
        return len(self.data)


def _mesh_n(delta, minimum=2):
    n = 1.0 / float(delta)
    if abs(n - round(n)) > 1e-9 or round(n) < minimum:
        raise ValueError(f"1/delta must be an integer >= {minimum}")
    return int(round(n))


def _cache_dir():
    d = os.environ.get("SLEVISIT_CACHE_DIR")
    if not d:
        d = os.path.join(os.path.expanduser("~"), ".cache", "slevisit")
    os.makedirs(d, exist_ok=True)
    return d


# --- loop-erased random walk in the unit square ---

def _lerw_harmonic(n):
    """P[interior walk hits the boundary next to the top-right corner],
    solved once per mesh and cached to disk."""
    path = os.path.join(_cache_dir(), f"lerw_harmonic_{n}.npy")
    if os.path.exists(path):
        H = np.load(path)
        if H.shape == (n + 1, n + 1):
            return H
    from scipy.sparse import lil_matrix
    from scipy.sparse.linalg import spsolve

    m = n - 1  # interior vertices per row
    idx = lambda i, j: (i - 1) * m + (j - 1)
    A = lil_matrix((m * m, m * m))
    b = np.zeros(m * m)
    for i in range(1, n):
        for j in range(1, n):
            r = idx(i, j)
            A[r, r] = 4.0
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 1 <= ii < n and 1 <= jj < n:
                    A[r, idx(ii, jj)] = -1.0
                elif (ii, jj) in ((n, n - 1), (n - 1, n)):
                    b[r] += 1.0
    sol = spsolve(A.tocsr(), b)
    H = np.zeros((n + 1, n + 1))
    H[1:n, 1:n] = sol.reshape(m, m)
    H[n, n - 1] = 1.0
    H[n - 1, n] = 1.0
    np.save(path, H)
    return H


_LERW_TABLES = {}


def _lerw_tables(n):
    """(cumulative transition probs, neighbor ids, exit flags) per mesh."""
    if n in _LERW_TABLES:
        return _LERW_TABLES[n]
    H = _lerw_harmonic(n)
    V = (n + 1) * (n + 1)
    vid = lambda i, j: i * (n + 1) + j
    cum = np.zeros((V, 4))
    nbr = np.zeros((V, 4), dtype=np.int32)
    is_exit = np.zeros(V, dtype=np.uint8)
    is_exit[vid(n, n - 1)] = 1
    is_exit[vid(n - 1, n)] = 1
    for i in range(1, n):
        for j in range(1, n):
            w = np.empty(4)
            for d, (di, dj) in enumerate(((1, 0), (-1, 0), (0, 1), (0, -1))):
                nbr[vid(i, j), d] = vid(i + di, j + dj)
                w[d] = H[i + di, j + dj]
            tot = w.sum()
            if tot <= 0.0:
                raise LatticeError("harmonic solve produced a dead vertex")
            cum[vid(i, j)] = np.cumsum(w / tot)
    _LERW_TABLES[n] = (cum, nbr, is_exit)
    return _LERW_TABLES[n]


@njit(cache=True, nogil=True)
def _lerw_path_kernel(n, cum, nbr, is_exit, seed, worker, sample, path, idxmap):
    """One conditioned walk with online chronological loop erasure.

    Fills `path` with vertex ids of the loop-erased path and returns its
    length; `idxmap` is scratch (all -1 on entry, restored on exit).
    """
    v = 1 * (n + 1) + 1
    plen = 0
    path[plen] = v
    idxmap[v] = plen
    plen += 1
    ctr = uint64(0)
    r0 = r1 = r2 = r3 = uint64(0)
    nleft = 0
    for _ in range(1 << 40):
        if nleft == 0:
            r0, r1, r2, r3 = _philox4(ctr & _MASK32, (ctr >> uint64(32)) & _MASK32,
                                      uint64(sample) & _MASK32, (uint64(sample) >> uint64(32)) & _MASK32,
                                      uint64(seed) & _MASK32, uint64(worker) & _MASK32)
            ctr += uint64(1)
            nleft = 4
        if nleft == 4:
            word = r0
        elif nleft == 3:
            word = r1
        elif nleft == 2:
            word = r2
        else:
            word = r3
        nleft -= 1
        u = _u01(word)
        d = 0
        while d < 3 and u >= cum[v, d]:
            d += 1
        w = nbr[v, d]
        if is_exit[w]:
            break
        old = idxmap[w]
        if old >= 0:
            for t in range(old + 1, plen):
                idxmap[path[t]] = -1
            plen = old + 1
        else:
            path[plen] = w
            idxmap[w] = plen
            plen += 1
        v = w
    for t in range(plen):
        idxmap[path[t]] = -1
    return plen


@njit(cache=True, nogil=True)
def _count_tuples(visited, nv, N, M, counts):
    """Increment ordered-tuple counts for sites in first-visit order."""
    if N == 1:
        for a in range(nv):
            counts[visited[a]] += 1
    elif N == 2:
        for a in range(nv):
            for b in range(a + 1, nv):
                counts[visited[a] * M + visited[b]] += 1
    else:
        for a in range(nv):
            for b in range(a + 1, nv):
                for c in range(b + 1, nv):
                    counts[(visited[a] * M + visited[b]) * M + visited[c]] += 1


@njit(cache=True, nogil=True)
def _lerw_worker(n, cum, nbr, is_exit, site_of_vertex, M, N, nsamples,
                 seed, worker, counts):
    V = (n + 1) * (n + 1)
    path = np.empty(V, dtype=np.int64)
    idxmap = np.full(V, -1, dtype=np.int64)
    visited = np.empty(M, dtype=np.int64)
    for s in range(nsamples):
        plen = _lerw_path_kernel(n, cum, nbr, is_exit, seed, worker, s,
                                 path, idxmap)
        nv = 0
        for t in range(plen):
            si = site_of_vertex[path[t]]
            if si >= 0:
                visited[nv] = si
                nv += 1
        _count_tuples(visited, nv, N, M, counts)


def _lerw_site_vertex(n, site):
    side, k = int(site[0]), int(site[1])
    if not 1 <= k <= n - 1:
        raise ValueError(f"site index {k} outside the boundary layer")
    if side == 0:
        i, j = k, 1
    elif side == 1:
        i, j = n - 1, k
    elif side == 2:
        i, j = k, n - 1
    elif side == 3:
        i, j = 1, k
    else:
        raise ValueError(f"unknown side {side}")
    return i * (n + 1) + j


def lerw_sample(delta, rng):
    """One loop-erased conditioned walk; path vertices in lattice units."""
    n = _mesh_n(delta, minimum=16)
    seed, worker, sample = _rng_key(rng)
    cum, nbr, is_exit = _lerw_tables(n)
    V = (n + 1) * (n + 1)
    path = np.empty(V, dtype=np.int64)
    idxmap = np.full(V, -1, dtype=np.int64)
    plen = _lerw_path_kernel(n, cum, nbr, is_exit, seed, worker, sample,
                             path, idxmap)
    verts = np.stack([path[:plen] // (n + 1), path[:plen] % (n + 1)], axis=1)
    return LatticePath("lerw", delta, verts)


# --- percolation exploration in the equilateral triangle ---
#
# Vertices (j, k): row j = 0..n from the bottom, k = 0..n-j from the left;
# position -1/2 + (j/2 + k) delta + i j delta sqrt(3)/2.  Faces: upward
# triangle (j,k) = {(j,k),(j,k+1),(j+1,k)}, downward (j,k) =
# {(j,k+1),(j+1,k),(j+1,k+1)}.  Vertex id = j*(n+1)+k.

def _perc_forced_colors(n):
    """Boundary colors: white (1) on the left half, black (2) on the right;
    the bottom-center vertex of an even mesh counts as white."""
    colf = np.zeros((n + 1) * (n + 1), dtype=np.uint8)
    for k in range(n + 1):  # bottom row
        colf[k] = 1 if 2 * k <= n else 2
    for j in range(1, n + 1):
        colf[j * (n + 1) + 0] = 1  # left edge
        colf[j * (n + 1) + (n - j)] = 2 if j < n else 1  # right edge; apex unused
    return colf


@njit(cache=True, nogil=True)
def _perc_path_kernel(n, color, seed, worker, sample, fo, fj, fk, force):
    """One exploration path; colors revealed lazily via the keyed stream.

    Fills (fo, fj, fk) with the visited faces in order, returns the count.
    `color` carries forced boundary colors and is mutated.  `force` != 0
    paints every free site that color (deterministic test limits).
    """
    kl = n // 2
    va = 0 * (n + 1) + kl        # white endpoint of the start edge
    vb = 0 * (n + 1) + kl + 1    # black endpoint
    o, j, k = 0, 0, kl           # current face (orientation, row, slot)
    ctr = uint64(0)
    nv = 0
    for _ in range((n + 2) * (n + 2) * 4):
        # face vertices
        if o == 0:
            f1 = j * (n + 1) + k
            f2 = j * (n + 1) + k + 1
            f3 = (j + 1) * (n + 1) + k
        else:
            f1 = j * (n + 1) + k + 1
            f2 = (j + 1) * (n + 1) + k
            f3 = (j + 1) * (n + 1) + k + 1
        c = f1
        if c == va or c == vb:
            c = f2
        if c == va or c == vb:
            c = f3
        fo[nv] = o
        fj[nv] = j
        fk[nv] = k
        nv += 1
        if c // (n + 1) == n:  # apex reached
            break
        col = color[c]
        if col == 0:
            if force != 0:
                col = force
            else:
                r0, _, _, _ = _philox4(ctr & _MASK32, ctr >> uint64(32),
                                       uint64(sample) & _MASK32,
                                       (uint64(sample) >> uint64(32)) & _MASK32,
                                       uint64(seed) & _MASK32,
                                       uint64(worker) & _MASK32)
                ctr += uint64(1)
                col = 1 if r0 < uint64(2147483648) else 2
            color[c] = col
        if col == 1:
            va = c
        else:
            vb = c
        # move to the other face containing the updated edge (va, vb)
        ja, ka = va // (n + 1), va % (n + 1)
        jb, kb = vb // (n + 1), vb % (n + 1)
        if ja == jb:  # horizontal edge: up(j,kmin) / down(j-1,kmin)
            km = ka if ka < kb else kb
            if o == 0 and j == ja and k == km:
                o, j, k = 1, ja - 1, km
            else:
                o, j, k = 0, ja, km
        else:
            if ja < jb:
                jl, klo = ja, ka
                kh = kb
            else:
                jl, klo = jb, kb
                kh = ka
            if kh == klo:  # left-leaning edge: up(jl,klo) / down(jl,klo-1)
                if o == 0 and j == jl and k == klo:
                    o, j, k = 1, jl, klo - 1
                else:
                    o, j, k = 0, jl, klo
            else:  # right-leaning edge: up(jl,kh) / down(jl,kh)
                if o == 0:
                    o, j, k = 1, jl, kh
                else:
                    o, j, k = 0, jl, kh
    return nv


@njit(cache=True, nogil=True)
def _perc_worker(n, colf, site_of_face, M, N, nsamples, seed, worker, counts):
    V = (n + 1) * (n + 1)
    cap = (n + 2) * (n + 2) * 4
    color = np.empty(V, dtype=np.uint8)
    fo = np.empty(cap, dtype=np.int64)
    fj = np.empty(cap, dtype=np.int64)
    fk = np.empty(cap, dtype=np.int64)
    visited = np.empty(M, dtype=np.int64)
    seen = np.zeros(M, dtype=np.uint8)
    for s in range(nsamples):
        color[:] = colf
        nf = _perc_path_kernel(n, color, seed, worker, s, fo, fj, fk, 0)
        nv = 0
        for t in range(nf):
            fid = (fo[t] * n + fj[t]) * n + fk[t]
            si = site_of_face[fid]
            if si >= 0 and seen[si] == 0:
                seen[si] = 1
                visited[nv] = si
                nv += 1
        for t in range(nv):
            seen[visited[t]] = 0
        _count_tuples(visited, nv, N, M, counts)


def _perc_site_face(n, site):
    """Boundary site -> (orientation=0, j, k) of its visit face."""
    side, k = int(site[0]), int(site[1])
    if side == 0:
        if not 1 <= k <= n - 2:
            raise ValueError(f"bottom site {k} outside 1..{n - 2}")
        return (0, 0, k)
    if side == 3:
        if not 1 <= k <= n - 2:
            raise ValueError(f"left site {k} outside 1..{n - 2}")
        return (0, k, 0)
    if side == 1:
        if not 1 <= k <= n - 2:
            raise ValueError(f"right site {k} outside 1..{n - 2}")
        return (0, k, n - k - 1)
    raise ValueError(f"unknown side {side} for a triangle boundary site")


def percolation_sample(delta, rng, force_color=0):
    """One exploration path as an array of visited faces (orient, j, k)."""
    n = _mesh_n(delta)
    seed, worker, sample = _rng_key(rng)
    color = _perc_forced_colors(n).copy()
    cap = (n + 2) * (n + 2) * 4
    fo = np.empty(cap, dtype=np.int64)
    fj = np.empty(cap, dtype=np.int64)
    fk = np.empty(cap, dtype=np.int64)
    nf = _perc_path_kernel(n, color, seed, worker, sample, fo, fj, fk,
                           int(force_color))
    faces = np.stack([fo[:nf], fj[:nf], fk[:nf]], axis=1)
    return LatticePath("percolation", delta, faces)


def face_center(n, o, j, k):
    """Center of a triangular face, in domain coordinates (mesh 1/n)."""
    delta = 1.0 / n
    v = []
    if o == 0:
        ids = ((j, k), (j, k + 1), (j + 1, k))
    else:
        ids = ((j, k + 1), (j + 1, k), (j + 1, k + 1))
    for jj, kk in ids:
        v.append(complex(-0.5 + (jj / 2.0 + kk) * delta,
                         jj * delta * _SQRT3 / 2.0))
    return (v[0] + v[1] + v[2]) / 3.0


# --- FK random cluster model in the unit square (Swendsen-Wang) ---
#
# Vertices (x, y) with id x*(n+1)+y.  Horizontal edge (x,y)-(x+1,y) has id
# x*(n+1)+y; vertical edge (x,y)-(x,y+1) has id n*(n+1)+x*n+y.  Dobrushin
# conditioning wires the left (x=0) and top (y=n) boundaries: their edges
# are always present and their vertices are pre-merged in the cluster step.

def _fk_edges(n):
    V = (n + 1) * (n + 1)
    E = 2 * n * (n + 1)
    eu = np.empty(E, dtype=np.int64)
    ev = np.empty(E, dtype=np.int64)
    forced = np.zeros(E, dtype=np.uint8)
    for x in range(n):
        for y in range(n + 1):
            e = x * (n + 1) + y
            eu[e] = x * (n + 1) + y
            ev[e] = (x + 1) * (n + 1) + y
            if y == n:
                forced[e] = 1
    for x in range(n + 1):
        for y in range(n):
            e = n * (n + 1) + x * n + y
            eu[e] = x * (n + 1) + y
            ev[e] = x * (n + 1) + y + 1
            if x == 0:
                forced[e] = 1
    wired = np.zeros(V, dtype=np.uint8)
    for x in range(n + 1):
        for y in range(n + 1):
            if x == 0 or y == n:
                wired[x * (n + 1) + y] = 1
    return eu, ev, forced, wired


@njit(cache=True, nogil=True, inline="always")
def _uf_find(parent, v):
    while parent[v] != v:
        parent[v] = parent[parent[v]]
        v = parent[v]
    return v


@njit(cache=True, nogil=True)
def _sw_sweep(n, Q, p, bond, eu, ev, forced, wired, parent, colarr,
              seed, worker, sweep_id):
    """One Swendsen-Wang update of the conditioned random cluster state."""
    V = (n + 1) * (n + 1)
    E = bond.shape[0]
    for v in range(V):
        parent[v] = v
    for v in range(V):
        if wired[v]:
            rv = _uf_find(parent, v)
            r0 = _uf_find(parent, 0)
            if rv != r0:
                parent[rv] = r0
    for e in range(E):
        if bond[e]:
            ra = _uf_find(parent, eu[e])
            rb = _uf_find(parent, ev[e])
            if ra != rb:
                parent[ra] = rb
    ctr = uint64(0)
    for v in range(V):
        colarr[v] = np.int16(-1)
    for v in range(V):
        r = _uf_find(parent, v)
        if colarr[r] < 0:
            w0, _, _, _ = _philox4(ctr & _MASK32, ctr >> uint64(32),
                                   uint64(sweep_id) & _MASK32,
                                   (uint64(sweep_id) >> uint64(32)) & _MASK32,
                                   uint64(seed) & _MASK32,
                                   uint64(worker) & _MASK32)
            ctr += uint64(1)
            colarr[r] = np.int16(w0 % uint64(Q))
    for e in range(E):
        if forced[e]:
            bond[e] = 1
            continue
        ra = _uf_find(parent, eu[e])
        rb = _uf_find(parent, ev[e])
        if colarr[ra] == colarr[rb]:
            w0, _, _, _ = _philox4(ctr & _MASK32, ctr >> uint64(32),
                                   uint64(sweep_id) & _MASK32,
                                   (uint64(sweep_id) >> uint64(32)) & _MASK32,
                                   uint64(seed) & _MASK32,
                                   uint64(worker) & _MASK32)
            ctr += uint64(1)
            bond[e] = 1 if _u01(w0) < p else 0
        else:
            bond[e] = 0


@njit(cache=True, nogil=True)
def _fk_trace(n, bond, eu, ev, wired, parent, img, pts_x, pts_y):
    """Contour of the quarter-mesh thickening of the wired cluster.

    Walks the boundary of the union of half-mesh squares (cluster vertices)
    and half-mesh-wide arms (cluster bonds), with the region on the left,
    from the bottom-left corner lead-in to the top-right corner.  Returns
    the number of traced points.
    """
    V = (n + 1) * (n + 1)
    E = bond.shape[0]
    W = 4 * n + 2
    for v in range(V):
        parent[v] = v
    for v in range(V):
        if wired[v]:
            rv = _uf_find(parent, v)
            r0 = _uf_find(parent, 0)
            if rv != r0:
                parent[rv] = r0
    for e in range(E):
        if bond[e]:
            ra = _uf_find(parent, eu[e])
            rb = _uf_find(parent, ev[e])
            if ra != rb:
                parent[ra] = rb
    root = _uf_find(parent, 0)
    for i in range(W * W):
        img[i] = 0
    for v in range(V):
        if _uf_find(parent, v) == root:
            x = v // (n + 1)
            y = v % (n + 1)
            for a in range(4 * x, 4 * x + 2):
                for b in range(4 * y, 4 * y + 2):
                    img[a * W + b] = 1
    for e in range(E):
        if bond[e] and _uf_find(parent, eu[e]) == root:
            x = eu[e] // (n + 1)
            y = eu[e] % (n + 1)
            if ev[e] == eu[e] + (n + 1):  # horizontal
                for a in range(4 * x, 4 * x + 6):
                    for b in range(4 * y, 4 * y + 2):
                        img[a * W + b] = 1
            else:  # vertical
                for a in range(4 * x, 4 * x + 2):
                    for b in range(4 * y, 4 * y + 6):
                        img[a * W + b] = 1
    # corner walk, region kept on the left
    px, py = -1, -1
    d = 0  # 0=E 1=N 2=W 3=S
    npts = 0
    pts_x[npts] = px
    pts_y[npts] = py
    npts += 1
    for _ in range(16 * W * W):
        for _spin in range(4):
            if d == 0:
                fla, flb = px + 1, py + 1
                fra, frb = px + 1, py
            elif d == 1:
                fla, flb = px, py + 1
                fra, frb = px + 1, py + 1
            elif d == 2:
                fla, flb = px, py
                fra, frb = px, py + 1
            else:
                fla, flb = px + 1, py
                fra, frb = px, py
            fl = (0 <= fla < W and 0 <= flb < W and img[fla * W + flb] == 1)
            fr = (0 <= fra < W and 0 <= frb < W and img[fra * W + frb] == 1)
            if not fl:
                d = (d + 1) % 4
            elif fr:
                d = (d + 3) % 4
            else:
                break
        if d == 0:
            px += 1
        elif d == 1:
            py += 1
        elif d == 2:
            px -= 1
        else:
            py -= 1
        pts_x[npts] = px
        pts_y[npts] = py
        npts += 1
        if px == 4 * n + 1 and py == 4 * n + 1:
            break
    return npts


@njit(cache=True, nogil=True)
def _fk_worker(n, Q, p, eu, ev, forced, wired, site_of_point, M, N,
               nsamples, burnin, stride, seed, worker, counts):
    V = (n + 1) * (n + 1)
    E = eu.shape[0]
    W = 4 * n + 2
    WP = 4 * n + 3
    bond = forced.copy()
    parent = np.empty(V, dtype=np.int64)
    colarr = np.empty(V, dtype=np.int16)
    img = np.empty(W * W, dtype=np.uint8)
    cap = 16 * W * W
    pts_x = np.empty(cap, dtype=np.int64)
    pts_y = np.empty(cap, dtype=np.int64)
    visited = np.empty(M, dtype=np.int64)
    seen = np.zeros(M, dtype=np.uint8)
    sweep_id = 0
    for _ in range(burnin):
        _sw_sweep(n, Q, p, bond, eu, ev, forced, wired, parent, colarr,
                  seed, worker, sweep_id)
        sweep_id += 1
    for s in range(nsamples):
        for _ in range(stride):
            _sw_sweep(n, Q, p, bond, eu, ev, forced, wired, parent, colarr,
                      seed, worker, sweep_id)
            sweep_id += 1
        npts = _fk_trace(n, bond, eu, ev, wired, parent, img, pts_x, pts_y)
        nv = 0
        for t in range(npts):
            si = site_of_point[(pts_x[t] + 1) * WP + (pts_y[t] + 1)]
            if si >= 0 and seen[si] == 0:
                seen[si] = 1
                visited[nv] = si
                nv += 1
        for t in range(nv):
            seen[visited[t]] = 0
        _count_tuples(visited, nv, N, M, counts)


def _fk_site_point(n, site):
    """Boundary site -> traced contour point, in quarter-mesh units."""
    side, k = int(site[0]), int(site[1])
    if not 0 <= k <= n - 1:
        raise ValueError(f"site index {k} outside 0..{n - 1}")
    if side == 0:    # bottom, free: path dips outside at (k+1/2, -1/4)
        return (4 * k + 2, -1)
    if side == 1:    # right, free
        return (4 * n + 1, 4 * k + 2)
    if side == 2:    # top, wired: path comes delta/4 inside
        return (4 * k + 2, 4 * n - 1)
    if side == 3:    # left, wired
        return (1, 4 * k + 2)
    raise ValueError(f"unknown side {side}")


def fk_sample(Q, delta, sweeps, rng):
    """Swendsen-Wang chain state after `sweeps` updates, plus its interface.

    Returns (bond configuration, contour points in quarter-mesh units).
    """
    model = LatticeModel("fk", Q=Q)
    n = _mesh_n(delta)
    seed, worker, sample = _rng_key(rng)
    if sweeps < 10 * n:
        warnings.warn(f"sweeps={sweeps} below the burn-in default {10 * n}")
    eu, ev, forced, wired = _fk_edges(n)
    V = (n + 1) * (n + 1)
    bond = forced.copy()
    parent = np.empty(V, dtype=np.int64)
    colarr = np.empty(V, dtype=np.int16)
    for t in range(int(sweeps)):
        _sw_sweep(n, Q, model.p, bond, eu, ev, forced, wired, parent, colarr,
                  seed, worker, sample * max(int(sweeps), 1) + t)
    W = 4 * n + 2
    img = np.empty(W * W, dtype=np.uint8)
    pts_x = np.empty(16 * W * W, dtype=np.int64)
    pts_y = np.empty(16 * W * W, dtype=np.int64)
    npts = _fk_trace(n, bond, eu, ev, wired, parent, img, pts_x, pts_y)
    pts = np.stack([pts_x[:npts], pts_y[:npts]], axis=1)
    return bond, LatticePath("fk", delta, pts)


@njit(cache=True, nogil=True)
def _fk_enumerate_kernel(n, Q, p, eu, ev, forced, wired, free_ids, parent):
    """Exact edge marginals by summing over all free-edge configurations."""
    E = eu.shape[0]
    F = free_ids.shape[0]
    V = (n + 1) * (n + 1)
    bond = np.zeros(E, dtype=np.uint8)
    for e in range(E):
        if forced[e]:
            bond[e] = 1
    total = 0.0
    acc = np.zeros(E)
    w = p / (1.0 - p)
    for mask in range(1 << F):
        nopen = 0
        for i in range(F):
            b = (mask >> i) & 1
            bond[free_ids[i]] = b
            nopen += b
        for v in range(V):
            parent[v] = v
        for v in range(V):
            if wired[v]:
                rv = _uf_find(parent, v)
                r0 = _uf_find(parent, 0)
                if rv != r0:
                    parent[rv] = r0
        for e in range(E):
            if bond[e]:
                ra = _uf_find(parent, eu[e])
                rb = _uf_find(parent, ev[e])
                if ra != rb:
                    parent[ra] = rb
        k = 0
        for v in range(V):
            if _uf_find(parent, v) == v:
                k += 1
        weight = w ** nopen * float(Q) ** k
        total += weight
        for e in range(E):
            if bond[e]:
                acc[e] += weight
    return acc / total


def fk_edge_marginals(Q, delta):
    """Exact P[edge open] on a tiny mesh, by exhaustive enumeration."""
    model = LatticeModel("fk", Q=Q)
    n = _mesh_n(delta)
    eu, ev, forced, wired = _fk_edges(n)
    free_ids = np.array([e for e in range(len(eu)) if not forced[e]],
                        dtype=np.int64)
    if len(free_ids) > 24:
        raise ValueError("enumeration oracle limited to 24 free edges")
    parent = np.empty((n + 1) * (n + 1), dtype=np.int64)
    return _fk_enumerate_kernel(n, Q, model.p, eu, ev, forced, wired,
                                free_ids, parent)


@njit(cache=True, nogil=True)
def _fk_bond_freq_kernel(n, Q, p, eu, ev, forced, wired, nsamples, burnin,
                         stride, seed, worker, acc):
    V = (n + 1) * (n + 1)
    bond = forced.copy()
    parent = np.empty(V, dtype=np.int64)
    colarr = np.empty(V, dtype=np.int16)
    sweep_id = 0
    for _ in range(burnin):
        _sw_sweep(n, Q, p, bond, eu, ev, forced, wired, parent, colarr,
                  seed, worker, sweep_id)
        sweep_id += 1
    for _ in range(nsamples):
        for _ in range(stride):
            _sw_sweep(n, Q, p, bond, eu, ev, forced, wired, parent, colarr,
                      seed, worker, sweep_id)
            sweep_id += 1
        for e in range(bond.shape[0]):
            acc[e] += bond[e]


def fk_bond_frequencies(Q, delta, samples, seed=0, worker=0, burnin=None,
                        stride=2):
    """Empirical edge-occupation frequencies along the Swendsen-Wang chain."""
    model = LatticeModel("fk", Q=Q)
    n = _mesh_n(delta)
    if burnin is None:
        burnin = 10 * n
    eu, ev, forced, wired = _fk_edges(n)
    acc = np.zeros(len(eu), dtype=np.int64)
    _fk_bond_freq_kernel(n, Q, model.p, eu, ev, forced, wired, int(samples),
                         int(burnin), int(stride), seed, worker, acc)
    return acc / float(samples)


# --- visit detection on sampled paths ---

def detect_visits(path, model, sites):
    """First-visit record [(site, path index), ...] in traversal order.

    Sites are (side, k) pairs; sides are numbered 0=bottom, 1=right, 2=top,
    3=left (the triangle has no top side).
    """
    if not isinstance(path, LatticePath) or path.kind != model.kind:
        raise ValueError("path was sampled from a different model")
    n = _mesh_n(path.delta)
    out = []
    seen = set()
    if model.kind == "lerw":
        targets = {_lerw_site_vertex(n, s): s for s in sites}
        if len(targets) != len(sites):
            raise ValueError("duplicate sites (layer corners coincide)")
        for t, (i, j) in enumerate(path.data):
            v = i * (n + 1) + j
            s = targets.get(int(v))
            if s is not None and s not in seen:
                seen.add(s)
                out.append((s, t))
    elif model.kind == "percolation":
        targets = {_perc_site_face(n, s): s for s in sites}
        for t, (o, j, k) in enumerate(path.data):
            s = targets.get((int(o), int(j), int(k)))
            if s is not None and s not in seen:
                seen.add(s)
                out.append((s, t))
    else:
        targets = {_fk_site_point(n, s): s for s in sites}
        for t, (a, b) in enumerate(path.data):
            s = targets.get((int(a), int(b)))
            if s is not None and s not in seen:
                seen.add(s)
                out.append((s, t))
    return out


# --- histograms ---

class VisitHistogram:
    """Ordered-tuple visit counts for a fixed site list.

    counts maps N-tuples of (side, k) sites, in first-visit order along the
    interface, to the number of samples realizing that ordered visit.
    """

    def __init__(self, model, delta, N, sites, counts, samples, seed,
                 workers):
        self.model = model
        self.delta = float(delta)
        self.N = int(N)
        self.sites = [tuple(map(int, s)) for s in sites]
        self.counts = OrderedDict(counts)
        self.samples = int(samples)
        self.seed = int(seed)
        self.workers = int(workers)

    def merge(self, other):
        """Combine with a histogram over disjoint samples."""
        if (self.model != other.model or self.delta != other.delta
                or self.N != other.N or self.sites != other.sites):
            raise ValueError("histograms are not mergeable")
        counts = OrderedDict(self.counts)
        for key, c in other.counts.items():
            counts[key] = counts.get(key, 0) + c
        return VisitHistogram(self.model, self.delta, self.N, self.sites,
                              counts, self.samples + other.samples,
                              self.seed, self.workers)

    def to_csv(self, path):
        q = self.model.Q if self.model.Q is not None else ""
        with open(path, "w") as f:
            f.write("model,Q,delta,N,seed,samples\n")
            f.write(f"{self.model.kind},{q},{self.delta!r},{self.N},"
                    f"{self.seed},{self.samples}\n")
            cols = [f"site{i + 1}" for i in range(self.N)]
            f.write(",".join(cols + ["order", "count"]) + "\n")
            for key, c in self.counts.items():
                sig = _order_signature(key)
                cells = [f"{s[0]}:{s[1]}" for s in key] + [sig, str(c)]
                f.write(",".join(cells) + "\n")

    @classmethod
    def from_csv(cls, path):
        with open(path) as f:
            lines = [ln.strip() for ln in f if ln.strip()]
        meta = lines[1].split(",")
        kind, q = meta[0], meta[1]
        model = LatticeModel(kind, Q=int(q) if q else None)
        delta, N = float(meta[2]), int(meta[3])
        seed, samples = int(meta[4]), int(meta[5])
        counts = OrderedDict()
        sites = []
        seen_sites = set()
        for ln in lines[3:]:
            cells = ln.split(",")
            key = tuple(tuple(map(int, c.split(":"))) for c in cells[:N])
            counts[key] = int(cells[N + 1])
            for s in key:
                if s not in seen_sites:
                    seen_sites.add(s)
                    sites.append(s)
        return cls(model, delta, N, sites, counts, samples, seed, workers=1)


def _order_signature(key):
    """Visit-order signature: ranks of the tuple against boundary order."""
    ordered = sorted(range(len(key)), key=lambda i: key[i])
    rank = [0] * len(key)
    for r, i in enumerate(ordered):
        rank[i] = r + 1
    return "-".join(str(r) for r in rank)


def _partition(samples, workers):
    base, rem = divmod(int(samples), int(workers))
    return [base + (1 if w < rem else 0) for w in range(workers)]


def collect_histogram(model, delta, samples, sites, seed=0, workers=1, N=1):
    """Sample the model and histogram ordered visits to the given sites.

    Deterministic: a fixed (seed, workers) pair reproduces counts exactly,
    independent of thread scheduling.
    """
    if N not in (1, 2, 3):
        raise ValueError("N must be 1, 2 or 3")
    n = _mesh_n(delta)
    sites = [tuple(map(int, s)) for s in sites]
    if len(set(sites)) != len(sites):
        raise ValueError("duplicate sites")
    M = len(sites)

    if model.kind == "lerw":
        cum, nbr, is_exit = _lerw_tables(n)
        somap = np.full((n + 1) * (n + 1), -1, dtype=np.int64)
        for i, s in enumerate(sites):
            v = _lerw_site_vertex(n, s)
            if somap[v] >= 0:
                raise ValueError("duplicate sites (layer corners coincide)")
            somap[v] = i

        def run(w, ns, counts):
            _lerw_worker(n, cum, nbr, is_exit, somap, M, N, ns, seed, w,
                         counts)
    elif model.kind == "percolation":
        colf = _perc_forced_colors(n)
        somap = np.full(2 * n * n, -1, dtype=np.int64)
        for i, s in enumerate(sites):
            o, j, k = _perc_site_face(n, s)
            somap[(o * n + j) * n + k] = i

        def run(w, ns, counts):
            _perc_worker(n, colf, somap, M, N, ns, seed, w, counts)
    else:
        eu, ev, forced, wired = _fk_edges(n)
        WP = 4 * n + 3
        somap = np.full(WP * WP, -1, dtype=np.int64)
        for i, s in enumerate(sites):
            a, b = _fk_site_point(n, s)
            somap[(a + 1) * WP + (b + 1)] = i
        p = model.p

        def run(w, ns, counts):
            _fk_worker(n, model.Q, p, eu, ev, forced, wired, somap, M, N,
                       ns, 10 * n, 2, seed, w, counts)

    parts = _partition(samples, workers)
    buffers = [np.zeros(M ** N, dtype=np.int64) for _ in parts]
    if workers == 1:
        run(0, parts[0], buffers[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(run, w, parts[w], buffers[w])
                    for w in range(workers)]
            for f in futs:
                f.result()
    total = sum(buffers)
    counts = OrderedDict()
    for flat in np.flatnonzero(total):
        idx = []
        r = int(flat)
        for _ in range(N):
            idx.append(r % M)
            r //= M
        key = tuple(sites[i] for i in reversed(idx))
        counts[key] = int(total[flat])
    return VisitHistogram(model, delta, N, sites, counts, samples, seed,
                          workers)


# --- conformal renormalization and constant fitting ---

def site_position(model, delta, site):
    """Domain coordinate (boundary projection) of a visit site."""
    n = _mesh_n(delta)
    side, k = int(site[0]), int(site[1])
    d = 1.0 / n
    if model.kind == "lerw":
        pos = {0: k * d, 1: 1.0 + 1j * k * d, 2: k * d + 1j, 3: 1j * k * d}
    elif model.kind == "fk":
        pos = {0: (k + 0.5) * d, 1: 1.0 + 1j * (k + 0.5) * d,
               2: (k + 0.5) * d + 1j, 3: 1j * (k + 0.5) * d}
    else:
        if side == 0:
            return complex(-0.5 + (k + 0.5) * d, 0.0)
        if side == 3:
            return complex(-0.5 + (k + 0.5) * d / 2.0,
                           (k + 0.5) * d * _SQRT3 / 2.0)
        if side == 1:
            return complex(0.5 - (k + 0.5) * d / 2.0,
                           (k + 0.5) * d * _SQRT3 / 2.0)
        raise ValueError(f"unknown triangle side {side}")
    if side not in pos:
        raise ValueError(f"unknown side {side}")
    return complex(pos[side])


def renormalize(hist, dmap, h):
    """Corrected frequencies: count/samples divided by prod (|f'(x_j)| d)^h.

    Returns rows [(site tuple, half-plane images in visit order,
    corrected frequency, raw count)].
    """
    model, delta = hist.model, hist.delta
    cache = {}
    for s in hist.sites:
        u = site_position(model, delta, s)
        z = dmap.map(u)
        fp = abs(dmap.deriv(u))
        cache[s] = (z.real, fp)
    rows = []
    for key, c in hist.counts.items():
        freq = c / hist.samples
        corr = 1.0
        zs = []
        for s in key:
            z, fp = cache[s]
            zs.append(z)
            corr *= (fp * delta) ** h
        rows.append((key, tuple(zs), freq / corr, c))
    return rows


def fit_constant(rows, zeta_eval):
    """Least-squares fit of log(corrected) = log(c * zeta) over one shared c.

    zeta_eval maps a tuple of half-plane visit coordinates (in visit order)
    to the analytic amplitude.  Zero-count or zero-amplitude rows are
    excluded with a notice.  Returns (constant, residuals) with residuals a
    list of (site tuple, log corrected - log(c * zeta))."""
    logs = []
    kept = []
    dropped = 0
    for key, zs, corr, count in rows:
        zeta_val = zeta_eval(zs)
        if count <= 0 or corr <= 0.0 or zeta_val <= 0.0:
            dropped += 1
            continue
        logs.append(math.log(corr) - math.log(zeta_val))
        kept.append(key)
    if dropped:
        warnings.warn(f"excluded {dropped} zero rows from the constant fit")
    if not logs:
        raise LatticeError("no usable rows to fit")
    logc = float(np.mean(logs))
    resid = [(key, lg - logc) for key, lg in zip(kept, logs)]
    return math.exp(logc), resid


def parse_config(path):
    """key=value simulation config; values are kept as strings."""
    out = {}
    with open(path) as f:
        for ln in f:
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            if "=" not in ln:
                raise ValueError(f"malformed config line: {ln!r}")
            key, val = ln.split("=", 1)
            out[key.strip()] = val.strip()
    return out
