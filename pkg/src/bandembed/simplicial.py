"""Finite simplicial complexes, subdivision, approximation by simplicial maps and
generic perturbation to embeddings.

A point of a complex is a carrier simplex (tuple of vertex ids) with barycentric
weights.  Batches of points use two arrays of equal shape, vertex ids and weights,
padded with weight zero.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls


class Complex:
    """A finite simplicial complex given by its maximal simplices.

    `coords` (optional) places the vertices in some R^d; it is only used to
    check non-degeneracy and to give subdivided vertices a position.
    """

    def __init__(self, n_vertices, simplices, coords=None):
        self.n_vertices = int(n_vertices)
        simp = {tuple(sorted(int(v) for v in s)) for s in simplices}
        # drop simplices that are faces of others
        proper = {f for t in simp for r in range(1, len(t)) for f in itertools.combinations(t, r)}
        self.maximal = sorted(s for s in simp if s not in proper)
        for s in self.maximal:
            if any(v < 0 or v >= self.n_vertices for v in s):
                raise ValueError("simplex refers to a missing vertex")
        used = {v for s in self.maximal for v in s}
        for v in range(self.n_vertices):
            if v not in used:
                self.maximal.append((v,))
        self.maximal.sort()
        self.coords = None if coords is None else np.asarray(coords, dtype=float).reshape(self.n_vertices, -1)

    @property
    def dim(self):
        return max(len(s) for s in self.maximal) - 1

    def faces(self):
        out = set()
        for s in self.maximal:
            for r in range(1, len(s) + 1):
                out.update(itertools.combinations(s, r))
        return sorted(out, key=lambda f: (len(f), f))

    def is_nondegenerate(self, tol=1e-12):
        if self.coords is None:
            return True
        for s in self.maximal:
            if len(s) > 1:
                d = self.coords[list(s[1:])] - self.coords[s[0]]
                if np.linalg.svd(d, compute_uv=False).min() <= tol:
                    return False
        return True

    def subcomplex(self, vertices):
        """Full subcomplex on a vertex set."""
        vs = set(int(v) for v in vertices)
        simp = [f for f in self.faces() if set(f) <= vs]
        return Complex(self.n_vertices, simp or [(min(vs),)], self.coords)

    @classmethod
    def circle(cls, n):
        if n < 3:
            raise ValueError("a triangulated circle needs at least 3 vertices")
        ang = 2 * np.pi * np.arange(n) / n
        return cls(n, [(i, (i + 1) % n) for i in range(n)], np.stack([np.cos(ang), np.sin(ang)], axis=1))

    @classmethod
    def simplex(cls, d):
        return cls(d + 1, [tuple(range(d + 1))], np.vstack([np.zeros(d), np.eye(d)]) if d else np.zeros((1, 1)))


def subdivide(cx: Complex):
    """Barycentric subdivision; returns the new complex and the face -> new vertex map."""
    faces = cx.faces()
    index = {f: i for i, f in enumerate(faces)}
    simp = []
    for s in cx.maximal:
        for perm in itertools.permutations(s):
            chain = [tuple(sorted(perm[:j])) for j in range(1, len(perm) + 1)]
            simp.append(tuple(index[c] for c in chain))
    coords = None
    if cx.coords is not None:
        coords = np.array([cx.coords[list(f)].mean(axis=0) for f in faces])
    return Complex(len(faces), simp, coords), index


def refine_points(verts, weights, face_index):
    """Carrier and weights of the same points in the barycentric subdivision.

    With the weights sorted in decreasing order b_1 >= b_2 >= ..., the barycentre of
    the first j vertices gets weight j (b_j - b_{j+1}).
    """
    verts = np.asarray(verts, dtype=np.int64)
    weights = np.asarray(weights, dtype=float)
    S, d = verts.shape
    order = np.argsort(-weights, axis=1, kind="stable")
    v = np.take_along_axis(verts, order, axis=1)
    w = np.take_along_axis(weights, order, axis=1)
    nxt = np.concatenate([w[:, 1:], np.zeros((S, 1))], axis=1)
    neww = np.arange(1, d + 1)[None, :] * (w - nxt)
    # prefix faces, cut at the last positive weight, padded with -1 and sorted
    nz = np.maximum((w > 0).sum(axis=1), 1)
    length = np.minimum(np.arange(1, d + 1)[None, :], nz[:, None])
    pref = np.where(np.arange(d)[None, None, :] < length[:, :, None], v[:, None, :], -1)
    pref = np.sort(pref, axis=2)[:, :, ::-1]
    uniq, inv = np.unique(pref.reshape(S * d, d), axis=0, return_inverse=True)
    lut = np.array([face_index[tuple(sorted(int(x) for x in row if x >= 0))] for row in uniq], dtype=np.int64)
    newv = lut[inv.reshape(-1)].reshape(S, d)
    return newv, neww


@dataclass
class VertexMap:
    """A simplicial map: one image per vertex, extended affinely on simplices."""
    complex: Complex
    images: np.ndarray

    @property
    def n(self):
        return self.images.shape[1]

    def eval(self, verts, weights):
        verts = np.asarray(verts, dtype=np.int64)
        weights = np.asarray(weights, dtype=float)
        return np.einsum("sj,sjn->sn", weights, self.images[verts])


@dataclass
class ApproxResult:
    vmap: VertexMap
    verts: np.ndarray
    weights: np.ndarray
    rounds: int
    error: float
    star_diam: float


def approximate(cx: Complex, verts, weights, fvals, delta, close_pairs=None, max_rounds=8):
    """Simplicial g with |f(x) - g(pi(x))| < delta on the samples (approximation lemma).

    verts/weights give pi(x) for each sample, fvals the values f(x).  close_pairs lists
    the sample pairs with d(x, y) < eps; the modulus condition is checked on them.
    The complex is subdivided until every open star carries f-values of sup-diameter
    below delta; g(v) is the f-value of the sample sitting deepest in the star of v.
    """
    fvals = np.asarray(fvals, dtype=float)
    verts = np.asarray(verts, dtype=np.int64)
    weights = np.asarray(weights, dtype=float)
    if close_pairs is not None and len(close_pairs):
        cp = np.asarray(close_pairs, dtype=np.int64)
        gap = np.abs(fvals[cp[:, 0]] - fvals[cp[:, 1]]).max()
        if gap >= delta:
            raise ValueError(f"modulus condition fails on the sample: {gap:.3g} >= {delta}")
    rounds = 0
    while True:
        V = cx.n_vertices
        n = fvals.shape[1]
        hi = np.full((V, n), -np.inf)
        lo = np.full((V, n), np.inf)
        live = weights > 0
        vv = verts[live]
        ss = np.nonzero(live)[0]
        ww = weights[live]
        np.maximum.at(hi, vv, fvals[ss])
        np.minimum.at(lo, vv, fvals[ss])
        # representative: largest weight on v, ties to the smallest sample index
        pick = np.full(V, -1, dtype=np.int64)
        order = np.lexsort((ss, -ww, vv))
        first = np.unique(vv[order], return_index=True)
        pick[first[0]] = ss[order][first[1]]
        occupied = np.isfinite(hi[:, 0])
        diam = float((hi - lo)[occupied].max()) if occupied.any() else 0.0
        if diam < delta:
            break
        if rounds >= max_rounds:
            raise RuntimeError(f"subdivision cap of {max_rounds} rounds hit (star diameter {diam:.3g})")
        cx, fidx = subdivide(cx)
        verts, weights = refine_points(verts, weights, fidx)
        rounds += 1
    images = np.zeros((cx.n_vertices, fvals.shape[1]))
    images[pick >= 0] = fvals[pick[pick >= 0]]
    vm = VertexMap(cx, images)
    err = float(np.abs(vm.eval(verts, weights) - fvals).max()) if len(fvals) else 0.0
    return ApproxResult(vm, verts, weights, rounds, err, diam)


class ConeComplex:
    """CP: the base complex plus an apex joined to every simplex; F(t p) = t F(p)."""

    def __init__(self, base: Complex):
        self.base = base
        self.apex = base.n_vertices
        simp = [s + (self.apex,) for s in base.maximal]
        self.complex = Complex(base.n_vertices + 1, simp)

    @property
    def dim(self):
        return self.base.dim + 1

    def extend(self, vm: VertexMap) -> VertexMap:
        return VertexMap(self.complex, np.vstack([vm.images, np.zeros((1, vm.n))]))

    def point(self, t, verts, weights):
        """Cone point t p from base carriers: apex weight 1 - t, the rest scaled by t."""
        t = np.asarray(t, dtype=float).reshape(-1, 1)
        verts = np.asarray(verts, dtype=np.int64).reshape(len(t), -1)
        weights = np.asarray(weights, dtype=float).reshape(len(t), -1)
        v = np.concatenate([np.full((len(t), 1), self.apex), verts], axis=1)
        w = np.concatenate([1 - t, t * weights], axis=1)
        return v, w


# three-condition injectivity certificate

@dataclass
class Certificate:
    ok: bool
    failures: list
    margins: dict = field(default_factory=dict)


def _simplex_sets(cx: Complex, simplices=None):
    return [tuple(s) for s in (cx.faces() if simplices is None else simplices)]


def _hull_distance(A, B, W=1e4):
    """min |sum a_i A_i - sum b_j B_j| over two probability vectors."""
    na, nb = len(A), len(B)
    M = np.vstack([np.hstack([A.T, -B.T]),
                   np.r_[np.full(na, W), np.zeros(nb)][None, :],
                   np.r_[np.zeros(na), np.full(nb, W)][None, :]])
    rhs = np.r_[np.zeros(A.shape[1]), W, W]
    x, _ = nnls(M, rhs, maxiter=2000)
    return float(np.linalg.norm(A.T @ x[:na] - B.T @ x[na:]))


def _cone_gap(A, B, W=1e4):
    """min |sum a_i A_i - sum b_j B_j| with a a probability vector and b >= 0."""
    na, nb = len(A), len(B)
    M = np.vstack([np.hstack([A.T, -B.T]), np.r_[np.full(na, W), np.zeros(nb)][None, :]])
    rhs = np.r_[np.zeros(A.shape[1]), W]
    x, _ = nnls(M, rhs, maxiter=2000)
    return float(np.linalg.norm(A.T @ x[:na] - B.T @ x[na:]))


def certify_injective(images, simplices, coords=None, tol=1e-9) -> Certificate:
    """Injectivity of the affine extension on a subcomplex, by three finite checks.

    1. every simplex has affinely independent images;
    2. disjoint simplices have images at positive distance;
    3. simplices sharing a proper face: after projecting away the face's span, the
       cone over the remaining vertices of one meets the other's only at 0.
    """
    X = np.asarray(images, dtype=float)
    if coords is not None:
        X = X[:, list(coords)]
    simp = [tuple(s) for s in simplices]
    fails = []
    m_aff, m_dist, m_ang = math.inf, math.inf, math.inf
    for s in simp:
        if len(s) > 1:
            sv = np.linalg.svd(X[list(s[1:])] - X[s[0]], compute_uv=False).min()
            m_aff = min(m_aff, float(sv))
            if sv <= tol:
                fails.append(("affine", s))
    for s1, s2 in itertools.combinations(simp, 2):
        shared = sorted(set(s1) & set(s2))
        if not shared:
            d = _hull_distance(X[list(s1)], X[list(s2)])
            m_dist = min(m_dist, d)
            if d <= tol:
                fails.append(("distance", s1, s2))
            continue
        r1 = [v for v in s1 if v not in shared]
        r2 = [v for v in s2 if v not in shared]
        if not r1 or not r2:
            continue
        v0 = X[shared[0]]
        span = X[shared[1:]] - v0
        if len(span):
            q, _ = np.linalg.qr(span.T)
            proj = lambda y: y - (y @ q) @ q.T  # noqa: E731
        else:
            proj = lambda y: y  # noqa: E731
        A = proj(X[r1] - v0)
        B = proj(X[r2] - v0)
        scale = max(np.linalg.norm(A, axis=1).max(), 1e-300)
        g = _cone_gap(A / scale, B / max(np.linalg.norm(B, axis=1).max(), 1e-300))
        m_ang = min(m_ang, g)
        if g <= tol:
            fails.append(("angle", s1, s2))
    return Certificate(not fails, fails, {"affine": m_aff, "distance": m_dist, "angle": m_ang})


@dataclass
class PerturbResult:
    vmap: VertexMap
    seed: int
    attempts: int
    certificates: list
    max_shift: float


def generic_perturb(vm: VertexMap, required, eta, seed=0, retries=32, tol=1e-9) -> PerturbResult:
    """Seeded jitter of size <= eta, verified on each (simplices, coordinates) requirement.

    Each requirement needs dim < |coordinates| / 2.
    """
    for simplices, coords in required:
        d = max(len(s) for s in simplices) - 1
        if not d < len(coords) / 2:
            raise ValueError(f"dimension {d} is not below half of {len(coords)} coordinates")
    last = None
    for attempt in range(retries):
        rng = np.random.default_rng([seed, attempt])
        jit = rng.uniform(-eta, eta, vm.images.shape)
        cand = VertexMap(vm.complex, vm.images + jit)
        certs = [certify_injective(cand.images, s, c, tol) for s, c in required]
        if all(c.ok for c in certs):
            return PerturbResult(cand, seed, attempt + 1, certs, float(np.abs(jit).max()))
        last = next(c for c in certs if not c.ok)
    raise RuntimeError(f"no injective perturbation in {retries} attempts; first failure {last.failures[0]}")


def sample_injectivity(vm: VertexMap, simplices, coords, n_pairs=10_000, seed=0):
    """Smallest image distance over random pairs of distinct points (a sampling witness)."""
    rng = np.random.default_rng(seed)
    simp = [tuple(s) for s in simplices]
    X = vm.images[:, list(coords)]
    best = math.inf

    def draw(m):
        picks = rng.integers(0, len(simp), m)
        out_p = []
        out_x = []
        for p in picks:
            s = simp[p]
            w = rng.dirichlet(np.ones(len(s)))
            out_p.append((s, w))
            out_x.append(w @ X[list(s)])
        return out_p, np.array(out_x)

    pa, xa = draw(n_pairs)
    pb, xb = draw(n_pairs)
    for (sa, wa), (sb, wb), ya, yb in zip(pa, pb, xa, xb):
        # source distance in barycentric terms; skip coincident points
        da = dict(zip(sa, wa))
        db = dict(zip(sb, wb))
        src = sum(abs(da.get(v, 0) - db.get(v, 0)) for v in set(da) | set(db))
        if src < 1e-6:
            continue
        best = min(best, float(np.linalg.norm(ya - yb)) / src)
    return best


# products with the staircase triangulation

def staircase(weights_per_factor):
    """Staircase decomposition of a point in a product of simplices.

    Factor f has ordered vertices 0..d_f with weights w_f.  Returns a list of
    (vertex index tuple, weight): walking u from 0 to 1, factor f sits at the
    vertex whose cumulative weight interval contains u.
    """
    cums = [np.cumsum(np.asarray(w, dtype=float)) for w in weights_per_factor]
    events = sorted((float(c[i]), f, i) for f, c in enumerate(cums) for i in range(len(c) - 1))
    cur = [0] * len(cums)
    out = []
    prev = 0.0
    for t, f, i in events:
        if t > prev:
            out.append((tuple(cur), t - prev))
            prev = t
        cur[f] = i + 1
    if 1.0 > prev:
        out.append((tuple(cur), 1.0 - prev))
    return out


class ProductComplex:
    """Product of complexes, triangulated by staircases over each product of simplices."""

    def __init__(self, factors, max_dim=6):
        self.factors = list(factors)
        d = sum(f.dim for f in self.factors)
        if d > max_dim:
            raise ValueError(f"product dimension {d} exceeds the cap {max_dim}")
        self.dim = d
        self.sizes = [f.n_vertices for f in self.factors]

    @property
    def n_vertices(self):
        return int(np.prod(self.sizes))

    def vertex_id(self, tup):
        return int(np.ravel_multi_index(tuple(int(v) for v in tup), self.sizes))

    def simplices_over(self, cells):
        """Staircase simplices of a product of simplices (one sorted simplex per factor)."""
        labels = [f for f, s in enumerate(cells) for _ in range(len(s) - 1)]
        seen = set()
        for perm in itertools.permutations(labels):
            if perm in seen:
                continue
            seen.add(perm)
            pos = [0] * len(cells)
            verts = [tuple(c[0] for c in cells)]
            for f in perm:
                pos[f] += 1
                verts.append(tuple(cells[g][pos[g]] for g in range(len(cells))))
            yield tuple(self.vertex_id(v) for v in verts)

    def complex(self) -> Complex:
        simp = []
        for cells in itertools.product(*[f.maximal for f in self.factors]):
            simp.extend(self.simplices_over(cells))
        return Complex(self.n_vertices, simp)


def eval_G(F: VertexMap, t, verts, weights):
    """G(p, q)(n + lambda) = F(p_n)(lambda) with the cone rule F(t p) = t F(p)."""
    return np.asarray(t, dtype=float).reshape(-1, 1) * F.eval(verts, weights)


# lazily jittered product map

_M64 = (1 << 64) - 1


def splitmix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _zigzag(n):
    n = int(n)
    return (n << 1) if n >= 0 else ((-n << 1) - 1)


class JitteredProductMap:
    """G + J on a product of cones, with J defined vertex by vertex from hashes.

    Every product vertex (one vertex per factor slot) gets the key XOR_s Z(s, v_s),
    with Z(s, apex) = 0 so slots at the apex drop out.  The jitter of coordinate c
    at that vertex is eta * (2 U - 1), U uniform from splitmix64(key ^ H(c)).  The
    map is evaluated through the staircase decomposition, so it is simplicial on the
    staircase triangulation and |J| <= eta everywhere.
    """

    def __init__(self, eta, seed=0):
        self.eta = float(eta)
        self.seed = int(seed) & _M64

    def slot_key(self, kind, slot, vertex):
        if vertex is None:
            return 0
        h = splitmix64(np.uint64(self.seed ^ ((_zigzag(slot) << 2 | kind) * 0x9E3779B97F4A7C15 & _M64)))
        return int(splitmix64(h ^ np.uint64(int(vertex) + 1)))

    def jitter(self, keys, coords):
        """(len(keys), len(coords)) jitter values."""
        keys = np.asarray([int(k) for k in keys], dtype=np.uint64)
        c = splitmix64(np.asarray([_zigzag(v) for v in coords], dtype=np.uint64) ^ np.uint64(0xD1B54A32D192ED03))
        u = splitmix64(keys[:, None] ^ c[None, :])
        return self.eta * (2.0 * (u >> np.uint64(11)).astype(float) / float(1 << 53) - 1.0)

    def decompose(self, slots):
        """slots: list of (kind, slot, ordered vertex ids with None for the apex, weights)."""
        parts = staircase([w for _, _, _, w in slots])
        table = [[self.slot_key(kind, slot, v) for v in vids] for kind, slot, vids, _ in slots]
        out = []
        for vt, wt in parts:
            key = 0
            for row, i in zip(table, vt):
                key ^= row[i]
            out.append((key, wt))
        return out

    def value(self, slots, coords):
        parts = self.decompose(slots)
        if not parts:
            return np.zeros(len(coords))
        keys = [p[0] for p in parts]
        wts = np.array([p[1] for p in parts])
        return wts @ self.jitter(keys, coords)
