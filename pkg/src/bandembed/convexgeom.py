"""Convex tiles in R^1 and R^2: half-space intersection, erosion, Steiner volumes."""
from __future__ import annotations

import math

import numpy as np

BIG = 1e9


class Polytope:
    """Bounded convex set {x : normals @ x <= offsets} with its vertices.

    For k = 2 the vertices are a counter-clockwise cycle; for k = 1 they are
    the two endpoints.  Empty sets have no vertices.
    """

    def __init__(self, k, normals, offsets, vertices, empty=False):
        self.k = k
        self.normals = np.asarray(normals, dtype=float).reshape(-1, k)
        self.offsets = np.asarray(offsets, dtype=float).reshape(-1)
        self.vertices = np.asarray(vertices, dtype=float).reshape(-1, k)
        self.empty = bool(empty) or len(self.vertices) == 0

    def __repr__(self):
        if self.empty:
            return f"Polytope(k={self.k}, empty)"
        return f"Polytope(k={self.k}, n_vertices={len(self.vertices)}, volume={self.volume():.6g})"

    @classmethod
    def from_halfspaces(cls, normals, offsets):
        return halfspace_intersect(normals, offsets)

    @classmethod
    def box(cls, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        k = len(lo)
        eye = np.eye(k)
        return halfspace_intersect(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @classmethod
    def interval(cls, lo, hi):
        return cls.box([lo], [hi])

    @classmethod
    def hull(cls, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1 or pts.shape[1] == 1:
            p = pts.reshape(-1)
            return cls.interval(p.min(), p.max())
        cyc = convex_hull_2d(pts)
        if len(cyc) < 3:
            # degenerate: segment or point, kept as a vertex list with zero area
            return cls(2, np.zeros((0, 2)), np.zeros(0), cyc)
        normals, offsets = _edges_to_halfspaces(cyc)
        return cls(2, normals, offsets, cyc)

    # measures
    def volume(self):
        if self.empty:
            return 0.0
        if self.k == 1:
            return float(self.vertices[1, 0] - self.vertices[0, 0])
        v = self.vertices
        if len(v) < 3:
            return 0.0
        x, y = v[:, 0], v[:, 1]
        return float(0.5 * (x @ np.roll(y, -1) - y @ np.roll(x, -1)))

    def volume_from_halfspaces(self):
        """sum over facets of offset * facet measure / k (offsets relative to the origin)."""
        if self.empty:
            return 0.0
        if self.k == 1:
            return float(self.offsets.sum())
        total = 0.0
        for n, h in zip(self.normals, self.offsets):
            on = np.abs(self.vertices @ n - h) < 1e-9 * max(1.0, abs(h))
            if on.sum() >= 2:
                pts = self.vertices[on]
                length = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
                total += h * length
        return 0.5 * total

    def perimeter(self):
        """Boundary measure: edge length for k = 2, number of endpoints for k = 1."""
        if self.empty:
            return 0.0
        if self.k == 1:
            return 2.0
        v = self.vertices
        if len(v) == 1:
            return 0.0
        if len(v) == 2:
            return 2 * float(np.linalg.norm(v[1] - v[0]))
        return float(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1).sum())

    # membership and distances
    def contains(self, pts, tol=1e-9):
        pts = np.asarray(pts, dtype=float).reshape(-1, self.k)
        if self.empty:
            return np.zeros(len(pts), dtype=bool)
        if len(self.normals) == 0:
            return np.zeros(len(pts), dtype=bool)
        return np.all(pts @ self.normals.T <= self.offsets + tol, axis=1)

    def depth(self, pts):
        """min_i (offset_i - n_i.x): distance to the boundary for interior points."""
        pts = np.asarray(pts, dtype=float).reshape(-1, self.k)
        return (self.offsets[None, :] - pts @ self.normals.T).min(axis=1)

    def dist_to_set(self, pts):
        """Euclidean distance from points to the polytope (0 inside)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, self.k)
        if self.empty:
            return np.full(len(pts), np.inf)
        if self.k == 1:
            lo, hi = self.vertices[0, 0], self.vertices[1, 0]
            x = pts[:, 0]
            return np.maximum(0.0, np.maximum(lo - x, x - hi))
        out = _dist_to_cycle(pts, self.vertices)
        if len(self.vertices) >= 3:
            out[self.contains(pts, tol=0.0)] = 0.0
        return out

    def dist_to_boundary(self, pts):
        """Euclidean distance to the boundary (inside or outside)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, self.k)
        if self.empty:
            return np.full(len(pts), np.inf)
        if self.k == 1:
            lo, hi = self.vertices[0, 0], self.vertices[1, 0]
            return np.minimum(np.abs(pts[:, 0] - lo), np.abs(pts[:, 0] - hi))
        return _dist_to_cycle(pts, self.vertices)

    def translate(self, s):
        s = np.asarray(s, dtype=float).reshape(self.k)
        if self.empty:
            return self
        return Polytope(self.k, self.normals, self.offsets + self.normals @ s, self.vertices + s)

    def scale(self, c, center=None):
        center = np.zeros(self.k) if center is None else np.asarray(center, dtype=float)
        if self.empty:
            return self
        if c <= 0:
            raise ValueError("scale must be positive")
        off = c * (self.offsets - self.normals @ center) + self.normals @ center
        return Polytope(self.k, self.normals, off, center + c * (self.vertices - center))

    def centroid(self):
        if self.empty:
            return None
        if self.k == 1 or len(self.vertices) < 3:
            return self.vertices.mean(axis=0)
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        a = cr.sum() / 2
        return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6 * a)

    def inradius(self):
        """Radius of the largest inscribed ball (linear program via scipy)."""
        if self.empty or self.volume() <= 0:
            return 0.0
        from scipy.optimize import linprog

        k = self.k
        c = np.zeros(k + 1)
        c[-1] = -1
        A = np.hstack([self.normals, np.ones((len(self.normals), 1))])
        res = linprog(c, A_ub=A, b_ub=self.offsets, bounds=[(None, None)] * k + [(0, None)], method="highs")
        return float(res.x[-1]) if res.success else 0.0

    def to_dict(self):
        return {"k": self.k, "empty": self.empty, "vertices": self.vertices.tolist(),
                "normals": self.normals.tolist(), "offsets": self.offsets.tolist()}


def _dist_to_cycle(pts, v):
    if len(v) == 1:
        return np.linalg.norm(pts - v[0], axis=1)
    a = v
    b = np.roll(v, -1, axis=0)
    if len(v) == 2:
        a, b = v[:1], v[1:]
    best = np.full(len(pts), np.inf)
    for p, q in zip(a, b):
        d = q - p
        L2 = d @ d
        if L2 == 0:
            dist = np.linalg.norm(pts - p, axis=1)
        else:
            t = np.clip((pts - p) @ d / L2, 0, 1)
            dist = np.linalg.norm(pts - (p + t[:, None] * d), axis=1)
        best = np.minimum(best, dist)
    return best


def convex_hull_2d(points):
    """Andrew's monotone chain; counter-clockwise, no repeated or collinear points."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-14:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-14:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _edges_to_halfspaces(cyc):
    a = cyc
    b = np.roll(cyc, -1, axis=0)
    d = b - a
    n = np.stack([d[:, 1], -d[:, 0]], axis=1)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return n, np.einsum("ij,ij->i", n, a)


def halfspace_intersect(normals, offsets, k=None, allow_unbounded=False) -> Polytope:
    """Intersection of half-spaces n_i.x <= h_i; normals are normalized here."""
    normals = np.asarray(normals, dtype=float)
    if k is None:
        k = normals.shape[1] if normals.ndim == 2 else 1
    normals = normals.reshape(-1, k)
    offsets = np.asarray(offsets, dtype=float).reshape(-1)
    norms = np.linalg.norm(normals, axis=1)
    if np.any(norms == 0):
        zero = norms == 0
        if np.any(offsets[zero] < 0):
            return Polytope(k, normals[~zero], offsets[~zero], np.zeros((0, k)), empty=True)
        normals, offsets, norms = normals[~zero], offsets[~zero], norms[~zero]
    normals = normals / norms[:, None]
    offsets = offsets / norms
    if k == 1:
        pos = normals[:, 0] > 0
        hi = offsets[pos].min() if pos.any() else np.inf
        lo = (-offsets[~pos]).max() if (~pos).any() else -np.inf
        if not (np.isfinite(hi) and np.isfinite(lo)):
            if allow_unbounded:
                hi, lo = min(hi, BIG), max(lo, -BIG)
            else:
                raise ValueError("unbounded intersection")
        if lo > hi + 1e-12:
            return Polytope(1, [[1.0], [-1.0]], [hi, -lo], np.zeros((0, 1)), empty=True)
        hi = max(hi, lo)
        return Polytope(1, [[1.0], [-1.0]], [hi, -lo], [[lo], [hi]])
    if k != 2:
        raise ValueError("only k in {1, 2} supported")
    ang = np.sort(np.arctan2(normals[:, 1], normals[:, 0]))
    gaps = np.diff(np.r_[ang, ang[0] + 2 * np.pi]) if len(ang) else np.array([2 * np.pi])
    bounded = len(ang) >= 3 and gaps.max() < np.pi - 1e-12
    if not bounded:
        if not allow_unbounded:
            raise ValueError("unbounded intersection; pre-clip with a bounding box")
        box_n = np.array([[1.0, 0], [0, 1.0], [-1.0, 0], [0, -1.0]])
        normals = np.vstack([normals, box_n])
        offsets = np.r_[offsets, np.full(4, BIG)]
    verts = _feasible_vertices(normals, offsets)
    if len(verts) == 0:
        return Polytope(2, normals, offsets, np.zeros((0, 2)), empty=True)
    return Polytope(2, normals, offsets, verts)


def _feasible_vertices(normals, offsets, tol=1e-9):
    n = len(normals)
    i, j = np.triu_indices(n, 1)
    a1, a2 = normals[i], normals[j]
    det = a1[:, 0] * a2[:, 1] - a1[:, 1] * a2[:, 0]
    ok = np.abs(det) > 1e-14
    i, j, a1, a2, det = i[ok], j[ok], a1[ok], a2[ok], det[ok]
    h1, h2 = offsets[i], offsets[j]
    x = (h1 * a2[:, 1] - h2 * a1[:, 1]) / det
    y = (a1[:, 0] * h2 - a2[:, 0] * h1) / det
    P = np.stack([x, y], axis=1)
    scale = max(1.0, float(np.abs(offsets).max())) if len(offsets) else 1.0
    feas = np.all(P @ normals.T <= offsets + tol * scale, axis=1)
    P = P[feas]
    if len(P) == 0:
        return P
    # merge coincident vertices
    P = P[np.lexsort((P[:, 1], P[:, 0]))]
    keep = [P[0]]
    for p in P[1:]:
        if np.linalg.norm(p - keep[-1]) > 1e-10 * scale and all(np.linalg.norm(p - q) > 1e-10 * scale for q in keep):
            keep.append(p)
    P = np.array(keep)
    if len(P) <= 2:
        return P
    hull = convex_hull_2d(P)
    return hull


def inner_parallel(W: Polytope, r: float) -> Polytope:
    """Int_r W = {x : B_r(x) inside W}, by moving every offset inward by r."""
    if W.empty:
        return W
    if r == 0:
        return W
    res = halfspace_intersect(W.normals, W.offsets - r, k=W.k)
    if not res.empty and res.volume() <= 0 and r > 0:
        if W.k == 1 and res.vertices[1, 0] - res.vertices[0, 0] <= 0:
            return Polytope(W.k, res.normals, res.offsets, np.zeros((0, W.k)), empty=True)
        if W.k == 2 and len(res.vertices) < 3:
            return Polytope(W.k, res.normals, res.offsets, np.zeros((0, W.k)), empty=True)
    return res


def outer_polytope(W: Polytope, r: float) -> Polytope:
    """Polytope with every offset moved outward by r (contains the r-dilation)."""
    if W.empty:
        return W
    return halfspace_intersect(W.normals, W.offsets + r, k=W.k)


def outer_volume(W: Polytope, r: float) -> float:
    """|W + B_r| by the Steiner formula."""
    if W.empty:
        return 0.0
    if W.k == 1:
        return W.volume() + 2 * r
    return W.volume() + r * W.perimeter() + math.pi * r * r


def hausdorff(A: Polytope, B: Polytope) -> float:
    """Hausdorff distance of two nonempty convex polytopes; attained at vertices."""
    if A.empty or B.empty:
        raise ValueError("Hausdorff distance needs nonempty sets")
    return float(max(B.dist_to_set(A.vertices).max(), A.dist_to_set(B.vertices).max()))


def lemma_convex_R(c: float, r: float, k: int, max_R=1e12, rtol=1e-9) -> float:
    """Smallest R (schedule r, 2r, 4r, ... then bisection) with ((1+r/R)/(1-r/R))^k < c."""
    if c <= 1:
        raise ValueError("c must exceed 1")

    def ok(R):
        x = r / R
        return x < 1 and ((1 + x) / (1 - x)) ** k < c

    R = r
    while not ok(R):
        R *= 2
        if R > max_R:
            raise RuntimeError("schedule exhausted")
    lo, hi = R / 2, R
    if ok(lo):
        return lo
    while hi - lo > rtol * hi:
        mid = (lo + hi) / 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def random_convex_polygon(rng, n=8, scale=10.0, center=None):
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    rad = rng.uniform(0.5, 1.0, n) * scale
    pts = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    if center is not None:
        pts = pts + center
    return Polytope.hull(pts)


def verify_convex_lemma(R, c, r, polytopes):
    """Check |W + B_r| < c |Int_r W| on every W with Int_R W nonempty; returns (ok, n_checked, worst ratio)."""
    worst = 0.0
    n = 0
    for W in polytopes:
        if inner_parallel(W, R).empty:
            continue
        n += 1
        inner = inner_parallel(W, r).volume()
        ratio = outer_volume(W, r) / inner if inner > 0 else math.inf
        worst = max(worst, ratio)
    return worst < c, n, worst
