"""Dynamical Voronoi tilings.

Level 1 lifts the marker sites n (where h(T^n x) > 0) to (n, 1/h(T^n x)) in R^{k+1}
and slices their Voronoi cells at height -H.  Level 2 lifts the integer points with
nu(x, n) > 0 to (n, 1/nu(x, n)) and slices at height 0.  In both cases a cell is the
set of u in R^k whose lifted point (u, -H) is nearest to the lifted site, i.e. a
power diagram with weights (H + a_n)^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convexgeom import Polytope, halfspace_intersect, inner_parallel, outer_volume
from .tilingmap import _newton, _nu_eig, nu_min_sv, polydisc_starts, CertifiedZero


def smoothstep(t):
    """C^1 cubic ramp: 0 for t <= 0, 1 for t >= 1, 3t^2 - 2t^3 between."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def alpha1(w, r1):
    """Plateau on C^k: prod_i (1 - smoothstep(|w_i|/r1 - 1)); 1 on D_r1^k, 0 off D_2r1^k."""
    w = np.atleast_2d(np.asarray(w, dtype=complex))
    return np.prod(1.0 - smoothstep(np.abs(w) / r1 - 1.0), axis=1)


def alpha2(t, L):
    """Ramp in the Jacobian size: 0 for t <= 1/L, 1 for t >= 2/L."""
    return smoothstep(np.asarray(t, dtype=float) * L - 1.0)


@dataclass
class TilingSnapshot:
    x: np.ndarray
    window: Polytope
    tiles: dict
    level: int
    H: float
    sites: np.ndarray
    lift: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def k(self):
        return self.window.k

    def keys(self):
        return sorted(self.tiles)

    def power(self, pts):
        """|u - n|^2 + (H + a_n)^2 - H^2 for every (point, site) pair."""
        pts = np.asarray(pts, dtype=float).reshape(-1, self.k)
        d2 = ((pts[:, None, :] - self.sites[None, :, :]) ** 2).sum(axis=2)
        return d2 + (2 * self.H * self.lift + self.lift ** 2)[None, :]

    def owner(self, pts):
        """Nearest lifted site (brute force); ties go to the first site in lexicographic order."""
        pw = self.power(pts)
        return self.sites[np.argmin(pw, axis=1)]

    def tile_of(self, pts, tol=1e-9):
        """Key of a tile containing each point (smallest key on ties), None outside all tiles."""
        pts = np.asarray(pts, dtype=float).reshape(-1, self.k)
        out = [None] * len(pts)
        for key in self.keys():
            inside = self.tiles[key].contains(pts, tol)
            for i in np.flatnonzero(inside):
                if out[i] is None:
                    out[i] = key
        return out

    def boundary(self, tol=1e-9):
        """Tile boundary pieces that are not window edges: points (k=1) or segments (k=2)."""
        win = self.window
        if self.k == 1:
            lo, hi = win.vertices[0, 0], win.vertices[1, 0]
            ends = set()
            for P in self.tiles.values():
                for v in P.vertices[:, 0]:
                    if v > lo + tol and v < hi - tol:
                        ends.add(round(float(v), 12))
            return np.array(sorted(ends)).reshape(-1, 1)
        segs = []
        for P in self.tiles.values():
            v = P.vertices
            for a, b in zip(v, np.roll(v, -1, axis=0)):
                mid = 0.5 * (a + b)
                if win.dist_to_boundary(mid[None, :])[0] > tol:
                    segs.append((a, b))
        return segs

    def dist_to_boundary(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, self.k)
        bd = self.boundary()
        if self.k == 1:
            if len(bd) == 0:
                return np.full(len(pts), np.inf)
            b = bd[:, 0]
            j = np.clip(np.searchsorted(b, pts[:, 0]), 1, len(b) - 1) if len(b) > 1 else np.zeros(len(pts), int)
            d = np.abs(pts[:, 0] - b[j])
            if len(b) > 1:
                d = np.minimum(d, np.abs(pts[:, 0] - b[j - 1]))
            return d
        if not bd:
            return np.full(len(pts), np.inf)
        A = np.array([s[0] for s in bd])
        B = np.array([s[1] for s in bd])
        best = np.full(len(pts), np.inf)
        for s in range(0, len(A), 512):
            a, b = A[s:s + 512], B[s:s + 512]
            ab = b - a
            t = np.einsum("pij,ij->pi", pts[:, None, :] - a[None], ab) / np.maximum((ab * ab).sum(1), 1e-300)
            t = np.clip(t, 0, 1)
            q = a[None] + t[..., None] * ab[None]
            best = np.minimum(best, np.linalg.norm(pts[:, None, :] - q, axis=2).min(axis=1))
        return best

    def to_dict(self):
        return {"level": self.level, "H": self.H, "x": [float(v) for v in np.atleast_1d(self.x)],
                "tiles": [{"n": list(key), **self.tiles[key].to_dict()} for key in self.keys()]}


def snapshot_from_tiles(tiles: dict, window: Polytope, level=2, x=None) -> TilingSnapshot:
    """Wrap an explicit tiling (e.g. a cube tiling) as a snapshot with zero lifts."""
    keys = sorted(tiles)
    sites = np.array(keys, dtype=np.int64).reshape(-1, window.k)
    return TilingSnapshot(np.atleast_1d(np.asarray(x if x is not None else [np.nan], dtype=float)), window,
                          dict(tiles), level, 0.0, sites, np.zeros(len(keys)), {})


def lifted_cells(sites, lift, H, window: Polytope, radius=None, keep=None):
    """Cells {u : |u-n|^2 + (H+a_n)^2 <= |u-m|^2 + (H+a_m)^2 for all m}, clipped to the window.

    Only sites m within `radius` of n are used as competitors.  The bisector with m
    is written relative to n so that large coordinates and heights cancel exactly:
    2 (m-n).v <= |m-n|^2 + (a_m - a_n)(2H + a_m + a_n), v = u - n.
    `keep` optionally restricts which sites get a cell.
    """
    sites = np.asarray(sites, dtype=np.int64).reshape(-1, window.k)
    lift = np.asarray(lift, dtype=float).reshape(len(sites))
    k = window.k
    order = np.lexsort(sites.T[::-1])
    sites, lift = sites[order], lift[order]
    tiles = {}
    if len(sites) == 0:
        return tiles, sites, lift
    wlo = window.vertices.min(axis=0)
    whi = window.vertices.max(axis=0)
    if k == 1:
        s = sites[:, 0].astype(float)
        for i in range(len(s)):
            if keep is not None and not keep[order[i]]:
                continue
            if radius is None:
                j = np.arange(len(s))
            else:
                a, b = np.searchsorted(s, [s[i] - radius, s[i] + radius + 0.5])
                j = np.arange(a, b)
            j = j[j != i]
            dm = s[j] - s[i]
            off = dm * dm + (lift[j] - lift[i]) * (2 * H + lift[j] + lift[i])
            t = off / (2 * dm)
            lo = max(wlo[0], s[i] + (t[dm < 0].max() if np.any(dm < 0) else -np.inf))
            hi = min(whi[0], s[i] + (t[dm > 0].min() if np.any(dm > 0) else np.inf))
            if hi > lo:
                tiles[(int(sites[i, 0]),)] = Polytope.interval(lo, hi)
        return tiles, sites, lift
    wn, wo = window.normals, window.offsets
    for i in range(len(sites)):
        if keep is not None and not keep[order[i]]:
            continue
        n = sites[i].astype(float)
        dm = sites.astype(float) - n
        dist = np.linalg.norm(dm, axis=1)
        j = np.flatnonzero((dist > 0) & ((dist <= radius) if radius is not None else True))
        normals = 2 * dm[j]
        offsets = (dm[j] ** 2).sum(1) + (lift[j] - lift[i]) * (2 * H + lift[j] + lift[i])
        # back to absolute coordinates: normal.(u - n) <= off
        normals = np.vstack([normals, wn])
        offsets = np.concatenate([offsets + normals[:len(j)] @ n, wo])
        P = halfspace_intersect(normals, offsets, k=2)
        if not P.empty and P.volume() > 0:
            tiles[tuple(int(v) for v in sites[i])] = P
    return tiles, sites, lift


def _window_bounds(window):
    return window.vertices.min(axis=0), window.vertices.max(axis=0)


def level1_tiles(system, marker, x, window: Polytope, check=True) -> TilingSnapshot:
    k = system.k
    rad = marker.M1 + math.sqrt(k)
    cand = 2 * rad + marker.M
    H = rad ** 2
    lo, hi = _window_bounds(window)
    ns, hv = marker.sites(x, lo - rad - cand, hi + rad + cand)
    if len(ns) == 0:
        raise ValueError("no marker site near the window: covering violated")
    near = np.all((ns >= lo - rad - 1) & (ns <= hi + rad + 1), axis=1)
    tiles, sites, lift = lifted_cells(ns, 1.0 / hv, H, window, radius=cand, keep=near)
    snap = TilingSnapshot(np.atleast_1d(np.asarray(x, dtype=float)), window, tiles, 1, H, sites, lift,
                          {"M": marker.M, "M1": marker.M1})
    if check:
        vol = sum(P.volume() for P in tiles.values())
        if abs(vol - window.volume()) > 1e-6 * max(1.0, window.volume()):
            raise ValueError("tiles do not cover the window: marker covering violated")
    return snap


def check_level1_claims(snap: TilingSnapshot, marker):
    """W_0(x,n) lies in B_{M1+sqrt k}(n) and carries h(T^n x) > 1/2."""
    rad = marker.M1 + math.sqrt(snap.k)
    bad = []
    for n, P in snap.tiles.items():
        if np.linalg.norm(P.vertices - np.asarray(n, dtype=float), axis=1).max() > rad + 1e-9:
            bad.append((n, "radius"))
        if marker.h_orbit(snap.x, [n])[0] <= 0.5:
            bad.append((n, "height"))
    return bad


# nu(x, n) from the zeros of Phi

@dataclass
class NuField:
    indices: np.ndarray
    nu: np.ndarray
    zeros: dict
    flags: list
    r1: float
    L: int

    def value(self, n):
        key = tuple(int(v) for v in np.atleast_1d(n))
        j = self._lookup().get(key)
        return 0.0 if j is None else float(self.nu[j])

    def _lookup(self):
        if not hasattr(self, "_map"):
            self._map = {tuple(int(v) for v in row): j for j, row in enumerate(self.indices)}
        return self._map

    def recompute(self):
        """nu from the stored provenance alone."""
        out = np.zeros(len(self.indices))
        for j, row in enumerate(self.indices):
            key = tuple(int(v) for v in row)
            tot = sum(a1 * a2 for _, a1, a2 in self.zeros.get(key, []))
            out[j] = min(1.0, tot)
        return out

    def positive(self):
        keep = self.nu > 0
        return self.indices[keep], self.nu[keep]


def _screen(phi, indices, rad, block=16):
    """Indices whose closed polydisc of radius rad may hold a zero of Phi.

    Two exclusion tests, both rigorous given the derivative envelopes: first
    |Phi_i(n)| > G1 * rad (G1 taken per block of nearby indices), then, for the
    survivors, the Taylor test |Phi_i(n)| - sum_j |d_j Phi_i(n)| rad > G2 rad^2 / 2.
    """
    pts = indices.astype(complex)
    vals = np.abs(phi.values(pts))
    blocks = np.floor_divide(indices, block)
    ub, inv = np.unique(blocks, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    centres = (ub + 0.5) * block - 0.5
    G1, G2 = phi.derivative_bounds(centres, rad, block / 2 + rad)
    keep = np.flatnonzero(vals.max(axis=1) <= G1[inv] * rad)
    if len(keep) == 0:
        return keep
    J = phi.jacobian(pts[keep])
    lin = vals[keep] - np.abs(J).sum(axis=2) * rad
    return keep[lin.max(axis=1) <= G2[inv[keep]] * rad * rad / 2]


def nu_field(phi, constants, indices, screen=True, ramp_tol=0.05) -> NuField:
    """nu(x,n) = min(1, sum alpha1(z - n) alpha2(nu(dPhi_z))) over the zeros z in D_{2 r1}(n).

    Points whose polydisc provably carries no zero (|Phi(n)| larger than a
    gradient bound times the radius) are skipped; Newton runs from the centres of
    the remaining ones, all at once.
    """
    indices = np.asarray(indices, dtype=np.int64).reshape(-1, constants.k)
    k = indices.shape[1]
    r1, L = constants.r1, constants.L
    rad = 2 * r1
    pts = indices.astype(complex)
    nu = np.zeros(len(indices))
    zeros: dict = {}
    flags: list = []
    if len(indices) == 0:
        return NuField(indices, nu, zeros, flags, r1, L)
    cand = np.arange(len(indices))
    if screen:
        cand = _screen(phi, indices, rad)
    if len(cand):
        starts = np.vstack([polydisc_starts(pts[c], rad, 1) for c in cand])
        z, res, conv = _newton(phi, starts)
        uz, ur = [], []
        for zi, ri in zip(z[conv], res[conv]):
            if any(np.linalg.norm(zi - o) < 1e-9 for o in uz):
                continue
            uz.append(zi)
            ur.append(ri)
        found: list = []
        if uz:
            Js = phi.jacobian(np.array(uz))
            for zi, ri, J in zip(uz, ur, Js):
                n1, n2 = nu_min_sv(J), _nu_eig(J)
                cert = ri < 1e-9 and abs(n1 - n2) < 1e-8 and n1 > 1e-10
                found.append(CertifiedZero(zi, float(ri), n1, n2, (), bool(cert)))
        cset = set(cand.tolist())
        lookup = {tuple(int(v) for v in row): j for j, row in enumerate(indices)}
        for zr in found:
            base = np.round(zr.z.real).astype(np.int64)
            for off in np.ndindex(*([3] * k)):
                key = tuple(int(v) for v in base + np.array(off) - 1)
                j = lookup.get(key)
                if j is None or j not in cset:
                    continue
                w = zr.z - np.asarray(key, dtype=float)
                if np.any(np.abs(w) > rad):
                    continue
                a1 = float(alpha1(w, r1)[0])
                a2 = float(alpha2(zr.nu, L))
                zeros.setdefault(key, []).append((zr, a1, a2))
                if not zr.certified and a1 > 0:
                    t = zr.nu * L
                    if abs(t - 1) < ramp_tol or abs(t - 2) < ramp_tol:
                        flags.append((key, zr))
        for key, lst in zeros.items():
            nu[lookup[key]] = min(1.0, sum(a1 * a2 for _, a1, a2 in lst))
    return NuField(indices, nu, zeros, flags, r1, L)


def level2_tiles(nu: NuField, window: Polytope, x=None, radius=None) -> TilingSnapshot:
    sites, vals = nu.positive()
    if len(sites) == 0:
        raise ValueError("no positive nu in the window")
    tiles, s, lift = lifted_cells(sites, 1.0 / vals, 0.0, window, radius=radius)
    return TilingSnapshot(np.atleast_1d(np.asarray(x if x is not None else [np.nan], dtype=float)), window,
                          tiles, 2, 0.0, s, lift, {"L": nu.L})


def cube_tiling_check(snap: TilingSnapshot, L, tol=1e-9):
    """Keys whose tile is exactly n + [-L/2, L/2]^k."""
    good = []
    for n, P in snap.tiles.items():
        cube = Polytope.box(np.asarray(n) - L / 2, np.asarray(n) + L / 2)
        if np.abs(np.sort(P.vertices, axis=0) - np.sort(cube.vertices, axis=0)).max() < tol:
            good.append(n)
    return good


def boundary_density(snap: TilingSnapshot, R, r, center=None):
    """|B_3R(c) cap union_n d_r W(n)| / |B_{R/2}|, with d_r W = {t : dist(t, boundary W) <= r}.

    Window edges are not boundaries.  k = 1 is an exact union of intervals; for k = 2
    each tile contributes its Steiner collar outer_volume - |Int_r|, counted in full
    when the tile meets B_3R (an upper bound).
    """
    k = snap.k
    c = np.zeros(k) if center is None else np.asarray(center, dtype=float).reshape(k)
    lo, hi = _window_bounds(snap.window)
    if np.any(c - 3 * R < lo - 1e-9) or np.any(c + 3 * R > hi + 1e-9):
        raise ValueError("window must contain B_3R")
    if r <= 0:
        return 0.0
    if k == 1:
        bd = snap.boundary()[:, 0]
        iv = np.stack([np.maximum(bd - r, c[0] - 3 * R), np.minimum(bd + r, c[0] + 3 * R)], axis=1)
        iv = iv[iv[:, 1] > iv[:, 0]]
        tot, cur = 0.0, -np.inf
        for a, b in iv[np.argsort(iv[:, 0])]:
            a = max(a, cur)
            if b > a:
                tot += b - a
                cur = b
        return tot / R
    ball = math.pi * (R / 2) ** 2
    tot = 0.0
    for P in snap.tiles.values():
        if np.linalg.norm(P.vertices - c, axis=1).min() > 3 * R + r:
            continue
        inner = inner_parallel(P, r)
        tot += outer_volume(P, r) - (0.0 if inner.empty else inner.volume())
    return tot / ball
