"""Toy Z^k actions: rotations of the torus, markers, and equivariant signals."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .bandlimited import BLFunction, Factor, FreqBox

GOLDEN = (math.sqrt(5) - 1) / 2


def circle_dist(a, b):
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


@dataclass(frozen=True)
class System:
    """T^n x = x + n * alpha (mod 1) on the k-torus with the max circle metric."""

    alpha: tuple

    @property
    def k(self):
        return len(self.alpha)

    def act(self, x, n):
        x = np.asarray(x, dtype=float)
        n = np.asarray(n, dtype=float)
        return (x + n * np.asarray(self.alpha)) % 1.0

    def dist(self, x, y):
        return float(np.max(circle_dist(x, y)))

    def orbit_gap(self, n):
        """||n * alpha|| on the torus (max over coordinates)."""
        return float(np.max(circle_dist(np.asarray(n, dtype=float) * np.asarray(self.alpha), 0.0)))


def torus_system(alpha, k=None, n_check=10_000) -> System:
    alpha = tuple(float(a) for a in np.atleast_1d(alpha))
    if k is not None and len(alpha) != k:
        raise ValueError("alpha must have k entries")
    j = np.arange(1, n_check + 1)
    for a in alpha:
        if circle_dist(j * a, 0.0).min() <= 1e-6:
            raise ValueError(f"rotation number {a} is too close to rational at this scale")
    return System(alpha)


def d_Omega(system: System, x, y, omega) -> float:
    omega = [np.atleast_1d(n) for n in omega]
    if not omega:
        raise ValueError("Omega must be nonempty")
    return max(system.dist(system.act(x, n), system.act(y, n)) for n in omega)


def _ball_indices(k, M):
    """Nonzero n in Z^k with |n| < M."""
    r = int(math.ceil(M))
    axis = np.arange(-r, r + 1)
    grid = np.stack(np.meshgrid(*([axis] * k), indexing="ij"), axis=-1).reshape(-1, k)
    s = (grid * grid).sum(axis=1)
    return grid[(s > 0) & (s < M * M)]


def _ball_gap(system, M):
    """min ||n alpha|| over nonzero n with |n| < M."""
    ns = np.asarray(_ball_indices(system.k, M), dtype=float).reshape(-1, system.k)
    return float(circle_dist(ns * np.asarray(system.alpha), 0.0).max(axis=1).min())


@dataclass
class MarkerData:
    system: System
    M: int
    gap: float
    support: float
    arc: float
    M1: int
    pitch: float

    def h(self, x):
        """Trapezoid: 1 for |x_i| <= support/4 on every axis, 0 beyond support/2."""
        x = np.asarray(x, dtype=float).reshape(-1, self.system.k)
        d = circle_dist(x, 0.0)
        q = self.support / 4
        v = np.clip((2 * q - d) / q, 0.0, 1.0)
        return v.min(axis=1)

    def h_orbit(self, x, ns):
        """h(T^n x) for an array of indices ns (m, k)."""
        ns = np.asarray(ns, dtype=float).reshape(-1, self.system.k)
        pts = (np.asarray(x, dtype=float)[None, :] + ns * np.asarray(self.system.alpha)) % 1.0
        return self.h(pts)

    def check_disjoint(self):
        """supp h and T^n supp h are disjoint for 0 < |n| < M (arc arithmetic)."""
        return _ball_gap(self.system, self.M) > self.support

    def sites(self, x, lo, hi):
        """Indices n in the box [lo, hi] with h(T^n x) > 0, and the values."""
        # the action is coordinatewise, so filter each axis on its own range
        k = self.system.k
        x = np.asarray(x, dtype=float).reshape(k)
        q = self.support / 4
        idx, vals = [], []
        for i in range(k):
            n = np.arange(int(math.floor(lo[i])), int(math.ceil(hi[i])) + 1)
            d = circle_dist((x[i] + n * self.system.alpha[i]) % 1.0, 0.0)
            v = np.clip((2 * q - d) / q, 0.0, 1.0)
            keep = v > 0
            idx.append(n[keep])
            vals.append(v[keep])
        if k == 1:
            return idx[0][:, None], vals[0]
        grid = np.stack(np.meshgrid(*idx, indexing="ij"), axis=-1).reshape(-1, k)
        hv = np.stack(np.meshgrid(*vals, indexing="ij"), axis=-1).reshape(-1, k).min(axis=1)
        return grid, hv


def _axis_cover_depth_grid(a, q, pitch):
    """max over a grid of min{|n| : ||y - n a|| <= q - pitch/2}."""
    y = np.arange(0.0, 1.0, pitch)
    best = np.full(len(y), np.inf)
    r = q - pitch / 2
    n = 0
    limit = 200_000
    while np.isinf(best).any():
        for s in ((n,) if n == 0 else (n, -n)):
            hit = circle_dist(y, s * a) <= r
            best[hit & np.isinf(best)] = n
        n += 1
        if n > limit:
            raise RuntimeError("covering did not close")
    return int(best.max())


def _max_gap(a, K):
    pts = np.sort((np.arange(-K, K + 1) * a) % 1.0)
    return float(max(np.diff(pts).max(initial=0.0), pts[0] + 1.0 - pts[-1]))


def _axis_cover_depth(a, q, limit=1 << 23):
    """Smallest K such that the arcs of radius q about {n a : |n| <= K} cover the circle.

    Arcs of radius q about a finite set cover the circle exactly when every gap
    between neighbouring points is at most 2 q; the largest gap does not grow with K.
    """
    r = 2 * q * (1 - 1e-9)
    hi = 1
    while _max_gap(a, hi) > r:
        hi *= 2
        if hi > limit:
            raise RuntimeError("covering did not close")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _max_gap(a, mid) > r:
            lo = mid
        else:
            hi = mid
    return hi


def build_marker(system: System, M: int, frac=0.85, pitch=1e-4) -> MarkerData:
    if M < 2:
        raise ValueError("M must be >= 2")
    gap = _ball_gap(system, M)
    support = frac * gap
    if support < 1e-6:
        raise ValueError("marker width below 1e-6: M too large for this rotation")
    q = support / 4
    if q <= pitch:
        pitch = q / 4
    depth = [_axis_cover_depth(a, q) for a in system.alpha]
    M1 = max(M, int(math.floor(math.sqrt(sum(d * d for d in depth)))) + 1)
    return MarkerData(system, int(M), gap, support, 0.5 * (support + gap), M1, pitch)


def check_cover(marker: MarkerData, pitch=None):
    """Grid check that the translates T^n {h = 1}, |n| < M1, cover the torus (k = 1 or 2 separable)."""
    pitch = pitch or marker.pitch
    q = marker.support / 4
    for a in marker.system.alpha:
        if _axis_cover_depth_grid(a, q, pitch) >= marker.M1:
            return False
    return True


class EquivariantSignal:
    """x -> f(x)(t) = Re sum_j c_j exp(2 pi i (j.x + w_j.t)), w_j = j*alpha reduced mod 1.

    Reducing j*alpha by an integer keeps f(T^n x)(t) = f(x)(t + n) exact.
    """

    def __init__(self, system: System, coefs, indices, a, delta=None):
        self.system = system
        self.k = system.k
        self.coefs = np.asarray(coefs, dtype=complex).reshape(-1)
        self.indices = np.asarray(indices, dtype=int).reshape(len(self.coefs), self.k)
        self.a = np.broadcast_to(np.asarray(a, dtype=float), (self.k,)).copy()
        w = self.indices * np.asarray(system.alpha)
        self.omega = w - np.round(w)
        if np.any(np.abs(self.omega) > self.a / 2 + 1e-15):
            raise ValueError("a frequency falls outside the band")
        if delta is not None and np.abs(self.coefs).sum() > 1 - delta + 1e-15:
            raise ValueError("coefficients exceed the 1 - delta budget")
        self.norm_bound = float(np.abs(self.coefs).sum())

    def __call__(self, x) -> BLFunction:
        x = np.asarray(x, dtype=float).reshape(self.k)
        groups = BLFunction.zero(self.k)
        for c, j, w in zip(self.coefs, self.indices, self.omega):
            ph = c * np.exp(2j * np.pi * float(j @ x))
            facs = [Factor(i, "cexp", 2 * float(w[i])) for i in range(self.k)]
            groups = groups + BLFunction.term(self.k, facs, coef=ph)
        return groups.real_part()

    def values(self, x, t):
        """Direct evaluation of f(x) at real points t (m, k)."""
        x = np.asarray(x, dtype=float).reshape(self.k)
        t = np.asarray(t, dtype=float).reshape(-1, self.k)
        ph = 2j * np.pi * (self.indices @ x)[None, :] + 2j * np.pi * t @ self.omega.T
        return np.real(np.exp(ph) @ self.coefs)

    def band(self) -> FreqBox:
        return FreqBox.symmetric(self.a / 2)


def random_signal(system: System, a, delta, n_terms=3, rng=None, max_index=6) -> EquivariantSignal:
    """A random signal with sum |c_j| = 1 - delta and frequencies inside the band."""
    rng = np.random.default_rng(rng)
    a = np.broadcast_to(np.asarray(a, dtype=float), (system.k,))
    cand = [j for j in itertools.product(range(-max_index, max_index + 1), repeat=system.k)
            if np.all(np.abs(np.asarray(j) * system.alpha - np.round(np.asarray(j) * system.alpha)) <= a / 2)]
    pick = rng.choice(len(cand), size=min(n_terms, len(cand)), replace=False)
    idx = [cand[p] for p in pick]
    c = rng.normal(size=len(idx)) + 1j * rng.normal(size=len(idx))
    c *= (1 - delta) / np.abs(c).sum()
    return EquivariantSignal(system, c, idx, a, delta)
