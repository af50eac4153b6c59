"""Rational lattices Gamma subset Gamma_1, admissible sets, and the constants K0, r0."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .bandlimited import BLFunction, KernelBundle, make_chi0, make_chi1
from . import kernels


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(x).limit_denominator(10 ** 6)


class LatticePair:
    """Gamma = prod (1/rho_i) Z and Gamma_1 = Z^k + Gamma, stored per axis.

    Gamma_1 is the product of g_i Z with g_i = gcd(1, 1/rho_i) and a point of
    Gamma_1 is held by its integer index on that grid.  The index of a Gamma
    point is divisible by ``period[i]`` on axis i.
    """

    def __init__(self, rho: Sequence):
        self.rho = tuple(_frac(r) for r in rho)
        if any(r <= 0 for r in self.rho):
            raise ValueError("rho must be positive")
        self.k = len(self.rho)
        inv = [1 / r for r in self.rho]
        # gcd(1, p/q) = 1/q for coprime p, q
        self.step1 = tuple(Fraction(1, x.denominator) for x in inv)
        self.step = tuple(inv)
        self.period = tuple(x.numerator for x in inv)
        self.unit = tuple(x.denominator for x in inv)  # index steps per unit translation
        self.step1_f = np.array([float(s) for s in self.step1])
        self.step_f = np.array([float(s) for s in self.step])

    def __repr__(self):
        return f"LatticePair(rho={tuple(str(r) for r in self.rho)})"

    def index_of(self, points, tol=1e-9):
        """Integer indices on Gamma_1 of float points; raises if a point is off the lattice."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.k)
        idx = np.rint(pts / self.step1_f).astype(np.int64)
        bad = np.abs(idx * self.step1_f - pts).max(axis=1) > tol if len(pts) else np.zeros(0, bool)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise ValueError(f"point {pts[j].tolist()} is not in Gamma_1")
        return idx

    def points(self, idx):
        return np.asarray(idx, dtype=np.int64).reshape(-1, self.k) * self.step1_f

    def in_gamma_idx(self, idx):
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, self.k)
        return np.all(idx % np.array(self.period) == 0, axis=1)

    def contains_exact(self, point, which="gamma1") -> bool:
        """Membership of a rational point (sequence of Fractions or ints)."""
        steps = self.step1 if which == "gamma1" else self.step
        return all((_frac(x) / s).denominator == 1 for x, s in zip(point, steps))

    def enumerate(self, lo, hi, which="gamma1"):
        """Indices (on Gamma_1) of lattice points in the box prod [lo_i, hi_i]."""
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (self.k,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (self.k,))
        axes = []
        for i in range(self.k):
            g = self.step1_f[i]
            a = math.ceil(lo[i] / g - 1e-9)
            b = math.floor(hi[i] / g + 1e-9)
            r = np.arange(a, b + 1, dtype=np.int64)
            if which == "gamma":
                r = r[r % self.period[i] == 0]
            axes.append(r)
        if any(len(a) == 0 for a in axes):
            return np.zeros((0, self.k), dtype=np.int64)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def shift_idx(self, n):
        """Index offset corresponding to translation by the integer vector n."""
        return np.asarray(n, dtype=np.int64).reshape(self.k) * np.array(self.unit, dtype=np.int64)

    def check_generators(self) -> bool:
        """Gamma subset Gamma_1, and Z^k + Gamma_1 = Gamma_1, on generators."""
        for i in range(self.k):
            if (self.step[i] / self.step1[i]).denominator != 1:
                return False
            if (Fraction(1) / self.step1[i]).denominator != 1:
                return False
        return True


def make_lattices(rho) -> LatticePair:
    return LatticePair(rho)


@dataclass
class AdmissibleSet:
    lattice: LatticePair
    idx: np.ndarray
    r0: float

    @property
    def points(self):
        return self.lattice.points(self.idx)

    def __len__(self):
        return len(self.idx)


def is_admissible(points, lattice: LatticePair, r0: float, as_index=False):
    """Every pair differs by an element of Gamma or is more than r0 apart.

    Returns (ok, pair) where pair is a violating pair of points or None.
    """
    idx = np.asarray(points, dtype=np.int64).reshape(-1, lattice.k) if as_index else lattice.index_of(points)
    if len(idx) < 2:
        return True, None
    pts = lattice.points(idx)
    uniq, inv, counts = np.unique(idx, axis=0, return_inverse=True, return_counts=True)
    if np.any(counts > 1):
        j = int(np.flatnonzero(counts[inv.ravel()] > 1)[0])
        return False, (pts[j], pts[j])
    cell = max(r0, 1e-9)
    keys = np.floor(pts / cell).astype(np.int64)
    buckets: dict = {}
    for j, key in enumerate(map(tuple, keys)):
        buckets.setdefault(key, []).append(j)
    period = np.array(lattice.period, dtype=np.int64)
    offsets = np.stack([m.ravel() for m in np.meshgrid(*[[-1, 0, 1]] * lattice.k, indexing="ij")], axis=1)
    for key, members in buckets.items():
        cand = []
        for off in offsets:
            cand.extend(buckets.get(tuple(np.add(key, off)), ()))
        cand = np.array(sorted(set(cand)))
        for j in members:
            others = cand[cand > j]
            if len(others) == 0:
                continue
            d = np.linalg.norm(pts[others] - pts[j], axis=1)
            diff = idx[others] - idx[j]
            in_gamma = np.all(diff % period == 0, axis=1)
            bad = (d <= r0) & ~in_gamma
            if np.any(bad):
                o = others[int(np.argmax(bad))]
                return False, (pts[j], pts[o])
    return True, None


def _separable_params(chi0: BLFunction):
    if len(chi0.groups) != 1 or len(chi0.groups[0]) != 1:
        raise ValueError("expected a single tensor-product term")
    g = chi0.groups[0]
    facs = sorted(g.factors, key=lambda f: f.axis)
    if [f.axis for f in facs] != list(range(chi0.k)) or any(f.kind != "sincpow" for f in facs):
        raise ValueError("expected one sinc power factor per axis")
    return abs(complex(g.coefs[0])), [(f.b, f.m) for f in facs]


def _env_sum(b, m, g, t, J):
    """sum over j in Z of min(1, (pi b |t - j g|)^-m) for |j| <= J plus analytic tail."""
    j = np.arange(-J, J + 1)
    s = np.abs(np.asarray(t)[..., None] - j * g)
    with np.errstate(divide="ignore"):
        e = np.minimum(1.0, (np.pi * b * s) ** (-float(m)))
    R = J * g - np.abs(t).max()
    return e.sum(axis=-1) + _tail_1d(b, m, g, R)


def _tail_1d(b, m, g, R):
    """Bound for sum over lattice g Z beyond distance R of (pi b |s|)^-m (two sides)."""
    if R <= g:
        return math.inf
    return 2 * (np.pi * b) ** (-m) * (R - g) ** (1 - m) / ((m - 1) * g)


def _sinc_deriv_env(x, m):
    """Envelope for |(sinc^m)''| at |x| using |sinc| <= min(1, 1/(pi x)) and analogous bounds."""
    x = np.abs(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        s0 = np.minimum(1.0, 1 / (np.pi * x))
        s1 = np.minimum(np.pi / 2, 1 / x + 1 / (np.pi * x ** 2))
        s2 = np.minimum(np.pi ** 2 / 3, np.pi / x + 2 / x ** 2 + 2 / (np.pi * x ** 3))
    return m * (m - 1) * s0 ** (m - 2) * s1 ** 2 + m * s0 ** (m - 1) * s2


def _second_deriv_bound(b, m, g, Q=10 ** 6):
    """Bound for sup_t |d^2/dt^2 sum_j sinc(b (t - j g))^m|."""
    q = np.arange(1, Q + 1)
    e = _sinc_deriv_env(b * q * g, m)
    tail = float(e[-1]) * Q
    return b * b * (3 * float(_sinc_deriv_env(0.0, m)) + 2 * float(e.sum()) + tail)


def _axis_sup(b, m, g, tol, n_grid=2001):
    """Upper bound for sup_t sum_j |sinc(b (t - j g))|^m.

    Grid maximum over one period plus a truncation tail plus the
    curvature term M2 h^2 / 8, which bounds how far a C^2 function can rise
    above its values on a grid of spacing h.
    """
    J = 64
    while _tail_1d(b, m, g, J * g - g) > tol / 4 and J < 10 ** 7:
        J *= 2
    t = np.linspace(0, g, n_grid)
    j = np.arange(-J, J + 1)
    best = 0.0
    for s in range(0, len(t), 256):
        w = b * (t[s:s + 256, None] - j[None, :] * g)
        best = max(best, float((np.abs(kernels.sinc(w)) ** m).sum(axis=1).max()))
    tail = _tail_1d(b, m, g, J * g - g)
    h = g / (n_grid - 1)
    curv = _second_deriv_bound(b, m, g) * h * h / 8
    return best + tail + curv, best, tail + curv


def compute_K0(chi0: BLFunction, lattice: LatticePair, tol=1e-6):
    """Upper bound for sup_t sum over Gamma_1 of |chi0(t - lambda)|.

    The sum factors over axes for a tensor-product kernel on a product
    lattice.  Returns (K0, info) with the grid maximum and the error budget.
    """
    c, params = _separable_params(chi0)
    total, grid = c, c
    errs = []
    for (b, m), g in zip(params, lattice.step1_f):
        if m < 2:
            raise ValueError("decay order must be >= 2")
        n_grid = 2001
        while True:
            up, gm, err = _axis_sup(b, m, g, tol / max(1, lattice.k), n_grid)
            if err <= tol / (2 * lattice.k) * gm or n_grid > 100000:
                break
            n_grid = 4 * n_grid
        total *= up
        grid *= gm
        errs.append(err)
    if total - grid > tol * grid:
        raise RuntimeError(f"K0 error budget {total - grid:.3g} above tolerance")
    return total, {"grid_max": grid, "axis_errors": errs}


def lattice_abs_sum_direct(chi0: BLFunction, lattice: LatticePair, t, radius):
    """Brute-force sum over Gamma_1 points within a box of |chi0(t - lambda)|."""
    t = np.asarray(t, dtype=float).reshape(lattice.k)
    idx = lattice.enumerate(t - radius, t + radius)
    pts = lattice.points(idx)
    return float(np.abs(chi0.eval(t[None, :] - pts)).sum())


def _total_abs_sum_at_zero(c, params, lattice, tol=1e-13):
    tot = c
    for (b, m), g in zip(params, lattice.step1_f):
        J = 64
        while _tail_1d(b, m, g, J * g) > tol and J < 10 ** 7:
            J *= 2
        j = np.arange(-J, J + 1)
        tot *= float((np.abs(kernels.sinc(b * j * g)) ** m).sum()) + _tail_1d(b, m, g, J * g)
    return tot


def outside_sum(chi0: BLFunction, lattice: LatticePair, r: float, total=None):
    """sum over lambda in Gamma_1 with |lambda| > r of |chi0(lambda)| (tail-bounded above)."""
    if total is None:
        c, params = _separable_params(chi0)
        total = _total_abs_sum_at_zero(c, params, lattice)
    idx = lattice.enumerate(-r, r)
    pts = lattice.points(idx)
    inside = pts[np.linalg.norm(pts, axis=1) <= r]
    return total - float(np.abs(chi0.eval(inside)).sum()) if len(inside) else total


def compute_r0(chi0: BLFunction, lattice: LatticePair, max_r=1e4):
    """Smallest radius with outside sum < 1/2.

    The schedule 1, 2, 4, ... brackets the answer; bisection over the sorted
    lattice norms inside the bracket then finds the exact threshold (the
    outside sum is a step function jumping at those norms).
    """
    c, params = _separable_params(chi0)
    total = _total_abs_sum_at_zero(c, params, lattice)
    r = 1.0
    while outside_sum(chi0, lattice, r, total) >= 0.5:
        r *= 2
        if r > max_r:
            raise RuntimeError("r0 schedule exhausted")
    pts = lattice.points(lattice.enumerate(-r, r))
    norms = np.linalg.norm(pts, axis=1)
    keep = norms <= r
    norms, vals = norms[keep], np.abs(chi0.eval(pts[keep]))
    order = np.argsort(norms, kind="stable")
    norms, vals = norms[order], vals[order]
    uniq, first = np.unique(np.round(norms, 12), return_index=True)
    csum = np.cumsum(vals)
    last = np.r_[first[1:], len(norms)] - 1
    outside = total - csum[last]
    lo, hi = 0, len(uniq) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if outside[mid] < 0.5:
            hi = mid
        else:
            lo = mid + 1
    return float(norms[last[lo]])


def build_bundle(tau: float, delta: float, rho, m: int = 4, K0_tol=1e-6) -> tuple[KernelBundle, LatticePair]:
    lattice = make_lattices(rho)
    k = lattice.k
    chi0 = make_chi0(tau, m, k)
    chi1, K1, K1_err = make_chi1(delta, m, k)
    K0, info = compute_K0(chi0, lattice, K0_tol)
    r0 = compute_r0(chi0, lattice)
    bundle = KernelBundle(chi0=chi0, chi1=chi1, tau=tau, delta=delta, m=m, K0=K0, K1=K1, r0=r0,
                          K1_err=K1_err, info=info)
    return bundle, lattice
