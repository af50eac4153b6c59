"""Painting a tiling with copies of the model map Theta_L, and certified zeros.

Theta_L(z)_i = exp(pi i b_i z_i) sin(pi z_i / L) vanishes exactly on L Z^k.  Phi
glues translates Theta_L(z - n) together, weighted by the smoothed indicator
of the tile W_n.  When Phi stays within theta_L of a translate of Theta_L, every
zero of Theta_L persists as a non-degenerate zero of Phi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bandlimited import BLFunction, Factor, TermGroup, ThetaMap, make_chi1
from .convexgeom import Polytope
from .kernels import dsinc, sinc
from .lattice import _separable_params

GL_NODES = 16


# constants

@dataclass
class ThetaConstants:
    L: int
    b: np.ndarray
    r1: float
    theta: float
    E: float | None
    theta_sup: float
    cap: float
    inf_bound: float
    records: dict = field(default_factory=dict)

    @property
    def k(self):
        return len(self.b)


def _deriv_lip(L, b, r):
    """Bound for |g'| on |z| <= r where g is the derivative of one Theta entry."""
    a = math.pi * r / L
    return math.pi ** 2 * math.exp(math.pi * b * r) * ((b * b + 1 / L ** 2) * math.sinh(a) + 2 * b * math.cosh(a) / L)


def _deriv_entry(L, b, z):
    return np.pi * np.exp(1j * np.pi * b * z) * (1j * b * np.sin(np.pi * z / L) + np.cos(np.pi * z / L) / L)


def _disc_certified(L, b, r, n):
    """Polar grid over the closed disc of radius r; True if |g| - slack > 3/L everywhere."""
    rad = np.linspace(0.0, r, n + 1)
    ang = np.linspace(0.0, 2 * np.pi, 4 * n, endpoint=False)
    z = (rad[:, None] * np.exp(1j * ang[None, :])).ravel()
    low = np.abs(_deriv_entry(L, b, z)).min()
    cover = math.hypot(r / n / 2, r * (2 * np.pi / (4 * n)) / 2)
    return low - _deriv_lip(L, b, r) * cover > 3.0 / L, float(low), cover


def _choose_r1(L, b, n_grid=24, iters=48):
    lo, hi = 0.0, 0.25
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _disc_certified(L, b, mid, n_grid)[0]:
            lo = mid
        else:
            hi = mid
    if lo <= 0:
        raise RuntimeError("could not certify a derivative disc")
    return lo


def _line_lip(L, b, y):
    """Bound for |d/dw Theta_i| on the horizontal line Im w = y."""
    return math.pi * math.exp(-math.pi * b * y) * (b + 1 / L) * math.cosh(math.pi * y / L)


def _disc_lip(L, b, r):
    return math.pi * math.exp(math.pi * b * r) * (b + 1 / L) * math.cosh(math.pi * r / L)


def _theta_abs(L, b, w):
    return np.abs(np.exp(1j * np.pi * b * w) * np.sin(np.pi * w / L))


def _line_min(L, b, y):
    """min over Re w of |Theta_i(w)| on Im w = y.

    |sin(pi (s + i y) / L)|^2 = sin^2(pi s / L) + sinh^2(pi y / L), so the minimum
    sits on L Z and equals exp(-pi b y) sinh(pi |y| / L).
    """
    return math.exp(-math.pi * b * y) * math.sinh(math.pi * abs(y) / L)


def _axis_inf(L, b, r1, n=512, max_n=1 << 22, rel=1e-2):
    """Certified lower bound for inf |Theta_i| over {|Im w| <= 1} minus the discs D_r1(L Z).

    log|Theta_i| is harmonic off L Z and periodic in Re w, so the infimum over the
    cylinder is taken on its boundary: the lines Im w = +-1 (closed form) and the
    circle |w| = r1, sampled with a Lipschitz slack; the resolution doubles until the
    slack is a small fraction of the sampled minimum.
    """
    lines = [_line_min(L, b, y) for y in (1.0, -1.0)]
    while True:
        ang = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        raw = _theta_abs(L, b, r1 * np.exp(1j * ang)).min()
        low = raw - _disc_lip(L, b, r1) * math.pi * r1 / n
        if low > 0 and raw - low <= rel * raw:
            return float(min(low, *lines)), {"n": n, "disc_sampled_min": float(raw), "line_min": lines,
                                             "lipschitz": [_line_lip(L, b, 1.0), _line_lip(L, b, -1.0),
                                                           _disc_lip(L, b, r1)]}
        if n >= max_n:
            raise RuntimeError("certificate for the threshold did not close")
        n *= 2


def theta_sup_on_strip(L, b):
    """sup of |Theta_L| over {|Im z_i| <= 1}."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return float(math.cosh(math.pi / L) * np.sqrt(np.sum(np.exp(2 * np.pi * np.abs(b)))))


def chi1_tail_bound(chi1: BLFunction, R, ymax=1.0):
    """Bound for the integral of |chi1(z - t)| over t outside B_R(Re z), |Im z_i| <= ymax."""
    c, params = _separable_params(chi1)
    k = chi1.k
    full, tail = [], []
    rr = R / math.sqrt(k)
    for b, m in params:
        amp = math.cosh(math.pi * b * ymax) ** m
        s0 = 1 / (math.pi * b)
        full.append(amp * 2 * s0 * m / (m - 1))
        if rr >= s0:
            t = 2 * (math.pi * b) ** (-m) * rr ** (1 - m) / (m - 1)
        else:
            t = 2 * (s0 - max(rr, 0.0)) + 2 * s0 / (m - 1)
        tail.append(amp * t)
    total = 0.0
    for i in range(k):
        p = tail[i]
        for j in range(k):
            if j != i:
                p *= full[j]
        total += p
    return c * total


def _choose_E(chi1, target):
    R = 1.0
    while chi1_tail_bound(chi1, R) >= target:
        R *= 2
        if R > 1e12:
            raise RuntimeError("no finite E meets the tail condition")
    lo, hi = R / 2, R
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if chi1_tail_bound(chi1, mid) < target:
            hi = mid
        else:
            lo = mid
    return hi


def theta_constants(L, b, chi1: BLFunction | None = None, delta=None, m=4) -> ThetaConstants:
    if int(L) != L or L <= 1:
        raise ValueError("L must be an integer > 1")
    L = int(L)
    b = np.atleast_1d(np.asarray(b, dtype=float))
    k = len(b)
    if np.any(b < 0):
        raise ValueError("frequency offsets must be non-negative")
    r1 = min(_choose_r1(L, float(bi)) for bi in b)
    infs, recs = [], []
    for bi in b:
        v, rec = _axis_inf(L, float(bi), r1)
        infs.append(v)
        recs.append(rec)
    inf_bound = min(infs)
    cap = k ** -0.5 * 0.75 ** (k + 1) / L
    theta = min(cap, inf_bound)
    sup = theta_sup_on_strip(L, b)
    if chi1 is None and delta is not None:
        chi1 = make_chi1(delta, m, k)[0]
    E = None
    if chi1 is not None:
        E = _choose_E(chi1, theta / (2 * sup))
    records = {"axis_inf": recs, "r1_grid": 24,
               "r1_lipschitz": [_deriv_lip(L, float(bi), r1) for bi in b]}
    return ThetaConstants(L, b, r1, theta, E, sup, cap, inf_bound, records)


def nu_min_sv(A) -> float:
    """Smallest singular value."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return float(np.linalg.svd(A, compute_uv=False).min())


def _nu_eig(A):
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    ev = np.linalg.eigvalsh(A.conj().T @ A)
    return float(math.sqrt(max(ev.min(), 0.0)))


# maps C^k -> C^k

class BLMap:
    """A k-tuple of band-limited functions with vectorised values and Jacobians."""

    def __init__(self, funcs):
        self.funcs = list(funcs)
        self.k = self.funcs[0].k
        if len(self.funcs) != self.k:
            raise ValueError("need k component functions")

    def values(self, z):
        pts = np.asarray(z, dtype=complex).reshape(-1, self.k)
        return np.stack([f.eval(pts) for f in self.funcs], axis=1)

    def jacobian(self, z):
        pts = np.asarray(z, dtype=complex).reshape(-1, self.k)
        return np.stack([f.grad(pts) for f in self.funcs], axis=1)

    def __add__(self, other):
        return BLMap([f + g for f, g in zip(self.funcs, other.funcs)])


def theta_blmap(L, b) -> BLMap:
    return BLMap(ThetaMap(L, b).components())


# quadrature over tiles

def _gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def _interval_rule(lo, hi, h, n=GL_NODES):
    x, w = _gl(n)
    panels = max(1, int(math.ceil((hi - lo) / h)))
    edges = np.linspace(lo, hi, panels + 1)
    a, d = edges[:-1, None], np.diff(edges)[:, None]
    return (a + d * x[None, :]).reshape(-1, 1), (d * w[None, :]).ravel()


def _triangle_rule(A, B, C, n):
    # collapsed (Duffy) product rule on the unit square
    x, w = _gl(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    u, v, ww = u.ravel(), v.ravel(), (wu * wv).ravel()
    pts = A[None, :] + u[:, None] * (B - A)[None, :] + (u * v)[:, None] * (C - B)[None, :]
    area2 = abs((B - A)[0] * (C - A)[1] - (B - A)[1] * (C - A)[0])
    return pts, ww * u * area2


def _polygon_rule(P: Polytope, h, n=8):
    V = P.vertices
    c = V.mean(axis=0)
    pts, wts = [], []
    for i in range(len(V)):
        A, B = V[i], V[(i + 1) % len(V)]
        diam = max(np.linalg.norm(A - c), np.linalg.norm(B - c), np.linalg.norm(B - A))
        s = max(1, int(math.ceil(diam / h)))
        # uniform split of the triangle (c, A, B) into s^2 pieces
        e1, e2 = (A - c) / s, (B - c) / s
        for p in range(s):
            for q in range(s - p):
                o = c + p * e1 + q * e2
                tp, tw = _triangle_rule(o, o + e1, o + e2, n)
                pts.append(tp)
                wts.append(tw)
                if p + q < s - 1:
                    tp, tw = _triangle_rule(o + e1, o + e1 + e2, o + e2, n)
                    pts.append(tp)
                    wts.append(tw)
    return np.vstack(pts), np.concatenate(wts)


def tile_rule(P: Polytope, h):
    if P.k == 1:
        lo, hi = P.vertices[0, 0], P.vertices[1, 0]
        return _interval_rule(lo, hi, h)
    return _polygon_rule(P, h)


def check_tiling(tiles: dict, window: Polytope, tol=1e-6, n_samples=2000, seed=0):
    """Raise ValueError on gaps or overlaps (area balance plus sampled multiplicity)."""
    total = sum(P.volume() for P in tiles.values())
    wv = window.volume()
    if abs(total - wv) > tol * max(1.0, wv):
        raise ValueError(f"tile volumes {total:.9g} do not match the window {wv:.9g}")
    V = window.vertices
    rng = np.random.default_rng(seed)
    lo, hi = V.min(axis=0), V.max(axis=0)
    pts = lo + (hi - lo) * rng.random((n_samples, window.k))
    pts = pts[window.contains(pts, tol=-1e-7)]
    count = np.zeros(len(pts), dtype=int)
    for P in tiles.values():
        count += P.contains(pts, tol=-1e-9)
    # points landing within 1e-9 of a tile boundary are not informative
    near = np.zeros(len(pts), dtype=bool)
    for P in tiles.values():
        near |= np.abs(P.dist_to_boundary(pts)) < 1e-7
    bad = (count != 1) & ~near
    if bad.any():
        raise ValueError(f"{int(bad.sum())} sample points are in a gap or an overlap")


# the painted map

class TilingMap:
    """Phi(z)_i = sum_n Theta_L(z - n)_i * integral over W_n of chi1(z - t) dt.

    Each tile integral is replaced by a Gauss-Legendre rule, which keeps every
    entry an exact finite kernel sum; the quadrature error is estimated against a
    refined rule at probe points and must stay below theta_L / 10.
    """

    def __init__(self, tiles: dict, window: Polytope, constants: ThetaConstants, chi1: BLFunction,
                 h=None, check=True, budget=None):
        self.tiles = {tuple(int(v) for v in np.atleast_1d(n)): P for n, P in tiles.items()}
        self.window = window
        self.const = constants
        self.chi1 = chi1
        self.k = chi1.k
        self.L = constants.L
        self.b = constants.b
        if check:
            check_tiling(self.tiles, window)
        c, params = _separable_params(chi1)
        self._c = c
        self._kb = [bb for bb, _ in params]
        self._m = [mm for _, mm in params]
        if budget is None:
            budget = constants.theta / 10
        self.budget = budget
        h = h if h is not None else 1.0 / max(self._kb)
        for _ in range(12):
            err = self._quad_error(h)
            if err * constants.theta_sup <= budget:
                break
            h /= 2
        else:
            raise RuntimeError("quadrature budget unreachable")
        self.h = h
        self.quad_error = err * constants.theta_sup
        self._nodes = {n: tile_rule(P, h / 2) for n, P in self.tiles.items()}
        self._theta = ThetaMap(self.L, self.b)
        self._map = None

    @property
    def map(self) -> BLMap:
        """Phi written out as an explicit kernel sum (one term per quadrature node)."""
        if self._map is None:
            self._map = self._assemble(list(self.tiles))
        return self._map

    def _chi_factors(self):
        return [Factor(j, "sincpow", self._kb[j], self._m[j]) for j in range(self.k)]

    def _tile_integral(self, pts, P, h):
        x, w = tile_rule(P, h)
        f = BLFunction.kernel_sum(self.k, self._chi_factors(), x, self._c * w)
        return f.eval(pts)

    def _quad_error(self, h):
        probes = []
        for P in self.tiles.values():
            probes.append(P.vertices.mean(axis=0))
            probes.append(P.vertices[0])
        probes = np.asarray(probes)
        rng = np.random.default_rng(1)
        idx = rng.choice(len(probes), size=min(6, len(probes)), replace=False)
        pr = probes[idx].astype(complex)
        pr = np.vstack([pr, pr + 1j * np.ones(self.k)])
        tot = np.zeros(len(pr))
        for P in self.tiles.values():
            tot += np.abs(self._tile_integral(pr, P, h) - self._tile_integral(pr, P, h / 2))
        return float(tot.max())

    def _assemble(self, keys):
        funcs = []
        chi = self._chi_factors()
        for i in range(self.k):
            facs = [Factor(i, "cexp", float(self.b[i])), Factor(i, "sin", 1.0 / self.L)] + chi
            shifts, coefs = [], []
            for n in keys:
                x, w = self._nodes[n]
                s = np.empty((len(x), 2 + self.k))
                s[:, 0] = s[:, 1] = n[i]
                s[:, 2:] = x
                shifts.append(s)
                coefs.append(self._c * w)
            g = TermGroup(facs, np.vstack(shifts), np.concatenate(coefs))
            funcs.append(BLFunction(self.k, (g,)))
        return BLMap(funcs)

    def _tile_funcs(self):
        if not hasattr(self, "_tf"):
            chi = self._chi_factors()
            self._tf = {n: BLFunction.kernel_sum(self.k, chi, x, self._c * w) for n, (x, w) in self._nodes.items()}
        return self._tf

    # evaluation: Theta(z - n) is shared by every node of tile n, so it is factored out
    def values(self, z, keys=None):
        pts = np.asarray(z, dtype=complex).reshape(-1, self.k)
        out = np.zeros((len(pts), self.k), dtype=complex)
        tf = self._tile_funcs()
        for n in (keys if keys is not None else tf):
            out += self._theta(pts - np.asarray(n)) * tf[n].eval(pts)[:, None]
        return out

    def jacobian(self, z, keys=None):
        pts = np.asarray(z, dtype=complex).reshape(-1, self.k)
        J = np.zeros((len(pts), self.k, self.k), dtype=complex)
        tf = self._tile_funcs()
        for n in (keys if keys is not None else tf):
            q = pts - np.asarray(n)
            th, dth = self._theta(q), self._theta.jac_diag(q)
            I, dI = tf[n].eval(pts), tf[n].grad(pts)
            J += th[:, :, None] * dI[:, None, :]
            idx = np.arange(self.k)
            J[:, idx, idx] += dth * I[:, None]
        return J

    def derivative_bounds(self, x, r, rho):
        """Upper bounds (G1, G2) for max_i sum_j |d_j Phi_i| and max_i sum_jl |d_j d_l Phi_i|.

        Valid on {|Re z - x| <= rho, |Im z| <= r}.  Node by node it uses
        |sinc(w)| <= C min(1, 1/(pi s)), |sinc'(w)| <= C min(pi/2, 1/s + 1/(pi s^2)) and
        |sinc''(w)| <= C min(pi^2/3, pi/s + 2/s^2 + 2/(pi s^3)), with s = |Re w|, C = cosh(pi Im w).
        """
        x = np.asarray(x, dtype=float).reshape(-1, self.k)
        G1 = np.zeros(len(x))
        G2 = np.zeros(len(x))
        b, m = np.asarray(self._kb), np.asarray(self._m)
        ch = np.cosh(np.pi * b * r)
        T0 = float((np.exp(np.pi * self.b * r) * math.cosh(math.pi * r / self.L)).max())
        bb = float(np.max(self.b)) + 1 / self.L
        T1, T2 = math.pi * bb * T0, (math.pi * bb) ** 2 * T0
        nodes = np.vstack([v[0] for v in self._nodes.values()])
        wts = np.abs(np.concatenate([v[1] for v in self._nodes.values()])) * abs(self._c)
        k = self.k
        for s in range(0, len(x), 256):
            d = np.maximum(np.abs(x[s:s + 256, None, :] - nodes[None, :, :]) - rho, 0.0) * b
            with np.errstate(divide="ignore"):
                e0 = ch * np.minimum(1.0, 1.0 / (np.pi * d))
                e1 = ch * np.minimum(np.pi / 2, 1.0 / d + 1.0 / (np.pi * d * d))
                e2 = ch * np.minimum(np.pi ** 2 / 3, np.pi / d + 2.0 / d ** 2 + 2.0 / (np.pi * d ** 3))
            p0 = e0 ** m
            p1 = m * b * e0 ** (m - 1) * e1
            p2 = b * b * (m * (m - 1) * e0 ** np.maximum(m - 2, 0) * e1 ** 2 + m * e0 ** (m - 1) * e2)
            S0 = p0.prod(axis=2) @ wts
            S1 = np.zeros(len(d))
            S2 = np.zeros(len(d))
            for j in range(k):
                rest = np.prod(np.delete(p0, j, axis=2), axis=2) if k > 1 else 1.0
                S1 += (p1[:, :, j] * rest) @ wts
                S2 += (p2[:, :, j] * rest) @ wts
                for l in range(k):
                    if l != j:
                        rest2 = np.prod(np.delete(p0, [j, l], axis=2), axis=2) if k > 2 else 1.0
                        S2 += (p1[:, :, j] * p1[:, :, l] * rest2) @ wts
            G1[s:s + 256] = T1 * S0 + T0 * S1
            G2[s:s + 256] = T2 * S0 + 2 * T1 * S1 + T0 * S2
        return G1, G2

    def gradient_bound(self, x, r, rho):
        return self.derivative_bounds(x, r, rho)[0]

    def local(self, center, radius, rho=0.0):
        """Restriction to tiles within `radius` of center, valid for |Re z - center| <= rho.

        Returns (map, tail) with tail bounding the dropped contribution.
        """
        center = np.asarray(center, dtype=float).reshape(1, self.k)
        keys = [n for n, P in self.tiles.items() if P.dist_to_set(center)[0] <= radius]
        tail = self.const.theta_sup * chi1_tail_bound(self.chi1, max(radius - rho, 0.0))
        return _Restricted(self, keys), tail

    def edge_tail(self, z):
        """Bound for the part of an infinite tiling missing beyond the window edge."""
        x = np.real(np.asarray(z, dtype=complex)).reshape(-1, self.k)
        d = self.window.dist_to_boundary(x)
        return np.array([self.const.theta_sup * chi1_tail_bound(self.chi1, float(v)) for v in d])

    def translated(self, n):
        """The map built from the tiling shifted by the integer vector n."""
        n = np.asarray(n, dtype=int).reshape(self.k)
        tiles = {tuple(np.asarray(key) + n): P.translate(n) for key, P in self.tiles.items()}
        return TilingMap(tiles, self.window.translate(n), self.const, self.chi1, h=self.h * 2, check=False,
                         budget=self.budget)

    @property
    def n_terms(self):
        return sum(len(x) for x, _ in self._nodes.values()) * self.k


class _Restricted:
    def __init__(self, tm, keys):
        self.tm, self.keys, self.k = tm, keys, tm.k

    def values(self, z):
        return self.tm.values(z, self.keys)

    def jacobian(self, z):
        return self.tm.jacobian(z, self.keys)


def phi_of_tiling(tiles: dict, window: Polytope, constants: ThetaConstants, chi1: BLFunction, **kw) -> TilingMap:
    return TilingMap(tiles, window, constants, chi1, **kw)


# zeros

@dataclass
class CertifiedZero:
    z: np.ndarray
    residual: float
    nu: float
    nu_check: float
    index: tuple
    certified: bool

    def good(self, L):
        return self.certified and self.nu >= 1.0 / L


def _newton(fmap, z0, tol=1e-12, max_iter=80, max_halvings=20):
    z = np.array(z0, dtype=complex)
    with np.errstate(all="ignore"):
        F = fmap.values(z)
        res = np.linalg.norm(F, axis=1)
    active = np.isfinite(res)
    for _ in range(max_iter):
        todo = active & (res >= tol)
        if not todo.any():
            break
        idx = np.nonzero(todo)[0]
        J = fmap.jacobian(z[idx])
        try:
            step = np.linalg.solve(J, F[idx][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(Ji, Fi, rcond=None)[0] for Ji, Fi in zip(J, F[idx])])
        lam = np.ones(len(idx))
        pending = np.ones(len(idx), dtype=bool)
        znew, Fnew, rnew = z[idx].copy(), F[idx].copy(), res[idx].copy()
        for _h in range(max_halvings + 1):
            p = np.nonzero(pending)[0]
            if len(p) == 0:
                break
            trial = z[idx[p]] - lam[p, None] * step[p]
            with np.errstate(all="ignore"):
                Ft = fmap.values(trial)
                rt = np.linalg.norm(Ft, axis=1)
            ok = np.isfinite(rt) & (rt < res[idx[p]])
            znew[p[ok]], Fnew[p[ok]], rnew[p[ok]] = trial[ok], Ft[ok], rt[ok]
            pending[p[ok]] = False
            lam[p[~ok]] /= 2
        # starts that cannot decrease the residual are discarded
        active[idx[pending]] = False
        z[idx], F[idx], res[idx] = znew, Fnew, rnew
    return z, res, active & (res < tol * 1e3)


def polydisc_starts(center, radius, per_axis=3):
    center = np.asarray(center, dtype=complex).reshape(-1)
    k = len(center)
    t = np.linspace(-0.5, 0.5, per_axis) * radius if per_axis > 1 else np.zeros(1)
    one = (t[:, None] + 1j * t[None, :]).ravel()
    grids = np.meshgrid(*[center[i] + one for i in range(k)], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def find_zeros(fmap, center, radius, constants: ThetaConstants | None = None, per_axis=3, starts=None,
               index=None, dedup=1e-6):
    """Certified zeros of fmap in the closed polydisc of the given radius around center."""
    center = np.asarray(center, dtype=complex).reshape(-1)
    if starts is None:
        starts = polydisc_starts(center, radius, per_axis)
    z, res, conv = _newton(fmap, starts)
    out: list[CertifiedZero] = []
    for zi, ri in zip(z[conv], res[conv]):
        if np.any(np.abs(zi - center) > radius + 1e-9):
            continue
        if any(np.linalg.norm(zi - o.z) < dedup for o in out):
            continue
        J = fmap.jacobian(zi[None, :])[0]
        nu1, nu2 = nu_min_sv(J), _nu_eig(J)
        cert = ri < 1e-9 and abs(nu1 - nu2) < 1e-8 and nu1 > 1e-10
        out.append(CertifiedZero(zi, float(ri), nu1, nu2, index if index is not None else tuple(), bool(cert)))
    return out


def zeros_near_lattice(fmap, constants: ThetaConstants, n, per_axis=3):
    """Zeros in the polydisc of radius 2 r1 around the real point n."""
    return find_zeros(fmap, n, 2 * constants.r1, constants, per_axis=per_axis,
                      index=tuple(int(round(v)) for v in np.atleast_1d(n)))


def classify_zeros(zeros, tiles: dict, constants: ThetaConstants):
    """Split zeros into good ones (inside Int_{E+sqrt k} W_n) and the rest.

    Returns list of (zero, n or None, in_expected_disc) where the disc test is
    z in D_r1(n + L m) for some integer m.
    """
    k = constants.k
    margin = (constants.E or 0.0) + math.sqrt(k)
    out = []
    for zr in zeros:
        x = np.real(zr.z).reshape(1, k)
        owner = None
        for n, P in tiles.items():
            if P.depth(x)[0] > margin:
                owner = n
                break
        if owner is None:
            out.append((zr, None, None))
            continue
        nn = np.asarray(owner, dtype=float)
        mm = np.round((np.real(zr.z) - nn) / constants.L)
        ok = bool(np.all(np.abs(zr.z - (nn + constants.L * mm)) < constants.r1))
        out.append((zr, owner, ok))
    return out


# transcendental Bezout failure

class BezoutMap:
    """f1 = sin(pi z1), f2 = sum_n g_n(z2) sinc(z1 - n), g_n = beta_n phi p_n.

    phi = sinc(w / M)^M has spectrum in [-1/2, 1/2] and decays fast enough to tame
    the polynomials; p_n has alpha_n simple roots on the circle |w| = 0.6.
    """

    k = 2

    def __init__(self, alpha, root_radius=0.6):
        self.alpha = [int(a) for a in alpha]
        self.M = max(self.alpha + [0]) + 2
        self.roots = [root_radius * np.exp(2j * np.pi * (np.arange(a) + 0.5) / a) if a else np.zeros(0)
                      for a in self.alpha]
        self.beta = [2.0 ** -(n + 1) / self._sup(n) for n in range(len(self.alpha))]

    def _phi(self, w):
        return sinc(w / self.M) ** self.M

    def _dphi(self, w):
        return sinc(w / self.M) ** (self.M - 1) * dsinc(w / self.M)

    def _p(self, n, w):
        w = np.asarray(w, dtype=complex)
        return np.prod(w[..., None] - self.roots[n], axis=-1)

    def _dp(self, n, w):
        w = np.asarray(w, dtype=complex)
        r = self.roots[n]
        out = np.zeros(w.shape, dtype=complex)
        for j in range(len(r)):
            out += np.prod(w[..., None] - np.delete(r, j), axis=-1)
        return out

    def _sup(self, n):
        x = np.linspace(-60 * self.M, 60 * self.M, 200001)
        return float(np.abs(self._phi(x) * self._p(n, x)).max()) * 1.01

    def g(self, n, w):
        return self.beta[n] * self._phi(w) * self._p(n, w)

    def dg(self, n, w):
        return self.beta[n] * (self._dphi(w) * self._p(n, w) + self._phi(w) * self._dp(n, w))

    def values(self, z):
        z = np.asarray(z, dtype=complex).reshape(-1, 2)
        z1, z2 = z[:, 0], z[:, 1]
        f2 = np.zeros(len(z), dtype=complex)
        for n in range(len(self.alpha)):
            f2 += self.g(n, z2) * sinc(z1 - (n + 1))
        return np.stack([np.sin(np.pi * z1), f2], axis=1)

    def jacobian(self, z):
        z = np.asarray(z, dtype=complex).reshape(-1, 2)
        z1, z2 = z[:, 0], z[:, 1]
        J = np.zeros((len(z), 2, 2), dtype=complex)
        J[:, 0, 0] = np.pi * np.cos(np.pi * z1)
        for n in range(len(self.alpha)):
            J[:, 1, 0] += self.g(n, z2) * dsinc(z1 - (n + 1))
            J[:, 1, 1] += self.dg(n, z2) * sinc(z1 - (n + 1))
        return J


def bezout_demo(alpha, nmax=None, per_w=10):
    """Rows (n, alpha_n, zeros of the form (n, w) with |w| < 1, cumulative count).

    Lines z1 = j <= 0 consist of non-isolated zeros and are left out.
    """
    if nmax is None:
        nmax = len(alpha)
    F = BezoutMap(list(alpha)[:nmax])
    rows = []
    cum = 0
    for n in range(1, nmax + 1):
        t = np.linspace(-0.9, 0.9, per_w)
        w0 = (t[:, None] + 1j * t[None, :]).ravel()
        w0 = w0[np.abs(w0) < 1]
        z1 = n + np.array([0.0, 0.2, -0.2, 0.2j, -0.2j])
        starts = np.array([[a, w] for a in z1 for w in w0])
        zs = find_zeros(F, [n, 0.0], 1.0, starts=starts, index=(n,))
        cnt = sum(1 for zr in zs if zr.certified and abs(zr.z[0] - n) < 0.5 and abs(zr.z[1]) < 1)
        cum += cnt
        rows.append((n, F.alpha[n - 1], cnt, cum))
    return rows
