"""The one-step perturbation g = f + Psi(p_x, u_x) + g2 for a circle rotation, and its audits.

A Pipeline holds the x-independent data (kernels, lattice, marker, the simplicial
approximant F of the signal, the jittered product map).  Pipeline.build(x) runs the
per-point construction on windows anchored at an integer centre; moving the centre
along the orbit makes the whole computation exactly equivariant.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .bandlimited import BLFunction, FreqBox, sampling_reconstruct
from .convexgeom import Polytope
from .dynsys import GOLDEN, EquivariantSignal, build_marker, circle_dist, torus_system
from .interp import EXACT_LIMIT, AdmissibleFunction, InterpKernel, PsiField, S_matrix
from .lattice import build_bundle
from .simplicial import Complex, JitteredProductMap, VertexMap, approximate, certify_injective, staircase
from .tilingmap import TilingMap, theta_constants
from .voronoi import boundary_density, level1_tiles, level2_tiles, nu_field
from .welfare import allocate, r0_search

SCHEMA_VERSION = 1


class ParamError(ValueError):
    """A parameter inequality that cannot be met."""


class PipelineError(RuntimeError):
    pass


# parameters

@dataclass
class PipelineParams:
    a: float = 2.0
    delta: float = 0.25
    rho: float = 1.5
    tau: float = 0.4
    delta_p: float = 0.003
    N: int = 12
    c0: float = 3.0
    A: float = 0.5
    L0: float = 34.0
    L: int = 320
    M: int = 200_000
    m: int = 4
    eta: float = 1e-3
    F_delta: float = 1.5e-3
    P_start: int = 8
    Q_vertices: int = 16
    max_rounds: int = 12
    g_half: int = 160
    psi_half: int = 320
    phi_margin: int = 2400
    r0_schedule: tuple = (80, 160, 200, 240, 320, 400, 480, 640)
    mode: str = "demo"
    seed: int = 0
    # filled by choose_params
    K0: float = float("nan")
    K1: float = float("nan")
    r0: float = float("nan")
    r2: float = float("nan")
    b: float = float("nan")
    c1: float = float("nan")
    eps: float = float("nan")
    E: float = float("nan")
    R0: float = float("nan")
    R: int = 0
    log: list = field(default_factory=list)

    @property
    def pitch(self):
        return 1.0 / (8 * self.a)

    @property
    def nu_half(self):
        return int(self.psi_half + 2 * self.L + 4 * self.R0 + 2 * self.L)

    def to_dict(self):
        d = asdict(self)
        d["r0_schedule"] = list(self.r0_schedule)
        return d


def _check(log, name, ok, detail, strict_fail=True):
    log.append({"check": name, "ok": bool(ok), "detail": detail})
    if not ok and strict_fail:
        raise ParamError(f"{name} fails: {detail}")


def choose_params(system=None, signal=None, mode="demo", measure=True, **overrides) -> PipelineParams:
    """Validate the constants; in demo mode, measure the consequences the proof needs.

    Strict mode checks the sufficient conditions as stated and rejects desk-scale
    values.  Demo mode replaces three of them (c1 A > 2 dim CQ, the size of L, the
    choice of M) by direct measurements of the inequalities derived from them.
    """
    if mode not in ("strict", "demo"):
        raise ParamError(f"unknown mode {mode!r}")
    P = PipelineParams(mode=mode, **overrides)
    log = P.log
    k = 1
    dimP, dimCP, dimCQ = 1, 2, 2
    _check(log, "delta < min(1, a)", P.delta < min(1.0, P.a), f"{P.delta} vs {min(1.0, P.a)}")
    _check(log, "rho + tau < a", P.rho < P.a and P.rho + P.tau < P.a, f"{P.rho} + {P.tau} vs {P.a}")
    _check(log, "rho N integer", abs(P.rho * P.N - round(P.rho * P.N)) < 1e-12, f"{P.rho * P.N}")
    bundle, _ = build_bundle(P.tau, P.delta, [P.rho], P.m)
    P.K0, P.K1, P.r0 = bundle.K0, bundle.K1, bundle.r0
    _check(log, "4 K0 delta' < delta", 4 * P.K0 * P.delta_p < P.delta, f"{4 * P.K0 * P.delta_p:.6f} < {P.delta}")
    _check(log, "F_delta + eta < delta'", P.F_delta + P.eta < P.delta_p, f"{P.F_delta + P.eta} < {P.delta_p}")
    P.r2 = P.r0 + 1.0 / P.rho
    P.b = P.a + P.delta / 2
    P.c1 = P.rho / 2 - P.c0 * dimCP / P.N
    _check(log, "c0 (dim P + 1) / N < rho / 2", P.c0 * (dimP + 1) / P.N < P.rho / 2,
           f"{P.c0 * (dimP + 1) / P.N:.4f} < {P.rho / 2}")
    _check(log, "c1 > 0", P.c1 > 0, f"c1 = {P.c1:.4f}")
    # condition on L0 for intervals: (len + 2N) < c0 (len - 2(r2 + N)) whenever len > 2 L0
    need = (2 * P.N + 2 * P.c0 * (P.r2 + P.N)) / (P.c0 - 1)
    _check(log, "L0 > r2 + N", P.L0 > P.r2 + P.N, f"{P.L0} > {P.r2 + P.N:.3f}")
    _check(log, "|W + collar| < c0 |Int W| for |W| > 2 L0", 2 * P.L0 >= need, f"2 L0 = {2 * P.L0} >= {need:.3f}")
    _check(log, "L > 4 / delta", P.L > 4 / P.delta, f"{P.L} > {4 / P.delta}")
    # dim CQ inequality of the L0 notation, for an interval of length just above 2 L0
    _check(log, "2 dim CQ < c1 |Int_{r2+N} W|", 2 * dimCQ < P.c1 * (2 * P.L0 - 2 * (P.r2 + P.N)),
           f"{2 * dimCQ} < {P.c1 * (2 * P.L0 - 2 * (P.r2 + P.N)):.3f}")
    big_L = 1000 ** k * (P.A + 1) * (P.L0 + 1 + math.sqrt(k))
    strict = mode == "strict"
    _check(log, "c1 A > 2 dim CQ", P.c1 * P.A > 2 * dimCQ, f"{P.c1 * P.A:.3f} > {2 * dimCQ}", strict_fail=strict)
    _check(log, "L > 1000^k (A+1)(L0+1+sqrt k)", P.L > big_L, f"{P.L} > {big_L:.0f}", strict_fail=strict)
    # Lipschitz constant of x -> f(x)(lambda) bounds the modulus: eps = F_delta / Lip
    lip = 1.0
    if signal is not None:
        lip = float(2 * math.pi * np.sum(np.abs(signal.coefs) * np.abs(signal.indices).sum(axis=1)))
    P.eps = P.F_delta / lip
    C = theta_constants(P.L, [P.b], bundle.chi1)
    P.E = float(C.E)
    if not measure:
        return P
    system = system or torus_system([GOLDEN])
    marker = build_marker(system, P.M)
    rng = np.random.default_rng(P.seed)
    # the M condition: boundary zone density of the level-1 tiling
    zone = P.E + 2 * (P.L + 1) + P.L0 + 1
    Rm = 3.0 * marker.M1
    dens = [boundary_density(level1_tiles(system, marker, [x], Polytope.interval(-3 * Rm - 1, 3 * Rm + 1)), Rm, zone)
            for x in rng.random(3)]
    _check(log, "M: level-1 boundary zone density < 1/(6A+2)", max(dens) < 1 / (6 * P.A + 2),
           f"measured {max(dens):.4f} < {1 / (6 * P.A + 2):.4f} (R = {Rm:.0f}, zone {zone:.0f})")
    # level-2 tilings: R0 search, then the count inequality for the nonzero weights
    pipe = Pipeline(P, system, signal, _bundle=bundle, _marker=marker, _constants=C)
    snaps = [pipe.level2(float(x), 0)[2] for x in rng.random(4)]
    half = P.psi_half + 2 * P.L
    probe = np.arange(-half, half + 1, 3)[:, None]
    R0, tried = r0_search(snaps, P.A, P.L0, list(P.r0_schedule), centres=probe)
    P.R0 = float(R0)
    _check(log, "R0 tax inequality (measured)", True, f"R0 = {R0}, margins {[(r, round(m, 2)) for r, m in tried]}")
    worst = math.inf
    extent = 0.0
    for s in snaps:
        tab = allocate(s, P.A, P.L0, P.R0)
        lhs, rhs = count_inequality(tab, s, P, half)
        if len(lhs):
            worst = min(worst, float(np.min(rhs - lhs)))
        for n, W in s.tiles.items():
            if abs(n[0]) <= half:
                extent = max(extent, float(np.abs(W.vertices[:, 0] - n[0]).max()))
    _check(log, "nonzero-weight count inequality (measured)", worst > 0, f"min slack {worst:.3f}")
    P.R = int(P.N * math.ceil((max(P.R0, extent) + 1) / P.N))
    _check(log, "R in N Z, R > R0, tiles inside [-R, R)", P.R > P.R0 and P.R > extent,
           f"R = {P.R}, max tile extent {extent:.1f}")
    return P


def count_inequality(tab, snap, P, half):
    """Both sides of (|W + N-collar| / N) dim CP + #(n) dim CQ < rho/2 |Int_{r2+N} W| per tile."""
    lhs, rhs = [], []
    for j, n in enumerate(tab.keys):
        W = snap.tiles[tuple(int(v) for v in n)]
        lo, hi = W.vertices[:, 0].min(), W.vertices[:, 0].max()
        if abs(n[0]) > half or hi - lo <= 2 * P.L0:
            continue
        cnt = int((tab.w[j] > 0).sum())
        lhs.append((hi - lo + 2 * P.N) / P.N * 2 + cnt * 2)
        rhs.append(P.rho / 2 * max(0.0, hi - lo - 2 * (P.r2 + P.N)))
    return np.array(lhs), np.array(rhs)


# fast exact Psi

def psi_schur(kern: InterpKernel, pf: AdmissibleFunction, u, limit=EXACT_LIMIT) -> PsiField:
    """Exact Psi(p, u) with one factorisation of the sure block.

    For every subset F of the fractional sites the system on sure + F is solved
    through the Schur complement of the sure block, so only |F| x |F| solves remain;
    the averaged coefficients are z0 - Z E[x_F] on the sure sites and E[x_F] on the
    fractional ones.
    """
    u = np.asarray(u, dtype=float).reshape(len(pf.idx))
    keep = pf.p > 0
    idx, p, uu = pf.idx[keep], pf.p[keep], u[keep]
    k = kern.k
    if len(idx) == 0:
        return PsiField(kern, np.zeros((0, k), dtype=np.int64), np.zeros(0), 0.0, "exact", 0)
    s = np.flatnonzero(p >= 1.0)
    f = np.flatnonzero(p < 1.0)
    if len(f) > limit:
        raise ValueError(f"{len(f)} fractional sites exceed the exact limit {limit}")
    M = S_matrix(kern, idx)
    if len(s):
        lu = scipy.linalg.lu_factor(M[np.ix_(s, s)])
        z0 = scipy.linalg.lu_solve(lu, uu[s])
        Z = scipy.linalg.lu_solve(lu, M[np.ix_(s, f)]) if len(f) else np.zeros((len(s), 0))
        Sf = M[np.ix_(f, f)] - M[np.ix_(f, s)] @ Z
        rf = uu[f] - M[np.ix_(f, s)] @ z0
    else:
        z0, Z = np.zeros(0), np.zeros((0, len(f)))
        Sf, rf = M[np.ix_(f, f)], uu[f]
    pf_ = p[f]
    xf = np.zeros(len(f))
    for bits in itertools.product((False, True), repeat=len(f)):
        bits = np.array(bits, dtype=bool)
        w = float(np.prod(np.where(bits, pf_, 1 - pf_)))
        if w == 0.0 or not bits.any():
            continue
        sel = np.flatnonzero(bits)
        xf[sel] += w * np.linalg.solve(Sf[np.ix_(sel, sel)], rf[sel])
    coefs = np.zeros(len(idx))
    coefs[s] = z0 - Z @ xf
    coefs[f] = xf
    return PsiField(kern, idx, coefs, float(np.abs(uu).max()), "exact", len(f))


# ramps

def beta1(t, r0):
    return np.clip(np.asarray(t, dtype=float) - r0, 0.0, 1.0)


def beta2(t, N, r0):
    return np.clip((np.asarray(t, dtype=float) - N) / r0, 0.0, 1.0)


# the per-point construction

@dataclass
class Embedded:
    x: float
    center: int
    params: PipelineParams
    level1: object
    phi: TilingMap
    nu: object
    level2: object
    weights: object
    sites: np.ndarray          # Gamma_1 indices
    tile: np.ndarray           # owning tile key per site (or a sentinel)
    dist: np.ndarray
    p: np.ndarray
    u: np.ndarray
    psi: PsiField
    f: BLFunction
    g1: BLFunction
    g2: BLFunction
    grid: np.ndarray
    f_vals: np.ndarray
    g1_vals: np.ndarray
    g2_vals: np.ndarray
    Gmaps: dict
    info: dict

    @property
    def g_vals(self):
        return self.g1_vals + self.g2_vals

    def g(self, t):
        t = np.asarray(t, dtype=float)
        return np.real(self.g1.eval(t)) + np.real(self.g2.eval(t))

    def boundary_distance_at_center(self):
        return float(self.level2.dist_to_boundary(np.array([[float(self.center)]]))[0])

    def summary(self):
        return {"x": self.x, "center": self.center, "u_norm": float(np.abs(self.u).max()),
                "n_fractional": self.psi.n_fractional, "d0": self.boundary_distance_at_center(),
                "level1_keys": [list(k) for k in self.level1.keys()],
                "level2_sites": self.level2.sites[:, 0].tolist(), **self.info}


class Pipeline:
    def __init__(self, params: PipelineParams, system=None, signal=None, _bundle=None, _marker=None,
                 _constants=None):
        self.P = params
        self.system = system or torus_system([GOLDEN])
        self.alpha = float(self.system.alpha[0])
        self.signal = signal or demo_signal(self.system, params.a, params.delta)
        bundle, lattice = (_bundle, None) if _bundle is not None else build_bundle(
            params.tau, params.delta, [params.rho], params.m)
        if lattice is None:
            from .lattice import make_lattices
            lattice = make_lattices([params.rho])
        self.bundle, self.lattice = bundle, lattice
        self.kern = InterpKernel(bundle, lattice)
        self.marker = _marker or build_marker(self.system, params.M)
        self.C = _constants or theta_constants(params.L, [params.b], bundle.chi1)
        self.J = JitteredProductMap(params.eta, params.seed)
        self._F = None
        # opt-in cache of build(x, center) results; None disables it
        self.memo = None
        self.per_block = int(round(params.rho * params.N))

    # F: the simplicial approximant on the circle P

    @property
    def F(self):
        if self._F is None:
            self._F = build_F(self.signal, self.P, self.per_block)
        return self._F

    def Pi(self, y, n_vertices):
        """Angle chart of the circle, returned as (ordered vertex ids, weights) per point."""
        y = np.asarray(y, dtype=float) % 1.0
        s = y * n_vertices
        e = np.floor(s).astype(np.int64) % n_vertices
        beta = s - np.floor(s)
        e2 = (e + 1) % n_vertices
        lo = np.minimum(e, e2)
        hi = np.maximum(e, e2)
        wlo = np.where(e < e2, 1 - beta, beta)
        return lo, hi, wlo, 1 - wlo

    # stages

    def level2(self, x, center):
        P = self.P
        if not math.isfinite(P.R0):
            nu_half = P.psi_half + 4 * P.L + 4 * max(P.r0_schedule)
        else:
            nu_half = P.nu_half
        phi_half = nu_half + P.phi_margin
        win1 = Polytope.interval(center - phi_half, center + phi_half)
        s1 = level1_tiles(self.system, self.marker, [x], win1)
        tm = TilingMap(s1.tiles, win1, self.C, self.bundle.chi1)
        idx = np.arange(center - nu_half, center + nu_half + 1)[:, None]
        nf = nu_field(tm, self.C, idx)
        s2 = level2_tiles(nf, Polytope.interval(center - nu_half, center + nu_half), x=[x])
        return s1, tm, s2, nf

    def G_tile(self, x, n, W, wrow, spiral, coords):
        """The jittered map for tile n at relative Gamma-coordinates `coords` (Gamma index)."""
        P = self.P
        lo = W.vertices[:, 0].min() - n
        hi = W.vertices[:, 0].max() - n
        Fm = self.F
        nP = Fm.images.shape[0]
        blocks = np.arange(int(math.floor(lo / P.N)), int(math.floor(hi / P.N)) + 1)
        t = np.clip(np.minimum(hi, (blocks + 1) * P.N) - np.maximum(lo, blocks * P.N), 0, None) / P.N
        live = t > 0
        blocks, t = blocks[live], t[live]
        y = self.alpha * (n + blocks * P.N) + x
        a_lo, a_hi, w_lo, w_hi = self.Pi(y, nP)
        slots = [(0, int(b), [None, int(l), int(h)], np.array([1 - tb, tb * wl, tb * wh]))
                 for b, tb, l, h, wl, wh in zip(blocks, t, a_lo, a_hi, w_lo, w_hi)]
        qm = np.flatnonzero(wrow > 0)
        if len(qm):
            ms = spiral[qm, 0]
            yq = self.alpha * (n + ms) + x
            q_lo, q_hi, qw_lo, qw_hi = self.Pi(yq, P.Q_vertices)
            for m, w, l, h, wl, wh in zip(ms, wrow[qm], q_lo, q_hi, qw_lo, qw_hi):
                slots.append((1, int(m), [None, int(l), int(h)], np.array([1 - w, w * wl, w * wh])))
        coords = np.asarray(coords, dtype=np.int64)
        bidx = np.floor_divide(coords, self.per_block)
        mu = coords - bidx * self.per_block
        Fv = {int(b): tb * (wl * Fm.images[l] + wh * Fm.images[h])
              for b, tb, l, h, wl, wh in zip(blocks, t, a_lo, a_hi, w_lo, w_hi)}
        G = np.array([Fv[int(b)][m] if int(b) in Fv else 0.0 for b, m in zip(bidx, mu)])
        parts = self.J.decompose(slots)
        keys = [q[0] for q in parts]
        wts = np.array([q[1] for q in parts])
        Jv = wts @ self.J.jitter(keys, coords) if len(parts) else np.zeros(len(coords))
        return G + Jv, {"slots": slots, "parts": parts, "blocks": blocks, "t": t}

    def build(self, x, center=0, override=None) -> Embedded:
        """g for the point x; `override` reuses the tiling data of another Embedded."""
        P = self.P
        if not math.isfinite(P.R0):
            raise PipelineError("parameters are not measured yet (run choose_params)")
        x = float(x) % 1.0
        center = int(center)
        if override is None and self.memo is not None and (x, center) in self.memo:
            return self.memo[(x, center)]
        if override is None:
            s1, tm, s2, nf = self.level2(x, center)
            tab = allocate(s2, P.A, P.L0, P.R0)
        else:
            s1, tm, s2, nf, tab = override.level1, override.phi, override.level2, override.nu, override.weights
        third = int(round(1 / self.lattice.step1_f[0]))
        sites = np.arange(third * (center - P.psi_half), third * (center + P.psi_half) + 1)
        lam = sites / third
        dist = s2.dist_to_boundary(lam[:, None])
        owner = np.full(len(sites), np.iinfo(np.int64).min)
        period = self.lattice.period[0]
        for key in s2.keys():
            n = key[0]
            inside = s2.tiles[key].contains(lam[:, None], 1e-9) & ((sites - third * n) % period == 0)
            sel = inside & (owner == np.iinfo(np.int64).min)
            owner[sel] = n
        has = owner != np.iinfo(np.int64).min
        p = np.where(has, beta1(dist, P.r0), 0.0)
        b2 = np.where(has, beta2(dist, P.N, P.r0), 0.0)
        fvals = self.signal.values([x], lam[:, None])
        u = np.zeros(len(sites))
        kidx = tab.key_index()
        Gmaps = {}
        for n in np.unique(owner[has & (b2 > 0)]):
            sel = np.flatnonzero((owner == n) & (b2 > 0))
            j = kidx.get((int(n),))
            if j is None:
                raise PipelineError(f"tile {n} has no weight row")
            if not tab.safe_mask(np.array([[n]]))[0]:
                raise PipelineError(f"tile {n} is outside the safe interior of the allocation window")
            coords = (sites[sel] - third * int(n)) // period
            Gv, meta = self.G_tile(x, int(n), s2.tiles[(int(n),)], tab.w[j], tab.spiral, coords)
            u[sel] = b2[sel] * (Gv - fvals[sel])
            Gmaps[int(n)] = meta
        unorm = float(np.abs(u).max())
        if unorm >= P.delta_p:
            raise PipelineError(f"|u_x| = {unorm:.3g} >= delta' = {P.delta_p}")
        pf = AdmissibleFunction(self.lattice, sites[:, None], p)
        ok, bad = pf.check(P.r0)
        if not ok:
            raise PipelineError(f"support of p_x is not admissible: {bad}")
        psi = psi_schur(self.kern, pf, u)
        fx = self.signal([x])
        g1 = fx + psi.func
        g2 = tm.map.funcs[0].real_part().scale(P.delta / (2 * P.K1))
        grid = center + np.arange(-P.g_half, P.g_half, P.pitch)
        f_vals = self.signal.values([x], grid[:, None])
        g1_vals = f_vals + np.real(psi(grid[:, None]))
        g2_vals = P.delta / (2 * P.K1) * np.real(tm.values(grid[:, None])[:, 0])
        info = {"n_sites": int(len(psi.idx)), "quad_error": float(tm.quad_error)}
        emb = Embedded(x, center, P, s1, tm, nf, s2, tab, sites, owner, dist, p, u, psi, fx, g1, g2, grid, f_vals,
                       g1_vals, g2_vals, Gmaps, info)
        if override is None and self.memo is not None:
            self.memo[(x, center)] = emb
        return emb

    # Case-1 support: product vertices of the carrier simplex and their images

    def carrier_images(self, emb: Embedded, n, coords):
        """Vertex images (G + J on `coords`) of the staircase simplex carrying tile n's point."""
        meta = emb.Gmaps[int(n)]
        slots = meta["slots"]
        parts = staircase([s[3] for s in slots])
        Fm = self.F
        bidx = np.floor_divide(coords, self.per_block)
        mu = coords - bidx * self.per_block
        imgs, keys, wts = [], [], []
        for vt, wt in parts:
            key = 0
            Gv = np.zeros(len(coords))
            for (kind, slot, vids, _), i in zip(slots, vt):
                key ^= self.J.slot_key(kind, slot, vids[i])
                if kind == 0 and vids[i] is not None:
                    hit = bidx == slot
                    Gv[hit] = Fm.images[vids[i]][mu[hit]]
            imgs.append(Gv)
            keys.append(key)
            wts.append(wt)
        imgs = np.array(imgs) + self.J.jitter(keys, coords)
        return imgs, np.array(wts), keys


def demo_signal(system, a=2.0, delta=0.25):
    """f(x)(t) = Re c exp(2 pi i (2x + w t)) with |c| = 0.75: f(x + 1/2) = f(x)."""
    return EquivariantSignal(system, [0.75 * np.exp(0.3j)], [[2]], a, delta)


def build_F(signal, P: PipelineParams, per_block):
    """Simplicial approximant of x -> (f(x)(mu))_{mu in Gamma cap [0, N)} on a subdivided circle."""
    base = Complex.circle(P.P_start)
    # samples: a uniform grid with four points per edge of the expected final subdivision
    rounds = 0
    lip = float(2 * math.pi * np.sum(np.abs(signal.coefs) * np.abs(signal.indices).sum(axis=1)))
    while P.P_start * 2 ** rounds * P.F_delta < 2 * lip and rounds < P.max_rounds:
        rounds += 1
    n_final = P.P_start * 2 ** rounds
    xs = np.arange(4 * n_final) / (4 * n_final)
    e = np.floor(xs * P.P_start).astype(np.int64) % P.P_start
    beta = xs * P.P_start - np.floor(xs * P.P_start)
    V = np.stack([e, (e + 1) % P.P_start], 1)
    W = np.stack([1 - beta, beta], 1)
    mus = np.arange(per_block) / P.rho
    fv = _signal_table(signal, xs, mus)
    # sample pairs closer than eps = F_delta / Lip, where the modulus condition is checked
    span = max(1, min(4, int(P.F_delta / lip * len(xs)) - 1))
    i = np.arange(len(xs))
    pairs = np.concatenate([np.stack([i, (i + d) % len(xs)], 1) for d in range(1, span + 1)])
    res = approximate(base, V, W, fv, P.F_delta, close_pairs=pairs, max_rounds=P.max_rounds)
    cx = res.vmap.complex
    n = cx.n_vertices
    rank = _cycle_order(cx, start=0, toward=1)
    if rank is None or len(set(rank.tolist())) != n:
        raise PipelineError("subdivided circle is not a single cycle")
    images = np.empty_like(res.vmap.images)
    images[rank] = res.vmap.images
    vm = VertexMap(Complex.circle(n), images)
    vm.info = {"rounds": res.rounds, "error": res.error, "star_diam": res.star_diam, "vertices": n}
    return vm


def _cycle_order(cx, start, toward):
    """Position of each vertex along a 1-dim cycle, walking from start in the direction of toward."""
    nbr = {v: [] for v in range(cx.n_vertices)}
    for a, b in cx.maximal:
        nbr[a].append(b)
        nbr[b].append(a)
    if any(len(x) != 2 for x in nbr.values()):
        return None
    # pick the first step so the walk heads toward the original neighbour
    first = min(nbr[start], key=lambda v: np.linalg.norm(cx.coords[v] - cx.coords[toward]))
    rank = np.full(cx.n_vertices, -1, dtype=np.int64)
    prev, cur = start, first
    rank[start] = 0
    k = 1
    while cur != start:
        if rank[cur] >= 0:
            return None
        rank[cur] = k
        k += 1
        prev, cur = cur, next(v for v in nbr[cur] if v != prev)
    return rank if k == cx.n_vertices else None


def _signal_table(signal, xs, mus):
    ph = 2j * np.pi * (np.asarray(xs)[:, None, None] * signal.indices[None, None, :, 0]
                       + mus[None, :, None] * signal.omega[None, None, :, 0])
    return np.real(np.exp(ph) @ signal.coefs)


# audits

@dataclass
class EmbeddingReport:
    params: dict
    sup_g_minus_f: float
    sup_g1_minus_f: float
    sup_g2: float
    budget: dict
    pairs: list
    cases: dict
    freq_audit: dict
    criteria: dict
    points: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(_clean(self.to_dict()), sort_keys=True, indent=1)

    def pairs_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "x", "y", "d", "sup_diff", "case"])
        for r in self.pairs:
            w.writerow([r["i"], r["j"], f"{r['x']:.12f}", f"{r['y']:.12f}", f"{r['d']:.12f}",
                        f"{r['sup_diff']:.12e}", r["case"]])
        return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def spectral_boxes(P: PipelineParams):
    """[-a/2, a/2] for g1 and the two boxes of Delta and -Delta for g2."""
    low = FreqBox.symmetric([P.a / 2])
    hi = FreqBox(np.array([P.a / 2]), np.array([P.a / 2 + P.delta / 2]))
    return low, hi, hi.negate()


def freq_audit(emb: Embedded, other: Embedded | None = None, cut=None):
    """FreqBox containment for g1 and g2, then an FFT band split of the grid difference.

    The split uses a Kaiser taper; the low part is compared with the g1 difference
    and the high part with the g2 difference on the middle half of the grid.
    """
    P = emb.params
    low, hi, nhi = spectral_boxes(P)
    b1 = [g.support(1) for g in emb.g1.groups]
    b2 = [g.support(1) for g in emb.g2.groups]
    boxes_ok = bool(all(low.contains(b) for b in b1)
                    and all(hi.contains(b) or nhi.contains(b) for b in b2))
    gap_lo = max(max(abs(b.lo[0]), abs(b.hi[0])) for b in b1)
    inner = min(min(abs(b.lo[0]), abs(b.hi[0])) for b in b2)
    # strict separation: g1 stays in [-a/2, a/2], g2 starts beyond a/2
    disjoint = bool(gap_lo <= P.a / 2 < inner)
    s1 = FreqBox([-gap_lo], [gap_lo])
    s2 = FreqBox([inner], [max(abs(b.hi[0]) for b in b2)])
    d1 = emb.g1_vals - (other.g1_vals if other is not None else 0)
    d2 = emb.g2_vals - (other.g2_vals if other is not None else 0)
    tot = d1 + d2
    n = len(tot)
    taper = np.kaiser(n, 20.0)
    freqs = np.fft.rfftfreq(n, d=P.pitch)
    cut = cut if cut is not None else 0.5 * (gap_lo + inner)
    spec = np.fft.rfft(tot * taper)
    lowpart = np.fft.irfft(np.where(freqs <= cut, spec, 0), n)
    mid = slice(n // 4, 3 * n // 4)
    ref1 = (d1 * taper)[mid]
    ref2 = (d2 * taper)[mid]
    scale = max(float(np.abs(tot[mid]).max()), 1e-300)
    e1 = float(np.abs(lowpart[mid] - ref1).max()) / scale
    e2 = float(np.abs((tot * taper - lowpart)[mid] - ref2).max()) / scale
    return {"g1_box": [float(s1.lo[0]), float(s1.hi[0])], "g2_box": [float(s2.lo[0]), float(s2.hi[0])],
            "boxes_ok": boxes_ok, "disjoint": disjoint, "cut": float(cut), "split_error": max(e1, e2),
            "ok": bool(boxes_ok and disjoint and max(e1, e2) < 1e-3)}


def error_budget(pipe: Pipeline, emb: Embedded, extra=80):
    """Evaluation error of g on the grid: Psi site truncation (measured by widening) plus
    the Phi quadrature and window-edge tails."""
    P = pipe.P
    wide = PipelineParams(**{**P.to_dict(), "psi_half": P.psi_half + extra, "log": []})
    wide.r0_schedule = tuple(wide.r0_schedule)
    pw = Pipeline(wide, pipe.system, pipe.signal, _bundle=pipe.bundle, _marker=pipe.marker, _constants=pipe.C)
    pw._F = pipe.F
    e2 = pw.build(emb.x, emb.center, override=emb)
    psi_trunc = float(np.abs(e2.g1_vals - emb.g1_vals).max())
    edge = float(emb.phi.edge_tail(np.array([[emb.center + P.g_half]]))[0])
    phi_err = P.delta / (2 * P.K1) * (emb.phi.quad_error + edge)
    return {"psi_truncation": psi_trunc, "phi": phi_err, "total": psi_trunc + phi_err + 1e-12}


def shifted_center_equivariance(pipe: Pipeline, x, n, probes):
    """max |g(T^n x)(t) - g(x)(t + n)| with windows moved along the orbit."""
    a = pipe.build((x + n * pipe.alpha) % 1.0, 0)
    b = pipe.build(x, n)
    return float(np.abs(a.g(probes) - b.g(probes + n)).max())


def local_certificate(pipe: Pipeline, ex: Embedded, ey: Embedded, n):
    """Injectivity of the jittered map on the two carrier simplices, restricted to the
    Gamma points deep inside tile n."""
    P = pipe.P
    W = ex.level2.tiles[(int(n),)]
    lo, hi = W.vertices[:, 0].min() - n, W.vertices[:, 0].max() - n
    depth = P.r0 + P.N
    step = 1 / P.rho
    coords = np.arange(int(math.ceil((lo + depth) / step)), int(math.floor((hi - depth) / step)) + 1)
    ix, wx, kx = pipe.carrier_images(ex, n, coords)
    iy, wy, ky = pipe.carrier_images(ey, n, coords)
    # identify shared vertices by key (keys are injective on vertices with overwhelming probability)
    allkeys = list(dict.fromkeys(kx + ky))
    pos = {k: i for i, k in enumerate(allkeys)}
    images = np.zeros((len(allkeys), len(coords)))
    for k, v in zip(kx, ix):
        images[pos[k]] = v
    for k, v in zip(ky, iy):
        images[pos[k]] = v
    sx = tuple(sorted(pos[k] for k in kx))
    sy = tuple(sorted(pos[k] for k in ky))
    simp = [sx] if sx == sy else [sx, sy]
    cert = certify_injective(images, simp, None, tol=1e-12)
    gx = wx @ ix
    gy = wy @ iy
    return cert, {"coords": len(coords), "dim_x": len(sx) - 1, "dim_y": len(sy) - 1,
                  "image_gap": float(np.abs(gx - gy).max())}


def verify_embedding(pipe: Pipeline, n_pool=72, n_pairs=1000, seed=0, case1_pairs=2):
    """Contrapositive separation test on seeded pairs with d >= delta, plus every audit."""
    P = pipe.P
    rng = np.random.default_rng(seed)
    xs = rng.random(n_pool) if n_pool else np.zeros(0)
    embs = [pipe.build(x, 0) for x in xs]
    pts = [{"x": float(e.x), **{k: v for k, v in e.summary().items() if k in ("u_norm", "n_fractional", "d0")}}
           for e in embs]
    cand = [(i, j) for i in range(len(xs)) for j in range(i + 1, len(xs))
            if float(circle_dist(xs[i], xs[j])) >= P.delta]
    if len(cand) > n_pairs:
        pick = rng.choice(len(cand), size=n_pairs, replace=False)
        cand = [cand[t] for t in sorted(pick)]
    pairs = []
    for i, j in cand:
        diff = float(np.abs(embs[i].g_vals - embs[j].g_vals).max())
        case = 1 if embs[i].boundary_distance_at_center() > P.L0 else 2
        pairs.append({"i": i, "j": j, "x": float(xs[i]), "y": float(xs[j]),
                      "d": float(circle_dist(xs[i], xs[j])), "sup_diff": diff, "case": case})
    budget = error_budget(pipe, embs[0]) if embs else {"total": 0.0}
    # constructed Case-1 pairs: identical tiling data, y = x + 1/2 so that f(x) = f(y)
    constructed = []
    for e in embs:
        if len(constructed) >= case1_pairs:
            break
        if e.boundary_distance_at_center() <= P.L0 + P.L / 8:
            continue
        ey = pipe.build(e.x + 0.5, 0, override=e)
        n = e.level2.tile_of(np.array([[0.0]]))[0][0]
        cert, meta = local_certificate(pipe, e, ey, n)
        constructed.append({"x": e.x, "y": ey.x, "f_diff": float(np.abs(e.f_vals - ey.f_vals).max()),
                            "g2_diff": float(np.abs(e.g2_vals - ey.g2_vals).max()),
                            "sup_diff": float(np.abs(e.g_vals - ey.g_vals).max()),
                            "certified": cert.ok, "margins": cert.margins, **meta})
    sup_gf = max((float(np.abs(e.g_vals - e.f_vals).max()) for e in embs), default=0.0)
    sup_g1f = max((float(np.abs(e.g1_vals - e.f_vals).max()) for e in embs), default=0.0)
    sup_g2 = max((float(np.abs(e.g2_vals).max()) for e in embs), default=0.0)
    fa = [freq_audit(embs[i], embs[j]) for i, j in cand[:5]] if cand else \
        ([freq_audit(embs[0])] if embs else [])
    for r in pairs:
        if r["sup_diff"] <= 10 * budget["total"]:
            r["diagnostic"] = {"x": _diagnostic(embs[r["i"]]), "y": _diagnostic(embs[r["j"]])}
    margin = min((r["sup_diff"] for r in pairs), default=math.inf)
    c_margin = min((c["sup_diff"] for c in constructed), default=math.inf)
    crit = {
        "pairs_separated": bool(all(r["sup_diff"] > 10 * budget["total"] for r in pairs)),
        "constructed_case1": bool(all(c["certified"] and c["sup_diff"] > 10 * budget["total"] for c in constructed)),
        "g_minus_f_below_delta": bool(sup_gf < P.delta),
        "g1_minus_f_below_2K0_delta_p": bool(sup_g1f < 2 * P.K0 * P.delta_p),
        "g2_at_most_half_delta": bool(sup_g2 <= P.delta / 2 + 1e-12),
        "frequency_audit": bool(all(a["ok"] for a in fa)),
    }
    cases = {"case1": sum(1 for r in pairs if r["case"] == 1), "case2": sum(1 for r in pairs if r["case"] == 2),
             "min_margin": margin, "constructed": constructed, "constructed_min": c_margin}
    return EmbeddingReport(P.to_dict(), sup_gf, sup_g1f, sup_g2, budget, pairs, cases,
                           {"pairs": fa, "ok": crit["frequency_audit"]}, crit, pts)


def _diagnostic(e: Embedded):
    """Tiles, weights and field sizes of one point, for a failed pair."""
    kidx = e.weights.key_index()
    near = [k for k in e.level2.keys() if abs(k[0] - e.center) <= e.params.psi_half]
    return {**e.summary(), "tiles": {str(k[0]): e.level2.tiles[k].vertices[:, 0].tolist() for k in near},
            "weights": {str(k[0]): {int(m): float(w) for m, w in zip(e.weights.spiral[:, 0], e.weights.w[kidx[k]])
                                    if w > 0} for k in near if k in kidx},
            "p_positive": int((e.p > 0).sum()), "u_norm": float(np.abs(e.u).max())}


# discretisation (continuous signal -> discrete signal)

def discretize(phi: BLFunction, D, n_range):
    """n -> (phi(n + j/D))_{0 <= j < D} for the integers n in n_range (k = 1)."""
    ns = np.asarray(list(n_range), dtype=float)
    t = (ns[:, None] + np.arange(D)[None, :] / D).ravel()
    vals = np.real(phi.eval(t[:, None])) if len(t) else np.zeros(0)
    return vals.reshape(len(ns), D)


def undiscretize_check(phi: BLFunction, D, n_lo, n_hi, probes=None):
    """Rebuild phi from its discrete signal on [n_lo, n_hi) and compare on the centre half.

    The cardinal series uses exactly the D samples per integer that discretize
    returns, so agreement within the tail bound witnesses that the discrete
    signal determines phi there.
    """
    a = phi.freqbox.type_widths()
    if not np.all(a < D):
        raise ValueError(f"band width {a} not below D = {D}")
    disc = discretize(phi, D, range(int(n_lo), int(n_hi)))
    rec = sampling_reconstruct(phi, [1.0 / D], [(n_lo, n_hi - 1.0 / D)])
    if rec.samples.shape != (disc.size,) or not np.allclose(np.real(rec.samples), disc.ravel(), rtol=0, atol=1e-12):
        raise PipelineError("reconstruction nodes do not match the discrete signal")
    c = rec.center[0]
    h = rec.half_width[0]
    probes = np.linspace(c - h, c + h, 257) if probes is None else np.asarray(probes)
    err = float(np.abs(np.real(rec.func.eval(probes[:, None])) - np.real(phi.eval(probes[:, None]))).max())
    return err, rec.tail_bound, disc
