"""Interpolation on admissible sets: phi, S, S^-1, psi and the averaged field Psi(p, u)."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .bandlimited import BLFunction, Factor, KernelBundle
from .lattice import LatticePair, _separable_params, _tail_1d, is_admissible

EXACT_LIMIT = 20


@dataclass
class SeqOnSet:
    lattice: LatticePair
    idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.idx = np.asarray(self.idx, dtype=np.int64).reshape(-1, self.lattice.k)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.idx))

    @property
    def points(self):
        return self.lattice.points(self.idx)

    @property
    def norm(self):
        return float(np.abs(self.values).max()) if len(self.values) else 0.0

    def shifted(self, n):
        return SeqOnSet(self.lattice, self.idx + self.lattice.shift_idx(n), self.values)


class InterpKernel:
    """K(s) = chi0(s) prod_i sinc(rho_i s_i), the building block of phi."""

    def __init__(self, bundle: KernelBundle, lattice: LatticePair):
        self.bundle = bundle
        self.lattice = lattice
        self.k = lattice.k
        c, params = _separable_params(bundle.chi0)
        self.c0 = c
        self.params = params
        self.rho_f = np.array([float(r) for r in lattice.rho])
        self.factors = []
        for i, (b, m) in enumerate(params):
            self.factors.append(Factor(i, "sincpow", b, m))
            self.factors.append(Factor(i, "sinc", float(self.rho_f[i])))
        self._tables: dict = {}

    def _axis_table(self, i, dmax):
        """Values of sinc(b d g)^m sinc(rho d g) for integer d in [-dmax, dmax], exact zeros on Gamma."""
        cached = self._tables.get(i)
        if cached is not None and cached[0] >= dmax:
            return cached
        from .kernels import sinc

        dmax = max(dmax, 16)
        d = np.arange(-dmax, dmax + 1)
        g = self.lattice.step1_f[i]
        b, m = self.params[i]
        v = sinc(b * d * g) ** m * sinc(self.rho_f[i] * d * g)
        period = self.lattice.period[i]
        v[(d % period == 0) & (d != 0)] = 0.0
        v[dmax] = 1.0
        self._tables[i] = (dmax, v)
        return self._tables[i]

    def matrix(self, rows, cols):
        rows = np.asarray(rows, dtype=np.int64).reshape(-1, self.k)
        cols = np.asarray(cols, dtype=np.int64).reshape(-1, self.k)
        out = np.full((len(rows), len(cols)), self.c0)
        if len(rows) == 0 or len(cols) == 0:
            return out
        for i in range(self.k):
            diff = rows[:, i][:, None] - cols[:, i][None, :]
            dmax, v = self._axis_table(i, int(np.abs(diff).max()))
            out *= v[diff + dmax]
        return out

    def function(self, idx, coefs) -> BLFunction:
        pts = self.lattice.points(idx)
        return BLFunction.kernel_sum(self.k, self.factors, pts, self.c0 * np.asarray(coefs, dtype=complex))

    def tail_sup(self, d):
        """Bound on sup_t of the sum of |chi0(t - lambda)| over Gamma_1 points farther than d from t."""
        if d <= 0:
            return math.inf
        from .lattice import _axis_sup

        per_axis = []
        tails = []
        for (b, m), g in zip(self.params, self.lattice.step1_f):
            per_axis.append(_axis_sup(b, m, g, 1e-6)[0])
            tails.append(_tail_1d(b, m, g, d / math.sqrt(self.k)))
        tot = 0.0
        for i in range(self.k):
            rest = 1.0
            for j in range(self.k):
                if j != i:
                    rest *= per_axis[j]
            tot += tails[i] * rest
        return self.c0 * tot


def phi(kern: InterpKernel, seq: SeqOnSet, z, radius=None):
    """phi_Lambda(u)(z); with a radius, only sites within that distance of Re z are summed."""
    z = np.asarray(z)
    pts = z.reshape(-1, kern.k) if not (kern.k == 1 and z.ndim <= 1) else z.reshape(-1, 1)
    if len(seq.idx) == 0:
        out = np.zeros(len(pts), dtype=complex)
    elif radius is None:
        out = kern.function(seq.idx, seq.values).eval(pts)
    else:
        out = np.zeros(len(pts), dtype=complex)
        sites = seq.points
        for j, p in enumerate(pts):
            near = np.linalg.norm(sites - p.real, axis=1) <= radius
            if np.any(near):
                out[j] = kern.function(seq.idx[near], seq.values[near]).eval(p[None, :])[0]
    return out[0] if z.ndim == 0 or (z.ndim == 1 and kern.k > 1) else out


def S_matrix(kern: InterpKernel, idx):
    return kern.matrix(idx, idx)


def S_apply(kern: InterpKernel, seq: SeqOnSet) -> SeqOnSet:
    if len(seq.idx) == 0:
        return seq
    return SeqOnSet(seq.lattice, seq.idx, S_matrix(kern, seq.idx) @ seq.values)


def S_minus_id_norm(kern: InterpKernel, idx) -> float:
    """Operator norm of S - id on l^inf, i.e. the max absolute row sum."""
    if len(idx) == 0:
        return 0.0
    M = S_matrix(kern, idx)
    np.fill_diagonal(M, 0.0)
    return float(np.abs(M).sum(axis=1).max())


def neumann_inverse(M, u, tol):
    """sum_{n<=N} (id - M)^n u with tail ||u|| 2^-N <= tol/2."""
    norm = float(np.abs(u).max()) if len(u) else 0.0
    if norm == 0.0:
        return np.zeros_like(u), 0
    N = max(0, math.ceil(math.log2(2 * norm / tol)))
    term = u.copy()
    acc = u.copy()
    for _ in range(N):
        term = term - M @ term
        acc += term
    return acc, N


def S_inverse(kern: InterpKernel, seq: SeqOnSet, tol=1e-12, check=True) -> SeqOnSet:
    if len(seq.idx) == 0:
        return seq
    M = S_matrix(kern, seq.idx)
    if check:
        off = M.copy()
        np.fill_diagonal(off, 0.0)
        q = float(np.abs(off).sum(axis=1).max())
        if q > 0.5 + 1e-9:
            raise ValueError(f"||S - id|| = {q:.6f} > 1/2: set is not admissible for these constants")
    v, _ = neumann_inverse(M, seq.values, tol)
    return SeqOnSet(seq.lattice, seq.idx, v)


@dataclass
class PsiEvaluator:
    kern: InterpKernel
    idx: np.ndarray
    coefs: np.ndarray
    u_norm: float
    tail: float
    func: BLFunction = field(repr=False, default=None)

    def __post_init__(self):
        if self.func is None:
            self.func = self.kern.function(self.idx, self.coefs) if len(self.idx) else BLFunction.zero(self.kern.k)

    def __call__(self, z):
        return self.func.eval(z)

    @property
    def sup_bound(self):
        return 2 * self.kern.bundle.K0 * self.u_norm + self.tail


def psi(kern: InterpKernel, seq: SeqOnSet, tol=1e-12) -> PsiEvaluator:
    """psi_Lambda(u) = phi_Lambda(S^-1 u), interpolating u on Lambda."""
    if len(seq.idx) == 0:
        return PsiEvaluator(kern, seq.idx, np.zeros(0), 0.0, 0.0)
    inv = S_inverse(kern, seq, tol)
    return PsiEvaluator(kern, seq.idx, inv.values, seq.norm, kern.bundle.K0 * tol)


@dataclass
class AdmissibleFunction:
    lattice: LatticePair
    idx: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.idx = np.asarray(self.idx, dtype=np.int64).reshape(-1, self.lattice.k)
        self.p = np.clip(np.asarray(self.p, dtype=float).reshape(len(self.idx)), 0.0, 1.0)

    def support(self):
        return self.idx[self.p > 0]

    def check(self, r0):
        return is_admissible(self.support(), self.lattice, r0, as_index=True)

    def shifted(self, n):
        return AdmissibleFunction(self.lattice, self.idx + self.lattice.shift_idx(n), self.p)


@dataclass
class PsiField:
    """Psi(p, u) as a kernel sum whose coefficients average S^-1 over subsets."""
    kern: InterpKernel
    idx: np.ndarray
    coefs: np.ndarray
    u_norm: float
    mode: str
    n_fractional: int
    samples: np.ndarray = field(default=None, repr=False)
    func: BLFunction = field(default=None, repr=False)

    def __post_init__(self):
        if self.func is None:
            self.func = self.kern.function(self.idx, self.coefs) if len(self.idx) else BLFunction.zero(self.kern.k)

    def __call__(self, z):
        return self.func.eval(z)

    def stderr(self, z):
        """Monte Carlo standard error at the probes (zero in exact mode)."""
        if self.samples is None:
            pts = np.asarray(z)
            return np.zeros(np.shape(self.func.eval(pts)))
        vals = np.stack([self.kern.function(self.idx, c).eval(z) for c in self.samples])
        return vals.std(axis=0, ddof=1) / math.sqrt(len(vals))

    @property
    def sup_bound(self):
        return 2 * self.kern.bundle.K0 * self.u_norm


def Psi(kern: InterpKernel, pf: AdmissibleFunction, u, mode="exact", seed=0, nsamp=256, tol=1e-12) -> PsiField:
    """Expectation of psi_Lambda(u|Lambda) over the product measure with marginals p.

    u is given on the sites of pf.  Sites with p = 1 are always present and
    sites with p = 0 never.  Exact mode enumerates the subsets of the
    fractional sites; Monte Carlo mode averages seeded draws.
    """
    u = np.asarray(u, dtype=float).reshape(len(pf.idx))
    keep = pf.p > 0
    idx = pf.idx[keep]
    p = pf.p[keep]
    uu = u[keep]
    k = kern.k
    if len(idx) == 0:
        return PsiField(kern, np.zeros((0, k), dtype=np.int64), np.zeros(0), 0.0, mode, 0)
    det = p >= 1.0
    frac = np.flatnonzero(~det)
    M = S_matrix(kern, idx)
    u_norm = float(np.abs(uu).max())
    coefs = np.zeros(len(idx))

    def solve(mask):
        sel = np.flatnonzero(mask)
        if len(sel) == 0:
            return
        v, _ = neumann_inverse(M[np.ix_(sel, sel)], uu[sel], tol)
        return sel, v

    if mode == "exact":
        if len(frac) > EXACT_LIMIT:
            raise ValueError(f"{len(frac)} fractional sites exceed the exact limit {EXACT_LIMIT}; use montecarlo")
        base = det.copy()
        pf_vals = p[frac]
        for bits in itertools.product((0, 1), repeat=len(frac)):
            bits = np.array(bits, dtype=bool)
            w = float(np.prod(np.where(bits, pf_vals, 1 - pf_vals)))
            if w == 0.0:
                continue
            mask = base.copy()
            mask[frac[bits]] = True
            res = solve(mask)
            if res is not None:
                coefs[res[0]] += w * res[1]
        return PsiField(kern, idx, coefs, u_norm, "exact", len(frac))
    if mode == "montecarlo":
        rng = np.random.default_rng(seed)
        samples = np.zeros((nsamp, len(idx)))
        for s in range(nsamp):
            mask = det | (rng.random(len(idx)) < p)
            res = solve(mask)
            if res is not None:
                samples[s, res[0]] = res[1]
        return PsiField(kern, idx, samples.mean(axis=0), u_norm, "montecarlo", len(frac), samples=samples)
    raise ValueError(f"unknown mode {mode!r}")


def truncation_radius(r: float, eps: float, kern: InterpKernel, d0=1.0, max_d=1e6):
    """Radius r' such that windowed psi/Psi on B_r differ from the full-set value by < eps.

    For unit-norm data the n-th Neumann term is at most 2^-n; errors from
    sites beyond distance d propagate one level inward per application of
    S (each level loses at most half by admissibility).  Keeping N levels
    and the tail 4 K0 2^-N < eps/2 gives r' = r + (N + 1) d.
    Returns (r', info).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    K0 = kern.bundle.K0
    N = max(1, math.ceil(math.log2(8 * K0 / eps)))
    d = d0
    while True:
        T = kern.tail_sup(d)
        e = 0.0
        total = 4 * K0 * 2.0 ** (-N)
        for n in range(N):
            total += K0 * e + 2 * 2.0 ** (-n) * T
            e = e / 2 + 2 * 2.0 ** (-n) * T
        if total < eps:
            return r + (N + 1) * d, {"levels": N, "step": d, "bound": total}
        d *= 2
        if d > max_d:
            raise RuntimeError("truncation radius search exhausted")
