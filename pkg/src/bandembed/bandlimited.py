"""Band-limited functions built from tensor-product kernel factors.

Frequencies are in cycles per unit length, so a function in B(a) has its
Fourier transform supported in the box prod [-a_i/2, a_i/2].  Every factor
is scaled by pi: ``sin`` with parameter b means sin(pi*b*t), ``cexp`` with
parameter beta means exp(i*pi*beta*t).  Under this convention a factor with
parameter b has support [-b/2, b/2] (a single point beta/2 for cexp).
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels

KIND_CODES = {
    "sinc": kernels.SINC,
    "sincpow": kernels.SINCPOW,
    "sin": kernels.SIN,
    "cos": kernels.COS,
    "cexp": kernels.CEXP,
}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}


@dataclass(frozen=True)
class FreqBox:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi length mismatch")
        for a, b in zip(self.lo, self.hi):
            if a > b:
                raise ValueError(f"empty axis interval [{a}, {b}]")

    @property
    def k(self):
        return len(self.lo)

    @classmethod
    def point(cls, k):
        return cls((0.0,) * k, (0.0,) * k)

    @classmethod
    def symmetric(cls, half_widths):
        return cls(tuple(-float(h) for h in half_widths), tuple(float(h) for h in half_widths))

    def hull(self, other: "FreqBox") -> "FreqBox":
        return FreqBox(tuple(map(min, self.lo, other.lo)), tuple(map(max, self.hi, other.hi)))

    def minkowski(self, other: "FreqBox") -> "FreqBox":
        return FreqBox(tuple(a + b for a, b in zip(self.lo, other.lo)),
                       tuple(a + b for a, b in zip(self.hi, other.hi)))

    def negate(self) -> "FreqBox":
        return FreqBox(tuple(-h for h in self.hi), tuple(-l for l in self.lo))

    def contains(self, other: "FreqBox", tol=1e-12) -> bool:
        return all(a - tol <= c and d <= b + tol
                   for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def inflate(self, eps) -> "FreqBox":
        return FreqBox(tuple(l - eps for l in self.lo), tuple(h + eps for h in self.hi))

    def radius(self) -> float:
        """Largest Euclidean norm of a point of the box."""
        return math.sqrt(sum(max(abs(l), abs(h)) ** 2 for l, h in zip(self.lo, self.hi)))

    def within_ball(self, r, tol=1e-12) -> bool:
        return self.radius() <= r + tol

    def type_widths(self):
        """The a_i with the box inside prod [-a_i/2, a_i/2]."""
        return np.array([2 * max(abs(l), abs(h)) for l, h in zip(self.lo, self.hi)])


@dataclass(frozen=True)
class Factor:
    axis: int
    kind: str
    b: float
    m: int = 1

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown factor kind {self.kind!r}")
        if self.kind in ("sinc", "sincpow") and self.b <= 0:
            raise ValueError("sinc parameter must be positive")
        if self.m < 1:
            raise ValueError("power must be >= 1")

    def support(self):
        if self.kind == "sinc":
            return (-self.b / 2, self.b / 2)
        if self.kind == "sincpow":
            return (-self.m * self.b / 2, self.m * self.b / 2)
        if self.kind in ("sin", "cos"):
            h = abs(self.b) / 2
            return (-h, h)
        return (self.b / 2, self.b / 2)

    def conj(self) -> "Factor":
        # all kinds are real on the real line except cexp
        if self.kind == "cexp":
            return Factor(self.axis, "cexp", -self.b, self.m)
        return self

    def value(self, z):
        return kernels._pykernels.factor_value(KIND_CODES[self.kind], self.b, self.m, np.asarray(z))

    def deriv(self, z):
        return kernels._pykernels.factor_deriv(KIND_CODES[self.kind], self.b, self.m, np.asarray(z))


class TermGroup:
    """Terms sharing one factor signature; sum_j c_j prod_f factor_f(z_axis(f) - s_{j,f})."""

    __slots__ = ("factors", "shifts", "coefs", "_axes", "_kinds", "_bs", "_ms")

    def __init__(self, factors: Sequence[Factor], shifts, coefs):
        self.factors = tuple(factors)
        nf = len(self.factors)
        coefs = np.atleast_1d(np.asarray(coefs, dtype=complex))
        shifts = np.asarray(shifts, dtype=float)
        if shifts.size == 0 and nf == 0:
            shifts = np.zeros((len(coefs), 0))
        shifts = shifts.reshape(len(coefs), nf)
        self.shifts = shifts
        self.coefs = coefs
        self.shifts.setflags(write=False)
        self.coefs.setflags(write=False)
        self._axes = np.array([f.axis for f in self.factors], dtype=np.int64)
        self._kinds = np.array([KIND_CODES[f.kind] for f in self.factors], dtype=np.int64)
        self._bs = np.array([f.b for f in self.factors], dtype=float)
        self._ms = np.array([f.m for f in self.factors], dtype=np.int64)

    def __len__(self):
        return len(self.coefs)

    def support(self, k) -> FreqBox:
        lo = [0.0] * k
        hi = [0.0] * k
        for f in self.factors:
            a, b = f.support()
            lo[f.axis] += a
            hi[f.axis] += b
        return FreqBox(tuple(lo), tuple(hi))

    def eval(self, pts, dfac=-1, backend=None):
        return kernels.group_eval(pts, self._axes, self._kinds, self._bs, self._ms,
                                  self.shifts, self.coefs, dfac, backend=backend)

    def abs_eval(self, pts, backend=None):
        return kernels.abs_group_eval(pts, self._axes, self._kinds, self._bs, self._ms,
                                      self.shifts, np.abs(self.coefs), backend=backend)

    def signature(self):
        return self.factors


def _as_points(z, k):
    arr = np.asarray(z)
    if arr.ndim == 0:
        if k != 1:
            raise ValueError(f"scalar argument needs k=1, got k={k}")
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if k == 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != k:
            raise ValueError(f"point of length {arr.shape[0]} for k={k}")
        return arr.reshape(1, k), True
    if arr.shape[1] != k:
        raise ValueError(f"points of dimension {arr.shape[1]} for k={k}")
    return arr, False


class BLFunction:
    """Immutable finite sum of shifted tensor-product kernel terms on C^k."""

    def __init__(self, k: int, groups: Sequence[TermGroup] = ()):
        self.k = int(k)
        self.groups = tuple(g for g in groups if len(g))
        box = FreqBox.point(self.k)
        first = True
        for g in self.groups:
            s = g.support(self.k)
            box = s if first else box.hull(s)
            first = False
        self.freqbox = box
        self.sup_bound = float(sum(np.abs(g.coefs).sum() * self._factor_sup(g) for g in self.groups))

    @staticmethod
    def _factor_sup(g):
        # every kind has modulus <= 1 on the real line
        return 1.0

    # construction helpers
    @classmethod
    def zero(cls, k):
        return cls(k, ())

    @classmethod
    def constant(cls, k, c):
        return cls(k, (TermGroup((), np.zeros((1, 0)), [c]),))

    @classmethod
    def term(cls, k, factors, shift=None, coef=1.0):
        factors = tuple(factors)
        if shift is None:
            shift = np.zeros(k)
        shift = np.asarray(shift, dtype=float).reshape(k)
        s = np.array([[shift[f.axis] for f in factors]]).reshape(1, len(factors))
        return cls(k, (TermGroup(factors, s, [coef]),))

    @classmethod
    def kernel_sum(cls, k, factors, centers, coefs):
        """sum_j coefs[j] * prod_f factor_f(z - centers[j]) with every factor on its own axis shift."""
        factors = tuple(factors)
        centers = np.asarray(centers, dtype=float).reshape(-1, k)
        s = centers[:, [f.axis for f in factors]] if factors else np.zeros((len(centers), 0))
        return cls(k, (TermGroup(factors, s, coefs),))

    @property
    def n_terms(self):
        return sum(len(g) for g in self.groups)

    # evaluation
    def eval(self, z, backend=None):
        pts, scalar = _as_points(z, self.k)
        out = np.zeros(pts.shape[0], dtype=complex)
        for g in self.groups:
            out += g.eval(pts, backend=backend)
        return out[0] if scalar else out

    __call__ = eval

    def eval_checked(self, z):
        """Value together with an overflow flag for huge imaginary parts."""
        with np.errstate(over="ignore", invalid="ignore"):
            v = self.eval(z)
        return v, not bool(np.all(np.isfinite(v)))

    def grad(self, z, backend=None):
        pts, scalar = _as_points(z, self.k)
        out = np.zeros((pts.shape[0], self.k), dtype=complex)
        for g in self.groups:
            for j, f in enumerate(g.factors):
                out[:, f.axis] += g.eval(pts, dfac=j, backend=backend)
        return out[0] if scalar else out

    def abs_sum(self, t, backend=None):
        """sum over terms of |term(t)| at real points (an envelope for |f|)."""
        pts, scalar = _as_points(np.asarray(t, dtype=float), self.k)
        out = np.zeros(pts.shape[0])
        for g in self.groups:
            out += g.abs_eval(pts, backend=backend)
        return out[0] if scalar else out

    # algebra
    def __add__(self, other):
        if np.isscalar(other):
            other = BLFunction.constant(self.k, other)
        if other.k != self.k:
            raise ValueError("dimension mismatch")
        return BLFunction(self.k, self.groups + other.groups).merged()

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return BLFunction(self.k, [TermGroup(g.factors, g.shifts, g.coefs * c) for g in self.groups])

    def __mul__(self, other):
        if np.isscalar(other):
            return self.scale(other)
        if other.k != self.k:
            raise ValueError("dimension mismatch")
        groups = []
        for g in self.groups:
            for h in other.groups:
                n1, n2 = len(g), len(h)
                sh = np.concatenate([np.repeat(g.shifts, n2, axis=0), np.tile(h.shifts, (n1, 1))], axis=1)
                co = np.outer(g.coefs, h.coefs).ravel()
                groups.append(TermGroup(g.factors + h.factors, sh, co))
        return BLFunction(self.k, groups).merged()

    __rmul__ = __mul__

    def translate(self, s):
        """The function z -> f(z - s)."""
        s = np.asarray(s, dtype=float).reshape(self.k)
        groups = []
        for g in self.groups:
            add = np.array([s[f.axis] for f in g.factors])
            groups.append(TermGroup(g.factors, g.shifts + add[None, :], g.coefs))
        return BLFunction(self.k, groups)

    def conj(self):
        """The function whose values on R^k are the complex conjugates of f."""
        return BLFunction(self.k, [TermGroup(tuple(f.conj() for f in g.factors), g.shifts, np.conj(g.coefs))
                                   for g in self.groups]).merged()

    def real_part(self):
        return (self + self.conj()).scale(0.5)

    def merged(self):
        by_sig = {}
        for g in self.groups:
            by_sig.setdefault(g.signature(), []).append(g)
        if len(by_sig) == len(self.groups):
            return self
        groups = []
        for sig, gs in by_sig.items():
            groups.append(TermGroup(sig, np.concatenate([g.shifts for g in gs]),
                                    np.concatenate([g.coefs for g in gs])))
        return BLFunction(self.k, groups)

    # serialization
    def to_dict(self):
        return {
            "k": self.k,
            "groups": [
                {
                    "factors": [[f.axis, f.kind, f.b, f.m] for f in g.factors],
                    "shifts": g.shifts.tolist(),
                    "coefs": [[c.real, c.imag] for c in g.coefs],
                }
                for g in self.groups
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        groups = []
        for g in d["groups"]:
            factors = [Factor(int(a), str(kd), float(b), int(m)) for a, kd, b, m in g["factors"]]
            coefs = np.array([complex(re, im) for re, im in g["coefs"]])
            groups.append(TermGroup(factors, np.array(g["shifts"], dtype=float).reshape(len(coefs), len(factors)), coefs))
        return cls(int(d["k"]), groups)

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def in_class(f: BLFunction, a) -> bool:
    """Whether the tracked support of f lies in prod [-a_i/2, a_i/2]."""
    a = np.broadcast_to(np.asarray(a, dtype=float), (f.k,))
    return FreqBox.symmetric(a / 2).contains(f.freqbox)


# kernel catalog

@functools.lru_cache(maxsize=None)
def sinc_pow_1d_integrals(m: int, tol=1e-13):
    """Integrals of sinc(x)^m and |sinc(x)|^m over R by two independent rules.

    Returns (signed, absolute, error) where error bounds the disagreement of
    the two rules plus the analytic tail.
    """
    if m < 2:
        raise ValueError("m >= 2 needed for absolute integrability")
    from scipy import integrate

    # rule A: composite Gauss-Legendre on the unit cells between zeros
    X = int(max(200, math.ceil((1.0 / ((m - 1) * math.pi ** m * tol)) ** (1.0 / (m - 1)))))
    X = min(X, 200000)
    nodes, weights = np.polynomial.legendre.leggauss(24)
    x = (np.arange(X)[:, None] + (nodes[None, :] + 1) / 2).ravel()
    w = np.tile(weights / 2, X)
    v = kernels.sinc(x) ** m
    a_signed = 2 * float(w @ v)
    a_abs = 2 * float(w @ np.abs(v))
    mean_abs = float(np.abs(np.sin(np.pi * (nodes + 1) / 2)) ** m @ (weights / 2))
    a_far = 2 * mean_abs * math.pi ** -m * X ** (1 - m) / (m - 1)
    a_abs += a_far
    if m % 2 == 0:
        a_signed += a_far
    # after the averaged tail the remainder is of order X^-m
    tail = 2 * m * math.pi ** -m * X ** (-m)

    # rule B: adaptive quadrature on cells up to N, then the averaged tail
    import warnings

    warnings.filterwarnings("ignore", category=integrate.IntegrationWarning)
    N = 400
    b_signed = 0.0
    b_abs = 0.0
    for n in range(N):
        b_signed += integrate.quad(lambda t: float(kernels.sinc(t)) ** m, n, n + 1, epsabs=1e-14, epsrel=1e-13)[0]
    if m % 2 == 0:
        b_abs = b_signed
    else:
        for n in range(N):
            b_abs += integrate.quad(lambda t: abs(float(kernels.sinc(t))) ** m, n, n + 1, epsabs=1e-14, epsrel=1e-13)[0]
    mean_abs = integrate.quad(lambda t: abs(math.sin(math.pi * t)) ** m, 0, 1)[0]
    far_abs = mean_abs * math.pi ** -m * N ** (1 - m) / (m - 1)
    if m % 2 == 0:
        far_signed = far_abs
    else:
        # sin^m alternates sign between cells; the tail is below one cell
        far_signed = 0.0
    b_signed = 2 * (b_signed + far_signed)
    b_abs = 2 * (b_abs + far_abs)
    err = max(abs(a_signed - b_signed), abs(a_abs - b_abs)) + tail
    return a_signed, a_abs, err


@dataclass
class KernelBundle:
    chi0: BLFunction
    chi1: BLFunction
    tau: float
    delta: float
    m: int
    K0: float = float("nan")
    K1: float = float("nan")
    r0: float = float("nan")
    K1_err: float = 0.0
    info: dict = field(default_factory=dict)


def make_chi0(tau: float, m: int = 4, k: int = 1) -> BLFunction:
    """prod_i sinc(b t_i)^m with b = tau/(m sqrt k); support in the ball of radius tau/2."""
    if m < 2:
        raise ValueError("decay order m must be >= 2")
    if tau <= 0:
        raise ValueError("tau must be positive")
    b = tau / (m * math.sqrt(k))
    return BLFunction.term(k, [Factor(i, "sincpow", b, m) for i in range(k)])


def make_chi1(delta: float, m: int = 4, k: int = 1):
    """Normalized kernel with support in the ball of radius delta/8.

    Returns (chi1, K1, K1_err) with K1 the integral of |chi1|.
    """
    if m < 2:
        raise ValueError("decay order m must be >= 2")
    if delta <= 0:
        raise ValueError("delta must be positive")
    b = delta / (4 * m * math.sqrt(k))
    signed, absolute, err = sinc_pow_1d_integrals(m)
    per_axis = signed / b
    c = per_axis ** (-k)
    chi1 = BLFunction.term(k, [Factor(i, "sincpow", b, m) for i in range(k)], coef=c)
    K1 = (absolute / signed) ** k
    K1_err = k * (absolute / signed) ** (k - 1) * err * (1 / signed + absolute / signed ** 2)
    if K1_err > 1e-6:
        raise RuntimeError(f"quadrature for chi1 did not converge (error {K1_err:.3g})")
    return chi1, K1, K1_err


class ThetaMap:
    """z -> (exp(pi i b_j z_j) sin(pi z_j / L))_j, vanishing on L Z^k."""

    def __init__(self, L: int, b):
        if L <= 1 or int(L) != L:
            raise ValueError("L must be an integer > 1")
        self.L = int(L)
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        self.k = len(self.b)
        self.sup_real = math.sqrt(self.k)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        zz = z.reshape(-1, self.k)
        out = np.exp(1j * np.pi * self.b * zz) * np.sin(np.pi * zz / self.L)
        return out.reshape(z.shape)

    def jac_diag(self, z):
        z = np.asarray(z, dtype=complex)
        zz = z.reshape(-1, self.k)
        b, L = self.b, self.L
        out = np.pi * np.exp(1j * np.pi * b * zz) * (1j * b * np.sin(np.pi * zz / L) + np.cos(np.pi * zz / L) / L)
        return out.reshape(z.shape)

    def components(self):
        """Each entry as a BLFunction (support b_j/2 + [-1/(2L), 1/(2L)] on axis j)."""
        return [BLFunction.term(self.k, [Factor(j, "cexp", float(self.b[j])), Factor(j, "sin", 1.0 / self.L)])
                for j in range(self.k)]


def theta_map(L: int, b) -> ThetaMap:
    return ThetaMap(L, b)


# sampling and growth oracles

def _recon_envelope(s, step, eps, m):
    s = np.abs(s)
    with np.errstate(divide="ignore"):
        a = np.minimum(1.0, step / (np.pi * s))
        c = np.minimum(1.0, (np.pi * eps * s) ** (-float(m)))
    return a * c


@dataclass
class Reconstruction:
    func: BLFunction
    tail_bound: float
    center: np.ndarray
    half_width: np.ndarray
    samples: np.ndarray


def sampling_reconstruct(f: BLFunction, steps, window, tol=None, m: int = 4, a=None) -> Reconstruction:
    """Oversampled cardinal series of f from samples on step * Z^k inside a window.

    window is a list of (lo, hi) pairs per axis.  The kernel per axis is
    sinc(t/b) * sinc(eps t)^m with eps = (1/b - a)/m, whose transform equals b
    on [-a/2, a/2] and vanishes on the shifted spectra.  The tail bound is
    valid on the center half of the window.
    """
    k = f.k
    steps = np.broadcast_to(np.asarray(steps, dtype=float), (k,)).copy()
    a = f.freqbox.type_widths() if a is None else np.broadcast_to(np.asarray(a, dtype=float), (k,))
    if np.any(a * steps >= 1):
        raise ValueError("need strict oversampling a_i * b_i < 1")
    window = np.asarray(window, dtype=float).reshape(k, 2)
    eps = (1.0 / steps - a) / m
    idx = [np.arange(math.ceil(lo / b), math.floor(hi / b) + 1) for (lo, hi), b in zip(window, steps)]
    grids = np.meshgrid(*[i * b for i, b in zip(idx, steps)], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    samples = f.eval(nodes) if len(nodes) else np.zeros(0, dtype=complex)
    factors = []
    for i in range(k):
        factors.append(Factor(i, "sinc", 1.0 / steps[i]))
        factors.append(Factor(i, "sincpow", eps[i], m))
    recon = BLFunction.kernel_sum(k, factors, nodes, samples)

    center = window.mean(axis=1)
    half = (window[:, 1] - window[:, 0]) / 4
    # per axis: sup over t in the center half of sum of envelopes over sites outside the window
    tails, fulls = [], []
    for i in range(k):
        b = steps[i]
        t_probe = np.linspace(center[i] - half[i], center[i] + half[i], 65)
        far = np.arange(-20000, 20001) * b
        inside = (far >= window[i, 0] - 1e-12) & (far <= window[i, 1] + 1e-12)
        env = _recon_envelope(t_probe[:, None] - far[None, :], b, eps[i], m)
        full = env.sum(axis=1).max()
        outside = env[:, ~inside].sum(axis=1).max()
        # beyond the enumerated range the envelope integrates to this
        R = 20000 * b - np.abs(t_probe).max()
        beyond = 2 * (b / np.pi) * (np.pi * eps[i]) ** (-m) * R ** (-m) / m / b
        tails.append(outside + beyond)
        fulls.append(full + beyond)
    tail = 0.0
    for i in range(k):
        tail += tails[i] * float(np.prod([fulls[j] for j in range(k) if j != i]))
    tail *= f.sup_bound
    if tol is not None and tail > tol:
        raise ValueError(f"window too small: tail bound {tail:.3g} exceeds {tol:.3g}")
    return Reconstruction(recon, tail, center, half, samples)


@dataclass
class GrowthResult:
    ok: bool
    worst_ratio: float
    witness: object


def growth_check(f: BLFunction, probes, a=None, sup_norm=None, tol=1e-9) -> GrowthResult:
    """Check |f(x+iy)| <= ||f||_inf exp(pi sum a_i |y_i|) at the probe points."""
    a = f.freqbox.type_widths() if a is None else np.broadcast_to(np.asarray(a, dtype=float), (f.k,))
    norm = f.sup_bound if sup_norm is None else float(sup_norm)
    pts, _ = _as_points(np.asarray(probes, dtype=complex), f.k)
    vals = np.abs(f.eval(pts))
    bound = norm * np.exp(np.pi * (np.abs(pts.imag) * a).sum(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, vals / bound, np.where(vals > 0, np.inf, 0.0))
    j = int(np.argmax(ratio))
    worst = float(ratio[j])
    ok = worst <= 1 + tol
    return GrowthResult(ok, worst, None if ok else pts[j])


def grid_sup(f: BLFunction, window, n=401) -> float:
    """Max of |f| over a tensor grid on a window (a lower estimate of the sup)."""
    window = np.asarray(window, dtype=float).reshape(f.k, 2)
    axes = [np.linspace(lo, hi, n) for lo, hi in window]
    g = np.stack([x.ravel() for x in np.meshgrid(*axes, indexing="ij")], axis=1)
    return float(np.abs(f.eval(g)).max())
