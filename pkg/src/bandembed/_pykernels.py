"""Pure numpy implementation of the hot kernels (fallback for _ckernels)."""
import numpy as np

SINC, SINCPOW, SIN, COS, CEXP = 0, 1, 2, 3, 4

_CHUNK = 1 << 20


def sinc(x):
    x = np.asarray(x)
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    px = np.pi * xs
    direct = np.sin(px) / px
    u = (np.pi * x) ** 2
    series = 1 - u / 6 + u * u / 120 - u ** 3 / 5040 + u ** 4 / 362880
    return np.where(small, series, direct)


def dsinc(x):
    x = np.asarray(x)
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    px = np.pi * xs
    direct = (np.cos(px) - np.sin(px) / px) / xs
    p2 = np.pi ** 2
    u = p2 * x * x
    series = p2 * x * (-1 / 3 + u / 30 - u * u / 840 + u ** 3 / 45360)
    return np.where(small, series, direct)


def factor_value(kind, b, m, w):
    if kind == SINC:
        return sinc(b * w)
    if kind == SINCPOW:
        return sinc(b * w) ** m
    if kind == SIN:
        return np.sin(np.pi * b * w)
    if kind == COS:
        return np.cos(np.pi * b * w)
    if kind == CEXP:
        return np.exp(1j * np.pi * b * w)
    raise ValueError(f"unknown factor kind {kind}")


def factor_deriv(kind, b, m, w):
    if kind == SINC:
        return b * dsinc(b * w)
    if kind == SINCPOW:
        return m * b * sinc(b * w) ** (m - 1) * dsinc(b * w)
    if kind == SIN:
        return np.pi * b * np.cos(np.pi * b * w)
    if kind == COS:
        return -np.pi * b * np.sin(np.pi * b * w)
    if kind == CEXP:
        return 1j * np.pi * b * np.exp(1j * np.pi * b * w)
    raise ValueError(f"unknown factor kind {kind}")


def group_eval(points, axes, kinds, bs, ms, shifts, coefs, dfac=-1):
    """Sum over terms j of coefs[j] * prod_f factor_f(points[:, axes[f]] - shifts[j, f]).

    If dfac >= 0 the factor with that index is replaced by its derivative.
    """
    points = np.asarray(points)
    npts = points.shape[0]
    nterms = shifts.shape[0]
    out = np.zeros(npts, dtype=complex)
    if nterms == 0 or npts == 0:
        return out
    step = max(1, _CHUNK // max(nterms, 1))
    for s in range(0, npts, step):
        p = points[s:s + step]
        acc = None
        for f in range(len(kinds)):
            w = p[:, axes[f]][:, None] - shifts[None, :, f]
            if f == dfac:
                v = factor_deriv(kinds[f], bs[f], ms[f], w)
            else:
                v = factor_value(kinds[f], bs[f], ms[f], w)
            acc = v if acc is None else acc * v
        if acc is None:
            out[s:s + step] = coefs.sum()
        else:
            out[s:s + step] = acc @ coefs
    return out


def abs_group_eval(points, axes, kinds, bs, ms, shifts, weights):
    """Sum over terms of weights[j] * |prod_f factor_f(...)| at real points."""
    points = np.asarray(points, dtype=float)
    npts = points.shape[0]
    nterms = shifts.shape[0]
    out = np.zeros(npts)
    if nterms == 0 or npts == 0:
        return out
    step = max(1, _CHUNK // max(nterms, 1))
    for s in range(0, npts, step):
        p = points[s:s + step]
        acc = np.ones((p.shape[0], nterms))
        for f in range(len(kinds)):
            w = p[:, axes[f]][:, None] - shifts[None, :, f]
            acc = acc * np.abs(factor_value(kinds[f], bs[f], ms[f], w))
        out[s:s + step] = acc @ weights
    return out
