# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel sums. Same interface as _pykernels."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sinh, cosh, exp, fabs, sqrt, M_PI

cnp.import_array()

cdef inline double complex mk(double re, double im) noexcept nogil:
    cdef double complex r
    r.real = re
    r.imag = im
    return r

# real arguments skip the hyperbolic factors
cdef inline double complex c_sin(double complex z) noexcept nogil:
    if z.imag == 0:
        return mk(sin(z.real), 0.0)
    return mk(sin(z.real) * cosh(z.imag), cos(z.real) * sinh(z.imag))

cdef inline double complex c_cos(double complex z) noexcept nogil:
    if z.imag == 0:
        return mk(cos(z.real), 0.0)
    return mk(cos(z.real) * cosh(z.imag), -sin(z.real) * sinh(z.imag))

cdef inline double complex c_exp(double complex z) noexcept nogil:
    cdef double e = exp(z.real) if z.real != 0 else 1.0
    return mk(e * cos(z.imag), e * sin(z.imag))

cdef inline double c_abs(double complex z) noexcept nogil:
    return sqrt(z.real * z.real + z.imag * z.imag)

cdef inline double complex c_sinc(double complex x) noexcept nogil:
    cdef double complex u, px
    if c_abs(x) < 1e-2:
        u = (M_PI * x) * (M_PI * x)
        return 1 - u / 6 + u * u / 120 - u * u * u / 5040 + u * u * u * u / 362880
    px = M_PI * x
    return c_sin(px) / px

cdef inline double complex c_dsinc(double complex x) noexcept nogil:
    cdef double complex u, px
    cdef double p2 = M_PI * M_PI
    if c_abs(x) < 1e-2:
        u = p2 * x * x
        return p2 * x * (-1.0 / 3 + u / 30 - u * u / 840 + u * u * u / 45360)
    px = M_PI * x
    return (c_cos(px) - c_sin(px) / px) / x

cdef inline double complex c_ipow(double complex z, int m) noexcept nogil:
    cdef double complex r = 1
    cdef int i
    for i in range(m):
        r = r * z
    return r

cdef inline double complex f_value(int kind, double b, int m, double complex w) noexcept nogil:
    if kind == 0:
        return c_sinc(b * w)
    elif kind == 1:
        return c_ipow(c_sinc(b * w), m)
    elif kind == 2:
        return c_sin(M_PI * b * w)
    elif kind == 3:
        return c_cos(M_PI * b * w)
    else:
        return c_exp(mk(-M_PI * b * w.imag, M_PI * b * w.real))

cdef inline double complex f_deriv(int kind, double b, int m, double complex w) noexcept nogil:
    if kind == 0:
        return b * c_dsinc(b * w)
    elif kind == 1:
        return m * b * c_ipow(c_sinc(b * w), m - 1) * c_dsinc(b * w)
    elif kind == 2:
        return M_PI * b * c_cos(M_PI * b * w)
    elif kind == 3:
        return -M_PI * b * c_sin(M_PI * b * w)
    else:
        return mk(0.0, M_PI * b) * c_exp(mk(-M_PI * b * w.imag, M_PI * b * w.real))


def group_eval(points, axes, kinds, bs, ms, shifts, coefs, int dfac=-1):
    cdef const double complex[:, ::1] P = np.ascontiguousarray(points, dtype=np.complex128).reshape(len(points), -1)
    cdef const long[::1] AX = np.ascontiguousarray(axes, dtype=np.int64)
    cdef const long[::1] KD = np.ascontiguousarray(kinds, dtype=np.int64)
    cdef const double[::1] B = np.ascontiguousarray(bs, dtype=np.float64)
    cdef const long[::1] M = np.ascontiguousarray(ms, dtype=np.int64)
    cdef const double[:, ::1] S = np.ascontiguousarray(shifts, dtype=np.float64).reshape(len(shifts), -1)
    cdef const double complex[::1] C = np.ascontiguousarray(coefs, dtype=np.complex128)
    cdef Py_ssize_t npts = P.shape[0], nt = S.shape[0], nf = KD.shape[0]
    out = np.zeros(npts, dtype=np.complex128)
    cdef double complex[::1] O = out
    cdef Py_ssize_t i, j, f
    cdef double complex acc, tot, w
    with nogil:
        for i in range(npts):
            tot = 0
            for j in range(nt):
                acc = C[j]
                for f in range(nf):
                    w = P[i, AX[f]] - S[j, f]
                    if f == dfac:
                        acc = acc * f_deriv(KD[f], B[f], M[f], w)
                    else:
                        acc = acc * f_value(KD[f], B[f], M[f], w)
                    if acc == 0:
                        break
                tot = tot + acc
            O[i] = tot
    return out


def abs_group_eval(points, axes, kinds, bs, ms, shifts, weights):
    cdef const double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64).reshape(len(points), -1)
    cdef const long[::1] AX = np.ascontiguousarray(axes, dtype=np.int64)
    cdef const long[::1] KD = np.ascontiguousarray(kinds, dtype=np.int64)
    cdef const double[::1] B = np.ascontiguousarray(bs, dtype=np.float64)
    cdef const long[::1] M = np.ascontiguousarray(ms, dtype=np.int64)
    cdef const double[:, ::1] S = np.ascontiguousarray(shifts, dtype=np.float64).reshape(len(shifts), -1)
    cdef const double[::1] Wt = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t npts = P.shape[0], nt = S.shape[0], nf = KD.shape[0]
    out = np.zeros(npts, dtype=np.float64)
    cdef double[::1] O = out
    cdef Py_ssize_t i, j, f
    cdef double acc, tot
    cdef double complex w
    with nogil:
        for i in range(npts):
            tot = 0
            for j in range(nt):
                acc = Wt[j]
                for f in range(nf):
                    w = P[i, AX[f]] - S[j, f]
                    acc = acc * c_abs(f_value(KD[f], B[f], M[f], w))
                tot = tot + acc
            O[i] = tot
    return out
