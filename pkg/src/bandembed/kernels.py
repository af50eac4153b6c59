"""Kernel backend selection.

The compiled extension is used when it imports; set BANDEMBED_KERNEL=python
to force the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("BANDEMBED_KERNEL", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

SINC, SINCPOW, SIN, COS, CEXP = (
    _pykernels.SINC, _pykernels.SINCPOW, _pykernels.SIN, _pykernels.COS, _pykernels.CEXP)

sinc = _pykernels.sinc
dsinc = _pykernels.dsinc


def group_eval(points, axes, kinds, bs, ms, shifts, coefs, dfac=-1, backend=None):
    impl = _select(backend)
    return impl.group_eval(points, axes, kinds, bs, ms, shifts, coefs, dfac)


def abs_group_eval(points, axes, kinds, bs, ms, shifts, weights, backend=None):
    impl = _select(backend)
    return impl.abs_group_eval(points, axes, kinds, bs, ms, shifts, weights)


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")
