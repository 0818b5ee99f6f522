"""Convolution kernels with two interchangeable backends.

`_convkernels` is a compiled Cython extension built at install time; when it
is missing (or HAIRGAN_BACKEND=numpy) a pure-numpy im2col/col2im fallback is
used.  Both compute the same cross-correlation with TF-style SAME zero
padding: out = ceil(n / stride), pad split with the extra row/column at the
far side.

Layouts: 2D inputs are (h, w, cin), weights (kh, kw, cin, cout); 3D inputs
are (d1, d2, d3, cin), weights (k1, k2, k3, cin, cout).  float64 throughout.
"""

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def same_pad(n: int, k: int, s: int):
    """(n_out, pad_begin, pad_end) for SAME padding."""
    out = -(-n // s)
    total = max((out - 1) * s + k - n, 0)
    beg = total // 2
    return out, beg, total - beg


# ---------------------------------------------------------------- numpy 2D

def _np_conv2d_fwd(x, w, s):
    h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    ho, pt, pb = same_pad(h, kh, s)
    wo, pl, pr = same_pad(wd, kw, s)
    xp = np.zeros((h + pt + pb, wd + pl + pr, cin))
    xp[pt:pt + h, pl:pl + wd] = x
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))[::s, ::s]
    cols = win.transpose(0, 1, 3, 4, 2).reshape(ho * wo, kh * kw * cin)
    return (cols @ w.reshape(-1, cout)).reshape(ho, wo, cout)


def _np_conv2d_dgrad(dy, w, s, xshape):
    h, wd, cin = xshape
    kh, kw, _, cout = w.shape
    ho, pt, pb = same_pad(h, kh, s)
    wo, pl, pr = same_pad(wd, kw, s)
    cols = (dy.reshape(-1, cout) @ w.reshape(-1, cout).T)
    cols = cols.reshape(ho, wo, kh, kw, cin)
    xp = np.zeros((h + pt + pb, wd + pl + pr, cin))
    for ky in range(kh):
        ye = ky + (ho - 1) * s + 1
        for kx in range(kw):
            xe = kx + (wo - 1) * s + 1
            xp[ky:ye:s, kx:xe:s] += cols[:, :, ky, kx]
    return xp[pt:pt + h, pl:pl + wd].copy()


def _np_conv2d_wgrad(x, dy, s, wshape):
    h, wd, cin = x.shape
    kh, kw, _, cout = wshape
    ho, pt, pb = same_pad(h, kh, s)
    wo, pl, pr = same_pad(wd, kw, s)
    xp = np.zeros((h + pt + pb, wd + pl + pr, cin))
    xp[pt:pt + h, pl:pl + wd] = x
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))[::s, ::s]
    cols = win.transpose(0, 1, 3, 4, 2).reshape(ho * wo, kh * kw * cin)
    return (cols.T @ dy.reshape(-1, cout)).reshape(wshape)


# ---------------------------------------------------------------- numpy 3D

def _np_conv3d_fwd(x, w, s):
    d1, d2, d3, cin = x.shape
    k1, k2, k3, _, cout = w.shape
    o1, p1, q1 = same_pad(d1, k1, s)
    o2, p2, q2 = same_pad(d2, k2, s)
    o3, p3, q3 = same_pad(d3, k3, s)
    xp = np.zeros((d1 + p1 + q1, d2 + p2 + q2, d3 + p3 + q3, cin))
    xp[p1:p1 + d1, p2:p2 + d2, p3:p3 + d3] = x
    win = sliding_window_view(xp, (k1, k2, k3), axis=(0, 1, 2))[::s, ::s, ::s]
    cols = win.transpose(0, 1, 2, 4, 5, 6, 3).reshape(o1 * o2 * o3, -1)
    return (cols @ w.reshape(-1, cout)).reshape(o1, o2, o3, cout)


def _np_conv3d_dgrad(dy, w, s, xshape):
    d1, d2, d3, cin = xshape
    k1, k2, k3, _, cout = w.shape
    o1, p1, q1 = same_pad(d1, k1, s)
    o2, p2, q2 = same_pad(d2, k2, s)
    o3, p3, q3 = same_pad(d3, k3, s)
    cols = (dy.reshape(-1, cout) @ w.reshape(-1, cout).T)
    cols = cols.reshape(o1, o2, o3, k1, k2, k3, cin)
    xp = np.zeros((d1 + p1 + q1, d2 + p2 + q2, d3 + p3 + q3, cin))
    for ka in range(k1):
        ae = ka + (o1 - 1) * s + 1
        for kb in range(k2):
            be = kb + (o2 - 1) * s + 1
            for kc in range(k3):
                ce = kc + (o3 - 1) * s + 1
                xp[ka:ae:s, kb:be:s, kc:ce:s] += cols[:, :, :, ka, kb, kc]
    return xp[p1:p1 + d1, p2:p2 + d2, p3:p3 + d3].copy()


def _np_conv3d_wgrad(x, dy, s, wshape):
    d1, d2, d3, cin = x.shape
    k1, k2, k3, _, cout = wshape
    o1, p1, q1 = same_pad(d1, k1, s)
    o2, p2, q2 = same_pad(d2, k2, s)
    o3, p3, q3 = same_pad(d3, k3, s)
    xp = np.zeros((d1 + p1 + q1, d2 + p2 + q2, d3 + p3 + q3, cin))
    xp[p1:p1 + d1, p2:p2 + d2, p3:p3 + d3] = x
    win = sliding_window_view(xp, (k1, k2, k3), axis=(0, 1, 2))[::s, ::s, ::s]
    cols = win.transpose(0, 1, 2, 4, 5, 6, 3).reshape(o1 * o2 * o3, -1)
    return (cols.T @ dy.reshape(-1, cout)).reshape(wshape)


# ------------------------------------------------------------- dispatching

# Default backend: numpy. benchmarks/bench_conv.py shows the BLAS-backed
# im2col path beats the direct-loop extension on most of this network's
# channel widths; the extension stays available for environments where BLAS
# is weak (HAIRGAN_BACKEND=compiled).
_requested = os.environ.get("HAIRGAN_BACKEND", "").strip().lower()
_ext = None
if _requested == "compiled":
    from . import _convkernels as _ext  # ImportError here means: not built
elif _requested not in ("", "numpy"):
    raise ValueError(f"unknown HAIRGAN_BACKEND {_requested!r}")

BACKEND = "numpy" if _ext is None else "compiled"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_fwd(x, w, s):
    if _ext is not None:
        return np.asarray(_ext.conv2d_fwd(_c(x), _c(w), s))
    return _np_conv2d_fwd(x, w, s)


def conv2d_dgrad(dy, w, s, xshape):
    if _ext is not None:
        return np.asarray(_ext.conv2d_dgrad(_c(dy), _c(w), s,
                                            xshape[0], xshape[1]))
    return _np_conv2d_dgrad(dy, w, s, xshape)


def conv2d_wgrad(x, dy, s, wshape):
    if _ext is not None:
        return np.asarray(_ext.conv2d_wgrad(_c(x), _c(dy), s,
                                            wshape[0], wshape[1]))
    return _np_conv2d_wgrad(x, dy, s, wshape)


def conv3d_fwd(x, w, s):
    if _ext is not None:
        return np.asarray(_ext.conv3d_fwd(_c(x), _c(w), s))
    return _np_conv3d_fwd(x, w, s)


def conv3d_dgrad(dy, w, s, xshape):
    if _ext is not None:
        return np.asarray(_ext.conv3d_dgrad(_c(dy), _c(w), s,
                                            xshape[0], xshape[1], xshape[2]))
    return _np_conv3d_dgrad(dy, w, s, xshape)


def conv3d_wgrad(x, dy, s, wshape):
    if _ext is not None:
        return np.asarray(_ext.conv3d_wgrad(_c(x), _c(dy), s,
                                            wshape[0], wshape[1], wshape[2]))
    return _np_conv3d_wgrad(x, dy, s, wshape)
