# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Direct-loop convolution kernels (forward, input grad, weight grad).

Same contract as the numpy fallbacks in kernels.py: cross-correlation with
SAME zero padding, stride s, channels-last float64 arrays.  Loops are ordered
so the innermost index runs over the contiguous channel axis; reductions use
a fixed order, so results are deterministic.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _out_dim(Py_ssize_t n, Py_ssize_t s):
    return (n + s - 1) // s


cdef inline Py_ssize_t _pad_beg(Py_ssize_t n, Py_ssize_t k, Py_ssize_t s):
    cdef Py_ssize_t out = _out_dim(n, s)
    cdef Py_ssize_t total = (out - 1) * s + k - n
    if total < 0:
        total = 0
    return total // 2


def conv2d_fwd(double[:, :, ::1] x, double[:, :, :, ::1] w, Py_ssize_t s):
    cdef Py_ssize_t h = x.shape[0], wd = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], cout = w.shape[3]
    cdef Py_ssize_t ho = _out_dim(h, s), wo = _out_dim(wd, s)
    cdef Py_ssize_t pt = _pad_beg(h, kh, s), pl = _pad_beg(wd, kw, s)
    out_arr = np.zeros((ho, wo, cout), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t oy, ox, ky, kx, iy, ix, ci, co
    cdef double v
    for oy in range(ho):
        for ox in range(wo):
            for ky in range(kh):
                iy = oy * s + ky - pt
                if iy < 0 or iy >= h:
                    continue
                for kx in range(kw):
                    ix = ox * s + kx - pl
                    if ix < 0 or ix >= wd:
                        continue
                    for ci in range(cin):
                        v = x[iy, ix, ci]
                        if v == 0.0:
                            continue
                        for co in range(cout):
                            out[oy, ox, co] += v * w[ky, kx, ci, co]
    return out_arr


def conv2d_dgrad(double[:, :, ::1] dy, double[:, :, :, ::1] w, Py_ssize_t s,
                 Py_ssize_t h, Py_ssize_t wd):
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1]
    cdef Py_ssize_t cin = w.shape[2], cout = w.shape[3]
    cdef Py_ssize_t ho = dy.shape[0], wo = dy.shape[1]
    cdef Py_ssize_t pt = _pad_beg(h, kh, s), pl = _pad_beg(wd, kw, s)
    dx_arr = np.zeros((h, wd, cin), dtype=np.float64)
    cdef double[:, :, ::1] dx = dx_arr
    cdef Py_ssize_t oy, ox, ky, kx, iy, ix, ci, co
    cdef double acc
    for oy in range(ho):
        for ox in range(wo):
            for ky in range(kh):
                iy = oy * s + ky - pt
                if iy < 0 or iy >= h:
                    continue
                for kx in range(kw):
                    ix = ox * s + kx - pl
                    if ix < 0 or ix >= wd:
                        continue
                    for ci in range(cin):
                        acc = 0.0
                        for co in range(cout):
                            acc += dy[oy, ox, co] * w[ky, kx, ci, co]
                        dx[iy, ix, ci] += acc
    return dx_arr


def conv2d_wgrad(double[:, :, ::1] x, double[:, :, ::1] dy, Py_ssize_t s,
                 Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t h = x.shape[0], wd = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t ho = dy.shape[0], wo = dy.shape[1], cout = dy.shape[2]
    cdef Py_ssize_t pt = _pad_beg(h, kh, s), pl = _pad_beg(wd, kw, s)
    dw_arr = np.zeros((kh, kw, cin, cout), dtype=np.float64)
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef Py_ssize_t oy, ox, ky, kx, iy, ix, ci, co
    cdef double v
    for oy in range(ho):
        for ox in range(wo):
            for ky in range(kh):
                iy = oy * s + ky - pt
                if iy < 0 or iy >= h:
                    continue
                for kx in range(kw):
                    ix = ox * s + kx - pl
                    if ix < 0 or ix >= wd:
                        continue
                    for ci in range(cin):
                        v = x[iy, ix, ci]
                        if v == 0.0:
                            continue
                        for co in range(cout):
                            dw[ky, kx, ci, co] += v * dy[oy, ox, co]
    return dw_arr


def conv3d_fwd(double[:, :, :, ::1] x, double[:, :, :, :, ::1] w,
               Py_ssize_t s):
    cdef Py_ssize_t d1 = x.shape[0], d2 = x.shape[1], d3 = x.shape[2]
    cdef Py_ssize_t cin = x.shape[3]
    cdef Py_ssize_t k1 = w.shape[0], k2 = w.shape[1], k3 = w.shape[2]
    cdef Py_ssize_t cout = w.shape[4]
    cdef Py_ssize_t o1 = _out_dim(d1, s), o2 = _out_dim(d2, s), o3 = _out_dim(d3, s)
    cdef Py_ssize_t p1 = _pad_beg(d1, k1, s), p2 = _pad_beg(d2, k2, s), p3 = _pad_beg(d3, k3, s)
    out_arr = np.zeros((o1, o2, o3, cout), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t a, b, c, ka, kb, kc, ia, ib, ic, ci, co
    cdef double v
    for a in range(o1):
        for b in range(o2):
            for c in range(o3):
                for ka in range(k1):
                    ia = a * s + ka - p1
                    if ia < 0 or ia >= d1:
                        continue
                    for kb in range(k2):
                        ib = b * s + kb - p2
                        if ib < 0 or ib >= d2:
                            continue
                        for kc in range(k3):
                            ic = c * s + kc - p3
                            if ic < 0 or ic >= d3:
                                continue
                            for ci in range(cin):
                                v = x[ia, ib, ic, ci]
                                if v == 0.0:
                                    continue
                                for co in range(cout):
                                    out[a, b, c, co] += v * w[ka, kb, kc, ci, co]
    return out_arr


def conv3d_dgrad(double[:, :, :, ::1] dy, double[:, :, :, :, ::1] w,
                 Py_ssize_t s, Py_ssize_t d1, Py_ssize_t d2, Py_ssize_t d3):
    cdef Py_ssize_t k1 = w.shape[0], k2 = w.shape[1], k3 = w.shape[2]
    cdef Py_ssize_t cin = w.shape[3], cout = w.shape[4]
    cdef Py_ssize_t o1 = dy.shape[0], o2 = dy.shape[1], o3 = dy.shape[2]
    cdef Py_ssize_t p1 = _pad_beg(d1, k1, s), p2 = _pad_beg(d2, k2, s), p3 = _pad_beg(d3, k3, s)
    dx_arr = np.zeros((d1, d2, d3, cin), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t a, b, c, ka, kb, kc, ia, ib, ic, ci, co
    cdef double acc
    for a in range(o1):
        for b in range(o2):
            for c in range(o3):
                for ka in range(k1):
                    ia = a * s + ka - p1
                    if ia < 0 or ia >= d1:
                        continue
                    for kb in range(k2):
                        ib = b * s + kb - p2
                        if ib < 0 or ib >= d2:
                            continue
                        for kc in range(k3):
                            ic = c * s + kc - p3
                            if ic < 0 or ic >= d3:
                                continue
                            for ci in range(cin):
                                acc = 0.0
                                for co in range(cout):
                                    acc += dy[a, b, c, co] * w[ka, kb, kc, ci, co]
                                dx[ia, ib, ic, ci] += acc
    return dx_arr


def conv3d_wgrad(double[:, :, :, ::1] x, double[:, :, :, ::1] dy,
                 Py_ssize_t s, Py_ssize_t k1, Py_ssize_t k2, Py_ssize_t k3):
    cdef Py_ssize_t d1 = x.shape[0], d2 = x.shape[1], d3 = x.shape[2]
    cdef Py_ssize_t cin = x.shape[3]
    cdef Py_ssize_t o1 = dy.shape[0], o2 = dy.shape[1], o3 = dy.shape[2]
    cdef Py_ssize_t cout = dy.shape[3]
    cdef Py_ssize_t p1 = _pad_beg(d1, k1, s), p2 = _pad_beg(d2, k2, s), p3 = _pad_beg(d3, k3, s)
    dw_arr = np.zeros((k1, k2, k3, cin, cout), dtype=np.float64)
    cdef double[:, :, :, :, ::1] dw = dw_arr
    cdef Py_ssize_t a, b, c, ka, kb, kc, ia, ib, ic, ci, co
    cdef double v
    for a in range(o1):
        for b in range(o2):
            for c in range(o3):
                for ka in range(k1):
                    ia = a * s + ka - p1
                    if ia < 0 or ia >= d1:
                        continue
                    for kb in range(k2):
                        ib = b * s + kb - p2
                        if ib < 0 or ib >= d2:
                            continue
                        for kc in range(k3):
                            ic = c * s + kc - p3
                            if ic < 0 or ic >= d3:
                                continue
                            for ci in range(cin):
                                v = x[ia, ib, ic, ci]
                                if v == 0.0:
                                    continue
                                for co in range(cout):
                                    dw[ka, kb, kc, ci, co] += v * dy[a, b, c, co]
    return dw_arr
