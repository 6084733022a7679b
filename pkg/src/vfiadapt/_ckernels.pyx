# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the routines in ``_pykernels``.

Expression order mirrors the numpy code exactly; build with
``-ffp-contract=off`` so no fused multiply-adds change the rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline void _cell(double coord, Py_ssize_t size, Py_ssize_t *i0,
                       Py_ssize_t *i1, double *frac, double *inside) noexcept nogil:
    cdef double c = coord
    inside[0] = 1.0
    if coord < 0.0 or coord > size - 1.0:
        inside[0] = 0.0
    if c < 0.0:
        c = 0.0
    elif c > size - 1.0:
        c = size - 1.0
    if size > 1:
        i0[0] = <Py_ssize_t>floor(c)
        if i0[0] > size - 2:
            i0[0] = size - 2
        i1[0] = i0[0] + 1
    else:
        i0[0] = 0
        i1[0] = 0
    frac[0] = c - i0[0]


def sample_bilinear(double[:, :, ::1] src, double[:, ::1] sx, double[:, ::1] sy,
                    bint with_grad=False):
    cdef Py_ssize_t H = src.shape[0], W = src.shape[1], C = src.shape[2]
    cdef Py_ssize_t h = sx.shape[0], w = sx.shape[1]
    cdef Py_ssize_t i, j, c, x0, x1, y0, y1
    cdef double fx, fy, mx, my, gx, gy, s00, s01, s10, s11
    out_a = np.empty((h, w, C))
    cdef double[:, :, ::1] out = out_a
    cdef long long[:, ::1] X0
    cdef long long[:, ::1] Y0
    cdef double[:, ::1] FX
    cdef double[:, ::1] FY
    cdef double[:, ::1] MX
    cdef double[:, ::1] MY
    cdef double[:, :, ::1] DX
    cdef double[:, :, ::1] DY
    if with_grad:
        x0_a = np.empty((h, w), dtype=np.int64)
        y0_a = np.empty((h, w), dtype=np.int64)
        fx_a = np.empty((h, w))
        fy_a = np.empty((h, w))
        mx_a = np.empty((h, w))
        my_a = np.empty((h, w))
        dx_a = np.empty((h, w, C))
        dy_a = np.empty((h, w, C))
        X0 = x0_a
        Y0 = y0_a
        FX = fx_a
        FY = fy_a
        MX = mx_a
        MY = my_a
        DX = dx_a
        DY = dy_a
    with nogil:
        for i in range(h):
            for j in range(w):
                _cell(sx[i, j], W, &x0, &x1, &fx, &mx)
                _cell(sy[i, j], H, &y0, &y1, &fy, &my)
                gx = 1.0 - fx
                gy = 1.0 - fy
                for c in range(C):
                    s00 = src[y0, x0, c]
                    s01 = src[y0, x1, c]
                    s10 = src[y1, x0, c]
                    s11 = src[y1, x1, c]
                    out[i, j, c] = ((gx * gy) * s00 + (fx * gy) * s01
                                    + (gx * fy) * s10 + (fx * fy) * s11)
                    if with_grad:
                        DX[i, j, c] = (gy * (s01 - s00) + fy * (s11 - s10)) * mx
                        DY[i, j, c] = (gx * (s10 - s00) + fx * (s11 - s01)) * my
                if with_grad:
                    X0[i, j] = x0
                    Y0[i, j] = y0
                    FX[i, j] = fx
                    FY[i, j] = fy
                    MX[i, j] = mx
                    MY[i, j] = my
    if not with_grad:
        return out_a
    return out_a, x0_a, y0_a, fx_a, fy_a, mx_a, my_a, dx_a, dy_a


def scatter_bilinear(double[:, :, ::1] g, long long[:, ::1] x0, long long[:, ::1] y0,
                     double[:, ::1] fx, double[:, ::1] fy, Py_ssize_t height,
                     Py_ssize_t width):
    cdef Py_ssize_t h = g.shape[0], w = g.shape[1], C = g.shape[2]
    cdef Py_ssize_t i, j, c, a0, a1, b0, b1
    cdef double w00, w01, w10, w11, gv
    out_a = np.zeros((height, width, C))
    cdef double[:, :, ::1] out = out_a
    with nogil:
        for i in range(h):
            for j in range(w):
                a0 = x0[i, j]
                b0 = y0[i, j]
                a1 = a0 + 1
                if a1 > width - 1:
                    a1 = width - 1
                b1 = b0 + 1
                if b1 > height - 1:
                    b1 = height - 1
                w00 = (1.0 - fx[i, j]) * (1.0 - fy[i, j])
                w01 = fx[i, j] * (1.0 - fy[i, j])
                w10 = (1.0 - fx[i, j]) * fy[i, j]
                w11 = fx[i, j] * fy[i, j]
                for c in range(C):
                    gv = g[i, j, c]
                    out[b0, a0, c] += w00 * gv
                    out[b0, a1, c] += w01 * gv
                    out[b1, a0, c] += w10 * gv
                    out[b1, a1, c] += w11 * gv
    return out_a


cdef inline double _avg(double[:, ::1] f, Py_ssize_t i, Py_ssize_t j,
                        Py_ssize_t H, Py_ssize_t W) noexcept nogil:
    cdef Py_ssize_t im = i - 1 if i > 0 else 0
    cdef Py_ssize_t ip = i + 1 if i < H - 1 else H - 1
    cdef Py_ssize_t jm = j - 1 if j > 0 else 0
    cdef Py_ssize_t jp = j + 1 if j < W - 1 else W - 1
    return ((f[im, j] + f[ip, j] + f[i, jm] + f[i, jp]) / 6.0
            + (f[im, jm] + f[im, jp] + f[ip, jm] + f[ip, jp]) / 12.0)


def hs_relax(double[:, ::1] ix, double[:, ::1] iy, double[:, ::1] it,
             double[:, ::1] denom, double[:, ::1] u0, double[:, ::1] v0,
             double[:, ::1] u, double[:, ::1] v, Py_ssize_t n_iter):
    cdef Py_ssize_t H = ix.shape[0], W = ix.shape[1]
    cdef Py_ssize_t n, i, j
    cdef double ub, vb, r
    ua = np.array(u, copy=True)
    va = np.array(v, copy=True)
    ub_a = np.empty((H, W))
    vb_a = np.empty((H, W))
    cdef double[:, ::1] U = ua
    cdef double[:, ::1] V = va
    cdef double[:, ::1] UN = ub_a
    cdef double[:, ::1] VN = vb_a
    cdef double[:, ::1] tmp
    with nogil:
        for n in range(n_iter):
            for i in range(H):
                for j in range(W):
                    ub = _avg(U, i, j, H, W)
                    vb = _avg(V, i, j, H, W)
                    r = (ix[i, j] * (ub - u0[i, j]) + iy[i, j] * (vb - v0[i, j])
                         + it[i, j]) / denom[i, j]
                    UN[i, j] = ub - ix[i, j] * r
                    VN[i, j] = vb - iy[i, j] * r
            tmp = U
            U = UN
            UN = tmp
            tmp = V
            V = VN
            VN = tmp
    return np.asarray(U), np.asarray(V)
