"""Pure-numpy implementations of the hot kernels.

Every routine here has a twin in ``_ckernels.pyx``.  Both evaluate the same
floating-point expressions in the same order, so results agree bit-for-bit
on IEEE hardware when the extension is compiled without FP contraction.
"""

import numpy as np


def _cell(coord, size):
    """Clamp raw coordinates to ``[0, size-1]`` and locate the bilinear cell."""
    inside = (coord >= 0.0) & (coord <= size - 1.0)
    c = np.clip(coord, 0.0, size - 1.0)
    if size > 1:
        i0 = np.minimum(np.floor(c).astype(np.int64), size - 2)
        i1 = i0 + 1
    else:
        i0 = np.zeros(c.shape, dtype=np.int64)
        i1 = i0
    return i0, i1, c - i0, inside.astype(np.float64)


def sample_bilinear(src, sx, sy, with_grad=False):
    """Bilinear sample of ``src`` (H, W, C) at raw coordinates ``(sx, sy)``.

    With ``with_grad`` the cell indices, fractional offsets, in-bounds masks
    and the coordinate derivatives ``d_dx``/``d_dy`` (zero where clamped) are
    returned as well.
    """
    H, W, _ = src.shape
    x0, x1, fx, mx = _cell(sx, W)
    y0, y1, fy, my = _cell(sy, H)
    s00 = src[y0, x0]
    s01 = src[y0, x1]
    s10 = src[y1, x0]
    s11 = src[y1, x1]
    gx = (1.0 - fx)[..., None]
    gy = (1.0 - fy)[..., None]
    ex = fx[..., None]
    ey = fy[..., None]
    out = (gx * gy) * s00 + (ex * gy) * s01 + (gx * ey) * s10 + (ex * ey) * s11
    if not with_grad:
        return out
    d_dx = (gy * (s01 - s00) + ey * (s11 - s10)) * mx[..., None]
    d_dy = (gx * (s10 - s00) + ex * (s11 - s01)) * my[..., None]
    return out, x0, y0, fx, fy, mx, my, d_dx, d_dy


def scatter_bilinear(g, x0, y0, fx, fy, height, width):
    """Adjoint of :func:`sample_bilinear` with respect to the source image."""
    h, w, C = g.shape
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    # pixel-major, corner-minor: same accumulation order as the C loop
    idx = np.stack([y0 * width + x0, y0 * width + x1,
                    y1 * width + x0, y1 * width + x1], axis=-1).ravel()
    wts = np.stack([w00, w01, w10, w11], axis=-1).reshape(h * w, 4)
    out = np.empty((height * width, C))
    for c in range(C):
        vals = (wts * g[..., c].reshape(h * w, 1)).ravel()
        out[:, c] = np.bincount(idx, weights=vals, minlength=height * width)
    return out.reshape(height, width, C)


def neighbour_average(f):
    p = np.pad(f, 1, mode="edge")
    n, s = p[:-2, 1:-1], p[2:, 1:-1]
    w, e = p[1:-1, :-2], p[1:-1, 2:]
    nw, ne = p[:-2, :-2], p[:-2, 2:]
    sw, se = p[2:, :-2], p[2:, 2:]
    return (n + s + w + e) / 6.0 + (nw + ne + sw + se) / 12.0


def hs_relax(ix, iy, it, denom, u0, v0, u, v, n_iter):
    """Jacobi iterations of the linearised Horn-Schunck system around (u0, v0)."""
    u = u.copy()
    v = v.copy()
    for _ in range(n_iter):
        ub = neighbour_average(u)
        vb = neighbour_average(v)
        r = (ix * (ub - u0) + iy * (vb - v0) + it) / denom
        u = ub - ix * r
        v = vb - iy * r
    return u, v
