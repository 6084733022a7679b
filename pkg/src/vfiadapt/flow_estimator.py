"""Frozen motion estimator: coarse-to-fine Horn-Schunck plus feature extraction."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import _kernels
from .imaging import FlowField, gaussian_pyramid, pyramid_shapes, resize, warp

GRAY_WEIGHTS = (0.299, 0.587, 0.114)
# Horn-Schunck runs on 8-bit intensity scale so that smoothness weights keep
# their customary magnitudes.
INTENSITY_SCALE = 255.0
MIN_SIZE = 8


@dataclass
class EstimatorParams:
    """Tunables of the frozen estimator.

    ``flow_bias`` multiplies the estimator output; values below 1 emulate a
    systematic underestimation of motion.  It is not a Horn-Schunck setting
    and is never touched by end-to-end adaptation.
    """

    smoothness: float = 15.0
    levels: int = 4
    iters_per_level: int = 40
    scale_factor: float = 0.5
    flow_bias: float = 1.0

    def __post_init__(self):
        self.smoothness = float(self.smoothness)
        self.scale_factor = float(self.scale_factor)
        self.flow_bias = float(self.flow_bias)
        self.levels = int(self.levels)
        self.iters_per_level = int(self.iters_per_level)
        if not np.isfinite(self.smoothness) or self.smoothness < 0:
            raise ValueError("smoothness must be finite and >= 0")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.iters_per_level < 1:
            raise ValueError("iters_per_level must be >= 1")
        if not 0.0 < self.scale_factor < 1.0:
            raise ValueError("scale_factor must lie in (0, 1)")
        if not 0.0 < self.flow_bias <= 1.0:
            raise ValueError("flow_bias must lie in (0, 1]")

    def to_text(self):
        return "".join(f"{f.name}={getattr(self, f.name)!r}\n" for f in fields(self))

    @classmethod
    def from_mapping(cls, mapping):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in mapping.items() if k in names})

    @classmethod
    def from_text(cls, text):
        from .config import parse_config

        return cls.from_mapping(parse_config(text))

    def with_(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return asdict(self)


def grayscale(frame):
    a = np.asarray(frame, dtype=np.float64)
    if a.ndim == 2:
        return a
    if a.shape[2] == 1:
        return a[:, :, 0]
    r, g, b = GRAY_WEIGHTS
    return r * a[:, :, 0] + g * a[:, :, 1] + b * a[:, :, 2]


def _central_diff(img):
    p = np.pad(img, 1, mode="edge")
    dx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    dy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return dx, dy


def _check_pair(a, b):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"frame sizes differ: {np.shape(a)} vs {np.shape(b)}")


def _cap_magnitude(u, v):
    """Shrink vectors longer than the image side; such displacements only sample the border."""
    # a hair inside the side length so rescaled vectors never round past it
    bound = float(max(u.shape)) * (1.0 - 1e-9)
    mag = np.hypot(u, v)
    over = mag > bound
    if np.any(over):
        k = np.where(over, bound / np.where(over, mag, 1.0), 1.0)
        u, v = u * k, v * k
    return u, v


def _hs_level(a, b, u, v, lam2, n_iter):
    """One pyramid level: warp ``b`` by the current flow and relax around it."""
    u, v = _cap_magnitude(u, v)
    bw = warp(b, FlowField(u, v))[:, :, 0]
    ax, ay = _central_diff(a)
    bx, by = _central_diff(bw)
    ix = 0.5 * (ax + bx)
    iy = 0.5 * (ay + by)
    it = bw - a
    denom = lam2 + ix * ix + iy * iy
    return _kernels.hs_relax(ix, iy, it, denom, u, v, u, v, n_iter)


def estimate_flow(a, b, params=None):
    """Dense flow from frame ``a`` to frame ``b`` (a(x) ~ b(x + flow(x)))."""
    params = params or EstimatorParams()
    _check_pair(a, b)
    h, w = np.shape(a)[:2]
    if min(h, w) < MIN_SIZE:
        raise ValueError(f"frames must be at least {MIN_SIZE}x{MIN_SIZE}")
    shapes = pyramid_shapes(h, w, params.levels, params.scale_factor)
    if min(shapes[-1]) < 4:
        raise ValueError(f"image {h}x{w} smaller than the coarsest pyramid level allows")
    ga = gaussian_pyramid(grayscale(a) * INTENSITY_SCALE, params.levels, params.scale_factor)
    gb = gaussian_pyramid(grayscale(b) * INTENSITY_SCALE, params.levels, params.scale_factor)
    lam2 = params.smoothness * params.smoothness
    hc, wc = shapes[-1]
    u = np.zeros((hc, wc))
    v = np.zeros((hc, wc))
    for lvl in range(params.levels - 1, -1, -1):
        if lvl < params.levels - 1:
            hf, wf = shapes[lvl]
            k = 1.0 / params.scale_factor
            u = resize(u, hf, wf) * k
            v = resize(v, hf, wf) * k
        u, v = _cap_magnitude(*_hs_level(ga[lvl], gb[lvl], u, v, lam2, params.iters_per_level))
    if params.flow_bias != 1.0:
        u = params.flow_bias * u
        v = params.flow_bias * v
    return FlowField(u, v)


def intermediate_flows(f01, f10, t=0.5):
    """Linear-motion split: returns (flow t->0, flow t->1)."""
    if f01.shape != f10.shape:
        raise ValueError("flow sizes differ")
    if not 0.0 < t < 1.0:
        raise ValueError("t must lie in (0, 1)")
    return f10.scaled(t), f01.scaled(1.0 - t)


SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0
SOBEL_Y = SOBEL_X.T.copy()
N_FEATURES = 6


def _sobel(img, axis):
    """Sobel response along ``axis`` (1: horizontal, 0: vertical), clamp-to-edge.

    Differencing before smoothing keeps the response of a constant image
    exactly zero.
    """
    p = np.pad(img, 1, mode="edge")
    if axis == 1:
        d = p[:, 2:] - p[:, :-2]
        return (d[:-2] + 2.0 * d[1:-1] + d[2:]) / 8.0
    d = p[2:, :] - p[:-2, :]
    return (d[:, :-2] + 2.0 * d[:, 1:-1] + d[:, 2:]) / 8.0


def _correlate3_adjoint(g, kernel):
    """Transpose of a 3x3 clamp-to-edge correlation with ``kernel``."""
    h, w = g.shape
    p = np.zeros((h + 2, w + 2))
    for dy in range(3):
        for dx in range(3):
            if kernel[dy, dx] != 0.0:
                p[dy:dy + h, dx:dx + w] += kernel[dy, dx] * g
    p[1, :] += p[0, :]
    p[-2, :] += p[-1, :]
    p[:, 1] += p[:, 0]
    p[:, -2] += p[:, -1]
    return p[1:-1, 1:-1]


def extract_features(a, b):
    """(H, W, 6) stack: [gray, sobel_x, sobel_y] of ``a`` then of ``b``."""
    _check_pair(a, b)
    chans = []
    for img in (a, b):
        g = grayscale(img)
        chans += [g, _sobel(g, 1), _sobel(g, 0)]
    feats = np.stack(chans, axis=-1)
    if not np.all(np.isfinite(feats)):
        raise ValueError("non-finite features")
    return feats


def features_adjoint(g_feats, channels):
    """Pull a gradient w.r.t. the feature stack back to the two input frames."""
    out = []
    for k in range(2):
        gg = (g_feats[..., 3 * k]
              + _correlate3_adjoint(g_feats[..., 3 * k + 1], SOBEL_X)
              + _correlate3_adjoint(g_feats[..., 3 * k + 2], SOBEL_Y))
        if channels == 1:
            out.append(gg[:, :, None])
        else:
            out.append(np.stack([wc * gg for wc in GRAY_WEIGHTS], axis=-1))
    return out
