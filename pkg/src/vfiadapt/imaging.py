"""Frames, flow fields, bilinear warping, pyramids and file I/O.

Frames are plain ``float64`` arrays of shape (H, W, C) with C in {1, 3} and
values in [0, 1].  Flow fields carry horizontal (``u``) and vertical
(``v``) pixel displacements.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import _kernels

FLO_MAGIC = 202021.25


class ImageFormatError(ValueError):
    """Raised for malformed or unsupported image / flow files."""


class FlowBoundError(ValueError):
    """A displacement longer than the larger image side reached a warp."""


def as_frame(data, clamp=False):
    """Validate ``data`` as a frame and return it as a (H, W, C) float64 array.

    A 2-D input is promoted to one channel.  With ``clamp`` the values are
    clipped to [0, 1]; otherwise out-of-range values raise.
    """
    a = np.asarray(data, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise ValueError(f"frame must be HxWx1 or HxWx3, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("frame contains non-finite values")
    if clamp:
        a = np.clip(a, 0.0, 1.0)
    elif a.size and (a.min() < 0.0 or a.max() > 1.0):
        raise ValueError("frame values outside [0, 1]")
    return np.ascontiguousarray(a)


@dataclass
class FlowField:
    """Per-pixel displacement; ``u`` horizontal, ``v`` vertical, both (H, W)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        if self.u.ndim != 2 or self.u.shape != self.v.shape:
            raise ValueError("flow components must be 2-D arrays of equal shape")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError("flow contains non-finite values")

    def check_bound(self):
        """Raise :class:`FlowBoundError` if any |(u, v)| exceeds max(H, W)."""
        bound = max(self.u.shape)
        if self.u.size and np.max(np.hypot(self.u, self.v)) > bound:
            raise FlowBoundError(f"flow displacement exceeds sanity bound {bound}")
        return self

    @property
    def height(self):
        return self.u.shape[0]

    @property
    def width(self):
        return self.u.shape[1]

    @property
    def shape(self):
        return self.u.shape

    @classmethod
    def zeros(cls, height, width):
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @classmethod
    def uniform(cls, height, width, u, v):
        return cls(np.full((height, width), float(u)), np.full((height, width), float(v)))

    def scaled(self, k):
        return FlowField(k * self.u, k * self.v)

    def copy(self):
        return FlowField(self.u.copy(), self.v.copy())

    def stack(self):
        """(H, W, 2) view with u first."""
        return np.stack([self.u, self.v], axis=-1)


@dataclass
class SampleJacobian:
    """Local derivatives of a backward warp.

    ``x0``/``y0`` are the top-left corners of the bilinear cells, ``fx``/``fy``
    the fractional offsets inside them.  ``d_du``/``d_dv`` hold the partial
    derivative of every output sample with respect to the flow components at
    that pixel (zero where the sampling coordinate was clamped).
    """

    x0: np.ndarray
    y0: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    inside_x: np.ndarray
    inside_y: np.ndarray
    d_du: np.ndarray
    d_dv: np.ndarray
    src_shape: tuple

    @property
    def weights(self):
        """(H, W, 4) bilinear weights in corner order 00, 01, 10, 11."""
        fx, fy = self.fx, self.fy
        return np.stack([(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy),
                         (1.0 - fx) * fy, fx * fy], axis=-1)

    def flow_grad(self, g):
        """Pull a gradient w.r.t. the warped image back to the flow."""
        return np.sum(g * self.d_du, axis=2), np.sum(g * self.d_dv, axis=2)

    def source_grad(self, g):
        """Pull a gradient w.r.t. the warped image back to the source image."""
        H, W, _ = self.src_shape
        return _kernels.scatter_bilinear(np.ascontiguousarray(g), self.x0, self.y0,
                                         self.fx, self.fy, H, W)


def _grid(height, width):
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.astype(np.float64), ys.astype(np.float64)


def _check_warp_args(src, flow):
    if src.shape[:2] != flow.shape:
        raise ValueError(f"frame {src.shape[:2]} and flow {flow.shape} sizes differ")
    if not (np.all(np.isfinite(flow.u)) and np.all(np.isfinite(flow.v))):
        raise ValueError("non-finite flow")
    flow.check_bound()


def warp(src, flow):
    """Backward warp without Jacobian bookkeeping."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    if src.ndim == 2:
        src = src[:, :, None]
    _check_warp_args(src, flow)
    xs, ys = _grid(*flow.shape)
    return _kernels.sample_bilinear(src, xs + flow.u, ys + flow.v, False)


def backward_warp(src, flow):
    """Sample ``src`` at ``(x + u, y + v)`` with clamp-to-edge bilinear lookup.

    Returns the warped image and a :class:`SampleJacobian`.  At integer
    coordinates the right-hand cell is used, so the derivative there is the
    forward difference of the source (backward difference on the last
    row/column).
    """
    src = np.ascontiguousarray(src, dtype=np.float64)
    if src.ndim == 2:
        src = src[:, :, None]
    _check_warp_args(src, flow)
    xs, ys = _grid(*flow.shape)
    out, x0, y0, fx, fy, mx, my, d_dx, d_dy = _kernels.sample_bilinear(
        src, xs + flow.u, ys + flow.v, True)
    jac = SampleJacobian(x0, y0, fx, fy, mx, my, d_dx, d_dy, src.shape)
    return out, jac


def resize(img, height, width):
    """Bilinear resample (pixel-centre aligned) to ``height`` x ``width``."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    H, W, _ = img.shape
    xs, ys = _grid(height, width)
    sx = (xs + 0.5) * (W / width) - 0.5
    sy = (ys + 0.5) * (H / height) - 0.5
    out = _kernels.sample_bilinear(img, sx, sy, False)
    return out[:, :, 0] if squeeze else out


_BLUR5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def blur5(img):
    """Separable [1 4 6 4 1]/16 blur, clamp-to-edge."""
    a = np.asarray(img, dtype=np.float64)
    for axis in (0, 1):
        p = np.pad(a, [(2, 2) if k == axis else (0, 0) for k in range(a.ndim)],
                   mode="edge")
        n = a.shape[axis]
        acc = 0.0
        for k, wk in enumerate(_BLUR5):
            acc = acc + wk * np.take(p, np.arange(k, k + n), axis=axis)
        a = acc
    return a


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def pyramid_shapes(height, width, levels, factor):
    shapes = [(height, width)]
    for _ in range(levels - 1):
        h, w = shapes[-1]
        shapes.append((_round_half_up(h * factor), _round_half_up(w * factor)))
    return shapes


def gaussian_pyramid(frame, levels, factor=0.5):
    """Fine-to-coarse pyramid; level 0 is the input itself."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if not 0.0 < factor < 1.0:
        raise ValueError("factor must lie in (0, 1)")
    img = np.asarray(frame, dtype=np.float64)
    shapes = pyramid_shapes(img.shape[0], img.shape[1], levels, factor)
    if min(shapes[-1]) < 4:
        raise ValueError(f"{levels} levels too deep for a {img.shape[0]}x{img.shape[1]} image")
    out = [img]
    for h, w in shapes[1:]:
        out.append(resize(blur5(out[-1]), h, w))
    return out


# --------------------------------------------------------------------------
# file I/O

def _read_ppm(data: bytes, path):
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated PPM header")
        tokens.append(int(data[start:pos]))
    pos += 1
    width, height, maxval = tokens
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported bit depth (maxval {maxval})")
    payload = data[pos:pos + width * height * 3]
    if len(payload) != width * height * 3:
        raise ImageFormatError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)


def load_frame(path):
    """Read an 8-bit PNG (RGB or gray) or binary PPM as a [0, 1] frame."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P6":
        raw = _read_ppm(data, path)
    else:
        try:
            with Image.open(path) as im:
                im.load()
                if im.mode in ("RGB", "L"):
                    raw = np.asarray(im)
                elif im.mode in ("RGBA", "P", "LA"):
                    raw = np.asarray(im.convert("RGB"))
                else:
                    raise ImageFormatError(f"{path}: unsupported bit depth / mode {im.mode}")
        except (OSError, SyntaxError) as exc:
            raise ImageFormatError(f"{path}: {exc}") from exc
    return as_frame(raw.astype(np.float64) / 255.0)


def quantize(frame):
    """Clamp to [0, 1] and map to bytes with round-half-up."""
    a = np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0)
    return np.floor(a * 255.0 + 0.5).astype(np.uint8)


def save_frame(frame, path):
    """Write a frame as PNG, or binary PPM when the suffix is .ppm/.pnm."""
    path = Path(path)
    q = quantize(as_frame(frame, clamp=True))
    if path.suffix.lower() in (".ppm", ".pnm"):
        if q.shape[2] == 1:
            q = np.repeat(q, 3, axis=2)
        h, w, _ = q.shape
        path.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + q.tobytes())
    else:
        Image.fromarray(q[:, :, 0] if q.shape[2] == 1 else q).save(path, format="PNG")


def write_flo(flow, path):
    """Middlebury .flo: float32 magic, int32 width, int32 height, (u, v) float32 pairs."""
    h, w = flow.shape
    payload = np.stack([flow.u, flow.v], axis=-1).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(payload.tobytes())


def read_flo(path):
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise ImageFormatError(f"{path}: truncated header")
    magic, w, h = struct.unpack("<fii", data[:12])
    if magic != FLO_MAGIC:
        raise ImageFormatError(f"{path}: bad magic")
    if w < 0 or h < 0 or len(data) != 12 + 8 * w * h:
        raise ImageFormatError(f"{path}: size/payload mismatch")
    uv = np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2).astype(np.float64)
    return FlowField(uv[..., 0], uv[..., 1])
