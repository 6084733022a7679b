"""Synthetic seven-frame sequences with exact ground truth.

Every frame is rendered by evaluating a continuous texture at analytically
transformed coordinates, so no frame is ever resampled from another one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..adaptation import Septuplet
from ..imaging import FlowField

KINDS = ("translate", "rotate", "affine", "multiblob")
TEXTURES = ("gaussian_blobs", "sinusoid", "value_noise")
N_FRAMES = 7
MID = 3


class MotionBoundError(ValueError):
    pass


# --------------------------------------------------------------------------
# continuous textures; each maps coordinate arrays (x, y) to (..., 3)

class ValueNoise:
    """Periodic smoothstep-interpolated lattice noise, two octaves."""

    def __init__(self, rng, spacing=12.0, period=64):
        self.octaves = []
        for k, amp in ((1.0, 0.65), (0.5, 0.35)):
            lattice = rng.random((period, period, 3))
            self.octaves.append((spacing * k, amp, lattice))
        self.period = period

    def __call__(self, x, y):
        out = 0.0
        for spacing, amp, lat in self.octaves:
            gx, gy = x / spacing, y / spacing
            x0, y0 = np.floor(gx), np.floor(gy)
            tx, ty = gx - x0, gy - y0
            sx = (tx * tx * (3.0 - 2.0 * tx))[..., None]
            sy = (ty * ty * (3.0 - 2.0 * ty))[..., None]
            i0 = x0.astype(np.int64) % self.period
            j0 = y0.astype(np.int64) % self.period
            i1 = (i0 + 1) % self.period
            j1 = (j0 + 1) % self.period
            top = lat[j0, i0] * (1 - sx) + lat[j0, i1] * sx
            bot = lat[j1, i0] * (1 - sx) + lat[j1, i1] * sx
            out = out + amp * (top * (1 - sy) + bot * sy)
        return 0.1 + 0.8 * out


class Sinusoid:
    def __init__(self, rng, n=4):
        theta = rng.uniform(0, np.pi, n)
        wavelength = rng.uniform(20.0, 48.0, n)
        self.k = np.stack([np.cos(theta), np.sin(theta)], 1) * (2 * np.pi / wavelength)[:, None]
        self.phase = rng.uniform(0, 2 * np.pi, n)
        self.mix = rng.uniform(0.3, 1.0, (n, 3))
        self.mix /= self.mix.sum(axis=0, keepdims=True)

    def __call__(self, x, y):
        out = 0.0
        for (kx, ky), ph, m in zip(self.k, self.phase, self.mix):
            out = out + np.sin(kx * x + ky * y + ph)[..., None] * m
        return 0.5 + 0.4 * out


class GaussianBlobs:
    def __init__(self, rng, extent, n=None):
        lo, hi = extent
        n = n or int(((hi - lo) / 10.0) ** 2)
        self.centers = rng.uniform(lo, hi, (n, 2))
        self.sigma = rng.uniform(3.0, 9.0, n)
        self.color = rng.uniform(-1.0, 1.0, (n, 3))

    def __call__(self, x, y):
        out = np.zeros(x.shape + (3,))
        for (cx, cy), s, col in zip(self.centers, self.sigma, self.color):
            d2 = (x - cx) ** 2 + (y - cy) ** 2
            out += np.exp(-d2 / (2 * s * s))[..., None] * col
        return 0.5 + 0.35 * np.tanh(out)


def make_texture(name, rng, extent):
    if name == "value_noise":
        return ValueNoise(rng)
    if name == "sinusoid":
        return Sinusoid(rng)
    if name == "gaussian_blobs":
        return GaussianBlobs(rng, extent)
    raise ValueError(f"unknown texture {name!r}")


# --------------------------------------------------------------------------
# scene description

@dataclass
class ScenePattern:
    """Motion kind, per-frame motion and texture.

    ``velocity`` is the (vx, vy) displacement per frame for ``translate``;
    for the other kinds only its magnitude is used, as the displacement per
    frame at radius min(W, H)/2 (``rotate``, ``affine``) or the speed of each
    blob (``multiblob``).  ``rate`` (rad/frame) overrides it for ``rotate``.
    """

    kind: str = "translate"
    velocity: tuple = (1.0, 0.0)
    texture: str = "value_noise"
    rate: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if self.texture not in TEXTURES:
            raise ValueError(f"unknown texture {self.texture!r}")
        v = np.atleast_1d(np.asarray(self.velocity, dtype=float))
        self.velocity = (float(v[0]), float(v[1]) if v.size > 1 else 0.0)

    @property
    def speed(self):
        return float(np.hypot(*self.velocity))


@dataclass
class SceneOracle:
    """Exact quantities of a synthetic sequence."""

    midpoint: np.ndarray
    _flow_fn: object = field(repr=False)

    def flow(self, i, j):
        """Flow from frame ``i`` to frame ``j`` (0-based) on frame ``i``'s grid."""
        return self._flow_fn(i, j)


def _grid(h, w):
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(float), ys.astype(float)


def _linear_motion(pattern, h, w, rng):
    """Returns (to_texture(k, x, y), to_frame(k, qx, qy)) for a global linear motion."""
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    radius = min(w, h) / 2.0
    if pattern.kind == "translate":
        vx, vy = pattern.velocity
        return (lambda k, x, y: (x - k * vx, y - k * vy),
                lambda k, x, y: (x + k * vx, y + k * vy))
    if pattern.kind == "rotate":
        rate = pattern.rate if pattern.rate is not None else pattern.speed / radius
        mats = {k: np.array([[np.cos(k * rate), -np.sin(k * rate)],
                             [np.sin(k * rate), np.cos(k * rate)]]) for k in range(-8, 9)}
    else:
        g = rng.normal(size=(2, 2))
        g *= (pattern.speed / radius) / np.linalg.norm(g, 2)
        step = np.eye(2) + g
        mats = {k: np.linalg.matrix_power(step, k) if k >= 0
                else np.linalg.matrix_power(np.linalg.inv(step), -k) for k in range(-8, 9)}

    def apply(m, x, y):
        dx, dy = x - cx, y - cy
        return m[0, 0] * dx + m[0, 1] * dy + cx, m[1, 0] * dx + m[1, 1] * dy + cy

    return (lambda k, x, y: apply(mats[-k], x, y),
            lambda k, x, y: apply(mats[k], x, y))


def _max_step_displacement(to_frame, h, w):
    xs, ys = _grid(h, w)
    worst = 0.0
    for k in range(N_FRAMES - 1):
        ax, ay = to_frame(k, xs, ys)
        bx, by = to_frame(k + 1, xs, ys)
        worst = max(worst, float(np.max(np.hypot(bx - ax, by - ay))))
    return worst


def _render_linear(pattern, h, w, rng):
    to_tex, to_frame = _linear_motion(pattern, h, w, rng)
    if _max_step_displacement(to_frame, h, w) > w / 4.0 + 1e-9:
        raise MotionBoundError("per-frame motion exceeds a quarter of the image width")
    margin = 8 * max(pattern.speed, 1.0) + 16
    tex = make_texture(pattern.texture, rng, (-margin, max(h, w) + margin))
    xs, ys = _grid(h, w)
    frames = [np.clip(tex(*to_tex(k, xs, ys)), 0.0, 1.0) for k in range(N_FRAMES)]

    def flow(i, j):
        qx, qy = to_tex(i, xs, ys)
        px, py = to_frame(j, qx, qy)
        return FlowField(px - xs, py - ys)

    return frames, flow


def _render_multiblob(pattern, h, w, rng):
    n_side = 2
    cell_w, cell_h = w / n_side, h / n_side
    sigma = min(w, h) / 14.0
    speed = pattern.speed
    if speed > w / 4.0:
        raise MotionBoundError("per-frame motion exceeds a quarter of the image width")
    blobs = []
    for r in range(n_side):
        for c in range(n_side):
            ang = rng.uniform(0, 2 * np.pi)
            vel = speed * np.array([np.cos(ang), np.sin(ang)])
            centre = np.array([(c + 0.5) * cell_w, (r + 0.5) * cell_h])
            colour = rng.uniform(0.35, 1.0, 3)
            tex = make_texture(pattern.texture, rng, (-3 * sigma, 3 * sigma))
            blobs.append((centre, vel, colour, tex))
    background = 0.12
    xs, ys = _grid(h, w)

    def positions(k):
        return [centre + (k - MID) * vel for centre, vel, _, _ in blobs]

    def render(k):
        img = np.full((h, w, 3), background)
        for (centre, vel, colour, tex), pos in zip(blobs, positions(k)):
            lx, ly = xs - pos[0], ys - pos[1]
            env = np.exp(-(lx * lx + ly * ly) / (2 * sigma * sigma))[..., None]
            app = colour * (0.45 + 0.55 * tex(lx, ly))
            img = (1 - env) * img + env * app
        return np.clip(img, 0.0, 1.0)

    frames = [render(k) for k in range(N_FRAMES)]

    def flow(i, j):
        envs = []
        for pos in positions(i):
            envs.append(np.exp(-((xs - pos[0]) ** 2 + (ys - pos[1]) ** 2) / (2 * sigma * sigma)))
        envs = np.stack(envs)
        owner = np.argmax(envs, axis=0)
        on_blob = envs.max(axis=0) > 1e-3
        vel = np.stack([b[1] for b in blobs])
        u = np.where(on_blob, vel[owner, 0] * (j - i), 0.0)
        v = np.where(on_blob, vel[owner, 1] * (j - i), 0.0)
        return FlowField(u, v)

    return frames, flow


def synth_sequence(pattern, res=(128, 128), seed=0, seq_id=""):
    """Render a :class:`Septuplet` and its :class:`SceneOracle`.

    ``res`` is (width, height).
    """
    w, h = res
    rng = np.random.default_rng(seed)
    if pattern.kind == "multiblob":
        frames, flow = _render_multiblob(pattern, h, w, rng)
    else:
        frames, flow = _render_linear(pattern, h, w, rng)
    return Septuplet(frames, seq_id=seq_id), SceneOracle(frames[MID], flow)
