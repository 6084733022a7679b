"""Plug-in flow adapter: per-pixel affine modulation ``F' = alpha * F + beta``.

Two parameterisations are supported:

``direct``
    free ``alpha`` (H, W) and ``beta`` (H, W, 2) fields for each of the two
    warp directions.
``feature``
    a 1x1 linear head (no activation) mapping the 6-channel feature stack to
    ``(alpha, beta_u, beta_v)`` per pixel, shared by both directions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flow_estimator import N_FEATURES
from .imaging import FlowField

EARLIER = 0  # flow t->0, samples the earlier frame
LATER = 1  # flow t->1, samples the later frame
MODES = ("direct", "feature")

_MAGIC = b"VFAD"
_HEADER = struct.Struct("<4sIII")


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdapterParams:
    mode: str
    height: int
    width: int
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    weight: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown adapter mode {self.mode!r}")
        if self.height < 1 or self.width < 1:
            raise ValueError("adapter dimensions must be positive")
        if self.mode == "direct":
            if self.alpha.shape != (2, self.height, self.width):
                raise ValueError("alpha shape mismatch")
            if self.beta.shape != (2, self.height, self.width, 2):
                raise ValueError("beta shape mismatch")
        else:
            if self.weight.shape != (N_FEATURES, 3) or self.bias.shape != (3,):
                raise ValueError("feature head shape mismatch")

    def arrays(self):
        """Parameter arrays in serialisation order."""
        if self.mode == "direct":
            return [self.alpha[EARLIER], self.beta[EARLIER], self.alpha[LATER], self.beta[LATER]]
        return [self.weight, self.bias]

    @property
    def n_params(self):
        return sum(a.size for a in self.arrays())

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def copy(self):
        return type(self)(self.mode, self.height, self.width,
                          *(None if a is None else a.copy()
                            for a in (self.alpha, self.beta, self.weight, self.bias)))

    def zeros_like(self):
        return AdapterGrad(self.mode, self.height, self.width,
                           *(None if a is None else np.zeros_like(a)
                             for a in (self.alpha, self.beta, self.weight, self.bias)))

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def to_bytes(self):
        head = _HEADER.pack(_MAGIC, MODES.index(self.mode), self.height, self.width)
        return head + self.flat().astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob):
        magic, mode_id, h, w = _HEADER.unpack_from(blob)
        if magic != _MAGIC or mode_id >= len(MODES):
            raise ValueError("not an adapter blob")
        p = init_identity(h, w, MODES[mode_id])
        vals = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
        if vals.size != p.n_params:
            raise ValueError("adapter blob payload size mismatch")
        pos = 0
        for a in p.arrays():
            a[...] = vals[pos:pos + a.size].reshape(a.shape)
            pos += a.size
        return p

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


class AdapterGrad(AdapterParams):
    """Gradient container shaped like the parameters it belongs to."""

    def norm(self):
        return float(np.sqrt(sum(np.sum(a * a) for a in self.arrays())))


def init_identity(height, width, mode="direct"):
    """Adapter that leaves every flow untouched."""
    if mode == "direct":
        return AdapterParams(mode, height, width,
                             alpha=np.ones((2, height, width)),
                             beta=np.zeros((2, height, width, 2)))
    return AdapterParams(mode, height, width,
                         weight=np.zeros((N_FEATURES, 3)),
                         bias=np.array([1.0, 0.0, 0.0]))


@dataclass
class ApplyTape:
    mode: str
    direction: int
    flow: FlowField
    feats: Optional[np.ndarray]
    weight: Optional[np.ndarray]


def _modulation(p, feats, direction):
    if p.mode == "direct":
        return p.alpha[direction], p.beta[direction, ..., 0], p.beta[direction, ..., 1]
    head = feats @ p.weight + p.bias
    return head[..., 0], head[..., 1], head[..., 2]


def apply(p, flow, feats=None, direction=EARLIER):
    """Modulate ``flow``; returns the new field and a tape for :func:`backward`."""
    if flow.shape != (p.height, p.width):
        raise ValueError(f"flow {flow.shape} does not match adapter {(p.height, p.width)}")
    if p.mode == "feature":
        if feats is None:
            raise ValueError("feature-conditioned adapter needs a feature stack")
        if feats.shape != (p.height, p.width, N_FEATURES):
            raise ValueError("feature stack shape mismatch")
    alpha, bu, bv = _modulation(p, feats, direction)
    out = FlowField(alpha * flow.u + bu, alpha * flow.v + bv)
    tape = ApplyTape(p.mode, direction, flow, feats,
                     None if p.weight is None else p.weight.copy())
    return out, tape


def backward(tape, g_u, g_v, out):
    """Accumulate dL/dparams into ``out`` given dL/dF' = (g_u, g_v)."""
    if g_u.shape != tape.flow.shape or g_v.shape != tape.flow.shape:
        raise ValueError("upstream gradient shape does not match tape")
    if out.mode != tape.mode:
        raise ValueError("gradient container mode does not match tape")
    d_alpha = g_u * tape.flow.u + g_v * tape.flow.v
    if tape.mode == "direct":
        out.alpha[tape.direction] += d_alpha
        out.beta[tape.direction, ..., 0] += g_u
        out.beta[tape.direction, ..., 1] += g_v
    else:
        d_head = np.stack([d_alpha, g_u, g_v], axis=-1)
        m = tape.feats.reshape(-1, N_FEATURES)
        out.weight += m.T @ d_head.reshape(-1, 3)
        out.bias += d_head.reshape(-1, 3).sum(axis=0)
    return out


def feature_grad(tape, g_u, g_v):
    """dL/d(feature stack) for a feature-conditioned tape."""
    d_alpha = g_u * tape.flow.u + g_v * tape.flow.v
    d_head = np.stack([d_alpha, g_u, g_v], axis=-1)
    return d_head @ tape.weight.T


def sgd_step(p, g, eta):
    """In-place ``theta <- theta - eta * grad``; rejects the whole step on non-finite input."""
    if not np.isfinite(eta) or eta < 0:
        raise ValueError("learning rate must be finite and >= 0")
    if g.mode != p.mode or g.n_params != p.n_params:
        raise ValueError("gradient does not match parameters")
    if not g.is_finite():
        raise NonFiniteGradientError("non-finite gradient; update rejected")
    for a, ga in zip(p.arrays(), g.arrays()):
        a -= eta * ga
