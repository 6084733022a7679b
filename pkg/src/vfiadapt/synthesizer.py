"""Midpoint frame synthesis with a recorded tape for backpropagation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import adapter as adp
from .flow_estimator import (EstimatorParams, estimate_flow, extract_features,
                             features_adjoint, intermediate_flows)
from .imaging import FlowField, SampleJacobian, as_frame, backward_warp, warp

T_MID = 0.5


class IncompleteTapeError(RuntimeError):
    pass


@dataclass
class SynthesisTape:
    apply_tapes: tuple
    jacobians: tuple
    inside: np.ndarray  # 1 where the blended value was not clamped
    source_grad: bool  # whether backward should also return dL/d(inputs)
    flows: tuple  # (f01, f10) estimator outputs, gradient stops here
    modulated: tuple  # adapted intermediate flows (t->0, t->1)
    channels: int

    def check(self):
        parts = (self.apply_tapes, self.jacobians, self.inside, self.flows)
        if any(p is None for p in parts) or len(self.apply_tapes) != 2 \
                or len(self.jacobians) != 2 or any(j is None for j in self.jacobians):
            raise IncompleteTapeError("synthesis tape is missing a segment")


def bidirectional_flows(i0, i1, est):
    return estimate_flow(i0, i1, est), estimate_flow(i1, i0, est)


def interpolate(i0, i1, est=None, adapter=None, flows=None, source_grad=False):
    """Synthesize the midpoint frame between ``i0`` and ``i1``.

    ``flows`` injects precomputed ``(f01, f10)`` in place of the estimator.
    ``adapter`` defaults to the identity direct adapter.
    """
    i0 = np.asarray(i0, dtype=np.float64)
    i1 = np.asarray(i1, dtype=np.float64)
    if i0.shape != i1.shape:
        raise ValueError(f"frame sizes differ: {i0.shape} vs {i1.shape}")
    h, w = i0.shape[:2]
    if flows is None:
        flows = bidirectional_flows(i0, i1, est or EstimatorParams())
    f01, f10 = flows
    if adapter is None:
        adapter = adp.init_identity(h, w)
    ft0, ft1 = intermediate_flows(f01, f10, T_MID)
    feats = extract_features(i0, i1) if adapter.mode == "feature" else None
    h0, tape0 = adp.apply(adapter, ft0, feats, adp.EARLIER)
    h1, tape1 = adp.apply(adapter, ft1, feats, adp.LATER)
    w0, jac0 = backward_warp(i0, h0)
    w1, jac1 = backward_warp(i1, h1)
    raw = 0.5 * w0 + 0.5 * w1
    if not np.all(np.isfinite(raw)):
        raise FloatingPointError("non-finite synthesized frame")
    inside = ((raw >= 0.0) & (raw <= 1.0)).astype(np.float64)
    out = np.clip(raw, 0.0, 1.0)
    tape = SynthesisTape((tape0, tape1), (jac0, jac1), inside, source_grad,
                         (f01, f10), (h0, h1), i0.shape[2])
    return out, tape


def interpolate_frozen(i0, i1, est=None, flows=None):
    """Reference synthesis with no adapter code path at all."""
    i0 = as_frame(i0)
    i1 = as_frame(i1)
    if flows is None:
        flows = bidirectional_flows(i0, i1, est or EstimatorParams())
    ft0, ft1 = intermediate_flows(*flows, T_MID)
    return np.clip(0.5 * warp(i0, ft0) + 0.5 * warp(i1, ft1), 0.0, 1.0)


def interpolate_backward(tape, dl_dframe, grad):
    """Backpropagate dL/d(output) into ``grad`` (an :class:`AdapterGrad`).

    Returns ``(grad, (dL/di0, dL/di1))`` when the tape was recorded with
    ``source_grad``, else ``(grad, None)``.  Estimator outputs are treated as
    constants.
    """
    tape.check()
    g = np.asarray(dl_dframe, dtype=np.float64)
    if g.shape != tape.inside.shape:
        raise ValueError("loss gradient shape does not match synthesized frame")
    g = g * tape.inside
    branch = 0.5 * g
    src_grads = []
    feat_grad = None
    for atape, jac in zip(tape.apply_tapes, tape.jacobians):
        gu, gv = jac.flow_grad(branch)
        adp.backward(atape, gu, gv, grad)
        if tape.source_grad:
            src_grads.append(jac.source_grad(branch))
            if atape.mode == "feature":
                fg = adp.feature_grad(atape, gu, gv)
                feat_grad = fg if feat_grad is None else feat_grad + fg
    if not tape.source_grad:
        return grad, None
    if feat_grad is not None:
        fa, fb = features_adjoint(feat_grad, tape.channels)
        src_grads = [src_grads[0] + fa, src_grads[1] + fb]
    return grad, tuple(src_grads)
