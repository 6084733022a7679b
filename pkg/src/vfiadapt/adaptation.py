"""Test-time adaptation on a seven-frame sequence.

Frames are indexed 0..6.  The even indices 0, 2, 4, 6 are the model inputs;
index 3 is the held-out midpoint that only evaluation may read.  The cycle
objective builds the two triplets (0, 2, 4) and (2, 4, 6), synthesizes the
in-between frames 1, 3, 5 from the inputs and then re-synthesizes frames 2
and 4 from those estimates.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import adapter as adp
from .flow_estimator import EstimatorParams
from .imaging import FlowBoundError, as_frame
from .metrics import psnr, ssim
from .synthesizer import bidirectional_flows, interpolate, interpolate_backward

INPUT_INDICES = (0, 2, 4, 6)
HELD_OUT = 3
TRIPLETS = ((0, 2, 4), (2, 4, 6))
STRATEGIES = ("cycle", "naive")
MODES = ("plugin", "e2e")


class Septuplet:
    """Seven equally sized frames; read them through :meth:`frame`."""

    def __init__(self, frames, seq_id=""):
        frames = [as_frame(f) for f in frames]
        if len(frames) != 7:
            raise ValueError(f"a septuplet needs exactly 7 frames, got {len(frames)}")
        if any(f.shape != frames[0].shape for f in frames):
            raise ValueError("septuplet frames differ in size")
        self._frames = tuple(frames)
        self.seq_id = seq_id

    def frame(self, index):
        return self._frames[index]

    @property
    def shape(self):
        return self._frames[0].shape

    def triplets(self):
        """The two adaptation triplets as tuples of frames."""
        return [tuple(self.frame(i) for i in t) for t in TRIPLETS]


@dataclass
class AdaptationConfig:
    strategy: str = "cycle"
    mode: str = "plugin"
    steps: int = 10
    eta: float = 1.0
    eval_every: int = 1
    adapter_mode: str = "direct"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not math.isfinite(self.eta) or self.eta < 0:
            raise ValueError("eta must be finite and >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class AdaptationReport:
    losses: list = field(default_factory=list)
    psnr: dict = field(default_factory=dict)
    ssim: dict = field(default_factory=dict)
    n_params: int = 0
    adapt_ms: float = float("nan")
    infer_ms: float = float("nan")
    aborted: bool = False
    flags: list = field(default_factory=list)
    estimator: Optional[EstimatorParams] = None

    def to_csv(self):
        lines = ["step,loss,psnr,ssim"]
        for step, loss in enumerate(self.losses):
            p = self.psnr.get(step)
            s = self.ssim.get(step)
            lines.append(f"{step},{loss!r},{'' if p is None else repr(p)},"
                         f"{'' if s is None else repr(s)}")
        lines.append("params,adapt_ms,infer_ms")
        lines.append(f"{self.n_params},{self.adapt_ms!r},{self.infer_ms!r}")
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# objectives

def _input_flows(s, est, pairs, cache):
    for a, b in pairs:
        if (a, b) not in cache:
            cache[(a, b)] = bidirectional_flows(s.frame(a), s.frame(b), est)


@dataclass
class Forward:
    """Everything a strategy forward pass produced."""

    loss: float
    outputs: dict
    tapes: dict
    targets: dict
    flows: dict


def _l1_grad(pred, target, weight):
    return (weight / pred.size) * np.sign(pred - target)


def cycle_forward(s, est, adapter, flows=None):
    """Cycle objective forward pass.

    ``flows`` maps a frame-pair key to estimator outputs and is filled in
    place.  Keys ``(a, b)`` refer to input frames; ``("syn", a, b)`` to
    synthesized frames and are recomputed unless already present.
    """
    flows = {} if flows is None else flows
    _input_flows(s, est, [(0, 2), (2, 4), (4, 6)], flows)
    outputs, tapes = {}, {}
    for a, b in ((0, 2), (2, 4), (4, 6)):
        mid = (a + b) // 2
        outputs[mid], tapes[mid] = interpolate(s.frame(a), s.frame(b), est, adapter,
                                               flows=flows[(a, b)])
    targets = {}
    loss = 0.0
    for a, b in ((1, 3), (3, 5)):
        mid = (a + b) // 2
        key = ("syn", a, b)
        if key not in flows:
            flows[key] = bidirectional_flows(outputs[a], outputs[b], est)
        outputs[mid], tapes[mid] = interpolate(outputs[a], outputs[b], est, adapter,
                                               flows=flows[key], source_grad=True)
        targets[mid] = s.frame(mid)
        loss += 0.5 * float(np.mean(np.abs(outputs[mid] - targets[mid])))
    return Forward(loss, outputs, tapes, targets, flows)


def cycle_backward(fwd, grad):
    for mid, (a, b) in ((2, (1, 3)), (4, (3, 5))):
        dl = _l1_grad(fwd.outputs[mid], fwd.targets[mid], 0.5)
        _, (ga, gb) = interpolate_backward(fwd.tapes[mid], dl, grad)
        for k, gk in ((a, ga), (b, gb)):
            interpolate_backward(fwd.tapes[k], gk, grad)
    return grad


def naive_forward(s, est, adapter, flows=None):
    """Wide-gap objective: frame 2 from (0, 4) and frame 4 from (2, 6)."""
    flows = {} if flows is None else flows
    _input_flows(s, est, [(0, 4), (2, 6)], flows)
    outputs, tapes, targets = {}, {}, {}
    loss = 0.0
    for a, b in ((0, 4), (2, 6)):
        mid = (a + b) // 2
        outputs[mid], tapes[mid] = interpolate(s.frame(a), s.frame(b), est, adapter,
                                               flows=flows[(a, b)])
        targets[mid] = s.frame(mid)
        loss += 0.5 * float(np.mean(np.abs(outputs[mid] - targets[mid])))
    return Forward(loss, outputs, tapes, targets, flows)


def naive_backward(fwd, grad):
    for mid in (2, 4):
        dl = _l1_grad(fwd.outputs[mid], fwd.targets[mid], 0.5)
        interpolate_backward(fwd.tapes[mid], dl, grad)
    return grad


_OBJECTIVES = {"cycle": (cycle_forward, cycle_backward),
               "naive": (naive_forward, naive_backward)}


def strategy_step(strategy, s, est, adapter, flows=None):
    forward, back = _OBJECTIVES[strategy]
    fwd = forward(s, est, adapter, flows)
    grad = back(fwd, adapter.zeros_like())
    return fwd.loss, grad, fwd


def cycle_loss_step(s, est, adapter, flows=None):
    """Averaged two-triplet cycle loss and its gradient w.r.t. the adapter."""
    loss, grad, _ = strategy_step("cycle", s, est, adapter, flows)
    return loss, grad


def naive_loss_step(s, est, adapter, flows=None):
    loss, grad, _ = strategy_step("naive", s, est, adapter, flows)
    return loss, grad


def strategy_loss(strategy, s, est, adapter=None, flows=None):
    h, w = s.shape[:2]
    adapter = adapter or adp.init_identity(h, w)
    return _OBJECTIVES[strategy][0](s, est, adapter, flows).loss


# --------------------------------------------------------------------------
# evaluation and the update loops

def heldout_prediction(s, est, adapter, flows=None):
    """Midpoint estimate of the held-out frame from its two input neighbours."""
    f = None if flows is None else flows.get((2, 4))
    out, _ = interpolate(s.frame(2), s.frame(4), est, adapter, flows=f)
    return out


def _record_eval(report, step, pred, s):
    target = s.frame(HELD_OUT)
    report.psnr[step] = psnr(pred, target)
    report.ssim[step] = ssim(pred, target)


def _should_eval(step, cfg, eval_steps):
    if eval_steps is not None:
        return step in eval_steps
    return step % cfg.eval_every == 0 or step == cfg.steps


def _time_inference(s, est, adapter, report):
    t0 = time.perf_counter()
    try:
        interpolate(s.frame(2), s.frame(4), est, adapter)
    except FlowBoundError as exc:
        report.flags.append(f"inference: {exc}")
        return float("nan")
    return (time.perf_counter() - t0) * 1e3


def adapt(s, est, adapter, cfg, eval_steps=None, evaluate=True):
    """Run ``cfg.steps`` gradient-descent updates of ``adapter`` in place.

    Loss and held-out metrics are recorded before each update, so index 0
    is always the frozen baseline.  ``eval_steps`` overrides ``eval_every``.
    Resetting the adapter between sequences is the caller's job.
    """
    est = est or EstimatorParams()
    report = AdaptationReport(n_params=adapter.n_params)
    flows = {}
    step_ms = []
    for step in range(cfg.steps + 1):
        t0 = time.perf_counter()
        try:
            # stage-1 estimator outputs depend only on input frames; reuse them
            loss, grad, fwd = strategy_step(cfg.strategy, s, est, adapter, dict(flows))
        except FlowBoundError as exc:
            report.aborted = True
            report.flags.append(f"step {step}: {exc}")
            break
        elapsed = time.perf_counter() - t0
        flows = {k: v for k, v in fwd.flows.items() if k[0] != "syn"}
        if not math.isfinite(loss):
            report.aborted = True
            report.flags.append(f"non-finite loss at step {step}")
            break
        report.losses.append(loss)
        if evaluate and _should_eval(step, cfg, eval_steps):
            if cfg.strategy == "cycle":
                pred = fwd.outputs[HELD_OUT]
            else:
                pred = heldout_prediction(s, est, adapter, flows)
            _record_eval(report, step, pred, s)
        if step < cfg.steps:
            t0 = time.perf_counter()
            try:
                adp.sgd_step(adapter, grad, cfg.eta)
            except adp.NonFiniteGradientError as exc:
                report.aborted = True
                report.flags.append(f"step {step}: {exc}")
            elapsed += time.perf_counter() - t0
        step_ms.append(elapsed * 1e3)
        if report.aborted:
            break
    report.adapt_ms = float(np.mean(step_ms)) if step_ms else float("nan")
    report.infer_ms = _time_inference(s, est, adapter, report)
    return report


E2E_REL_EPS = 1e-2
MIN_SMOOTHNESS = 1e-6


def smoothness_gradient(s, est, strategy, rel_eps=E2E_REL_EPS):
    """Central finite difference of the strategy loss w.r.t. the smoothness weight."""
    lam = est.smoothness
    h = rel_eps * lam if lam > 0 else rel_eps
    lp = strategy_loss(strategy, s, est.with_(smoothness=lam + h))
    lm = strategy_loss(strategy, s, est.with_(smoothness=max(lam - h, 0.0)))
    return (lp - lm) / ((lam + h) - max(lam - h, 0.0))


def e2e_adapt(s, est, cfg, eval_steps=None, evaluate=True):
    """Tune the estimator's smoothness weight by gradient descent.

    The adapter stays at identity and integer settings stay frozen.
    Returns the adapted parameters and the report.
    """
    est = est or EstimatorParams()
    h, w = s.shape[:2]
    identity = adp.init_identity(h, w)
    report = AdaptationReport(n_params=1)
    step_ms = []
    for step in range(cfg.steps + 1):
        t0 = time.perf_counter()
        fwd = _OBJECTIVES[cfg.strategy][0](s, est, identity, {})
        elapsed = time.perf_counter() - t0
        if not math.isfinite(fwd.loss):
            report.aborted = True
            report.flags.append(f"non-finite loss at step {step}")
            break
        report.losses.append(fwd.loss)
        if evaluate and _should_eval(step, cfg, eval_steps):
            if cfg.strategy == "cycle":
                pred = fwd.outputs[HELD_OUT]
            else:
                pred = heldout_prediction(s, est, identity, fwd.flows)
            _record_eval(report, step, pred, s)
        if step < cfg.steps:
            t0 = time.perf_counter()
            g = smoothness_gradient(s, est, cfg.strategy)
            if not math.isfinite(g):
                report.aborted = True
                report.flags.append(f"step {step}: non-finite smoothness gradient")
            else:
                lam = est.smoothness - cfg.eta * g
                if lam < 0.0:
                    report.flags.append(f"step {step}: smoothness clamped to {MIN_SMOOTHNESS}")
                    lam = MIN_SMOOTHNESS
                est = est.with_(smoothness=lam)
            elapsed += time.perf_counter() - t0
        step_ms.append(elapsed * 1e3)
        if report.aborted:
            break
    report.adapt_ms = float(np.mean(step_ms)) if step_ms else float("nan")
    report.infer_ms = _time_inference(s, est, identity, report)
    report.estimator = est
    return est, report
