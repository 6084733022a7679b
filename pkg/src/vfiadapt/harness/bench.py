"""Benchmark specification, per-sequence evaluation and the ablation runner."""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..adaptation import AdaptationConfig, adapt, e2e_adapt
from ..adapter import init_identity
from ..config import parse_config
from ..flow_estimator import EstimatorParams
from .scenes import KINDS, TEXTURES, ScenePattern, synth_sequence

# upper per-frame speed (px) of each motion tier at 128x128
TIERS = {"easy": 1.0, "medium": 2.0, "hard": 4.0, "extreme": 8.0}
ROW_FIELDS = ("seq_id", "strategy", "mode", "step", "loss", "psnr", "ssim",
              "adapt_ms", "infer_ms", "n_params")
MEAN_ID = "mean"


@dataclass
class SeqSpec:
    seq_id: str
    kind: str
    texture: str
    tier: str
    seed: int
    width: int = 128
    height: int = 128

    def pattern(self):
        """Motion drawn deterministically from the seed within the tier bound."""
        rng = np.random.default_rng([self.seed, 7])
        speed = TIERS[self.tier] * (0.6 + 0.4 * rng.random())
        ang = rng.uniform(0.0, 2.0 * np.pi)
        return ScenePattern(self.kind, (speed * np.cos(ang), speed * np.sin(ang)), self.texture)

    def render(self):
        return synth_sequence(self.pattern(), (self.width, self.height), self.seed, self.seq_id)


@dataclass
class BenchSpec:
    sequences: list = field(default_factory=list)
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    def to_text(self):
        lines = [f"gamma={self.gamma!r}"]
        for q in self.sequences:
            lines.append(f"seq={q.seq_id} kind={q.kind} texture={q.texture} tier={q.tier} "
                         f"seed={q.seed} res={q.width}x{q.height}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        gamma = 1.0
        seqs = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("seq="):
                kv = dict(tok.split("=", 1) for tok in line.split())
                w, h = (int(x) for x in kv.get("res", "128x128").lower().split("x"))
                seqs.append(SeqSpec(kv["seq"], kv["kind"], kv["texture"], kv["tier"],
                                    int(kv["seed"]), w, h))
            else:
                cfg = parse_config(line)
                gamma = float(cfg.get("gamma", gamma))
        return cls(seqs, gamma)

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


def default_bench(gamma=0.6, res=(128, 128)):
    """20 sequences, five per motion tier, fixed seeds."""
    seqs = []
    n = 0
    for tier in TIERS:
        for k in range(5):
            kind = KINDS[(n + k) % len(KINDS)]
            texture = TEXTURES[n % len(TEXTURES)]
            seqs.append(SeqSpec(f"{n:02d}_{tier}_{kind}", kind, texture, tier,
                                seed=1000 + n, width=res[0], height=res[1]))
            n += 1
    return BenchSpec(seqs, gamma)


# --------------------------------------------------------------------------

def evaluate_septuplet(s, est, cfg, steps_list=None, seq_id=None):
    """Adapt a fresh model per ``cfg`` and report rows at each step in ``steps_list``."""
    steps_list = sorted(set(steps_list if steps_list is not None else [cfg.steps]))
    run_cfg = AdaptationConfig(cfg.strategy, cfg.mode, max(steps_list), cfg.eta,
                               cfg.eval_every, cfg.adapter_mode)
    h, w = s.shape[:2]
    if cfg.mode == "plugin":
        report = adapt(s, est, init_identity(h, w, cfg.adapter_mode), run_cfg,
                       eval_steps=set(steps_list))
    else:
        _, report = e2e_adapt(s, est, run_cfg, eval_steps=set(steps_list))
    rows = []
    for step in steps_list:
        if step >= len(report.losses):
            break
        rows.append({
            "seq_id": seq_id if seq_id is not None else s.seq_id,
            "strategy": cfg.strategy, "mode": cfg.mode, "step": step,
            "loss": report.losses[step], "psnr": report.psnr[step],
            "ssim": report.ssim[step], "adapt_ms": report.adapt_ms,
            "infer_ms": report.infer_ms, "n_params": report.n_params,
        })
    return rows


def _run_job(job):
    spec, strategy, mode, steps_list, est, eta, adapter_mode = job
    s, _ = spec.render()
    cfg = AdaptationConfig(strategy, mode, max(steps_list), eta, 1, adapter_mode)
    return evaluate_septuplet(s, est, cfg, steps_list, spec.seq_id)


def worker_count():
    cap = os.environ.get("VFI_THREADS")
    n = os.cpu_count() or 1
    return max(1, min(n, int(cap))) if cap else n


def aggregate(rows):
    cells = {}
    for r in rows:
        cells.setdefault((r["strategy"], r["mode"], r["step"]), []).append(r)
    out = []
    for (strategy, mode, step), group in cells.items():
        row = {"seq_id": MEAN_ID, "strategy": strategy, "mode": mode, "step": step}
        for k in ("loss", "psnr", "ssim", "adapt_ms", "infer_ms"):
            row[k] = float(np.mean([g[k] for g in group]))
        counts = [g["n_params"] for g in group]
        # keep exact integer counts when every sequence in the cell agrees
        row["n_params"] = counts[0] if len(set(counts)) == 1 else float(np.mean(counts))
        out.append(row)
    return out


def ablate(bench, steps_list, strategies, modes, est=None, etas=None, out=None,
           workers=None, adapter_mode="direct"):
    """Cartesian product of sequences x strategies x modes, rows at every listed step.

    ``etas`` maps mode to learning rate.  Per-sequence rows come first
    (sorted by seq_id, strategy, mode, step), then one mean row per cell.
    The table is flushed to ``out`` even when a job fails.
    """
    if not (bench.sequences and steps_list and strategies and modes):
        raise ValueError("sequences, steps, strategies and modes must be non-empty")
    est = (est or EstimatorParams()).with_(flow_bias=bench.gamma)
    etas = etas or {}
    jobs = [(q, st, md, sorted(set(steps_list)), est, etas.get(md, 1.0), adapter_mode)
            for q in bench.sequences for st in strategies for md in modes]
    workers = workers or worker_count()
    rows = []
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                for res in pool.map(_run_job, jobs):
                    rows.extend(res)
        else:
            for job in jobs:
                rows.extend(_run_job(job))
    finally:
        rows.sort(key=lambda r: (r["seq_id"], strategies.index(r["strategy"]),
                                 modes.index(r["mode"]), r["step"]))
        table = rows + aggregate(rows)
        if out is not None:
            write_rows(table, out)
    return table


def write_rows(rows, path):
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=ROW_FIELDS, lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
    Path(path).write_text(buf.getvalue())


def read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["step"] = int(r["step"])
        for k in ("loss", "psnr", "ssim", "adapt_ms", "infer_ms"):
            r[k] = float(r[k])
        r["n_params"] = float(r["n_params"]) if "." in r["n_params"] else int(r["n_params"])
    return rows
