"""On-disk septuplet layout.

One directory per sequence holding ``frame_0001.png`` ... ``frame_0007.png``.
Synthetic sequences also carry ``gt_mid.png`` and ``flow_XtoY.flo`` files,
where X and Y use the same 1-based numbering as the frame files.
"""

from __future__ import annotations

import re
from pathlib import Path

from ..adaptation import Septuplet
from ..imaging import load_frame, read_flo, save_frame, write_flo

FRAME_NAME = "frame_{:04d}.png"
GT_NAME = "gt_mid.png"
FLOW_NAME = "flow_{}to{}.flo"
# 0-based index pairs whose oracle flow is written: the adjacent input
# pairs and the wide pairs, in both directions
ORACLE_PAIRS = ((0, 2), (2, 4), (4, 6), (0, 4), (2, 6))
_FLOW_RE = re.compile(r"flow_(\d+)to(\d+)\.flo$")


def write_sequence(directory, s, oracle=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(7):
        save_frame(s.frame(i), d / FRAME_NAME.format(i + 1))
    if oracle is not None:
        save_frame(oracle.midpoint, d / GT_NAME)
        for a, b in ORACLE_PAIRS:
            write_flo(oracle.flow(a, b), d / FLOW_NAME.format(a + 1, b + 1))
            write_flo(oracle.flow(b, a), d / FLOW_NAME.format(b + 1, a + 1))
    return d


def read_sequence(directory):
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"sequence directory not found: {d}")
    frames = []
    for i in range(1, 8):
        p = d / FRAME_NAME.format(i)
        if not p.exists():
            raise FileNotFoundError(f"missing frame file {p}")
        frames.append(load_frame(p))
    return Septuplet(frames, seq_id=d.name)


def read_oracle_flows(directory):
    """Oracle flows found in ``directory`` keyed by 0-based (i, j)."""
    out = {}
    for p in sorted(Path(directory).glob("flow_*to*.flo")):
        m = _FLOW_RE.search(p.name)
        if m:
            out[(int(m.group(1)) - 1, int(m.group(2)) - 1)] = read_flo(p)
    return out
