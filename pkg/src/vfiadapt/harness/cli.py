"""Command-line entry point: ``vfiadapt {synth,interpolate,adapt,eval,ablate}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..adaptation import HELD_OUT, AdaptationConfig, adapt, e2e_adapt
from ..adapter import AdapterParams, init_identity
from ..config import load_config
from ..flow_estimator import EstimatorParams
from ..imaging import save_frame, write_flo
from ..synthesizer import interpolate
from .bench import BenchSpec, ablate, evaluate_septuplet, write_rows
from .scenes import KINDS, TEXTURES, ScenePattern, synth_sequence
from .seqio import read_sequence, write_sequence


def _csv_list(text, cast=str):
    return [cast(t) for t in text.split(",") if t.strip()]


def _res(text):
    try:
        w, h = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")
    return w, h


def _velocity(text):
    vals = _csv_list(text, float)
    if len(vals) not in (1, 2):
        raise argparse.ArgumentTypeError("velocity is 'V' or 'VX,VY'")
    return tuple(vals) if len(vals) == 2 else (vals[0], 0.0)


def _estimator(cfg):
    return EstimatorParams.from_mapping(cfg)


def _eta(args, cfg, mode):
    return args.eta if args.eta is not None else float(cfg[f"eta_{mode}"])


def cmd_synth(args, cfg):
    pattern = ScenePattern(args.pattern, args.velocity, args.texture, args.rate)
    s, oracle = synth_sequence(pattern, args.res, args.seed, Path(args.out).name)
    write_sequence(args.out, s, oracle)
    print(f"wrote {args.out}")


def cmd_interpolate(args, cfg):
    s = read_sequence(args.seq)
    h, w = s.shape[:2]
    adapter = AdapterParams.load(args.adapter) if args.adapter else init_identity(h, w)
    frame, tape = interpolate(s.frame(HELD_OUT - 1), s.frame(HELD_OUT + 1),
                              _estimator(cfg), adapter)
    save_frame(frame, args.out)
    if args.dump_flow:
        d = Path(args.dump_flow)
        d.mkdir(parents=True, exist_ok=True)
        write_flo(tape.modulated[0], d / "flow_t0.flo")
        write_flo(tape.modulated[1], d / "flow_t1.flo")
    print(f"wrote {args.out}")


def cmd_adapt(args, cfg):
    s = read_sequence(args.seq)
    est = _estimator(cfg)
    strategy = args.strategy or cfg["strategy"]
    mode = args.mode or cfg["mode"]
    steps = args.steps if args.steps is not None else int(cfg["steps"])
    run = AdaptationConfig(strategy, mode, steps, _eta(args, cfg, mode),
                           int(cfg["eval_every"]), cfg["adapter_mode"])
    if mode == "plugin":
        h, w = s.shape[:2]
        adapter = init_identity(h, w, run.adapter_mode)
        report = adapt(s, est, adapter, run)
        if args.save_adapter:
            adapter.save(args.save_adapter)
    else:
        if args.save_adapter:
            raise SystemExit("--save-adapter applies to plugin mode only")
        est, report = e2e_adapt(s, est, run)
        print(est.to_text(), end="")
    Path(args.report).write_text(report.to_csv())
    for flag in report.flags:
        print(f"note: {flag}", file=sys.stderr)
    print(f"loss {report.losses[0]:.6g} -> {report.losses[-1]:.6g}")
    return 1 if report.aborted else 0


def cmd_eval(args, cfg):
    s = read_sequence(args.seq)
    run = AdaptationConfig(cfg["strategy"], cfg["mode"], 0, 0.0, 1, cfg["adapter_mode"])
    rows = evaluate_septuplet(s, _estimator(cfg), run, [0])
    write_rows(rows, args.report)
    print(f"psnr {rows[0]['psnr']:.4f} ssim {rows[0]['ssim']:.6f}")


def cmd_ablate(args, cfg):
    bench = BenchSpec.load(args.bench)
    modes = _csv_list(args.modes)
    etas = {m: _eta(args, cfg, m) for m in modes}
    table = ablate(bench, _csv_list(args.steps, int), _csv_list(args.strategies), modes,
                   est=_estimator(cfg), etas=etas, out=args.out, workers=args.workers,
                   adapter_mode=cfg["adapter_mode"])
    print(f"wrote {len(table)} rows to {args.out}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file overriding the packaged defaults")

    ap = argparse.ArgumentParser(prog="vfiadapt", parents=[common],
                                 description="Cycle-consistency test-time adaptation "
                                             "for midpoint frame interpolation.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic septuplet")
    p.add_argument("--pattern", choices=KINDS, required=True)
    p.add_argument("--velocity", type=_velocity, default=(1.0, 0.0),
                   help="px/frame, 'V' or 'VX,VY'")
    p.add_argument("--texture", choices=TEXTURES, default="value_noise")
    p.add_argument("--rate", type=float, default=None, help="rad/frame for rotate")
    p.add_argument("--res", type=_res, default=(128, 128))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("interpolate", parents=[common],
                       help="synthesize the held-out midpoint of a sequence")
    p.add_argument("--seq", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--adapter")
    p.add_argument("--dump-flow", help="directory for the adapted intermediate flows")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("adapt", parents=[common], help="adapt on one sequence")
    p.add_argument("--seq", required=True)
    p.add_argument("--strategy", choices=("cycle", "naive"))
    p.add_argument("--mode", choices=("plugin", "e2e"))
    p.add_argument("--steps", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--report", required=True)
    p.add_argument("--save-adapter")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", parents=[common], help="frozen-baseline metrics")
    p.add_argument("--seq", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="run the strategy/mode ablation")
    p.add_argument("--bench", required=True)
    p.add_argument("--steps", default="0,5,10,20,30")
    p.add_argument("--strategies", default="cycle,naive")
    p.add_argument("--modes", default="plugin,e2e")
    p.add_argument("--eta", type=float, help="override the per-mode configured rate")
    p.add_argument("--workers", type=int, help="defaults to CPU count, capped by VFI_THREADS")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg) or 0
    except (OSError, ValueError) as exc:
        print(f"vfiadapt: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
