"""Command-line entry point: convert, eval, gradcheck, train-toy, overlay.

Every randomized subcommand requires an explicit --seed; everything else is
deterministic, so reruns on unchanged inputs are byte-identical.  Exit code
is 0 iff no per-item failures occurred.  The env var LIDDENSE_THREADS caps
file-level parallelism in convert.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import checks
from .autodiff.tensor import inject_backward_fault
from .depth_io import (
    decode_depth_png,
    decode_rgb_png,
    encode_rgb_png,
    overlay,
    palette_names,
)
from .errors import LidDenseError
from .metrics import accumulate_pair, report_from_sums
from .scanline import DEFAULT_INTERVAL, DEFAULT_THETA_TOP, MIDDLE_LINE, convert_dataset
from .training import TrainConfig, train_toy


def _parse_mode(raw: str) -> tuple[str, list[int] | None]:
    if raw == "single":
        return "single", None
    if raw == "16":
        return "sixteen", None
    if raw.startswith("lines="):
        try:
            lines = [int(v) for v in raw[len("lines=") :].split(",") if v != ""]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad line list in {raw!r}: {exc}")
        return "explicit", lines
    raise argparse.ArgumentTypeError(
        f"mode must be 'single', '16', or 'lines=a,b,c', got {raw!r}"
    )


def _parse_theta_top(raw: str):
    if raw == "auto":
        return "auto"
    try:
        return float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"theta-top must be a number or 'auto', got {raw!r}")


def cmd_convert(args) -> int:
    mode, explicit = args.mode
    try:
        summary = convert_dataset(
            args.in_dir,
            args.calib,
            args.out_dir,
            mode,
            explicit=explicit,
            theta_top=args.theta_top,
            interval=args.interval,
            middle_index=args.middle_index,
        )
    except LidDenseError as exc:
        print(f"convert: {exc}", file=sys.stderr)
        return 1
    if args.report:
        Path(args.report).write_text(summary.to_json() + "\n")
    print(
        f"converted {summary.n_files - summary.n_failed}/{summary.n_files} files; "
        f"mean sparsity {summary.mean_sparsity_before:.6f} -> "
        f"{summary.mean_sparsity_after:.6f}"
    )
    for name, err in summary.failures:
        print(f"convert: {name}: {err}", file=sys.stderr)
    return 0 if summary.ok else 1


def _depth_pairs(pred: Path, gt: Path):
    """Yield (label, pred_path, gt_path) for file or directory arguments."""
    for p, flag in ((pred, "--pred"), (gt, "--gt")):
        if not p.exists():
            raise LidDenseError(f"{flag} path {p} does not exist")
    if pred.is_dir() != gt.is_dir():
        raise LidDenseError("--pred and --gt must both be files or both directories")
    if not pred.is_dir():
        yield pred.name, pred, gt
        return
    pred_files = {p.name: p for p in pred.iterdir() if p.suffix.lower() == ".png"}
    gt_files = {p.name: p for p in gt.iterdir() if p.suffix.lower() == ".png"}
    for name in sorted(set(pred_files) | set(gt_files)):
        if name not in pred_files:
            raise LidDenseError(f"{name}: missing prediction")
        if name not in gt_files:
            raise LidDenseError(f"{name}: missing ground truth")
        yield name, pred_files[name], gt_files[name]


def cmd_eval(args) -> int:
    pred, gt = Path(args.pred), Path(args.gt)
    sums = None
    failures = 0
    try:
        pairs = list(_depth_pairs(pred, gt))
    except LidDenseError as exc:
        print(f"eval: {exc}", file=sys.stderr)
        return 1
    for name, ppath, gpath in pairs:
        try:
            pmap = decode_depth_png(ppath.read_bytes())
            gmap = decode_depth_png(gpath.read_bytes())
            sums = accumulate_pair(pmap, gmap, sums)
        except LidDenseError as exc:
            failures += 1
            print(f"eval: {name}: {exc}", file=sys.stderr)
    if sums is None:
        print("eval: no pairs evaluated", file=sys.stderr)
        return 1
    report = report_from_sums(sums)
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    return 0 if failures == 0 else 1


def cmd_gradcheck(args) -> int:
    names = args.op or None
    try:
        if args.inject_fault:
            with inject_backward_fault(args.inject_fault):
                reports = checks.run_checks(names, seed=args.seed, h=args.h)
        else:
            reports = checks.run_checks(names, seed=args.seed, h=args.h)
    except KeyError as exc:
        print(f"gradcheck: {exc}", file=sys.stderr)
        return 2
    failed = 0
    for name, report in reports.items():
        ok = report.passed(args.tol)
        failed += 0 if ok else 1
        print(
            f"gradcheck {name}: max_rel_err={report.max_rel_error:.3e} "
            f"{'PASS' if ok else 'FAIL'}"
        )
    return 0 if failed == 0 else 1


def cmd_train_toy(args) -> int:
    cfg = TrainConfig(
        steps=args.steps,
        seed=args.seed,
        lr=args.lr,
        weight_decay=args.wd,
        gc_enabled=not args.no_gc,
        lam=getattr(args, "lambda"),
        vnl_groups=args.vnl_groups,
        scene_height=args.height,
        scene_width=args.width,
        eval_every=args.eval_every,
        out_dir=args.out,
    )
    try:
        result = train_toy(cfg)
    except LidDenseError as exc:
        print(f"train-toy: {exc}", file=sys.stderr)
        return 1
    evals = result.eval_records()
    first, last = evals[0], evals[-1]
    print(
        f"trained {cfg.steps} steps; held-out RMSE {first['rmse']:.2f} -> "
        f"{last['rmse']:.2f} mm; log: {result.log_path}; "
        f"checkpoint: {result.checkpoint_path}"
    )
    return 0


def cmd_overlay(args) -> int:
    try:
        rgb = decode_rgb_png(Path(args.rgb).read_bytes())
        depth = decode_depth_png(Path(args.depth).read_bytes())
        fused = overlay(rgb, depth, colormap=args.palette)
    except LidDenseError as exc:
        print(f"overlay: {exc}", file=sys.stderr)
        return 1
    Path(args.out).write_bytes(encode_rgb_png(fused))
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liddense",
        description="Sparse-to-dense depth completion toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="decimate 64-line depth maps to N lines")
    p.add_argument("--mode", type=_parse_mode, required=True,
                   help="single | 16 | lines=a,b,c")
    p.add_argument("--theta-top", type=_parse_theta_top, default=DEFAULT_THETA_TOP,
                   help="top line angle in degrees, or 'auto' (per-frame max)")
    p.add_argument("--interval", type=float, default=DEFAULT_INTERVAL,
                   help="line spacing in degrees")
    p.add_argument("--middle-index", type=int, default=MIDDLE_LINE,
                   help="which of the two middle lines 'single' selects")
    p.add_argument("--calib", required=True, help="text file: fx fy cx cy")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--report", help="write a JSON conversion summary here")
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("eval", help="six-metric evaluation of prediction vs gt")
    p.add_argument("--pred", required=True, help="depth PNG file or directory")
    p.add_argument("--gt", required=True, help="depth PNG file or directory")
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--op", action="append", choices=sorted(checks.CHECKS),
                   help="restrict to named checks (repeatable)")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--inject-fault", metavar="OP",
                   help="corrupt the named op's backward rule; the run should FAIL")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("train-toy", help="desk-scale training on synthetic scenes")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--wd", type=float, default=1e-4)
    p.add_argument("--no-gc", action="store_true",
                   help="disable gradient centralization")
    p.add_argument("--lambda", type=float, default=100.0,
                   help="virtual-normal loss weight")
    p.add_argument("--vnl-groups", type=int, default=100)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--eval-every", type=int, default=50)
    p.add_argument("--out", required=True, help="directory for log + checkpoint")
    p.set_defaults(fn=cmd_train_toy)

    p = sub.add_parser("overlay", help="colormap a depth map onto an RGB image")
    p.add_argument("--rgb", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--palette", default="warmcool", choices=palette_names())
    p.set_defaults(fn=cmd_overlay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
