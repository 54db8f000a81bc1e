"""``lzeval`` command line: mono, stereo, bench, simulate, combine.

Exit codes: 0 evaluated safe, 1 evaluated unsafe, 2 error. Errors print a
single ``error: <kind>: <message>`` line on stderr.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import imageio
from .config import ConfigError, PipelineConfig, load_config
from .imu import read_imu_csv, write_imu_csv
from .pipeline import bench_csv, combine, run_bench, run_mono, run_stereo, write_stereo_outputs
from .simulator import (
    SceneKind,
    SceneSpec,
    camera_orientation,
    generate_imu,
    load_scene,
    render_mono_sequence,
    render_stereo,
    scene_to_text,
    static_trajectory,
)

EXIT_SAFE, EXIT_UNSAFE, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def write_flow_csv(path, flow) -> None:
    lines = ["x,y,dx,dy,valid"]
    for (x, y), (dx, dy), ok in zip(flow.points, flow.displacements, flow.valid):
        lines.append(f"{x:.6f},{y:.6f},{dx:.9f},{dy:.9f},{int(ok)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _verdict(safe: bool, label: str) -> int:
    print(f"{label}: {'safe' if safe else 'unsafe'}")
    return EXIT_SAFE if safe else EXIT_UNSAFE


def cmd_mono(args, cfg: PipelineConfig) -> int:
    paths = []
    for p in args.frames:
        p = Path(p)
        paths.extend(sorted(p.glob("*.pgm")) if p.is_dir() else [p])
    if len(paths) < 2:
        raise UsageError("mono needs at least 2 frames")
    frames = []
    for p in paths:
        try:
            frames.append(imageio.read_pgm(p))
        except (OSError, ValueError) as exc:
            raise ValueError(f"{p}: {exc}") from exc
        if frames[-1].shape != frames[0].shape:
            raise ValueError(f"{p}: frame size {frames[-1].shape} differs from {frames[0].shape}")
    result = run_mono(frames, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mono_log.csv").write_text(result.log_csv())
    return _verdict(result.safe, "mono")


def cmd_stereo(args, cfg: PipelineConfig) -> int:
    left = imageio.read_pgm(args.left)
    right = imageio.read_pgm(args.right)
    samples = read_imu_csv(args.imu) if args.imu else []
    result = run_stereo(left, right, samples, cfg)
    write_stereo_outputs(result, args.out)
    code = _verdict(result.safe, "stereo")
    print(f"reason: {result.decision.reason.value}")
    return code


def cmd_bench(args, cfg: PipelineConfig) -> int:
    rows = run_bench(args.dataset, cfg, tau=args.tau, inject_gt=args.inject_gt)
    text = bench_csv(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_SAFE


def cmd_simulate(args, cfg: PipelineConfig) -> int:
    spec = load_scene(args.scene) if args.scene else SceneSpec(kind=SceneKind(args.kind), camera=cfg.camera)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scene.txt").write_text(scene_to_text(spec))
    left, right, gt = render_stereo(spec)
    imageio.write_pgm(out / "left.pgm", left)
    imageio.write_pgm(out / "right.pgm", right)
    imageio.write_pfm(out / "gt.pfm", gt.disparity.d)
    traj = static_trajectory(camera_orientation(spec), args.imu_seconds, args.imu_rate)
    imu = generate_imu(traj, args.imu_rate, args.gyro_noise, args.accel_noise, seed=spec.seed)
    write_imu_csv(out / "imu.csv", imu)
    if args.frames:
        frames, truths = render_mono_sequence(spec, args.frames, args.descent, args.frame_dt, cfg.mono.stride, cfg.mono.margin)
        seq = out / "sequence"
        seq.mkdir(exist_ok=True)
        for i, f in enumerate(frames):
            imageio.write_pgm(seq / f"frame_{i:03d}.pgm", f)
        for i, t in enumerate(truths):
            write_flow_csv(seq / f"gt_flow_{i:03d}.csv", t.flow)
    print(f"simulated {spec.kind.value} -> {out} (safe_label={str(gt.safe_label).lower()})")
    return EXIT_SAFE


_VERDICTS = {"safe": True, "unsafe": False, "none": None}


def cmd_combine(args, cfg: PipelineConfig) -> int:
    v = combine(_VERDICTS[args.mono], _VERDICTS[args.stereo])
    print(f"overall: {'safe' if v.overall else 'unsafe'}")
    for r in v.reasons:
        print(f"reason: {r}")
    return EXIT_SAFE if v.overall else EXIT_UNSAFE


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat 'section.key = value' config file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="random seed (simulate)")

    p = _Parser(prog="lzeval", description="Landing-zone evaluation from monocular and stereo cues.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("mono", parents=[common], help="homography-error rigidity gate over a frame sequence")
    m.add_argument("frames", nargs="+", help="PGM frames in order, or a directory of them")
    m.set_defaults(func=cmd_mono)

    s = sub.add_parser("stereo", parents=[common], help="slope/roughness gate from a rectified pair")
    s.add_argument("--left", required=True)
    s.add_argument("--right", required=True)
    s.add_argument("--imu", help="IMU CSV (t_sec,gx,gy,gz,ax,ay,az)")
    s.set_defaults(func=cmd_stereo)

    b = sub.add_parser("bench", parents=[common], help="bad-pixel table over a scene directory")
    b.add_argument("dataset", help="directory of scene folders holding left.pgm, right.pgm, gt.pfm")
    b.add_argument("--tau", type=float, default=4.0)
    b.add_argument("--inject-gt", action="store_true", help="score the ground truth against itself")
    b.set_defaults(func=cmd_bench)

    sim = sub.add_parser("simulate", parents=[common], help="render a synthetic scene with ground truth")
    sim.add_argument("--scene", help="scene spec file")
    sim.add_argument("--kind", default="flat_plane", choices=[k.value for k in SceneKind])
    sim.add_argument("--frames", type=int, default=0, help="also render a descent sequence of N frames")
    sim.add_argument("--descent", type=float, default=0.5, help="descent rate, m/s")
    sim.add_argument("--frame-dt", type=float, default=0.1)
    sim.add_argument("--imu-rate", type=float, default=100.0)
    sim.add_argument("--imu-seconds", type=float, default=2.0)
    sim.add_argument("--gyro-noise", type=float, default=0.0)
    sim.add_argument("--accel-noise", type=float, default=0.0)
    sim.set_defaults(func=cmd_simulate)

    c = sub.add_parser("combine", parents=[common], help="conservative AND of the two gates")
    c.add_argument("--mono", choices=list(_VERDICTS), default="none")
    c.add_argument("--stereo", choices=list(_VERDICTS), default="none")
    c.set_defaults(func=cmd_combine)
    return p


def _fail(kind: str, exc) -> int:
    msg = " ".join(str(exc).split())
    print(f"error: {kind}: {msg}", file=sys.stderr)
    return EXIT_ERROR


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        return args.func(args, cfg)
    except UsageError as exc:
        return _fail("usage", exc)
    except ConfigError as exc:
        return _fail("config", exc)
    except OSError as exc:
        return _fail("io", f"{exc.filename or ''} {exc.strerror or exc}")
    except ValueError as exc:
        return _fail("input", exc)
    except RuntimeError as exc:
        return _fail("runtime", exc)


if __name__ == "__main__":
    sys.exit(main())
