"""Command-line interface: track | eval | gen | recon.

Every run writes its outputs plus a report echoing the thresholds actually
used, so results are reproducible from the artifacts alone. Exit code 0
means no errors; recoverable conditions are reported as warnings.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io as cio
from . import multicam, synth
from .config import PipelineConfig, config_lines, load_config
from .metrics import evaluate
from .pipeline import track


def _load_pipeline_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    for name in ("seed", "threads", "pad", "ghost_min"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    if getattr(args, "gate", None) is not None:
        config.mot_gate = args.gate
    config.validate()
    return config


def _write_lines(path: Path, lines) -> None:
    path.write_text("\n".join(lines) + "\n")


def cmd_track(args) -> int:
    config = _load_pipeline_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clouds = cio.load_clouds(args.clouds)
    result = track(clouds, config)
    cio.save_trajectories(result.trajectories, out / "trajectories.csv")
    _write_lines(out / "report.txt", result.report.lines(config))
    if args.dump:
        cio.dump_clusters(result.clusters_by_frame, out / "clusters.csv")
        cio.dump_graph(result.graph, out / "graph.csv")
        from .components import classify, connected_components

        comps = connected_components(result.graph)
        classes = [classify(c, result.graph, config.ghost_min) for c in comps]
        cio.dump_components(comps, classes, result.graph, out / "components.csv")
    for warning in result.report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"tracked {result.report.n_trajectories} trajectories -> {out / 'trajectories.csv'}")
    return 0


def cmd_eval(args) -> int:
    config = _load_pipeline_config(args)
    gt = cio.load_trajectories(args.ground_truth)
    hyp = cio.load_trajectories(args.hypothesis)
    report = evaluate(gt, hyp, config.mot_gate)
    for line in report.lines():
        print(line)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_lines(out / "eval.txt", report.lines())
        if args.per_frame:
            lines = ["# frame,matches,misses,false_positives,switches"]
            lines += [",".join(str(v) for v in row) for row in report.per_frame]
            _write_lines(out / "eval_frames.csv", lines)
    return 0


def cmd_gen(args) -> int:
    scene_config = synth.parse_scene_config(args.scene)
    if args.seed is not None:
        scene_config.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = synth.generate(scene_config)
    cio.save_clouds(scene.clouds, out / "clouds.csv")
    cio.save_trajectories(synth.truth_trajectories(scene), out / "ground_truth.csv")
    label_lines = ["# frame,point_index,label"]
    for cloud, labels in zip(scene.clouds, scene.labels):
        label_lines += [f"{cloud.frame},{i},{lab}" for i, lab in enumerate(labels)]
    _write_lines(out / "labels.csv", label_lines)
    if args.render:
        cams = multicam.load_calibration(args.calib)
        rendered = synth.render(scene, cams, noise_px=args.noise)
        for ci, frames in enumerate(rendered.images):
            cam_dir = out / f"cam{ci}"
            cam_dir.mkdir(exist_ok=True)
            for fi, image in enumerate(frames):
                multicam.write_pgm(image, cam_dir / f"frame_{fi:06d}.pgm")
        for warning in rendered.warnings:
            print(f"warning: {warning}", file=sys.stderr)
    print(f"generated scene with {scene_config.n_targets} targets -> {out}")
    return 0


def cmd_recon(args) -> int:
    config = _load_pipeline_config(args)
    if args.tau is not None:
        config.seg_tau = args.tau
    if args.window is not None:
        config.seg_window = args.window
    if args.max_error is not None:
        config.match_max_error = args.max_error
    config.validate()
    cams = multicam.load_calibration(args.calib)
    if len(cams) != 3:
        raise ValueError("reconstruction needs exactly 3 calibrated cameras")
    sequences = []
    for directory in args.images:
        files = sorted(Path(directory).glob("frame_*.pgm"))
        if not files:
            raise ValueError(f"no frame_*.pgm files in {directory}")
        sequences.append([multicam.read_pgm(f) for f in files])
    clouds, stats = multicam.reconstruct_sequence(
        sequences, cams, config.seg_tau, config.seg_window, config.match_max_error
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cio.save_clouds(clouds, out / "clouds.csv")
    lines = ["# frame,active1,active2,active3,triplets,truncated"]
    for s in stats:
        lines.append(
            f"{s.frame},{s.active[0]},{s.active[1]},{s.active[2]},{s.triplets},{int(s.truncated)}"
        )
    _write_lines(out / "recon_stats.csv", lines)
    print(f"reconstructed {len(clouds)} frames -> {out / 'clouds.csv'}")
    return 0


def cmd_config(args) -> int:
    for line in config_lines(PipelineConfig()):
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cloudtrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track a cloud CSV into trajectories")
    p.add_argument("clouds", help="FrameCloud CSV (frame,x,y,z)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="pipeline config file (key = value)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--pad", type=int)
    p.add_argument("--ghost-min", dest="ghost_min", type=int)
    p.add_argument("--dump", action="store_true", help="write debug CSVs")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="CLEAR-MOT evaluation of two trajectory CSVs")
    p.add_argument("ground_truth")
    p.add_argument("hypothesis")
    p.add_argument("--gate", type=float, help="hit/miss distance in meters")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--out", help="also write the report under this directory")
    p.add_argument("--per-frame", action="store_true", help="write per-frame tallies")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="generate a synthetic scene")
    p.add_argument("scene", help="scene config file (key = value)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--render", action="store_true", help="render PGM frames")
    p.add_argument("--calib", help="calibration file (needed with --render)")
    p.add_argument("--noise", type=float, default=0.0, help="pixel jitter for rendering")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("recon", help="reconstruct clouds from 3 PGM sequences")
    p.add_argument("images", nargs=3, help="3 directories of frame_%%06d.pgm")
    p.add_argument("--calib", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--tau", type=float, help="segmentation threshold (0..1)")
    p.add_argument("--window", type=int, help="background window length (odd)")
    p.add_argument("--max-error", dest="max_error", type=float, help="reprojection gate, px")
    p.set_defaults(func=cmd_recon)

    p = sub.add_parser("config", help="print the default configuration")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
