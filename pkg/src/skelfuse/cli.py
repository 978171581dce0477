"""Command-line front end: generate, refine, evaluate, inspect-config.

Exit codes: 0 success, 1 input error, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import yaml

from .bones import BoneModel
from .config import PipelineConfig, load_config, resolved_config_dict
from .errors import ConfigError, ScriptError, SkelfuseError, StreamFormatError
from .evaluation import comparison_table, evaluate_sequences, match_by_timestamp
from .pipeline import StreamRefiner, write_bone_trajectory, write_refined_stream
from .pipeline import read_refined_positions
from .streams import read_stream_file, write_stream_file
from .synth import generate

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _cmd_generate(cfg: PipelineConfig, args) -> int:
    if cfg.motion is None:
        raise ConfigError("generate requires a 'motion' block in the config")
    seed = args.seed if args.seed is not None else cfg.seed
    seq = generate(cfg.motion, cfg.camera, seed=seed, topology=cfg.topology)
    write_stream_file(seq.noisy_frames, args.output)
    truth_path = args.truth_output or args.output + ".truth.jsonl"
    write_stream_file(seq.truth_frames, truth_path)
    meta = {"seed": seed, "kind": cfg.motion.kind, "frames": len(seq.noisy_frames),
            "frame_rate_hz": cfg.motion.frame_rate_hz,
            "truth_stream": truth_path}
    with open(args.output + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    print(f"wrote {len(seq.noisy_frames)} frames to {args.output} "
          f"(truth: {truth_path}, seed {seed})")
    return EXIT_OK


def _cmd_refine(cfg: PipelineConfig, args) -> int:
    frames = read_stream_file(args.input, n_joints=cfg.topology.n_joints)
    bone_model = None
    session = args.session or cfg.session_path
    if cfg.ratio_mode == "reuse" and session:
        try:
            bone_model = BoneModel.load(session)
        except FileNotFoundError:
            bone_model = None  # first video of the subject

    refiner = StreamRefiner(cfg.camera, topology=cfg.topology, config=cfg.refiner,
                            bone_model=bone_model, torso_model=cfg.torso_model,
                            initial_ratios=cfg.initial_ratios)
    refined = refiner.run(frames)

    with open(args.output, "w", encoding="utf-8") as fh:
        write_refined_stream(refined, fh)
    with open(args.output + ".bones.jsonl", "w", encoding="utf-8") as fh:
        write_bone_trajectory(refined, fh)
    if cfg.ratio_mode == "reuse" and session:
        refiner.bone_model.save(session)
    n_flagged = sum(1 for r in refined if r.flags)
    print(f"refined {len(refined)} frames -> {args.output} "
          f"({n_flagged} flagged)")
    return EXIT_OK


def _cmd_evaluate(cfg: PipelineConfig, args) -> int:
    topo = cfg.topology
    truth_frames = read_stream_file(args.truth, n_joints=topo.n_joints)
    truth_by_t = {f.timestamp: f for f in truth_frames}
    ts, est = read_refined_positions(args.input)
    if est.size == 0:
        raise StreamFormatError("refined stream is empty")

    matched_est, matched_tru = [], []
    for i, t in enumerate(ts):
        key = min(truth_by_t, key=lambda k: abs(k - t), default=None)
        if key is not None and abs(key - t) < 1e-6:
            matched_est.append(est[i])
            matched_tru.append(truth_by_t[key].world)
    if not matched_est:
        raise StreamFormatError("no overlapping timestamps between streams")

    est_seq = np.stack(matched_est)
    tru_seq = np.stack(matched_tru)
    rows = {"Refined": evaluate_sequences(est_seq, tru_seq, topo)}

    if args.raw:
        raw_frames = read_stream_file(args.raw, n_joints=topo.n_joints)
        raw_est, raw_tru = match_by_timestamp(raw_frames, truth_frames)
        if raw_est:
            rows["Raw"] = evaluate_sequences(
                np.stack([f.world for f in raw_est]),
                np.stack([f.world for f in raw_tru]), topo)

    report = {name: m.as_dict() for name, m in rows.items()}
    table = comparison_table(rows)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        print(f"report written to {args.output}")
    print(table)
    return EXIT_OK


def _cmd_inspect_config(cfg: PipelineConfig, args) -> int:
    print(yaml.safe_dump(resolved_config_dict(cfg), sort_keys=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skelfuse",
        description="Refine monocular pose-estimator landmark streams into "
                    "anatomically consistent 3D skeletons.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=False, needs_output=False):
        p.add_argument("--config", default=None, help="YAML config file")
        if needs_input:
            p.add_argument("--input", required=True, help="input stream file")
        if needs_output:
            p.add_argument("--output", required=True, help="output file")
        p.add_argument("--session", default=None, help="bone-model session file")
        p.add_argument("--seed", type=int, default=None, help="RNG seed override")

    g = sub.add_parser("generate", help="generate a synthetic landmark stream")
    common(g, needs_output=True)
    g.add_argument("--truth-output", default=None,
                   help="ground-truth stream path (default: <output>.truth.jsonl)")

    r = sub.add_parser("refine", help="refine a landmark stream")
    common(r, needs_input=True, needs_output=True)

    e = sub.add_parser("evaluate", help="score a refined stream against truth")
    common(e, needs_input=True)
    e.add_argument("--truth", required=True, help="ground-truth stream file")
    e.add_argument("--raw", default=None, help="raw input stream for comparison")
    e.add_argument("--output", default=None, help="JSON report path")

    i = sub.add_parser("inspect-config", help="print the resolved configuration")
    common(i)
    return parser


COMMANDS = {
    "generate": _cmd_generate,
    "refine": _cmd_refine,
    "evaluate": _cmd_evaluate,
    "inspect-config": _cmd_inspect_config,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StreamFormatError, ScriptError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SkelfuseError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
