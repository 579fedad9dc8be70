"""Command line interface.

Subcommands wire the pipeline end to end: ``synth-data`` emits WAV/pose
files plus a manifest, ``train`` runs the adversarial loop and reports
validation PCK, ``generate`` turns a WAV into pose files (and optionally
BVH), ``evaluate`` scores a checkpoint on a manifest split, and
``gradcheck`` runs the finite-difference suite.

Exit codes: 0 success, 1 computation failure, 2 usage or input error.
All randomness flows from ``--seed``. Heavy imports happen inside the
handlers so ``--threads`` can cap the BLAS pools first.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

TOLERANCE = 1e-5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gesturesynth",
        description="Speech-to-gesture synthesis: train, generate, evaluate, export.",
    )
    parser.add_argument("--threads", type=int, default=None, help="cap worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth-data", help="emit a synthetic oracle dataset")
    synth.add_argument("--kind", choices=["unimodal", "multimodal"], required=True)
    synth.add_argument("--n", type=int, required=True, help="number of 4 s clips")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--val-fraction", type=float, default=0.2)
    synth.add_argument("--topology", default=None, help="topology JSON (default built-in)")
    synth.set_defaults(func=cmd_synth_data)

    train = sub.add_parser("train", help="train on a manifest's train split")
    train.add_argument("--manifest", required=True)
    train.add_argument("--out", required=True, help="checkpoint/history directory")
    train.add_argument("--config", default=None, help="training config JSON")
    train.add_argument("--net-config", default=None, help="network config JSON")
    train.add_argument("--topology", default=None)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--epochs", type=int, default=None)
    train.add_argument("--batch-size", type=int, default=None)
    train.add_argument("--lr-g", type=float, default=None)
    train.add_argument("--lr-d", type=float, default=None)
    train.add_argument("--lambda-bone", type=float, default=None)
    train.add_argument("--adversarial-weight", type=float, default=None)
    train.add_argument("--d-steps", type=int, default=None)
    train.add_argument("--saturating", action="store_true", default=None,
                       help="use the saturating generator objective")
    train.set_defaults(func=cmd_train)

    generate = sub.add_parser("generate", help="generate gestures for a WAV file")
    generate.add_argument("--checkpoint", required=True)
    generate.add_argument("--wav", required=True)
    generate.add_argument("--out", required=True, help="output pose file")
    generate.add_argument("--bvh", default=None, help="also export BVH to this path")
    generate.add_argument("--topology", default=None)
    generate.add_argument("--smoothing-window", type=int, default=5)
    generate.set_defaults(func=cmd_generate)

    evaluate = sub.add_parser("evaluate", help="score a checkpoint on a manifest split")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--manifest", required=True)
    evaluate.add_argument("--alpha", type=float, default=0.2)
    evaluate.add_argument("--split", default="val")
    evaluate.add_argument("--topology", default=None)
    evaluate.add_argument("--out", default=None, help="write the report JSON here too")
    evaluate.add_argument("--per-sequence-csv", default=None)
    evaluate.add_argument("--ground-truth", action="store_true",
                          help="score targets against themselves (wiring check)")
    evaluate.set_defaults(func=cmd_evaluate)

    gradcheck = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.set_defaults(func=cmd_gradcheck)
    return parser


def _load_topology(path_or_none):
    from .skeleton import default_topology, load_topology

    if path_or_none is None:
        return default_topology()
    return load_topology(_existing(path_or_none, "topology"))


def _existing(path, label) -> Path:
    from .errors import InvalidInputError

    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"{label} not found: {path}")
    return path


def cmd_synth_data(args) -> int:
    from .audio import save_wav
    from .data import (
        DatasetManifest,
        ManifestEntry,
        save_manifest,
        split,
        synth_multimodal_pairs,
        synth_unimodal_pairs,
        write_pose_file,
    )
    from .skeleton import save_topology

    topo = _load_topology(args.topology)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    make_pairs = synth_unimodal_pairs if args.kind == "unimodal" else synth_multimodal_pairs
    pairs = make_pairs(args.n, args.seed, topo)
    entries = []
    for i, (clip, sample) in enumerate(pairs):
        wav_name = f"clip_{i:04d}.wav"
        pose_name = f"clip_{i:04d}.pose"
        save_wav(clip, out / wav_name)
        write_pose_file(sample.gesture, topo.name, out / pose_name)
        entries.append(
            ManifestEntry(wav_name, pose_name, 0.0, 4.0, sample.speaker_id)
        )
    manifest = split(DatasetManifest(tuple(entries)), args.val_fraction, args.seed)
    save_manifest(manifest, out / "manifest.json")
    save_topology(topo, out / "topology.json")
    print(f"wrote {len(pairs)} clips ({args.kind}) and manifest to {out}")
    return 0


def _train_config_from(args):
    from .training import TrainConfig

    base = {}
    if args.config is not None:
        base = json.loads(_existing(args.config, "config").read_text())
    overrides = {
        "seed": args.seed,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr_g": args.lr_g,
        "lr_d": args.lr_d,
        "lambda_bone": args.lambda_bone,
        "adversarial_weight": args.adversarial_weight,
        "d_steps_per_g_step": args.d_steps,
        "saturating": args.saturating,
    }
    for key, value in overrides.items():
        if value is not None:
            base[key] = value
    return TrainConfig.from_dict(base)


def _net_configs_from(args, topo):
    from .networks import DiscriminatorConfig, GeneratorConfig

    out_dims = topo.n_joints * 3
    gen_kwargs: dict = {}
    disc_kwargs: dict = {}
    if args.net_config is not None:
        loaded = json.loads(_existing(args.net_config, "net config").read_text())
        gen_kwargs = dict(loaded.get("generator", {}))
        disc_kwargs = dict(loaded.get("discriminator", {}))
    gen_kwargs.setdefault("out_dims", out_dims)
    disc_kwargs.setdefault("in_dims", out_dims)
    return GeneratorConfig.from_dict(gen_kwargs), DiscriminatorConfig.from_dict(disc_kwargs)


def cmd_train(args) -> int:
    from .data import load_manifest, load_split_samples, samples_to_arrays
    from .evaluation import evaluate
    from .training import train_arrays

    manifest_path = _existing(args.manifest, "manifest")
    topo = _load_topology(args.topology)
    config = _train_config_from(args)
    gen_config, disc_config = _net_configs_from(args, topo)
    manifest = load_manifest(manifest_path)
    root = manifest_path.parent
    train_samples = load_split_samples(manifest, "train", topo, root=root)
    mels, poses = samples_to_arrays(train_samples)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state = train_arrays(
        mels,
        poses,
        topo,
        gen_config,
        disc_config,
        config,
        checkpoint_dir=out,
        history_path=out / "history.csv",
    )
    print(f"trained {config.epochs} epoch(s), {state.total_steps} optimizer steps")
    val_samples = load_split_samples(manifest, "val", topo, root=root)
    if val_samples:
        report = evaluate(state.params, val_samples, alpha=0.2)
        print(f"val PCK@0.2: {report.pck:.4f}")
    else:
        print("val PCK@0.2: n/a (empty val split)")
    return 0


def cmd_generate(args) -> int:
    from .animation import animation_pipeline
    from .audio import SEGMENT_SECONDS, load_wav, network_mel, segment_clips
    from .bvh import export_bvh
    from .checkpoint import load_checkpoint
    from .data import POSE_FPS, write_pose_file
    from .errors import CompatibilityError, InvalidInputError
    from .networks import generator_forward
    from .skeleton import PoseSequence
    import numpy as np

    params = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    topo = _load_topology(args.topology)
    if params.gen_config.out_dims != topo.n_joints * 3:
        raise CompatibilityError(
            f"checkpoint emits {params.gen_config.out_dims} dims, topology "
            f"{topo.name!r} needs {topo.n_joints * 3}"
        )
    clip = load_wav(_existing(args.wav, "wav"))
    if clip.duration < SEGMENT_SECONDS:
        raise InvalidInputError(
            f"audio is {clip.duration:.2f} s; need at least {SEGMENT_SECONDS} s"
        )
    segments = segment_clips(clip)
    chunks = []
    for segment in segments:
        mel = network_mel(segment, mel_bins=params.gen_config.mel_bins)
        flat = generator_forward(params, mel.values)
        chunks.append(flat.reshape(flat.shape[0], topo.n_joints, 3))
    seq = PoseSequence(np.concatenate(chunks, axis=0), fps=POSE_FPS)
    write_pose_file(seq, topo.name, args.out)
    print(f"wrote {seq.n_frames} frames ({len(segments)} segment(s)) to {args.out}")
    if args.bvh is not None:
        rotations = animation_pipeline(seq, topo, smoothing_window=args.smoothing_window)
        export_bvh(rotations, topo, args.bvh)
        print(f"wrote BVH to {args.bvh}")
    return 0


def cmd_evaluate(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import load_manifest, load_split_samples
    from .evaluation import evaluate, save_report, write_per_sequence_csv
    from .skeleton import PoseSequence

    params = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    manifest_path = _existing(args.manifest, "manifest")
    topo = _load_topology(args.topology)
    manifest = load_manifest(manifest_path)
    samples = load_split_samples(manifest, args.split, topo, root=manifest_path.parent)
    report = evaluate(params, samples, alpha=args.alpha, use_ground_truth=args.ground_truth)
    print(report.to_json())
    if args.out is not None:
        save_report(report, args.out)
    if args.per_sequence_csv is not None:
        from .evaluation import predict_sample

        pairs = []
        for sample in samples:
            pred = (
                sample.gesture
                if args.ground_truth
                else predict_sample(params, sample.speech.values, sample.gesture.fps)
            )
            pairs.append((pred, sample.gesture))
        write_per_sequence_csv(pairs, args.alpha, args.per_sequence_csv)
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import GradCheckResult, check_case, run_op_checks
    from .training import full_objective_case

    results = run_op_checks(seed=args.seed, tolerance=TOLERANCE)
    composite = GradCheckResult(
        "full_objective",
        check_case(full_objective_case(seed=args.seed), seed=args.seed),
        TOLERANCE,
    )
    results.append(composite)
    width = max(len(r.name) for r in results)
    print(f"{'op'.ljust(width)}  max_rel_err  status")
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name.ljust(width)}  {r.max_rel_error:.3e}    {status}")
    failures = [r.name for r in results if not r.passed]
    if failures:
        print(f"FAILED: {', '.join(failures)}", file=sys.stderr)
        return 1
    print(f"all {len(results)} ops within {TOLERANCE:g}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ[var] = str(args.threads)
    from .errors import (
        CheckpointFormatError,
        CompatibilityError,
        GestureSynthError,
        InvalidInputError,
        PoseFileParseError,
        ShapeError,
    )

    try:
        return args.func(args)
    except (
        InvalidInputError,
        ShapeError,
        PoseFileParseError,
        CheckpointFormatError,
        CompatibilityError,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GestureSynthError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
