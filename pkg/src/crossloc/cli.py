"""Command-line pipeline driver.

Subcommands: synth-gen, build-dict, learn-proj, localize, evaluate, pr-sweep.
Every command accepts --config (plain-text key = value file), --seed, and
--threads, writes its primary output plus a `<output>.manifest.txt` capturing
the resolved configuration and library versions (no timestamps, so reruns are
byte-identical), and exits 0 on success, 2 on validation errors, 3 on runtime
errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    camera_from,
    check_budget_from,
    config_lines,
    feature_config_from,
    grid_from,
    load_config,
    train_config_from,
    world_params_from,
)
from .dictionary import build_dictionary, load_dictionary, save_dictionary
from .errors import ConfigError, FormatError
from .evaluation import (
    evaluate_localization,
    load_results_csv,
    load_truth_csv,
    pr_sweep,
    record_from_result,
    save_results_csv,
)
from .features import load_feature_map, load_image
from .geometry import load_georef, load_intrinsics, load_poses_csv
from .learning import (
    Projection,
    load_projection,
    save_projection,
    train_projection,
)
from .localization import Localizer, QueryObservation, localize_ground_only
from .synthetic import generate_world, write_dataset


def _write_manifest(target, command: str, values: dict, extra: dict) -> None:
    path = Path(target)
    if path.is_dir():
        path = path / "manifest.txt"
    else:
        path = path.with_name(path.name + ".manifest.txt")
    lines = [
        f"command = {command}",
        f"crossloc_version = {__version__}",
        f"numpy_version = {np.__version__}",
        f"python_version = {sys.version_info.major}.{sys.version_info.minor}",
    ]
    lines += [f"{k} = {v}" for k, v in sorted(extra.items())]
    lines += config_lines(values)
    path.write_text("\n".join(lines) + "\n")


def _load_source(path: Path):
    if path.suffix == ".fmap":
        return load_feature_map(path)
    return load_image(path)


def _db_image_ids(ids: list[str]) -> list[int]:
    """Integer image ids: CSV ids when they all parse, else positions."""
    try:
        return [int(s) for s in ids]
    except ValueError:
        return list(range(len(ids)))


def _find_source(directory: Path, stem: str) -> Path:
    for suffix in (".fmap", ".png", ".jpg", ".jpeg"):
        candidate = directory / f"{stem}{suffix}"
        if candidate.exists():
            return candidate
    raise FormatError(f"no image or feature map named '{stem}.*' in {directory}")


def _cmd_synth_gen(args, values) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world = generate_world(world_params_from(values))
    write_dataset(world, out)
    _write_manifest(
        out,
        "synth-gen",
        values,
        {
            "n_db_images": len(world.db),
            "n_queries": len(world.queries),
            "n_outside": len(world.outside),
            "sat_width": world.georef.image_w,
            "sat_height": world.georef.image_h,
        },
    )


def _cmd_build_dict(args, values) -> None:
    db_dir = Path(args.db)
    poses_path = Path(args.poses) if args.poses else db_dir / "poses.csv"
    intr_path = Path(args.intrinsics) if args.intrinsics else db_dir / "intrinsics.txt"
    ids, poses = load_poses_csv(poses_path)
    cam = load_intrinsics(intr_path)
    georef = load_georef(args.georef)
    sat = _load_source(Path(args.sat))

    triples = []
    for sid, pose in zip(ids, poses):
        ground = _load_source(_find_source(db_dir, sid))
        depth_path = db_dir / f"{sid}.depth.fmap"
        if not depth_path.exists():
            raise FormatError(f"missing depth map {depth_path}")
        triples.append((ground, load_feature_map(depth_path), pose))

    dictionary = build_dictionary(
        triples,
        sat,
        georef,
        cam,
        grid=grid_from(values),
        feature_config=feature_config_from(values),
        max_range=float(values["max_range"]),
        image_ids=_db_image_ids(ids),
    )
    save_dictionary(args.out, dictionary)
    _write_manifest(
        args.out,
        "build-dict",
        values,
        {
            "n_entries": len(dictionary),
            "n_images": len(ids),
            "ground_dim": dictionary.ground_dim,
            "sat_dim": dictionary.sat_dim,
        },
    )


def _cmd_learn_proj(args, values) -> None:
    dictionary = load_dictionary(args.dict)
    train_cfg = train_config_from(values)
    digest = dictionary.feature_config.digest()
    extra = {}
    for side, matrix, out in (
        ("ground", dictionary.ground_matrix(), args.out_ground),
        ("sat", dictionary.sat_matrix(), args.out_sat),
    ):
        result = train_projection(matrix, dictionary.locations, train_cfg)
        save_projection(out, Projection(result.projection.matrix, digest))
        extra[f"{side}_initial_loss"] = repr(result.epoch_losses[0])
        extra[f"{side}_final_loss"] = repr(result.epoch_losses[-1])
        extra[f"{side}_epochs"] = result.n_epochs
        extra[f"{side}_converged"] = result.converged
    _write_manifest(args.out_ground, "learn-proj", values, extra)


def _load_queries(q_dir: Path, cam) -> list[QueryObservation]:
    stems = sorted(
        p.name[: -len(".fmap")]
        for p in q_dir.glob("*.fmap")
        if not p.name.endswith(".depth.fmap")
    )
    for p in sorted(q_dir.glob("*.png")):
        if p.stem not in stems:
            stems.append(p.stem)
    stems = sorted(set(stems))
    if not stems:
        raise FormatError(f"no query images found in {q_dir}")
    observations = []
    for stem in stems:
        depth_path = q_dir / f"{stem}.depth.fmap"
        if not depth_path.exists():
            raise FormatError(f"missing depth map {depth_path}")
        observations.append(
            QueryObservation(
                ground=_load_source(_find_source(q_dir, stem)),
                depth=load_feature_map(depth_path),
                cam=cam,
                query_id=stem,
            )
        )
    return observations


def _cmd_localize(args, values) -> None:
    dictionary = load_dictionary(args.dict)
    ids, poses = load_poses_csv(args.poses)
    db_ids = _db_image_ids(ids)
    q_dir = Path(args.queries)
    intr_path = Path(args.intrinsics) if args.intrinsics else q_dir / "intrinsics.txt"
    cam = load_intrinsics(intr_path)
    observations = _load_queries(q_dir, cam)

    if args.no_projection or args.proj_ground is None:
        w_ground = w_sat = None
        proj_note = "identity"
    else:
        w_ground = load_projection(args.proj_ground)
        w_sat = load_projection(args.proj_sat)
        proj_note = f"{args.proj_ground},{args.proj_sat}"

    threshold = float(values["inlier_threshold"])
    if args.ground_only:
        results = [
            localize_ground_only(
                obs,
                dictionary,
                poses,
                w_ground=w_ground,
                db_ids=db_ids,
                inlier_threshold=threshold,
            )
            for obs in observations
        ]
        mode = "ground-only"
        n_candidates = len(poses)
    else:
        engine = Localizer(
            dictionary,
            poses,
            w_ground=w_ground,
            w_sat=w_sat,
            db_ids=db_ids,
            candidate_spacing=float(values["candidate_spacing"]),
            knn_m=int(values["knn_m"]),
            check_budget=check_budget_from(values),
            inlier_threshold=threshold,
        )
        results = engine.localize_many(observations, threads=int(values["threads"]))
        mode = "full"
        n_candidates = len(engine.candidates)

    save_results_csv(args.out, [record_from_result(r) for r in results])
    _write_manifest(
        args.out,
        "localize",
        values,
        {
            "mode": mode,
            "projection": proj_note,
            "n_queries": len(observations),
            "n_candidates": n_candidates,
        },
    )


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _cmd_evaluate(args, values) -> None:
    records = load_results_csv(args.results)
    truth = load_truth_csv(args.truth)
    report = evaluate_localization(
        records, truth, inlier_radius=float(values["inlier_radius"])
    )
    lines = ["metric,value"]
    lines += [f"{name},{_format_value(v)}" for name, v in report.metrics_rows()]
    Path(args.out).write_text("\n".join(lines) + "\n")
    if args.per_query:
        rows = ["query_id,error,inside,inlier"]
        for i, qid in enumerate(report.query_ids):
            rows.append(
                f"{qid},{report.errors[i]!r},{1 if report.inside[i] else 0},"
                f"{1 if report.inlier[i] else 0}"
            )
        Path(args.per_query).write_text("\n".join(rows) + "\n")
    _write_manifest(args.out, "evaluate", values, {"n_results": len(records)})


def _cmd_pr_sweep(args, values) -> None:
    records = load_results_csv(args.results)
    truth = load_truth_csv(args.truth)
    sweep = pr_sweep(records, truth, inlier_radius=float(values["inlier_radius"]))
    lines = ["tau,precision,recall"]
    for i in range(sweep.thresholds.size):
        lines.append(
            f"{sweep.thresholds[i]!r},{sweep.precisions[i]!r},{sweep.recalls[i]!r}"
        )
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(
        f"optimal_tau={sweep.optimal_tau!r} "
        f"precision={sweep.optimal_precision!r} "
        f"recall={sweep.optimal_recall!r} "
        f"auc={sweep.auc!r}"
    )
    _write_manifest(
        args.out,
        "pr-sweep",
        values,
        {
            "auc": repr(sweep.auc),
            "optimal_tau": repr(sweep.optimal_tau),
            "optimal_precision": repr(sweep.optimal_precision),
            "optimal_recall": repr(sweep.optimal_recall),
        },
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="plain-text key = value config file")
    common.add_argument("--seed", type=int, help="override the seed config key")
    common.add_argument("--threads", type=int, help="override the threads config key")

    parser = argparse.ArgumentParser(
        prog="crossloc",
        description="cross-view ground-to-satellite localization pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=_cmd_synth_gen)

    p = sub.add_parser("build-dict", parents=[common], help="build a feature dictionary")
    p.add_argument("--db", required=True, help="database directory (images + depth maps)")
    p.add_argument("--sat", required=True, help="satellite image or feature map")
    p.add_argument("--georef", required=True, help="satellite georeference file")
    p.add_argument("--poses", help="database pose CSV (default: <db>/poses.csv)")
    p.add_argument("--intrinsics", help="camera intrinsics file (default: <db>/intrinsics.txt)")
    p.add_argument("--out", required=True, help="output dictionary file")
    p.set_defaults(func=_cmd_build_dict)

    p = sub.add_parser("learn-proj", parents=[common], help="train ranking projections")
    p.add_argument("--dict", required=True, help="dictionary file")
    p.add_argument("--out-ground", required=True, help="output ground projection file")
    p.add_argument("--out-sat", required=True, help="output satellite projection file")
    p.set_defaults(func=_cmd_learn_proj)

    p = sub.add_parser("localize", parents=[common], help="localize a query directory")
    p.add_argument("--dict", required=True, help="dictionary file")
    p.add_argument("--queries", required=True, help="query directory")
    p.add_argument("--poses", required=True, help="database pose CSV (path source)")
    p.add_argument("--intrinsics", help="intrinsics file (default: <queries>/intrinsics.txt)")
    p.add_argument("--proj-ground", help="ground projection file")
    p.add_argument("--proj-sat", help="satellite projection file")
    p.add_argument(
        "--no-projection",
        action="store_true",
        help="use identity projections (no-projection ablation)",
    )
    p.add_argument(
        "--ground-only",
        action="store_true",
        help="whole-image ground retrieval ablation",
    )
    p.add_argument("--out", required=True, help="output results CSV")
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("evaluate", parents=[common], help="score results against truth")
    p.add_argument("--results", required=True, help="results CSV from localize")
    p.add_argument("--truth", required=True, help="ground-truth CSV")
    p.add_argument("--per-query", help="optional per-query error CSV")
    p.add_argument("--out", required=True, help="output metrics CSV")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("pr-sweep", parents=[common], help="precision/recall threshold sweep")
    p.add_argument("--results", required=True, help="results CSV from localize")
    p.add_argument("--truth", required=True, help="ground-truth CSV")
    p.add_argument("--out", required=True, help="output curve CSV")
    p.set_defaults(func=_cmd_pr_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    try:
        values = load_config(args.config, overrides=overrides)
        if args.command == "localize" and bool(args.proj_ground) != bool(args.proj_sat):
            raise ConfigError("--proj-ground and --proj-sat must be given together")
        args.func(args, values)
        return 0
    except (
        ConfigError,
        FormatError,
        ValueError,
        FileNotFoundError,
        NotADirectoryError,
        IsADirectoryError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures (training divergence, IO, ...)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
