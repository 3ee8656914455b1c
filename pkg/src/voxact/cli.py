"""The ``voxact`` command line.

Subcommands: gen-demos, fit, evaluate, rollout, inspect-grid. Every command
takes a JSON config (see config.RunConfig) with CLI flags overriding config
keys one for one, echoes the resolved config into its reports, and is
reproducible from (config, seed).

Exit codes: 0 success, 2 config error, 3 data error, 4 external-service
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .demos import (
    build_training_samples,
    extract_keyframes,
    list_episodes,
    read_episode,
    write_episode,
)
from .errors import ConfigError, DataError, ServiceError, VoxactError
from .harness import (
    evaluate_keyframes,
    keyframe_score,
    make_oracle_pair,
    run_episode,
)
from .policy import knn_fit, load_model, save_model, select_checkpoints
from .reporting import (
    grid_figure,
    metrics_figure,
    occupancy_histogram_text,
    rollout_figure,
    write_csv,
    write_json,
)
from .roles import ObjectPose
from .toyworld import generate_episode, sample_scene
from .voxel import save_grid, voxelize

log = logging.getLogger("voxact")


def _iter_samples(cfg: RunConfig, jitter_rng=None):
    """Stream keyframe samples episode by episode from the dataset dir.

    With a jitter rng, each episode's crop anchor is offset by whole voxels
    in [-j, +j] per axis (j = cfg.jitter_voxels), which emulates detection
    error and shifts grid content against the labels.
    """
    if cfg.alpha_mode == "estimated" and cfg.alpha_override is None:
        raise ConfigError("estimated alpha needs a detected object extent and is "
                          "a rollout-time mode; datasets build with fixed alpha "
                          "(or pass --alpha)")
    base = cfg.base_spec
    for ep_dir in list_episodes(cfg.data_dir):
        ep = read_episode(ep_dir)
        alpha = cfg.resolve_alpha()
        kfs = extract_keyframes(ep, cfg.eps_v, cfg.buffer)
        detector_pose = None
        if jitter_rng is not None:
            voxel = alpha * base.voxel_size
            offset = jitter_rng.integers(-cfg.jitter_voxels, cfg.jitter_voxels + 1,
                                         size=3) * voxel
            detector_pose = ObjectPose(position=ep.object_position + offset,
                                       yaw_deg=0.0, extent=np.full(3, 0.3))
        yield from build_training_samples(
            ep, kfs, alpha, base, detector_pose=detector_pose,
            bin_width_deg=cfg.rotation_bin_deg, uid_prefix=f"{ep_dir.name}/")


def cmd_gen_demos(cfg: RunConfig) -> int:
    if cfg.n_episodes <= 0:
        raise ConfigError("gen-demos needs n_episodes > 0")
    out = Path(cfg.data_dir)
    out.mkdir(parents=True, exist_ok=True)
    tags = []
    for i in range(cfg.n_episodes):
        tag = "as" if i % 2 == 0 else "sa"  # half left-acting, half right-acting
        ep = generate_episode(cfg.task, seed=cfg.seed * 100_000 + i, force_tag=tag,
                              move_steps=cfg.move_steps, dwell_steps=cfg.dwell_steps,
                              eps_v=cfg.eps_v, image_size=cfg.image_size)
        write_episode(ep, out / f"episode_{i:03d}")
        tags.append(tag)
        log.info("episode_%03d: task=%s goal=%s horizon=%d", i, cfg.task, tag, ep.horizon)
    write_json(out / "manifest.json", {
        "config": cfg.to_dict(),
        "n_episodes": cfg.n_episodes,
        "goal_split": {t: tags.count(t) for t in ("as", "sa")},
    })
    print(f"wrote {cfg.n_episodes} episodes to {out} "
          f"({tags.count('as')} as / {tags.count('sa')} sa)")
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    out = Path(cfg.model_dir or (Path(cfg.out_dir) / "models"))
    out.mkdir(parents=True, exist_ok=True)
    candidates = {}
    for role in ("acting", "stabilizing"):
        candidates[role] = [
            knn_fit(_iter_samples(cfg), role, downsample_factor=f,
                    weights=cfg.knn_weights)
            for f in cfg.downsample_factors
        ]

    def evaluator(acting, stabilizing, _validation):
        return keyframe_score(evaluate_keyframes((acting, stabilizing),
                                                 _iter_samples(cfg)))

    best_acting, best_stab = select_checkpoints(
        candidates["acting"], candidates["stabilizing"], None, evaluator)
    save_model(best_acting, out / "acting.knn")
    save_model(best_stab, out / "stabilizing.knn")
    write_json(Path(cfg.out_dir) / "fit.json", {
        "config": cfg.to_dict(),
        "n_samples": int(best_acting.features.shape[0]),
        "candidate_factors": list(cfg.downsample_factors),
        "chosen": {"acting_factor": best_acting.downsample_factor,
                   "stabilizing_factor": best_stab.downsample_factor},
        "models": {"acting": str(out / "acting.knn"),
                   "stabilizing": str(out / "stabilizing.knn")},
    })
    print(f"fit {best_acting.features.shape[0]} samples; "
          f"factors acting={best_acting.downsample_factor} "
          f"stabilizing={best_stab.downsample_factor}; models in {out}")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    model_dir = Path(cfg.model_dir or (Path(cfg.out_dir) / "models"))
    pair = (load_model(model_dir / "acting.knn"),
            load_model(model_dir / "stabilizing.knn"))
    jitter_rng = (np.random.default_rng(cfg.seed + 1)
                  if cfg.jitter_voxels > 0 else None)
    rows: list[dict] = []
    metrics = evaluate_keyframes(pair, _iter_samples(cfg, jitter_rng), per_sample=rows)
    out = Path(cfg.out_dir)
    write_json(out / "metrics.json", {"config": cfg.to_dict(),
                                      "jittered": cfg.jitter_voxels > 0,
                                      "metrics": metrics.to_dict()})
    write_csv(out / "per_sample.csv", rows)
    metrics_figure(metrics, rows, out / "metrics.png")
    print(json.dumps(metrics.to_dict(), indent=2))
    return 0


def cmd_rollout(cfg: RunConfig, policy_name: str, n_rollouts: int) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fixture_dir = cfg.fixture_dir or str(out / "fixtures")
    if cfg.detector_mode == "service" and not cfg.detector_endpoint:
        raise ConfigError("service detector mode needs DETECTOR_ENDPOINT or "
                          "detector_endpoint in the config")
    rng = np.random.default_rng(cfg.seed)
    knn_pair = None
    if policy_name == "knn":
        model_dir = Path(cfg.model_dir or (Path(cfg.out_dir) / "models"))
        knn_pair = (load_model(model_dir / "acting.knn"),
                    load_model(model_dir / "stabilizing.knn"))
    outcomes = []
    for i in range(n_rollouts):
        tag = "as" if i % 2 == 0 else "sa"
        scene = sample_scene(cfg.task, rng, tag)
        if policy_name == "oracle":
            import copy

            pair = make_oracle_pair(copy.deepcopy(scene))
        else:
            pair = knn_pair
        try:
            outcome = run_episode(
                pair, scene, max_keyframes=cfg.max_keyframes,
                fixture_dir=fixture_dir, detector_mode=cfg.detector_mode,
                endpoint=cfg.detector_endpoint,
                alpha=cfg.alpha_override, alpha_mode=cfg.alpha_mode,
                base_spec=cfg.base_spec, image_size=cfg.image_size)
        except ServiceError as e:
            if cfg.fixture_dir:
                log.warning("detector service unreachable (%s); "
                            "falling back to fixtures in %s", e, cfg.fixture_dir)
                outcome = run_episode(
                    pair, scene, max_keyframes=cfg.max_keyframes,
                    fixture_dir=cfg.fixture_dir, detector_mode="fixture",
                    alpha=cfg.alpha_override, alpha_mode=cfg.alpha_mode,
                    base_spec=cfg.base_spec, image_size=cfg.image_size)
            else:
                raise
        outcomes.append(outcome)
        log.info("rollout %d: success=%s keyframes=%d %s",
                 i, outcome.success, outcome.keyframes_used, outcome.reason)
    rate = float(np.mean([o.success for o in outcomes]))
    write_json(out / "rollout.json", {
        "config": cfg.to_dict(),
        "policy": policy_name,
        "n_rollouts": n_rollouts,
        "success_rate": rate,
        "outcomes": [{"success": o.success, "keyframes": o.keyframes_used,
                      "reason": o.reason, "goal": o.goal_tag} for o in outcomes],
    })
    write_csv(out / "rollout.csv", [
        {"episode": i, "success": int(o.success), "keyframes": o.keyframes_used,
         "goal": o.goal_tag, "reason": o.reason}
        for i, o in enumerate(outcomes)])
    rollout_figure(outcomes, out / "rollout.png")
    print(f"success rate {rate:.2f} over {n_rollouts} episodes (policy={policy_name})")
    return 0


def cmd_inspect_grid(cfg: RunConfig, episode: int, step: int, dump: bool) -> int:
    from .rgbd import deproject
    from .voxel import crop_spec

    ep_dirs = list_episodes(cfg.data_dir)
    if episode >= len(ep_dirs):
        raise DataError(f"episode index {episode} out of range ({len(ep_dirs)} episodes)")
    ep = read_episode(ep_dirs[episode])
    if step >= ep.horizon:
        raise DataError(f"step {step} out of range (horizon {ep.horizon})")
    alpha = cfg.resolve_alpha()
    spec = crop_spec(cfg.base_spec, ep.object_position, alpha)
    clouds = [deproject(f) for f in ep.steps[step].frames.values()]
    grid = voxelize(clouds, spec)
    print(occupancy_histogram_text(grid))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid_figure(grid, out / f"grid_ep{episode}_step{step}.png")
    if dump:
        save_grid(grid, out / f"grid_ep{episode}_step{step}.bin")
        print(f"dumped raw grid to {out / f'grid_ep{episode}_step{step}.bin'}")
    print(f"figure: {out / f'grid_ep{episode}_step{step}.png'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxact",
        description="Object-centric voxel grids and a discretized two-arm "
                    "action space, with a k-NN baseline and desk-scale harness.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (see config.RunConfig)")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--task", help="override config task")
        p.add_argument("--alpha", type=float, dest="alpha_override",
                       help="override the crop fraction")
        p.add_argument("--detector-mode", choices=("fixture", "service"),
                       dest="detector_mode")
        p.add_argument("--out", dest="out_dir", help="output directory")
        p.add_argument("--data", dest="data_dir", help="dataset directory")
        p.add_argument("--model-dir", dest="model_dir")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("gen-demos", help="generate scripted toy demonstrations")
    common(p)
    p.add_argument("--n", type=int, dest="n_episodes", help="episode count")

    p = sub.add_parser("fit", help="fit the k-NN policy pair and select checkpoints")
    common(p)

    p = sub.add_parser("evaluate", help="keyframe metrics for the fitted pair")
    common(p)
    p.add_argument("--jitter-voxels", type=int, dest="jitter_voxels",
                   help="evaluate with crop anchors jittered by up to this many voxels")

    p = sub.add_parser("rollout", help="run toy episodes with a policy pair")
    common(p)
    p.add_argument("--policy", choices=("oracle", "knn"), default="knn")
    p.add_argument("--episodes", type=int, default=10, help="number of rollouts")

    p = sub.add_parser("inspect-grid", help="print a grid's occupancy histogram")
    common(p)
    p.add_argument("--episode", type=int, default=0)
    p.add_argument("--step", type=int, default=0)
    p.add_argument("--dump", action="store_true", help="also write the raw grid dump")
    return parser


_OVERRIDE_KEYS = ("seed", "task", "alpha_override", "detector_mode", "out_dir",
                  "data_dir", "model_dir", "n_episodes", "jitter_voxels")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False)
                        else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS if hasattr(args, k)}
        cfg = load_config(args.config, overrides)
        if args.command == "gen-demos":
            return cmd_gen_demos(cfg)
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "rollout":
            return cmd_rollout(cfg, args.policy, args.episodes)
        if args.command == "inspect-grid":
            return cmd_inspect_grid(cfg, args.episode, args.step, args.dump)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except ServiceError as e:
        print(f"service error: {e}", file=sys.stderr)
        return 4
    except VoxactError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
