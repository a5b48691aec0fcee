"""Command-line pipeline: staged commands over a single config file.

Verbs: gen-envs, collect, train-inverse, label, train-subroutines, explore,
iou, ablate, hrl, report. Exit codes: 0 success, 2 config error, 3 missing
artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import artifacts, dataio, report as report_mod
from .config import (RunConfig, arch_hash, config_hash, config_to_text,
                     load_config, parse_int_grid)
from .errors import ConfigError, MissingArtifactError, NumericalError, VmsrError
from .expert import generate_video_dataset
from .explore import (AblationContext, make_baseline_method, make_vmsr_method,
                      run_ablation, run_exploration_benchmark,
                      subroutine_iou_analysis)
from .hrl import (A2CConfig, FlatPolicy, compare_sample_efficiency,
                  init_hierarchical_policy, make_task, train_a2c, train_flat_rl)
from .maze import MazeSpec, generate_maze, load_maze, save_maze
from .models import ModelBundle
from .pipeline import (InteractionDataset, SubroutineTrainConfig,
                       collect_interaction_data, pseudo_label, slice_clips,
                       train_inverse_model, train_subroutines)

STANDARD_METHODS = ("vmsr", "random", "forward_bias", "forward_rotate_on_collision")


def _split_spec(cfg: RunConfig, split: str) -> MazeSpec:
    e = cfg.envs
    return MazeSpec(width=getattr(e, f"{split}_width"),
                    height=getattr(e, f"{split}_height"),
                    room_count=getattr(e, f"{split}_rooms"),
                    door_width=e.door_width,
                    target_room_count=e.target_rooms)


def _map_dir(cfg: RunConfig) -> Path:
    return Path(cfg.out) / "maps"


def load_split_maps(cfg: RunConfig, split: str, needed_by: str):
    artifacts.load_manifest(cfg.out, "maps", needed_by)
    count = getattr(cfg.envs, f"{split}_count")
    maps = []
    for i in range(count):
        path = _map_dir(cfg) / f"{split}_{i:02d}.maze"
        if not path.exists():
            raise MissingArtifactError(f"missing map file {path}; rerun `vmsr gen-envs`")
        maps.append(load_maze(path))
    return maps


def _bundle_paths(cfg: RunConfig) -> tuple[Path, Path]:
    return Path(cfg.out) / "bundle.ckpt", Path(cfg.out) / "bundle.meta.json"


def load_bundle(cfg: RunConfig, needed_by: str) -> ModelBundle:
    manifest = artifacts.load_manifest(cfg.out, "bundle", needed_by)
    artifacts.check_chain(manifest, seed=cfg.seed, config_hash=config_hash(cfg))
    ckpt, meta_path = _bundle_paths(cfg)
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta["arch_hash"] != arch_hash(cfg):
        raise VmsrError("bundle architecture does not match the current config")
    return ModelBundle.load(
        ckpt, ray_count=cfg.agent.ray_count, n_subroutines=cfg.subr.count,
        inverse_hidden=(cfg.inverse.hidden1, cfg.inverse.hidden2),
        encoder_hidden=cfg.subr.encoder_hidden,
        policy_hidden=cfg.subr.policy_hidden, horizon=cfg.subr.clip_len)


# ---------------------------------------------------------------------------
# commands

def cmd_gen_envs(cfg: RunConfig, args) -> int:
    t0 = time.time()
    cfg.check_splits_disjoint()
    out = _map_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for split in ("einv", "evideo", "eval", "etest"):
        spec = _split_spec(cfg, split)
        base = getattr(cfg.envs, f"{split}_seed_base")
        for i in range(getattr(cfg.envs, f"{split}_count")):
            map_ = generate_maze(base + i, spec, map_id=f"{split}_{i:02d}")
            path = out / f"{split}_{i:02d}.maze"
            save_maze(map_, path)
            files.append(path.name)
    h = cfg.hrl
    task_seed = cfg.envs.etest_seed_base + cfg.envs.etest_count
    task_specs = (
        ("etest_task", "pointgoal",
         MazeSpec(h.map_width, h.map_height, h.map_rooms, h.map_door_width,
                  cfg.envs.target_rooms)),
        ("etest_task_area", "areagoal",
         MazeSpec(h.area_map_width, h.area_map_height, h.area_map_rooms,
                  h.map_door_width, cfg.envs.target_rooms)),
    )
    for name, kind, spec in task_specs:
        task_map = None
        for bump in range(20):
            candidate = generate_maze(task_seed * 100 + bump, spec, map_id=name)
            try:  # the map must host its task at the required distance band
                make_task(kind, "sparse", candidate, cfg.agent_config(), seed=0)
            except (ValueError, RuntimeError):
                continue
            task_map = candidate
            break
        if task_map is None:
            raise VmsrError(f"could not generate a {kind}-feasible HRL map; "
                            "adjust hrl.map_* settings")
        save_maze(task_map, out / f"{name}.maze")
        files.append(f"{name}.maze")
    (Path(cfg.out) / "config.resolved.cfg").write_text(config_to_text(cfg),
                                                       encoding="utf-8")
    artifacts.write_manifest(cfg.out, "maps", seed=cfg.seed,
                             config_hash=config_hash(cfg), inputs={},
                             wall_time_s=time.time() - t0,
                             extra={"files": files})
    print(f"gen-envs: wrote {len(files)} maps to {out}")
    return 0


def cmd_collect(cfg: RunConfig, args) -> int:
    t0 = time.time()
    maps = load_split_maps(cfg, "einv", "collect")
    data = collect_interaction_data(maps, n_starts=cfg.collect.starts,
                                    steps_per_start=cfg.collect.steps,
                                    cfg=cfg.agent_config(), seed=cfg.seed)
    data.save(Path(cfg.out) / "interactions.npz")
    artifacts.write_manifest(cfg.out, "interactions", seed=cfg.seed,
                             config_hash=config_hash(cfg),
                             inputs={"maps": artifacts.manifest_ref(cfg.out, "maps")},
                             wall_time_s=time.time() - t0,
                             extra={"n_samples": len(data)})
    print(f"collect: {len(data)} interaction samples")
    return 0


def cmd_train_inverse(cfg: RunConfig, args) -> int:
    t0 = time.time()
    manifest = artifacts.load_manifest(cfg.out, "interactions", "train-inverse")
    artifacts.check_chain(manifest, seed=cfg.seed, config_hash=config_hash(cfg),
                          force=args.force)
    data = InteractionDataset.load(Path(cfg.out) / "interactions.npz")
    model, rep = train_inverse_model(
        data, cfg.agent.ray_count, hidden=(cfg.inverse.hidden1, cfg.inverse.hidden2),
        batch=cfg.inverse.batch, lr=cfg.inverse.lr, epochs=cfg.inverse.epochs,
        val_frac=cfg.inverse.val_frac, seed=cfg.seed)
    from .nn import save_checkpoint
    save_checkpoint(Path(cfg.out) / "inverse.ckpt", model.store.params)
    artifacts.write_manifest(
        cfg.out, "inverse", seed=cfg.seed, config_hash=config_hash(cfg),
        inputs={"interactions": artifacts.manifest_ref(cfg.out, "interactions")},
        wall_time_s=time.time() - t0,
        extra={"val_accuracy": rep.get("val_accuracy"), "loss_curve": rep["loss_curve"]})
    print(f"train-inverse: held-out accuracy {rep.get('val_accuracy', float('nan')):.3f}")
    return 0


def _load_inverse(cfg: RunConfig, needed_by: str):
    from .models import InverseModel
    from .nn import load_checkpoint
    manifest = artifacts.load_manifest(cfg.out, "inverse", needed_by)
    artifacts.check_chain(manifest, seed=cfg.seed, config_hash=config_hash(cfg))
    model = InverseModel.create(cfg.agent.ray_count,
                                (cfg.inverse.hidden1, cfg.inverse.hidden2))
    model.store.load_values(load_checkpoint(Path(cfg.out) / "inverse.ckpt"))
    return model


def cmd_label(cfg: RunConfig, args) -> int:
    t0 = time.time()
    model = _load_inverse(cfg, "label")
    maps = load_split_maps(cfg, "evideo", "label")
    videos = generate_video_dataset(maps, n_videos=cfg.video.count,
                                    view_cfg=cfg.agent_config(), seed=cfg.seed,
                                    clip_length=cfg.video.length,
                                    min_goal_steps=cfg.video.min_goal_steps,
                                    jobs=args.jobs)
    video_manifest = dataio.save_video_dataset(Path(cfg.out) / "videos.bin", videos,
                                               cfg.agent.ray_count)
    dataio.write_json(Path(cfg.out) / "videos.index.json", video_manifest)
    labels = [pseudo_label(model, clip) for clip in videos.clips]
    labeled_manifest = dataio.save_labeled_videos(Path(cfg.out) / "labeled.bin",
                                                  videos, labels, cfg.agent.ray_count)
    dataio.write_json(Path(cfg.out) / "labeled.index.json", labeled_manifest)
    artifacts.write_manifest(
        cfg.out, "labeled", seed=cfg.seed, config_hash=config_hash(cfg),
        inputs={"inverse": artifacts.manifest_ref(cfg.out, "inverse"),
                "maps": artifacts.manifest_ref(cfg.out, "maps")},
        wall_time_s=time.time() - t0,
        extra={"n_videos": len(videos.clips)})
    print(f"label: {len(videos.clips)} videos rendered and pseudo-labeled")
    return 0


def _load_labeled(cfg: RunConfig, needed_by: str):
    manifest = artifacts.load_manifest(cfg.out, "labeled", needed_by)
    artifacts.check_chain(manifest, seed=cfg.seed, config_hash=config_hash(cfg))
    index = dataio.read_json(Path(cfg.out) / "labeled.index.json")
    return dataio.load_labeled_videos(Path(cfg.out) / "labeled.bin", index)


def cmd_train_subroutines(cfg: RunConfig, args) -> int:
    t0 = time.time()
    all_obs, all_acts, _ = _load_labeled(cfg, "train-subroutines")
    clips = []
    for vi, (obs, acts) in enumerate(zip(all_obs, all_acts)):
        clips.extend(slice_clips(obs, acts, cfg.subr.clip_len, cfg.subr.stride,
                                 source=vi))
    train_cfg = SubroutineTrainConfig(
        n_subroutines=cfg.subr.count, batch=cfg.subr.batch, lr=cfg.subr.lr,
        lr_end=cfg.subr.lr_end, epochs=cfg.subr.epochs,
        tau_start=cfg.subr.tau_start, tau_end=cfg.subr.tau_end,
        affordance_weight=cfg.subr.affordance_weight,
        encoder_hidden=cfg.subr.encoder_hidden,
        policy_hidden=cfg.subr.policy_hidden, seed=cfg.seed)
    encoder, policy, affordance, rep = train_subroutines(clips, cfg.agent.ray_count,
                                                         train_cfg)
    inverse = _load_inverse(cfg, "train-subroutines")
    bundle = ModelBundle(inverse=inverse, encoder=encoder, policy=policy,
                         affordance=affordance)
    ckpt, meta_path = _bundle_paths(cfg)
    bundle.save(ckpt)
    meta_path.write_text(json.dumps({"arch_hash": arch_hash(cfg),
                                     "arch": bundle.arch_signature()},
                                    indent=1, sort_keys=True), encoding="utf-8")
    if rep["collapse_warnings"]:
        dataio.write_json(Path(cfg.out) / "warnings.json",
                          {"latent_collapse": rep["collapse_warnings"]})
    artifacts.write_manifest(
        cfg.out, "bundle", seed=cfg.seed, config_hash=config_hash(cfg),
        inputs={"labeled": artifacts.manifest_ref(cfg.out, "labeled"),
                "inverse": artifacts.manifest_ref(cfg.out, "inverse")},
        wall_time_s=time.time() - t0,
        extra={"n_clips": rep["n_clips"], "z_usage": rep["z_usage"],
               "collapse_warnings": len(rep["collapse_warnings"])})
    print(f"train-subroutines: {rep['n_clips']} clips, usage "
          f"{[round(u, 2) for u in rep['z_usage']]}")
    return 0


def _standard_methods(cfg: RunConfig, bundle: ModelBundle | None, names):
    agent = cfg.agent_config()
    methods = {}
    for name in names:
        if name == "vmsr":
            if bundle is None:
                raise MissingArtifactError(
                    "method vmsr needs a trained bundle; run `vmsr train-subroutines`")
            methods[name] = make_vmsr_method(bundle.affordance, bundle.policy, agent,
                                             cfg.explore.episode_len,
                                             window=cfg.explore.window)
        elif name == "vmsr_uniform_z":
            methods[name] = make_vmsr_method(bundle.affordance, bundle.policy, agent,
                                             cfg.explore.episode_len,
                                             window=cfg.explore.window, uniform_z=True)
        elif name in ("random", "forward_bias", "forward_rotate_on_collision"):
            methods[name] = make_baseline_method(name, agent, cfg.explore.episode_len)
        else:
            raise ConfigError(f"unknown exploration method {name!r}")
    return methods


def cmd_explore(cfg: RunConfig, args) -> int:
    t0 = time.time()
    names = [n.strip() for n in args.methods.split(",") if n.strip()]
    bundle = None
    if any(n.startswith("vmsr") for n in names):
        bundle = load_bundle(cfg, "explore")
    maps = load_split_maps(cfg, "etest", "explore")
    methods = _standard_methods(cfg, bundle, names)
    n_samples = {"vmsr": cfg.collect.starts * cfg.collect.steps,
                 "vmsr_uniform_z": cfg.collect.starts * cfg.collect.steps}
    reports = run_exploration_benchmark(
        methods, maps, cfg.agent_config(), n_starts=cfg.explore.starts,
        runs_per_start=cfg.explore.runs, episode_length=cfg.explore.episode_len,
        seed=cfg.seed, n_samples_used=n_samples)
    out = Path(cfg.out) / "explore"
    rows = [r for rep in reports.values() for r in rep.rows()]
    report_mod.write_csv(out / "report.csv", ["method", "metric", "value"],
                         [(m, k, report_mod.format_float(v)) for m, k, v in rows])
    long_rows = []
    for name, rep in reports.items():
        ps = rep.per_start
        for i in range(len(ps["adt"])):
            long_rows.append((name, int(ps["map"][i]), int(ps["start"][i]),
                              report_mod.format_float(ps["adt"][i]),
                              report_mod.format_float(ps["max_distance"][i]),
                              report_mod.format_float(ps["collision_rate"][i])))
    report_mod.write_csv(out / "per_start.csv",
                         ["method", "map", "start", "adt", "max_distance",
                          "collision_rate"], long_rows)
    for name, rep in reports.items():
        trajs = getattr(rep, "sample_trajectories", [])
        if trajs:
            svg = report_mod.map_svg(maps[0], trajs[:3])
            (out / f"trajectories_{name}.svg").write_text(svg, encoding="utf-8")
    artifacts.write_manifest(
        cfg.out, "explore", seed=cfg.seed, config_hash=config_hash(cfg),
        inputs=({"bundle": artifacts.manifest_ref(cfg.out, "bundle")} if bundle else {})
        | {"maps": artifacts.manifest_ref(cfg.out, "maps")},
        wall_time_s=time.time() - t0,
        extra={"methods": names})
    print(report_mod.exploration_table(reports))
    return 0


def cmd_iou(cfg: RunConfig, args) -> int:
    t0 = time.time()
    bundle = load_bundle(cfg, "iou")
    maps = load_split_maps(cfg, "etest", "iou")
    result = subroutine_iou_analysis(bundle.affordance, bundle.policy, maps,
                                     cfg.agent_config(), n_starts=cfg.iou.starts,
                                     rollouts=cfg.iou.rollouts,
                                     windows=cfg.iou.windows, seed=cfg.seed)
    out = Path(cfg.out) / "iou"
    report_mod.write_csv(out / "iou.csv", ["map", "start", "z_a", "z_b", "iou"],
                         [(r["map"], r["start"], r["z_a"], r["z_b"],
                           report_mod.format_float(r["iou"])) for r in result["rows"]])
    report_mod.write_csv(out / "summary.csv", ["kind", "mean_iou"],
                         [("same_subroutine", report_mod.format_float(result["same_mean"])),
                          ("cross_subroutine", report_mod.format_float(result["cross_mean"]))])
    artifacts.write_manifest(
        cfg.out, "iou", seed=cfg.seed, config_hash=config_hash(cfg),
        inputs={"bundle": artifacts.manifest_ref(cfg.out, "bundle"),
                "maps": artifacts.manifest_ref(cfg.out, "maps")},
        wall_time_s=time.time() - t0,
        extra={"same_mean": result["same_mean"], "cross_mean": result["cross_mean"]})
    print(f"iou: same={result['same_mean']:.3f} cross={result['cross_mean']:.3f}")
    return 0


def cmd_ablate(cfg: RunConfig, args) -> int:
    t0 = time.time()
    axis = args.axis
    maps_einv = load_split_maps(cfg, "einv", "ablate")
    maps_etest = load_split_maps(cfg, "etest", "ablate")
    bundle = load_bundle(cfg, "ablate") if axis == "affordance_vs_random" else None
    ctx = AblationContext(
        einv_maps=maps_einv, etest_maps=maps_etest, agent_cfg=cfg.agent_config(),
        seed=cfg.seed, collect_steps=cfg.collect.steps,
        inverse_hidden=(cfg.inverse.hidden1, cfg.inverse.hidden2),
        inverse_epochs=cfg.inverse.epochs,
        subr_cfg=SubroutineTrainConfig(
            n_subroutines=cfg.subr.count, batch=cfg.subr.batch, lr=cfg.subr.lr,
            lr_end=cfg.subr.lr_end, epochs=cfg.ablate.epochs,
            tau_start=cfg.subr.tau_start, tau_end=cfg.subr.tau_end,
            affordance_weight=cfg.subr.affordance_weight,
            encoder_hidden=cfg.subr.encoder_hidden,
            policy_hidden=cfg.subr.policy_hidden, seed=cfg.seed),
        clip_len=cfg.subr.clip_len, stride=cfg.subr.stride,
        episode_len=cfg.explore.episode_len, explore_starts=cfg.ablate.starts,
        explore_runs=cfg.ablate.runs, bundle=bundle)
    if axis in ("n_interaction_samples", "clip_length", "n_subroutines"):
        videos = None
        if Path(cfg.out, "videos.bin").exists():
            index = dataio.read_json(Path(cfg.out) / "videos.index.json")
            videos = dataio.load_video_dataset(Path(cfg.out) / "videos.bin", index)
            videos.clips = videos.clips[:cfg.ablate.videos]
        else:
            maps_ev = load_split_maps(cfg, "evideo", "ablate")
            videos = generate_video_dataset(maps_ev, n_videos=cfg.ablate.videos,
                                            view_cfg=cfg.agent_config(),
                                            seed=cfg.seed, jobs=args.jobs)
        ctx.videos = videos
    grids = {
        "n_interaction_samples": parse_int_grid(cfg.ablate.samples_grid,
                                                "ablate.samples_grid"),
        "clip_length": parse_int_grid(cfg.ablate.clip_grid, "ablate.clip_grid"),
        "n_subroutines": parse_int_grid(cfg.ablate.nsub_grid, "ablate.nsub_grid"),
        "affordance_vs_random": [0, 1],
    }
    if axis not in grids:
        raise ConfigError(f"unknown ablation axis {axis!r}")
    rows = run_ablation(axis, grids[axis], ctx)
    out = Path(cfg.out) / "ablate"
    report_mod.write_csv(out / f"{axis}.csv",
                         ["axis", "value", "adt", "max_distance", "collision_rate"],
                         [(axis, r["value"], report_mod.format_float(r["adt"]),
                           report_mod.format_float(r["max_distance"]),
                           report_mod.format_float(r["collision_rate"])) for r in rows])
    artifacts.write_manifest(
        cfg.out, "ablate", seed=cfg.seed, config_hash=config_hash(cfg),
        inputs={"maps": artifacts.manifest_ref(cfg.out, "maps")},
        wall_time_s=time.time() - t0, extra={"axis": axis})
    for r in rows:
        print(f"ablate {axis}={r['value']}: adt={r['adt']:.2f} "
              f"max_dist={r['max_distance']:.2f} coll={r['collision_rate']:.3f}")
    return 0


def cmd_hrl(cfg: RunConfig, args) -> int:
    t0 = time.time()
    bundle = load_bundle(cfg, "hrl")
    task_file = "etest_task_area" if cfg.hrl.task == "areagoal" else "etest_task"
    task_path = _map_dir(cfg) / f"{task_file}.maze"
    if not task_path.exists():
        raise MissingArtifactError(f"missing {task_path}; rerun `vmsr gen-envs`")
    task_map = load_maze(task_path)
    agent = cfg.agent_config()
    h = cfg.hrl
    a2c = A2CConfig(gamma=h.gamma, lr=h.lr, entropy_coef=h.entropy_coef,
                    value_coef=h.value_coef, update_windows=h.update_windows,
                    record_every=h.record_every)
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    curves = {}
    rows = []
    for scheme in schemes:
        curves[scheme] = []
        for i in range(h.seeds):
            seed = cfg.seed * 1000 + i
            env = make_task(h.task, h.reward, task_map, agent, seed=cfg.seed,
                            max_episode_steps=h.max_steps, goal_pool=h.goal_pool)
            policy = init_hierarchical_policy(
                scheme, bundle, cfg.agent.ray_count, cfg.subr.count, seed=seed,
                meta_interval=h.meta_interval, fine_tune_subs=h.fine_tune_subs)
            curve = train_a2c(policy, env, budget_steps=h.budget, cfg=a2c, seed=seed)
            curves[scheme].append(curve)
            for s, r, sr in zip(curve.steps, curve.reward, curve.success):
                rows.append((scheme, i, s, report_mod.format_float(r),
                             report_mod.format_float(sr)))
            print(f"hrl {scheme} seed {i}: steps-to-threshold "
                  f"{curve.steps_to_success(h.success_threshold)}")
    out = Path(cfg.out) / "hrl"
    if args.flat:
        area_path = _map_dir(cfg) / "etest_task_area.maze"
        if not area_path.exists():
            raise MissingArtifactError(f"missing {area_path}; rerun `vmsr gen-envs`")
        area_map = load_maze(area_path)
        flat_rows = []
        all_obs, all_acts, _ = _load_labeled(cfg, "hrl")
        clips = []
        for vi, (obs, acts) in enumerate(zip(all_obs, all_acts)):
            clips.extend(slice_clips(obs, acts, cfg.subr.clip_len, cfg.subr.stride,
                                     source=vi))
        single_cfg = SubroutineTrainConfig(
            n_subroutines=1, batch=cfg.subr.batch, lr=cfg.subr.lr,
            lr_end=cfg.subr.lr_end, epochs=cfg.ablate.epochs,
            encoder_hidden=cfg.subr.encoder_hidden,
            policy_hidden=cfg.subr.policy_hidden, seed=cfg.seed)
        _, single_policy, _, _ = train_subroutines(clips, cfg.agent.ray_count,
                                                   single_cfg)
        for scheme in ("vmsr_single_subroutine", "random"):
            for i in range(h.seeds):
                seed = cfg.seed * 1000 + 500 + i
                env = make_task("areagoal", h.reward, area_map, agent, seed=cfg.seed,
                                max_episode_steps=h.max_steps)
                if scheme == "vmsr_single_subroutine":
                    flat = FlatPolicy.from_single_subroutine(single_policy, seed=seed)
                else:
                    flat = FlatPolicy.create(cfg.agent.ray_count,
                                             cfg.subr.policy_hidden, seed=seed)
                curve = train_flat_rl(flat, env, budget_steps=h.flat_budget,
                                      cfg=a2c, seed=seed)
                for s, r, sr in zip(curve.steps, curve.reward, curve.success):
                    flat_rows.append((scheme, i, s, report_mod.format_float(r),
                                      report_mod.format_float(sr)))
        report_mod.write_csv(out / "flat_curves.csv",
                             ["scheme", "seed", "env_steps", "reward", "success_rate"],
                             flat_rows)
    report_mod.write_csv(out / "curves.csv",
                         ["scheme", "seed", "env_steps", "reward", "success_rate"],
                         rows)
    table = compare_sample_efficiency(curves, h.success_threshold,
                                      reference=schemes[0])
    report_mod.write_csv(out / "ratios.csv",
                         ["scheme", "median_steps", "ratio_vs_reference"],
                         [(s, t["label"],
                           report_mod.format_float(t["ratio_vs_reference"])
                           if t["ratio_vs_reference"] else "not reached")
                          for s, t in table.items()])
    artifacts.write_manifest(
        cfg.out, "hrl", seed=cfg.seed, config_hash=config_hash(cfg),
        inputs={"bundle": artifacts.manifest_ref(cfg.out, "bundle"),
                "maps": artifacts.manifest_ref(cfg.out, "maps")},
        wall_time_s=time.time() - t0,
        extra={"schemes": schemes, "table": {k: v["label"] for k, v in table.items()}})
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    out = Path(cfg.out) / "report"
    out.mkdir(parents=True, exist_ok=True)
    seen_seeds = set()
    sections = []
    explore_csv = Path(cfg.out) / "explore" / "report.csv"
    if explore_csv.exists():
        manifest = artifacts.load_manifest(cfg.out, "explore", "report")
        seen_seeds.add(manifest["seed"])
        values: dict[str, dict[str, float]] = {}
        import csv as _csv
        with explore_csv.open() as f:
            for row in _csv.DictReader(f):
                values.setdefault(row["method"], {})[row["metric"]] = float(row["value"])

        class Row:
            def __init__(self, d):
                self.n_samples_used = int(d.get("n_samples", 0))
                self.adt = d.get("adt", float("nan"))
                self.max_distance = d.get("max_distance", float("nan"))
                self.collision_rate = d.get("collision_rate", float("nan"))
        reports = {m: Row(d) for m, d in values.items()}
        absent = [m for m in STANDARD_METHODS if m not in reports]
        sections.append("Exploration benchmark\n"
                        + report_mod.exploration_table(reports, absent=absent))
    else:
        sections.append("Exploration benchmark\n  (not run)\n")
    hrl_csv = Path(cfg.out) / "hrl" / "curves.csv"
    if hrl_csv.exists():
        manifest = artifacts.load_manifest(cfg.out, "hrl", "report")
        seen_seeds.add(manifest["seed"])
        import csv as _csv
        per: dict[tuple[str, str], dict[str, list]] = {}
        with hrl_csv.open() as f:
            for row in _csv.DictReader(f):
                key = (row["scheme"], row["seed"])
                per.setdefault(key, {"x": [], "y": []})
                per[key]["x"].append(int(row["env_steps"]))
                per[key]["y"].append(float(row["success_rate"]))
        curves = [{"label": f"{s} s{i}", "x": d["x"], "y": d["y"]}
                  for (s, i), d in sorted(per.items())]
        (out / "hrl_curves.svg").write_text(
            report_mod.curves_svg(curves, "env steps", "success rate",
                                  "HRL fine-tuning"), encoding="utf-8")
        ratios = (Path(cfg.out) / "hrl" / "ratios.csv").read_text(encoding="utf-8")
        sections.append("HRL sample efficiency (ratios.csv)\n" + ratios)
    if len(seen_seeds) > 1 and not args.force:
        raise VmsrError(f"artifacts from different master seeds {sorted(seen_seeds)}; "
                        "pass --force to combine")
    table = "\n".join(sections) + "\n"
    (out / "table.txt").write_text(table, encoding="utf-8")
    print(table)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vmsr",
                                     description="navigation subroutine pipeline")
    parser.add_argument("--config", type=str, default=None, help="config file path")
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--out", type=str, default=None, help="override output dir")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker processes for parallel stages")
    parser.add_argument("--force", action="store_true",
                        help="skip provenance chain checks")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-envs")
    sub.add_parser("collect")
    sub.add_parser("train-inverse")
    sub.add_parser("label")
    sub.add_parser("train-subroutines")
    p = sub.add_parser("explore")
    p.add_argument("--methods", type=str, default=",".join(STANDARD_METHODS))
    sub.add_parser("iou")
    p = sub.add_parser("ablate")
    p.add_argument("--axis", type=str, default="affordance_vs_random",
                   choices=["n_interaction_samples", "clip_length", "n_subroutines",
                            "affordance_vs_random"])
    p = sub.add_parser("hrl")
    p.add_argument("--schemes", type=str, default="vmsr,random,encoder_features")
    p.add_argument("--flat", action="store_true",
                   help="also run the flat AreaGoal comparison")
    sub.add_parser("report")
    return parser


COMMANDS = {
    "gen-envs": cmd_gen_envs,
    "collect": cmd_collect,
    "train-inverse": cmd_train_inverse,
    "label": cmd_label,
    "train-subroutines": cmd_train_subroutines,
    "explore": cmd_explore,
    "iou": cmd_iou,
    "ablate": cmd_ablate,
    "hrl": cmd_hrl,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except VmsrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
