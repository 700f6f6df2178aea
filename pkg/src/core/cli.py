# Copyright (C) 2024-2026 Kenes Yerassyl
# This file is part of BasePose Lab.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program. If not, see <https://www.gnu.org/licenses/>.


"""Command-line surface: ``basepose <subcommand> [options]``.

Exit codes: 0 on success, 2 on usage or configuration errors, 1 on runtime failures.
"""

import argparse
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from src.core.baselines import FixedPoseSet, fbp_select, nbs_select, pbs_select
from src.core.config import RunConfig
from src.core.config_manager import config_manager
from src.core.dataset import Sample, label_scene, label_scenes, sample_dataset
from src.core.dataset_streamer import IRMDatasetStreamer
from src.core.errors import BasePoseError, ConfigError, MissingWeightsError
from src.core.evaluation import METHODS, evaluate, run_ablation
from src.core.geometry import sample_scene
from src.core.grid import world_to_grid
from src.core.navigation import build_costmap, path_to
from src.core.obp_policy import ObpEnvironment, train_obp
from src.core.persistence import (WeightStore, load_scenes, save_irm_dataset, save_json,
                                  save_scenes)
from src.core.transporter import extract_candidates, load_policy, train_irm
from src.utils.random_utils import resolve_seed, spawn_seeds
from src.views.render import write_render_set

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="YAML config file or preset name (desk, full, tiny)")
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help="Override one config value; repeatable")
    common.add_argument('--seed', type=int, help="Run seed (falls back to $BASEPOSE_SEED, then the config)")
    common.add_argument('--workers', type=int, help="Processes for scene-parallel stages")

    parser = argparse.ArgumentParser(prog='basepose', description="Two-stage base pose selection for grasping")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-scenes', parents=[common], help="Sample random scenes to JSONL")
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--out', required=True)

    p = sub.add_parser('gen-irm', parents=[common], help="Label scenes with ground-truth IRMs (IRMD)")
    p.add_argument('--scenes', help="JSONL scenes to label; sampled afresh when omitted")
    p.add_argument('--n', type=int, help="Number of sampled scenes (default irm.dataset_size)")
    p.add_argument('--out', required=True)

    p = sub.add_parser('train-irm', parents=[common], help="Train the stage-1 transporter")
    p.add_argument('--data', required=True, help="IRMD dataset")
    p.add_argument('--out', required=True, help="Weight archive to write")
    p.add_argument('--metrics', help="Per-epoch CSV")
    p.add_argument('--plain', action='store_true', help="Train the parameter-matched plain U-Net instead")

    p = sub.add_parser('train-obp', parents=[common], help="Train the stage-2 selection policy")
    p.add_argument('--out', required=True, help="Weight archive to write")
    p.add_argument('--data', help="IRMD dataset used as the scene pool; sampled afresh when omitted")
    p.add_argument('--irm-weights', help="Stage-1 weights (required when obp.irm_source is 'learned')")
    p.add_argument('--log', help="Per-episode CSV")

    p = sub.add_parser('eval', parents=[common], help="Compare selectors on random scenes")
    p.add_argument('--method', action='append', choices=METHODS, help="Method to evaluate; repeatable")
    p.add_argument('--scenes', help="JSONL scenes (labelled on the fly)")
    p.add_argument('--irm', help="IRMD dataset providing labelled scenes")
    p.add_argument('--n', type=int, help="Number of scenes (default eval.n_scenes)")
    p.add_argument('--weights', help="Stage-1 weights for the learned method")
    p.add_argument('--obp-weights', help="Stage-2 weights for the learned method")
    p.add_argument('--out', required=True, help="metrics.json to write")

    p = sub.add_parser('ablate', parents=[common], help="Paired matched-budget training runs")
    p.add_argument('--study', choices=('irm', 'obp'), required=True)
    p.add_argument('--seeds', type=int, help="Seeds per variant (default eval.ablation_seeds)")
    p.add_argument('--out', required=True, help="Output directory")

    p = sub.add_parser('render', parents=[common], help="Render a scene and its density or IRM channels")
    p.add_argument('--scene', required=True, metavar='FILE:INDEX', help="Scene as <jsonl>:<index>")
    p.add_argument('--density', help="Stage-1 weights; renders one image per orientation channel")
    p.add_argument('--irm', action='store_true', help="Render ground-truth IRM channels")
    p.add_argument('--paths', action='store_true', help="Overlay the A* path to each baseline's selection")
    p.add_argument('--out', required=True, help="Output directory")
    return parser


def load_run_config(args: argparse.Namespace) -> Tuple[RunConfig, int, int]:
    """Resolve the configuration, seed and worker count of a command."""
    if args.config is None:
        run_config = RunConfig.from_dict({})
    elif Path(args.config).exists():
        run_config = config_manager.load(args.config)
    else:
        run_config = config_manager.get_preset(args.config)
    if args.overrides:
        run_config = run_config.with_overrides(args.overrides)
    seed = resolve_seed(args.seed, run_config.seed)
    workers = args.workers if args.workers is not None else run_config.workers
    if workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {workers}")
    return run_config, seed, workers


def parse_scene_ref(ref: str) -> Tuple[Path, int]:
    """Split ``file.jsonl:3`` into path and index; a bare path means index 0."""
    path, sep, index = ref.rpartition(':')
    if not sep or not index.isdigit():
        return Path(ref), 0
    return Path(path), int(index)


def cmd_gen_scenes(args, run_config: RunConfig, seed: int, workers: int) -> None:
    robot = run_config.robot.to_model()
    scenes = [sample_scene(scene_seed, run_config.scene, robot) for scene_seed in spawn_seeds(seed, args.n)]
    save_scenes(args.out, scenes)


def cmd_gen_irm(args, run_config: RunConfig, seed: int, workers: int) -> None:
    if args.scenes:
        samples = label_scenes(load_scenes(args.scenes), run_config, workers)
    else:
        samples = sample_dataset(args.n or run_config.irm.dataset_size, seed, run_config, workers)
    save_irm_dataset(args.out, [(sample.scene, sample.irm) for sample in samples])


def cmd_train_irm(args, run_config: RunConfig, seed: int, workers: int) -> None:
    streamer = IRMDatasetStreamer(run_config)
    streamer.open(args.data)
    # CRITICAL: labels are read lazily during training, keep the file open until it ends
    try:
        train, validation = streamer.split(run_config.irm.validation_fraction)
        result = train_irm(train, run_config, seed, validation_samples=validation or None, plain=args.plain,
                           metrics_csv=args.metrics)
    finally:
        streamer.close()
    WeightStore(args.out).save(result.policy.state_dict())


def _load_samples(path: str, run_config: RunConfig) -> List[Sample]:
    streamer = IRMDatasetStreamer(run_config)
    streamer.open(path)
    try:
        # materialise before close(), the cache is dropped with the handle
        return [streamer[index] for index in range(len(streamer))]
    finally:
        streamer.close()


def cmd_train_obp(args, run_config: RunConfig, seed: int, workers: int) -> None:
    transporter = None
    if run_config.obp.irm_source == 'learned':
        if not args.irm_weights:
            raise MissingWeightsError("obp.irm_source 'learned' needs --irm-weights")
        transporter = load_policy(run_config, args.irm_weights)
    samples = None
    if args.data:
        samples = [sample for sample in _load_samples(args.data, run_config) if not sample.irm.is_empty]
    env = ObpEnvironment(run_config, seed, samples=samples, transporter=transporter, workers=workers)
    result = train_obp(env, run_config, seed, log_csv=args.log)
    WeightStore(args.out).save(result.policy.state_dict())


def cmd_eval(args, run_config: RunConfig, seed: int, workers: int) -> None:
    methods = args.method or list(run_config.eval.methods)
    samples = None
    if args.irm:
        samples = _load_samples(args.irm, run_config)
    elif args.scenes:
        samples = label_scenes(load_scenes(args.scenes), run_config, workers)
    n_scenes = args.n or (len(samples) if samples is not None else run_config.eval.n_scenes)
    report = evaluate(methods, n_scenes, seed, run_config, samples=samples, transporter_weights=args.weights,
                      obp_weights=args.obp_weights, workers=workers)
    save_json(args.out, report.to_dict())
    logger.info(f"Wrote evaluation report to {args.out}")


def cmd_ablate(args, run_config: RunConfig, seed: int, workers: int) -> None:
    report, runs = run_ablation(args.study, args.seeds or run_config.eval.ablation_seeds, run_config, seed, workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.summary.to_csv(out / 'summary.csv', index=False)
    report.curves.to_csv(out / 'curves.csv', index=False)
    for run in runs:
        run.log.to_csv(out / f"{run.variant}_seed{run.seed}.csv", index=False)
    logger.info(f"Wrote ablation results to {out}")


def cmd_render(args, run_config: RunConfig, seed: int, workers: int) -> None:
    path, index = parse_scene_ref(args.scene)
    scenes = load_scenes(path)
    if not 0 <= index < len(scenes):
        raise BasePoseError(f"Scene index {index} out of range for {path} ({len(scenes)} scenes)")
    sample = label_scene(scenes[index], run_config)
    K = run_config.scene.num_orientations
    robot = run_config.robot.to_model()
    out = Path(args.out)

    candidates, channels = None, None
    if args.density:
        policy = load_policy(run_config, args.density)
        channels = policy.predict(sample.projection, world_to_grid(sample.scene.robot_start, sample.projection, K))
        candidates = extract_candidates(channels, run_config.transporter.tau, run_config.transporter.max_candidates)

    paths = []
    if args.paths:
        costmap = build_costmap(sample.projection, robot, run_config.navigation.inflation_radius)
        snap = run_config.navigation.snap_radius_cells
        for selection in (pbs_select(sample.scene, robot, costmap, sample.irm, snap),
                          nbs_select(sample.scene, robot, costmap, sample.irm, snap)):
            if not selection.abstained:
                paths.append(path_to(costmap, sample.scene.robot_start, selection.pose, snap))
        fixed = fbp_select(sample.scene, robot, costmap, FixedPoseSet(run_config.eval.fbp_standoff), K, snap)
        if fixed.success:
            paths.append(path_to(costmap, sample.scene.robot_start, world_to_grid(fixed.pose, costmap, K), snap))
        paths = [p for p in paths if p is not None]

    write_render_set(out, sample.projection, channels, candidates, paths, K)
    if args.irm:
        write_render_set(out, sample.projection, sample.irm.labels.astype(float), None, paths, K,
                         prefix='irm', palette='gray')


COMMANDS = {
    'gen-scenes': cmd_gen_scenes,
    'gen-irm': cmd_gen_irm,
    'train-irm': cmd_train_irm,
    'train-obp': cmd_train_obp,
    'eval': cmd_eval,
    'ablate': cmd_ablate,
    'render': cmd_render,
}


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    # argparse exits on its own; usage errors map to 2, --help to 0
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2

    try:
        run_config, seed, workers = load_run_config(args)
        logger.info(f"{args.command}: seed {seed}, workers {workers}")
        # CRITICAL: ConfigError must be caught before BasePoseError, it is the only exit-2 failure
        COMMANDS[args.command](args, run_config, seed, workers)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return 2
    except (BasePoseError, OSError) as e:
        logger.exception(f"{args.command} failed: {e}")
        return 1
    return 0
