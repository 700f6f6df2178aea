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


"""Evaluation harness: run every selector on the same scenes and aggregate per-method statistics."""

import logging
import math
import time
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm
from tqdm.contrib.concurrent import process_map

from src.core.baselines import FixedPoseSet, fbp_select, irm_cells, nbs_select, pbs_select
from src.core.config import RunConfig, replace_section
from src.core.dataset import Sample, sample_dataset, split_dataset
from src.core.errors import AblationError, MissingWeightsError
from src.core.grid import grid_to_world, world_to_grid
from src.core.kinematics import compute_irm, pose_is_valid
from src.core.navigation import build_costmap, nav_cost, nav_costs
from src.core.obp_policy import ObpEnvironment, ObpPolicy, load_obp_policy, train_obp
from src.core.transporter import extract_candidates, load_policy, train_irm
from src.models.candidates import CandidateGraph
from src.models.report import ROW_COLUMNS, AblationReport, EvalReport, MethodStats, TrainingRun
from src.nn.layers import Module
from src.utils.random_utils import spawn_seeds

logger = logging.getLogger(__name__)

METHODS = ("fbp", "pbs", "nbs", "learned")


def load_learned(run_config: RunConfig, transporter_weights: Optional[Union[str, Path]],
                 obp_weights: Optional[Union[str, Path]]) -> Tuple[Module, ObpPolicy]:
    """Both stage checkpoints of the learned pipeline.

    Raises:
        MissingWeightsError: If either checkpoint is missing
    """
    for label, path in (("stage-1", transporter_weights), ("stage-2", obp_weights)):
        if path is None or not Path(path).exists():
            raise MissingWeightsError(f"The learned method needs {label} weights, got {path}")
    return load_policy(run_config, transporter_weights), load_obp_policy(run_config, obp_weights)


def evaluate_scene(index: int, sample: Sample, methods: Sequence[str], run_config: RunConfig,
                   learned: Optional[Tuple[Module, ObpPolicy]] = None) -> List[Dict]:
    """One row per method for a single scene.

    Planning time covers the selection call only; PBS and NBS include computing
    the IRM. Success means a feasible pose whose path length is within half a
    diagonal cell of the cheapest valid pose.
    """
    robot = run_config.robot.to_model()
    K = run_config.scene.num_orientations
    snap = run_config.navigation.snap_radius_cells
    scene, projection = sample.scene, sample.projection
    costmap = build_costmap(projection, robot, run_config.navigation.inflation_radius)
    reference_costs = nav_costs(costmap, scene.robot_start, irm_cells(sample.irm), snap)
    # An empty IRM has no reference pose, so nothing is a strict success.
    reference = float(reference_costs.min()) if reference_costs.size else -math.inf
    tolerance = costmap.half_diagonal

    rows = []
    for method in methods:
        started = time.perf_counter()
        pose, path, abstained = None, math.nan, False
        if method == "fbp":
            result = fbp_select(scene, robot, costmap, FixedPoseSet(run_config.eval.fbp_standoff), K, snap)
            elapsed = time.perf_counter() - started
            pose, path = result.pose, result.path_length
        elif method in ("pbs", "nbs"):
            irm = compute_irm(scene, robot, K, projection, run_config.irm.stride)
            selector = pbs_select if method == "pbs" else nbs_select
            selection = selector(scene, robot, costmap, irm, snap)
            elapsed = time.perf_counter() - started
            abstained = selection.abstained
            if not abstained:
                pose, path = grid_to_world(selection.pose, costmap, K), selection.nav_cost
        elif method == "learned":
            transporter, obp = learned
            robot_cell = world_to_grid(scene.robot_start, projection, K)
            density = transporter.predict(projection, robot_cell)
            candidates = extract_candidates(density, run_config.transporter.tau, run_config.transporter.max_candidates)
            choice = None
            if not candidates.is_empty:
                graph = CandidateGraph.build(candidates, scene.robot_start, robot_cell, projection.depth, K)
                _, k = obp.select(graph, mode="greedy")
                choice = candidates[k].pose
            elapsed = time.perf_counter() - started
            abstained = choice is None
            if not abstained:
                pose, path = grid_to_world(choice, costmap, K), nav_cost(costmap, scene.robot_start, choice, snap)
        else:
            raise ValueError(f"Unknown method {method!r}")

        if abstained:
            logger.warning(f"Scene {index}: {method} abstained")
        feasible = pose is not None and pose_is_valid(scene, robot, pose)
        rows.append({
            "scene": index, "method": method, "time_s": elapsed, "path_m": path,
            "success": bool(feasible and path <= reference + tolerance),
            "feasible": bool(feasible), "abstained": bool(abstained),
        })
    return rows


def _evaluate_star(job) -> List[Dict]:
    return evaluate_scene(*job)


def summarize(rows: pd.DataFrame) -> Dict[str, MethodStats]:
    """Per-method mean/std of time and path length plus success and abstention counts.

    Path statistics skip abstentions; standard deviations of a single scene are 0.
    """
    stats = {}
    for method, group in rows.groupby("method", sort=False):
        paths = group["path_m"].dropna()
        stats[method] = MethodStats(
            time_mean=float(group["time_s"].mean()),
            time_std=float(np.nan_to_num(group["time_s"].std())),
            path_mean=float(paths.mean()) if len(paths) else math.nan,
            path_std=float(np.nan_to_num(paths.std())) if len(paths) else math.nan,
            success_rate=float(group["success"].mean()),
            feasible_rate=float(group["feasible"].mean()),
            abstentions=int(group["abstained"].sum()),
            failures=int((~group["feasible"] & ~group["abstained"]).sum()),
            scenes=int(len(group)),
        )
    return stats


def evaluate(methods: Sequence[str], n_scenes: int, seed: int, run_config: RunConfig,
             samples: Optional[Sequence[Sample]] = None, transporter_weights: Optional[Union[str, Path]] = None,
             obp_weights: Optional[Union[str, Path]] = None, workers: int = 1) -> EvalReport:
    """Evaluate ``methods`` on ``n_scenes`` scenes with at least one valid base pose.

    Args:
        methods: Subset of ``fbp``, ``pbs``, ``nbs``, ``learned``
        n_scenes: Number of scenes (taken from ``samples`` when given, generated otherwise)
        seed: Seed of scene generation
        run_config: Full run configuration
        samples: Pre-labelled scenes; those without a valid pose are excluded
        transporter_weights: Stage-1 checkpoint for the learned method
        obp_weights: Stage-2 checkpoint for the learned method
        workers: Scene-parallel processes (forced to 1 when ``eval.serialize_timing``)

    Returns:
        EvalReport with per-scene rows and per-method aggregates

    Raises:
        ValueError: If a method is unknown
        MissingWeightsError: If ``learned`` is requested without both checkpoints
    """
    unknown = [method for method in methods if method not in METHODS]
    if unknown:
        raise ValueError(f"Unknown evaluation methods: {unknown}")
    learned = load_learned(run_config, transporter_weights, obp_weights) if "learned" in methods else None

    if samples is None:
        samples = sample_dataset(n_scenes, seed, run_config, workers)
    else:
        included = [sample for sample in samples if not sample.irm.is_empty]
        if len(included) < len(samples):
            logger.info(f"Excluded {len(samples) - len(included)} scenes without a valid base pose")
        samples = included[:n_scenes]

    if run_config.eval.serialize_timing:
        workers = 1
    jobs = [(index, sample, list(methods), run_config, learned) for index, sample in enumerate(samples)]
    if workers > 1:
        per_scene = process_map(_evaluate_star, jobs, max_workers=workers, chunksize=1, desc="evaluate")
    else:
        per_scene = [_evaluate_star(job) for job in tqdm(jobs, desc="evaluate")]

    rows = pd.DataFrame([row for scene_rows in per_scene for row in scene_rows], columns=ROW_COLUMNS)
    report = EvalReport(summarize(rows), len(samples), seed, run_config.to_dict(), rows)
    for method, stats in report.methods.items():
        logger.info(f"{method}: success {stats.success_rate:.3f}, path {stats.path_mean:.3f} m, "
                    f"time {stats.time_mean * 1000:.1f} ms")
    return report


# --- ablations --------------------------------------------------------------

def ablation_report(runs: Sequence[TrainingRun]) -> AblationReport:
    """Aggregate matched-budget training logs per variant across seeds.

    Raises:
        AblationError: With fewer than two runs, mismatched budgets or mixed metrics
    """
    if len(runs) < 2:
        raise AblationError(f"An ablation needs at least two runs, got {len(runs)}")
    budgets = sorted({run.budget for run in runs})
    if len(budgets) > 1:
        raise AblationError(f"Runs have mismatched budgets: {budgets}")
    if len({(run.step, run.metric) for run in runs}) > 1:
        raise AblationError("Runs report different metrics")

    step, metric = runs[0].step, runs[0].metric
    finals = pd.DataFrame([
        {"variant": run.variant, "seed": run.seed,
         "final": float(run.log[metric].iloc[-1]) if len(run.log) else math.nan}
        for run in runs
    ])
    summary = (finals.groupby("variant", sort=False)["final"]
               .agg(final_mean="mean", final_min="min", final_max="max", seeds="count")
               .reset_index())
    curves = pd.concat([run.log[[step, metric]].assign(variant=run.variant, seed=run.seed) for run in runs],
                       ignore_index=True)
    curves = (curves.groupby(["variant", step], sort=False)[metric]
              .agg(["mean", "min", "max"])
              .reset_index())
    return AblationReport(summary, curves, list(summary["variant"]))


def run_ablation(study: str, seeds: int, run_config: RunConfig, seed: int,
                 workers: int = 1) -> Tuple[AblationReport, List[TrainingRun]]:
    """Paired trainings on identical data and seeds.

    ``irm`` compares the equivariant transporter with the parameter-matched plain
    U-Net on held-out IoU; ``obp`` compares the greedy baseline with plain
    REINFORCE on rolling success.
    """
    run_seeds = spawn_seeds(seed, seeds)
    runs: List[TrainingRun] = []
    if study == "irm":
        samples = sample_dataset(run_config.irm.dataset_size, seed, run_config, workers)
        train, validation = split_dataset(samples, run_config.irm.validation_fraction)
        for variant, plain in (("equivariant", False), ("plain", True)):
            for run_seed in run_seeds:
                result = train_irm(train, run_config, run_seed, validation_samples=validation, plain=plain)
                runs.append(TrainingRun(variant, run_seed, run_config.transporter.epochs, result.history,
                                        "epoch", "iou"))
    elif study == "obp":
        pool = ObpEnvironment(run_config, seed, workers=workers).samples
        for variant in ("greedy", "none"):
            variant_config = replace_section(run_config, obp=replace(run_config.obp, baseline=variant))
            for run_seed in run_seeds:
                env = ObpEnvironment(variant_config, seed, samples=pool)
                result = train_obp(env, variant_config, run_seed)
                runs.append(TrainingRun(variant, run_seed, variant_config.obp.interactions, result.log,
                                        "episode", "rolling_success"))
    else:
        raise ValueError(f"Unknown ablation study {study!r}; expected 'irm' or 'obp'")

    report = ablation_report(runs)
    logger.info(f"Ablation {study}:\n{report.summary.to_string(index=False)}")
    return report, runs
