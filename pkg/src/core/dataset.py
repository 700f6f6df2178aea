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


"""Supervised IRM dataset generation."""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from tqdm import tqdm
from tqdm.contrib.concurrent import process_map

from src.core.config import RunConfig
from src.core.errors import SamplingError
from src.core.geometry import rasterize, sample_scene
from src.core.kinematics import compute_irm
from src.models.irm import IRMLabel
from src.models.scene import OrthoProjection, SceneSpec
from src.utils.random_utils import spawn_seeds


logger = logging.getLogger(__name__)


@dataclass
class Sample:
    scene: SceneSpec
    projection: OrthoProjection
    irm: IRMLabel

    def as_tuple(self) -> Tuple[SceneSpec, OrthoProjection, IRMLabel]:
        return self.scene, self.projection, self.irm


def label_scene(scene: SceneSpec, run_config: RunConfig) -> Sample:
    """Rasterize a scene (robot drawn) and compute its ground-truth IRM."""
    robot = run_config.robot.to_model()
    projection = rasterize(scene, run_config.scene.grid_size, robot)
    irm = compute_irm(scene, robot, run_config.scene.num_orientations, projection, run_config.irm.stride)
    return Sample(scene, projection, irm)


def generate_sample(sample_seed: int, run_config: RunConfig) -> Sample:
    """Draw scenes from ``sample_seed``'s child seeds until one has a non-empty IRM.

    Raises:
        SamplingError: If every retry yields an empty IRM
    """
    robot = run_config.robot.to_model()
    for attempt_seed in spawn_seeds(sample_seed, run_config.irm.max_retries):
        scene = sample_scene(attempt_seed, run_config.scene, robot)
        sample = label_scene(scene, run_config)
        if not sample.irm.is_empty:
            return sample
        logger.debug(f"Scene {attempt_seed} has no valid base pose, resampling")
    raise SamplingError(
        f"No scene with a valid base pose for seed {sample_seed} after {run_config.irm.max_retries} attempts"
    )


def _generate_star(args: Tuple[int, RunConfig]) -> Sample:
    return generate_sample(*args)


def sample_dataset(n: int, seed: int, run_config: RunConfig, workers: int = 1) -> List[Sample]:
    """Generate ``n`` labelled scenes with independent per-sample seeds.

    Args:
        n: Number of samples
        seed: Root seed; sample ``i`` uses the ``i``-th spawned child
        run_config: Full run configuration
        workers: Process count; results are ordered by sample index either way

    Returns:
        List of samples, each with at least one positive IRM cell

    Raises:
        ValueError: If ``n < 1``
        SamplingError: If a sample exhausts its retry budget
    """
    if n < 1:
        raise ValueError(f"Dataset size must be >= 1, got {n}")
    jobs = [(sample_seed, run_config) for sample_seed in spawn_seeds(seed, n)]
    if workers > 1:
        samples = process_map(_generate_star, jobs, max_workers=workers, chunksize=1, desc="IRM dataset")
    else:
        samples = [_generate_star(job) for job in tqdm(jobs, desc="IRM dataset")]

    fraction = float(np.mean([sample.irm.labels.mean() for sample in samples]))
    logger.info(f"Generated {n} IRM samples (seed {seed}), mean positive fraction {fraction:.4f}")
    return samples


def _label_star(args: Tuple[SceneSpec, RunConfig]) -> Sample:
    return label_scene(*args)


def label_scenes(scenes: Sequence[SceneSpec], run_config: RunConfig, workers: int = 1) -> List[Sample]:
    """Label given scenes in order; scenes without a valid base pose are kept and counted."""
    jobs = [(scene, run_config) for scene in scenes]
    if workers > 1:
        samples = process_map(_label_star, jobs, max_workers=workers, chunksize=1, desc="label scenes")
    else:
        samples = [_label_star(job) for job in tqdm(jobs, desc="label scenes")]
    empty = sum(sample.irm.is_empty for sample in samples)
    if empty:
        logger.warning(f"{empty} of {len(samples)} scenes have no valid base pose")
    return samples


def split_dataset(samples: Sequence[Sample], validation_fraction: float) -> Tuple[List[Sample], List[Sample]]:
    """Deterministic tail split; the training part always keeps at least one sample."""
    n_validation = min(int(round(len(samples) * validation_fraction)), len(samples) - 1)
    cut = len(samples) - n_validation
    return list(samples[:cut]), list(samples[cut:])
