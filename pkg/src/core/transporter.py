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


"""Stage-1 policy: transporter correlation of robot-crop features against scene features.

``irm_forward`` returns ``K`` density maps. Channel ``k`` of the raw correlation
scores the robot rotated by ``2*pi*k/K`` relative to its current heading; the
head rolls these channels by the robot's heading bin so the output is indexed by
world-frame orientation, like :class:`IRMLabel`.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.core.config import RunConfig, TransporterConfig
from src.core.equivariant import (
    DilatedEquivariantEncoder, EquivariantUNet, rotate_group_feature,
)
from src.core.errors import ShapeError
from src.core.geometry import robot_query_crop
from src.core.grid import world_to_grid
from src.core.persistence import WeightStore
from src.models.candidates import Candidate, CandidateSet
from src.models.irm import IRMLabel
from src.models.scene import SEMANTIC_CLASSES, GridPose, OrthoProjection
from src.nn import functional as F
from src.nn.layers import Conv2d, Module, ModuleList, Parameter
from src.nn.optim import Adam
from src.nn.tensor import Tensor

logger = logging.getLogger(__name__)

IN_CHANNELS = len(SEMANTIC_CLASSES) + 1
PARAM_MATCH_TOLERANCE = 0.10


class _CorrelationHead:
    """Shared transporter logic: correlate rotated query kernels with key features."""

    num_orientations: int
    crop_size: int
    head_bias: Parameter

    def query_kernels(self, query_features: Tensor) -> Tensor:
        raise NotImplementedError

    def key_features(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def query_features(self, crop: Tensor) -> Tensor:
        raise NotImplementedError

    def irm_forward(self, proj: OrthoProjection, robot_cell: GridPose) -> Tensor:
        """Density maps ``[K, H, W]`` in (0, 1) for the robot standing at ``robot_cell``."""
        if (proj.semantic.shape[0] + 1) != IN_CHANNELS:
            raise ShapeError(f"Expected {IN_CHANNELS - 1} semantic channels, got {proj.semantic.shape[0]}")
        dtype = self.head_bias.dtype
        scene = Tensor(proj.stacked(), dtype=dtype)
        crop = Tensor(robot_query_crop(proj, (robot_cell.u, robot_cell.v), self.crop_size).data, dtype=dtype)
        key = self.key_features(scene)
        kernels = self.query_kernels(self.query_features(crop))
        key = key.reshape(-1, *key.shape[-2:])
        scale = 1.0 / math.sqrt(kernels.shape[1] * self.crop_size * self.crop_size)
        logits = F.conv2d(key, kernels, padding=self.crop_size // 2) * scale + self.head_bias
        world_frame = F.roll(logits, robot_cell.k % self.num_orientations, axis=0)
        return F.sigmoid(world_frame)

    def predict(self, proj: OrthoProjection, robot_cell: GridPose) -> np.ndarray:
        return self.irm_forward(proj, robot_cell).data.copy()


class TransporterPolicy(Module, _CorrelationHead):
    """C_n-equivariant key encoder (U-Net) and query encoder (dilated) joined by cross-correlation."""

    def __init__(self, cfg: TransporterConfig, num_orientations: int, crop_size: int, rng: np.random.Generator):
        super().__init__()
        if cfg.n_rotations % num_orientations:
            raise ValueError(f"n_rotations={cfg.n_rotations} must be a multiple of K={num_orientations}")
        self.n = cfg.n_rotations
        self.num_orientations = num_orientations
        self.crop_size = crop_size
        self.key = EquivariantUNet(IN_CHANNELS, cfg.key_widths, cfg.feature_channels, self.n, cfg.kernel_size, rng)
        self.query = DilatedEquivariantEncoder(IN_CHANNELS, cfg.query_widths, cfg.feature_channels,
                                               self.n, cfg.kernel_size, rng)
        self.head_bias = Parameter(np.zeros(1))

    def key_features(self, x: Tensor) -> Tensor:
        return self.key(x)

    def query_features(self, crop: Tensor) -> Tensor:
        return self.query(crop)

    def query_kernels(self, query_features: Tensor) -> Tensor:
        step = self.n // self.num_orientations
        kernels = [rotate_group_feature(query_features, k * step) for k in range(self.num_orientations)]
        return F.stack([kernel.reshape(-1, self.crop_size, self.crop_size) for kernel in kernels])


class PlainUNet(Module):
    """Ordinary convolutional U-Net with the same layout as :class:`EquivariantUNet`."""

    def __init__(self, in_channels: int, widths: Sequence[int], out_channels: int,
                 kernel_size: int, rng: np.random.Generator):
        super().__init__()
        widths = list(widths)
        self.encoder = ModuleList([ModuleList([Conv2d(in_channels, widths[0], kernel_size, rng),
                                               Conv2d(widths[0], widths[0], kernel_size, rng)])])
        for previous, width in zip(widths[:-1], widths[1:]):
            self.encoder.append(ModuleList([Conv2d(previous, width, kernel_size, rng),
                                            Conv2d(width, width, kernel_size, rng)]))
        self.decoder = ModuleList(
            Conv2d(widths[i] + widths[i + 1], widths[i], kernel_size, rng) for i in range(len(widths) - 1)
        )
        self.head = Conv2d(widths[0], out_channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        skips: List[Tensor] = []
        h = x
        for index, level in enumerate(self.encoder):
            if index:
                h = F.max_pool2(h)
            h = F.relu(level[1](F.relu(level[0](h))))
            skips.append(h)
        for index in reversed(range(len(self.decoder))):
            h = F.relu(self.decoder[index](F.concat([skips[index], F.nearest_upsample2(h)], axis=0)))
        return self.head(h)


class PlainDilatedEncoder(Module):
    def __init__(self, in_channels: int, widths: Sequence[int], out_channels: int,
                 kernel_size: int, rng: np.random.Generator):
        super().__init__()
        widths = list(widths)
        self.layers = ModuleList([Conv2d(in_channels, widths[0], kernel_size, rng)])
        for level, (previous, width) in enumerate(zip(widths[:-1], widths[1:])):
            self.layers.append(Conv2d(previous, width, kernel_size, rng, dilation=2 ** (level + 1)))
        self.head = Conv2d(widths[-1], out_channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for layer in self.layers:
            h = F.relu(layer(h))
        return self.head(h)


class PlainUNetPolicy(Module, _CorrelationHead):
    """Non-equivariant comparator: the query encoder emits one kernel per orientation directly."""

    def __init__(self, key_widths: Sequence[int], query_widths: Sequence[int], feature_channels: int,
                 kernel_size: int, num_orientations: int, crop_size: int, rng: np.random.Generator):
        super().__init__()
        self.num_orientations = num_orientations
        self.crop_size = crop_size
        self.feature_channels = feature_channels
        self.key = PlainUNet(IN_CHANNELS, key_widths, feature_channels, kernel_size, rng)
        self.query = PlainDilatedEncoder(IN_CHANNELS, query_widths, feature_channels * num_orientations,
                                         kernel_size, rng)
        self.head_bias = Parameter(np.zeros(1))

    def key_features(self, x: Tensor) -> Tensor:
        return self.key(x)

    def query_features(self, crop: Tensor) -> Tensor:
        return self.query(crop)

    def query_kernels(self, query_features: Tensor) -> Tensor:
        return query_features.reshape(self.num_orientations, self.feature_channels, self.crop_size, self.crop_size)


def _conv_params(c_in: int, c_out: int, k: int) -> int:
    return c_out * c_in * k * k + c_out


def plain_param_count(key_widths: Sequence[int], query_widths: Sequence[int], feature_channels: int,
                      kernel_size: int, num_orientations: int) -> int:
    k, w, q = kernel_size, list(key_widths), list(query_widths)
    total = _conv_params(IN_CHANNELS, w[0], k) + _conv_params(w[0], w[0], k)
    total += sum(_conv_params(a, b, k) + _conv_params(b, b, k) for a, b in zip(w[:-1], w[1:]))
    total += sum(_conv_params(w[i] + w[i + 1], w[i], k) for i in range(len(w) - 1))
    total += _conv_params(w[0], feature_channels, 1)
    total += _conv_params(IN_CHANNELS, q[0], k) + sum(_conv_params(a, b, k) for a, b in zip(q[:-1], q[1:]))
    total += _conv_params(q[-1], feature_channels * num_orientations, 1)
    return total + 1


def matched_plain_widths(cfg: TransporterConfig, num_orientations: int, target: int):
    """Scale both width lists until the plain model's parameter count is closest to ``target``."""
    best = None
    for scale in np.arange(0.25, 8.0, 0.01):
        key_widths = [max(1, int(round(width * scale))) for width in cfg.key_widths]
        query_widths = [max(1, int(round(width * scale))) for width in cfg.query_widths]
        count = plain_param_count(key_widths, query_widths, cfg.feature_channels, cfg.kernel_size, num_orientations)
        gap = abs(count / target - 1.0)
        if best is None or gap < best[0]:
            best = (gap, key_widths, query_widths, count)
    gap, key_widths, query_widths, count = best
    if gap > PARAM_MATCH_TOLERANCE:
        logger.warning(f"Plain U-Net has {count} parameters, {gap:.1%} away from the target {target}")
    return key_widths, query_widths


def build_policy(run_config: RunConfig, seed: int, plain: bool = False) -> Module:
    """Construct the stage-1 policy described by ``run_config`` with weights drawn from ``seed``."""
    tcfg = run_config.transporter
    K, crop = run_config.scene.num_orientations, run_config.scene.crop_size
    equivariant = TransporterPolicy(tcfg, K, crop, np.random.default_rng(seed))
    if not plain:
        return equivariant
    key_widths, query_widths = matched_plain_widths(tcfg, K, equivariant.num_parameters())
    policy = PlainUNetPolicy(key_widths, query_widths, tcfg.feature_channels, tcfg.kernel_size, K, crop,
                             np.random.default_rng(seed))
    logger.info(f"Plain U-Net widths {key_widths}/{query_widths}: {policy.num_parameters()} parameters "
                f"vs {equivariant.num_parameters()} equivariant")
    return policy


def load_policy(run_config: RunConfig, path: Union[str, Path], plain: bool = False) -> Module:
    policy = build_policy(run_config, seed=0, plain=plain)
    policy.load_state_dict(WeightStore(path).load())
    logger.info(f"Loaded stage-1 weights from {path}")
    return policy


# --- metrics and candidates -------------------------------------------------

@dataclass
class SegMetrics:
    iou: float
    dice: float
    precision: float
    recall: float

    def as_dict(self) -> Dict[str, float]:
        return {"iou": self.iou, "dice": self.dice, "precision": self.precision, "recall": self.recall}


def _ratio(numerator: float, denominator: float) -> float:
    return float(numerator) / float(denominator) if denominator > 0 else 0.0


def metrics_from_counts(tp: int, fp: int, fn: int) -> SegMetrics:
    return SegMetrics(
        iou=_ratio(tp, tp + fp + fn),
        dice=_ratio(2 * tp, 2 * tp + fp + fn),
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
    )


def confusion_counts(pred: np.ndarray, label: np.ndarray, tau: float):
    predicted = np.asarray(pred) >= tau
    truth = np.asarray(label).astype(bool)
    if predicted.shape != truth.shape:
        raise ShapeError(f"Prediction {predicted.shape} and label {truth.shape} differ")
    return (int(np.count_nonzero(predicted & truth)), int(np.count_nonzero(predicted & ~truth)),
            int(np.count_nonzero(~predicted & truth)))


def seg_metrics(pred: np.ndarray, label: Union[IRMLabel, np.ndarray], tau: float = 0.5) -> SegMetrics:
    """IoU, Dice, precision and recall of ``pred >= tau`` against the label over all K*H*W cells."""
    labels = label.labels if isinstance(label, IRMLabel) else label
    return metrics_from_counts(*confusion_counts(pred, labels, tau))


def extract_candidates(density: np.ndarray, tau: float, max_n: int) -> CandidateSet:
    """Cells scoring at least ``tau``, best first, ties by (k, v, u), at most ``max_n``."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    density = np.asarray(density)
    cells = np.argwhere(density >= tau)
    if not len(cells):
        return CandidateSet()
    scores = density[tuple(cells.T)]
    # lexsort: last key is primary; argwhere order already is (k, v, u)
    order = np.lexsort((np.arange(len(cells)), -scores))[:max_n]
    return CandidateSet([Candidate(GridPose(int(cells[i, 2]), int(cells[i, 1]), int(cells[i, 0])), float(scores[i]))
                         for i in order])


# --- training ---------------------------------------------------------------

@dataclass
class IrmTrainingResult:
    policy: Module
    history: pd.DataFrame


def robot_cell_of(sample, num_orientations: int) -> GridPose:
    return world_to_grid(sample.scene.robot_start, sample.projection, num_orientations)


def evaluate_policy(policy: Module, samples: Sequence, tau: float) -> SegMetrics:
    """Metrics pooled over every cell of every sample."""
    tp = fp = fn = 0
    for index in range(len(samples)):
        sample = samples[index]
        density = policy.predict(sample.projection, robot_cell_of(sample, policy.num_orientations))
        counts = confusion_counts(density, sample.irm.labels, tau)
        tp, fp, fn = tp + counts[0], fp + counts[1], fn + counts[2]
    return metrics_from_counts(tp, fp, fn)


def train_irm(train_samples: Sequence, run_config: RunConfig, seed: int,
              validation_samples: Optional[Sequence] = None, policy: Optional[Module] = None,
              plain: bool = False, metrics_csv: Optional[Union[str, Path]] = None,
              checkpoint: Optional[Union[str, Path]] = None) -> IrmTrainingResult:
    """Supervised training of the stage-1 policy with Adam on the MSE between density and label.

    Args:
        train_samples: Indexable samples exposing ``scene``, ``projection`` and ``irm``
        run_config: Run configuration (transporter section drives the budget)
        seed: Seed of weight initialisation and batch shuffling
        validation_samples: Held-out samples for the per-epoch metrics (training samples otherwise)
        policy: Model to continue training; a fresh one is built when omitted
        plain: Build the parameter-matched plain U-Net instead of the equivariant model
        metrics_csv: Per-epoch CSV (epoch, loss, iou, dice, precision, recall), appended as each epoch ends
        checkpoint: WeightStore path written after every epoch

    Returns:
        IrmTrainingResult with the trained policy and the per-epoch history

    Raises:
        ValueError: If the training set is empty
        ShapeError: If a label does not match the model's output shape
    """
    if len(train_samples) == 0:
        raise ValueError("Cannot train on an empty dataset")
    tcfg = run_config.transporter
    policy = policy or build_policy(run_config, seed, plain=plain)
    optimizer = Adam(policy.parameters(), lr=tcfg.learning_rate)
    rng = np.random.default_rng(seed)
    K = policy.num_orientations
    monitor = validation_samples if validation_samples else train_samples

    columns = ["epoch", "loss", "iou", "dice", "precision", "recall"]
    if metrics_csv is not None:
        pd.DataFrame(columns=columns).to_csv(metrics_csv, index=False)

    rows = []
    for epoch in tqdm(range(1, tcfg.epochs + 1), desc="train-irm"):
        order = rng.permutation(len(train_samples))
        epoch_loss = 0.0
        for start in range(0, len(order), tcfg.batch_size):
            batch = order[start:start + tcfg.batch_size]
            optimizer.zero_grad()
            for index in batch:
                sample = train_samples[int(index)]
                density = policy.irm_forward(sample.projection, robot_cell_of(sample, K))
                if density.shape != sample.irm.labels.shape:
                    raise ShapeError(f"Model output {density.shape} does not match label {sample.irm.labels.shape}")
                loss = F.mse_loss(density, sample.irm.labels.astype(density.dtype))
                (loss * (1.0 / len(batch))).backward()
                epoch_loss += loss.item()
            optimizer.step()

        metrics = evaluate_policy(policy, monitor, tcfg.tau)
        rows.append({"epoch": epoch, "loss": epoch_loss / len(order), **metrics.as_dict()})
        logger.info(f"Epoch {epoch}: loss {rows[-1]['loss']:.5f}, IoU {metrics.iou:.4f}, Dice {metrics.dice:.4f}")
        if metrics_csv is not None:
            pd.DataFrame(rows[-1:], columns=columns).to_csv(metrics_csv, mode="a", header=False, index=False)
        if checkpoint is not None:
            WeightStore(checkpoint).save(policy.state_dict())

    history = pd.DataFrame(rows, columns=columns)
    if metrics_csv is not None:
        logger.info(f"Wrote stage-1 training metrics to {metrics_csv}")
    return IrmTrainingResult(policy, history)
