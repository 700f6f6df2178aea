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


"""Stage-2 policy: choose the navigation-cheapest base pose among stage-1 candidates.

A graph-attention encoder embeds every candidate in the context of the others,
the robot node and a depth-image embedding; a per-node MLP scores candidates and
a softmax turns scores into selection likelihoods. Training is single-step
REINFORCE with a greedy (minimum navigation cost) baseline and a log-scaled
advantage.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.core.config import ObpConfig, RewardConfig, RunConfig
from src.core.dataset import Sample, sample_dataset
from src.core.grid import grid_to_world, world_to_grid
from src.core.kinematics import collision_free, collision_free_batch, ik_feasible, ik_feasible_batch
from src.core.navigation import NavCostmap, build_costmap, distance_field, lookup_cost, nav_cost, start_cell
from src.core.persistence import WeightStore
from src.core.transporter import extract_candidates
from src.models.candidates import CANDIDATE_FEATURES, ROBOT_FEATURES, Candidate, CandidateGraph, CandidateSet
from src.models.robot import RobotModel
from src.models.scene import GridPose, SceneSpec
from src.nn import functional as F
from src.nn.layers import Conv2d, Linear, Module, ModuleList, Parameter, he_normal
from src.nn.optim import Adam
from src.nn.tensor import Tensor
from src.utils.random_utils import spawn_seeds

logger = logging.getLogger(__name__)


# --- networks ---------------------------------------------------------------

class DepthEncoder(Module):
    """Four stride-2 convolutions, global average pooling and a linear map to the embedding."""

    def __init__(self, channels: Sequence[int], embed_dim: int, rng: np.random.Generator):
        super().__init__()
        widths = [1] + list(channels)
        self.convs = ModuleList(Conv2d(a, b, 3, rng, stride=2, padding=1) for a, b in zip(widths[:-1], widths[1:]))
        self.project = Linear(widths[-1], embed_dim, rng)

    def forward(self, depth: Tensor) -> Tensor:
        h = depth.reshape(1, *depth.shape[-2:])
        for conv in self.convs:
            h = F.relu(conv(h))
        return self.project(F.global_avg_pool(h))


def depth_encode(depth: np.ndarray, encoder: DepthEncoder) -> Tensor:
    return encoder(Tensor(depth, dtype=encoder.project.weight.dtype))


def _attention(source_scores: Tensor, target_scores: Tensor, slope: float) -> Tensor:
    """Masked attention over all other nodes: alpha[i, j] for j != i, rows summing to 1 (or 0 when N = 1)."""
    count = source_scores.shape[0]
    logits = F.leaky_relu(source_scores + target_scores.reshape(1, count), slope)
    return F.softmax(logits, axis=1, mask=~np.eye(count, dtype=bool))


class CandidateAttentionLayer(Module):
    """First layer: ``h_i = W_cbp a_i + W_r p_r + W_d mu + sum_j alpha_ij W_bp a_j`` over j != i."""

    def __init__(self, embed_dim: int, rng: np.random.Generator, slope: float):
        super().__init__()
        self.slope = slope
        self.w_cbp = Linear(CANDIDATE_FEATURES, embed_dim, rng)
        self.w_bp = Linear(CANDIDATE_FEATURES, embed_dim, rng, bias=False)
        self.w_r = Linear(ROBOT_FEATURES, embed_dim, rng, bias=False)
        self.w_d = Linear(embed_dim, embed_dim, rng, bias=False)
        self.att_self = Parameter(he_normal(rng, (embed_dim, 1), embed_dim))
        self.att_neighbor = Parameter(he_normal(rng, (embed_dim, 1), embed_dim))

    def forward(self, candidates: Tensor, robot: Tensor, depth_embedding: Tensor) -> Tuple[Tensor, Tensor]:
        own = self.w_cbp(candidates)
        messages = self.w_bp(candidates)
        alpha = _attention(own @ self.att_self, messages @ self.att_neighbor, self.slope)
        context = self.w_r(robot) + self.w_d(depth_embedding)
        return own + context + alpha @ messages, alpha


class GraphAttentionLayer(Module):
    """Standard attention layer over candidate embeddings: ``h'_i = W h_i + sum_j alpha_ij W h_j``."""

    def __init__(self, embed_dim: int, rng: np.random.Generator, slope: float):
        super().__init__()
        self.slope = slope
        self.w = Linear(embed_dim, embed_dim, rng)
        self.att_self = Parameter(he_normal(rng, (embed_dim, 1), embed_dim))
        self.att_neighbor = Parameter(he_normal(rng, (embed_dim, 1), embed_dim))

    def forward(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        z = self.w(h)
        alpha = _attention(z @ self.att_self, z @ self.att_neighbor, self.slope)
        return z + alpha @ z, alpha


class GatEncoder(Module):
    def __init__(self, cfg: ObpConfig, rng: np.random.Generator):
        super().__init__()
        self.first = CandidateAttentionLayer(cfg.embed_dim, rng, cfg.leaky_slope)
        self.rest = ModuleList(GraphAttentionLayer(cfg.embed_dim, rng, cfg.leaky_slope)
                               for _ in range(cfg.attention_layers - 1))

    def forward(self, candidates: Tensor, robot: Tensor, depth_embedding: Tensor) -> Tuple[Tensor, List[Tensor]]:
        h, alpha = self.first(candidates, robot, depth_embedding)
        attention = [alpha]
        for layer in self.rest:
            h, alpha = layer(F.relu(h))
            attention.append(alpha)
        return h, attention


class Decoder(Module):
    """Per-node MLP producing one logit per candidate."""

    def __init__(self, embed_dim: int, hidden: Sequence[int], rng: np.random.Generator):
        super().__init__()
        widths = [embed_dim] + list(hidden)
        self.hidden = ModuleList(Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:]))
        self.out = Linear(widths[-1], 1, rng)

    def forward(self, h: Tensor) -> Tensor:
        for layer in self.hidden:
            h = F.relu(layer(h))
        return self.out(h).reshape(-1)


class ObpPolicy(Module):
    def __init__(self, cfg: ObpConfig, rng: np.random.Generator):
        super().__init__()
        self.depth_encoder = DepthEncoder(cfg.depth_channels, cfg.embed_dim, rng)
        self.encoder = GatEncoder(cfg, rng)
        self.decoder = Decoder(cfg.embed_dim, cfg.decoder_hidden, rng)

    @property
    def dtype(self):
        return self.decoder.out.weight.dtype

    def gat_encode(self, graph: CandidateGraph) -> Tuple[Tensor, List[Tensor]]:
        if graph.num_candidates < 1:
            raise ValueError("gat_encode needs at least one candidate")
        mu = depth_encode(graph.depth, self.depth_encoder)
        return self.encoder(Tensor(graph.candidate_features, dtype=self.dtype),
                            Tensor(graph.robot_features, dtype=self.dtype), mu)

    def logits(self, graph: CandidateGraph) -> Tensor:
        h, _ = self.gat_encode(graph)
        return self.decoder(h)

    def select(self, graph: CandidateGraph, mode: str = "greedy", seed: Optional[int] = None) -> Tuple[np.ndarray, int]:
        h, _ = self.gat_encode(graph)
        return decode_select(h, self.decoder, mode, seed)


def build_obp_policy(run_config: RunConfig, seed: int) -> ObpPolicy:
    return ObpPolicy(run_config.obp, np.random.default_rng(seed))


def load_obp_policy(run_config: RunConfig, path: Union[str, Path]) -> ObpPolicy:
    policy = build_obp_policy(run_config, seed=0)
    policy.load_state_dict(WeightStore(path).load())
    logger.info(f"Loaded stage-2 weights from {path}")
    return policy


def decode_select(h: Tensor, decoder: Decoder, mode: str = "greedy",
                  seed: Optional[int] = None) -> Tuple[np.ndarray, int]:
    """Likelihoods over nodes and the chosen index (greedy: first maximum; sample: seeded categorical draw)."""
    likelihoods = F.softmax(decoder(h), axis=0).data.astype(np.float64)
    if mode == "greedy":
        return likelihoods, int(np.argmax(likelihoods))
    if mode == "sample":
        rng = np.random.default_rng(seed)
        return likelihoods, int(rng.choice(len(likelihoods), p=likelihoods / likelihoods.sum()))
    raise ValueError(f"Unknown decode mode {mode!r}; expected 'greedy' or 'sample'")


# --- reward and advantage ---------------------------------------------------

def reward(scene: SceneSpec, robot: RobotModel, costmap: NavCostmap, a: GridPose, cfg: RewardConfig,
           num_orientations: int, snap_radius_cells: int = 2) -> float:
    """``beta1 * collision_free + beta2 * ik_feasible + beta3 * nav`` at the cell-centre pose of ``a``."""
    pose = grid_to_world(a, costmap, num_orientations)
    navigation = nav_cost(costmap, scene.robot_start, a, snap_radius_cells)
    return (cfg.beta1 * float(collision_free(scene, robot, pose)) + cfg.beta2 * float(ik_feasible(scene, robot, pose))
            + cfg.beta3 * navigation)


def greedy_index(navs: np.ndarray, poses: Sequence[GridPose]) -> int:
    """Index of the minimum navigation cost, ties by (k, v, u)."""
    return min(range(len(poses)), key=lambda i: (navs[i], poses[i].sort_key()))


def greedy_baseline(scene: SceneSpec, robot: RobotModel, costmap: NavCostmap, candidates: CandidateSet,
                    cfg: RewardConfig, num_orientations: int, snap_radius_cells: int = 2) -> float:
    """Reward of the candidate with the lowest navigation cost.

    Raises:
        ValueError: If ``candidates`` is empty
    """
    if candidates.is_empty:
        raise ValueError("greedy_baseline needs at least one candidate")
    poses = candidates.poses()
    navs = np.array([nav_cost(costmap, scene.robot_start, pose, snap_radius_cells) for pose in poses])
    best = poses[greedy_index(navs, poses)]
    return reward(scene, robot, costmap, best, cfg, num_orientations, snap_radius_cells)


def scaled_advantage(R: float, b: float, epsilon: float, sign_preserving: bool = False) -> float:
    """``log(1 + max(eps, R - b))``, or ``sign(R - b) * log(1 + |R - b|)`` when ``sign_preserving``."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    gap = R - b
    if sign_preserving:
        return math.copysign(math.log1p(abs(gap)), gap) if gap else 0.0
    return math.log1p(max(epsilon, gap))


def reinforce_update(policy: ObpPolicy, graph: CandidateGraph, k: int, advantage: float, optimizer: Adam) -> float:
    """One policy-gradient step on ``-advantage * log y_k``; returns the loss (no step when advantage is 0)."""
    if advantage == 0.0:
        return 0.0
    optimizer.zero_grad()
    log_likelihoods = F.log_softmax(policy.logits(graph), axis=0)
    loss = log_likelihoods[k] * (-advantage)
    loss.backward()
    optimizer.step()
    return loss.item()


# --- environment and training ----------------------------------------------

@dataclass
class SceneContext:
    sample: Sample
    costmap: NavCostmap
    robot_cell: GridPose
    distances: np.ndarray


@dataclass
class Episode:
    index: int
    seed: int
    scene_index: int
    graph: Optional[CandidateGraph]
    navs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rewards: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def is_empty(self) -> bool:
        return self.graph is None or self.graph.num_candidates == 0

    def best_index(self) -> int:
        return greedy_index(self.navs, self.graph.candidates.poses())


def episode_advantage(episode: Episode, k: int, run_config: RunConfig) -> Tuple[float, float, float]:
    """Reward of choice ``k``, its baseline and the scaled advantage under ``run_config``."""
    R = float(episode.rewards[k])
    b = float(episode.rewards[episode.best_index()]) if run_config.obp.baseline == "greedy" else 0.0
    return R, b, scaled_advantage(R, b, run_config.reward.epsilon, run_config.obp.sign_preserving_advantage)


def candidate_navs(context: SceneContext, poses: Sequence[GridPose], snap_radius_cells: int) -> np.ndarray:
    return np.array([lookup_cost(context.costmap, context.distances, pose, snap_radius_cells) for pose in poses],
                    dtype=np.float64)


def candidate_rewards(scene: SceneSpec, robot: RobotModel, costmap: NavCostmap, poses: Sequence[GridPose],
                      navs: np.ndarray, cfg: RewardConfig, num_orientations: int) -> np.ndarray:
    """Vectorised :func:`reward` given precomputed navigation costs."""
    world = [grid_to_world(pose, costmap, num_orientations) for pose in poses]
    x = np.array([p.x for p in world])
    y = np.array([p.y for p in world])
    theta = np.array([p.theta for p in world])
    free = collision_free_batch(scene, robot, x, y, theta).astype(float)
    feasible = ik_feasible_batch(scene, robot, x, y, theta).astype(float)
    return cfg.beta1 * free + cfg.beta2 * feasible + cfg.beta3 * np.asarray(navs)


class ObpEnvironment:
    """Single-decision episodes over a fixed pool of labelled scenes.

    The robot is teleported to the chosen pose, so an episode is one selection
    and its reward. Candidates come from the ground-truth IRM (``oracle``) or from
    a trained stage-1 policy (``learned``).
    """

    def __init__(self, run_config: RunConfig, seed: int, samples: Optional[Sequence[Sample]] = None,
                 transporter: Optional[Module] = None, workers: int = 1):
        self.run_config = run_config
        self.seed = seed
        self.robot = run_config.robot.to_model()
        self.irm_source = run_config.obp.irm_source
        if self.irm_source == "learned" and transporter is None:
            raise ValueError("Learned candidates need a trained stage-1 policy")
        self.transporter = transporter
        self.samples = list(samples) if samples is not None else sample_dataset(
            run_config.obp.scene_pool, seed, run_config, workers)
        self._contexts: Dict[int, SceneContext] = {}
        self._learned: Dict[int, CandidateSet] = {}

    def __len__(self) -> int:
        return len(self.samples)

    def context(self, scene_index: int) -> SceneContext:
        if scene_index not in self._contexts:
            sample = self.samples[scene_index]
            costmap = build_costmap(sample.projection, self.robot, self.run_config.navigation.inflation_radius)
            robot_cell = world_to_grid(sample.scene.robot_start, sample.projection, self.run_config.scene.num_orientations)
            source = start_cell(costmap, sample.scene.robot_start, self.run_config.navigation.snap_radius_cells)
            distances = distance_field(costmap, source) if source is not None else np.full(costmap.blocked.shape, np.inf)
            self._contexts[scene_index] = SceneContext(sample, costmap, robot_cell, distances)
        return self._contexts[scene_index]

    def candidates(self, scene_index: int, rng: np.random.Generator) -> CandidateSet:
        context = self.context(scene_index)
        if self.irm_source == "learned":
            if scene_index not in self._learned:
                density = self.transporter.predict(context.sample.projection, context.robot_cell)
                self._learned[scene_index] = extract_candidates(
                    density, self.run_config.transporter.tau, self.run_config.transporter.max_candidates)
            return self._learned[scene_index]
        cells = context.sample.irm.positive_cells()
        limit = self.run_config.obp.max_candidates
        if len(cells) > limit:
            cells = cells[np.sort(rng.choice(len(cells), size=limit, replace=False))]
        return CandidateSet([Candidate(GridPose(int(u), int(v), int(k))) for k, v, u in cells])

    def episode(self, index: int, seed: int) -> Episode:
        rng = np.random.default_rng(seed)
        scene_index = int(rng.integers(len(self.samples)))
        context = self.context(scene_index)
        candidates = self.candidates(scene_index, rng)
        if candidates.is_empty:
            return Episode(index, seed, scene_index, None)
        K = self.run_config.scene.num_orientations
        scene = context.sample.scene
        graph = CandidateGraph.build(candidates, scene.robot_start, context.robot_cell, context.sample.projection.depth, K)
        poses = candidates.poses()
        navs = candidate_navs(context, poses, self.run_config.navigation.snap_radius_cells)
        rewards = candidate_rewards(scene, self.robot, context.costmap, poses, navs, self.run_config.reward, K)
        return Episode(index, seed, scene_index, graph, navs, rewards)


@dataclass
class ObpTrainingResult:
    policy: ObpPolicy
    log: pd.DataFrame
    skipped: int

    @property
    def final_success(self) -> float:
        return float(self.log["rolling_success"].iloc[-1]) if len(self.log) else 0.0


def train_obp(env: ObpEnvironment, run_config: RunConfig, seed: int, policy: Optional[ObpPolicy] = None,
              log_csv: Optional[Union[str, Path]] = None,
              checkpoint: Optional[Union[str, Path]] = None) -> ObpTrainingResult:
    """REINFORCE over ``obp.interactions`` single-decision episodes.

    Success of an episode means the chosen pose's navigation cost is within half a
    diagonal cell of the cheapest candidate; ``rolling_success`` averages the last
    ``obp.rolling_window`` episodes. Episodes without candidates are skipped and counted.
    """
    ocfg = run_config.obp
    policy = policy or build_obp_policy(run_config, seed)
    optimizer = Adam(policy.parameters(), lr=ocfg.learning_rate)
    window = deque(maxlen=ocfg.rolling_window)
    rows = []
    skipped = 0

    for index, episode_seed in enumerate(tqdm(spawn_seeds(seed, ocfg.interactions), desc="train-obp")):
        episode = env.episode(index, episode_seed)
        if episode.is_empty:
            skipped += 1
            logger.debug(f"Episode {index}: no candidates in scene {episode.scene_index}, skipped")
            continue
        _, k = policy.select(episode.graph, mode="sample", seed=episode_seed)
        best = episode.best_index()
        R, b, advantage = episode_advantage(episode, k, run_config)
        loss = reinforce_update(policy, episode.graph, k, advantage, optimizer)

        success = bool(episode.navs[k] <= episode.navs[best] + env.context(episode.scene_index).costmap.half_diagonal)
        window.append(success)
        rows.append({
            "episode": index, "scene": episode.scene_index, "candidates": episode.graph.num_candidates,
            "reward": R, "baseline": b, "advantage": advantage, "loss": loss,
            "success": success, "rolling_success": float(np.mean(window)),
        })

    log = pd.DataFrame(rows, columns=["episode", "scene", "candidates", "reward", "baseline", "advantage",
                                      "loss", "success", "rolling_success"])
    if skipped:
        logger.warning(f"Skipped {skipped} of {ocfg.interactions} episodes without candidates")
    if len(log):
        logger.info(f"Stage-2 training finished: rolling success {log['rolling_success'].iloc[-1]:.3f}")
    if log_csv is not None:
        log.to_csv(log_csv, index=False)
    if checkpoint is not None:
        WeightStore(checkpoint).save(policy.state_dict())
    return ObpTrainingResult(policy, log, skipped)
