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


"""Binary PPM (P6) rendering of density maps, IRM channels and scene composites.

Image row 0 is the top of the map (largest ``v``), so world +y points up.
"""

import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.navigation import Path as NavPath
from src.models.candidates import CandidateSet
from src.models.scene import FREE, OBJECT, OBSTACLE, ROBOT, TABLE, GridPose, OrthoProjection
from src.utils.path_utils import atomic_write_bytes

logger = logging.getLogger(__name__)

# anchor colours sampled evenly on [0, 1]
PALETTES: Dict[str, np.ndarray] = {
    "viridis": np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], dtype=float),
    "magma": np.array([[0, 0, 4], [81, 18, 124], [183, 55, 121], [252, 137, 97], [252, 253, 191]], dtype=float),
    "gray": np.array([[0, 0, 0], [255, 255, 255]], dtype=float),
}

CLASS_COLOURS = {
    FREE: (245, 245, 245),
    TABLE: (160, 110, 60),
    OBSTACLE: (90, 90, 90),
    OBJECT: (220, 30, 30),
    ROBOT: (40, 90, 220),
}
CANDIDATE_COLOUR = (20, 160, 60)
PATH_COLOUR = (250, 170, 0)


def encode_ppm(rgb: np.ndarray) -> bytes:
    """P6 bytes of an (H, W, 3) uint8 image."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"Expected an (H, W, 3) image, got shape {rgb.shape}")
    height, width = rgb.shape[:2]
    return f"P6\n{width} {height}\n255\n".encode("ascii") + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def heatmap_rgb(values: np.ndarray, palette: str = "viridis") -> Tuple[np.ndarray, int]:
    """Map ``values`` in [0, 1] through ``palette``; returns the image and the number of clamped cells."""
    if palette not in PALETTES:
        raise ValueError(f"Unknown palette {palette!r}; choose from {sorted(PALETTES)}")
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"Expected a 2-D map, got shape {values.shape}")
    finite = np.nan_to_num(values, nan=0.0, posinf=1.0, neginf=0.0)
    clamped = int(np.count_nonzero((finite < 0.0) | (finite > 1.0) | ~np.isfinite(values)))
    finite = np.clip(finite, 0.0, 1.0)

    stops = PALETTES[palette]
    positions = np.linspace(0.0, 1.0, len(stops))
    rgb = np.stack([np.interp(finite, positions, stops[:, channel]) for channel in range(3)], axis=-1)
    return np.flipud(np.rint(rgb).astype(np.uint8)), clamped


def render_heatmap(values: np.ndarray, palette: str = "viridis") -> bytes:
    rgb, clamped = heatmap_rgb(values, palette)
    if clamped:
        logger.warning(f"Clamped {clamped} out-of-range values while rendering a {values.shape} map")
    return encode_ppm(rgb)


def _upscale(rgb: np.ndarray, scale: int) -> np.ndarray:
    return np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)


def _to_pixel(u: float, v: float, size: int, scale: int) -> Tuple[float, float]:
    """Continuous cell coordinates to (column, row) of the upscaled, y-up image."""
    return (u + 0.5) * scale, (size - v - 0.5) * scale


def _draw_segment(canvas: np.ndarray, start: Tuple[float, float], end: Tuple[float, float],
                  colour: Tuple[int, int, int]) -> None:
    steps = int(math.ceil(max(abs(end[0] - start[0]), abs(end[1] - start[1])))) + 1
    columns = np.rint(np.linspace(start[0], end[0], steps)).astype(int)
    rows = np.rint(np.linspace(start[1], end[1], steps)).astype(int)
    inside = (rows >= 0) & (rows < canvas.shape[0]) & (columns >= 0) & (columns < canvas.shape[1])
    canvas[rows[inside], columns[inside]] = colour


def draw_arrow(canvas: np.ndarray, pose: GridPose, num_orientations: int, size: int, scale: int,
               colour: Tuple[int, int, int] = CANDIDATE_COLOUR, length_cells: float = 1.5) -> None:
    """Arrow whose tail sits on the robot centre at ``pose`` and points along its heading."""
    angle = 2.0 * math.pi * pose.k / num_orientations
    tail = _to_pixel(pose.u, pose.v, size, scale)
    tip = (tail[0] + length_cells * scale * math.cos(angle), tail[1] - length_cells * scale * math.sin(angle))
    _draw_segment(canvas, tail, tip, colour)
    for side in (-1.0, 1.0):
        barb = angle + math.pi + side * math.pi / 6.0
        _draw_segment(canvas, tip, (tip[0] + 0.5 * scale * math.cos(barb), tip[1] - 0.5 * scale * math.sin(barb)), colour)


def scene_rgb(proj: OrthoProjection, candidates: Optional[CandidateSet] = None,
              paths: Iterable[NavPath] = (), num_orientations: int = 8, scale: int = 4) -> np.ndarray:
    """Semantic classes as flat colours with A* paths and candidate arrows on top."""
    classes = np.argmax(proj.semantic, axis=0)
    palette = np.zeros((max(CLASS_COLOURS) + 1, 3), dtype=np.uint8)
    for label, colour in CLASS_COLOURS.items():
        palette[label] = colour
    canvas = _upscale(np.flipud(palette[classes]), scale).copy()

    for path in paths:
        points = [_to_pixel(u, v, proj.size, scale) for u, v in path.cells]
        for start, end in zip(points[:-1], points[1:]):
            _draw_segment(canvas, start, end, PATH_COLOUR)
    for candidate in candidates or ():
        draw_arrow(canvas, candidate.pose, num_orientations, proj.size, scale)
    return canvas


def render_scene(proj: OrthoProjection, candidates: Optional[CandidateSet] = None,
                 paths: Iterable[NavPath] = (), num_orientations: int = 8, scale: int = 4) -> bytes:
    return encode_ppm(scene_rgb(proj, candidates, paths, num_orientations, scale))


def write_render_set(out_dir: Union[str, Path], proj: OrthoProjection, channels: Optional[np.ndarray] = None,
                     candidates: Optional[CandidateSet] = None, paths: Sequence[NavPath] = (),
                     num_orientations: int = 8, prefix: str = "channel", palette: str = "viridis") -> List[Path]:
    """Write ``scene.ppm`` plus one ``{prefix}_{k}.ppm`` per orientation channel of ``channels``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [atomic_write_bytes(out_dir / "scene.ppm", render_scene(proj, candidates, paths, num_orientations))]
    if channels is not None:
        for k, channel in enumerate(np.asarray(channels)):
            written.append(atomic_write_bytes(out_dir / f"{prefix}_{k}.ppm", render_heatmap(channel, palette)))
    logger.info(f"Wrote {len(written)} images to {out_dir}")
    return written
