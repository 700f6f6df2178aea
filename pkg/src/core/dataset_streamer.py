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


from collections import OrderedDict
from pathlib import Path
from typing import BinaryIO, Dict, List, Optional, Tuple, Union
import json
import logging
import struct

import numpy as np

from src.core.config import RunConfig
from src.core.dataset import Sample
from src.core.errors import FormatError
from src.core.geometry import rasterize
from src.core.persistence import IRMD_MAGIC, IRMD_VERSION, ByteReader, check_header, irm_label_for, scene_from_json
from src.models.scene import SceneSpec


logger = logging.getLogger(__name__)


class IRMDatasetStreamer:
    """Memory-efficient IRM dataset reader using lazy loading and LRU caching.

    Opening a file only indexes its records (scene JSON plus the offset of each
    label block); label tensors are read from disk on demand and the projection
    is re-rasterized from the scene, so a 15,000-sample full-scale archive can
    be trained on without holding it in memory.
    """

    MAX_CACHE_SIZE = 64  # Maximum number of decoded samples to keep

    def __init__(self, run_config: RunConfig):
        self.run_config = run_config
        self.handle: Optional[BinaryIO] = None
        self.filename: Optional[Path] = None
        self.index: List[Tuple[SceneSpec, Tuple[int, int, int], int]] = []
        self.sample_cache: OrderedDict = OrderedDict()

    def open(self, filename: Union[str, Path]) -> None:
        """Open an IRMD file and index its records without loading label data.

        Args:
            filename: Path to the IRMD archive

        Raises:
            FileNotFoundError: If the file doesn't exist
            FormatError: If the header or a record is malformed
        """
        self.filename = Path(filename)
        if not self.filename.exists():
            raise FileNotFoundError(f"IRM dataset not found: {filename}")

        self.close()
        self.handle = open(self.filename, 'rb')
        # CRITICAL: a half-read index must not stay open
        try:
            self._index_records()
        except FormatError:
            self.close()
            raise

        logger.info(f"Opened IRM dataset: {filename} ({len(self.index)} samples)")

    def _index_records(self) -> None:
        header = ByteReader(self.handle.read(12), "IRMD header")
        count = check_header(header, IRMD_MAGIC, IRMD_VERSION)

        for record in range(count):
            scene_length = self._read_u32s(1, f"record {record} scene length")[0]
            scene_offset = self.handle.tell()
            raw_scene = self.handle.read(scene_length)
            if len(raw_scene) != scene_length:
                raise FormatError(f"Truncated scene in record {record}", scene_offset)
            try:
                scene = scene_from_json(raw_scene.decode('utf-8'))
            except (KeyError, TypeError, UnicodeDecodeError, json.JSONDecodeError) as e:
                raise FormatError(f"Malformed scene record {record}: {e}", scene_offset) from e
            shape = self._read_u32s(3, f"record {record} label shape")
            label_offset = self.handle.tell()
            label_bytes = int(np.prod(shape))
            self.handle.seek(label_bytes, 1)
            if self.handle.tell() > self.filename.stat().st_size:
                raise FormatError(f"Truncated labels in record {record}", label_offset)
            self.index.append((scene, shape, label_offset))

    def _read_u32s(self, count: int, what: str) -> Tuple[int, ...]:
        offset = self.handle.tell()
        raw = self.handle.read(4 * count)
        if len(raw) != 4 * count:
            raise FormatError(f"Truncated IRMD dataset while reading {what}", offset)
        return struct.unpack(f'<{count}I', raw)

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, index: int) -> Sample:
        return self.get_sample(index)

    def get_sample(self, index: int) -> Sample:
        """Load one sample, serving repeats from the cache.

        Raises:
            RuntimeError: If no file is open
            IndexError: If ``index`` is out of range
        """
        if self.handle is None:
            raise RuntimeError("No IRM dataset is open. Call open() first.")
        if not 0 <= index < len(self.index):
            raise IndexError(f"Sample {index} out of range for {len(self.index)} samples")

        if index in self.sample_cache:
            self.sample_cache.move_to_end(index)
            logger.debug(f"Cache hit for sample {index}")
            return self.sample_cache[index]

        scene, shape, label_offset = self.index[index]
        self.handle.seek(label_offset)
        labels = np.frombuffer(self.handle.read(int(np.prod(shape))), dtype=np.uint8).reshape(shape).copy()
        robot = self.run_config.robot.to_model()
        sample = Sample(scene, rasterize(scene, shape[-1], robot), irm_label_for(scene, labels))

        self.sample_cache[index] = sample
        if len(self.sample_cache) > self.MAX_CACHE_SIZE:
            evicted = next(iter(self.sample_cache))
            del self.sample_cache[evicted]
            logger.debug(f"Evicted sample {evicted} from cache (size: {self.MAX_CACHE_SIZE})")
        return sample

    def get_metadata(self) -> Dict:
        if not self.index:
            raise RuntimeError("No file opened")
        return {'n_samples': len(self.index), 'shape': self.index[0][1], 'filename': str(self.filename)}

    def clear_cache(self) -> None:
        self.sample_cache.clear()
        logger.debug("Cleared sample cache")

    def close(self) -> None:
        """Close the file handle and free cached samples."""
        if self.handle is not None:
            self.handle.close()
            self.handle = None
            logger.info("Closed IRM dataset")
        self.index = []
        self.sample_cache.clear()

    def split(self, validation_fraction: float) -> Tuple["SampleView", "SampleView"]:
        """Lazy train/validation views using the same tail rule as ``split_dataset``."""
        n_validation = min(int(round(len(self) * validation_fraction)), len(self) - 1)
        cut = len(self) - n_validation
        return SampleView(self, range(cut)), SampleView(self, range(cut, len(self)))


class SampleView:
    """Indexable subset of another sample source."""

    def __init__(self, source, indices):
        self.source = source
        self.indices = list(indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, index: int) -> Sample:
        return self.source[self.indices[index]]
