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


"""Artifact formats: scene JSONL, IRM datasets (IRMD), weight archives (WTSB), JSON reports.

Binary formats are little-endian, versioned and magic-checked.
"""

import json
import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np

from src.core.errors import FormatError, UnsupportedVersionError
from src.models.irm import IRMLabel
from src.models.scene import SCENE_SCHEMA_VERSION, SceneSpec
from src.core.grid import GridSpec
from src.utils.path_utils import atomic_write_bytes, atomic_write_text


logger = logging.getLogger(__name__)

IRMD_MAGIC = b"IRMD"
IRMD_VERSION = 1
WTSB_MAGIC = b"WTSB"
WTSB_VERSION = 1

DTYPE_CODES = {0: np.dtype('<f4'), 1: np.dtype('<f8')}
CODE_FOR_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class ByteReader:
    """Cursor over a byte buffer that reports truncation with the failing offset."""

    def __init__(self, payload: bytes, what: str):
        self.payload = payload
        self.offset = 0
        self.what = what

    def read(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise FormatError(f"Truncated {self.what}: needed {size} bytes, {len(self.payload) - self.offset} left",
                              self.offset)
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))

    def at_end(self) -> bool:
        return self.offset == len(self.payload)


def check_header(reader: ByteReader, magic: bytes, version: int) -> int:
    found = reader.read(4)
    if found != magic:
        raise FormatError(f"Bad magic {found!r}, expected {magic!r}", 0)
    (file_version,) = reader.unpack('<I')
    if file_version != version:
        raise UnsupportedVersionError(f"{magic.decode()} version {file_version} is not supported (reader is v{version})", 4)
    (count,) = reader.unpack('<I')
    return count


# --- scenes -----------------------------------------------------------------

def scene_to_json(scene: SceneSpec) -> str:
    return json.dumps(scene.to_dict(), sort_keys=True, separators=(',', ':'))


def scene_from_json(text: str) -> SceneSpec:
    data = json.loads(text)
    version = data.get("v")
    if version != SCENE_SCHEMA_VERSION:
        raise UnsupportedVersionError(f"Scene schema version {version} is not supported")
    return SceneSpec.from_dict(data)


def save_scenes(path: Union[str, Path], scenes: Iterable[SceneSpec]) -> Path:
    lines = [scene_to_json(scene) for scene in scenes]
    written = atomic_write_text(path, "".join(line + "\n" for line in lines))
    logger.info(f"Wrote {len(lines)} scenes to {path}")
    return written


def load_scenes(path: Union[str, Path]) -> List[SceneSpec]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scene file not found: {path}")
    scenes = []
    with open(path, 'r', encoding='utf-8') as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                scenes.append(scene_from_json(line))
            except (KeyError, TypeError, json.JSONDecodeError) as e:
                raise FormatError(f"Malformed scene on line {line_number} of {path}: {e}") from e
    return scenes


# --- IRM datasets -----------------------------------------------------------

def encode_irm_dataset(samples: Sequence[Tuple[SceneSpec, IRMLabel]]) -> bytes:
    chunks = [IRMD_MAGIC, struct.pack('<II', IRMD_VERSION, len(samples))]
    for scene, irm in samples:
        scene_bytes = scene_to_json(scene).encode('utf-8')
        labels = np.ascontiguousarray(irm.labels, dtype=np.uint8)
        chunks.append(struct.pack('<I', len(scene_bytes)))
        chunks.append(scene_bytes)
        chunks.append(struct.pack('<III', *labels.shape))
        chunks.append(labels.tobytes())
    return b"".join(chunks)


def iter_irm_records(payload: bytes) -> Iterator[Tuple[int, SceneSpec, Tuple[int, int, int], int]]:
    """Walk an IRMD buffer, yielding (index, scene, (K, H, W), label_offset) without copying labels."""
    reader = ByteReader(payload, "IRMD dataset")
    count = check_header(reader, IRMD_MAGIC, IRMD_VERSION)
    for index in range(count):
        (scene_length,) = reader.unpack('<I')
        scene_offset = reader.offset
        try:
            scene = scene_from_json(reader.read(scene_length).decode('utf-8'))
        except (KeyError, TypeError, UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"Malformed scene record {index}: {e}", scene_offset) from e
        shape = reader.unpack('<III')
        label_offset = reader.offset
        reader.read(int(np.prod(shape)))
        yield index, scene, shape, label_offset
    if not reader.at_end():
        raise FormatError("Trailing bytes after last IRMD record", reader.offset)


def decode_irm_dataset(payload: bytes) -> List[Tuple[SceneSpec, IRMLabel]]:
    samples = []
    for _, scene, shape, label_offset in iter_irm_records(payload):
        labels = np.frombuffer(payload, dtype=np.uint8, count=int(np.prod(shape)), offset=label_offset)
        samples.append((scene, irm_label_for(scene, labels.reshape(shape).copy())))
    return samples


def irm_label_for(scene: SceneSpec, labels: np.ndarray) -> IRMLabel:
    grid = GridSpec.centered(labels.shape[-1], scene.resolution)
    return IRMLabel(labels=labels, resolution=grid.resolution, origin=grid.origin)


def save_irm_dataset(path: Union[str, Path], samples: Sequence[Tuple[SceneSpec, IRMLabel]]) -> Path:
    written = atomic_write_bytes(path, encode_irm_dataset(samples))
    logger.info(f"Wrote IRM dataset with {len(samples)} samples to {path}")
    return written


def load_irm_dataset(path: Union[str, Path]) -> List[Tuple[SceneSpec, IRMLabel]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"IRM dataset not found: {path}")
    return decode_irm_dataset(path.read_bytes())


# --- weight archives --------------------------------------------------------

def encode_weights(tensors: "OrderedDict[str, np.ndarray]") -> bytes:
    chunks = [WTSB_MAGIC, struct.pack('<II', WTSB_VERSION, len(tensors))]
    for name, array in tensors.items():
        array = np.asarray(array)
        code = CODE_FOR_DTYPE.get(array.dtype)
        if code is None:
            raise FormatError(f"Weight {name!r} has unsupported dtype {array.dtype}")
        name_bytes = name.encode('utf-8')
        chunks.append(struct.pack('<H', len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack('<BB', code, array.ndim))
        chunks.append(struct.pack(f'<{array.ndim}I', *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes())
    return b"".join(chunks)


def decode_weights(payload: bytes) -> "OrderedDict[str, np.ndarray]":
    reader = ByteReader(payload, "WTSB archive")
    count = check_header(reader, WTSB_MAGIC, WTSB_VERSION)
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (name_length,) = reader.unpack('<H')
        name = reader.read(name_length).decode('utf-8')
        code, ndim = reader.unpack('<BB')
        if code not in DTYPE_CODES:
            raise FormatError(f"Unknown dtype code {code} for weight {name!r}", reader.offset - 2)
        shape = reader.unpack(f'<{ndim}I')
        dtype = DTYPE_CODES[code]
        raw = reader.read(int(np.prod(shape, dtype=np.int64)) * dtype.itemsize)
        tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder('='))
    if not reader.at_end():
        raise FormatError("Trailing bytes after last WTSB entry", reader.offset)
    return tensors


class WeightStore:
    """Named-tensor archive on disk (WTSB format)."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def save(self, tensors: Dict[str, np.ndarray]) -> Path:
        written = atomic_write_bytes(self.path, encode_weights(OrderedDict(tensors)))
        logger.info(f"Saved {len(tensors)} tensors to {self.path}")
        return written

    def load(self) -> "OrderedDict[str, np.ndarray]":
        if not self.path.exists():
            raise FileNotFoundError(f"Weight archive not found: {self.path}")
        return decode_weights(self.path.read_bytes())


# --- reports ----------------------------------------------------------------

def save_json(path: Union[str, Path], payload: Dict) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_json(path: Union[str, Path]) -> Dict:
    with open(path, 'r', encoding='utf-8') as handle:
        return json.load(handle)
