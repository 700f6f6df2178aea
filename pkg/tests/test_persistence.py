import json
import struct
from collections import OrderedDict

import numpy as np
import pytest

from src.core.dataset import label_scene
from src.core.dataset_streamer import IRMDatasetStreamer
from src.core.errors import FormatError, UnsupportedVersionError
from src.core.persistence import (WeightStore, decode_irm_dataset, decode_weights, encode_irm_dataset, encode_weights,
                                  load_irm_dataset, load_json, load_scenes, save_irm_dataset, save_json, save_scenes,
                                  scene_from_json, scene_to_json)
from tests.conftest import make_scene


@pytest.fixture
def records(simple_sample, desk_config):
    other = label_scene(make_scene(object_xy=(0.3, 0.2), seed=1), desk_config)
    return [(simple_sample.scene, simple_sample.irm), (other.scene, other.irm)]


def test_irm_dataset_bytes_are_stable(records):
    payload = encode_irm_dataset(records)
    assert payload[:4] == b"IRMD"
    assert struct.unpack('<II', payload[4:12]) == (1, 2)
    decoded = decode_irm_dataset(payload)
    assert encode_irm_dataset(decoded) == payload
    for (scene, irm), (scene_back, irm_back) in zip(records, decoded):
        assert scene_to_json(scene_back) == scene_to_json(scene)
        assert np.array_equal(irm_back.labels, irm.labels)
        assert irm_back.origin == pytest.approx(irm.origin)


def test_truncated_irm_dataset_reports_offset(records):
    payload = encode_irm_dataset(records)
    with pytest.raises(FormatError) as error:
        decode_irm_dataset(payload[:-5])
    assert error.value.offset is not None and error.value.offset < len(payload)
    with pytest.raises(FormatError):
        decode_irm_dataset(payload + b"\x00")


def test_irm_dataset_header_checks(records):
    payload = encode_irm_dataset(records)
    with pytest.raises(UnsupportedVersionError):
        decode_irm_dataset(payload[:4] + struct.pack('<I', 2) + payload[8:])
    with pytest.raises(FormatError):
        decode_irm_dataset(b"IRMX" + payload[4:])


def test_irm_dataset_file_round_trip(records, tmp_path):
    path = save_irm_dataset(tmp_path / "data.irmd", records)
    assert path.read_bytes() == encode_irm_dataset(records)
    assert len(load_irm_dataset(path)) == 2
    with pytest.raises(FileNotFoundError):
        load_irm_dataset(tmp_path / "absent.irmd")


def test_weights_bytes_are_stable():
    tensors = OrderedDict([("encoder.weight", np.arange(6, dtype=np.float32).reshape(2, 3)),
                           ("head.bias", np.array([0.5, -1.25], dtype=np.float64)),
                           ("scalar", np.array(3.0, dtype=np.float32))])
    payload = encode_weights(tensors)
    decoded = decode_weights(payload)
    assert list(decoded) == list(tensors)
    for name, array in tensors.items():
        assert decoded[name].dtype == array.dtype
        assert np.array_equal(decoded[name], array)
    assert encode_weights(decoded) == payload


def test_weights_reject_bad_input():
    with pytest.raises(FormatError):
        encode_weights(OrderedDict([("counts", np.arange(3))]))
    payload = encode_weights(OrderedDict([("w", np.ones(4, dtype=np.float32))]))
    with pytest.raises(FormatError):
        decode_weights(payload[:-1])
    with pytest.raises(UnsupportedVersionError):
        decode_weights(payload[:4] + struct.pack('<I', 2) + payload[8:])


def test_weight_store(tmp_path):
    store = WeightStore(tmp_path / "model.wtsb")
    with pytest.raises(FileNotFoundError):
        store.load()
    store.save({"a": np.ones((2, 2), dtype=np.float32)})
    assert np.array_equal(store.load()["a"], np.ones((2, 2)))


def test_scene_jsonl_round_trip(tmp_path):
    scenes = [make_scene(seed=0), make_scene(object_xy=(0.1, 0.1), seed=4)]
    path = save_scenes(tmp_path / "scenes.jsonl", scenes)
    loaded = load_scenes(path)
    assert [scene_to_json(s) for s in loaded] == [scene_to_json(s) for s in scenes]


def test_scene_schema_checks(tmp_path):
    data = json.loads(scene_to_json(make_scene()))
    data["v"] = 2
    with pytest.raises(UnsupportedVersionError):
        scene_from_json(json.dumps(data))
    (tmp_path / "bad.jsonl").write_text('{"v": 1}\n')
    with pytest.raises(FormatError):
        load_scenes(tmp_path / "bad.jsonl")


def test_json_report_round_trip(tmp_path):
    save_json(tmp_path / "report.json", {"b": 1, "a": [1.5, None]})
    assert load_json(tmp_path / "report.json") == {"a": [1.5, None], "b": 1}


def test_streamer_reads_lazily(records, desk_config, simple_sample, tmp_path):
    path = save_irm_dataset(tmp_path / "data.irmd", records)
    streamer = IRMDatasetStreamer(desk_config)
    with pytest.raises(RuntimeError):
        streamer.get_sample(0)
    streamer.open(path)
    assert len(streamer) == 2
    assert streamer.get_metadata()["shape"] == (8, 64, 64)
    sample = streamer[0]
    assert np.array_equal(sample.irm.labels, simple_sample.irm.labels)
    assert np.array_equal(sample.projection.semantic, simple_sample.projection.semantic)
    assert streamer[0] is sample
    with pytest.raises(IndexError):
        streamer[2]
    train, validation = streamer.split(0.5)
    assert len(train) == 1 and len(validation) == 1
    assert np.array_equal(validation[0].irm.labels, records[1][1].labels)
    streamer.close()
    assert len(streamer) == 0


def test_streamer_rejects_truncated_file(records, desk_config, tmp_path):
    payload = encode_irm_dataset(records)
    (tmp_path / "cut.irmd").write_bytes(payload[:-10])
    with pytest.raises(FormatError):
        IRMDatasetStreamer(desk_config).open(tmp_path / "cut.irmd")


@pytest.mark.parametrize("cut", [6, 40, -10])
def test_failed_open_leaves_streamer_closed(records, desk_config, tmp_path, cut):
    path = save_irm_dataset(tmp_path / "data.irmd", records)
    (tmp_path / "cut.irmd").write_bytes(path.read_bytes()[:cut])
    streamer = IRMDatasetStreamer(desk_config)
    streamer.open(path)
    assert len(streamer) == 2
    with pytest.raises(FormatError):
        streamer.open(tmp_path / "cut.irmd")
    assert streamer.handle is None
    assert len(streamer) == 0
    with pytest.raises(RuntimeError):
        streamer.get_sample(0)
