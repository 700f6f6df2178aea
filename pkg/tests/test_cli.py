import json

import pytest

from src.core.cli import cli, parse_scene_ref
from src.core.persistence import load_irm_dataset, load_json, load_scenes


def _run(*argv):
    return cli([str(a) for a in argv])


@pytest.fixture
def scenes_file(tmp_path):
    path = tmp_path / "scenes.jsonl"
    assert _run("gen-scenes", "--config", "tiny", "--seed", 3, "--n", 3, "--out", path) == 0
    return path


def test_gen_scenes_is_reproducible(tmp_path, scenes_file):
    again = tmp_path / "again.jsonl"
    assert _run("gen-scenes", "--config", "tiny", "--seed", 3, "--n", 3, "--out", again) == 0
    assert again.read_bytes() == scenes_file.read_bytes()
    assert len(load_scenes(scenes_file)) == 3


def test_seed_changes_scenes(tmp_path, scenes_file):
    other = tmp_path / "other.jsonl"
    assert _run("gen-scenes", "--config", "tiny", "--seed", 4, "--n", 3, "--out", other) == 0
    assert other.read_bytes() != scenes_file.read_bytes()


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["gen-scenes", "--n", "3"],
    ["gen-scenes", "--n", "three", "--out", "x.jsonl"],
    ["eval", "--method", "oracle", "--out", "m.json"],
    ["ablate", "--study", "depth", "--out", "ablate"],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli(argv) == 2


@pytest.mark.parametrize("extra", [
    ["--config", "no-such-preset"],
    ["--config", "tiny", "--set", "scene.grid_size"],
    ["--config", "tiny", "--set", "scene.colour=red"],
    ["--config", "tiny", "--set", "obp.irm_source=dream"],
    ["--config", "tiny", "--workers", "0"],
])
def test_config_errors_exit_2(extra, tmp_path):
    assert _run("gen-scenes", "--n", 1, "--out", tmp_path / "s.jsonl", *extra) == 2
    assert not (tmp_path / "s.jsonl").exists()


def test_config_file_path_is_accepted(tmp_path):
    config = tmp_path / "run.yaml"
    config.write_text("seed: 11\nworkers: 1\n")
    assert _run("gen-scenes", "--config", config, "--n", 1, "--out", tmp_path / "s.jsonl") == 0


def test_runtime_errors_exit_1(tmp_path, scenes_file):
    assert _run("gen-irm", "--config", "tiny", "--scenes", tmp_path / "missing.jsonl",
                "--out", tmp_path / "d.irmd") == 1
    assert _run("render", "--config", "tiny", "--scene", f"{scenes_file}:7", "--out", tmp_path / "r") == 1
    assert _run("eval", "--config", "tiny", "--method", "learned", "--scenes", scenes_file,
                "--out", tmp_path / "m.json") == 1
    assert _run("train-obp", "--config", "tiny", "--set", "obp.irm_source=learned",
                "--out", tmp_path / "obp.wts") == 1


def test_malformed_dataset_exits_1(tmp_path):
    bad = tmp_path / "bad.irmd"
    bad.write_bytes(b"IRMD\x01")
    assert _run("train-irm", "--config", "tiny", "--data", bad, "--out", tmp_path / "w.wts") == 1


def test_parse_scene_ref():
    assert parse_scene_ref("runs/scenes.jsonl:4") == (parse_scene_ref("runs/scenes.jsonl")[0], 4)
    path, index = parse_scene_ref("scenes.jsonl")
    assert str(path) == "scenes.jsonl" and index == 0
    path, index = parse_scene_ref("C:scenes.jsonl")
    assert str(path) == "C:scenes.jsonl" and index == 0


def test_tiny_pipeline(tmp_path, scenes_file):
    dataset = tmp_path / "irm.irmd"
    assert _run("gen-irm", "--config", "tiny", "--scenes", scenes_file, "--out", dataset) == 0
    labelled = load_irm_dataset(dataset)
    assert len(labelled) == 3
    assert [scene for scene, _ in labelled] == load_scenes(scenes_file)

    metrics = tmp_path / "metrics.json"
    assert _run("eval", "--config", "tiny", "--seed", 1, "--irm", dataset, "--method", "pbs",
                "--method", "nbs", "--method", "fbp", "--out", metrics) == 0
    report = load_json(metrics)
    assert list(report["methods"]) == ["pbs", "nbs", "fbp"]
    assert report["n_scenes"] == 3
    assert len(report["rows"]) == 9
    assert report["methods"]["nbs"]["success_rate"] >= report["methods"]["pbs"]["success_rate"]

    out = tmp_path / "render"
    assert _run("render", "--config", "tiny", "--scene", f"{scenes_file}:1", "--irm", "--paths",
                "--out", out) == 0
    assert (out / "scene.ppm").read_bytes().startswith(b"P6\n64 64\n255\n")
    assert sorted(p.name for p in out.glob("irm_*.ppm")) == [f"irm_{k}.ppm" for k in range(8)]


def test_eval_is_deterministic(tmp_path, scenes_file):
    outputs = []
    for name in ("a.json", "b.json"):
        path = tmp_path / name
        assert _run("eval", "--config", "tiny", "--seed", 2, "--scenes", scenes_file, "--method", "nbs",
                    "--out", path) == 0
        report = json.loads(path.read_text())
        outputs.append([(row["path_m"], row["success"]) for row in report["rows"]])
    assert outputs[0] == outputs[1]


@pytest.mark.slow
def test_learned_pipeline(tmp_path):
    dataset = tmp_path / "irm.irmd"
    weights = tmp_path / "irm.wts"
    obp_weights = tmp_path / "obp.wts"
    metrics = tmp_path / "metrics.json"
    common = ["--config", "tiny", "--seed", 5]

    assert _run("gen-irm", *common, "--n", 6, "--out", dataset) == 0
    assert _run("train-irm", *common, "--data", dataset, "--out", weights,
                "--metrics", tmp_path / "irm.csv") == 0
    assert _run("train-obp", *common, "--set", "obp.irm_source=learned", "--irm-weights", weights,
                "--data", dataset, "--out", obp_weights, "--log", tmp_path / "obp.csv") == 0
    assert _run("eval", *common, "--irm", dataset, "--method", "learned", "--method", "nbs",
                "--weights", weights, "--obp-weights", obp_weights, "--out", metrics) == 0

    report = load_json(metrics)
    assert set(report["methods"]) == {"learned", "nbs"}
    assert (tmp_path / "irm.csv").read_text().startswith("epoch,loss")

    out = tmp_path / "render"
    scenes = tmp_path / "scenes.jsonl"
    assert _run("gen-scenes", *common, "--n", 1, "--out", scenes) == 0
    assert _run("render", *common, "--scene", scenes, "--density", weights, "--out", out) == 0
    assert (out / "channel_0.ppm").exists()


def test_help_exits_0_and_usage_error_exits_2(capsys):
    assert cli(["--help"]) == 0
    assert cli(["gen-irm", "--help"]) == 0
    assert cli(["gen-irm", "--n"]) == 2
