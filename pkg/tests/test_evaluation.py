import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from src.core.dataset import sample_dataset
from src.core.errors import AblationError, MissingWeightsError
from src.core.evaluation import ablation_report, evaluate, evaluate_scene, summarize
from src.core.obp_policy import build_obp_policy
from src.core.persistence import WeightStore
from src.core.transporter import build_policy
from src.models.report import ROW_COLUMNS, EvalReport, TrainingRun


def _rows():
    return pd.DataFrame([
        {"scene": 0, "method": "pbs", "time_s": 1.0, "path_m": 2.0, "success": True, "feasible": True, "abstained": False},
        {"scene": 1, "method": "pbs", "time_s": 3.0, "path_m": math.nan, "success": False, "feasible": False,
         "abstained": True},
        {"scene": 0, "method": "fbp", "time_s": 0.5, "path_m": 4.0, "success": False, "feasible": False,
         "abstained": False},
    ], columns=ROW_COLUMNS)


def test_summarize_statistics():
    stats = summarize(_rows())
    assert list(stats) == ["pbs", "fbp"]
    pbs = stats["pbs"]
    assert pbs.time_mean == pytest.approx(2.0)
    assert pbs.time_std == pytest.approx(math.sqrt(2.0))
    assert pbs.path_mean == pytest.approx(2.0) and pbs.path_std == 0.0
    assert pbs.success_rate == 0.5 and pbs.abstentions == 1 and pbs.failures == 0 and pbs.scenes == 2
    fbp = stats["fbp"]
    assert fbp.time_std == 0.0 and fbp.failures == 1 and fbp.feasible_rate == 0.0


def test_report_dict_round_trip():
    rows = _rows()
    report = EvalReport(summarize(rows), 2, 7, {"seed": 7}, rows)
    data = report.to_dict()
    assert data["v"] == 1 and len(data["rows"]) == 3
    restored = EvalReport.from_dict(data)
    assert restored.methods == report.methods
    assert restored.rows["method"].tolist() == ["pbs", "pbs", "fbp"]


def _run(variant, seed, values, budget=3):
    log = pd.DataFrame({"episode": range(len(values)), "rolling_success": values})
    return TrainingRun(variant, seed, budget, log, "episode", "rolling_success")


def test_ablation_report_aggregates_final_values():
    runs = [_run("greedy", 1, [0.2, 0.6, 0.8]), _run("greedy", 2, [0.4, 0.5, 0.6]),
            _run("none", 1, [0.1, 0.2, 0.3]), _run("none", 2, [0.2, 0.3, 0.5])]
    report = ablation_report(runs)
    assert report.variants == ["greedy", "none"]
    summary = report.summary.set_index("variant")
    assert summary.loc["greedy", "final_mean"] == pytest.approx(0.7)
    assert summary.loc["none", "final_min"] == pytest.approx(0.3)
    assert summary.loc["greedy", "seeds"] == 2
    assert report.gap("greedy", "none") == pytest.approx(0.3)
    first_step = report.curves[(report.curves["variant"] == "greedy") & (report.curves["episode"] == 0)]
    assert first_step["mean"].iloc[0] == pytest.approx(0.3)


@pytest.mark.parametrize("runs", [
    [_run("greedy", 1, [0.5])],
    [_run("greedy", 1, [0.5], budget=3), _run("none", 1, [0.4], budget=4)],
    [_run("greedy", 1, [0.5]), TrainingRun("plain", 1, 3, pd.DataFrame({"epoch": [1], "iou": [0.2]}), "epoch", "iou")],
])
def test_ablation_report_rejects_incomparable_runs(runs):
    with pytest.raises(AblationError):
        ablation_report(runs)


def test_learned_method_requires_weights(tiny_config, tmp_path):
    with pytest.raises(MissingWeightsError):
        evaluate(["learned"], 1, 0, tiny_config, transporter_weights=tmp_path / "missing.wtsb")


def test_unknown_method_is_rejected(tiny_config):
    with pytest.raises(ValueError):
        evaluate(["oracle"], 1, 0, tiny_config)


def test_nbs_is_always_successful_and_runs_are_repeatable(tiny_config):
    samples = sample_dataset(3, 11, tiny_config)
    first = evaluate(["fbp", "pbs", "nbs"], 3, 11, tiny_config, samples=samples)
    second = evaluate(["fbp", "pbs", "nbs"], 3, 11, tiny_config, samples=samples)
    assert first.n_scenes == 3 and len(first.rows) == 9
    assert first.methods["nbs"].success_rate == 1.0
    assert first.methods["nbs"].feasible_rate == 1.0
    assert first.methods["pbs"].feasible_rate == 1.0
    assert first.methods["pbs"].path_mean >= first.methods["nbs"].path_mean - 1e-9
    columns = ["scene", "method", "path_m", "success", "feasible", "abstained"]
    assert first.rows[columns].equals(second.rows[columns])


def test_untrained_learned_pipeline_produces_rows(tiny_config, tmp_path):
    WeightStore(tmp_path / "irm.wtsb").save(build_policy(tiny_config, 0).state_dict())
    WeightStore(tmp_path / "obp.wtsb").save(build_obp_policy(tiny_config, 0).state_dict())
    report = evaluate(["learned"], 2, 0, tiny_config, transporter_weights=tmp_path / "irm.wtsb",
                      obp_weights=tmp_path / "obp.wtsb")
    rows = report.rows
    assert len(rows) == 2
    assert (rows["abstained"] | rows["path_m"].notna()).all()
    assert not (rows["success"] & ~rows["feasible"]).any()


def test_scene_rows_follow_method_order(tiny_config):
    sample = sample_dataset(1, 3, tiny_config)[0]
    rows = evaluate_scene(0, sample, ["nbs", "fbp"], tiny_config)
    assert [row["method"] for row in rows] == ["nbs", "fbp"]
    assert all(row["time_s"] >= 0.0 for row in rows)
    assert np.isfinite(rows[0]["path_m"])


def test_empty_irm_has_no_strict_success(simple_sample, desk_config):
    empty = replace(simple_sample, irm=replace(simple_sample.irm, labels=np.zeros_like(simple_sample.irm.labels)))
    rows = evaluate_scene(0, empty, ["fbp", "nbs"], desk_config)
    assert [row["success"] for row in rows] == [False, False]
    assert rows[0]["feasible"]
