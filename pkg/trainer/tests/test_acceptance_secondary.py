"""Full-scale reproductions (hours of compute) plus fast pipeline checks.

The stock configs under experiments/ define the full runs; they execute
only when HIBP_TRAINER_FULL=1 is set. The always-on tests drive the same
runner code paths end to end at toy scale, checking that each pipeline
completes and writes a structurally valid verdict, not that the qualitative
learning phenomena appear (those need the full budgets).
"""

import json
import os
from pathlib import Path

import pytest

from hibp_trainer.runner import find_plateau, run_config

EXPERIMENTS = Path(__file__).resolve().parents[1] / "experiments"

full_scale = pytest.mark.skipif(
    os.environ.get("HIBP_TRAINER_FULL") != "1",
    reason="hours of compute; set HIBP_TRAINER_FULL=1 to run",
)


def test_find_plateau():
    curve = [0.30, 0.41, 0.42, 0.41, 0.58, 0.60, 0.74, 0.75]
    assert find_plateau(curve, 0.41, 0.02) == 1
    assert find_plateau(curve, 0.59, 0.02) == 4
    assert find_plateau(curve, 0.90, 0.02) is None


def _write_config(tmp_path, name, overrides):
    cfg = json.loads((EXPERIMENTS / f"{name}.json").read_text())
    cfg.update(overrides)
    p = tmp_path / f"{name}_toy.json"
    p.write_text(json.dumps(cfg))
    return p


TOY_COMMON = {
    "ell": 2,
    "n_layers": 2,
    "d": 16,
    "d_prime": 32,
    "val_n": 200,
    "grid_n": 400,
}


def test_pipeline_mlm_staircase_toy(tmp_path):
    cfg = _write_config(tmp_path, "mlm_staircase", {**TOY_COMMON, "P": 256, "epochs": 3})
    verdict = run_config(cfg, workdir=tmp_path / "run")
    assert verdict["experiment"] == "mlm_staircase"
    assert {"final_acc_k0", "ref_k_bp0", "plateaus_in_order", "passed"} <= set(verdict)
    assert (tmp_path / "run" / "verdict.json").exists()
    assert (tmp_path / "run" / "train_log.jsonl").exists()


def test_pipeline_classifier_dynamics_toy(tmp_path):
    cfg = _write_config(
        tmp_path, "classifier_dynamics", {**TOY_COMMON, "P": 256, "epochs": 2, "target_matched": 0.0,
                                          "tolerances": {"mismatched": 1.0}}
    )
    verdict = run_config(cfg, workdir=tmp_path / "run")
    assert verdict["passed"] is True  # trivial thresholds: checks plumbing only
    assert set(verdict["gaps"]) == {0, 1, 2}


def test_pipeline_attention_blocks_toy(tmp_path):
    cfg = _write_config(
        tmp_path, "attention_blocks",
        {**TOY_COMMON, "P": 256, "epochs": 2, "ks": [0, 1], "map_inputs": 128, "min_ratio": 0.0},
    )
    verdict = run_config(cfg, workdir=tmp_path / "run")
    assert set(verdict["per_k"]) == {"0", "1"}
    assert (tmp_path / "run" / "attention_k0" / "layer1.csv").exists()


def test_pipeline_pretrain_benefit_toy(tmp_path):
    cfg = _write_config(
        tmp_path, "pretrain_benefit",
        {**TOY_COMMON, "mlm_P": 256, "mlm_epochs": 2, "cls_epochs": 1,
         "P_grid": [64, 128], "target": 0.0},
    )
    verdict = run_config(cfg, workdir=tmp_path / "run")
    assert verdict["min_P_pretrained"] == 64  # target 0 met at the first P
    assert verdict["min_P_scratch"] == 64


@full_scale
def test_criterion_7_mlm_staircase():
    verdict = run_config(EXPERIMENTS / "mlm_staircase.json", workdir="runs/mlm_staircase")
    assert verdict["passed"], verdict


@full_scale
def test_criterion_8_classifier_dynamics():
    verdict = run_config(EXPERIMENTS / "classifier_dynamics.json", workdir="runs/classifier_dynamics")
    assert verdict["passed"], verdict


@full_scale
def test_criterion_9_attention_blocks():
    verdict = run_config(EXPERIMENTS / "attention_blocks.json", workdir="runs/attention_blocks")
    assert verdict["passed"], verdict


@full_scale
def test_criterion_10_pretrain_benefit():
    verdict = run_config(EXPERIMENTS / "pretrain_benefit.json", workdir="runs/pretrain_benefit")
    assert verdict["passed"], verdict
