"""Training harness: config parsing, CSV logging, and short smoke runs of
both loops (a handful of steps; convergence is covered by the acceptance
suite)."""

import csv

import numpy as np
import pytest

from fsnet import checkpoint as ckpt
from fsnet.train import (CsvLogger, TrainConfig, evaluate_depth, evaluate_seg,
                         make_depth_dataset, make_seg_dataset, train_depth,
                         train_seg)


class TestTrainConfig:
    def test_defaults_valid(self):
        cfg = TrainConfig()
        assert cfg.task == "depth" and cfg.steps == 2000

    def test_resolution_guard(self):
        with pytest.raises(ValueError):
            TrainConfig(height=30)

    def test_task_guard(self):
        with pytest.raises(ValueError):
            TrainConfig(task="pose")

    def test_from_file(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("# depth toy run\ntask = depth\nsteps=12\n"
                        "lr = 3e-4\njitter = true\nvariant=S\n")
        cfg = TrainConfig.from_file(path)
        assert cfg.steps == 12 and cfg.lr == 3e-4
        assert cfg.jitter is True and cfg.variant == "S"

    def test_from_file_rejects_unknown_key(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("nonsense=1\n")
        with pytest.raises(ValueError, match="unknown config keys"):
            TrainConfig.from_file(path)

    def test_from_file_rejects_malformed_line(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("steps\n")
        with pytest.raises(ValueError, match="malformed"):
            TrainConfig.from_file(path)

    def test_flat_dict_round_trips_through_file(self, tmp_path):
        cfg = TrainConfig(steps=7, lr=2e-4, flip=True)
        path = tmp_path / "cfg.txt"
        path.write_text("".join(f"{k}={v}\n"
                                for k, v in cfg.as_flat_dict().items()))
        assert TrainConfig.from_file(path) == cfg


class TestCsvLogger:
    def test_rows_written(self, tmp_path):
        path = tmp_path / "log.csv"
        log = CsvLogger(path, ["step", "loss"])
        log.row({"step": 1, "loss": 0.5})
        log.row({"step": 2, "loss": 0.25, "extra": "ignored"})
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "loss"]
        assert rows[1] == ["1", "0.5"] and rows[2] == ["2", "0.25"]

    def test_none_path_is_noop(self):
        CsvLogger(None, ["a"]).row({"a": 1})


class TestDatasets:
    def test_depth_dataset_deterministic(self):
        cfg = TrainConfig(num_samples=2)
        a, _ = make_depth_dataset(cfg)
        b, _ = make_depth_dataset(cfg)
        np.testing.assert_array_equal(a[0].frames_clean[1], b[0].frames_clean[1])
        np.testing.assert_array_equal(a[1].depth, b[1].depth)

    def test_seg_dataset_shapes(self):
        cfg = TrainConfig(task="segmentation", num_samples=3)
        images, labels = make_seg_dataset(cfg)
        assert images.shape == (3, 3, cfg.height, cfg.width)
        assert labels.shape == (3, cfg.height, cfg.width)


@pytest.fixture(scope="module")
def tiny_depth_cfg():
    return TrainConfig(steps=3, num_samples=2, height=16, width=16,
                       log_every=1, eval_every=2)


class TestDepthLoop:
    def test_smoke_run_writes_outputs(self, tiny_depth_cfg, tmp_path):
        out = train_depth(tiny_depth_cfg, out_dir=str(tmp_path))
        assert out["steps_run"] == 3
        assert set(out["final"]) == {"abs_rel", "warp_l1"}
        assert (tmp_path / "depth_log.csv").exists()
        assert (tmp_path / "depth.fsln").exists()
        config = ckpt.decode_config(
            ckpt.read_tensors(tmp_path / "depth.fsln")["__config__"])
        assert config["steps"] == "3"

    def test_loss_is_finite_and_positive(self, tiny_depth_cfg):
        out = train_depth(tiny_depth_cfg)
        totals = [row["total"] for row in out["history"]]
        assert all(np.isfinite(totals)) and all(t >= 0 for t in totals)

    def test_task_guard(self):
        with pytest.raises(ValueError):
            train_depth(TrainConfig(task="segmentation"))

    def test_evaluate_depth_keys(self, tiny_depth_cfg):
        out = train_depth(tiny_depth_cfg)
        snippets, K = make_depth_dataset(tiny_depth_cfg)
        result = evaluate_depth(out["net"], snippets, K)
        assert {"abs_rel", "rms", "delta1", "warp_l1"} <= set(result)


class TestSegLoop:
    def test_smoke_run(self, tmp_path):
        cfg = TrainConfig(task="segmentation", steps=3, num_samples=2,
                          height=16, width=16, log_every=1, eval_every=2)
        out = train_seg(cfg, out_dir=str(tmp_path))
        assert out["steps_run"] == 3
        assert "mean_iou" in out["final"]
        assert (tmp_path / "seg.fsln").exists()
        assert (tmp_path / "seg_log.csv").exists()

    def test_task_guard(self):
        with pytest.raises(ValueError):
            train_seg(TrainConfig(task="depth"))
