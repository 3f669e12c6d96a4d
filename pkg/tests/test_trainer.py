"""Tests for the training loop: loss log, checkpoints, resume, divergence."""
import math

import numpy as np
import pytest

from config import settings
from core.checkpoint import load_checkpoint
from core.errors import CheckpointError, CorpusError, ShapeError, TrainingDivergedError
from core.models import LightSetting, SceneSample
from core.trainer import (LOSS_ORDER, Trainer, batch_indices, format_loss_line, load_dataset,
                          train)
from tests.test_utils import make_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return make_corpus(tmp_path_factory.mktemp("corpus"), scenes=1, resolution=64)


def _log_rows(out_dir):
    rows = []
    for line in (out_dir / settings.LOSS_LOG_NAME).read_text().splitlines():
        step, *pairs = line.split("\t")
        rows.append((int(step), {k: float(v) for k, v in (p.split("=") for p in pairs)}))
    return rows


class TestDataset:
    def test_load_reduces_to_model_resolution(self, corpus):
        dataset = load_dataset(corpus, 32, factor=2)
        assert len(dataset) == 78
        x, target, free = dataset.batch([0, 5])
        assert x.shape == target.shape == free.shape == (2, 3, 32, 32)

    def test_sample_carries_lights_and_seed(self, corpus):
        dataset = load_dataset(corpus, 32, factor=2)
        sample = dataset.sample(0)
        assert sample.source == LightSetting("N", 2500)
        assert sample.target == LightSetting.target()
        assert sample.scene_seed == dataset.rows[0].scene_seed
        assert sample.input_image.shape == sample.shadow_free.shape == (32, 32, 3)

    def test_sample_rejects_mixed_resolutions(self):
        with pytest.raises(ShapeError, match="share one resolution"):
            SceneSample(np.zeros((32, 32, 3)), np.zeros((16, 16, 3)), np.zeros((32, 32, 3)),
                        LightSetting("N", 2500))

    def test_resolution_mismatch(self, corpus):
        with pytest.raises(CorpusError, match="does not match"):
            load_dataset(corpus, 32, factor=1, limit=1)

    def test_missing_image(self, tmp_path):
        root = make_corpus(tmp_path / "c", scenes=1, resolution=32)
        (root / "0" / "N_2500.png").unlink()
        with pytest.raises(CorpusError, match="missing"):
            load_dataset(root, 32)

    def test_batch_indices_pure(self):
        np.testing.assert_array_equal(batch_indices(7, 3, 4, 78), batch_indices(7, 3, 4, 78))
        assert batch_indices(7, 3, 4, 78).max() < 78


class TestTrainingRun:
    def test_loss_log_and_checkpoints(self, tmp_path, corpus, tiny_config):
        summary = train(tiny_config, corpus, tmp_path)
        rows = _log_rows(tmp_path)
        assert [step for step, _ in rows] == [1, 2, 3, 4]
        assert set(rows[0][1]) == set(LOSS_ORDER)
        assert all(math.isfinite(v) for _, values in rows for v in values.values())
        assert (tmp_path / "checkpoint_000002.mcnw").is_file()
        assert (tmp_path / "checkpoint_000004.mcnw").is_file()
        assert (tmp_path / settings.FINAL_CHECKPOINT_NAME).is_file()
        assert load_checkpoint(tmp_path / settings.FINAL_CHECKPOINT_NAME).step == 4
        run_log = (tmp_path / settings.RUN_LOG_NAME).read_text()
        assert "Training variant full" in run_log
        assert "full total parameters" in run_log
        assert summary.variant == "full"
        assert summary.losses == pytest.approx(rows[-1][1], rel=1e-8)

    def test_deterministic(self, tmp_path, corpus, tiny_config):
        train(tiny_config, corpus, tmp_path / "a")
        train(tiny_config, corpus, tmp_path / "b")
        assert (tmp_path / "a" / settings.LOSS_LOG_NAME).read_bytes() == \
            (tmp_path / "b" / settings.LOSS_LOG_NAME).read_bytes()

    def test_reconstruction_only(self, tmp_path, corpus, tiny_config):
        train(tiny_config.with_overrides(adversarial=False, steps=2), corpus, tmp_path)
        _, values = _log_rows(tmp_path)[0]
        assert not any(name.startswith(("d_", "g_adv")) for name in values)
        assert values["total"] == pytest.approx(values["l1_total"], rel=1e-6)

    def test_ablation_variant(self, tmp_path, corpus, tiny_config):
        summary = train(tiny_config.with_overrides(steps=1), corpus, tmp_path, ablate="cal+ms")
        assert summary.variant == "no_cal_no_ms"
        assert "no_cal_no_ms total parameters" in (tmp_path / settings.RUN_LOG_NAME).read_text()
        assert load_checkpoint(tmp_path / settings.FINAL_CHECKPOINT_NAME).bundle.arch.variant == \
            "no_cal_no_ms"


class TestResume:
    def test_resume_matches_uninterrupted(self, tmp_path, corpus, tiny_config):
        train(tiny_config, corpus, tmp_path / "straight")
        train(tiny_config.with_overrides(steps=2), corpus, tmp_path / "split")
        train(tiny_config, corpus, tmp_path / "split",
              resume=tmp_path / "split" / settings.FINAL_CHECKPOINT_NAME)
        straight = _log_rows(tmp_path / "straight")
        resumed = _log_rows(tmp_path / "split")
        assert [step for step, _ in resumed] == [1, 2, 3, 4]
        for (_, expected), (_, actual) in zip(straight, resumed):
            for name, value in expected.items():
                assert actual[name] == pytest.approx(value, rel=1e-6, abs=1e-9)

    def test_architecture_mismatch(self, tmp_path, corpus, tiny_config):
        train(tiny_config.with_overrides(steps=1), corpus, tmp_path / "run")
        with pytest.raises(CheckpointError, match="architecture"):
            train(tiny_config, corpus, tmp_path / "other", ablate="cal",
                  resume=tmp_path / "run" / settings.FINAL_CHECKPOINT_NAME)


class TestDivergence:
    def test_nan_weight_stops_run(self, tmp_path, corpus, tiny_config):
        config = tiny_config.with_overrides(adversarial=False)
        trainer = Trainer(config, load_dataset(corpus, 32, factor=2), tmp_path)
        trainer.gen_params.tensors()[0].data[...] = np.nan
        with pytest.raises(TrainingDivergedError) as info:
            trainer.run()
        assert info.value.step == 1
        assert not (tmp_path / settings.FINAL_CHECKPOINT_NAME).exists()

    def test_format_loss_line_order(self):
        line = format_loss_line(3, {"total": 1.5, "l1_scene": 0.25})
        assert line == "3\tl1_scene=0.25\ttotal=1.5"


class TestOutputErrors:
    def test_run_directory_blocked_by_file(self, tmp_path, corpus, tiny_config):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        trainer = Trainer(tiny_config.with_overrides(steps=1), load_dataset(corpus, 32, factor=2),
                          blocker / "run")
        with pytest.raises(CorpusError, match="cannot write run output"):
            trainer.run()
