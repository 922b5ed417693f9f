import numpy as np
import pytest

from sspe.errors import ConfigError
from sspe.posehead import (
    VARIANTS,
    Arch,
    TrainConfig,
    forward,
    init_params,
    load_checkpoint,
    predict,
    train,
)
from sspe.models import farthest_point_sampling

from conftest import make_dataset

SMALL = dict(feat_dim=16, phi_s_hidden=(8, 12), phi_g_hidden=(16, 8))


@pytest.fixture(scope="module")
def tiny_dataset(blob_model):
    return make_dataset(blob_model, n=3, m=8, scenes=4, seed=5)


class TestTrain:
    def test_smoke_training_reduces_loss(self, tiny_dataset):
        arch = Arch(n=3, m=8, **SMALL)
        cfg = TrainConfig(seed=0, epochs=50, batch_size=4)
        _, history = train(tiny_dataset, cfg, VARIANTS["sspe-ours"], arch=arch)
        assert history[-1]["total"] < history[0]["total"]

    def test_zero_epochs_equals_initialization(self, tiny_dataset):
        arch = Arch(n=3, m=8, **SMALL)
        cfg = TrainConfig(seed=3, epochs=0, batch_size=4)
        params, history = train(tiny_dataset, cfg, VARIANTS["sspe-ours"], arch=arch)
        assert history == []
        assert params.allclose(init_params(arch, VARIANTS["sspe-ours"], seed=3))

    def test_deterministic_across_runs(self, tiny_dataset):
        arch = Arch(n=3, m=8, **SMALL)
        cfg = TrainConfig(seed=11, epochs=5, batch_size=2)
        a, _ = train(tiny_dataset, cfg, VARIANTS["sspe-ours"], arch=arch)
        b, _ = train(tiny_dataset, cfg, VARIANTS["sspe-ours"], arch=arch)
        assert a.allclose(b)

    def test_batch_larger_than_dataset_rejected(self, tiny_dataset):
        cfg = TrainConfig(seed=0, epochs=1, batch_size=100)
        with pytest.raises(ConfigError):
            train(tiny_dataset, cfg, VARIANTS["sspe-ours"], arch=Arch(n=3, m=8, **SMALL))

    def test_checkpoint_written(self, tiny_dataset, tmp_path):
        arch = Arch(n=3, m=8, **SMALL)
        cfg = TrainConfig(seed=0, epochs=2, batch_size=4)
        out = tmp_path / "ckpt.json"
        params, _ = train(tiny_dataset, cfg, VARIANTS["sspe-ours"], arch=arch, out_path=out)
        assert load_checkpoint(out).allclose(params)

    def test_history_logs_loss_parts(self, tiny_dataset):
        arch = Arch(n=3, m=8, **SMALL)
        cfg = TrainConfig(seed=0, epochs=3, batch_size=4)
        lines = []
        _, history = train(tiny_dataset, cfg, VARIANTS["sspe-ours"], arch=arch, log=lines.append)
        assert len(history) == 3
        assert len(lines) == 3
        assert all({"epoch", "pose_loss", "triplet_loss", "total"} <= set(h) for h in history)

    def test_triplet_disabled_variant_has_zero_lt(self, tiny_dataset):
        arch = Arch(n=3, m=8, **SMALL)
        cfg = TrainConfig(seed=0, epochs=2, batch_size=4)
        _, history = train(tiny_dataset, cfg, VARIANTS["sspe-lc"], arch=arch)
        assert all(h["triplet_loss"] == 0.0 for h in history)


class TestPredict:
    def test_deterministic(self, tiny_dataset):
        arch = Arch(n=3, m=8, **SMALL)
        params = init_params(arch, VARIANTS["sspe-ours"], seed=0)
        a = predict(params, tiny_dataset[0].cset)
        b = predict(params, tiny_dataset[0].cset)
        assert np.array_equal(a.q, b.q) and np.array_equal(a.t, b.t)

    def test_arch_mismatch_config_error(self, blob_model, tiny_dataset):
        arch = Arch(n=4, m=8, **SMALL)
        params = init_params(arch, VARIANTS["sspe-ours"], seed=0)
        with pytest.raises(ConfigError):
            predict(params, tiny_dataset[0].cset)  # dataset has n=3

    def test_overfit_one_pose(self, blob_model):
        """A head overfit to a single noise-free pose predicts it well."""
        from sspe.posehead import pose_loss

        scenes = make_dataset(blob_model, n=3, m=8, scenes=1, seed=77)
        arch = Arch(n=3, m=8, **SMALL)
        cfg = TrainConfig(seed=0, epochs=300, batch_size=1)
        params, history = train(scenes, cfg, VARIANTS["sspe-ours"], arch=arch)
        rec = scenes[0]
        lp = pose_loss(predict(params, rec.cset), rec.cset.pose_gt, rec.cset.keypoints3d)
        assert lp <= history[-1]["pose_loss"] * 2 + 1e-9
