"""Training-loop tests: determinism, schedule handling, checkpoints, aborts."""

import numpy as np
import pytest

from specsr.errors import TrainingError
from specsr.network import NetworkSpec, build_network
from specsr.optim import TrainConfig, load_checkpoint
from specsr.trainer import train, train_on_patches, write_loss_log
from synth import subspace_cube

TINY_SPEC = NetworkSpec(in_channels=3, out_channels=4, num_scales=1,
                        layers_per_block=1, growth_filters=4, stem_filters=4,
                        dropout_rate=0.5)


def tiny_dataset(rng, n_images=2, size=64):
    dataset = []
    for i in range(n_images):
        cube = subspace_cube(4, size, size, 2, rng)
        img = rng.random((3, size, size)).astype(np.float32)
        dataset.append((f"img{i}", img, cube))
    return dataset


def tiny_config(**kw):
    defaults = dict(
        lr_schedule=[(1, 0.002)],
        batch_size=4,
        patches_per_image=8,
        rng_seed=11,
        l2_coeff=1e-6,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestDeterminism:
    def test_same_seed_identical_history(self, rng):
        dataset = tiny_dataset(rng)
        histories = []
        for _ in range(2):
            net = build_network(TINY_SPEC, np.random.default_rng(5))
            res = train(net, dataset,
                        tiny_config(lr_schedule=[(2, 0.002)], patches_per_image=20))
            histories.append(res.history)
        assert histories[0] and histories[0] == histories[1]

    def test_different_seed_differs(self, rng):
        dataset = tiny_dataset(rng)
        results = []
        for seed in (1, 2):
            net = build_network(TINY_SPEC, np.random.default_rng(5))
            res = train(net, dataset,
                        tiny_config(rng_seed=seed, lr_schedule=[(2, 0.002)],
                                    patches_per_image=20))
            results.append(res.history)
        assert results[0] and results[0] != results[1]


class TestSchedule:
    def test_lr_switches_at_epoch_boundary(self, rng):
        dataset = tiny_dataset(rng)
        net = build_network(TINY_SPEC, np.random.default_rng(5))
        cfg = tiny_config(lr_schedule=[(1, 0.002), (1, 0.0002)],
                          patches_per_image=20)
        res = train(net, dataset, cfg)
        # 40 patches / batch 4 = 10 steps per epoch; log cadence 10
        by_epoch = {}
        for row in res.history:
            by_epoch.setdefault(row["epoch"], set()).add(row["lr"])
        assert by_epoch[1] == {0.002}
        assert by_epoch[2] == {0.0002}

    def test_total_steps(self, rng):
        dataset = tiny_dataset(rng)
        net = build_network(TINY_SPEC, np.random.default_rng(5))
        res = train(net, dataset, tiny_config(patches_per_image=20,
                                              lr_schedule=[(2, 0.001)]))
        assert res.steps == 20  # 2 epochs x 10 steps
        assert res.epochs == 2


class TestCheckpoints:
    def test_phase_and_final_checkpoints(self, rng, tmp_path):
        dataset = tiny_dataset(rng)
        net = build_network(TINY_SPEC, np.random.default_rng(5))
        cfg = tiny_config(lr_schedule=[(1, 0.002), (1, 0.0002)])
        res = train(net, dataset, cfg, out_dir=tmp_path)
        names = sorted(p.name for p in res.checkpoints)
        assert names == ["checkpoint_epoch1.ckpt", "checkpoint_epoch2.ckpt",
                         "checkpoint_final.ckpt"]
        header, arrays = load_checkpoint(tmp_path / "checkpoint_final.ckpt")
        assert header["spec_hash"] == TINY_SPEC.spec_hash()
        assert "spec_config" in header
        for p in net.store.params():
            assert np.allclose(arrays[p.name], p.value.astype(np.float32))

    def test_abort_keeps_last_good_checkpoint(self, rng, tmp_path):
        dataset = tiny_dataset(rng)
        # poison one target so the first loss is non-finite
        dataset[0][2].data[0, 0, 0] = np.nan
        net = build_network(TINY_SPEC, np.random.default_rng(5))
        with pytest.raises(TrainingError):
            train(net, dataset, tiny_config(), out_dir=tmp_path)
        assert (tmp_path / "checkpoint_last_good.ckpt").exists()


class TestTrainOnPatches:
    def test_loss_decreases(self, rng):
        net = build_network(TINY_SPEC, np.random.default_rng(0))
        x = rng.random((4, 3, 64, 64)).astype(np.float32)
        t = rng.random((4, 4, 64, 64)).astype(np.float32) * 0.2
        cfg = tiny_config(batch_size=4, dropout_rate=0.5)
        res = train_on_patches(net, x, t, steps=60, lr=1e-3, cfg=cfg,
                               rng=np.random.default_rng(2))
        assert res.final_loss < res.initial_loss

    def test_history_cadence(self, rng):
        net = build_network(TINY_SPEC, np.random.default_rng(0))
        x = rng.random((2, 3, 64, 64)).astype(np.float32)
        t = rng.random((2, 4, 64, 64)).astype(np.float32)
        res = train_on_patches(net, x, t, steps=25, lr=1e-4, cfg=tiny_config(),
                               rng=np.random.default_rng(2))
        steps = [row["step"] for row in res.history]
        assert steps == [10, 20, 25]


class TestLossLog:
    def test_format(self, tmp_path):
        history = [
            {"step": 10, "epoch": 1, "lr": 0.002, "loss": 1.5},
            {"step": 20, "epoch": 2, "lr": 0.0002, "loss": 0.25},
        ]
        path = tmp_path / "log.csv"
        write_loss_log(path, history)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "step,epoch,lr,loss"
        assert lines[1] == "10,1,0.002,1.5"
        assert lines[2] == "20,2,0.0002,0.25"
