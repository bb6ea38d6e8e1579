import json

import numpy as np
import pytest
import torch

from styleshift.errors import (
    DataError,
    InvalidConfigError,
    InvalidInputError,
    NumericalError,
)
from styleshift.losses import LossWeights
from styleshift.networks import NetworkConfig
from styleshift.translation import (
    TrainingConfig,
    TranslationState,
    generate_fake_dataset,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    to_tensor,
    train,
    train_step,
)

TOY_NET = NetworkConfig(base_channels=4, disc_base_channels=4)


def toy_cfg(**kwargs):
    kwargs.setdefault("network", TOY_NET)
    return TrainingConfig(**kwargs)


def toy_patch(seed, size=32):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)


class TestLrSchedule:
    @pytest.mark.parametrize("epoch,expected", [
        (10, 0.001), (15, 0.001), (20, 0.0005), (24, 0.0001),
    ])
    def test_spot_values(self, epoch, expected):
        assert lr_schedule(epoch, TrainingConfig()) == pytest.approx(expected,
                                                                     rel=1e-9)

    def test_non_increasing(self):
        cfg = TrainingConfig()
        rates = [lr_schedule(e, cfg) for e in range(cfg.num_epochs)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))
        assert rates[-1] == pytest.approx(cfg.base_lr / (cfg.num_epochs -
                                                         cfg.decay_epoch))

    @pytest.mark.parametrize("epoch", [-1, 25, 100])
    def test_out_of_range(self, epoch):
        with pytest.raises(InvalidInputError):
            lr_schedule(epoch, TrainingConfig())

    def test_invalid_decay_epoch(self):
        with pytest.raises(InvalidConfigError):
            TrainingConfig(num_epochs=10, decay_epoch=10)


class TestTrainStep:
    def test_zero_weights_zero_lr_is_noop(self):
        cfg = toy_cfg(weights=LossWeights(0, 0, 0, 0), rng_seed=3)
        state = TranslationState(cfg)
        state.set_lr(0.0)
        before = {k: v.clone() for k, v in state.model.state_dict().items()}
        a, b = to_tensor(toy_patch(0)), to_tensor(toy_patch(1))
        train_step(a, b, state, cfg)
        after = state.model.state_dict()
        for key in before:
            assert torch.equal(before[key], after[key]), key

    def test_seeded_step_is_reproducible(self):
        results = []
        for _ in range(2):
            cfg = toy_cfg(rng_seed=5)
            state = TranslationState(cfg)
            a, b = to_tensor(toy_patch(2)), to_tensor(toy_patch(3))
            report, state = train_step(a, b, state, cfg)
            results.append((report.as_floats(),
                            {k: v.clone() for k, v in state.model.state_dict().items()}))
        assert results[0][0] == results[1][0]
        for key in results[0][1]:
            assert torch.equal(results[0][1][key], results[1][1][key])

    def test_discriminator_untouched_when_adversarial_off(self):
        cfg = toy_cfg(weights=LossWeights(10, 10, 10, 0), rng_seed=7)
        state = TranslationState(cfg)
        disc_before = {
            k: v.clone() for k, v in state.model.state_dict().items()
            if k.startswith("discriminator")
        }
        gen_before = {
            k: v.clone() for k, v in state.model.state_dict().items()
            if not k.startswith("discriminator")
        }
        a, b = to_tensor(toy_patch(4)), to_tensor(toy_patch(5))
        train_step(a, b, state, cfg)
        after = state.model.state_dict()
        for key, value in disc_before.items():
            assert torch.equal(value, after[key]), key
        assert any(
            not torch.equal(value, after[key]) for key, value in gen_before.items()
        )

    def test_one_ema_update_per_domain(self):
        cfg = toy_cfg(rng_seed=9)
        state = TranslationState(cfg)
        a, b = to_tensor(toy_patch(6)), to_tensor(toy_patch(7))
        with torch.no_grad():
            emb_a, _ = state.model.encoder_A(a)
            emb_b, _ = state.model.encoder_B(b)
        from styleshift.core_math import instance_stats

        expected_a = 0.05 * instance_stats(emb_a).mu
        expected_b = 0.05 * instance_stats(emb_b).mu
        train_step(a, b, state, cfg)
        assert torch.allclose(state.global_stats_A.mu, expected_a, atol=1e-6)
        assert torch.allclose(state.global_stats_B.mu, expected_b, atol=1e-6)
        assert (state.global_stats_A.sigma >= 0).all()
        assert torch.isfinite(state.global_stats_A.mu).all()

    def test_nan_input_aborts_with_term_name(self):
        cfg = toy_cfg(rng_seed=11)
        state = TranslationState(cfg)
        bad = to_tensor(toy_patch(8))
        bad[0, 0, 0, 0] = float("nan")
        with pytest.raises(NumericalError, match="cross"):
            train_step(bad, to_tensor(toy_patch(9)), state, cfg)


class TestTrain:
    def test_iteration_count(self, tmp_path):
        cfg = toy_cfg(num_epochs=3, decay_epoch=1, rng_seed=1)
        dataset_a = [toy_patch(i) for i in range(10)]
        dataset_b = [toy_patch(100 + i) for i in range(7)]
        train(dataset_a, dataset_b, cfg, tmp_path)
        lines = (tmp_path / "logs" / "training_log.jsonl").read_text().splitlines()
        assert len(lines) == 3 * 7
        first, last = json.loads(lines[0]), json.loads(lines[-1])
        assert list(first) == ["iteration", "epoch", "lr", "cross", "self",
                               "grad", "adv_g", "adv_d", "total_g", "total_d"]
        assert first["iteration"] == 1 and last["iteration"] == 21
        assert last["epoch"] == 2

    def test_global_stats_move_off_init(self, tmp_path):
        cfg = toy_cfg(num_epochs=2, decay_epoch=1, rng_seed=2)
        state = train([toy_patch(0)], [toy_patch(1)], cfg)
        assert not (state.global_stats_A.mu == 0).all()
        assert not (state.global_stats_B.sigma == 0).all()

    def test_same_seed_identical_checkpoints(self, tmp_path):
        blobs = []
        for run in range(2):
            out = tmp_path / f"run{run}"
            cfg = toy_cfg(num_epochs=2, decay_epoch=1, rng_seed=3)
            train([toy_patch(i) for i in range(3)],
                  [toy_patch(50 + i) for i in range(3)], cfg, out)
            blobs.append((out / "checkpoints" / "final.npz").read_bytes())
        assert blobs[0] == blobs[1]

    def test_empty_dataset_rejected(self):
        with pytest.raises(InvalidInputError):
            train([], [toy_patch(0)], toy_cfg())


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = toy_cfg(num_epochs=2, decay_epoch=1, rng_seed=4)
        state = train([toy_patch(0)], [toy_patch(1)], cfg)
        rng = np.random.default_rng(9)
        path = tmp_path / "ck.npz"
        save_checkpoint(path, state, cfg, rng)
        loaded, loaded_cfg, loaded_rng = load_checkpoint(path)
        assert loaded_cfg == cfg
        assert loaded.epoch == state.epoch
        for (k1, v1), (k2, v2) in zip(state.model.state_dict().items(),
                                      loaded.model.state_dict().items()):
            assert k1 == k2 and torch.equal(v1, v2)
        assert torch.equal(loaded.global_stats_A.mu, state.global_stats_A.mu)
        assert torch.equal(loaded.global_stats_B.sigma, state.global_stats_B.sigma)
        s1 = state.opt_g.state_dict()["state"]
        s2 = loaded.opt_g.state_dict()["state"]
        assert s1.keys() == s2.keys()
        for idx in s1:
            assert torch.equal(s1[idx]["exp_avg"], s2[idx]["exp_avg"])
        assert loaded_rng.integers(1000) == np.random.default_rng(9).integers(1000)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "none.npz")


@pytest.fixture(scope="module")
def trained():
    cfg = toy_cfg(num_epochs=2, decay_epoch=1, rng_seed=6)
    state = train([toy_patch(i) for i in range(2)],
                  [toy_patch(20 + i) for i in range(2)], cfg)
    return state, cfg


class TestGenerateFakeDataset:
    def test_bit_identical_repeats(self, trained):
        state, cfg = trained
        images = [toy_patch(30), toy_patch(31)]
        out1 = generate_fake_dataset(state, images, "A", cfg.eps, 32, 8)
        out2 = generate_fake_dataset(state, images, "A", cfg.eps, 32, 8)
        for f1, f2 in zip(out1, out2):
            np.testing.assert_array_equal(f1, f2)

    def test_shape_preserved_with_tiling(self, trained):
        state, cfg = trained
        big = np.random.default_rng(0).integers(0, 256, size=(80, 80, 3),
                                                dtype=np.uint8)
        out = generate_fake_dataset(state, [big], "B", cfg.eps, 32, 8)
        assert out[0].shape == (80, 80, 3)
        assert out[0].dtype == np.uint8

    def test_unfinalized_stats_rejected(self):
        cfg = toy_cfg(rng_seed=8)
        state = TranslationState(cfg)
        with pytest.raises(DataError):
            generate_fake_dataset(state, [toy_patch(0)], "A", cfg.eps, 32, 8)

    def test_unknown_domain_rejected(self, trained):
        state, cfg = trained
        with pytest.raises(InvalidInputError):
            generate_fake_dataset(state, [toy_patch(0)], "C", cfg.eps, 32, 8)
