import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from styleshift.core_math import (
    ChannelStats,
    adain,
    ema_update,
    instance_stats,
    sobel_gradients,
)
from styleshift.errors import InvalidConfigError, InvalidInputError

from oracles import ema_iterated, population_stats, sobel_naive


def stats(mu, sigma):
    return ChannelStats(torch.tensor(mu, dtype=torch.float32),
                        torch.tensor(sigma, dtype=torch.float32))


class TestChannelStats:
    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            stats([0.0, 0.0], [1.0])

    def test_negative_sigma_rejected(self):
        with pytest.raises(InvalidInputError):
            stats([0.0], [-0.1])


class TestInstanceStats:
    def test_all_zeros(self):
        s = instance_stats(torch.zeros(1, 2, 4, 4))
        assert torch.equal(s.mu, torch.zeros(2))
        assert torch.equal(s.sigma, torch.zeros(2))

    def test_hand_computed_moments(self):
        emb = torch.tensor([1.0, 3.0, 5.0, 7.0]).reshape(1, 1, 2, 2)
        s = instance_stats(emb)
        assert s.mu.item() == pytest.approx(4.0, abs=1e-6)
        assert s.sigma.item() == pytest.approx(np.sqrt(5.0), abs=1e-6)

    def test_matches_population_oracle(self):
        rng = np.random.default_rng(0)
        emb = rng.normal(size=(2, 3, 5, 7))
        s = instance_stats(torch.from_numpy(emb))
        for c in range(3):
            mu, sigma = population_stats(emb[:, c])
            assert s.mu[c].item() == pytest.approx(mu, abs=1e-6)
            assert s.sigma[c].item() == pytest.approx(sigma, abs=1e-6)

    def test_translation_invariance(self):
        x = torch.randn(1, 4, 6, 6, generator=torch.Generator().manual_seed(3))
        a, b = instance_stats(x), instance_stats(x + 7.0)
        assert torch.allclose(b.mu, a.mu + 7.0, atol=1e-5)
        assert torch.allclose(b.sigma, a.sigma, atol=1e-5)

    def test_empty_tensor_rejected(self):
        with pytest.raises(InvalidInputError):
            instance_stats(torch.zeros(1, 2, 0, 4))


class TestAdain:
    def test_identity_restyling(self):
        x = torch.randn(1, 2, 8, 8, generator=torch.Generator().manual_seed(0))
        # per-channel standardized input, unit target
        s = instance_stats(x)
        std = (x - s.mu.view(1, -1, 1, 1)) / s.sigma.view(1, -1, 1, 1)
        out = adain(std, stats([0.0, 0.0], [1.0, 1.0]), eps=1e-5)
        assert torch.allclose(out, std, atol=1e-4)

    def test_stats_match_target(self):
        x = torch.randn(1, 1, 8, 8, generator=torch.Generator().manual_seed(1))
        out = adain(x, stats([5.0], [2.0]), eps=1e-5)
        s = instance_stats(out)
        assert s.mu.item() == pytest.approx(5.0, abs=1e-4)
        assert s.sigma.item() == pytest.approx(2.0, abs=1e-4)

    def test_degenerate_channel(self):
        out = adain(torch.full((1, 1, 4, 4), 2.0), stats([3.0], [1.0]), eps=1e-5)
        assert torch.allclose(out, torch.full((1, 1, 4, 4), 3.0), atol=1e-6)

    def test_channel_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            adain(torch.zeros(1, 2, 4, 4), stats([0.0], [1.0]))

    def test_round_trip(self):
        eps = 1e-5
        x = torch.randn(1, 3, 8, 8, generator=torch.Generator().manual_seed(2))
        out = adain(x, instance_stats(x), eps=eps)
        assert (out - x).abs().max().item() < 10 * eps

    def test_idempotence(self):
        eps = 1e-5
        x = torch.randn(1, 3, 8, 8, generator=torch.Generator().manual_seed(4))
        target = stats([1.0, -2.0, 0.5], [0.5, 2.0, 1.5])
        once = adain(x, target, eps=eps)
        twice = adain(once, target, eps=eps)
        assert (twice - once).abs().max().item() < 10 * eps

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-3.0, 3.0), st.floats(0.1, 4.0))
    def test_stat_matching_property(self, seed, target_mu, target_sigma):
        g = torch.Generator().manual_seed(seed)
        x = torch.randn(1, 2, 8, 8, generator=g, dtype=torch.float64) * 3.0
        out = adain(x, ChannelStats(torch.full((2,), target_mu, dtype=torch.float64),
                                    torch.full((2,), target_sigma, dtype=torch.float64)),
                    eps=1e-5)
        s = instance_stats(out)
        assert torch.allclose(s.mu, torch.full((2,), target_mu, dtype=torch.float64),
                              atol=1e-4)
        assert torch.allclose(s.sigma, torch.full((2,), target_sigma, dtype=torch.float64),
                              atol=1e-4)


class TestEmaUpdate:
    def test_single_step(self):
        out = ema_update(stats([0.0], [0.0]), stats([1.0], [1.0]), 0.95)
        assert out.mu.item() == pytest.approx(0.05, abs=1e-7)
        assert out.sigma.item() == pytest.approx(0.05, abs=1e-7)

    def test_fixed_point(self):
        s = stats([2.0, -1.0], [0.5, 3.0])
        for d_rate in (0.1, 0.5, 0.95):
            out = ema_update(s, s, d_rate)
            assert torch.allclose(out.mu, s.mu, atol=1e-7)
            assert torch.allclose(out.sigma, s.sigma, atol=1e-7)

    def test_two_step_geometric(self):
        g = stats([0.0], [0.0])
        for _ in range(2):
            g = ema_update(g, stats([1.0], [1.0]), 0.95)
        assert g.mu.item() == pytest.approx(0.0975, abs=1e-7)

    @pytest.mark.parametrize("n", [1, 2, 10, 100])
    def test_closed_form_matches_iteration(self, n):
        s = 1.7
        g = stats([0.0], [0.0])
        for _ in range(n):
            g = ema_update(g, stats([s], [s]), 0.95)
        closed = s * (1.0 - 0.95**n)
        iterated = ema_iterated(0.0, s, 0.95, n)
        assert g.mu.item() == pytest.approx(closed, rel=1e-6)
        assert g.mu.item() == pytest.approx(iterated, rel=1e-6)

    def test_monotone_convergence(self):
        g0, c = 3.0, -1.0
        g = stats([g0], [1.0])
        for n in range(1, 20):
            g = ema_update(g, stats([c], [1.0]), 0.95)
            expected = 0.95**n * abs(g0 - c)
            assert abs(g.mu.item() - c) == pytest.approx(expected, rel=1e-5)

    @pytest.mark.parametrize("d_rate", [0.0, 1.0, -0.3, 1.5])
    def test_bad_rate_rejected(self, d_rate):
        with pytest.raises(InvalidConfigError):
            ema_update(stats([0.0], [0.0]), stats([1.0], [1.0]), d_rate)


class TestSobel:
    def test_constant_image(self):
        gx, gy = sobel_gradients(torch.full((1, 2, 5, 5), 3.0))
        assert torch.equal(gx, torch.zeros_like(gx))
        assert torch.equal(gy, torch.zeros_like(gy))

    def test_horizontal_ramp(self):
        ramp = torch.arange(8.0).repeat(8, 1).reshape(1, 1, 8, 8)
        gx, gy = sobel_gradients(ramp)
        assert torch.allclose(gx[0, 0, 1:-1, 1:-1], torch.full((6, 6), 8.0))
        assert torch.equal(gy, torch.zeros_like(gy))

    def test_transpose_swaps_components(self):
        x = torch.randn(1, 1, 7, 7, generator=torch.Generator().manual_seed(5))
        gx, gy = sobel_gradients(x)
        gx_t, gy_t = sobel_gradients(x.transpose(2, 3))
        interior = slice(1, -1)
        assert torch.allclose(
            gx_t[0, 0, interior, interior],
            gy[0, 0, interior, interior].transpose(0, 1),
            atol=1e-6,
        )

    def test_matches_naive_convolution(self):
        rng = np.random.default_rng(7)
        image = rng.normal(size=(1, 3, 8, 8))
        gx, gy = sobel_gradients(torch.from_numpy(image))
        for c in range(3):
            gx_ref, gy_ref = sobel_naive(image[0, c])
            np.testing.assert_allclose(gx[0, c].numpy(), gx_ref, atol=1e-6)
            np.testing.assert_allclose(gy[0, c].numpy(), gy_ref, atol=1e-6)

    def test_too_small_rejected(self):
        with pytest.raises(InvalidInputError):
            sobel_gradients(torch.zeros(1, 1, 2, 5))
