import math

import pytest
import torch

from stcn.observation import (ObsConfig, ObservationParams, OutputHead,
                              gmm_loglik, normal_loglik)

torch.set_num_threads(1)


def _normal_params(mean, std):
    return ObservationParams(family="normal", mean=mean, std=std)


def test_normal_loglik_standard_value():
    x = torch.zeros(1, 1, 1, dtype=torch.float64)
    p = _normal_params(torch.zeros_like(x), torch.ones_like(x))
    expected = -0.5 * math.log(2 * math.pi)
    assert abs(normal_loglik(x, p).item() - expected) < 1e-12
    assert abs(expected + 0.9189385) < 1e-7


def test_normal_loglik_additivity():
    g = torch.Generator().manual_seed(0)
    x = torch.randn(2, 3, 2, generator=g, dtype=torch.float64)
    mean = torch.randn(2, 3, 2, generator=g, dtype=torch.float64)
    std = torch.rand(2, 3, 2, generator=g, dtype=torch.float64) + 0.1
    joint = normal_loglik(x, _normal_params(mean, std))
    split = sum(
        normal_loglik(x[..., d:d + 1], _normal_params(mean[..., d:d + 1], std[..., d:d + 1]))
        for d in range(2)
    )
    assert torch.allclose(joint, split)


def test_normal_loglik_maximized_at_mean():
    mean = torch.full((1, 1, 1), 0.4, dtype=torch.float64)
    std = torch.full((1, 1, 1), 0.7, dtype=torch.float64)
    p = _normal_params(mean, std)
    at_mean = normal_loglik(mean, p).item()
    for dx in (-0.5, -0.01, 0.01, 0.5):
        assert normal_loglik(mean + dx, p).item() < at_mean


def test_family_mismatch_errors():
    x = torch.zeros(1, 1, 1)
    p = _normal_params(torch.zeros(1, 1, 1), torch.ones(1, 1, 1))
    with pytest.raises(ValueError):
        gmm_loglik(x, p)
    q = ObservationParams(family="gmm", logits=torch.zeros(1, 1, 1),
                          means=torch.zeros(1, 1, 1, 1), stds=torch.ones(1, 1, 1, 1))
    with pytest.raises(ValueError):
        normal_loglik(x, q)


def _gmm(logits, means, stds):
    return ObservationParams(family="gmm", logits=logits, means=means, stds=stds)


def test_gmm_single_component_equals_normal():
    g = torch.Generator().manual_seed(1)
    x = torch.randn(2, 4, 3, generator=g, dtype=torch.float64)
    mean = torch.randn(2, 4, 3, generator=g, dtype=torch.float64)
    std = torch.rand(2, 4, 3, generator=g, dtype=torch.float64) + 0.1
    gm = _gmm(torch.zeros(2, 4, 1, dtype=torch.float64), mean.unsqueeze(-2), std.unsqueeze(-2))
    assert torch.allclose(gmm_loglik(x, gm), normal_loglik(x, _normal_params(mean, std)),
                          atol=1e-9)


def test_gmm_identical_components_collapse():
    g = torch.Generator().manual_seed(2)
    x = torch.randn(1, 3, 2, generator=g, dtype=torch.float64)
    mean = torch.randn(1, 3, 2, generator=g, dtype=torch.float64)
    std = torch.rand(1, 3, 2, generator=g, dtype=torch.float64) + 0.1
    two = _gmm(torch.zeros(1, 3, 2, dtype=torch.float64),
               torch.stack([mean, mean], dim=-2), torch.stack([std, std], dim=-2))
    one = _gmm(torch.zeros(1, 3, 1, dtype=torch.float64),
               mean.unsqueeze(-2), std.unsqueeze(-2))
    assert torch.allclose(gmm_loglik(x, two), gmm_loglik(x, one), atol=1e-12)


def test_gmm_extreme_logits_stay_finite():
    x = torch.zeros(1, 1, 1, dtype=torch.float64)
    means = torch.tensor([[[[0.0], [3.0]]]], dtype=torch.float64)
    stds = torch.ones(1, 1, 2, 1, dtype=torch.float64)
    logits = torch.tensor([[[1000.0, 0.0]]], dtype=torch.float64)
    out = gmm_loglik(x, _gmm(logits, means, stds))
    assert torch.isfinite(out).all()
    comp0 = normal_loglik(x, _normal_params(means[..., 0, :], stds[..., 0, :]))
    assert torch.allclose(out, comp0, atol=1e-9)


def test_gmm_logit_shift_invariance():
    g = torch.Generator().manual_seed(3)
    x = torch.randn(2, 3, 2, generator=g, dtype=torch.float64)
    logits = torch.randn(2, 3, 4, generator=g, dtype=torch.float64)
    means = torch.randn(2, 3, 4, 2, generator=g, dtype=torch.float64)
    stds = torch.rand(2, 3, 4, 2, generator=g, dtype=torch.float64) + 0.1
    a = gmm_loglik(x, _gmm(logits, means, stds))
    b = gmm_loglik(x, _gmm(logits + 123.0, means, stds))
    assert torch.allclose(a, b, atol=1e-9)


def test_gmm_mixture_lower_bound():
    g = torch.Generator().manual_seed(4)
    x = torch.randn(1, 5, 2, generator=g, dtype=torch.float64)
    logits = torch.randn(1, 5, 3, generator=g, dtype=torch.float64)
    means = torch.randn(1, 5, 3, 2, generator=g, dtype=torch.float64)
    stds = torch.rand(1, 5, 3, 2, generator=g, dtype=torch.float64) + 0.1
    mix = gmm_loglik(x, _gmm(logits, means, stds))
    log_w = torch.log_softmax(logits, dim=-1)
    for m in range(3):
        comp = normal_loglik(x, _normal_params(means[..., m, :], stds[..., m, :]))
        assert torch.all(mix >= comp + log_w[..., m] - 1e-12)


def test_output_head_dense_input_channels():
    dims = [32, 16, 8, 5, 2]
    head = OutputHead(sum(dims), data_dim=3, hidden=8, cfg=ObsConfig())
    assert head.in_dim == 63


def test_output_head_mixture_weights_normalized():
    torch.manual_seed(5)
    cfg = ObsConfig(family="gmm", components=4, head_depth=2)
    head = OutputHead(3, data_dim=2, hidden=6, cfg=cfg)
    p = head(torch.randn(2, 5, 3))
    w = torch.softmax(p.logits, dim=-1)
    assert torch.allclose(w.sum(-1), torch.ones(2, 5), atol=1e-6)
    assert p.means.shape == (2, 5, 4, 2)


def test_output_head_wavenet_stack_runs():
    torch.manual_seed(6)
    cfg = ObsConfig(family="normal", head="wavenet_stack", head_depth=2)
    head = OutputHead(4, data_dim=2, hidden=6, cfg=cfg)
    p = head(torch.randn(1, 7, 4))
    assert p.mean.shape == (1, 7, 2)
    assert torch.all(p.std > 0)


def test_loglik_gradients_match_finite_differences():
    torch.manual_seed(7)
    cfg = ObsConfig(family="gmm", components=2, head_depth=1)
    head = OutputHead(2, data_dim=1, hidden=3, cfg=cfg).double()
    z = torch.randn(1, 3, 2, dtype=torch.float64)
    x = torch.randn(1, 3, 1, dtype=torch.float64)

    def loss():
        return -gmm_loglik(x, head(z)).sum()

    loss().backward()
    h = 1e-6
    for name, p in head.named_parameters():
        flat, gflat = p.data.view(-1), p.grad.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + h
                up = loss().item()
                flat[i] = orig - h
                down = loss().item()
                flat[i] = orig
            numeric = (up - down) / (2 * h)
            analytic = gflat[i].item()
            rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            assert rel < 1e-4, f"{name}[{i}]: rel err {rel}"
