"""Diagonal-Gaussian latent hierarchy: parameter networks, precision-weighted
posterior merge, reparameterized sampling, analytic KL, and the top-down
prior/posterior passes."""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

STD_MIN = 0.001
STD_MAX = 5.0


class DiagGaussian(NamedTuple):
    mean: torch.Tensor
    std: torch.Tensor


@dataclass
class LatentStack:
    """Per-layer latent state, bottom layer first (index 0 = z^1)."""

    priors: list
    samples: list
    posteriors: Optional[list] = None


def clamp_std(pre_std):
    """softplus then clamp to [STD_MIN, STD_MAX]."""
    return F.softplus(pre_std).clamp(STD_MIN, STD_MAX)


def gaussian_kl(q: DiagGaussian, p: DiagGaussian):
    """KL(q || p) per position, summed over the latent dimension -> [B, T]."""
    if (q.std <= 0).any() or (p.std <= 0).any():
        raise ValueError("gaussian_kl requires strictly positive std")
    kl = (
        torch.log(p.std / q.std)
        + (q.std**2 + (q.mean - p.mean) ** 2) / (2 * p.std**2)
        - 0.5
    )
    return kl.sum(-1)


def reparam_sample(dist: DiagGaussian, eps):
    """mu + sigma * eps; differentiable in both parameters."""
    return dist.mean + dist.std * eps


def precision_merge(likelihood: DiagGaussian, prior: DiagGaussian):
    """Combine two diagonal Gaussians by precision-weighted addition.

    Variances combine as sigma_q^2 = 1 / (sigma_hat^-2 + sigma_p^-2); the
    mean is the precision-weighted average. The merged std is re-clamped to
    the same [STD_MIN, STD_MAX] band as the network heads.
    """
    if (likelihood.std <= 0).any() or (prior.std <= 0).any():
        raise ValueError("precision_merge requires strictly positive std")
    prec_l = likelihood.std**-2
    prec_p = prior.std**-2
    var = 1.0 / (prec_l + prec_p)
    mean = var * (likelihood.mean * prec_l + prior.mean * prec_p)
    std = torch.sqrt(var).clamp(STD_MIN, STD_MAX)
    return DiagGaussian(mean, std)


class LatentLayer(nn.Module):
    """Two width-1 convolutions (ReLU between) producing mu and pre-sigma.

    The prior net at layer l consumes (z^{l+1}, d_prev^l); the likelihood
    net consumes (z^{l+1}, d_cur^l); the top layer sees only d.
    """

    def __init__(self, in_dim, hidden, z_dim):
        super().__init__()
        self.z_dim = z_dim
        self.fc1 = nn.Linear(in_dim, hidden)
        self.fc2 = nn.Linear(hidden, 2 * z_dim)
        nn.init.zeros_(self.fc1.bias)
        nn.init.zeros_(self.fc2.bias)

    def forward(self, z_above, d):
        h = d if z_above is None else torch.cat([z_above, d], dim=-1)
        h = F.relu(self.fc1(h))
        mean, pre_std = self.fc2(h).chunk(2, dim=-1)
        return DiagGaussian(mean, clamp_std(pre_std))


def latent_params(net: LatentLayer, z_above, d):
    return net(z_above, d)


def _layer_eps(dist: DiagGaussian, noise, layer_idx):
    """noise is either a bottom-first list of frozen eps tensors or a
    torch.Generator."""
    if isinstance(noise, (list, tuple)):
        return noise[layer_idx].to(dtype=dist.mean.dtype)
    return torch.randn(
        dist.mean.shape, generator=noise, dtype=dist.mean.dtype, device=dist.mean.device
    )


def prior_pass(pyramid_prev, p_nets, noise):
    """Top-down generative pass: sample every layer from its conditional
    prior. p_nets is bottom-first; pyramid_prev holds d_{t-1}^l."""
    n_layers = len(p_nets)
    priors = [None] * n_layers
    samples = [None] * n_layers
    z_above = None
    for l in reversed(range(n_layers)):
        priors[l] = p_nets[l](z_above, pyramid_prev[l])
        samples[l] = reparam_sample(priors[l], _layer_eps(priors[l], noise, l))
        z_above = samples[l]
    return LatentStack(priors=priors, samples=samples)


def posterior_pass(pyramid_cur, pyramid_prev, p_nets, q_nets, noise):
    """Top-down inference pass.

    At each layer the approximate likelihood (from d_cur) is merged with the
    conditional prior (from d_prev) by precision weighting; the shared
    posterior sample feeds both nets one layer down.
    """
    n_layers = len(p_nets)
    priors = [None] * n_layers
    posteriors = [None] * n_layers
    samples = [None] * n_layers
    z_above = None
    for l in reversed(range(n_layers)):
        likelihood = q_nets[l](z_above, pyramid_cur[l])
        priors[l] = p_nets[l](z_above, pyramid_prev[l])
        posteriors[l] = precision_merge(likelihood, priors[l])
        samples[l] = reparam_sample(posteriors[l], _layer_eps(posteriors[l], noise, l))
        z_above = samples[l]
    return LatentStack(priors=priors, samples=samples, posteriors=posteriors)
