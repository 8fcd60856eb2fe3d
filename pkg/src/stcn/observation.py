"""Output networks and observation densities: diagonal Normal and
diagonal-Gaussian mixtures."""

import math
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .latent import clamp_std
from .tcn import WavenetBlock

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class ObsConfig:
    family: str = "normal"            # "normal" | "gmm"
    components: int = 20              # M, gmm only
    head: str = "relu_width1_stack"   # or "wavenet_stack"
    head_depth: int = 5

    def __post_init__(self):
        if self.family not in ("normal", "gmm"):
            raise ValueError(f"unknown observation family {self.family!r}")
        if self.head not in ("relu_width1_stack", "wavenet_stack"):
            raise ValueError(f"unknown head {self.head!r}")
        if self.components < 1 or self.head_depth < 1:
            raise ValueError("components and head_depth must be >= 1")


@dataclass
class ObservationParams:
    family: str
    mean: Optional[torch.Tensor] = None    # [B,T,D]
    std: Optional[torch.Tensor] = None     # [B,T,D]
    logits: Optional[torch.Tensor] = None  # [B,T,M]
    means: Optional[torch.Tensor] = None   # [B,T,M,D]
    stds: Optional[torch.Tensor] = None    # [B,T,M,D]


class OutputHead(nn.Module):
    """f^(o): a conv stack over the latent (or deterministic) input followed
    by distribution heads. Width-1 conv layers are Linear over channels."""

    def __init__(self, in_dim, data_dim, hidden, cfg: ObsConfig):
        super().__init__()
        self.cfg = cfg
        self.in_dim = in_dim
        self.data_dim = data_dim
        if cfg.head == "relu_width1_stack":
            dims = [in_dim] + [hidden] * cfg.head_depth
            self.body = nn.ModuleList(
                nn.Linear(dims[i], dims[i + 1]) for i in range(cfg.head_depth)
            )
            for layer in self.body:
                nn.init.zeros_(layer.bias)
        else:
            self.proj = nn.Linear(in_dim, hidden)
            nn.init.zeros_(self.proj.bias)
            self.body = nn.ModuleList(
                WavenetBlock(hidden, dilation=1) for _ in range(cfg.head_depth)
            )
        if cfg.family == "normal":
            self.dist = nn.Linear(hidden, 2 * data_dim)
        else:
            m = cfg.components
            self.dist = nn.Linear(hidden, m + 2 * m * data_dim)
        nn.init.zeros_(self.dist.bias)

    def forward(self, z_in):
        if self.cfg.head == "relu_width1_stack":
            h = z_in
            for layer in self.body:
                h = F.relu(layer(h))
        else:
            h = self.proj(z_in)
            for block in self.body:
                h = block(h)
        out = self.dist(h)
        if self.cfg.family == "normal":
            mean, pre_std = out.chunk(2, dim=-1)
            return ObservationParams(family="normal", mean=mean, std=clamp_std(pre_std))
        m, d = self.cfg.components, self.data_dim
        logits = out[..., :m]
        means = out[..., m : m + m * d].reshape(*out.shape[:-1], m, d)
        pre_stds = out[..., m + m * d :].reshape(*out.shape[:-1], m, d)
        return ObservationParams(
            family="gmm", logits=logits, means=means, stds=clamp_std(pre_stds)
        )


def normal_loglik(x, p: ObservationParams):
    """Diagonal-Normal log-density, summed over channels -> [B, T]."""
    if p.family != "normal":
        raise ValueError(f"normal_loglik called with family {p.family!r}")
    ll = -0.5 * LOG_2PI - torch.log(p.std) - (x - p.mean) ** 2 / (2 * p.std**2)
    return ll.sum(-1)


def gmm_loglik(x, p: ObservationParams):
    """Mixture-of-diagonal-Gaussians log-density via log-sum-exp -> [B, T]."""
    if p.family != "gmm":
        raise ValueError(f"gmm_loglik called with family {p.family!r}")
    xe = x.unsqueeze(-2)  # [B,T,1,D]
    comp = (-0.5 * LOG_2PI - torch.log(p.stds) - (xe - p.means) ** 2 / (2 * p.stds**2)).sum(-1)
    log_w = F.log_softmax(p.logits, dim=-1)
    return torch.logsumexp(log_w + comp, dim=-1)


def observation_loglik(x, p: ObservationParams):
    return normal_loglik(x, p) if p.family == "normal" else gmm_loglik(x, p)
