"""Full models (STCN, STCN-dense, Wavenet, Wavenet-dense): per-step ELBO,
deterministic log-likelihood, and autoregressive sampling."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from .latent import LatentLayer, gaussian_kl, posterior_pass, prior_pass
from .observation import ObsConfig, OutputHead, observation_loglik
from .seqdata import SequenceBatch
from .tcn import Tcn, TcnConfig

VARIANTS = ("stcn", "stcn_dense", "wavenet", "wavenet_dense")


@dataclass
class ModelConfig:
    variant: str
    input_dim: int
    tcn: TcnConfig = field(default_factory=TcnConfig)
    latent_dims: Optional[list] = None  # bottom-first, length = tcn.stacks
    obs: ObsConfig = field(default_factory=ObsConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.is_stochastic:
            if not self.latent_dims or len(self.latent_dims) != self.tcn.stacks:
                raise ValueError(
                    "latent_dims must list one dimension per stack (bottom-first)"
                )
            if any(d < 1 for d in self.latent_dims):
                raise ValueError("latent dimensions must be >= 1")

    @property
    def is_stochastic(self):
        return self.variant in ("stcn", "stcn_dense")

    @property
    def is_dense(self):
        return self.variant in ("stcn_dense", "wavenet_dense")


@dataclass
class ElboBreakdown:
    recon: torch.Tensor          # [B, T], masked
    kl_per_layer: list           # L tensors [B, T], masked; empty if deterministic
    per_sequence: torch.Tensor   # [B]
    elbo: torch.Tensor           # scalar, mean over sequences


class StcnModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tcn = Tcn(cfg.input_dim, cfg.tcn)
        f = cfg.tcn.filters
        if cfg.is_stochastic:
            dims = cfg.latent_dims
            n = len(dims)
            in_dims = [f + (dims[l + 1] if l < n - 1 else 0) for l in range(n)]
            self.p_nets = nn.ModuleList(
                LatentLayer(in_dims[l], f, dims[l]) for l in range(n)
            )
            self.q_nets = nn.ModuleList(
                LatentLayer(in_dims[l], f, dims[l]) for l in range(n)
            )
            head_in = dims[0] if cfg.variant == "stcn" else sum(dims)
        else:
            head_in = f if cfg.variant == "wavenet" else f * cfg.tcn.stacks
        self.out_head = OutputHead(head_in, cfg.input_dim, f, cfg.obs)

    def pyramids(self, x):
        """Current and time-shifted deterministic pyramids for input x."""
        cur = self.tcn(x)
        return cur, shift_pyramid(cur)


def build_model(cfg: ModelConfig, seed=0):
    """Seed-controlled model construction."""
    torch.manual_seed(seed)
    return StcnModel(cfg)


def shift_pyramid(pyramid):
    """Shift every layer one step right in time; position 0 becomes zeros."""
    return [torch.cat([torch.zeros_like(d[:, :1]), d[:, :-1]], dim=1) for d in pyramid]


def _batch_tensors(batch: SequenceBatch, like: nn.Module):
    p = next(like.parameters())
    x = torch.as_tensor(batch.data, dtype=p.dtype, device=p.device)
    mask = torch.as_tensor(batch.mask, dtype=p.dtype, device=p.device)
    return x, mask


def elbo_step(batch: SequenceBatch, model: StcnModel, noise):
    """Single-sample per-step ELBO for the stochastic variants.

    noise is a torch.Generator or a bottom-first list of frozen eps tensors
    [B, T, d_l]. Masked positions contribute exactly zero to every term.
    """
    if not model.cfg.is_stochastic:
        raise ValueError(f"elbo_step requires a stochastic variant, got {model.cfg.variant!r}")
    x, mask = _batch_tensors(batch, model)
    cur, prev = model.pyramids(x)
    stack = posterior_pass(cur, prev, model.p_nets, model.q_nets, noise)
    if model.cfg.variant == "stcn":
        z_in = stack.samples[0]
    else:
        z_in = torch.cat(stack.samples, dim=-1)
    params = model.out_head(z_in)
    recon = observation_loglik(x, params) * mask
    kls = [gaussian_kl(q, p) * mask for q, p in zip(stack.posteriors, stack.priors)]
    per_seq = recon.sum(1) - sum(kl.sum(1) for kl in kls)
    return ElboBreakdown(
        recon=recon, kl_per_layer=kls, per_sequence=per_seq, elbo=per_seq.mean()
    )


def deterministic_loglik(batch: SequenceBatch, model: StcnModel):
    """Exact per-step log-likelihood for the Wavenet variants (no bound)."""
    if model.cfg.is_stochastic:
        raise ValueError(
            f"deterministic_loglik requires a wavenet variant, got {model.cfg.variant!r}"
        )
    x, mask = _batch_tensors(batch, model)
    _, prev = model.pyramids(x)
    z_in = prev[0] if model.cfg.variant == "wavenet" else torch.cat(prev, dim=-1)
    params = model.out_head(z_in)
    recon = observation_loglik(x, params) * mask
    per_seq = recon.sum(1)
    return ElboBreakdown(
        recon=recon, kl_per_layer=[], per_sequence=per_seq, elbo=per_seq.mean()
    )


def evaluate_batch(batch, model, noise=None):
    if model.cfg.is_stochastic:
        return elbo_step(batch, model, noise)
    return deterministic_loglik(batch, model)


def _draw_observation(params, generator, mean_pred):
    """Draw x_t (or its mean) from the observation distribution."""
    if params.family == "normal":
        if mean_pred:
            return params.mean
        eps = torch.randn(params.mean.shape, generator=generator, dtype=params.mean.dtype)
        return params.mean + params.std * eps
    w = torch.softmax(params.logits, dim=-1)
    if mean_pred:
        return (w.unsqueeze(-1) * params.means).sum(-2)
    b, t, m = params.logits.shape
    comp = torch.multinomial(w.reshape(-1, m), 1, generator=generator).reshape(b, t, 1, 1)
    d = params.means.shape[-1]
    mean = params.means.gather(-2, comp.expand(b, t, 1, d)).squeeze(-2)
    std = params.stds.gather(-2, comp.expand(b, t, 1, d)).squeeze(-2)
    eps = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
    return mean + std * eps


@torch.no_grad()
def sample_sequence(model: StcnModel, prefix, steps, seed, mean_pred=False):
    """Autoregressively extend prefix [T0 x D] by `steps` new rows.

    The full pyramid is recomputed per step (no caching); deterministic
    given seed.
    """
    cfg = model.cfg
    prefix = np.asarray(prefix, dtype=np.float32).reshape(-1, cfg.input_dim)
    if steps == 0:
        return prefix.copy()
    gen = torch.Generator().manual_seed(seed)
    p = next(model.parameters())
    rows = [torch.as_tensor(prefix, dtype=p.dtype)]
    f = cfg.tcn.filters
    for _ in range(steps):
        cur = torch.cat(rows, dim=0)
        if cur.shape[0] == 0:
            d_prev = [torch.zeros(1, 1, f, dtype=p.dtype) for _ in range(cfg.tcn.stacks)]
        else:
            pyramid = model.tcn(cur.unsqueeze(0))
            d_prev = [d[:, -1:, :] for d in pyramid]
        if cfg.is_stochastic:
            stack = prior_pass(d_prev, model.p_nets, gen)
            z_in = stack.samples[0] if cfg.variant == "stcn" else torch.cat(stack.samples, -1)
        else:
            z_in = d_prev[0] if cfg.variant == "wavenet" else torch.cat(d_prev, -1)
        params = model.out_head(z_in)
        x_t = _draw_observation(params, gen, mean_pred)
        rows.append(x_t[0])
    return torch.cat(rows, dim=0).to(torch.float32).numpy()
