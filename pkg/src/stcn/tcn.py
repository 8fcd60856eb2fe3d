"""Causal dilated convolutions, gated WaveNet blocks, and the deterministic
layer pyramid d^l used by both the stochastic and deterministic models."""

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class TcnConfig:
    stacks: int = 5        # L, one stack per stochastic layer
    blocks_per_stack: int = 6  # K WaveNet blocks, dilations 1,2,...,2^(K-1)
    filters: int = 256     # F, channels of every convolution

    def __post_init__(self):
        if self.stacks < 1 or self.blocks_per_stack < 1 or self.filters < 1:
            raise ValueError("stacks, blocks_per_stack and filters must be >= 1")


def causal_dilated_conv(x, kernel, bias, dilation=1):
    """Causal convolution over [B, T, C_in] with kernel [width, C_in, C_out].

    out[b, t] = bias + sum_k kernel[k] . x[b, t - (width-1-k)*dilation],
    with left zero-padding so the output has the same length as the input.
    """
    if x.shape[-1] != kernel.shape[1]:
        raise ValueError(f"channel mismatch: input {x.shape[-1]} vs kernel {kernel.shape[1]}")
    width = kernel.shape[0]
    w = kernel.permute(2, 1, 0)  # [C_out, C_in, width]
    y = x.transpose(1, 2)
    y = F.pad(y, ((width - 1) * dilation, 0))
    y = F.conv1d(y, w, bias, dilation=dilation)
    return y.transpose(1, 2)


class CausalConv1d(nn.Module):
    """Width-2 (default) causal dilated convolution on [B, T, C] tensors."""

    def __init__(self, in_channels, out_channels, dilation=1, width=2):
        super().__init__()
        if dilation < 1:
            raise ValueError("dilation must be >= 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.dilation = dilation
        self.width = width
        self.kernel = nn.Parameter(torch.empty(width, in_channels, out_channels))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        bound = 1.0 / math.sqrt(width * in_channels)
        nn.init.uniform_(self.kernel, -bound, bound)

    def forward(self, x):
        return causal_dilated_conv(x, self.kernel, self.bias, self.dilation)


class WavenetBlock(nn.Module):
    """Residual gated block: x + 1x1(tanh(filter(x)) * sigmoid(gate(x)))."""

    def __init__(self, channels, dilation):
        super().__init__()
        self.filter_conv = CausalConv1d(channels, channels, dilation)
        self.gate_conv = CausalConv1d(channels, channels, dilation)
        self.out_1x1 = CausalConv1d(channels, channels, dilation=1, width=1)

    def forward(self, x):
        h = torch.tanh(self.filter_conv(x)) * torch.sigmoid(self.gate_conv(x))
        return x + self.out_1x1(h)


class Tcn(nn.Module):
    """L stacks of K WaveNet blocks over a width-1 input projection.

    forward() returns the deterministic pyramid: a list of L tensors
    [B, T, F], bottom stack first. Dilations reset to 1 at every stack and
    double per block within a stack.
    """

    def __init__(self, input_dim, cfg: TcnConfig):
        super().__init__()
        self.cfg = cfg
        # Width-1 projection: the width-2 dilated reads over (x_t, x_{t-j})
        # happen inside the first stack's blocks, keeping the receptive
        # field at exactly stacks*(2^K - 1) + 1.
        self.input_proj = CausalConv1d(input_dim, cfg.filters, dilation=1, width=1)
        self.stacks = nn.ModuleList(
            nn.ModuleList(
                WavenetBlock(cfg.filters, dilation=2**k)
                for k in range(cfg.blocks_per_stack)
            )
            for _ in range(cfg.stacks)
        )

    def forward(self, x):
        h = self.input_proj(x)
        pyramid = []
        for stack in self.stacks:
            for block in stack:
                h = block(h)
            pyramid.append(h)
        return pyramid


def receptive_field(blocks_per_stack, stacks):
    """Trailing input window of the top pyramid layer, for filter width 2
    and per-stack dilations 1, 2, ..., 2^(K-1)."""
    if blocks_per_stack < 1 or stacks < 1:
        raise ValueError("blocks_per_stack and stacks must be >= 1")
    return stacks * (2**blocks_per_stack - 1) + 1
