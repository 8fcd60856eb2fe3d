"""Matplotlib figure rendering for the training and report paths."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_history(history, path):
    """Training curves: loss, validation ELBO, KL weight and learning rate."""
    steps = [r["step"] for r in history]
    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    axes[0].plot(steps, [r["loss"] for r in history], label="train loss", lw=0.8)
    ev = [(r["step"], -r["valid_elbo"]) for r in history if r["valid_elbo"] is not None]
    if ev:
        axes[0].plot(*zip(*ev), "o-", label="-valid ELBO", ms=3)
    axes[0].set_ylabel("loss")
    axes[0].legend(fontsize=8)
    axes[1].plot(steps, [r["kl_weight"] for r in history], label="KL weight")
    ax2 = axes[1].twinx()
    ax2.plot(steps, [r["lr"] for r in history], color="tab:orange", label="lr")
    ax2.set_ylabel("learning rate")
    axes[1].set_ylabel("KL weight")
    axes[1].set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_kl_per_layer(report, path, title="KL per latent layer"):
    """Bar chart of per-layer KL (layer 1 = bottom of the hierarchy)."""
    kl = report.kl_per_layer
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(np.arange(1, len(kl) + 1), kl)
    ax.set_xlabel("latent layer (1 = bottom)")
    ax.set_ylabel("KL (nats / sequence)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_comparison(reports, path):
    """Bar chart of avg ELBO per sequence across models."""
    names = sorted(reports)
    vals = [reports[n].avg_elbo_per_sequence for n in names]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(names)), 3.2))
    ax.bar(names, vals)
    ax.set_ylabel("avg ELBO / sequence")
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sequences(seq_set, path, max_sequences=8):
    """Line plot of the first channels of a few sequences."""
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for s in seq_set.sequences[:max_sequences]:
        ax.plot(s[:, 0], lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("x[:, 0]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
