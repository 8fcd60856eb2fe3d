"""Dataset-level evaluation: per-sequence ELBO, per-layer KL table, and
model-comparison summaries."""

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .model import evaluate_batch
from .seqdata import SequenceBatch


@dataclass
class EvalReport:
    avg_elbo_per_sequence: float
    avg_recon: float
    kl_total: float
    kl_per_layer: list  # bottom-first; index 0 = KL of z^1
    n_sequences: int
    mc_samples: int
    seed: int


def _sequence_noise_seed(seed, seq_index, mc_index):
    return (seed * 1000003 + seq_index) * 1000003 + mc_index


def evaluate(model, seq_set, mc_samples=1, seed=0):
    """Average per-sequence ELBO over mc_samples independent noise draws.

    Noise streams are derived from (seed, sequence index, sample index), so
    the report is identical regardless of evaluation order. Per-layer KL is
    the mean over sequences of the per-sequence summed KL (units: nats per
    sequence).
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    n_layers = len(model.cfg.latent_dims) if model.cfg.is_stochastic else 0
    elbos, recons = [], []
    kls = np.zeros(n_layers)
    with torch.no_grad():
        for i, s in enumerate(seq_set.sequences):
            batch = SequenceBatch(
                data=s[None], mask=np.ones((1, s.shape[0]), dtype=np.float32),
                lengths=[s.shape[0]],
            )
            acc_elbo, acc_recon = 0.0, 0.0
            acc_kl = np.zeros(n_layers)
            for m in range(mc_samples):
                gen = torch.Generator().manual_seed(_sequence_noise_seed(seed, i, m))
                out = evaluate_batch(batch, model, gen)
                acc_elbo += out.per_sequence.item()
                acc_recon += out.recon.sum().item()
                for l, kl in enumerate(out.kl_per_layer):
                    acc_kl[l] += kl.sum().item()
            elbos.append(acc_elbo / mc_samples)
            recons.append(acc_recon / mc_samples)
            kls += acc_kl / mc_samples
    kl_per_layer = (kls / len(seq_set)).tolist()
    return EvalReport(
        avg_elbo_per_sequence=float(np.mean(elbos)),
        avg_recon=float(np.mean(recons)),
        kl_total=float(sum(kl_per_layer)),
        kl_per_layer=kl_per_layer,
        n_sequences=len(seq_set),
        mc_samples=mc_samples,
        seed=seed,
    )


def compare(reports):
    """Render a name -> EvalReport map as a CSV table (one row per model,
    sorted by name; KL columns padded when layer counts differ)."""
    if not reports:
        raise ValueError("no reports to compare")
    max_l = max(len(r.kl_per_layer) for r in reports.values())
    cols = ["model", "avg_elbo", "avg_recon", "kl_total"] + [
        f"kl_{l + 1}" for l in range(max_l)
    ]
    lines = [",".join(cols)]
    for name in sorted(reports):
        r = reports[name]
        kl_cols = [repr(k) for k in r.kl_per_layer] + [""] * (max_l - len(r.kl_per_layer))
        lines.append(
            ",".join([name, repr(r.avg_elbo_per_sequence), repr(r.avg_recon),
                      repr(r.kl_total)] + kl_cols)
        )
    return "\n".join(lines) + "\n"


def report_csv(name, report):
    return compare({name: report})


def report_json(name, report):
    d = dataclasses.asdict(report)
    d["model"] = name
    return json.dumps(d, indent=1, sort_keys=True) + "\n"
