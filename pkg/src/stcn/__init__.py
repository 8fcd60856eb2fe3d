"""Stochastic temporal convolutional networks for sequence modeling."""

from .latent import (DiagGaussian, gaussian_kl, precision_merge, prior_pass,
                     posterior_pass, reparam_sample)
from .model import (ElboBreakdown, ModelConfig, StcnModel, build_model,
                    deterministic_loglik, elbo_step, evaluate_batch,
                    sample_sequence, shift_pyramid)
from .observation import ObsConfig, gmm_loglik, normal_loglik
from .seqdata import (SequenceBatch, SequenceSet, generate_synthetic,
                      make_batches, read_container, write_container)
from .tcn import TcnConfig, receptive_field
from .training import (TrainConfig, grad_check, kl_anneal_weight,
                       load_checkpoint, lr_schedule, save_checkpoint, train)

__all__ = [
    "DiagGaussian", "gaussian_kl", "precision_merge", "prior_pass",
    "posterior_pass", "reparam_sample", "ElboBreakdown", "ModelConfig",
    "StcnModel", "build_model", "deterministic_loglik", "elbo_step",
    "evaluate_batch", "sample_sequence", "shift_pyramid", "ObsConfig",
    "gmm_loglik", "normal_loglik", "SequenceBatch", "SequenceSet",
    "generate_synthetic", "make_batches", "read_container", "write_container",
    "TcnConfig", "receptive_field", "TrainConfig", "grad_check",
    "kl_anneal_weight", "load_checkpoint", "lr_schedule", "save_checkpoint",
    "train",
]
