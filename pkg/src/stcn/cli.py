"""Command-line entry point: synth, train, eval, sample, gradcheck.

Exit codes: 0 success, 1 numerical/validation failure, 2 usage or I/O error.
"""

import argparse
import os
import sys

import numpy as np
import torch

from .config import ConfigError, parse_run_config
from .evalreport import evaluate, report_csv, report_json
from .figures import plot_history, plot_kl_per_layer
from .model import ModelConfig, sample_sequence
from .observation import ObsConfig
from .seqdata import (ContainerFormatError, SequenceSet, generate_synthetic,
                      read_container, write_container)
from .tcn import TcnConfig
from .training import (CheckpointError, DivergenceError, grad_check,
                       load_checkpoint, save_checkpoint, train,
                       write_history_csv)

GRADCHECK_PRESETS = {
    "tiny": ("stcn", [3, 2]),
    "tiny-dense": ("stcn_dense", [3, 2]),
    "tiny-wavenet": ("wavenet", None),
}


def _gradcheck_config(preset):
    variant, dims = GRADCHECK_PRESETS[preset]
    return ModelConfig(
        variant=variant,
        input_dim=2,
        tcn=TcnConfig(stacks=2, blocks_per_stack=2, filters=8),
        latent_dims=dims,
        obs=ObsConfig(family="normal", head_depth=2),
    )


def _set_threads(args):
    n = args.threads
    if n is None:
        env = os.environ.get("STCN_THREADS")
        n = int(env) if env else None
    if n is not None:
        torch.set_num_threads(n)


def cmd_synth(args):
    data = generate_synthetic(args.preset, args.n, args.T, args.D, args.seed)
    write_container(data, args.out)
    print(f"wrote {len(data)} sequences T={args.T} D={args.D} -> {args.out}")
    return 0


def cmd_train(args):
    run = parse_run_config(args.config)
    train_path = args.data or run.train_data
    valid_path = args.valid or run.valid_data
    if not train_path or not valid_path:
        print("error: train/valid data must be given via --data/--valid or [data]",
              file=sys.stderr)
        return 2
    if args.seed is not None:
        run.training.seed = args.seed
        print(f"seed overridden by flag: {args.seed}")
    inject = os.environ.get("STCN_INJECT_NAN_AT")
    if inject is not None:
        run.training.inject_nan_at = int(inject)
    train_set = read_container(train_path)
    valid_set = read_container(valid_path)
    try:
        model, history = train(run.model, run.training, train_set, valid_set)
    except DivergenceError as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return 1
    os.makedirs(args.out_dir, exist_ok=True)
    n_layers = len(run.model.latent_dims) if run.model.is_stochastic else 0
    write_history_csv(history, os.path.join(args.out_dir, "history.csv"), n_layers)
    plot_history(history, os.path.join(args.out_dir, "history.png"))
    save_checkpoint(model, os.path.join(args.out_dir, "checkpoint"), run.training)
    print(f"trained {run.model.variant} for {history[-1]['step']} steps -> {args.out_dir}")
    return 0


def cmd_eval(args):
    model, manifest = load_checkpoint(args.ckpt)
    data = read_container(args.data)
    report = evaluate(model, data, mc_samples=args.mc_samples, seed=args.seed)
    name = manifest["model_config"]["variant"]
    if args.format == "json":
        sys.stdout.write(report_json(name, report))
    else:
        sys.stdout.write(report_csv(name, report))
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        if report.kl_per_layer:
            plot_kl_per_layer(report, os.path.join(args.figures, "kl_per_layer.png"))
    return 0


def cmd_sample(args):
    model, _ = load_checkpoint(args.ckpt)
    d = model.cfg.input_dim
    if args.prefix:
        prefix_set = read_container(args.prefix)
        prefixes = prefix_set.sequences
    else:
        prefixes = [np.zeros((0, d), dtype=np.float32)]
    out = []
    for i, prefix in enumerate(prefixes):
        out.append(sample_sequence(model, prefix, args.steps, seed=args.seed + i,
                                   mean_pred=args.mean_pred))
    write_container(SequenceSet(out, feature_dim=d), args.out)
    print(f"wrote {len(out)} sampled sequences -> {args.out}")
    return 0


def cmd_gradcheck(args):
    cfg = _gradcheck_config(args.preset)
    report = grad_check(cfg, tol=args.tol, seed=args.seed)
    print(f"max_rel_err={report.max_rel_err:.3e} worst_param={report.worst_param} "
          f"tol={report.tol:.1e}")
    return 0 if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="stcn")
    parser.add_argument("--threads", type=int, default=None,
                        help="torch thread count; 1 guarantees determinism "
                             "(env fallback: STCN_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic sequence container")
    p.add_argument("--preset", choices=("sines", "switching", "strokes"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--D", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="training container (overrides [data] train)")
    p.add_argument("--valid", help="validation container (overrides [data] valid)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides [training] seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a container")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mc-samples", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--figures", help="directory for report figures (PNG)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="draw sequences from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix", help="optional container of prefix sequences")
    p.add_argument("--mean-pred", action="store_true",
                   help="emit the observation mean instead of sampling")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--preset", choices=sorted(GRADCHECK_PRESETS), default="tiny")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(args)
    try:
        return args.func(args)
    except (OSError, ContainerFormatError, ConfigError, CheckpointError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
