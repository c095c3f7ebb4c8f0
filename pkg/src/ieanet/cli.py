"""Command-line entry point: train, eval, sweep-m, ensemble, analyze.

Flags may come from an optional key=value config file (--config); flags
given on the command line override the file. Every run echoes its resolved
settings to <out>/runspec.txt, which is itself loadable via --config, so a
run can always be reproduced exactly.

Exit codes: 0 success, 1 runtime/numeric failure, 2 usage/validation failure.
The IEA_THREADS environment variable caps intra-op (BLAS) parallelism.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

import numpy as np

from .analysis import ensemble_average, export_feature_maps, extract_features, mss_score
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, parse_amat, parse_idx, standardize_pair, synth_blobs
from .errors import ConfigError, IeaError, UsageError
from .model import ModelConfig, build_model
from .optim import SgdConfig
from .training import evaluate, predict_probs, train

BOOL_FLAGS = {"force", "transpose", "no_standardize", "verbose"}
SKIP_ECHO = {"config", "func", "command"}


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in str(text).split(",") if tok != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}")


def _add_data_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("data")
    g.add_argument("--data", choices=["synth", "idx", "amat"], default="synth",
                   help="dataset source format")
    g.add_argument("--train-images", help="IDX image file, train split")
    g.add_argument("--train-labels", help="IDX label file, train split")
    g.add_argument("--test-images", help="IDX image file, test split")
    g.add_argument("--test-labels", help="IDX label file, test split")
    g.add_argument("--amat-path", help="amat text file holding all rows")
    g.add_argument("--amat-train", type=int, default=50000,
                   help="amat train split size")
    g.add_argument("--amat-test", type=int, default=12000,
                   help="amat test split size")
    g.add_argument("--transpose", action="store_true",
                   help="flip the amat 28x28 reshape orientation")
    g.add_argument("--synth-train", type=int, default=256)
    g.add_argument("--synth-test", type=int, default=64)
    g.add_argument("--data-seed", type=int, default=0)
    g.add_argument("--limit-train", type=int, default=0,
                   help="keep only the first N train samples (0 = all)")
    g.add_argument("--limit-test", type=int, default=0,
                   help="keep only the first N test samples (0 = all)")
    g.add_argument("--no-standardize", action="store_true",
                   help="skip train-statistics standardization")
    g.add_argument("--num-classes", type=int, default=10)


def _add_model_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("model")
    g.add_argument("--depth", type=int, default=1)
    g.add_argument("--channels", type=_parse_int_list, default=None,
                   help="per-layer channel counts, e.g. 32,64")
    g.add_argument("--m", type=_parse_int_list, default=[1],
                   help="inner ensemble size; one value or one per layer")
    g.add_argument("--kernel", type=int, default=3)
    g.add_argument("--stride", type=int, default=1)
    g.add_argument("--padding", type=int, default=1)


def _add_sgd_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("optimizer")
    g.add_argument("--lr", type=float, default=0.1)
    g.add_argument("--momentum", type=float, default=0.9)
    g.add_argument("--weight-decay", type=float, default=5e-4)
    g.add_argument("--lr-drop-factor", type=float, default=10.0)
    g.add_argument("--lr-drop-every", type=int, default=100)
    g.add_argument("--epochs", type=int, default=350)
    g.add_argument("--batch-size", type=int, default=128)


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file of defaults; flags override")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true",
                   help="allow writing into a non-empty output directory")
    p.add_argument("--seeds", type=_parse_int_list, default=[0],
                   help="comma-separated seeds")
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ieanet",
        description="Train and analyze CNNs with inner-ensemble-average layers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model per seed")
    for add in (_add_common_flags, _add_data_flags, _add_model_flags, _add_sgd_flags):
        add(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    for add in (_add_common_flags, _add_data_flags):
        add(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep-m", help="train across inner ensemble sizes")
    for add in (_add_common_flags, _add_data_flags, _add_model_flags, _add_sgd_flags):
        add(p_sweep)
    p_sweep.add_argument("--m-list", type=_parse_int_list, required=True,
                         help="inner ensemble sizes to sweep, e.g. 1,3,7")
    p_sweep.set_defaults(func=cmd_sweep_m)

    p_ens = sub.add_parser("ensemble", help="average predictions of checkpoints")
    for add in (_add_common_flags, _add_data_flags):
        add(p_ens)
    p_ens.add_argument("--checkpoints", nargs="+", required=True)
    p_ens.set_defaults(func=cmd_ensemble)

    p_ana = sub.add_parser("analyze", help="export feature maps and mss scores")
    for add in (_add_common_flags, _add_data_flags):
        add(p_ana)
    p_ana.add_argument("--checkpoint", required=True)
    p_ana.add_argument("--layer", type=int, default=0)
    p_ana.add_argument("--probe-index", type=int, default=0,
                       help="test-set sample whose feature maps are exported")
    p_ana.add_argument("--probe-batch", type=int, default=100,
                       help="test samples averaged for the mss score")
    p_ana.set_defaults(func=cmd_analyze)
    return parser


# -- config file / runspec echo ----------------------------------------------

def load_config_tokens(path) -> list[str]:
    """Turn a key=value file into argv tokens (booleans become bare flags)."""
    tokens: list[str] = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key in SKIP_ECHO:
                continue
            flag = "--" + key.replace("_", "-")
            if key in BOOL_FLAGS:
                if value.lower() in ("true", "1", "yes"):
                    tokens.append(flag)
                elif value.lower() not in ("false", "0", "no"):
                    raise ConfigError(f"{path}:{lineno}: bad boolean {value!r}")
            elif key == "checkpoints":
                tokens.append(flag)
                tokens.extend(value.split())
            else:
                tokens.extend((flag, value))
    return tokens


def inject_config(argv: list[str]) -> list[str]:
    """Splice --config file tokens in right after the subcommand."""
    argv = list(argv)
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
            del argv[i:i + 2]
            break
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            del argv[i:i + 1]
            break
    if path is None or not argv:
        return argv
    return [argv[0]] + load_config_tokens(path) + argv[1:]


def _echo_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], str):
            return " ".join(value)
        return ",".join(str(v) for v in value)
    return str(value)


def write_runspec(args: argparse.Namespace, out_dir):
    lines = [f"command = {args.command}"]
    for key in sorted(vars(args)):
        if key in SKIP_ECHO:
            continue
        value = getattr(args, key)
        if value is None:
            continue
        lines.append(f"{key} = {_echo_value(value)}")
    with open(os.path.join(out_dir, "runspec.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")


def prepare_out_dir(args: argparse.Namespace) -> str:
    out = args.out
    if os.path.isdir(out) and os.listdir(out) and not args.force:
        raise ConfigError(
            f"output directory {out!r} is not empty (pass --force to reuse)"
        )
    os.makedirs(out, exist_ok=True)
    write_runspec(args, out)
    return out


# -- dataset assembly ---------------------------------------------------------

def load_datasets(args: argparse.Namespace) -> tuple[Dataset, Dataset]:
    if args.data == "synth":
        train_set = synth_blobs(args.synth_train, args.num_classes, args.data_seed)
        test_set = synth_blobs(args.synth_test, args.num_classes, args.data_seed + 1)
    elif args.data == "idx":
        needed = (args.train_images, args.train_labels,
                  args.test_images, args.test_labels)
        if any(p is None for p in needed):
            raise ConfigError(
                "--data idx needs --train-images/--train-labels/"
                "--test-images/--test-labels"
            )
        train_set = parse_idx(args.train_images, args.train_labels)
        test_set = parse_idx(args.test_images, args.test_labels)
    else:  # amat
        if args.amat_path is None:
            raise ConfigError("--data amat needs --amat-path")
        train_set, test_set = parse_amat(
            args.amat_path, (args.amat_train, args.amat_test), args.transpose
        )
    train_set = train_set.subset(args.limit_train)
    test_set = test_set.subset(args.limit_test)
    train_set.split, test_set.split = "train", "test"
    if not args.no_standardize:
        train_set, test_set = standardize_pair(train_set, test_set)
    return train_set, test_set


def _model_config(args: argparse.Namespace, input_shape, seed: int,
                  m=None) -> ModelConfig:
    m_value = args.m if m is None else m
    if isinstance(m_value, list) and len(m_value) == 1:
        m_value = m_value[0]
    channels = tuple(args.channels) if args.channels else None
    return ModelConfig(
        depth=args.depth, channels=channels, m=m_value, kernel=args.kernel,
        stride=args.stride, padding=args.padding,
        input_shape=tuple(input_shape), num_classes=args.num_classes, seed=seed,
    )


def _sgd_config(args: argparse.Namespace) -> SgdConfig:
    return SgdConfig(
        lr0=args.lr, momentum=args.momentum, weight_decay=args.weight_decay,
        lr_drop_factor=args.lr_drop_factor, lr_drop_every=args.lr_drop_every,
        total_epochs=args.epochs, batch_size=args.batch_size,
    )


def _train_one(args, train_set, test_set, seed, m, out_dir, tag=""):
    cfg = _model_config(args, train_set.images.shape[1:], seed, m)
    model = build_model(cfg)
    log = print if args.verbose else None
    metrics = train(model, train_set, test_set, _sgd_config(args), seed, log=log)
    metrics.save_csv(os.path.join(out_dir, f"metrics{tag}_seed{seed}.csv"))
    save_checkpoint(model, os.path.join(out_dir, f"model{tag}_seed{seed}.ieac"))
    return metrics


# -- commands -------------------------------------------------------------

def cmd_train(args: argparse.Namespace):
    train_set, test_set = load_datasets(args)
    out = prepare_out_dir(args)
    for seed in args.seeds:
        metrics = _train_one(args, train_set, test_set, seed, None, out)
        print(f"seed {seed}: final test error "
              f"{metrics.final_test_error():.2f}% ({out})")


def cmd_eval(args: argparse.Namespace):
    _, test_set = load_datasets(args)
    out = prepare_out_dir(args)
    model = load_checkpoint(args.checkpoint)
    err = evaluate(model, test_set)
    with open(os.path.join(out, "eval.csv"), "w") as f:
        f.write("checkpoint,test_error_pct\n")
        f.write(f"{args.checkpoint},{err!r}\n")
    print(f"{args.checkpoint}: test error {err:.2f}%")


def cmd_sweep_m(args: argparse.Namespace):
    if not args.m_list:
        raise ConfigError("--m-list must not be empty")
    if len(args.seeds) < 2:
        raise ConfigError("sweep-m needs >= 2 seeds to report a std deviation")
    m_values = []
    for m in args.m_list:
        if m in m_values:
            print(f"warning: duplicate m={m} ignored", file=sys.stderr)
        else:
            m_values.append(m)
    train_set, test_set = load_datasets(args)
    out = prepare_out_dir(args)
    rows = []
    for m in m_values:
        sub = os.path.join(out, f"m{m}")
        os.makedirs(sub, exist_ok=True)
        errors = []
        for seed in args.seeds:
            metrics = _train_one(args, train_set, test_set, seed, m, sub)
            errors.append(metrics.final_test_error())
        mean = float(np.mean(errors))
        std = float(np.std(errors, ddof=1))
        rows.append((m, mean, std))
        print(f"m={m}: test error {mean:.2f} +- {std:.2f} %")
    with open(os.path.join(out, "sweep.csv"), "w") as f:
        f.write("m,mean_error,std_error\n")
        for m, mean, std in rows:
            f.write(f"{m},{mean!r},{std!r}\n")


def cmd_ensemble(args: argparse.Namespace):
    if len(args.checkpoints) < 2:
        raise ConfigError("ensemble needs >= 2 checkpoints")
    _, test_set = load_datasets(args)
    out = prepare_out_dir(args)
    models = [load_checkpoint(p) for p in args.checkpoints]
    classes = {m.config.num_classes for m in models}
    if len(classes) != 1:
        raise ConfigError(f"checkpoints disagree on num_classes: {sorted(classes)}")
    prob_sets = [predict_probs(m, test_set) for m in models]
    member_err = [
        float(100.0 * np.mean(p.argmax(axis=1) != test_set.labels))
        for p in prob_sets
    ]
    pred = ensemble_average(prob_sets)
    ens_err = float(100.0 * np.mean(pred.labels != test_set.labels))
    with open(os.path.join(out, "ensemble.csv"), "w") as f:
        f.write("member,error_pct\n")
        for path, err in zip(args.checkpoints, member_err):
            f.write(f"{path},{err!r}\n")
        f.write(f"ensemble,{ens_err!r}\n")
    for path, err in zip(args.checkpoints, member_err):
        print(f"member {path}: {err:.2f}%")
    print(f"ensemble of {len(models)}: {ens_err:.2f}%")


def cmd_analyze(args: argparse.Namespace):
    _, test_set = load_datasets(args)
    out = prepare_out_dir(args)
    model = load_checkpoint(args.checkpoint)
    if not 0 <= args.probe_index < len(test_set):
        raise ConfigError(
            f"--probe-index {args.probe_index} out of range for test set "
            f"of {len(test_set)}"
        )
    batch = test_set.images[:max(args.probe_batch, args.probe_index + 1)]
    bank = extract_features(model, args.layer, batch,
                            mode="sample", sample_index=args.probe_index)
    export_feature_maps(bank, out)
    scores = [
        mss_score(extract_features(model, args.layer, batch,
                                   mode="sample", sample_index=i).features)
        for i in range(batch.shape[0])
    ]
    score = float(np.mean(scores))
    with open(os.path.join(out, "mss.csv"), "w") as f:
        f.write("layer,n,mss_score\n")
        f.write(f"{args.layer},{bank.n},{score!r}\n")
    print(f"layer {args.layer}: n={bank.n} mss={score:.4f} "
          f"(mean over {batch.shape[0]} probes)")


# -- entry point ---------------------------------------------------------

def _thread_cap():
    value = os.environ.get("IEA_THREADS")
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"IEA_THREADS must be an integer, got {value!r}")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        print("warning: threadpoolctl not installed; IEA_THREADS ignored",
              file=sys.stderr)
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = inject_config(argv)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_cap():
            args.func(args)
        return 0
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IeaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
