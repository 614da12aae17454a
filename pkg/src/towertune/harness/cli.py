"""Command-line interface.

Subcommands cover the pipeline stages (gen-data, pretrain, osr, finetune),
the verification commands (grad-check, oracle-check), the sweep drivers
(exp-coldstart, exp-margin, exp-osr-scaling), and inspection (eval, report).

Configuration comes from an optional ``--config`` file (``key = value`` lines,
``#`` comments) with flags layered on top; ``--set key=value`` overrides any
config key. Stochastic commands require a seed, supplied either as a ``seed``
key in the config file or as ``--seed``.

Exit codes: 0 success, 1 a check or recorded assertion failed, 2 usage or
input-format error, 3 numeric failure during computation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from ..datagen import generate, save_dataset
from ..errors import (
    CheckpointError,
    ConfigurationError,
    DataFormatError,
    NumericError,
    SchemaError,
    TowertuneError,
)
from ..model import flatten, init_model, unflatten
from .checkpoint import check_checkpoint_shape, load_checkpoint
from .config import (
    ARMS,
    RunConfig,
    arm_stages,
    config_digest,
    dataset_spec,
    make_run_config,
    parse_config_text,
    resolved_seeds,
)
from .checks import gradient_check, oracle_equivalence_check
from .experiments import (
    DEFAULT_MARGINS,
    DEFAULT_SCALING_EPOCHS,
    experiment_coldstart,
    experiment_margin_sweep,
    experiment_osr_scaling,
    prepare_run,
    read_metrics_csv,
    run_experiment,
    write_coldstart_csv,
    write_margin_csv,
    write_scaling_csv,
)
from .metrics import eval_recall_at_k, fn_similarity_stats

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _parse_set(pairs) -> dict:
    values = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigurationError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        values[key.strip()] = value.strip()
    return values


def _build_config(args) -> RunConfig:
    """Config file, then --set pairs, then named flags; a seed must be given
    explicitly somewhere."""
    overrides = _parse_set(getattr(args, "set", None))
    seed_given = "seed" in overrides
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
        seed_given = True
    if getattr(args, "arm", None) is not None:
        overrides["arm"] = args.arm
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out

    if getattr(args, "config", None) is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            file_values = parse_config_text(fh.read())
        seed_given = seed_given or "seed" in file_values
        file_values.update(overrides)
        cfg = make_run_config(file_values)
    else:
        cfg = make_run_config(overrides)
    if not seed_given:
        raise ConfigurationError(
            "a seed is required: pass --seed or set 'seed' in the config file"
        )
    return cfg


def _add_config_flags(p, with_arm=True):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, help="master seed (required here or in the file)")
    p.add_argument("--out", help="output directory override")
    p.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    if with_arm:
        p.add_argument("--arm", choices=ARMS, help="experiment arm override")


def cmd_gen_data(args) -> int:
    cfg = _build_config(args)
    dataset = generate(dataset_spec(cfg))
    out = args.out_file or os.path.join(cfg.out_dir, "dataset.fcds")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    save_dataset(dataset, out)
    print(
        f"wrote {out}: n={dataset.n} d_img={cfg.d_img} d_txt={cfg.d_txt} "
        f"k={cfg.k_concepts} seed={dataset.spec.seed}"
    )
    return EXIT_OK


def cmd_pretrain(args) -> int:
    from .checkpoint import Checkpoint, save_checkpoint
    from .config import schedule_config
    from ..optim import init_estimator_state, init_moment_state

    cfg = _build_config(args)
    prep = prepare_run(cfg)
    r1_i2t, r1_t2i = eval_recall_at_k(prep.model0, prep.test, k=1)
    omega = flatten(prep.model0)
    out = args.out_file or os.path.join(cfg.out_dir, "model0.ckpt")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    save_checkpoint(
        Checkpoint(
            omega=omega,
            moments=init_moment_state(
                omega.size, beta1=cfg.beta1, beta2=cfg.beta2,
                weight_decay=cfg.weight_decay,
            ),
            estimators=init_estimator_state(prep.train.n),
            tau=cfg.tau,
            schedules=schedule_config(cfg),
            config_hash=config_digest(cfg),
            seeds=resolved_seeds(cfg),
            epoch=0,
        ),
        out,
    )
    print(f"wrote {out}: baseline r1_i2t={r1_i2t:.4f} r1_t2i={r1_t2i:.4f}")
    return EXIT_OK


def _finish_run(summary: dict) -> int:
    final = summary["final"]
    print(
        f"arm={summary['arm']} epoch={final['epoch']} "
        f"r1_i2t={final['r1_i2t']:.4f} r1_t2i={final['r1_t2i']:.4f} "
        f"passed={summary['passed']}"
    )
    return EXIT_OK if summary["passed"] else EXIT_FAILED


def cmd_osr(args) -> int:
    cfg = _build_config(args)
    if cfg.arm != "osr_only":
        # keep the configured arm's loss so the run stays hash-compatible
        # with checkpoints from the other stages
        variant = arm_stages(cfg)["variant"]
        if variant == "mbcl":
            raise ConfigurationError(
                "statistics recovery replays a phi-based loss; configure a "
                "gcl or hgcl arm (or osr_only with a variant key)"
            )
        cfg = replace(cfg, arm="osr_only", variant=variant)
    summary = run_experiment(cfg, init_checkpoint=args.init, force=args.force)
    return _finish_run(summary)


def cmd_finetune(args) -> int:
    cfg = _build_config(args)
    summary = run_experiment(cfg, init_checkpoint=args.init, force=args.force)
    return _finish_run(summary)


def cmd_grad_check(args) -> int:
    result = gradient_check(
        trials=args.trials, seed=args.seed, tolerance=args.tolerance
    )
    for variant, b, rel in result.trials:
        print(f"  {variant:5s} B={b}  rel={rel:.3e}")
    print(
        f"grad-check: max rel {result.max_rel:.3e} over {len(result.trials)} "
        f"trials (tolerance {result.tolerance:g}): "
        + ("PASS" if result.passed else "FAIL")
    )
    return EXIT_OK if result.passed else EXIT_FAILED


def cmd_oracle_check(args) -> int:
    result = oracle_equivalence_check(
        n=args.n, seed=args.seed, seeds=args.runs, tolerance=args.tolerance
    )
    for variant, err in result.max_err.items():
        print(f"  {variant:5s} max per-coordinate error {err:.3e}")
    print(
        f"oracle-check: tolerance {result.tolerance:g}: "
        + ("PASS" if result.passed else "FAIL")
    )
    return EXIT_OK if result.passed else EXIT_FAILED


def _sweep_seeds(cfg, count):
    return [cfg.seed + i for i in range(count)]


def cmd_exp_coldstart(args) -> int:
    cfg = _build_config(args)
    result = experiment_coldstart(cfg, seeds=_sweep_seeds(cfg, args.count))
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "coldstart.csv")
    write_coldstart_csv(csv_path, result)
    summary = {
        "seeds": _sweep_seeds(cfg, args.count),
        "baselines": result.baselines,
        "dip_counts": result.dip_counts,
        "stable_counts": result.stable_counts,
    }
    with open(os.path.join(cfg.out_dir, "coldstart_summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {csv_path}")
    print(f"epoch-1 dips: {result.dip_counts}")
    print(f"never below baseline: {result.stable_counts}")
    return EXIT_OK


def cmd_exp_margin(args) -> int:
    cfg = _build_config(args)
    margins = [float(m) for m in args.margins.split(",")] if args.margins else list(DEFAULT_MARGINS)
    result = experiment_margin_sweep(cfg, margins=margins)
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "margin.csv")
    write_margin_csv(csv_path, result)
    summary = {
        "margins": result.margins,
        "finals": result.finals,
        "best_margin": result.best_margin,
        "interior": result.interior,
    }
    with open(os.path.join(cfg.out_dir, "margin_summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {csv_path}")
    print(
        f"best margin {result.best_margin:g} "
        f"({'interior' if result.interior else 'endpoint'} of the sweep)"
    )
    return EXIT_OK


def cmd_exp_osr_scaling(args) -> int:
    cfg = _build_config(args)
    epochs_list = (
        [int(e) for e in args.epochs_list.split(",")]
        if args.epochs_list else list(DEFAULT_SCALING_EPOCHS)
    )
    result = experiment_osr_scaling(
        cfg, epochs_list=epochs_list, seeds=tuple(range(args.count))
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "scaling.csv")
    write_scaling_csv(csv_path, result)
    summary = {
        "epochs_list": epochs_list,
        "mean_u": {str(k): v for k, v in result.mean_u.items()},
        "mean_m": {str(k): v for k, v in result.mean_m.items()},
        "slope_u": result.slope_u,
        "slope_m": result.slope_m,
    }
    with open(os.path.join(cfg.out_dir, "scaling_summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {csv_path}")
    if result.slope_u is None:
        print("slope: absent (single epoch budget)")
    else:
        print(f"log-log slopes: u {result.slope_u:.3f}, m {result.slope_m:.3f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _build_config(args)
    prep = prepare_run(cfg, skip_pretrain=True)
    ck = load_checkpoint(
        args.ckpt, expected_config_hash=config_digest(cfg), force=args.force
    )
    check_checkpoint_shape(ck, dim=flatten(prep.model0).size, n=prep.train.n)
    model = unflatten(prep.model0, ck.omega)
    r1_i2t, r1_t2i = eval_recall_at_k(model, prep.test, k=1)
    stats = fn_similarity_stats(model, prep.test, top_k=cfg.top_k)
    print(f"r1_i2t={r1_i2t:.6f} r1_t2i={r1_t2i:.6f}")
    print(
        f"fn_mean={stats.fn_mean:.6f} fn_std={stats.fn_std:.6f} "
        f"tp_mean={stats.tp_mean:.6f} tn_mean={stats.tn_mean:.6f}"
        + (" (no false negatives)" if stats.fn_empty else "")
    )
    return EXIT_OK


def cmd_report(args) -> int:
    summary_path = os.path.join(args.dir, "summary.json")
    with open(summary_path, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    records = read_metrics_csv(os.path.join(args.dir, "metrics.csv"))
    print(f"arm: {summary['arm']} (variant {summary['variant']}, margin {summary['margin']:g})")
    print(f"seeds: {summary['seeds']}")
    print(
        f"baseline r1: i2t {summary['baseline']['r1_i2t']:.4f}, "
        f"t2i {summary['baseline']['r1_t2i']:.4f}"
    )
    for rec in records:
        loss = f"{rec.loss:.6f}" if rec.loss == rec.loss else "-"
        print(
            f"  epoch {rec.epoch}: loss {loss} r1 {rec.r1_i2t:.4f}/{rec.r1_t2i:.4f} "
            f"fn_std {rec.fn_std:.4f}"
        )
    for name, ok in summary["assertions"].items():
        print(f"assertion {name}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if summary["passed"] else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="towertune",
        description="Desk-scale contrastive fine-tuning with optimizer-statistics recovery.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate and serialize a synthetic corpus")
    _add_config_flags(p, with_arm=False)
    p.add_argument("--out-file", help="output path (default <out_dir>/dataset.fcds)")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("pretrain", help="pretrain a starting point and checkpoint it")
    _add_config_flags(p, with_arm=False)
    p.add_argument("--out-file", help="output path (default <out_dir>/model0.ckpt)")
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("osr", help="recover optimizer statistics at frozen weights")
    _add_config_flags(p)
    p.add_argument("--init", help="starting-point checkpoint (else pretrain in-process)")
    p.add_argument("--force", action="store_true", help="accept a config-hash mismatch")
    p.set_defaults(fn=cmd_osr)

    p = sub.add_parser("finetune", help="run the configured arm end to end")
    _add_config_flags(p)
    p.add_argument("--init", help="starting checkpoint (weights, plus statistics if warm)")
    p.add_argument("--force", action="store_true", help="accept a config-hash mismatch")
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("grad-check", help="finite-difference check of the gradient chain")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.set_defaults(fn=cmd_grad_check)

    p = sub.add_parser("oracle-check", help="full-batch streamed-versus-exact gradient check")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, default=64, help="corpus size")
    p.add_argument("--runs", type=int, default=1, help="independent draws per variant")
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.set_defaults(fn=cmd_oracle_check)

    p = sub.add_parser("exp-coldstart", help="arm comparison over shared starting points")
    _add_config_flags(p, with_arm=False)
    p.add_argument("--count", type=int, default=5, help="number of master seeds")
    p.set_defaults(fn=cmd_exp_coldstart)

    p = sub.add_parser("exp-margin", help="hinge margin sweep")
    _add_config_flags(p, with_arm=False)
    p.add_argument("--margins", help="comma-separated margins (default standard sweep)")
    p.set_defaults(fn=cmd_exp_margin)

    p = sub.add_parser("exp-osr-scaling", help="recovery error versus epoch budget")
    _add_config_flags(p)
    p.add_argument("--epochs-list", help="comma-separated budgets (default 1,2,4,8,16)")
    p.add_argument("--count", type=int, default=5, help="seed offsets per budget")
    p.set_defaults(fn=cmd_exp_osr_scaling)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the held-out split")
    _add_config_flags(p, with_arm=False)
    p.add_argument("--ckpt", required=True, help="checkpoint to evaluate")
    p.add_argument("--force", action="store_true", help="accept a config-hash mismatch")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", help="print a run directory's recorded results")
    p.add_argument("--dir", required=True, help="run directory with summary.json")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; pass both through
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.fn(args)
    except (ConfigurationError, CheckpointError, DataFormatError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TowertuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
