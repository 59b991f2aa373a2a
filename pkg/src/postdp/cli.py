"""Command-line interface: one executable, one subcommand per capability.

Exit codes: 0 success, 2 budget-guard refusal, 64 usage, 65 data format,
70 internal.  Explicit flags override config-file values, which override
defaults.  File outputs are written atomically; a failed stage leaves only
`.partial` files behind.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import accounting, evaluation, mechanism, simulate, verify
from .calibration import (
    BudgetError,
    PrivacyBudget,
    TrainingConfig,
    Variant,
    check_budget,
    default_delta,
    max_supported_epsilon,
    noise_scale,
    sensitivity,
)

EXIT_OK = 0
EXIT_BUDGET = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_INTERNAL = 70

SCHEMA_VERSION = 1

CONFIG_KEYS = {
    "epochs": int,
    "learning_rate": float,
    "clipping_norm": float,
    "dataset_size": int,
    "batch_size": int,
    "epsilon": float,
    "delta": float,
    "variant": str,
    "seed": int,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = CONFIG_KEYS[key](value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def _resolve(args, config, key, required=False, default=None):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    if required:
        raise UsageError(f"missing required option --{key.replace('_', '-')}")
    return default


def _training_config(args, config) -> TrainingConfig:
    return TrainingConfig(
        epochs=_resolve(args, config, "epochs", required=True),
        learning_rate=_resolve(args, config, "learning_rate", required=True),
        clipping_norm=_resolve(args, config, "clipping_norm", required=True),
        dataset_size=_resolve(args, config, "dataset_size", required=True),
        batch_size=_resolve(args, config, "batch_size", required=True),
    )


def _resolve_delta(args, config, cfg: TrainingConfig) -> tuple[float, str]:
    delta = _resolve(args, config, "delta")
    if delta is not None:
        return delta, "explicit"
    return default_delta(cfg.dataset_size), "default (1/N^2)"


def _atomic_write(path, writer) -> None:
    partial = str(path) + ".partial"
    writer(partial)
    os.replace(partial, path)


def _write_json(path, doc) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    _atomic_write(path, lambda p: Path(p).write_text(text))


def _emit(args, lines, doc) -> None:
    if args.json:
        print(json.dumps({"schema_version": SCHEMA_VERSION, **doc}, indent=2))
    elif not args.quiet:
        for line in lines:
            print(line)


def cmd_calibrate(args, config) -> int:
    cfg = _training_config(args, config)
    epsilon = _resolve(args, config, "epsilon", required=True)
    delta, delta_source = _resolve_delta(args, config, cfg)
    budget = PrivacyBudget(epsilon=epsilon, delta=delta)
    dw = sensitivity(cfg).delta_w
    split = noise_scale(cfg, budget, Variant.SPLIT)
    under = noise_scale(cfg, budget, Variant.UNDER_SQRT)
    ok, diag = check_budget(budget, dw)
    doc = {
        "delta_w": dw,
        "epsilon": epsilon,
        "delta": delta,
        "delta_source": delta_source,
        "sigma_split": split.sigma,
        "sigma_split_1": split.sigma1,
        "sigma_split_2": split.sigma2,
        "sigma_undersqrt": under.sigma,
        "sigma_undersqrt_addend_1": under.sigma1,
        "sigma_undersqrt_addend_2": under.sigma2,
        "max_supported_epsilon": max_supported_epsilon(dw, delta),
        "budget_ok": ok,
        "budget_diagnostic": diag,
    }
    lines = [
        f"delta_w = {dw!r}",
        f"delta = {delta!r} ({delta_source})",
        f"sigma (split) = {split.sigma!r}  [sigma1 = {split.sigma1!r}, sigma2 = {split.sigma2!r}]",
        f"sigma (undersqrt) = {under.sigma!r}",
        f"max supported epsilon = {doc['max_supported_epsilon']!r}",
        diag,
    ]
    _emit(args, lines, doc)
    if not ok and not args.json and not args.quiet:
        print(diag, file=sys.stderr)
    return EXIT_OK if ok else EXIT_BUDGET


def cmd_noise(args, config) -> int:
    cfg = _training_config(args, config)
    epsilon = _resolve(args, config, "epsilon", required=True)
    delta, _ = _resolve_delta(args, config, cfg)
    variant = Variant(_resolve(args, config, "variant", default=Variant.SPLIT.value))
    seed = _resolve(args, config, "seed", default=0)
    budget = PrivacyBudget(epsilon=epsilon, delta=delta)

    ws = mechanism.load_weights(args.in_path)
    noisy, receipt = mechanism.noise_then_account(
        ws, cfg, budget, variant, seed, tuple(args.exclude_prefix or ())
    )
    _atomic_write(args.out_path, lambda p: mechanism.save_weights(noisy, p))
    outputs = {"weights": str(args.out_path)}
    if args.receipt:
        _write_json(args.receipt, {"schema_version": SCHEMA_VERSION, **receipt.to_dict()})
        outputs["receipt"] = str(args.receipt)
    doc = {"sigma": receipt.sigma, "tensors": len(noisy.tensors), "outputs": outputs}
    _emit(
        args,
        [
            f"noised {len(noisy.tensors)} tensor(s) with sigma = {receipt.sigma!r}",
            f"wrote {args.out_path}",
        ],
        doc,
    )
    return EXIT_OK


def cmd_account(args, config) -> int:
    cfg = _training_config(args, config)
    delta, _ = _resolve_delta(args, config, cfg)
    epsilon = _resolve(args, config, "epsilon")
    if args.sigma is not None:
        sigma = args.sigma
    elif epsilon is not None:
        sigma = noise_scale(cfg, PrivacyBudget(epsilon=epsilon, delta=delta)).sigma
    else:
        raise UsageError("account needs --sigma or --epsilon (to derive sigma)")
    table = accounting.pipeline_table(
        cfg,
        sigma,
        delta,
        alpha_grid=range(2, args.alpha_max + 1),
        empirical_epsilon=args.empirical_epsilon,
    )
    doc = {
        "inputs": {
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "clipping_norm": cfg.clipping_norm,
            "dataset_size": cfg.dataset_size,
            "batch_size": cfg.batch_size,
            "delta": delta,
            "sigma": sigma,
            "empirical_epsilon": args.empirical_epsilon,
            "alpha_max": args.alpha_max,
        },
        "delta_w": table["delta_w"],
        "sampling_rate": table["sampling_rate"],
        "sigma_total": table["sigma_effective"],
        "alphas": table["rows"],
        "epsilon": table["epsilon"],
        "alpha_star": table["alpha_star"],
        "dropped_alphas": table["dropped_alphas"],
    }
    if args.out:
        _write_json(args.out, {"schema_version": SCHEMA_VERSION, **doc})
    _emit(
        args,
        [
            f"delta_w = {table['delta_w']!r}, q = {table['sampling_rate']!r}",
            f"sigma = {sigma!r}, sigma_total = {table['sigma_effective']!r}",
            f"epsilon = {table['epsilon']!r} at alpha* = {table['alpha_star']}",
        ],
        doc,
    )
    return EXIT_OK


def cmd_simulate(args, config) -> int:
    cfg = _training_config(args, config)
    delta = _resolve(args, config, "delta")
    seed = _resolve(args, config, "seed", default=0)
    grid = simulate.log_spaced_epsilons(args.eps_min, args.eps_max, args.eps_points)
    reports = simulate.sweep(
        grid, cfg, delta=delta, num_samples=args.samples, seed=seed, variant=args.variant
    )
    if args.out_csv:
        _atomic_write(args.out_csv, lambda p: simulate.write_sweep_csv(reports, p))
    if args.out_json:
        _atomic_write(
            args.out_json, lambda p: Path(p).write_text(simulate.sweep_to_json(reports) + "\n")
        )
    doc = {"reports": [r.to_dict() for r in reports]}
    lines = [
        f"eps={r.epsilon:.6g} variant={r.variant} sigma={r.sigma:.6g} "
        f"violation_rate={r.violation_rate:.6f} analytic={r.analytic_rate:.3g}"
        for r in reports
    ]
    _emit(args, lines, doc)
    return EXIT_OK


def cmd_verify(args, config) -> int:
    cfg = _training_config(args, config)
    epsilon = _resolve(args, config, "epsilon", required=True)
    delta, _ = _resolve_delta(args, config, cfg)
    budget = PrivacyBudget(epsilon=epsilon, delta=delta)
    result = verify.verify_composed(
        budget, cfg, args.compositions, mode=args.mode, taylor_terms=args.terms
    )
    if args.emit_smt:
        spec = verify.DpConditionSpec(
            epsilon=epsilon,
            delta=delta,
            sigma=result.sigma_original,
            delta_w=result.delta_w,
            taylor_terms=args.terms,
        )
        _atomic_write(
            args.emit_smt, lambda p: Path(p).write_text(verify.export_smtlib(spec))
        )
    doc = {
        "epsilon": epsilon,
        "delta": delta,
        "compositions": args.compositions,
        "mode": args.mode,
        "composed_epsilon": result.composed_budget.eps_prime,
        "composed_delta": result.composed_budget.delta_prime,
        "sigma_composed": result.sigma_composed,
        "sigma_original": result.sigma_original,
        "composed": result.composed.to_dict(),
        "original": result.original.to_dict(),
    }
    lines = [
        f"composed epsilon = {result.composed_budget.eps_prime!r}, "
        f"composed delta = {result.composed_budget.delta_prime!r}",
        f"composed condition: {result.composed.status.value} ({result.composed.detail})",
        f"original condition: {result.original.status.value} ({result.original.detail})",
    ]
    _emit(args, lines, doc)
    return EXIT_OK


def cmd_mia(args, config) -> int:
    if args.labeled:
        scores = evaluation.load_labeled_score_file(args.labeled)
    elif args.member and args.nonmember:
        scores = evaluation.ScoreSet(
            member_scores=tuple(evaluation.load_score_file(args.member)),
            nonmember_scores=tuple(evaluation.load_score_file(args.nonmember)),
        )
    else:
        raise UsageError("mia needs --labeled, or both --member and --nonmember")
    metrics = evaluation.mia_evaluate(scores)
    doc = metrics.to_dict()
    lines = [f"{key} = {value!r}" for key, value in doc.items()]
    _emit(args, lines, doc)
    return EXIT_OK


def cmd_compare(args, config) -> int:
    if args.results:
        if not args.out_dir:
            raise UsageError("batch compare needs --out-dir")
        report = evaluation.batch_report(args.results, args.group_by, args.out_dir)
        doc = {"paths": report["paths"], "groups": len(report["descriptive"])}
        _emit(
            args,
            [f"wrote {p}" for p in report["paths"].values()],
            doc,
        )
        return EXIT_OK
    if not (args.a and args.b):
        raise UsageError("compare needs --a and --b, or --results")
    a = evaluation.load_score_file(args.a)
    b = evaluation.load_score_file(args.b)
    report = evaluation.pairwise_compare(a, b, paired=not args.unpaired)
    doc = report.to_dict()
    lines = [f"{key} = {value!r}" for key, value in doc.items()]
    _emit(args, lines, doc)
    return EXIT_OK


def _add_common(sp):
    sp.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    sp.add_argument("--config", default=None, help="key = value config file")
    sp.add_argument("--json", action="store_true", help="machine-readable output")
    sp.add_argument("--quiet", action="store_true", help="suppress human-readable output")


def _add_training(sp):
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", dest="learning_rate", type=float)
    sp.add_argument("--clip", dest="clipping_norm", type=float)
    sp.add_argument("--dataset-size", type=int)
    sp.add_argument("--batch-size", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="postdp", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    sp = sub.add_parser("calibrate", help="compute sensitivity and noise scales")
    _add_common(sp)
    _add_training(sp)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--delta", type=float)
    sp.set_defaults(handler=cmd_calibrate)

    sp = sub.add_parser("noise", help="apply calibrated noise to a checkpoint")
    _add_common(sp)
    _add_training(sp)
    sp.add_argument("--in", dest="in_path", required=True)
    sp.add_argument("--out", dest="out_path", required=True)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--variant", choices=[v.value for v in Variant])
    sp.add_argument("--receipt", help="write the noise receipt JSON here")
    sp.add_argument(
        "--exclude-prefix", action="append", help="leave tensors with this name prefix unnoised"
    )
    sp.set_defaults(handler=cmd_noise)

    sp = sub.add_parser("account", help="subsampled RDP accounting report")
    _add_common(sp)
    _add_training(sp)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--sigma", type=float, help="noise scale to account for")
    sp.add_argument("--epsilon", type=float, help="derive sigma from this budget (split form)")
    sp.add_argument("--alpha-max", type=int, default=accounting.DEFAULT_ALPHA_MAX)
    sp.add_argument(
        "--empirical-epsilon",
        type=float,
        help="fold the empirical taper term at this epsilon into sigma",
    )
    sp.add_argument("--out", help="write the JSON report here")
    sp.set_defaults(handler=cmd_account)

    sp = sub.add_parser("simulate", help="Monte-Carlo violation-rate sweep")
    _add_common(sp)
    _add_training(sp)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--eps-min", type=float, default=0.01)
    sp.add_argument("--eps-max", type=float, default=1000.0)
    sp.add_argument("--eps-points", type=int, default=31)
    sp.add_argument("--samples", type=int, default=simulate.DEFAULT_NUM_SAMPLES)
    sp.add_argument(
        "--variant", choices=["split", "undersqrt", "both"], default="both"
    )
    sp.add_argument("--out-json", help="write the full report JSON here")
    sp.add_argument("--out-csv", help="write the sweep CSV here")
    sp.set_defaults(handler=cmd_simulate)

    sp = sub.add_parser("verify", help="check the DP condition, optionally emit SMT-LIB")
    _add_common(sp)
    _add_training(sp)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--compositions", type=int, default=1)
    sp.add_argument("--mode", choices=["taylor", "exact"], default="exact")
    sp.add_argument("--terms", type=int, default=verify.DEFAULT_TAYLOR_TERMS)
    sp.add_argument("--emit-smt", help="write the SMT-LIB script here")
    sp.set_defaults(handler=cmd_verify)

    sp = sub.add_parser("mia", help="membership-inference attack metrics")
    _add_common(sp)
    sp.add_argument("--member", help="CSV of member scores (column `score`)")
    sp.add_argument("--nonmember", help="CSV of non-member scores (column `score`)")
    sp.add_argument("--labeled", help="CSV with columns label,score (label 1 = member)")
    sp.set_defaults(handler=cmd_mia)

    sp = sub.add_parser("compare", help="pairwise statistics or grouped batch report")
    _add_common(sp)
    sp.add_argument("--a", help="first score CSV (column `score`)")
    sp.add_argument("--b", help="second score CSV, the reference")
    sp.add_argument("--unpaired", action="store_true")
    sp.add_argument("--results", nargs="+", help="run-results CSVs for the batch report")
    sp.add_argument("--group-by", choices=["batch_size", "epochs"], default="batch_size")
    sp.add_argument("--out-dir", help="directory for the batch report files")
    sp.set_defaults(handler=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise UsageError("a subcommand is required (see --help)")
        config = _load_config(args.config) if args.config else {}
        return args.handler(args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetError as exc:
        print(f"budget refused: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (mechanism.ContainerFormatError, evaluation.SchemaError) as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OverflowError) as exc:
        print(f"invalid parameter: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
