"""Command-line interface.

Subcommands: ``train``, ``unlearn``, ``verify``, ``ledger``, ``metrics``,
``scenario``, ``report``.  Exit codes: 0 success, 2 verification-failure
outcome, 3 configuration error, 4 internal error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .driver import (
    load_run,
    run_training,
    run_unlearning_scenario,
    save_run,
    training_result,
    unlearn_loaded_run,
    verify_run,
    _consensus,
)
from .ledger import Ledger
from .metrics import load_metrics
from .plots import render_report
from .unlearning import VerificationFailure

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedunlearn",
        description=(
            "Federated training with on-chain commitments, verifiable "
            "calibration-based unlearning, and experiment reporting."
        ),
    )
    sub = parser.add_subparsers(dest="command")

    def add_config_args(p):
        p.add_argument("--config", help="flat key/value config file")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="config override (repeatable)",
        )

    p_train = sub.add_parser("train", help="run federated training, save a run folder")
    add_config_args(p_train)
    p_train.add_argument("--out", required=True, help="run folder to write")

    p_unlearn = sub.add_parser("unlearn", help="unlearn the configured targets in a saved run")
    p_unlearn.add_argument("--run", required=True, help="run folder from `train`")
    p_unlearn.add_argument("--out", help="output folder (default: the input run folder)")

    p_verify = sub.add_parser("verify", help="audit a run folder: chain + calibration hashes")
    p_verify.add_argument("--run", required=True, help="run folder to audit")

    p_ledger = sub.add_parser("ledger", help="inspect or check a saved chain")
    ledger_sub = p_ledger.add_subparsers(dest="ledger_command")
    p_dump = ledger_sub.add_parser("dump", help="print the chain as JSONL")
    p_dump.add_argument("--run", required=True)
    p_dump.add_argument("--out", help="write to a file instead of stdout")
    p_lverify = ledger_sub.add_parser("verify", help="check hash linkage and replay")
    p_lverify.add_argument("--run", required=True)
    p_state = ledger_sub.add_parser("state", help="print contract state")
    p_state.add_argument("--run", required=True)
    p_state.add_argument("--round", type=int, help="also list round N's committed hash keys")

    p_metrics = sub.add_parser("metrics", help="summarize emitted metrics")
    metrics_sub = p_metrics.add_subparsers(dest="metrics_command")
    p_msum = metrics_sub.add_parser("summary", help="per-phase summary of a metrics file")
    p_msum.add_argument("--file", required=True, help="metrics CSV or JSONL")

    p_scenario = sub.add_parser("scenario", help="run a full experiment scenario")
    add_config_args(p_scenario)
    p_scenario.add_argument(
        "--scenario",
        help="scenario override (honest | tamper | key-exposure | "
        "no-unlearn-baseline | retrain-from-scratch)",
    )
    p_scenario.add_argument("--out", required=True, help="run folder to write")

    p_report = sub.add_parser("report", help="render figures from metrics files")
    p_report.add_argument("--metrics", nargs="+", required=True, help="metrics files")
    p_report.add_argument("--out-dir", required=True, help="figure output directory")

    return parser


def _parse_overrides(pairs) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must look like KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _load_cfg(args, require_seed: bool = False) -> ExperimentConfig:
    overrides = _parse_overrides(args.overrides)
    if getattr(args, "scenario", None):
        overrides["scenario"] = args.scenario
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    elif require_seed and "seed" not in overrides:
        raise ConfigError("scenario runs require an explicit --seed")
    if args.config:
        return load_config(args.config, overrides)
    return parse_config("", overrides)


def _print_summary(summary: dict) -> None:
    for key in sorted(summary):
        value = summary[key]
        if isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{key}: {value}")


def _load_chain(run_dir: str) -> Ledger:
    run = Path(run_dir)
    if not (run / "ledger.jsonl").exists():
        raise ConfigError(f"{run} has no ledger.jsonl")
    cfg = load_config(run / "config.txt")
    return Ledger.load(run / "ledger.jsonl", _consensus(cfg))


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    state = run_training(cfg)
    result = training_result(cfg, state)
    out = save_run(result, args.out)
    print(f"run folder: {out}")
    _print_summary(result.summary)
    return 0


def _cmd_unlearn(args) -> int:
    state = load_run(args.run)
    result = unlearn_loaded_run(state)
    out = save_run(result, args.out or args.run)
    print(f"run folder: {out}")
    _print_summary(result.summary)
    return result.exit_code


def _cmd_verify(args) -> int:
    state = load_run(args.run)
    ok, details = verify_run(state)
    for row in details:
        status = "accept" if row["ok"] else "REJECT"
        print(f"{row['check']}: {status} ({row['detail']})")
    print(f"verification: {'ok' if ok else 'failed'}")
    return 0 if ok else 2


def _cmd_ledger(args) -> int:
    if args.ledger_command is None:
        raise ConfigError("ledger needs a subcommand: dump | verify | state")
    chain = _load_chain(args.run)
    if args.ledger_command == "dump":
        text = chain.dumps()
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
            print(f"wrote {args.out}")
        else:
            sys.stdout.write(text)
        return 0
    if args.ledger_command == "verify":
        bad_height = chain.verify_chain()
        if bad_height is None:
            print(f"chain ok ({chain.height + 1} blocks)")
            return 0
        print(f"chain invalid at height {bad_height}")
        return 2
    state = chain.state
    print(f"height: {chain.height}")
    print(f"registered clients: {sorted(state.registered_keys)}")
    print(f"local commitments: {len(state.local_hashes)}")
    print(f"global commitments: {sorted(state.global_hashes)}")
    print(f"calibration commitments: {sorted(state.calibration_hashes)}")
    for request in state.pending_requests:
        print(
            f"unlearn request: round {request['round']} targets {list(request['targets'])}"
        )
    if args.round is not None:
        hashes = chain.query_hashes(args.round)
        for cid in sorted(hashes):
            print(f"round {args.round} {cid}: {hashes[cid]}")
    return 0


def _cmd_metrics(args) -> int:
    if args.metrics_command is None:
        raise ConfigError("metrics needs a subcommand: summary")
    records = load_metrics(args.file)
    if not records:
        print("no records")
        return 0
    print(f"records: {len(records)}")
    groups: dict[tuple[str, str], list] = {}
    for record in records:
        groups.setdefault((record.scenario, record.phase), []).append(record)
    for (scenario, phase), recs in groups.items():
        last = recs[-1]
        total_s = sum(r.total_time_ms() for r in recs) / 1000.0
        parts = [f"{scenario}/{phase}: rounds={len(recs)}", f"sim_time={total_s:.1f}s"]
        if last.accuracy is not None:
            parts.append(f"final_accuracy={last.accuracy:.4f}")
        if last.mia_recall is not None:
            parts.append(f"final_mia_recall={last.mia_recall:.4f}")
        print("  ".join(parts))
    return 0


def _cmd_scenario(args) -> int:
    cfg = _load_cfg(args, require_seed=True)
    result = run_unlearning_scenario(cfg)
    out = save_run(result, args.out)
    print(f"run folder: {out}")
    _print_summary(result.summary)
    return result.exit_code


def _cmd_report(args) -> int:
    written = render_report(args.metrics, args.out_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "unlearn": _cmd_unlearn,
    "verify": _cmd_verify,
    "ledger": _cmd_ledger,
    "metrics": _cmd_metrics,
    "scenario": _cmd_scenario,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that code is reserved for
        # verification failures here, so remap usage problems to 3
        code = exc.code if isinstance(exc.code, int) else 0
        return 0 if code == 0 else 3
    if args.command is None:
        parser.print_help()
        return 3
    try:
        return _COMMANDS[args.command](args)
    except VerificationFailure as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # contract: internal errors exit 4, not tracebacks
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
