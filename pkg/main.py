"""
アドレスクラスタリングのコマンドライン入口。

合成チェーン生成、UTXO/アカウント型のクラスタリング、ラベル伝播、集計表、
正解データとの照合をサブコマンドとして提供する。
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import yaml

from src.core_model import AccountTransfer, ContractViolationError
from src.discord_notify import notify_run_summary, resolve_discord_webhook_url
from src.disjoint_set import Partition
from src.generator.gen_config import (
    GenConfig,
    GenerationError,
    build_gen_config,
    load_gen_config_file,
)
from src.generator.ground_truth import load_truth, write_truth
from src.generator.synth_account import generate_account_chain
from src.generator.synth_utxo import generate_utxo_chain
from src.heuristics.account_clustering import (
    DEFAULT_MIN_SWEEPS,
    build_exchange_clusters,
    build_seed_set,
    deposit_census,
    infer_deposit_addresses,
    load_inferences,
    write_inferences,
)
from src.heuristics.utxo_clustering import (
    change_decision_counts,
    cluster_common_spending,
    cluster_common_spending_sharded,
    iter_change_decisions,
    load_change_decisions,
    write_change_decisions,
)
from src.ingestion import (
    InputFormatError,
    iter_transfer_stream,
    iter_utxo_stream,
    load_clusters,
    load_seed_labels,
    load_utxo_stream,
    write_clusters,
    write_seed_labels,
    write_transfer_stream,
    write_utxo_stream,
)
from src.labeling import (
    DEFAULT_TOP_N,
    census,
    format_census_table,
    load_labeled_clusters,
    propagate_labels,
    write_census_csv,
    write_labeled_clusters,
)
from src.run_manifest import (
    DEFAULT_MANIFEST_SUFFIX,
    build_run_manifest,
    manifest_path_for,
    write_run_manifest,
)
from src.verify.evaluate import evaluate, format_report_summary, save_report_json

DEFAULT_SETTINGS_PATH = "settings.yaml"
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_USAGE_ERROR = 2

LOGGER = logging.getLogger("main")


@dataclass
class CommandResult:
    """What a subcommand read and wrote, plus the summary lines it reports."""

    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    summary: list[str] = field(default_factory=list)
    # summary を既に stdout へ出したコマンドはログに重ねて出さない
    summary_on_stdout: bool = False


def load_settings(path: str | None = None) -> dict:
    """YAML設定ファイルを辞書として読み込む。既定パスが無い場合は空設定。"""
    if path is None:
        if not os.path.exists(DEFAULT_SETTINGS_PATH):
            return {}
        path = DEFAULT_SETTINGS_PATH
    with open(path, "r", encoding="utf-8") as file_obj:
        try:
            data = yaml.safe_load(file_obj) or {}
        except yaml.YAMLError as exc:
            raise InputFormatError(path, None, f"invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise InputFormatError(path, None, "settings must be a mapping")
    return data


def parse_bool(value, default: bool = False) -> bool:
    """多様な入力値を bool に正規化する。"""
    if value is None:
        return default
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        return value.strip().lower() in {"1", "true", "yes", "on"}
    return bool(value)


def positive_int(source: str, name: str, value) -> int:
    """設定値・CLI 値を 1 以上の整数として検証する。"""
    try:
        number = int(value)
    except (TypeError, ValueError):
        raise InputFormatError(source, None, f"{name} must be an integer, got {value!r}") from None
    if isinstance(value, bool) or number < 1:
        raise InputFormatError(source, None, f"{name} must be >= 1, got {value!r}")
    return number


def _open_output(path: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="\n")


def _gen_config_from_args(args: argparse.Namespace) -> GenConfig:
    file_values = load_gen_config_file(args.config) if args.config else {}
    overrides = {
        name: getattr(args, name)
        for name in GenConfig.__dataclass_fields__
        if hasattr(args, name)
    }
    try:
        return build_gen_config(file_values, overrides)
    except ValueError as exc:
        raise InputFormatError(args.config or "<cli>", None, str(exc)) from exc


def cmd_synth_utxo(args: argparse.Namespace, settings: dict) -> CommandResult:
    config = _gen_config_from_args(args)
    txs, truth = generate_utxo_chain(config)
    with _open_output(args.out) as file_obj:
        write_utxo_stream(file_obj, txs)
    with _open_output(args.truth) as file_obj:
        write_truth(file_obj, truth)
    result = CommandResult(outputs=[args.out, args.truth])
    if args.config:
        result.inputs.append(args.config)
    result.summary = [
        f"- transactions: {len(txs)}",
        f"- addresses: {len(truth.entity_of)}",
        f"- config_digest: {config.digest()}",
    ]
    return result


def cmd_synth_account(args: argparse.Namespace, settings: dict) -> CommandResult:
    config = _gen_config_from_args(args)
    transfers, truth, seeds = generate_account_chain(config)
    with _open_output(args.out) as file_obj:
        write_transfer_stream(file_obj, transfers)
    with _open_output(args.truth) as file_obj:
        write_truth(file_obj, truth)
    with _open_output(args.seeds) as file_obj:
        write_seed_labels(file_obj, seeds)
    result = CommandResult(outputs=[args.out, args.truth, args.seeds])
    if args.config:
        result.inputs.append(args.config)
    result.summary = [
        f"- transfers: {len(transfers)}",
        f"- addresses: {len(truth.entity_of)}",
        f"- seeds: {len(seeds)}",
        f"- config_digest: {config.digest()}",
    ]
    return result


def cmd_cluster_utxo(args: argparse.Namespace, settings: dict) -> CommandResult:
    shards = positive_int("<cli>", "--shards", args.shards)
    workers = positive_int("<cli>", "--workers", args.workers)
    if shards == 1:
        partition = Partition()
        with open(args.txs, "rb") as file_obj:
            cluster_common_spending(iter_utxo_stream(file_obj, args.decimals, args.txs), partition)
    else:
        with open(args.txs, "rb") as file_obj:
            txs = load_utxo_stream(file_obj, args.decimals, args.txs)
        partition = cluster_common_spending_sharded(txs, shards, workers)
        del txs

    result = CommandResult(inputs=[args.txs])
    if not args.no_change_heuristic:
        # 2 パス目: 変更出力の判定はアドレス初出履歴を取りながら再走査する
        with open(args.txs, "rb") as file_obj:
            decisions = iter_change_decisions(
                iter_utxo_stream(file_obj, args.decimals, args.txs), partition
            )
            if args.decisions:
                with _open_output(args.decisions) as target:
                    counts = write_change_decisions(target, decisions)
                result.outputs.append(args.decisions)
            else:
                counts = change_decision_counts(decisions)
        result.summary.extend(f"- change {key}: {value}" for key, value in sorted(counts.items()))

    clusters = partition.finalize()
    with _open_output(args.out) as file_obj:
        write_clusters(file_obj, clusters)
    result.outputs.insert(0, args.out)
    result.summary[:0] = [f"- addresses: {len(partition)}", f"- clusters: {len(clusters)}"]
    return result


def _interning(transfers: Iterable[AccountTransfer], partition: Partition) -> Iterator[AccountTransfer]:
    for transfer in transfers:
        partition.intern(transfer.sender)
        partition.intern(transfer.recipient)
        yield transfer


def cmd_cluster_account(args: argparse.Namespace, settings: dict) -> CommandResult:
    if args.min_sweeps is not None:
        min_sweeps = positive_int("<cli>", "--min-sweeps", args.min_sweeps)
    else:
        min_sweeps = positive_int("<settings>", "min_sweeps", settings.get("min_sweeps", DEFAULT_MIN_SWEEPS))
    with open(args.seeds, "rb") as file_obj:
        seeds = build_seed_set(load_seed_labels(file_obj, args.seeds))

    partition = Partition()
    with open(args.transfers, "rb") as file_obj:
        inferences = infer_deposit_addresses(
            _interning(iter_transfer_stream(file_obj, args.decimals, args.transfers), partition),
            seeds,
            min_sweeps,
        )
    build_exchange_clusters(inferences, seeds, partition)
    clusters = partition.finalize()

    with _open_output(args.out) as file_obj:
        write_clusters(file_obj, clusters)
    with _open_output(args.inferences) as file_obj:
        write_inferences(file_obj, inferences)

    top_n = positive_int("<settings>", "census_top_n", settings.get("census_top_n", DEFAULT_TOP_N))
    rows = deposit_census(inferences, top_n)
    if rows:
        sys.stdout.write(format_census_table(rows))
    return CommandResult(
        inputs=[args.transfers, args.seeds],
        outputs=[args.out, args.inferences],
        summary=[
            f"- addresses: {len(partition)}",
            f"- clusters: {len(clusters)}",
            f"- deposits_inferred: {sum(1 for item in inferences if item.inferred)}",
        ],
    )


def cmd_label(args: argparse.Namespace, settings: dict) -> CommandResult:
    with open(args.clusters, "rb") as file_obj:
        clusters = load_clusters(file_obj, args.clusters)
    with open(args.seeds, "rb") as file_obj:
        seeds = load_seed_labels(file_obj, args.seeds)
    labeled = propagate_labels(clusters, seeds)
    with _open_output(args.out) as file_obj:
        write_labeled_clusters(file_obj, labeled)
    return CommandResult(
        inputs=[args.clusters, args.seeds],
        outputs=[args.out],
        summary=[
            f"- clusters: {len(labeled)}",
            f"- labeled: {sum(1 for item in labeled if item.label is not None)}",
            f"- conflicts: {sum(1 for item in labeled if item.conflicts)}",
        ],
    )


def cmd_census(args: argparse.Namespace, settings: dict) -> CommandResult:
    if args.top is not None:
        top_n = positive_int("<cli>", "--top", args.top)
    else:
        top_n = positive_int("<settings>", "census_top_n", settings.get("census_top_n", DEFAULT_TOP_N))
    with open(args.labeled, "rb") as file_obj:
        labeled = load_labeled_clusters(file_obj, args.labeled)
    rows = census(labeled, top_n)
    sys.stdout.write(format_census_table(rows))
    result = CommandResult(inputs=[args.labeled])
    if args.csv:
        with _open_output(args.csv) as file_obj:
            write_census_csv(file_obj, rows)
        result.outputs.append(args.csv)
    return result


def cmd_eval(args: argparse.Namespace, settings: dict) -> CommandResult:
    result = CommandResult(inputs=[args.clusters, args.truth])
    with open(args.truth, "rb") as file_obj:
        truth = load_truth(file_obj, args.truth)
    with open(args.clusters, "rb") as file_obj:
        clusters = load_clusters(file_obj, args.clusters)
    decisions = None
    if args.decisions:
        with open(args.decisions, "rb") as file_obj:
            decisions = load_change_decisions(file_obj, args.decisions)
        result.inputs.append(args.decisions)
    inferences = None
    if args.inferences:
        with open(args.inferences, "rb") as file_obj:
            inferences = load_inferences(file_obj, args.inferences)
        result.inputs.append(args.inferences)

    report = evaluate(clusters, truth, decisions, inferences)
    save_report_json(args.out, report)
    result.outputs.append(args.out)
    result.summary = format_report_summary(report)
    for line in result.summary:
        print(line)
    result.summary_on_stdout = True
    return result


def _add_gen_arguments(parser: argparse.ArgumentParser, account: bool) -> None:
    parser.add_argument("--config", default=None, help="key=value or YAML generator config file")
    parser.add_argument("--seed", dest="rng_seed", default=None, help="RNG seed")
    parser.add_argument("--n-entities", dest="n_entities", default=None)
    parser.add_argument("--wallets-per-entity", dest="wallets_per_entity", default=None)
    parser.add_argument("--n-transactions", dest="n_transactions", default=None)
    parser.add_argument("--decimals", default=None, help="Chain decimals")
    if account:
        parser.add_argument("--noise-wallets", dest="noise_wallets", default=None)
        parser.add_argument("--deposits-per-customer", dest="deposits_per_customer", default=None)
    else:
        parser.add_argument("--change-rate", dest="change_rate", default=None)
        parser.add_argument("--payment-round-decimals", dest="payment_round_decimals", default=None)
        parser.add_argument(
            "--change-min-fractional-digits", dest="change_min_fractional_digits", default=None
        )
        parser.add_argument(
            "--adversarial-round-change-rate", dest="adversarial_round_change_rate", default=None
        )
        parser.add_argument("--address-reuse-rate", dest="address_reuse_rate", default=None)
    parser.add_argument("--truth", required=True, help="Ground truth NDJSON output")


def _build_cli_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="ブロックチェーンのアドレスをヒューリスティックでクラスタリングする。"
    )
    parser.add_argument("--settings", default=None, help="Path to settings YAML")
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging")
    parser.add_argument("--notify", action="store_true", help="Send a Discord summary on success")
    sub = parser.add_subparsers(dest="command", required=True)

    synth_utxo = sub.add_parser("synth-utxo", help="Generate a synthetic UTXO chain")
    _add_gen_arguments(synth_utxo, account=False)
    synth_utxo.add_argument("--out", required=True, help="Transaction NDJSON output")
    synth_utxo.set_defaults(handler=cmd_synth_utxo)

    synth_account = sub.add_parser("synth-account", help="Generate a synthetic account chain")
    _add_gen_arguments(synth_account, account=True)
    synth_account.add_argument("--out", required=True, help="Transfer NDJSON output")
    synth_account.add_argument("--seeds", required=True, help="Hot wallet seed CSV output")
    synth_account.set_defaults(handler=cmd_synth_account)

    cluster_utxo = sub.add_parser("cluster-utxo", help="Common spending + change clustering")
    cluster_utxo.add_argument("--txs", required=True)
    cluster_utxo.add_argument("--decimals", type=int, required=True)
    cluster_utxo.add_argument("--no-change-heuristic", action="store_true")
    cluster_utxo.add_argument("--shards", type=int, default=1)
    cluster_utxo.add_argument("--workers", type=int, default=1)
    cluster_utxo.add_argument("--out", required=True)
    cluster_utxo.add_argument("--decisions", default=None)
    cluster_utxo.set_defaults(handler=cmd_cluster_utxo)

    cluster_account = sub.add_parser("cluster-account", help="Deposit inference + exchange clusters")
    cluster_account.add_argument("--transfers", required=True)
    cluster_account.add_argument("--seeds", required=True)
    cluster_account.add_argument("--decimals", type=int, required=True)
    cluster_account.add_argument("--min-sweeps", dest="min_sweeps", type=int, default=None)
    cluster_account.add_argument("--out", required=True)
    cluster_account.add_argument("--inferences", required=True)
    cluster_account.set_defaults(handler=cmd_cluster_account)

    label = sub.add_parser("label", help="Propagate seed labels to clusters")
    label.add_argument("--clusters", required=True)
    label.add_argument("--seeds", required=True)
    label.add_argument("--out", required=True)
    label.set_defaults(handler=cmd_label)

    census_parser = sub.add_parser("census", help="Print the largest labeled clusters")
    census_parser.add_argument("--labeled", required=True)
    census_parser.add_argument("--top", type=int, default=None)
    census_parser.add_argument("--csv", default=None)
    census_parser.set_defaults(handler=cmd_census)

    eval_parser = sub.add_parser("eval", help="Evaluate clusters against ground truth")
    eval_parser.add_argument("--clusters", required=True)
    eval_parser.add_argument("--truth", required=True)
    eval_parser.add_argument("--decisions", default=None)
    eval_parser.add_argument("--inferences", default=None)
    eval_parser.add_argument("--out", required=True)
    eval_parser.set_defaults(handler=cmd_eval)
    return parser


def _manifest_config(args: argparse.Namespace) -> dict:
    return {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in {"handler", "notify", "verbose"}
    }


def run(argv: list[str] | None = None) -> int:
    """CLIエントリーポイント。終了コード 0=成功, 1=入力エラー, 2=使い方の誤り。"""
    parser = _build_cli_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE_ERROR

    level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)
    handler: Callable[[argparse.Namespace, dict], CommandResult] = args.handler
    started = time.monotonic()
    try:
        settings = load_settings(args.settings)
        result = handler(args, settings)
        suffix = settings.get("manifest_suffix", DEFAULT_MANIFEST_SUFFIX)
        if result.outputs:
            manifest = build_run_manifest(
                command=args.command,
                config=_manifest_config(args),
                input_paths=result.inputs,
                output_paths=result.outputs,
                duration_seconds=time.monotonic() - started,
            )
            write_run_manifest(manifest_path_for(result.outputs[0], suffix), manifest)
    except (InputFormatError, GenerationError, ContractViolationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    if not result.summary_on_stdout:
        for line in result.summary:
            LOGGER.info("%s %s", args.command, line)
    if args.notify or parse_bool(settings.get("notify")):
        notify_run_summary(resolve_discord_webhook_url(settings), args.command, result.summary)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(run())
