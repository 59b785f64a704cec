"""Common-spending and one-time change heuristics for UTXO chains."""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Sequence

from src.core_model import (
    ChainPosition,
    ContractViolationError,
    UtxoTransaction,
    fractional_digits,
)
from src.disjoint_set import TAG_CHANGE, TAG_COMMON_SPENDING, Partition
from src.ingestion import RecordReader, dump_record, iter_json_records

OUTCOME_INFERRED = "inferred"
OUTCOME_ABSTAINED = "abstained"

REASON_COINBASE = "coinbase"
REASON_SINGLE_OUTPUT = "single_output"
REASON_SINGLE_INPUT = "single_input"
REASON_NO_NEW_OUTPUT = "no_new_output"
REASON_MULTIPLE_NEW_OUTPUTS = "multiple_new_outputs"
REASON_ROUND_AMOUNT = "round_amount"
REASON_ADDRESS_OVERLAP = "address_overlap"

# 判定順（最初に失敗した条件を理由として報告する）
CHANGE_REASONS = (
    REASON_COINBASE,
    REASON_SINGLE_OUTPUT,
    REASON_SINGLE_INPUT,
    REASON_NO_NEW_OUTPUT,
    REASON_MULTIPLE_NEW_OUTPUTS,
    REASON_ROUND_AMOUNT,
    REASON_ADDRESS_OVERLAP,
)
ROUND_AMOUNT_MAX_DIGITS = 4

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChangeDecision:
    """Change inference outcome for one transaction."""

    txid: str
    outcome: str
    address: str | None = None
    reason: str | None = None

    @property
    def inferred(self) -> bool:
        return self.outcome == OUTCOME_INFERRED

    @classmethod
    def infer(cls, txid: str, address: str) -> ChangeDecision:
        return cls(txid=txid, outcome=OUTCOME_INFERRED, address=address)

    @classmethod
    def abstain(cls, txid: str, reason: str) -> ChangeDecision:
        return cls(txid=txid, outcome=OUTCOME_ABSTAINED, reason=reason)


class AddressHistory:
    """First-appearance position of every address seen so far in scan order."""

    def __init__(self) -> None:
        self._first_seen: dict[str, ChainPosition] = {}
        self.position: ChainPosition | None = None

    def __len__(self) -> int:
        return len(self._first_seen)

    def first_seen(self, address: str) -> ChainPosition | None:
        return self._first_seen.get(address)

    def is_used(self, address: str, position: ChainPosition) -> bool:
        """True iff `address` first appeared strictly before `position`."""
        first = self._first_seen.get(address)
        return first is not None and first < position

    def record(self, tx: UtxoTransaction) -> None:
        if self.position is not None and tx.position < self.position:
            raise ContractViolationError(
                f"transaction {tx.txid} recorded out of position order"
            )
        first_seen = self._first_seen
        for entry in tx.inputs:
            first_seen.setdefault(entry.address, tx.position)
        for entry in tx.outputs:
            first_seen.setdefault(entry.address, tx.position)
        self.position = tx.position


def cluster_common_spending(txs: Iterable[UtxoTransaction], partition: Partition) -> Partition:
    """Join every input address of each non-coinbase transaction with its first input."""
    intern = partition.intern
    union = partition.union
    for tx in txs:
        for entry in tx.outputs:
            intern(entry.address)
        if tx.coinbase:
            continue
        first = tx.inputs[0].address
        intern(first)
        for entry in tx.inputs[1:]:
            if entry.address != first:
                union(first, entry.address, TAG_COMMON_SPENDING, tx.txid)
    return partition


def _shard_partition(rows: list[tuple[str, bool, tuple[str, ...], tuple[str, ...]]]) -> Partition:
    partition = Partition()
    for txid, coinbase, inputs, outputs in rows:
        for address in outputs:
            partition.intern(address)
        if coinbase:
            continue
        first = inputs[0]
        partition.intern(first)
        for address in inputs[1:]:
            if address != first:
                partition.union(first, address, TAG_COMMON_SPENDING, txid)
    return partition


def cluster_common_spending_sharded(
    txs: Sequence[UtxoTransaction],
    shards: int,
    workers: int = 1,
) -> Partition:
    """
    Common spending over contiguous transaction ranges merged in shard order.

    The finalized result equals the single-pass `cluster_common_spending`.
    """
    if shards < 1:
        raise ValueError("shards must be >= 1")
    size = max(1, -(-len(txs) // shards))
    shard_rows = [
        [
            (
                tx.txid,
                tx.coinbase,
                tuple(entry.address for entry in tx.inputs),
                tuple(entry.address for entry in tx.outputs),
            )
            for tx in txs[start : start + size]
        ]
        for start in range(0, len(txs), size)
    ]
    if workers > 1 and len(shard_rows) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            partials = list(executor.map(_shard_partition, shard_rows))
    else:
        partials = [_shard_partition(rows) for rows in shard_rows]

    merged = Partition()
    for partial in partials:
        merged.merge_from(partial)
    LOGGER.info("common spending: merged %d shards", len(partials))
    return merged


def infer_change_address(tx: UtxoTransaction, history: AddressHistory) -> ChangeDecision:
    """Apply the change patterns in order and report the first that fails."""
    if history.position is not None and history.position > tx.position:
        raise ContractViolationError(
            f"address history is ahead of transaction {tx.txid}"
        )

    if tx.coinbase:
        return ChangeDecision.abstain(tx.txid, REASON_COINBASE)
    if len(tx.outputs) < 2:
        return ChangeDecision.abstain(tx.txid, REASON_SINGLE_OUTPUT)
    if len(tx.distinct_input_addresses()) < 2:
        return ChangeDecision.abstain(tx.txid, REASON_SINGLE_INPUT)

    new_outputs = [
        entry for entry in tx.outputs if not history.is_used(entry.address, tx.position)
    ]
    if not new_outputs:
        return ChangeDecision.abstain(tx.txid, REASON_NO_NEW_OUTPUT)
    if len(new_outputs) > 1:
        return ChangeDecision.abstain(tx.txid, REASON_MULTIPLE_NEW_OUTPUTS)
    candidate = new_outputs[0]

    if fractional_digits(candidate.amount) <= ROUND_AMOUNT_MAX_DIGITS:
        return ChangeDecision.abstain(tx.txid, REASON_ROUND_AMOUNT)

    input_addresses = {entry.address for entry in tx.inputs}
    if any(entry.address in input_addresses for entry in tx.outputs):
        return ChangeDecision.abstain(tx.txid, REASON_ADDRESS_OVERLAP)

    return ChangeDecision.infer(tx.txid, candidate.address)


def iter_change_decisions(
    txs: Iterable[UtxoTransaction],
    partition: Partition,
) -> Iterator[ChangeDecision]:
    """Single scan: decide, record history, union inferred change with the first input."""
    history = AddressHistory()
    for tx in txs:
        decision = infer_change_address(tx, history)
        history.record(tx)
        if decision.inferred:
            partition.union(decision.address, tx.inputs[0].address, TAG_CHANGE, tx.txid)
        yield decision


def apply_change_heuristic(
    txs: Iterable[UtxoTransaction],
    partition: Partition,
) -> tuple[Partition, list[ChangeDecision]]:
    """Run the change pass and keep every decision (abstentions included) for audit."""
    decisions = list(iter_change_decisions(txs, partition))
    return partition, decisions


def change_decision_counts(decisions: Iterable[ChangeDecision]) -> Counter[str]:
    """Tally `inferred` and `abstained:<reason>` keys."""
    counts: Counter[str] = Counter()
    for decision in decisions:
        if decision.inferred:
            counts[OUTCOME_INFERRED] += 1
        else:
            counts[f"{OUTCOME_ABSTAINED}:{decision.reason}"] += 1
    return counts


def change_decision_record(decision: ChangeDecision) -> dict:
    return {
        "txid": decision.txid,
        "outcome": decision.outcome,
        "address": decision.address,
        "reason": decision.reason,
    }


def write_change_decisions(target: IO[str], decisions: Iterable[ChangeDecision]) -> Counter[str]:
    """Write decisions as NDJSON and return their tallies."""
    counts: Counter[str] = Counter()
    for decision in decisions:
        target.write(dump_record(change_decision_record(decision)))
        counts.update(change_decision_counts([decision]))
    return counts


def load_change_decisions(
    source: IO[bytes] | IO[str],
    source_name: str = "<decisions>",
) -> list[ChangeDecision]:
    decisions = []
    for line_number, record in iter_json_records(source, source_name):
        reader = RecordReader(source_name, line_number, record)
        outcome = reader.text("outcome")
        if outcome == OUTCOME_INFERRED:
            decisions.append(ChangeDecision.infer(reader.text("txid"), reader.address("address")))
        elif outcome == OUTCOME_ABSTAINED:
            reason = reader.text("reason")
            if reason not in CHANGE_REASONS:
                raise reader.fail(f"unknown abstention reason: {reason}")
            decisions.append(ChangeDecision.abstain(reader.text("txid"), reason))
        else:
            raise reader.fail(f"unknown outcome: {outcome}")
    return decisions
