"""Exchange deposit-address inference from fund gathering (sweep) patterns."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

from src.core_model import AccountTransfer, ContractViolationError
from src.disjoint_set import TAG_EXCHANGE_SEED, TAG_GATHERING, Partition
from src.ingestion import (
    CATEGORY_EXCHANGE,
    ConflictingSeedError,
    RecordReader,
    SeedLabel,
    dump_record,
    iter_json_records,
)

OUTCOME_INFERRED = "inferred"
OUTCOME_REJECTED = "rejected"

REASON_SENDS_ELSEWHERE = "sends_elsewhere"
REASON_MULTI_EXCHANGE = "multi_exchange"
REASON_IS_SEED = "is_seed"
# min_sweeps 未満のスイープしか無い場合もこの理由で棄却する
REASON_NO_OUTGOING = "no_outgoing"
DEPOSIT_REASONS = (
    REASON_SENDS_ELSEWHERE,
    REASON_MULTI_EXCHANGE,
    REASON_IS_SEED,
    REASON_NO_OUTGOING,
)
DEFAULT_MIN_SWEEPS = 1

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExchangeSeedSet:
    """Entity name -> known exchange wallet addresses."""

    wallets: Mapping[str, frozenset[str]]
    owner: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.owner:
            return
        owner: dict[str, str] = {}
        for entity, addresses in self.wallets.items():
            for address in addresses:
                if owner.setdefault(address, entity) != entity:
                    raise ConflictingSeedError(
                        "<seeds>",
                        None,
                        f"address {address} seeded for both {owner[address]!r} and {entity!r}",
                    )
        object.__setattr__(self, "owner", owner)

    def entity_of(self, address: str) -> str | None:
        return self.owner.get(address)

    def anchor(self, entity: str) -> str:
        """Smallest seed address of `entity`; inferred deposits attach here."""
        addresses = self.wallets.get(entity)
        if not addresses:
            raise ContractViolationError(f"entity {entity!r} has no seed addresses")
        return min(addresses)


def build_seed_set(seeds: Iterable[SeedLabel]) -> ExchangeSeedSet:
    """Collect `exchange` seeds per entity name."""
    grouped: dict[str, set[str]] = {}
    for seed in seeds:
        if seed.category != CATEGORY_EXCHANGE:
            continue
        grouped.setdefault(seed.name, set()).add(seed.address)
    return ExchangeSeedSet({name: frozenset(addresses) for name, addresses in grouped.items()})


@dataclass(frozen=True)
class DepositInference:
    """Classification of one address that sent at least one transfer."""

    address: str
    entity: str | None
    sweep_count: int
    outcome: str
    reason: str | None = None

    @property
    def inferred(self) -> bool:
        return self.outcome == OUTCOME_INFERRED


@dataclass
class OutgoingTally:
    """Outgoing transfers of one address, pooled across assets."""

    total: int = 0
    elsewhere: int = 0
    to_entity: Counter = field(default_factory=Counter)

    def merge(self, other: OutgoingTally) -> None:
        self.total += other.total
        self.elsewhere += other.elsewhere
        self.to_entity.update(other.to_entity)


def aggregate_outgoing(
    transfers: Iterable[AccountTransfer],
    seeds: ExchangeSeedSet,
) -> dict[str, OutgoingTally]:
    """Per-sender outgoing tallies; self-transfers are ignored."""
    tallies: dict[str, OutgoingTally] = {}
    for transfer in transfers:
        if transfer.is_self_transfer:
            continue
        tally = tallies.get(transfer.sender)
        if tally is None:
            tally = tallies[transfer.sender] = OutgoingTally()
        tally.total += 1
        entity = seeds.entity_of(transfer.recipient)
        if entity is None:
            tally.elsewhere += 1
        else:
            tally.to_entity[entity] += 1
    return tallies


def merge_tallies(shards: Iterable[Mapping[str, OutgoingTally]]) -> dict[str, OutgoingTally]:
    """Combine tallies aggregated over disjoint transfer shards."""
    merged: dict[str, OutgoingTally] = {}
    for shard in shards:
        for address, tally in shard.items():
            merged.setdefault(address, OutgoingTally()).merge(tally)
    return merged


def classify_deposit(
    address: str,
    tally: OutgoingTally,
    seeds: ExchangeSeedSet,
    min_sweeps: int,
) -> DepositInference:
    """Decide whether `address` is a customer deposit address of exactly one exchange."""
    sweep_count = sum(tally.to_entity.values())
    seed_entity = seeds.entity_of(address)
    if seed_entity is not None:
        return DepositInference(address, seed_entity, sweep_count, OUTCOME_REJECTED, REASON_IS_SEED)
    if len(tally.to_entity) >= 2:
        return DepositInference(address, None, sweep_count, OUTCOME_REJECTED, REASON_MULTI_EXCHANGE)

    entity = next(iter(tally.to_entity), None)
    if tally.elsewhere:
        return DepositInference(
            address, entity, sweep_count, OUTCOME_REJECTED, REASON_SENDS_ELSEWHERE
        )
    if sweep_count >= min_sweeps:
        return DepositInference(address, entity, sweep_count, OUTCOME_INFERRED)
    return DepositInference(address, entity, sweep_count, OUTCOME_REJECTED, REASON_NO_OUTGOING)


def infer_deposit_addresses(
    transfers: Iterable[AccountTransfer],
    seeds: ExchangeSeedSet,
    min_sweeps: int = DEFAULT_MIN_SWEEPS,
) -> list[DepositInference]:
    """Classify every address with outgoing transfers; sorted by address."""
    if min_sweeps < 1:
        raise ValueError("min_sweeps must be >= 1")
    tallies = aggregate_outgoing(transfers, seeds)
    inferences = [
        classify_deposit(address, tallies[address], seeds, min_sweeps)
        for address in sorted(tallies)
    ]
    LOGGER.info(
        "deposit inference: %d senders, %d inferred",
        len(inferences),
        sum(1 for item in inferences if item.inferred),
    )
    return inferences


def build_exchange_clusters(
    inferences: Iterable[DepositInference],
    seeds: ExchangeSeedSet,
    partition: Partition,
) -> Partition:
    """Join each exchange's seed wallets, then attach its inferred deposit addresses."""
    for entity in sorted(seeds.wallets):
        anchor = seeds.anchor(entity)
        partition.intern(anchor)
        for address in sorted(seeds.wallets[entity]):
            if address != anchor:
                partition.union(anchor, address, TAG_EXCHANGE_SEED, "")

    for inference in inferences:
        if not inference.inferred:
            continue
        if inference.entity is None:
            raise ContractViolationError(f"inferred deposit {inference.address} has no entity")
        partition.union(inference.address, seeds.anchor(inference.entity), TAG_GATHERING, "")
    return partition


@dataclass(frozen=True)
class DepositCensusRow:
    category: str
    name: str
    num_addresses: int


def deposit_census(inferences: Iterable[DepositInference], top_n: int) -> list[DepositCensusRow]:
    """Exchanges ranked by number of inferred customer deposit addresses."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    counts = Counter(item.entity for item in inferences if item.inferred)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [DepositCensusRow(CATEGORY_EXCHANGE, name, count) for name, count in ranked[:top_n]]


def inference_record(inference: DepositInference) -> dict:
    return {
        "address": inference.address,
        "entity": inference.entity,
        "outcome": inference.outcome,
        "reason": inference.reason,
        "sweep_count": inference.sweep_count,
    }


def write_inferences(target: IO[str], inferences: Iterable[DepositInference]) -> int:
    count = 0
    for inference in inferences:
        target.write(dump_record(inference_record(inference)))
        count += 1
    return count


def load_inferences(
    source: IO[bytes] | IO[str],
    source_name: str = "<inferences>",
) -> list[DepositInference]:
    inferences = []
    for line_number, record in iter_json_records(source, source_name):
        reader = RecordReader(source_name, line_number, record)
        outcome = reader.text("outcome")
        entity = record.get("entity")
        if entity is not None and (not isinstance(entity, str) or not entity):
            raise reader.fail("field entity must be a non-empty string or null")
        reason = record.get("reason")
        if outcome == OUTCOME_INFERRED:
            if entity is None:
                raise reader.fail("inferred record without entity")
            reason = None
        elif outcome == OUTCOME_REJECTED:
            if reason not in DEPOSIT_REASONS:
                raise reader.fail(f"unknown rejection reason: {reason}")
        else:
            raise reader.fail(f"unknown outcome: {outcome}")
        inferences.append(
            DepositInference(
                address=reader.address("address"),
                entity=entity,
                sweep_count=reader.uint("sweep_count"),
                outcome=outcome,
                reason=reason,
            )
        )
    return inferences
