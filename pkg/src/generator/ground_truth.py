"""Ground truth produced by the synthetic generators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO

from src.generator.gen_config import GenerationError
from src.ingestion import InputFormatError, RecordReader, dump_record, iter_json_records

ROLE_CUSTOMER_WALLET = "customer_wallet"
ROLE_CHANGE_ADDRESS = "change_address"
ROLE_DEPOSIT_ADDRESS = "deposit_address"
ROLE_HOT_WALLET = "hot_wallet"
ROLE_NOISE_WALLET = "noise_wallet"
ROLES = frozenset(
    {
        ROLE_CUSTOMER_WALLET,
        ROLE_CHANGE_ADDRESS,
        ROLE_DEPOSIT_ADDRESS,
        ROLE_HOT_WALLET,
        ROLE_NOISE_WALLET,
    }
)


class MissingTruthError(InputFormatError):
    """An evaluated address or transaction has no ground-truth record."""


@dataclass(frozen=True)
class ChangeTruth:
    """Actual change output of one generated transaction.

    `eligible` marks transactions whose change satisfies every change pattern
    at generation time; `round_change` marks change deliberately made round.
    """

    txid: str
    change_index: int | None
    change_address: str | None = None
    eligible: bool = False
    round_change: bool = False


@dataclass
class GroundTruth:
    entity_of: dict[str, str] = field(default_factory=dict)
    role_of: dict[str, str] = field(default_factory=dict)
    changes: list[ChangeTruth] = field(default_factory=list)

    def assign(self, address: str, entity: str, role: str) -> None:
        """Record the owner of `address`; re-assigning the same owner is a no-op."""
        known = self.entity_of.get(address)
        if known is not None and known != entity:
            raise GenerationError(
                f"truth: address {address} already owned by {known}, not {entity}"
            )
        self.entity_of[address] = entity
        self.role_of.setdefault(address, role)

    def entity(self, address: str) -> str:
        try:
            return self.entity_of[address]
        except KeyError:
            raise MissingTruthError("<truth>", None, f"address {address} missing from truth") from None

    def change_by_txid(self) -> dict[str, ChangeTruth]:
        return {change.txid: change for change in self.changes}


def write_truth(target: IO[str], truth: GroundTruth) -> None:
    """Address records (sorted by address), then per-transaction change records."""
    for address in sorted(truth.entity_of):
        target.write(
            dump_record(
                {
                    "address": address,
                    "entity": truth.entity_of[address],
                    "role": truth.role_of[address],
                }
            )
        )
    for change in truth.changes:
        target.write(
            dump_record(
                {
                    "txid": change.txid,
                    "change_index": change.change_index,
                    "change_address": change.change_address,
                    "eligible": change.eligible,
                    "round_change": change.round_change,
                }
            )
        )


def load_truth(source: IO[bytes] | IO[str], source_name: str = "<truth>") -> GroundTruth:
    truth = GroundTruth()
    for line_number, record in iter_json_records(source, source_name):
        reader = RecordReader(source_name, line_number, record)
        if "address" in record:
            address = reader.address("address")
            role = reader.text("role")
            if role not in ROLES:
                raise reader.fail(f"unknown role: {role}")
            if address in truth.entity_of:
                raise reader.fail(f"duplicate truth address: {address}")
            truth.entity_of[address] = reader.text("entity")
            truth.role_of[address] = role
        elif "txid" in record:
            change_address = record.get("change_address")
            truth.changes.append(
                ChangeTruth(
                    txid=reader.text("txid"),
                    change_index=reader.optional_uint("change_index"),
                    change_address=None if change_address is None else reader.address("change_address"),
                    eligible=bool(record.get("eligible", False)),
                    round_change=bool(record.get("round_change", False)),
                )
            )
        else:
            raise reader.fail("truth record needs an address or txid field")
    return truth
