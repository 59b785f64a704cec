"""Streaming readers/writers for transaction dumps, seed labels and cluster outputs."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from typing import IO, Any, Iterable, Iterator

from src.core_model import (
    AccountTransfer,
    AmountFormatError,
    ChainPosition,
    TxEntry,
    UtxoTransaction,
    format_amount,
    parse_amount,
    validate_address,
)
from src.disjoint_set import Cluster

SEED_COLUMNS = ("address", "name", "category", "source")
CATEGORY_EXCHANGE = "exchange"
CATEGORY_OTHER = "other"
SEED_CATEGORIES = frozenset(
    {CATEGORY_EXCHANGE, "merchant service", "p2p exchange", "hosted wallet", CATEGORY_OTHER}
)
PROGRESS_EVERY = 100_000

LOGGER = logging.getLogger(__name__)


class InputFormatError(RuntimeError):
    """Input/validation failure tied to a source and (optionally) a line."""

    def __init__(self, source: str, line_number: int | None, reason: str):
        self.source = source
        self.line_number = line_number
        self.reason = reason
        where = f"{source}: line {line_number}" if line_number is not None else source
        super().__init__(f"{where}: {reason}")


class ConflictingSeedError(InputFormatError):
    """Same address seeded with two different entity names."""


@dataclass(frozen=True)
class SeedLabel:
    """One externally sourced attribution seed."""

    address: str
    name: str
    category: str
    source: str


def iter_json_records(source: IO[bytes] | IO[str], source_name: str) -> Iterator[tuple[int, dict]]:
    """Yield `(line_number, record)` for each non-blank NDJSON line."""
    for line_number, line in enumerate(source, start=1):
        try:
            if isinstance(line, bytes):
                line = line.decode("utf-8")
            if not line.strip():
                continue
            record = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise InputFormatError(source_name, line_number, f"malformed line: {exc}") from exc
        if not isinstance(record, dict):
            raise InputFormatError(source_name, line_number, "malformed line: expected JSON object")
        if line_number % PROGRESS_EVERY == 0:
            LOGGER.info("%s: read %d lines", source_name, line_number)
        yield line_number, record


def dump_record(record: dict) -> str:
    """Serialize one output record as a canonical NDJSON line."""
    return json.dumps(record, ensure_ascii=False, separators=(",", ":")) + "\n"


class RecordReader:
    """Field accessors raising line-precise errors."""

    def __init__(self, source_name: str, line_number: int, record: dict):
        self.source_name = source_name
        self.line_number = line_number
        self.record = record

    def fail(self, reason: str) -> InputFormatError:
        return InputFormatError(self.source_name, self.line_number, reason)

    def field(self, key: str, record: dict | None = None) -> Any:
        record = self.record if record is None else record
        if key not in record:
            raise self.fail(f"missing field: {key}")
        return record[key]

    def text(self, key: str, record: dict | None = None) -> str:
        value = self.field(key, record)
        if not isinstance(value, str) or not value:
            raise self.fail(f"field {key} must be a non-empty string")
        return value

    def address(self, key: str, record: dict | None = None) -> str:
        value = self.field(key, record)
        try:
            return validate_address(value)
        except ValueError as exc:
            raise self.fail(f"invalid address in {key}: {exc}") from exc

    def uint(self, key: str, record: dict | None = None) -> int:
        value = self.field(key, record)
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise self.fail(f"field {key} must be an unsigned integer")
        return value

    def optional_uint(self, key: str) -> int | None:
        if self.record.get(key) is None:
            return None
        return self.uint(key)

    def boolean(self, key: str) -> bool:
        value = self.field(key)
        if not isinstance(value, bool):
            raise self.fail(f"field {key} must be a boolean")
        return value

    def amount(self, key: str, decimals: int, record: dict | None = None):
        value = self.field(key, record)
        if not isinstance(value, str):
            raise self.fail(f"malformed amount in {key}: values must be decimal strings")
        try:
            return parse_amount(value, decimals)
        except AmountFormatError as exc:
            raise self.fail(f"malformed amount in {key}: {exc}") from exc

    def entries(self, key: str, decimals: int) -> tuple[TxEntry, ...]:
        value = self.field(key)
        if not isinstance(value, list):
            raise self.fail(f"field {key} must be a list")
        entries = []
        for item in value:
            if not isinstance(item, dict):
                raise self.fail(f"field {key} must contain objects")
            entries.append(
                TxEntry(self.address("address", item), self.amount("value", decimals, item))
            )
        return tuple(entries)


def _check_order(
    reader: RecordReader,
    previous: ChainPosition | None,
    position: ChainPosition,
) -> None:
    if previous is not None and position < previous:
        raise reader.fail(
            "position ordering violation: "
            f"({position.block_height}, {position.tx_index}) after "
            f"({previous.block_height}, {previous.tx_index})"
        )


def iter_utxo_stream(
    source: IO[bytes] | IO[str],
    decimals: int,
    source_name: str = "<utxo>",
) -> Iterator[UtxoTransaction]:
    """Stream-decode UTXO transaction records in file order."""
    seen_txids: set[str] = set()
    previous: ChainPosition | None = None
    for line_number, record in iter_json_records(source, source_name):
        reader = RecordReader(source_name, line_number, record)
        txid = reader.text("txid")
        position = ChainPosition(reader.uint("block"), reader.uint("index"))
        coinbase = reader.boolean("coinbase")
        inputs = reader.entries("inputs", decimals)
        outputs = reader.entries("outputs", decimals)

        if txid in seen_txids:
            raise reader.fail(f"duplicate txid: {txid}")
        _check_order(reader, previous, position)
        try:
            tx = UtxoTransaction(txid, position, coinbase, inputs, outputs)
        except ValueError as exc:
            raise reader.fail(str(exc)) from exc

        seen_txids.add(txid)
        previous = position
        yield tx


def load_utxo_stream(
    source: IO[bytes] | IO[str],
    decimals: int,
    source_name: str = "<utxo>",
) -> list[UtxoTransaction]:
    """Load every UTXO transaction record into a list."""
    return list(iter_utxo_stream(source, decimals, source_name))


def iter_transfer_stream(
    source: IO[bytes] | IO[str],
    decimals: int,
    source_name: str = "<transfers>",
) -> Iterator[AccountTransfer]:
    """Stream-decode account transfer records in file order."""
    seen_hashes: set[str] = set()
    previous: ChainPosition | None = None
    for line_number, record in iter_json_records(source, source_name):
        reader = RecordReader(source_name, line_number, record)
        tx_hash = reader.text("hash")
        position = ChainPosition(reader.uint("block"), reader.uint("index"))
        transfer = AccountTransfer(
            hash=tx_hash,
            position=position,
            sender=reader.address("from"),
            recipient=reader.address("to"),
            amount=reader.amount("value", decimals),
            asset=reader.text("asset"),
        )
        if tx_hash in seen_hashes:
            raise reader.fail(f"duplicate hash: {tx_hash}")
        _check_order(reader, previous, position)
        seen_hashes.add(tx_hash)
        previous = position
        yield transfer


def load_transfer_stream(
    source: IO[bytes] | IO[str],
    decimals: int,
    source_name: str = "<transfers>",
) -> list[AccountTransfer]:
    """Load every transfer record into a list."""
    return list(iter_transfer_stream(source, decimals, source_name))


def normalize_category(value: str, source_name: str, line_number: int) -> str:
    """Map a seed category onto the closed vocabulary, falling back to `other`."""
    category = " ".join(value.strip().lower().replace("_", " ").split())
    if category in SEED_CATEGORIES:
        return category
    LOGGER.warning(
        "%s: line %d: unknown seed category %r mapped to %r",
        source_name,
        line_number,
        value,
        CATEGORY_OTHER,
    )
    return CATEGORY_OTHER


def load_seed_labels(source: IO[bytes] | IO[str], source_name: str = "<seeds>") -> set[SeedLabel]:
    """Load the `address,name,category,source` seed CSV.

    Exact duplicates collapse; an address seeded with two names is an error.
    """
    text = source if isinstance(source, io.TextIOBase) else io.TextIOWrapper(
        source, encoding="utf-8-sig", newline=""
    )
    try:
        reader = csv.DictReader(text)
        fieldnames = tuple(name.strip() for name in (reader.fieldnames or ()))
        missing_columns = [column for column in SEED_COLUMNS if column not in fieldnames]
        if missing_columns:
            raise InputFormatError(
                source_name, 1, f"seed CSV missing required columns: {', '.join(missing_columns)}"
            )
        reader.fieldnames = list(fieldnames)

        by_address: dict[str, tuple[int, SeedLabel]] = {}
        for line_number, row in enumerate(reader, start=2):
            if any(row.get(column) is None for column in SEED_COLUMNS):
                raise InputFormatError(source_name, line_number, "missing columns")
            address = str(row["address"]).strip()
            name = str(row["name"]).strip()
            if not name:
                raise InputFormatError(source_name, line_number, "empty required value: name")
            try:
                validate_address(address)
            except ValueError as exc:
                raise InputFormatError(source_name, line_number, str(exc)) from exc

            label = SeedLabel(
                address=address,
                name=name,
                category=normalize_category(str(row["category"]), source_name, line_number),
                source=str(row["source"]).strip(),
            )
            first = by_address.get(address)
            if first is None:
                by_address[address] = (line_number, label)
                continue
            first_line, first_label = first
            if first_label.name != label.name:
                raise ConflictingSeedError(
                    source_name,
                    line_number,
                    f"conflicting duplicate seed for {address}: "
                    f"{first_label.name!r} (line {first_line}) vs {label.name!r}",
                )
            if first_label != label:
                LOGGER.warning(
                    "%s: line %d: duplicate seed for %s differs in category/source; keeping line %d",
                    source_name,
                    line_number,
                    address,
                    first_line,
                )
    except (UnicodeDecodeError, csv.Error) as exc:
        raise InputFormatError(source_name, None, f"failed to read seed CSV: {exc}") from exc
    finally:
        if text is not source:
            text.detach()

    return {label for _, label in by_address.values()}


def write_seed_labels(target: IO[str], seeds: Iterable[SeedLabel]) -> None:
    """Write seeds as CSV sorted by address."""
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(SEED_COLUMNS)
    for seed in sorted(seeds, key=lambda item: item.address):
        writer.writerow([seed.address, seed.name, seed.category, seed.source])


def utxo_record(tx: UtxoTransaction) -> dict:
    return {
        "txid": tx.txid,
        "block": tx.position.block_height,
        "index": tx.position.tx_index,
        "coinbase": tx.coinbase,
        "inputs": [{"address": e.address, "value": format_amount(e.amount)} for e in tx.inputs],
        "outputs": [{"address": e.address, "value": format_amount(e.amount)} for e in tx.outputs],
    }


def write_utxo_stream(target: IO[str], txs: Iterable[UtxoTransaction]) -> int:
    """Write UTXO transactions as NDJSON; returns the record count."""
    count = 0
    for tx in txs:
        target.write(dump_record(utxo_record(tx)))
        count += 1
    return count


def transfer_record(transfer: AccountTransfer) -> dict:
    return {
        "hash": transfer.hash,
        "block": transfer.position.block_height,
        "index": transfer.position.tx_index,
        "from": transfer.sender,
        "to": transfer.recipient,
        "value": format_amount(transfer.amount),
        "asset": transfer.asset,
    }


def write_transfer_stream(target: IO[str], transfers: Iterable[AccountTransfer]) -> int:
    """Write transfers as NDJSON; returns the record count."""
    count = 0
    for transfer in transfers:
        target.write(dump_record(transfer_record(transfer)))
        count += 1
    return count


def cluster_record(
    cluster: Cluster,
    label: dict | None = None,
    conflicts: Iterable[str] = (),
) -> dict:
    return {
        "cluster_id": cluster.cluster_id,
        "representative": cluster.representative,
        "addresses": list(cluster.addresses),
        "label": label,
        "heuristics": list(cluster.heuristics),
        "conflicts": list(conflicts),
    }


def write_clusters(target: IO[str], clusters: Iterable[Cluster]) -> int:
    """Write unlabeled cluster records; returns the record count."""
    count = 0
    for cluster in clusters:
        target.write(dump_record(cluster_record(cluster)))
        count += 1
    return count


def read_cluster_fields(reader: RecordReader, seen: dict[str, int]) -> Cluster:
    """Decode the partition part of a cluster record, rejecting overlapping clusters."""
    addresses = reader.field("addresses")
    if not isinstance(addresses, list) or not addresses:
        raise reader.fail("field addresses must be a non-empty list")
    for address in addresses:
        try:
            validate_address(address)
        except ValueError as exc:
            raise reader.fail(f"invalid address in addresses: {exc}") from exc
        if address in seen:
            raise reader.fail(f"address {address} already in cluster record at line {seen[address]}")
        seen[address] = reader.line_number
    representative = reader.address("representative")
    if representative != min(addresses):
        raise reader.fail("representative must be the smallest member address")

    heuristics = reader.record.get("heuristics", [])
    if not isinstance(heuristics, list) or not all(isinstance(tag, str) for tag in heuristics):
        raise reader.fail("field heuristics must be a list of strings")
    return Cluster(
        cluster_id=reader.uint("cluster_id"),
        representative=representative,
        addresses=tuple(sorted(addresses)),
        heuristics=tuple(heuristics),
    )


def iter_clusters(source: IO[bytes] | IO[str], source_name: str = "<clusters>") -> Iterator[Cluster]:
    """Stream cluster records back as `Cluster` values (labels ignored)."""
    seen: dict[str, int] = {}
    for line_number, record in iter_json_records(source, source_name):
        yield read_cluster_fields(RecordReader(source_name, line_number, record), seen)


def load_clusters(source: IO[bytes] | IO[str], source_name: str = "<clusters>") -> list[Cluster]:
    return list(iter_clusters(source, source_name))

