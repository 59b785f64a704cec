"""シードラベルをクラスタ全体へ伝播し、クラスタ規模の集計表を作る。"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import IO, Iterable

from src.disjoint_set import Cluster
from src.ingestion import (
    SEED_CATEGORIES,
    RecordReader,
    SeedLabel,
    cluster_record,
    dump_record,
    iter_json_records,
    read_cluster_fields,
)

UNLABELED_NAME = "(unlabeled)"
OTHER_LABELED_NAME = "(other labeled)"
SUMMARY_CATEGORY = "-"
DEFAULT_TOP_N = 10
CENSUS_CSV_COLUMNS = ("category", "name", "num_addresses")

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class EntityLabel:
    name: str
    category: str


@dataclass(frozen=True)
class LabeledCluster:
    """Cluster plus its propagated label; `conflicts` lists every seed name when >1."""

    cluster_id: int
    representative: str
    members: tuple[str, ...]
    heuristics: tuple[str, ...] = ()
    label: EntityLabel | None = None
    conflicts: tuple[str, ...] = ()


@dataclass(frozen=True)
class CensusRow:
    category: str
    name: str
    num_addresses: int


def propagate_labels(clusters: Iterable[Cluster], seeds: Iterable[SeedLabel]) -> list[LabeledCluster]:
    """
    Label each cluster from the seeds among its members.

    Exactly one distinct seed name -> label. Two or more -> no label, names in
    `conflicts`. Output keeps the input cluster order.
    """
    seed_by_address = {seed.address: seed for seed in seeds}
    labeled: list[LabeledCluster] = []
    conflict_count = 0
    for cluster in clusters:
        hits = sorted(
            (seed_by_address[address] for address in cluster.addresses if address in seed_by_address),
            key=lambda seed: seed.address,
        )
        names = sorted({seed.name for seed in hits})
        label = None
        conflicts: tuple[str, ...] = ()
        if len(names) == 1:
            # 同名シードが複数ある場合は最小アドレスのシードのカテゴリを採用する
            label = EntityLabel(name=names[0], category=hits[0].category)
        elif len(names) > 1:
            conflicts = tuple(names)
            conflict_count += 1
        labeled.append(
            LabeledCluster(
                cluster_id=cluster.cluster_id,
                representative=cluster.representative,
                members=cluster.addresses,
                heuristics=cluster.heuristics,
                label=label,
                conflicts=conflicts,
            )
        )
    if conflict_count:
        LOGGER.warning("%d clusters contain seeds of different entities; left unlabeled", conflict_count)
    return labeled


def census(labeled: Iterable[LabeledCluster], top_n: int = DEFAULT_TOP_N) -> list[CensusRow]:
    """
    Largest labeled clusters first (ties by name), truncated to `top_n`.

    Truncated labeled clusters are folded into one `(other labeled)` row and
    all unlabeled clusters into the trailing `(unlabeled)` row, so the address
    column always sums to the number of clustered addresses.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")

    labeled_rows: list[tuple[int, str, str, str]] = []
    unlabeled_total = 0
    for cluster in labeled:
        size = len(cluster.members)
        if cluster.label is None:
            unlabeled_total += size
            continue
        labeled_rows.append((-size, cluster.label.name, cluster.representative, cluster.label.category))
    labeled_rows.sort()

    rows = [
        CensusRow(category=category, name=name, num_addresses=-negative_size)
        for negative_size, name, _, category in labeled_rows[:top_n]
    ]
    remainder = labeled_rows[top_n:]
    if remainder:
        rows.append(
            CensusRow(
                category=SUMMARY_CATEGORY,
                name=OTHER_LABELED_NAME,
                num_addresses=sum(-row[0] for row in remainder),
            )
        )
    rows.append(CensusRow(category=SUMMARY_CATEGORY, name=UNLABELED_NAME, num_addresses=unlabeled_total))
    return rows


def format_census_table(rows: Iterable[CensusRow]) -> str:
    """Aligned text table with thousands separators."""
    header = ("category", "name", "number of addresses")
    body = [(row.category, row.name, f"{row.num_addresses:,}") for row in rows]
    widths = [
        max(len(line[column]) for line in [header, *body])
        for column in range(len(header))
    ]
    lines = []
    for category, name, count in [header, *body]:
        lines.append(
            f"{category.ljust(widths[0])}  {name.ljust(widths[1])}  {count.rjust(widths[2])}".rstrip()
        )
    return "\n".join(lines) + "\n"


def write_census_text(target: IO[str], rows: Iterable[CensusRow]) -> None:
    target.write(format_census_table(rows))


def write_census_csv(target: IO[str], rows: Iterable[CensusRow]) -> None:
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(CENSUS_CSV_COLUMNS)
    for row in rows:
        writer.writerow([row.category, row.name, row.num_addresses])


def labeled_cluster_record(cluster: LabeledCluster) -> dict:
    label = None
    if cluster.label is not None:
        label = {"name": cluster.label.name, "category": cluster.label.category}
    return cluster_record(
        Cluster(
            cluster_id=cluster.cluster_id,
            representative=cluster.representative,
            addresses=cluster.members,
            heuristics=cluster.heuristics,
        ),
        label=label,
        conflicts=cluster.conflicts,
    )


def write_labeled_clusters(target: IO[str], clusters: Iterable[LabeledCluster]) -> int:
    count = 0
    for cluster in clusters:
        target.write(dump_record(labeled_cluster_record(cluster)))
        count += 1
    return count


def load_labeled_clusters(
    source: IO[bytes] | IO[str],
    source_name: str = "<labeled>",
) -> list[LabeledCluster]:
    seen: dict[str, int] = {}
    clusters = []
    for line_number, record in iter_json_records(source, source_name):
        reader = RecordReader(source_name, line_number, record)
        cluster = read_cluster_fields(reader, seen)

        label = None
        raw_label = record.get("label")
        if raw_label is not None:
            if not isinstance(raw_label, dict):
                raise reader.fail("field label must be an object or null")
            category = reader.text("category", raw_label)
            if category not in SEED_CATEGORIES:
                raise reader.fail(f"unknown label category: {category}")
            label = EntityLabel(name=reader.text("name", raw_label), category=category)

        conflicts = record.get("conflicts", [])
        if not isinstance(conflicts, list) or not all(isinstance(name, str) for name in conflicts):
            raise reader.fail("field conflicts must be a list of strings")
        if label is not None and conflicts:
            raise reader.fail("labeled cluster must not carry conflicts")

        clusters.append(
            LabeledCluster(
                cluster_id=cluster.cluster_id,
                representative=cluster.representative,
                members=cluster.addresses,
                heuristics=cluster.heuristics,
                label=label,
                conflicts=tuple(conflicts),
            )
        )
    return clusters
