"""ラベル伝播と集計表のテスト。"""

from __future__ import annotations

import io
import random

import pytest

from src.disjoint_set import TAG_CHANGE, Cluster, Partition
from src.ingestion import InputFormatError, SeedLabel
from src.labeling import (
    OTHER_LABELED_NAME,
    UNLABELED_NAME,
    CensusRow,
    EntityLabel,
    census,
    format_census_table,
    load_labeled_clusters,
    propagate_labels,
    write_census_csv,
    write_labeled_clusters,
)


def _cluster(cluster_id: int, *addresses: str) -> Cluster:
    members = tuple(sorted(addresses))
    return Cluster(cluster_id, members[0], members)


@pytest.mark.light
def test_single_seed_name_labels_whole_cluster():
    """シード名が 1 つならクラスタ全体にラベルが付くこと。"""
    clusters = [_cluster(0, "A", "B", "C"), _cluster(1, "D")]
    seeds = [
        SeedLabel("B", "Binance", "exchange", "walletexplorer"),
        SeedLabel("C", "Binance", "hosted wallet", "etherscan"),
    ]
    labeled = propagate_labels(clusters, seeds)
    assert labeled[0].label == EntityLabel("Binance", "exchange")
    assert labeled[0].members == ("A", "B", "C")
    assert labeled[1].label is None
    assert labeled[1].conflicts == ()


@pytest.mark.required
def test_merge_of_differently_seeded_clusters_is_left_unlabeled(caplog):
    """異なるシードを含むクラスタはラベル無しで競合として残すこと。"""
    partition = Partition()
    partition.union("A1", "A2", TAG_CHANGE, "t1")
    partition.union("B1", "B2", TAG_CHANGE, "t2")
    partition.union("A2", "B1", TAG_CHANGE, "t3")
    seeds = [
        SeedLabel("A1", "Binance", "exchange", "s"),
        SeedLabel("B2", "Kraken", "exchange", "s"),
    ]
    labeled = propagate_labels(partition.finalize(), seeds)
    assert len(labeled) == 1
    assert labeled[0].label is None
    assert labeled[0].conflicts == ("Binance", "Kraken")
    assert "1 clusters contain seeds of different entities" in caplog.text


@pytest.mark.light
def test_census_orders_by_size_and_keeps_totals():
    """集計表がサイズ順で、合計アドレス数を保つこと。"""
    clusters = [
        _cluster(0, "a1", "a2"),
        _cluster(1, "b1", "b2", "b3"),
        _cluster(2, "c1", "c2"),
        _cluster(3, "d1"),
        _cluster(4, "e1", "e2", "e3", "e4"),
    ]
    seeds = [
        SeedLabel("a1", "Zebra", "exchange", "s"),
        SeedLabel("b1", "Mixer", "other", "s"),
        SeedLabel("c1", "Alpha", "merchant service", "s"),
        SeedLabel("d1", "Tiny", "p2p exchange", "s"),
    ]
    rows = census(propagate_labels(clusters, seeds), top_n=2)
    assert rows == [
        CensusRow("other", "Mixer", 3),
        CensusRow("merchant service", "Alpha", 2),
        CensusRow("-", OTHER_LABELED_NAME, 3),
        CensusRow("-", UNLABELED_NAME, 4),
    ]
    assert sum(row.num_addresses for row in rows) == 12

    rows = census(propagate_labels(clusters, seeds), top_n=10)
    assert [row.name for row in rows] == ["Mixer", "Alpha", "Zebra", "Tiny", UNLABELED_NAME]
    with pytest.raises(ValueError):
        census([], top_n=0)


@pytest.mark.light
def test_census_of_empty_input_has_only_unlabeled_row():
    assert census([]) == [CensusRow("-", UNLABELED_NAME, 0)]


@pytest.mark.light
def test_census_renderings():
    """集計表のテキスト・CSV 表現を固定する。"""
    rows = [CensusRow("exchange", "Binance", 1234567), CensusRow("-", UNLABELED_NAME, 8)]
    table = format_census_table(rows)
    assert table.splitlines() == [
        "category  name         number of addresses",
        "exchange  Binance                1,234,567",
        "-         (unlabeled)                    8",
    ]
    out = io.StringIO()
    write_census_csv(out, rows)
    assert out.getvalue() == "category,name,num_addresses\nexchange,Binance,1234567\n-,(unlabeled),8\n"


@pytest.mark.light
def test_labeled_clusters_reload(ndjson):
    """ラベル付きクラスタを書き出して読み戻せること。"""
    clusters = [_cluster(0, "A", "B"), _cluster(1, "C", "D"), _cluster(2, "E")]
    seeds = [
        SeedLabel("A", "Binance", "exchange", "s"),
        SeedLabel("C", "Shop", "merchant service", "s"),
        SeedLabel("D", "Other", "merchant service", "s"),
    ]
    labeled = propagate_labels(clusters, seeds)
    out = io.StringIO()
    assert write_labeled_clusters(out, labeled) == 3
    assert load_labeled_clusters(io.StringIO(out.getvalue())) == labeled

    bad = [
        {
            "cluster_id": 0,
            "representative": "A",
            "addresses": ["A"],
            "heuristics": [],
            "label": {"name": "X", "category": "casino"},
            "conflicts": [],
        }
    ]
    with pytest.raises(InputFormatError, match="unknown label category"):
        load_labeled_clusters(ndjson(bad), "labeled.ndjson")


@pytest.mark.required
def test_seed_order_never_changes_labels_or_conflicts():
    """シードファイルの行順を入れ替えてもラベルと競合集合が変わらないこと。"""
    rng = random.Random(31)
    clusters = [_cluster(index, *(f"c{index:02d}m{member}" for member in range(4))) for index in range(30)]
    names = ["Binance", "Kraken", "Mixer", "Zebra"]
    categories = ["exchange", "other", "merchant service"]
    seeds = []
    for cluster in clusters:
        for address in rng.sample(cluster.addresses, rng.randint(0, 3)):
            seeds.append(SeedLabel(address, rng.choice(names), rng.choice(categories), "s"))

    expected = propagate_labels(clusters, seeds)
    assert any(item.conflicts for item in expected)
    assert any(item.label is not None for item in expected)
    for _ in range(50):
        shuffled = list(seeds)
        rng.shuffle(shuffled)
        assert propagate_labels(clusters, shuffled) == expected
