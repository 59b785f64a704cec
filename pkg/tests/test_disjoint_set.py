"""Partition (union-find) tests against a brute-force component oracle."""

from __future__ import annotations

import random
from collections import defaultdict, deque

import pytest

from src.disjoint_set import TAG_CHANGE, TAG_COMMON_SPENDING, Partition


def _bfs_components(addresses: list[str], edges: list[tuple[str, str]]) -> list[tuple[str, ...]]:
    graph: dict[str, set[str]] = defaultdict(set)
    for left, right in edges:
        graph[left].add(right)
        graph[right].add(left)
    seen: set[str] = set()
    components = []
    for start in addresses:
        if start in seen:
            continue
        seen.add(start)
        queue = deque([start])
        members = []
        while queue:
            node = queue.popleft()
            members.append(node)
            for neighbour in graph[node]:
                if neighbour not in seen:
                    seen.add(neighbour)
                    queue.append(neighbour)
        components.append(tuple(sorted(members)))
    return sorted(components)


def _random_edges(rng: random.Random, n: int, m: int) -> tuple[list[str], list[tuple[str, str]]]:
    addresses = [f"addr{index:05d}" for index in range(n)]
    edges = [(rng.choice(addresses), rng.choice(addresses)) for _ in range(m)]
    return addresses, edges


@pytest.mark.light
def test_union_reports_new_joins_only():
    """union が新規の結合時だけ True を返すこと。"""
    partition = Partition()
    assert partition.union("A", "B", TAG_COMMON_SPENDING, "t1") is True
    assert partition.union("B", "A", TAG_COMMON_SPENDING, "t2") is False
    assert partition.union("C", "C", TAG_COMMON_SPENDING, "t3") is False
    assert partition.connected("A", "B")
    assert not partition.connected("A", "C")
    assert len(partition) == 3
    assert partition.cluster_count() == 2
    assert len(partition.merge_log) == 1


@pytest.mark.light
def test_finalize_is_sorted_with_smallest_representative():
    """確定クラスタが最小アドレス代表で整列されること。"""
    partition = Partition()
    for address in ["d", "c", "b", "a", "e"]:
        partition.intern(address)
    partition.union("e", "c", TAG_COMMON_SPENDING, "t1")
    partition.union("d", "a", TAG_CHANGE, "t2")
    clusters = partition.finalize()
    assert [cluster.addresses for cluster in clusters] == [("a", "d"), ("b",), ("c", "e")]
    assert [cluster.representative for cluster in clusters] == ["a", "b", "c"]
    assert [cluster.cluster_id for cluster in clusters] == [0, 1, 2]
    assert clusters[0].heuristics == (TAG_CHANGE,)
    assert clusters[1].heuristics == ()
    assert clusters[2].heuristics == (TAG_COMMON_SPENDING,)


@pytest.mark.light
def test_heuristic_tags_do_not_depend_on_union_order():
    """ヒューリスティクスのタグが union 順に依存しないこと。"""
    first = Partition()
    first.union("A", "B", TAG_COMMON_SPENDING, "t1")
    first.union("A", "B", TAG_CHANGE, "t2")

    second = Partition()
    second.union("A", "B", TAG_CHANGE, "t2")
    second.union("A", "B", TAG_COMMON_SPENDING, "t1")

    assert first.finalize() == second.finalize()
    assert first.finalize()[0].heuristics == (TAG_CHANGE, TAG_COMMON_SPENDING)


@pytest.mark.full
def test_partition_matches_bfs_components_on_random_graphs():
    """ランダムグラフで BFS 連結成分と一致すること（1000 辺のケースを含む）。"""
    rng = random.Random(20)
    cases = [(rng.randint(1, 400), rng.randint(0, 600)) for _ in range(25)]
    cases.append((1000, 1000))
    for size, edge_count in cases:
        addresses, edges = _random_edges(rng, size, edge_count)
        partition = Partition()
        for address in addresses:
            partition.intern(address)
        for left, right in edges:
            partition.union(left, right, TAG_COMMON_SPENDING, "")
        clusters = partition.finalize()
        assert sorted(cluster.addresses for cluster in clusters) == _bfs_components(addresses, edges)
        assert partition.cluster_count() == len(clusters)


@pytest.mark.full
def test_finalize_is_invariant_to_union_permutation():
    """union 順と intern 順を 100 通り入れ替えても確定結果が同じこと。"""
    rng = random.Random(21)
    addresses, edges = _random_edges(rng, 300, 350)
    expected = None
    for _ in range(100):
        shuffled = list(edges)
        rng.shuffle(shuffled)
        order = list(addresses)
        rng.shuffle(order)
        partition = Partition()
        for address in order:
            partition.intern(address)
        for left, right in shuffled:
            partition.union(left, right, TAG_COMMON_SPENDING, "")
        clusters = partition.finalize()
        if expected is None:
            expected = clusters
        assert clusters == expected


@pytest.mark.light
def test_merge_from_equals_single_partition():
    """分割した Partition のマージが単一処理と一致すること。"""
    rng = random.Random(22)
    addresses, edges = _random_edges(rng, 200, 180)
    single = Partition()
    for address in addresses:
        single.intern(address)
    for left, right in edges:
        single.union(left, right, TAG_COMMON_SPENDING, "")

    merged = Partition()
    for address in addresses:
        merged.intern(address)
    for start in range(0, len(edges), 50):
        shard = Partition()
        for left, right in edges[start : start + 50]:
            shard.union(left, right, TAG_COMMON_SPENDING, "")
        merged.merge_from(shard)

    assert merged.finalize() == single.finalize()


@pytest.mark.light
def test_unions_only_coarsen_the_partition():
    """union を重ねてもクラスタが分割されないこと（前段の分割は後段の細分）を確認する。"""
    rng = random.Random(23)
    addresses, edges = _random_edges(rng, 250, 300)
    partition = Partition()
    for address in addresses:
        partition.intern(address)

    previous: list[tuple[str, ...]] = [(address,) for address in addresses]
    for start in range(0, len(edges), 30):
        for left, right in edges[start : start + 30]:
            partition.union(left, right, TAG_COMMON_SPENDING, "")
        for members in previous:
            assert all(partition.connected(members[0], member) for member in members[1:])
        current = [cluster.addresses for cluster in partition.finalize()]
        assert len(current) <= len(previous)
        previous = current


@pytest.mark.full
def test_intern_assigns_dense_indices_for_a_million_addresses():
    """10^6 件の intern が 0..10^6-1 の連番を返し、再 intern で変わらないこと。"""
    partition = Partition()
    count = 1_000_000
    indices = [partition.intern(f"addr{index:07d}") for index in range(count)]
    assert indices == list(range(count))
    assert len(partition) == count
    assert partition.intern("addr0000000") == 0
    assert partition.intern(f"addr{count - 1:07d}") == count - 1
    assert partition.cluster_count() == count
