"""Common spending と変更出力推定のテスト。"""

from __future__ import annotations

import io
import random
from collections import defaultdict, deque

import pytest

from src.core_model import (
    ChainPosition,
    ContractViolationError,
    TxEntry,
    UtxoTransaction,
    parse_amount,
)
from src.disjoint_set import TAG_CHANGE, TAG_COMMON_SPENDING, Partition
from src.heuristics.utxo_clustering import (
    OUTCOME_INFERRED,
    REASON_ADDRESS_OVERLAP,
    REASON_COINBASE,
    REASON_MULTIPLE_NEW_OUTPUTS,
    REASON_NO_NEW_OUTPUT,
    REASON_ROUND_AMOUNT,
    REASON_SINGLE_INPUT,
    REASON_SINGLE_OUTPUT,
    AddressHistory,
    ChangeDecision,
    apply_change_heuristic,
    change_decision_counts,
    cluster_common_spending,
    cluster_common_spending_sharded,
    infer_change_address,
    load_change_decisions,
    write_change_decisions,
)

_counter = iter(range(1_000_000))


def _tx(inputs, outputs, block=10, index=0, coinbase=False, txid=None) -> UtxoTransaction:
    return UtxoTransaction(
        txid=txid or f"tx{next(_counter)}",
        position=ChainPosition(block, index),
        coinbase=coinbase,
        inputs=tuple(TxEntry(address, parse_amount(value, 8)) for address, value in inputs),
        outputs=tuple(TxEntry(address, parse_amount(value, 8)) for address, value in outputs),
    )


def _history_with(*addresses: str) -> AddressHistory:
    """`addresses` をブロック 0 で出現済みにした履歴。"""
    history = AddressHistory()
    history.record(_tx([], [(address, "1") for address in addresses], block=0, coinbase=True))
    return history


def _bfs_input_components(txs: list[UtxoTransaction]) -> list[tuple[str, ...]]:
    graph: dict[str, set[str]] = defaultdict(set)
    addresses: set[str] = set()
    for tx in txs:
        for entry in tx.outputs:
            addresses.add(entry.address)
        if tx.coinbase:
            continue
        names = [entry.address for entry in tx.inputs]
        addresses.update(names)
        for left, right in zip(names, names[1:]):
            graph[left].add(right)
            graph[right].add(left)
    seen: set[str] = set()
    components = []
    for start in sorted(addresses):
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


def _random_chain(rng: random.Random, n_txs: int, n_addresses: int) -> list[UtxoTransaction]:
    pool = [f"a{index:05d}" for index in range(n_addresses)]
    txs = []
    for index in range(n_txs):
        coinbase = rng.random() < 0.1
        inputs = [] if coinbase else [(rng.choice(pool), "1") for _ in range(rng.randint(1, 4))]
        outputs = [(rng.choice(pool), "0.5") for _ in range(rng.randint(1, 3))]
        txs.append(_tx(inputs, outputs, block=index // 10, index=index % 10, coinbase=coinbase))
    return txs


@pytest.mark.light
def test_common_spending_joins_all_inputs_transitively():
    """共通入力で全入力アドレスが推移的に結合されること。"""
    txs = [
        _tx([("A", "1"), ("B", "1"), ("C", "1")], [("X", "2.9")], index=0),
        _tx([("C", "1"), ("D", "1")], [("Y", "1.9")], index=1),
        _tx([], [("E", "50")], index=2, coinbase=True),
    ]
    partition = cluster_common_spending(txs, Partition())
    clusters = partition.finalize()
    assert [cluster.addresses for cluster in clusters] == [
        ("A", "B", "C", "D"),
        ("E",),
        ("X",),
        ("Y",),
    ]
    assert clusters[0].heuristics == (TAG_COMMON_SPENDING,)


@pytest.mark.full
def test_common_spending_matches_traversal_oracle():
    """共通入力クラスタが素朴な探索結果と一致すること。"""
    rng = random.Random(5)
    for _ in range(20):
        txs = _random_chain(rng, rng.randint(1, 1500), rng.randint(5, 800))
        clusters = cluster_common_spending(txs, Partition()).finalize()
        assert sorted(cluster.addresses for cluster in clusters) == _bfs_input_components(txs)


@pytest.mark.light
@pytest.mark.parametrize("shards", [1, 2, 3, 7, 50])
def test_sharded_common_spending_equals_single_pass(shards):
    """分割処理の結果が一括処理と一致すること。"""
    txs = _random_chain(random.Random(6), 300, 120)
    expected = cluster_common_spending(txs, Partition()).finalize()
    assert cluster_common_spending_sharded(txs, shards).finalize() == expected


@pytest.mark.full
def test_sharded_common_spending_with_worker_processes():
    """ワーカープロセスを使っても結果が変わらないこと。"""
    txs = _random_chain(random.Random(8), 600, 200)
    expected = cluster_common_spending(txs, Partition()).finalize()
    assert cluster_common_spending_sharded(txs, 4, workers=2).finalize() == expected


@pytest.mark.light
def test_infer_change_address_picks_single_new_non_round_output():
    """新規かつ丸めない唯一の出力をお釣りと推定すること。"""
    history = _history_with("A1", "A2", "C")
    tx = _tx([("A1", "0.4"), ("A2", "0.4")], [("B", "0.29991234"), ("C", "0.5")])
    assert infer_change_address(tx, history) == ChangeDecision.infer(tx.txid, "B")


@pytest.mark.light
@pytest.mark.parametrize(
    ("inputs", "outputs", "known", "reason"),
    [
        ([("A1", "1")], [("B", "0.29991234"), ("C", "0.5")], ("A1", "C"), REASON_SINGLE_INPUT),
        ([("A1", "1"), ("A1", "1")], [("B", "0.29991234"), ("C", "0.5")], ("A1", "C"), REASON_SINGLE_INPUT),
        ([("A1", "1"), ("A2", "1")], [("B", "0.29991234")], ("A1", "A2"), REASON_SINGLE_OUTPUT),
        ([("A1", "1"), ("A2", "1")], [("B", "0.2999"), ("C", "0.5")], ("A1", "A2", "C"), REASON_ROUND_AMOUNT),
        ([("A1", "1"), ("A2", "1")], [("A1", "0.5"), ("B", "0.29991234")], ("A1", "A2"), REASON_ADDRESS_OVERLAP),
        ([("A1", "1"), ("A2", "1")], [("B", "0.29991234"), ("C", "0.5")], ("A1", "A2"), REASON_MULTIPLE_NEW_OUTPUTS),
        ([("A1", "1"), ("A2", "1")], [("B", "0.29991234"), ("C", "0.5")], ("A1", "A2", "B", "C"), REASON_NO_NEW_OUTPUT),
        ([("A1", "1"), ("A2", "1")], [("B", "0.29991234"), ("B", "0.1")], ("A1", "A2"), REASON_MULTIPLE_NEW_OUTPUTS),
    ],
)
def test_infer_change_address_reports_first_failing_pattern(inputs, outputs, known, reason):
    """最初に満たさなかった条件を棄権理由にすること。"""
    tx = _tx(inputs, outputs)
    decision = infer_change_address(tx, _history_with(*known))
    assert decision == ChangeDecision.abstain(tx.txid, reason)


@pytest.mark.light
def test_coinbase_is_abstained():
    tx = _tx([], [("M", "50"), ("N", "0.12345678")], coinbase=True)
    assert infer_change_address(tx, AddressHistory()).reason == REASON_COINBASE


@pytest.mark.light
def test_address_first_seen_in_same_transaction_counts_as_new():
    """同一取引で初出のアドレスは新規扱いにすること。"""
    history = AddressHistory()
    tx = _tx([("A1", "1"), ("A2", "1")], [("B", "0.29991234"), ("C", "0.5")], block=0)
    history.record(tx)
    assert history.first_seen("B") == ChainPosition(0, 0)
    assert not history.is_used("B", ChainPosition(0, 0))
    assert history.is_used("B", ChainPosition(0, 1))


@pytest.mark.light
def test_history_ahead_of_transaction_is_a_contract_violation():
    """履歴が取引より先に進んでいれば契約違反にする。"""
    history = _history_with("A")
    history.record(_tx([], [("Z", "1")], block=20, coinbase=True))
    with pytest.raises(ContractViolationError):
        infer_change_address(_tx([("A", "1"), ("B", "1")], [("C", "1"), ("D", "1")], block=10), history)


@pytest.mark.light
def test_apply_change_heuristic_joins_change_to_input_cluster():
    """推定したお釣りを入力側クラスタへ結合すること。"""
    txs = [
        _tx([], [("W1", "1")], block=0, index=0, coinbase=True),
        _tx([], [("W2", "1")], block=0, index=1, coinbase=True),
        _tx([], [("M", "1")], block=0, index=2, coinbase=True),
        _tx([("W1", "1"), ("W2", "1")], [("M", "1.5"), ("CH", "0.12345678")], block=1),
    ]
    partition = cluster_common_spending(txs, Partition())
    partition, decisions = apply_change_heuristic(txs, partition)
    assert len(decisions) == len(txs)
    assert decisions[-1] == ChangeDecision.infer(txs[-1].txid, "CH")
    clusters = {cluster.representative: cluster for cluster in partition.finalize()}
    assert clusters["CH"].addresses == ("CH", "W1", "W2")
    assert clusters["CH"].heuristics == (TAG_CHANGE, TAG_COMMON_SPENDING)
    assert clusters["M"].addresses == ("M",)


@pytest.mark.light
def test_single_input_chain_makes_no_merges():
    txs = [
        _tx([(f"S{index}", "1")], [(f"P{index}", "0.5"), (f"Q{index}", "0.12345678")], index=index)
        for index in range(5)
    ]
    partition, decisions = apply_change_heuristic(txs, Partition())
    assert {decision.reason for decision in decisions} == {REASON_SINGLE_INPUT}
    assert partition.merge_log == []


@pytest.mark.light
def test_change_decisions_are_deterministic_and_reloadable():
    """判定結果が決定的で、読み戻せること。"""
    txs = _random_chain(random.Random(9), 200, 60)
    _, first = apply_change_heuristic(txs, Partition())
    _, second = apply_change_heuristic(txs, Partition())
    assert first == second

    out = io.StringIO()
    counts = write_change_decisions(out, first)
    assert counts == change_decision_counts(first)
    assert sum(counts.values()) == len(txs)
    assert load_change_decisions(io.StringIO(out.getvalue())) == first
    assert all(key == OUTCOME_INFERRED or key.startswith("abstained:") for key in counts)
