"""Clustering and heuristic quality against synthetic ground truth."""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable

from src.disjoint_set import Cluster
from src.generator.ground_truth import ROLE_DEPOSIT_ADDRESS, GroundTruth, MissingTruthError
from src.heuristics.account_clustering import DepositInference
from src.heuristics.utxo_clustering import ChangeDecision

LOGGER = logging.getLogger(__name__)


def pair_count(size: int) -> int:
    return size * (size - 1) // 2


def ratio(numerator: int, denominator: int) -> float:
    """numerator / denominator, with 0/0 defined as 1.0."""
    if denominator == 0:
        return 1.0
    return numerator / denominator


@dataclass(frozen=True)
class EvalReport:
    """Metrics with the counts backing them; change/deposit parts are None when not evaluated."""

    pairwise_precision: float
    pairwise_recall: float
    predicted_pairs: int
    truth_pairs: int
    true_positive_pairs: int
    change_precision: float | None = None
    change_recall: float | None = None
    change_eligible_recall: float | None = None
    change_inferred: int | None = None
    change_correct: int | None = None
    change_truth: int | None = None
    change_eligible: int | None = None
    change_eligible_correct: int | None = None
    deposit_precision: float | None = None
    deposit_recall: float | None = None
    deposit_inferred: int | None = None
    deposit_correct: int | None = None
    deposit_truth: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PairTally:
    predicted_pairs: int
    truth_pairs: int
    true_positive_pairs: int


def tally_pairs(clusters: Iterable[Cluster], truth: GroundTruth) -> PairTally:
    """Pair counts from per-cluster entity tallies (no pair enumeration)."""
    predicted = 0
    true_positive = 0
    entity_sizes: Counter[str] = Counter()
    for cluster in clusters:
        by_entity = Counter(truth.entity(address) for address in cluster.addresses)
        predicted += pair_count(len(cluster.addresses))
        true_positive += sum(pair_count(size) for size in by_entity.values())
        entity_sizes.update(by_entity)
    truth_pairs = sum(pair_count(size) for size in entity_sizes.values())
    return PairTally(predicted, truth_pairs, true_positive)


def _change_metrics(decisions: Iterable[ChangeDecision], truth: GroundTruth) -> dict:
    by_txid = truth.change_by_txid()
    inferred = correct = eligible_correct = 0
    for decision in decisions:
        change = by_txid.get(decision.txid)
        if change is None:
            raise MissingTruthError("<truth>", None, f"transaction {decision.txid} missing from truth")
        if not decision.inferred:
            continue
        inferred += 1
        if decision.address == change.change_address:
            correct += 1
            if change.eligible:
                eligible_correct += 1
    actual = sum(1 for change in truth.changes if change.change_address is not None)
    eligible = sum(1 for change in truth.changes if change.eligible)
    return {
        "change_precision": ratio(correct, inferred),
        "change_recall": ratio(correct, actual),
        "change_eligible_recall": ratio(eligible_correct, eligible),
        "change_inferred": inferred,
        "change_correct": correct,
        "change_truth": actual,
        "change_eligible": eligible,
        "change_eligible_correct": eligible_correct,
    }


def _deposit_metrics(inferences: Iterable[DepositInference], truth: GroundTruth) -> dict:
    inferred = correct = 0
    for inference in inferences:
        if not inference.inferred:
            continue
        inferred += 1
        entity = truth.entity(inference.address)
        if truth.role_of.get(inference.address) == ROLE_DEPOSIT_ADDRESS and entity == inference.entity:
            correct += 1
    actual = sum(1 for role in truth.role_of.values() if role == ROLE_DEPOSIT_ADDRESS)
    return {
        "deposit_precision": ratio(correct, inferred),
        "deposit_recall": ratio(correct, actual),
        "deposit_inferred": inferred,
        "deposit_correct": correct,
        "deposit_truth": actual,
    }


def evaluate(
    clusters: Iterable[Cluster],
    truth: GroundTruth,
    decisions: Iterable[ChangeDecision] | None = None,
    inferences: Iterable[DepositInference] | None = None,
) -> EvalReport:
    """Pairwise metrics always; change/deposit metrics when their outputs are given."""
    pairs = tally_pairs(clusters, truth)
    extra: dict = {}
    if decisions is not None:
        extra.update(_change_metrics(decisions, truth))
    if inferences is not None:
        extra.update(_deposit_metrics(inferences, truth))
    report = EvalReport(
        pairwise_precision=ratio(pairs.true_positive_pairs, pairs.predicted_pairs),
        pairwise_recall=ratio(pairs.true_positive_pairs, pairs.truth_pairs),
        predicted_pairs=pairs.predicted_pairs,
        truth_pairs=pairs.truth_pairs,
        true_positive_pairs=pairs.true_positive_pairs,
        **extra,
    )
    LOGGER.debug("evaluation: %s", report)
    return report


def save_report_json(path: str, report: EvalReport) -> None:
    """レポートを UTF-8 JSON（末尾改行付き）で保存する。"""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as file_obj:
        json.dump(report.to_dict(), file_obj, ensure_ascii=False, indent=2)
        file_obj.write("\n")


def load_report_json(path: str) -> EvalReport:
    with open(path, "r", encoding="utf-8") as file_obj:
        return EvalReport(**json.load(file_obj))


def format_report_summary(report: EvalReport) -> list[str]:
    lines = [
        f"pairwise precision={report.pairwise_precision:.6f} recall={report.pairwise_recall:.6f} "
        f"(tp={report.true_positive_pairs}, predicted={report.predicted_pairs}, truth={report.truth_pairs})"
    ]
    if report.change_precision is not None:
        lines.append(
            f"change precision={report.change_precision:.6f} recall={report.change_recall:.6f} "
            f"eligible_recall={report.change_eligible_recall:.6f} "
            f"(correct={report.change_correct}, inferred={report.change_inferred}, "
            f"truth={report.change_truth}, eligible={report.change_eligible})"
        )
    if report.deposit_precision is not None:
        lines.append(
            f"deposit precision={report.deposit_precision:.6f} recall={report.deposit_recall:.6f} "
            f"(correct={report.deposit_correct}, inferred={report.deposit_inferred}, "
            f"truth={report.deposit_truth})"
        )
    return lines
