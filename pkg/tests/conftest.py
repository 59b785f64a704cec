"""テスト共通fixture（合成チェーンと一時ファイル）を定義する。"""

from __future__ import annotations

import io
import json
import sys
from pathlib import Path

import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.generator.gen_config import GenConfig  # pylint: disable=wrong-import-position
from src.generator.synth_account import generate_account_chain  # pylint: disable=wrong-import-position
from src.generator.synth_utxo import generate_utxo_chain  # pylint: disable=wrong-import-position


def ndjson_bytes(records: list[dict]) -> io.BytesIO:
    """レコード列を NDJSON のバイトストリームにする。"""
    text = "".join(json.dumps(record) + "\n" for record in records)
    return io.BytesIO(text.encode("utf-8"))


@pytest.fixture
def ndjson():
    return ndjson_bytes


@pytest.fixture(scope="session")
def small_utxo_chain():
    """敵対的ノブ無しの小さな UTXO チェーンと正解データ。"""
    config = GenConfig(rng_seed=7, n_entities=6, wallets_per_entity=3, n_transactions=400)
    txs, truth = generate_utxo_chain(config)
    return config, txs, truth


@pytest.fixture(scope="session")
def small_account_chain():
    """3 取引所 × 100 顧客 + ノイズの口座型チェーン。"""
    config = GenConfig(
        rng_seed=11,
        n_entities=3,
        wallets_per_entity=100,
        n_transactions=200,
        noise_wallets=20,
        decimals=18,
    )
    transfers, truth, seeds = generate_account_chain(config)
    return config, transfers, truth, seeds
