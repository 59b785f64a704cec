"""
合成 UTXO チェーンを正解データ付きで生成する。

同じ GenConfig からは常にバイト単位で同一の取引列と正解データが得られる。
"""

from __future__ import annotations

import hashlib
import logging
import random

from src.core_model import Amount, ChainPosition, TxEntry, UtxoTransaction, fractional_digits
from src.generator.gen_config import GenConfig, GenerationError
from src.generator.ground_truth import (
    ROLE_CHANGE_ADDRESS,
    ROLE_CUSTOMER_WALLET,
    ChangeTruth,
    GroundTruth,
)
from src.heuristics.utxo_clustering import ROUND_AMOUNT_MAX_DIGITS

UTXO_ADDRESS_PREFIX = "bc1q"
COINBASE_REWARD_COINS = 50
TXS_PER_BLOCK = 20
PAYMENT_SHARE_PERCENT = (50, 95)
MULTI_INPUT_RATE = 0.85

LOGGER = logging.getLogger(__name__)


class AddressFactory:
    """Deterministic fresh address tokens derived from the RNG seed."""

    def __init__(self, rng_seed: int, prefix: str, width: int = 38):
        self.rng_seed = rng_seed
        self.prefix = prefix
        self.width = width
        self.counter = 0

    def next(self) -> str:
        self.counter += 1
        digest = hashlib.sha256(f"{self.prefix}:{self.rng_seed}:{self.counter}".encode("ascii"))
        return self.prefix + digest.hexdigest()[: self.width]


class BlockClock:
    """Hands out consecutive chain positions, `per_block` transactions per block."""

    def __init__(self, per_block: int = TXS_PER_BLOCK):
        self.per_block = per_block
        self.block_height = 0
        self.tx_index = 0

    def next(self) -> ChainPosition:
        position = ChainPosition(self.block_height, self.tx_index)
        self.tx_index += 1
        if self.tx_index == self.per_block:
            self.block_height += 1
            self.tx_index = 0
        return position


def entity_name(index: int) -> str:
    return f"entity-{index:04d}"


class _UtxoChainBuilder:
    def __init__(self, config: GenConfig):
        self.config = config
        self.rng = random.Random(config.rng_seed)
        self.addresses = AddressFactory(config.rng_seed, UTXO_ADDRESS_PREFIX)
        self.clock = BlockClock()
        self.tx_counter = 0
        self.truth = GroundTruth()
        self.txs: list[UtxoTransaction] = []
        self.seen: set[str] = set()

        self.wallets: list[list[str]] = [[] for _ in range(config.n_entities)]
        self.change_addresses: list[list[str]] = [[] for _ in range(config.n_entities)]
        self.utxos: list[list[tuple[str, int]]] = [[] for _ in range(config.n_entities)]
        self.balances = [0] * config.n_entities

        self.payment_unit = 10 ** (config.decimals - config.payment_round_decimals)
        self.change_unit = 10 ** (config.decimals - config.change_min_fractional_digits)

    def next_txid(self) -> str:
        self.tx_counter += 1
        return hashlib.sha256(f"tx:{self.config.rng_seed}:{self.tx_counter}".encode("ascii")).hexdigest()

    def amount(self, base_units: int) -> Amount:
        return Amount(base_units, self.config.decimals)

    def emit(self, tx: UtxoTransaction, change: ChangeTruth) -> None:
        self.txs.append(tx)
        self.truth.changes.append(change)
        for entry in tx.inputs:
            self.seen.add(entry.address)
        for entry in tx.outputs:
            self.seen.add(entry.address)

    def credit(self, entity: int, address: str, base_units: int) -> None:
        self.utxos[entity].append((address, base_units))
        self.balances[entity] += base_units

    def bootstrap(self) -> None:
        reward = COINBASE_REWARD_COINS * 10**self.config.decimals
        for entity in range(self.config.n_entities):
            for _ in range(self.config.wallets_per_entity):
                wallet = self.addresses.next()
                self.wallets[entity].append(wallet)
                self.truth.assign(wallet, entity_name(entity), ROLE_CUSTOMER_WALLET)
                txid = self.next_txid()
                tx = UtxoTransaction(
                    txid=txid,
                    position=self.clock.next(),
                    coinbase=True,
                    inputs=(),
                    outputs=(TxEntry(wallet, self.amount(reward)),),
                )
                self.emit(tx, ChangeTruth(txid=txid, change_index=None))
                self.credit(entity, wallet, reward)

    def change_amount(self, remainder: int, round_change: bool) -> int:
        if round_change:
            return remainder // self.payment_unit * self.payment_unit
        change = remainder // self.change_unit * self.change_unit
        # 末尾桁が 0 だと有効桁数が下がるため 1 単位引く
        if change and (change // self.change_unit) % 10 == 0:
            change -= self.change_unit
        return change

    def change_address_for(self, sender: int) -> str:
        previous = self.change_addresses[sender]
        reuse = self.rng.random() < self.config.address_reuse_rate
        if reuse and previous:
            return self.rng.choice(previous)
        address = self.addresses.next()
        previous.append(address)
        self.truth.assign(address, entity_name(sender), ROLE_CHANGE_ADDRESS)
        return address

    def pick_inputs(self, sender: int) -> tuple[list[int], int]:
        """
        One UTXO, or with MULTI_INPUT_RATE two UTXOs of distinct addresses; further
        UTXOs are added while the total stays below two payment units.
        """
        utxos = self.utxos[sender]
        order = list(range(len(utxos)))
        self.rng.shuffle(order)
        wanted = 2 if self.rng.random() < MULTI_INPUT_RATE else 1

        picked: list[int] = []
        addresses: set[str] = set()
        for index in order:
            address = utxos[index][0]
            if address in addresses:
                continue
            picked.append(index)
            addresses.add(address)
            if len(picked) == wanted:
                break
        spent = sum(utxos[index][1] for index in picked)
        for index in order:
            if spent >= 2 * self.payment_unit:
                break
            if index not in picked:
                picked.append(index)
                spent += utxos[index][1]
        return picked, spent

    def spend(self, step: int) -> None:
        config = self.config
        rng = self.rng
        senders = [e for e in range(config.n_entities) if self.balances[e] >= 2 * self.payment_unit]
        if not senders:
            raise GenerationError(f"step {step}: every entity balance is exhausted")
        sender = senders[rng.randrange(len(senders))]
        payee_entity = rng.choice([e for e in range(config.n_entities) if e != sender])
        payee = rng.choice(self.wallets[payee_entity])

        picked, spent = self.pick_inputs(sender)
        share = rng.randint(*PAYMENT_SHARE_PERCENT)
        target = max(spent * share // 100 // self.payment_unit * self.payment_unit, self.payment_unit)
        with_change = rng.random() < config.change_rate
        round_change = rng.random() < config.adversarial_round_change_rate

        inputs = [self.utxos[sender][index] for index in picked]
        picked_set = set(picked)
        self.utxos[sender] = [utxo for i, utxo in enumerate(self.utxos[sender]) if i not in picked_set]
        self.balances[sender] -= spent

        change = 0
        change_address = None
        if with_change and spent > target:
            change = self.change_amount(spent - target, round_change)
        if change:
            payment = target
            change_address = self.change_address_for(sender)
        else:
            payment = spent // self.payment_unit * self.payment_unit

        outputs = [(payee, payment)]
        change_index = None
        if change_address is not None:
            change_index = rng.randrange(2)
            outputs.insert(change_index, (change_address, change))

        txid = self.next_txid()
        tx = UtxoTransaction(
            txid=txid,
            position=self.clock.next(),
            coinbase=False,
            inputs=tuple(TxEntry(address, self.amount(value)) for address, value in inputs),
            outputs=tuple(TxEntry(address, self.amount(value)) for address, value in outputs),
        )
        eligible = False
        if change_address is not None:
            input_addresses = {address for address, _ in inputs}
            eligible = (
                len(input_addresses) >= 2
                and change_address not in self.seen
                and payee in self.seen
                and fractional_digits(self.amount(change)) > ROUND_AMOUNT_MAX_DIGITS
                and not input_addresses & {change_address, payee}
            )
        self.emit(
            tx,
            ChangeTruth(
                txid=txid,
                change_index=change_index,
                change_address=change_address,
                eligible=eligible,
                round_change=change_address is not None and round_change,
            ),
        )
        self.credit(payee_entity, payee, payment)
        if change_address is not None:
            self.credit(sender, change_address, change)


def generate_utxo_chain(config: GenConfig) -> tuple[list[UtxoTransaction], GroundTruth]:
    """Bootstrap coinbase funding per wallet, then `n_transactions` payments."""
    if config.n_entities < 2:
        raise GenerationError("UTXO generation needs at least two entities")
    builder = _UtxoChainBuilder(config)
    if config.n_transactions == 0:
        return [], builder.truth

    builder.bootstrap()
    for step in range(config.n_transactions):
        builder.spend(step)
    LOGGER.info(
        "synth utxo: %d transactions, %d addresses",
        len(builder.txs),
        len(builder.truth.entity_of),
    )
    return builder.txs, builder.truth
