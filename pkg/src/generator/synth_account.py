"""Synthetic account-based chain with exchange deposit sweeps and labeled hot wallets."""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass

from src.core_model import AccountTransfer, Amount, ChainPosition
from src.generator.gen_config import GenConfig, GenerationError
from src.generator.ground_truth import (
    ROLE_CUSTOMER_WALLET,
    ROLE_DEPOSIT_ADDRESS,
    ROLE_HOT_WALLET,
    ROLE_NOISE_WALLET,
    GroundTruth,
)
from src.generator.synth_utxo import AddressFactory
from src.ingestion import CATEGORY_EXCHANGE, SeedLabel

ACCOUNT_ADDRESS_PREFIX = "0x"
SEED_SOURCE = "synth"
NATIVE_ASSET = "native"
TOKEN_ASSET = "token:usdt"
TOKEN_SHARE = 0.3
SWEEP_FEE_COINS = "0.00042"
SWEEP_DELAY_BLOCKS = (1, 12)
TRANSFERS_PER_BLOCK = 50
NOISE_ENTITY = "noise"

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class _Event:
    block_height: int
    seq: int
    sender: str
    recipient: str
    base_units: int
    asset: str


def exchange_name(index: int) -> str:
    return f"exchange-{index:03d}.com"


def _sweep_fee(decimals: int) -> int:
    whole, _, fraction = SWEEP_FEE_COINS.partition(".")
    if len(fraction) > decimals:
        return 1
    return int(whole) * 10**decimals + int(fraction.ljust(decimals, "0"))


def generate_account_chain(
    config: GenConfig,
) -> tuple[list[AccountTransfer], GroundTruth, list[SeedLabel]]:
    """
    Exchanges (one hot wallet each, seeded), `wallets_per_entity` customers per
    exchange, each paying `deposits_per_customer` times into a personal deposit
    address that is swept to the hot wallet. `n_transactions` counts extra
    transfers among `noise_wallets` unrelated wallets; with no noise wallets
    none are generated.
    """
    noise_transfers = config.n_transactions if config.noise_wallets else 0
    if noise_transfers and config.noise_wallets < 2:
        raise GenerationError("noise transfers need at least two noise wallets")

    rng = random.Random(config.rng_seed)
    addresses = AddressFactory(config.rng_seed, ACCOUNT_ADDRESS_PREFIX, width=40)
    truth = GroundTruth()
    seeds: list[SeedLabel] = []
    fee = _sweep_fee(config.decimals)
    unit = 10**config.decimals
    low = max(fee + 1, unit // 100)
    high = max(low + 1, 500 * unit)

    deposit_total = config.n_entities * config.wallets_per_entity * config.deposits_per_customer
    horizon = max(1, (deposit_total + noise_transfers) // TRANSFERS_PER_BLOCK + 1)

    events: list[_Event] = []

    def add_event(block_height: int, sender: str, recipient: str, base_units: int, asset: str) -> None:
        events.append(_Event(block_height, len(events), sender, recipient, base_units, asset))

    for exchange in range(config.n_entities):
        name = exchange_name(exchange)
        hot_wallet = addresses.next()
        truth.assign(hot_wallet, name, ROLE_HOT_WALLET)
        seeds.append(SeedLabel(hot_wallet, name, CATEGORY_EXCHANGE, SEED_SOURCE))

        for customer in range(config.wallets_per_entity):
            wallet = addresses.next()
            deposit = addresses.next()
            truth.assign(wallet, f"customer-{exchange:03d}-{customer:05d}", ROLE_CUSTOMER_WALLET)
            truth.assign(deposit, name, ROLE_DEPOSIT_ADDRESS)
            asset = TOKEN_ASSET if rng.random() < TOKEN_SHARE else NATIVE_ASSET
            for _ in range(config.deposits_per_customer):
                amount = rng.randrange(low, high)
                deposit_block = rng.randrange(horizon)
                sweep_block = deposit_block + rng.randint(*SWEEP_DELAY_BLOCKS)
                add_event(deposit_block, wallet, deposit, amount, asset)
                add_event(sweep_block, deposit, hot_wallet, amount - fee, asset)

    noise = [addresses.next() for _ in range(config.noise_wallets)]
    for index, wallet in enumerate(noise):
        truth.assign(wallet, f"{NOISE_ENTITY}-{index:05d}", ROLE_NOISE_WALLET)
    for _ in range(noise_transfers):
        sender, recipient = rng.sample(noise, 2)
        add_event(rng.randrange(horizon), sender, recipient, rng.randrange(low, high), NATIVE_ASSET)

    events.sort(key=lambda event: (event.block_height, event.seq))
    transfers: list[AccountTransfer] = []
    tx_index = 0
    previous_block = None
    for event in events:
        tx_index = tx_index + 1 if event.block_height == previous_block else 0
        previous_block = event.block_height
        digest = hashlib.sha256(f"transfer:{config.rng_seed}:{event.seq}".encode("ascii"))
        transfers.append(
            AccountTransfer(
                hash="0x" + digest.hexdigest(),
                position=ChainPosition(event.block_height, tx_index),
                sender=event.sender,
                recipient=event.recipient,
                amount=Amount(event.base_units, config.decimals),
                asset=event.asset,
            )
        )
    LOGGER.info(
        "synth account: %d transfers, %d exchanges, %d deposit addresses",
        len(transfers),
        config.n_entities,
        config.n_entities * config.wallets_per_entity,
    )
    return transfers, truth, seeds
