"""Shared chain types and exact fixed-point amount arithmetic."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

MAX_BASE_UNITS = (1 << 128) - 1
MAX_DECIMALS = 30
AMOUNT_TEXT_RE = re.compile(r"[0-9]+(\.[0-9]+)?")


class AmountFormatError(ValueError):
    """Raised when decimal amount text cannot be represented exactly."""


class ContractViolationError(RuntimeError):
    """Caller broke a documented precondition."""


def validate_address(value: str) -> str:
    """Return `value` unchanged if it is a usable address token.

    Addresses are opaque: no checksum or encoding checks are done here.
    """
    if not isinstance(value, str) or not value:
        raise ValueError("address must be a non-empty string")
    for ch in value:
        if ch.isspace() or unicodedata.category(ch).startswith("C"):
            raise ValueError(f"address contains whitespace or control character: {value!r}")
    return value


@dataclass(frozen=True, slots=True)
class Amount:
    """Unsigned amount held as integer base units at a fixed decimal scale."""

    base_units: int
    decimals: int

    def __post_init__(self) -> None:
        if isinstance(self.base_units, bool) or not isinstance(self.base_units, int):
            raise AmountFormatError("base_units must be an integer")
        if isinstance(self.decimals, bool) or not isinstance(self.decimals, int):
            raise AmountFormatError("decimals must be an integer")
        if not 0 <= self.decimals <= MAX_DECIMALS:
            raise AmountFormatError(f"decimals out of range 0..{MAX_DECIMALS}: {self.decimals}")
        if not 0 <= self.base_units <= MAX_BASE_UNITS:
            raise AmountFormatError(f"amount out of 128-bit range: {self.base_units}")

    def _same_scale(self, other: Amount) -> None:
        if not isinstance(other, Amount):
            raise TypeError(f"expected Amount, got {type(other).__name__}")
        if other.decimals != self.decimals:
            raise AmountFormatError(
                f"decimals mismatch: {self.decimals} != {other.decimals}"
            )

    def __add__(self, other: Amount) -> Amount:
        self._same_scale(other)
        return Amount(self.base_units + other.base_units, self.decimals)

    def __sub__(self, other: Amount) -> Amount:
        self._same_scale(other)
        if other.base_units > self.base_units:
            raise AmountFormatError("amount subtraction underflow")
        return Amount(self.base_units - other.base_units, self.decimals)

    def __lt__(self, other: Amount) -> bool:
        self._same_scale(other)
        return self.base_units < other.base_units

    def __le__(self, other: Amount) -> bool:
        self._same_scale(other)
        return self.base_units <= other.base_units

    def __gt__(self, other: Amount) -> bool:
        self._same_scale(other)
        return self.base_units > other.base_units

    def __ge__(self, other: Amount) -> bool:
        self._same_scale(other)
        return self.base_units >= other.base_units

    def __str__(self) -> str:
        return format_amount(self)


def parse_amount(text: str, decimals: int) -> Amount:
    """Parse decimal text like `174.65893626` into exact base units."""
    if isinstance(decimals, bool) or not isinstance(decimals, int):
        raise AmountFormatError("decimals must be an integer")
    if not 0 <= decimals <= MAX_DECIMALS:
        raise AmountFormatError(f"decimals out of range 0..{MAX_DECIMALS}: {decimals}")
    if not isinstance(text, str) or AMOUNT_TEXT_RE.fullmatch(text) is None:
        raise AmountFormatError(f"malformed amount: {text!r}")

    whole, _, fraction = text.partition(".")
    if len(fraction) > decimals:
        raise AmountFormatError(
            f"amount {text!r} has {len(fraction)} fractional digits, chain allows {decimals}"
        )
    base_units = int(whole) * 10**decimals
    if fraction:
        base_units += int(fraction.ljust(decimals, "0"))
    if base_units > MAX_BASE_UNITS:
        raise AmountFormatError(f"amount {text!r} overflows 128-bit base units")
    return Amount(base_units, decimals)


def format_amount(amount: Amount) -> str:
    """Canonical decimal text: no trailing zeros, no trailing dot."""
    whole, fraction = divmod(amount.base_units, 10**amount.decimals)
    if fraction == 0:
        return str(whole)
    digits = str(fraction).rjust(amount.decimals, "0").rstrip("0")
    return f"{whole}.{digits}"


def fractional_digits(amount: Amount) -> int:
    """Count significant fractional digits in coin units (trailing zeros excluded)."""
    digits = amount.decimals
    value = amount.base_units
    while digits > 0 and value % 10 == 0:
        value //= 10
        digits -= 1
    return digits


@dataclass(frozen=True, order=True, slots=True)
class ChainPosition:
    """(block_height, tx_index); ordering is lexicographic."""

    block_height: int
    tx_index: int


@dataclass(frozen=True, slots=True)
class TxEntry:
    """One input or output side entry of a UTXO transaction."""

    address: str
    amount: Amount


@dataclass(frozen=True, slots=True)
class UtxoTransaction:
    """One UTXO-chain transaction with inputs pre-resolved to addresses."""

    txid: str
    position: ChainPosition
    coinbase: bool
    inputs: tuple[TxEntry, ...]
    outputs: tuple[TxEntry, ...]

    def __post_init__(self) -> None:
        if self.coinbase and self.inputs:
            raise ValueError("coinbase with inputs")
        if not self.coinbase and not self.inputs:
            raise ValueError("non-coinbase transaction without inputs")
        if not self.outputs:
            raise ValueError("transaction without outputs")

    def distinct_input_addresses(self) -> list[str]:
        """Input addresses in first-occurrence order, duplicates removed."""
        return list(dict.fromkeys(entry.address for entry in self.inputs))


@dataclass(frozen=True, slots=True)
class AccountTransfer:
    """One value transfer on an account-based chain."""

    hash: str
    position: ChainPosition
    sender: str
    recipient: str
    amount: Amount
    asset: str

    @property
    def is_self_transfer(self) -> bool:
        return self.sender == self.recipient
