"""Synthetic chain generator configuration (flat key=value or YAML files + CLI overrides)."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from src.ingestion import InputFormatError

PROBABILITY_FIELDS = (
    "change_rate",
    "adversarial_round_change_rate",
    "address_reuse_rate",
)
POSITIVE_COUNT_FIELDS = ("n_entities", "wallets_per_entity", "deposits_per_customer")


class GenerationError(RuntimeError):
    """Generation could not proceed; the message names the failing step."""


@dataclass(frozen=True)
class GenConfig:
    """Knobs for the synthetic UTXO and account chain generators."""

    rng_seed: int = 0
    n_entities: int = 10
    wallets_per_entity: int = 3
    n_transactions: int = 1000
    change_rate: float = 0.8
    payment_round_decimals: int = 2
    change_min_fractional_digits: int = 5
    adversarial_round_change_rate: float = 0.0
    address_reuse_rate: float = 0.0
    decimals: int = 8
    noise_wallets: int = 0
    deposits_per_customer: int = 1

    def __post_init__(self) -> None:
        for spec in dataclasses.fields(self):
            value = getattr(self, spec.name)
            if spec.type == "int" and (isinstance(value, bool) or not isinstance(value, int)):
                raise ValueError(f"{spec.name} must be an integer, got {value!r}")
        for name in PROBABILITY_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0 <= value <= 1:
                raise ValueError(f"{name} must be a probability in [0, 1], got {value!r}")
        for name in POSITIVE_COUNT_FIELDS:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("rng_seed", "n_transactions", "noise_wallets"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.decimals <= 30:
            raise ValueError("decimals must be in 0..30")
        if not 0 <= self.payment_round_decimals <= self.decimals:
            raise ValueError("payment_round_decimals must be in 0..decimals")
        if not 0 <= self.change_min_fractional_digits <= self.decimals:
            raise ValueError("change_min_fractional_digits must be in 0..decimals")

    def digest(self) -> str:
        """Stable digest of the configuration, recorded in run manifests."""
        text = ";".join(f"{key}={value}" for key, value in sorted(dataclasses.asdict(self).items()))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _coerce(name: str, value: Any, source_name: str, line_number: int | None) -> Any:
    field_types = {spec.name: spec.type for spec in dataclasses.fields(GenConfig)}
    if name not in field_types:
        raise InputFormatError(source_name, line_number, f"unknown config key: {name}")
    try:
        if field_types[name] == "int":
            if isinstance(value, bool):
                raise ValueError(value)
            return int(value)
        return float(value)
    except (TypeError, ValueError) as exc:
        raise InputFormatError(
            source_name, line_number, f"invalid value for {name}: {value!r}"
        ) from exc


def load_gen_config_file(path: str | Path) -> dict[str, Any]:
    """Read `key=value` lines (or a YAML mapping for .yaml/.yml) into typed values."""
    path = Path(path)
    source_name = str(path)
    text = path.read_text(encoding="utf-8")

    if path.suffix in {".yaml", ".yml"}:
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise InputFormatError(source_name, None, f"invalid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise InputFormatError(source_name, None, "config must be a mapping")
        return {str(key): _coerce(str(key), value, source_name, None) for key, value in data.items()}

    values: dict[str, Any] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, raw = stripped.partition("=")
        if not sep:
            raise InputFormatError(source_name, line_number, "expected key=value")
        key = key.strip()
        values[key] = _coerce(key, raw.strip(), source_name, line_number)
    return values


def build_gen_config(
    file_values: Mapping[str, Any] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> GenConfig:
    """Defaults <- config file <- CLI overrides (None values are skipped)."""
    merged: dict[str, Any] = dict(file_values or {})
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = _coerce(key, value, "<cli>", None)
    return GenConfig(**merged)
