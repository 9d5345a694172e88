import hashlib
import json
import os
from dataclasses import dataclass, replace
from pathlib import Path

from dotenv import load_dotenv

from utils.errors import ConfigurationError

load_dotenv()

ROOT_DIR = Path(__file__).resolve().parent.parent
DATA_DIR = ROOT_DIR / "data"
DEFAULTS_PATH = DATA_DIR / "protocol_defaults.json"
SCENARIO_DIR = DATA_DIR / "scenarios"
SCENARIO_SCHEMA_PATH = DATA_DIR / "scenario.schema.json"

ENV_PREFIX = "FAIRAUCTION_"


@dataclass(frozen=True)
class ProtocolSettings:
    """Pinned protocol constants; one instance per simulation"""

    hash_algorithm: str = "sha3_256"
    nonce_bits: int = 256
    address_bytes: int = 20
    oracle_soft_limit: int = 8
    contract_seed: str = "fair-auction-contract"
    adjudicator_seed: str = "fair-auction-adjudicator"
    log_level: str = "WARNING"
    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    @property
    def nonce_bytes(self):
        return self.nonce_bits // 8

    def digest(self, payload):
        """Hash `payload` with the pinned algorithm"""
        return hashlib.new(self.hash_algorithm, payload).digest()

    def validate(self):
        """Check the settings once, at load time"""
        if self.hash_algorithm not in hashlib.algorithms_available:
            raise ConfigurationError(f"unknown hash algorithm {self.hash_algorithm!r}")
        if len(self.digest(b"")) < 32:
            raise ConfigurationError(f"{self.hash_algorithm} digest shorter than 256 bits")
        if self.nonce_bits <= 0 or self.nonce_bits % 8:
            raise ConfigurationError("nonce_bits must be a positive multiple of 8")
        if not 1 <= self.address_bytes <= 32:
            raise ConfigurationError("address_bytes must be within 1..32")
        return self


# Keys that may be overridden from the environment, with their parsers
_ENV_KEYS = {
    "hash_algorithm": str,
    "nonce_bits": int,
    "oracle_soft_limit": int,
    "log_level": str,
}


def load_settings(path=None):
    """Load protocol defaults from JSON and apply FAIRAUCTION_* overrides"""
    path = Path(path or os.getenv(ENV_PREFIX + "DEFAULTS", DEFAULTS_PATH))
    try:
        with open(path, "r") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read protocol defaults {path}: {exc}") from exc

    known = set(ProtocolSettings.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown settings keys: {sorted(unknown)}")
    settings = ProtocolSettings(**raw)

    overrides = {}
    for key, parse in _ENV_KEYS.items():
        value = os.getenv(ENV_PREFIX + key.upper())
        if value is not None:
            try:
                overrides[key] = parse(value)
            except ValueError as exc:
                raise ConfigurationError(f"{ENV_PREFIX}{key.upper()}: {exc}") from exc
    if overrides:
        settings = replace(settings, **overrides)

    return settings.validate()
