"""
Scenario files: one JSON document per protocol run.

    {
      "name": "honest-two-users",
      "sid": 1,
      "guaranty": 5,
      "deadlines": {"tau1": 10, "tau2": 20, "tau3": 30, "tau4": 40, "tau5": 60},
      "adjudicated": true,
      "ladder": {"usage_total": 50, "segments": 5, "tolerate": 2},
      "nonce_seed": 7,
      "provider": {"seed": "provider", "capacities": [2], "weights": [1],
                   "base_price": 1, "strategy": "Honest", "balance": 1000},
      "users": [{"seed": "alice", "bid": {"bundle": [1], "price": 8},
                 "strategy": {"name": "StopAfterSegment", "segment": 2}}]
    }

`ladder` is required when `adjudicated` is false and ignored otherwise.
The document shape is data/scenario.schema.json. Validation errors name the
offending field, for example `deadlines.tau2` or `users[0].bid.bundle`.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from agents.models import Bid, Deadlines, LadderParams, ProviderSupply
from agents.strategies import honest, parse_strategy
from utils.config import SCENARIO_SCHEMA_PATH
from utils.errors import ConfigurationError, InvalidBid, ScenarioValidationError

logger = logging.getLogger(__name__)

DEFAULT_USER_BALANCE = 1000
PROVIDER_FLOAT = 1000
DEADLINE_KEYS = ("tau1", "tau2", "tau3", "tau4", "tau5")


@dataclass(frozen=True)
class UserSpec:
    seed: str
    bid: Bid
    strategy: object
    balance: int

    @property
    def label(self):
        return self.seed


@dataclass(frozen=True)
class ProviderSpec:
    seed: str
    supply: ProviderSupply
    base_price: int
    strategy: object
    balance: int

    @property
    def label(self):
        return self.seed

    @property
    def deposit(self):
        return self.base_price * self.supply.total_weight()


@dataclass(frozen=True)
class Scenario:
    name: str
    sid: int
    guaranty: int
    deadlines: Deadlines
    provider: ProviderSpec
    users: tuple = ()
    adjudicated: bool = True
    ladder: LadderParams = None
    nonce_seed: int = 0
    description: str = ""
    source: str = field(default="", compare=False)

    def nonce_for(self, index, nbytes):
        """Nonce of the index-th user, drawn from a per-user PCG64 stream"""
        rng = np.random.default_rng([self.nonce_seed, self.sid, index])
        return rng.bytes(nbytes)

    def labels(self):
        return [self.provider.label] + [u.label for u in self.users]

    def with_honest(self, label):
        """Copy of this scenario where `label` follows the protocol"""
        if label == self.provider.label:
            return replace(self, provider=replace(self.provider, strategy=honest("provider")))
        users = tuple(
            replace(u, strategy=honest("user")) if u.label == label else u for u in self.users
        )
        return replace(self, users=users)

    def deviators(self):
        out = [] if self.provider.strategy.honest else [self.provider.label]
        return out + [u.label for u in self.users if not u.strategy.honest]


class ScenarioParser:
    """Turns a scenario document into a validated Scenario

    The document shape is checked against data/scenario.schema.json; the
    rules a schema cannot express (deadline order, bundle length against
    the provider's VM types, strategy parameters) are checked here.
    """

    def __init__(self, schema_path=SCENARIO_SCHEMA_PATH):
        self.validator = _validator(str(schema_path))

    def parse_file(self, path):
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ScenarioValidationError("path", f"no such file {path}") from None
        except json.JSONDecodeError as exc:
            raise ScenarioValidationError("document", f"invalid JSON: {exc}") from None
        scenario = self.parse(raw, default_name=path.stem)
        return replace(scenario, source=str(path))

    def parse(self, raw, default_name="scenario"):
        self.check_schema(raw)

        deadlines = self.parse_deadlines(raw["deadlines"])
        provider = self.parse_provider(raw["provider"])
        adjudicated = raw.get("adjudicated", True)
        users = tuple(
            self.parse_user(entry, i, provider.supply.m) for i, entry in enumerate(raw["users"])
        )
        seeds = [u.seed for u in users] + [provider.seed]
        if len(set(seeds)) != len(seeds):
            raise ScenarioValidationError("users", "seeds must be distinct from each other and the provider")

        ladder = None
        if not adjudicated:
            ladder = self.parse_ladder(raw.get("ladder"))

        logger.debug("scenario %s: %d users, adjudicated=%s", raw.get("name", default_name), len(users), adjudicated)
        return Scenario(
            name=raw.get("name", default_name),
            sid=raw.get("sid", 1),
            guaranty=raw["guaranty"],
            deadlines=deadlines,
            provider=provider,
            users=users,
            adjudicated=adjudicated,
            ladder=ladder,
            nonce_seed=raw.get("nonce_seed", 0),
            description=raw.get("description", ""),
        )

    def check_schema(self, raw):
        error = best_match(self.validator.iter_errors(raw))
        if error is None:
            return
        path, message = list(error.absolute_path), error.message
        # required/additionalProperties report on the parent object
        if error.validator == "required":
            path.append(next(k for k in error.validator_value if k not in error.instance))
            message = "a required property is missing"
        elif error.validator == "additionalProperties":
            known = error.schema.get("properties", {})
            path.append(sorted(k for k in error.instance if k not in known)[0])
            message = "unknown key"
        raise ScenarioValidationError(field_name(path), message)

    def parse_deadlines(self, raw):
        values = [raw[key] for key in DEADLINE_KEYS]
        for i in range(1, len(values)):
            if values[i] <= values[i - 1]:
                raise ScenarioValidationError(
                    f"deadlines.{DEADLINE_KEYS[i]}", f"must be later than {DEADLINE_KEYS[i - 1]}"
                )
        return Deadlines(*values)

    def parse_provider(self, raw):
        try:
            supply = ProviderSupply(tuple(raw["capacities"]), tuple(raw["weights"]))
        except ConfigurationError as exc:
            raise ScenarioValidationError("provider.capacities", str(exc)) from None
        base_price = raw["base_price"]
        strategy = parse_strategy("provider", raw.get("strategy"), "provider.strategy")
        deposit = base_price * supply.total_weight()
        balance = raw.get("balance", deposit + PROVIDER_FLOAT)
        if balance < deposit:
            raise ScenarioValidationError("provider.balance", f"{balance} does not cover the deposit {deposit}")
        return ProviderSpec(raw.get("seed", "provider"), supply, base_price, strategy, balance)

    def parse_user(self, raw, index, m):
        where = f"users[{index}]"
        bundle = raw["bid"]["bundle"]
        if len(bundle) != m:
            raise ScenarioValidationError(f"{where}.bid.bundle", f"must list {m} VM counts")
        try:
            bid = Bid(tuple(bundle), raw["bid"]["price"])
        except InvalidBid as exc:
            raise ScenarioValidationError(f"{where}.bid", str(exc)) from None
        strategy = parse_strategy("user", raw.get("strategy"), f"{where}.strategy")
        return UserSpec(raw["seed"], bid, strategy, raw.get("balance", DEFAULT_USER_BALANCE))

    def parse_ladder(self, raw):
        if raw is None:
            raise ScenarioValidationError("ladder", "required when adjudicated is false")
        try:
            return LadderParams(
                usage_total=raw["usage_total"],
                segments=raw.get("segments"),
                tolerate=raw.get("tolerate", 0),
            )
        except ConfigurationError as exc:
            raise ScenarioValidationError("ladder", str(exc)) from None


def field_name(path):
    """['users', 0, 'bid'] -> 'users[0].bid'"""
    out = ""
    for part in path:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += f".{part}" if out else str(part)
    return out or "document"


@lru_cache(maxsize=None)
def _validator(schema_path):
    schema = json.loads(Path(schema_path).read_text(encoding="utf-8"))
    Draft202012Validator.check_schema(schema)
    return Draft202012Validator(schema)


def load_scenario(path):
    return ScenarioParser().parse_file(path)
