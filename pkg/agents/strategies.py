"""
Closed catalog of party behaviours.

Each strategy answers the runner's decision points from what the party itself
can observe (its own bid and nonce, the grant it opened, the segment index).
`Honest` is the protocol as written; every other entry is one deviation.
"""

from dataclasses import dataclass

from agents.models import Bid
from agents.trade import VMGrant
from utils.errors import InvalidBid, ScenarioValidationError


@dataclass(frozen=True)
class UserStrategy:
    name = "Honest"

    @property
    def honest(self):
        return type(self) is UserStrategy

    def opening(self, bid):
        """Bid to open with, or None to stay silent"""
        return bid

    def disputes(self, grant_valid):
        return not grant_valid

    def disaffirms(self, grant_valid):
        return not grant_valid

    def confirmations(self, grant, bundle, e):
        """How many confirmations c_1..c_k the user will send"""
        if grant is None or not grant.valid_for(bundle):
            return 0
        sent = 0
        for i in range(1, e + 1):
            if not grant.active_through(i):
                break
            sent = i
        return sent

    def describe(self):
        return self.name


@dataclass(frozen=True)
class AbortAfterCommit(UserStrategy):
    name = "AbortAfterCommit"

    def opening(self, bid):
        return None


@dataclass(frozen=True)
class OpenAltered(UserStrategy):
    bid: Bid = None
    name = "OpenAltered"

    def opening(self, bid):
        if self.bid is not None:
            return self.bid
        return Bid(bid.bundle, bid.price + 1)

    def describe(self):
        return f"{self.name}({self.bid.to_bytes().decode() if self.bid else '+1'})"


@dataclass(frozen=True)
class StopAfterSegment(UserStrategy):
    segment: int = 0
    name = "StopAfterSegment"

    def confirmations(self, grant, bundle, e):
        return min(self.segment, super().confirmations(grant, bundle, e))

    def describe(self):
        return f"{self.name}({self.segment})"


@dataclass(frozen=True)
class FalseDispute(UserStrategy):
    name = "FalseDispute"

    def disputes(self, grant_valid):
        return True


@dataclass(frozen=True)
class NeverConfirm(UserStrategy):
    name = "NeverConfirm"

    def disaffirms(self, grant_valid):
        return False

    def confirmations(self, grant, bundle, e):
        return 0


@dataclass(frozen=True)
class ProviderStrategy:
    name = "Honest"

    @property
    def honest(self):
        return type(self) is ProviderStrategy

    triggers_auction = True

    def grant_for(self, winner, bundle):
        """Grant delivered before tau4, or None for no delivery"""
        return VMGrant(winner, tuple(bundle))

    def reseal_for(self, winner, bundle):
        """Grant handed to the adjudicator in a dispute, or None for silence"""
        return VMGrant(winner, tuple(bundle))

    def describe(self):
        return self.name


@dataclass(frozen=True)
class NoDelivery(ProviderStrategy):
    name = "NoDelivery"

    def grant_for(self, winner, bundle):
        return None

    def reseal_for(self, winner, bundle):
        return None


@dataclass(frozen=True)
class InvalidGrant(ProviderStrategy):
    name = "InvalidGrant"

    def grant_for(self, winner, bundle):
        return VMGrant(winner, tuple(bundle), config_ok=False)

    def reseal_for(self, winner, bundle):
        return self.grant_for(winner, bundle)


@dataclass(frozen=True)
class ShutdownAfterSegment(ProviderStrategy):
    segment: int = 0
    name = "ShutdownAfterSegment"

    def grant_for(self, winner, bundle):
        return VMGrant(winner, tuple(bundle), active_until_segment=self.segment)

    def reseal_for(self, winner, bundle):
        return self.grant_for(winner, bundle)

    def describe(self):
        return f"{self.name}({self.segment})"


@dataclass(frozen=True)
class SilentInDispute(InvalidGrant):
    name = "SilentInDispute"

    def reseal_for(self, winner, bundle):
        return None


@dataclass(frozen=True)
class RepairInDispute(InvalidGrant):
    name = "RepairInDispute"

    def reseal_for(self, winner, bundle):
        return VMGrant(winner, tuple(bundle))


@dataclass(frozen=True)
class NoAuctionTrigger(ProviderStrategy):
    name = "NoAuctionTrigger"
    triggers_auction = False


USER_STRATEGIES = {
    cls.name: cls
    for cls in (UserStrategy, AbortAfterCommit, OpenAltered, StopAfterSegment, FalseDispute, NeverConfirm)
}
PROVIDER_STRATEGIES = {
    cls.name: cls
    for cls in (ProviderStrategy, NoDelivery, InvalidGrant, ShutdownAfterSegment,
                SilentInDispute, RepairInDispute, NoAuctionTrigger)
}


def parse_strategy(role, entry, field="strategy"):
    """'Honest', 'StopAfterSegment' or {'name': ..., <params>} -> strategy"""
    catalog = USER_STRATEGIES if role == "user" else PROVIDER_STRATEGIES
    if entry is None:
        entry = "Honest"
    if isinstance(entry, str):
        entry = {"name": entry}
    if not isinstance(entry, dict) or "name" not in entry:
        raise ScenarioValidationError(field, "expected a strategy name or an object with 'name'")

    name = entry["name"]
    if name not in catalog:
        raise ScenarioValidationError(field, f"unknown {role} strategy '{name}'")
    cls = catalog[name]

    params = {k: v for k, v in entry.items() if k != "name"}
    kwargs = {}
    if cls in (StopAfterSegment, ShutdownAfterSegment):
        segment = params.pop("segment", None)
        if not isinstance(segment, int) or isinstance(segment, bool) or segment < 0:
            raise ScenarioValidationError(f"{field}.segment", "a non-negative integer is required")
        kwargs["segment"] = segment
    elif cls is OpenAltered and "bid" in params:
        raw = params.pop("bid")
        try:
            kwargs["bid"] = Bid(tuple(raw["bundle"]), int(raw["price"]))
        except (KeyError, TypeError, InvalidBid) as exc:
            raise ScenarioValidationError(f"{field}.bid", str(exc)) from None
    if params:
        raise ScenarioValidationError(field, f"unexpected parameters {sorted(params)} for {name}")
    return cls(**kwargs)


def honest(role):
    return UserStrategy() if role == "user" else ProviderStrategy()
