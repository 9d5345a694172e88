from dataclasses import dataclass
from typing import NamedTuple

from utils.errors import ConfigurationError, InvalidBid


class BidTerms(NamedTuple):
    """Unvalidated (bundle, price) pair for pure auction computations"""

    bundle: tuple
    price: int


@dataclass(frozen=True)
class Bid:
    """B_j: requested VM counts per type plus willingness to pay"""

    bundle: tuple
    price: int

    def __post_init__(self):
        bundle = tuple(int(k) for k in self.bundle)
        object.__setattr__(self, "bundle", bundle)
        if not bundle:
            raise InvalidBid("bundle must name at least one VM type")
        if any(k < 0 for k in bundle):
            raise InvalidBid("bundle counts must be non-negative")
        if not any(bundle):
            raise InvalidBid("bundle requests no VM instance")
        if int(self.price) <= 0:
            raise InvalidBid("price must be positive")

    @property
    def m(self):
        return len(self.bundle)

    def to_bytes(self):
        """Canonical serialization fed to the commitment hash"""
        return (",".join(str(k) for k in self.bundle) + ";" + str(self.price)).encode("ascii")

    def to_dict(self):
        return {"bundle": list(self.bundle), "price": self.price}


@dataclass(frozen=True)
class ProviderSupply:
    """Capacities k_i and weights w_i per VM type"""

    capacities: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "capacities", tuple(int(k) for k in self.capacities))
        object.__setattr__(self, "weights", tuple(int(w) for w in self.weights))
        if len(self.capacities) != len(self.weights):
            raise ConfigurationError("capacities and weights differ in length")
        if not self.capacities:
            raise ConfigurationError("supply needs at least one VM type")
        if any(k < 0 for k in self.capacities):
            raise ConfigurationError("capacities must be non-negative")
        if any(w <= 0 for w in self.weights):
            raise ConfigurationError("weights must be strictly positive")

    @property
    def m(self):
        return len(self.capacities)

    def weighted_size(self, bundle):
        """S = sum_i k^i * w_i"""
        return sum(k * w for k, w in zip(bundle, self.weights))

    def total_weight(self):
        return self.weighted_size(self.capacities)


@dataclass(frozen=True)
class ProviderConfig:
    addr: object
    supply: ProviderSupply
    base_price: int

    def __post_init__(self):
        if self.base_price < 0:
            raise ConfigurationError("base price must be non-negative")

    @property
    def deposit(self):
        """beta * sum_i k_i * w_i, escrowed at setup"""
        return self.base_price * self.supply.total_weight()

    def compensation(self, bundle):
        """beta * S_j owed to a winner when the provider defaults"""
        return self.base_price * self.supply.weighted_size(bundle)


@dataclass(frozen=True)
class Deadlines:
    tau1: int
    tau2: int
    tau3: int
    tau4: int
    tau5: int

    def __post_init__(self):
        values = self.as_tuple()
        for i in range(1, len(values)):
            if values[i] <= values[i - 1]:
                raise ConfigurationError(f"tau{i + 1} must be later than tau{i}")
        if self.tau1 < 0:
            raise ConfigurationError("tau1 must be non-negative")

    def as_tuple(self):
        return (self.tau1, self.tau2, self.tau3, self.tau4, self.tau5)


@dataclass(frozen=True)
class LadderParams:
    """Ladder-payment settings of a session without an adjudicator.

    `segments` of None derives e per winner as max(1, ceil(P_j / tolerate)).
    """

    usage_total: int
    segments: object = None
    tolerate: int = 0

    def __post_init__(self):
        if self.usage_total <= 0:
            raise ConfigurationError("usage_total must be positive")
        if self.segments is not None and self.segments < 1:
            raise ConfigurationError("segments must be at least 1")
        if self.tolerate < 0:
            raise ConfigurationError("tolerate must be non-negative")
        if self.segments is None and not self.tolerate:
            raise ConfigurationError("either segments or tolerate is required")

    def segments_for(self, price):
        if self.segments is not None:
            return self.segments
        return max(1, -(-price // self.tolerate))
