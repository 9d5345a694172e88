"""
Combinatorial VM auction: density ranking, greedy allocation and
critical-value pricing.

Densities b / sqrt(S) are never evaluated as floats for ordering; two
densities compare through b1^2 * S2 against b2^2 * S1.
"""

import logging
import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from functools import cmp_to_key, total_ordering

from agents.session import EscrowKind, Trade
from agents.states import USER_FAILS_IN_AUCTION, USER_OPENED_COMMITMENT, USER_WINS, ContractPhase
from utils.errors import InvalidBid
from utils.ledger import EventKind

logger = logging.getLogger(__name__)


@total_ordering
@dataclass(frozen=True, eq=False)
class Density:
    """Exact bid density held as the pair (b_j, S_j)"""

    price: int
    size: int

    def _cross(self, other):
        return self.price * self.price * other.size, other.price * other.price * self.size

    def __eq__(self, other):
        if not isinstance(other, Density):
            return NotImplemented
        left, right = self._cross(other)
        return left == right

    def __lt__(self, other):
        if not isinstance(other, Density):
            return NotImplemented
        left, right = self._cross(other)
        return left < right

    def __hash__(self):
        return hash(Fraction(self.price * self.price, self.size))

    def at_least(self, beta):
        """d >= beta, evaluated as b^2 >= beta^2 * S"""
        return self.price * self.price >= beta * beta * self.size

    def decimal(self):
        return Decimal(self.price) / Decimal(self.size).sqrt()

    @property
    def value(self):
        return self.price / math.sqrt(self.size)

    def __repr__(self):
        return f"Density({self.price}/sqrt({self.size}))"


def bid_density(bid, weights):
    """Density as an exact pair; all-zero bundles have no density"""
    if len(bid.bundle) != len(weights):
        raise InvalidBid("bundle and weights differ in length")
    size = sum(k * w for k, w in zip(bid.bundle, weights))
    if size <= 0:
        raise InvalidBid("bundle has zero weighted size")
    return Density(int(bid.price), size)


@dataclass(frozen=True)
class RankedBid:
    bidder: object
    bundle: tuple
    price: int
    density: Density


def _tie_key(bidder):
    return getattr(bidder, "value", bidder)


def _compare(a, b):
    # Descending density, then ascending address bytes
    if a.density != b.density:
        return -1 if a.density > b.density else 1
    ka, kb = _tie_key(a.bidder), _tie_key(b.bidder)
    return (ka > kb) - (ka < kb)


def rank_bids(bids, weights):
    """bids: {bidder: Bid-like} -> RankedBid list by descending density"""
    ranked = [
        RankedBid(bidder, tuple(bid.bundle), int(bid.price), bid_density(bid, weights))
        for bidder, bid in bids.items()
    ]
    return sorted(ranked, key=cmp_to_key(_compare))


def _fits(used, bundle, capacities):
    return all(u + k <= cap for u, k, cap in zip(used, bundle, capacities))


def _add(used, bundle):
    return [u + k for u, k in zip(used, bundle)]


def allocate(ordered_bids, supply):
    """Greedy scan: x_j = 1 iff the bundle fits the residual capacity"""
    used = [0] * supply.m
    x = []
    for bid in ordered_bids:
        if _fits(used, bid.bundle, supply.capacities):
            used = _add(used, bid.bundle)
            x.append(1)
        else:
            x.append(0)
    return x


def critical_price(critical, winner):
    """floor(d_s * sqrt(S_j)) = isqrt(floor(b_s^2 * S_j / S_s))"""
    s, j = critical.density, winner.density
    return math.isqrt((s.price * s.price * j.size) // s.size)


def price(x, ordered_bids, supply):
    """Critical-value payments; returns (prices, critical users) for winners"""
    prices, critical = {}, {}
    caps = supply.capacities
    for j, bid in enumerate(ordered_bids):
        if not x[j]:
            continue
        # Consumption of winners ranked before j
        ins = [0] * supply.m
        for t in range(j):
            if x[t]:
                ins = _add(ins, ordered_bids[t].bundle)

        prices[bid.bidder] = 0
        critical[bid.bidder] = None
        for s in range(j + 1, len(ordered_bids)):
            other = ordered_bids[s]
            if not _fits(ins, other.bundle, caps):
                continue
            ins = _add(ins, other.bundle)
            if not _fits(ins, bid.bundle, caps):
                prices[bid.bidder] = critical_price(other, bid)
                critical[bid.bidder] = other.bidder
                break
    return prices, critical


@dataclass
class AuctionOutcome:
    order: list = field(default_factory=list)
    x: dict = field(default_factory=dict)
    prices: dict = field(default_factory=dict)
    critical: dict = field(default_factory=dict)
    ranked: list = field(default_factory=list)

    def winners(self):
        return [b for b in self.order if self.x[b]]

    def losers(self):
        return [b for b in self.order if not self.x[b]]

    def describe(self, bidder):
        crit = self.critical.get(bidder)
        if crit is None:
            crit = "-"
        elif hasattr(crit, "hex"):
            crit = crit.hex()
        return (
            f"auction rank={self.order.index(bidder) + 1} x={self.x[bidder]} "
            f"price={self.prices.get(bidder, 0)} critical={crit}"
        )


def solve(bids, supply):
    """Rank, allocate and price a set of bids"""
    ranked = rank_bids(bids, supply.weights)
    x = allocate(ranked, supply)
    prices, critical = price(x, ranked, supply)
    return AuctionOutcome(
        order=[b.bidder for b in ranked],
        x={b.bidder: xi for b, xi in zip(ranked, x)},
        prices=prices,
        critical=critical,
        ranked=ranked,
    )


class AuctionAgent:
    """Runs the auction phase of one session"""

    def __init__(self, session):
        self.session = session

    def run_auction(self, caller):
        s = self.session
        s.require(
            "run_auction", caller, caller.address,
            phase=ContractPhase.AUCTION,
            deadline=s.deadlines.tau3,
            conditions=[("provider deposit funded", lambda _: s.provider_funded)],
        )
        if not s.refunds_settled:
            from agents.commitment import BidCommitmentAgent
            BidCommitmentAgent(s).settle_refunds(caller)

        supply = s.provider.supply
        bids = {
            addr: s.commitments[addr].opened_bid
            for addr in s.users
            if s.states.get(addr) == USER_OPENED_COMMITMENT
        }
        outcome = solve(bids, supply)
        self._check_outcome(outcome, supply)

        for bidder in outcome.order:
            won = bool(outcome.x[bidder])
            s.states.transition(bidder, USER_WINS if won else USER_FAILS_IN_AUCTION)
            s.ledger.record(EventKind.STATE_CHANGE, s.address, bidder, note=outcome.describe(bidder))

        # Losers get b_j back; winners get b_j - P_j back and leave P_j in escrow
        for bidder in outcome.order:
            bid = bids[bidder]
            if outcome.x[bidder]:
                p = outcome.prices[bidder]
                excess = bid.price - p
                if excess:
                    s.release(bidder, [(bidder, EscrowKind.DEPOSIT, excess)], f"over-deposit b-P={excess}")
                s.trades[bidder] = Trade(
                    winner=bidder, bundle=bid.bundle, price=p, size=supply.weighted_size(bid.bundle),
                )
            else:
                s.release(bidder, [(bidder, EscrowKind.DEPOSIT, bid.price)], "loser deposit back")

        s.outcome = outcome
        s.set_phase(ContractPhase.PROVIDER_SENDS_GOODS)
        logger.info(
            "sid %s: %d winners of %d bids, revenue %d",
            s.sid, len(outcome.winners()), len(outcome.order), sum(outcome.prices.values()),
        )
        return outcome

    def _check_outcome(self, outcome, supply):
        used = [0] * supply.m
        for bid in outcome.ranked:
            if outcome.x[bid.bidder]:
                used = _add(used, bid.bundle)
                if outcome.prices[bid.bidder] > bid.price:
                    raise AssertionError("price exceeds bid")
        if any(u > k for u, k in zip(used, supply.capacities)):
            raise AssertionError("allocation exceeds capacity")
        densities = [b.density for b in outcome.ranked]
        if any(a < b for a, b in zip(densities, densities[1:])):
            raise AssertionError("scan order is not by descending density")
