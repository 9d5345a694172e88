"""
Brute-force reference for the auction engine.

Independent of agents.auction: densities are compared as Fractions, the
critical user is found by inserting the winner at every rank among the other
bids, and the resulting price is cross-checked by binary search over integer
rebids of the winner's own bundle.
"""

import logging
import math
from fractions import Fraction

import numpy as np

from agents.auction import solve
from agents.models import BidTerms, ProviderSupply
from utils.config import load_settings
from utils.errors import OracleMismatch

logger = logging.getLogger(__name__)


def _size(bundle, weights):
    return sum(k * w for k, w in zip(bundle, weights))


def _order(entries, weights):
    """entries: [(bidder, bundle, price)] by descending b^2/S, then bidder key"""
    def key(entry):
        bidder, bundle, price = entry
        return (-Fraction(price * price, _size(bundle, weights)), getattr(bidder, "value", bidder))
    return sorted(entries, key=key)


def _greedy(entries, capacities):
    left = list(capacities)
    won = {}
    for bidder, bundle, _ in entries:
        if all(k <= c for k, c in zip(bundle, left)):
            left = [c - k for c, k in zip(left, bundle)]
            won[bidder] = 1
        else:
            won[bidder] = 0
    return won


def _wins_with(entries, bidder, price, supply):
    rebid = [(b, bundle, price if b == bidder else p) for b, bundle, p in entries]
    return _greedy(_order(rebid, supply.weights), supply.capacities)[bidder] == 1


def _closed_form(entries, j, supply):
    bidder, bundle, _ = j
    others = _order([e for e in entries if e[0] != bidder], supply.weights)
    for pos in range(len(others) + 1):
        trial = others[:pos] + [j]
        if not _greedy(trial, supply.capacities)[bidder]:
            s_bidder, s_bundle, s_price = others[pos - 1]
            s_size, j_size = _size(s_bundle, supply.weights), _size(bundle, supply.weights)
            return math.isqrt(s_price * s_price * j_size // s_size), s_bidder
    return 0, None


def _smallest_winning_bid(entries, j, supply):
    bidder, _, price = j
    lo, hi = 1, price
    while lo < hi:
        mid = (lo + hi) // 2
        if _wins_with(entries, bidder, mid, supply):
            hi = mid
        else:
            lo = mid + 1
    return lo


def _normalize(bids):
    if isinstance(bids, dict):
        items = bids.items()
    else:
        items = enumerate(bids)
    return [(bidder, tuple(bid.bundle), int(bid.price)) for bidder, bid in items]


def reference_allocate_price(bids, supply, settings=None):
    """(x, P) keyed like `bids` (list index or dict key); losers pay 0"""
    settings = settings or load_settings()
    entries = _normalize(bids)
    if len(entries) > settings.oracle_soft_limit:
        logger.warning("oracle on %d bids exceeds the soft limit of %d", len(entries), settings.oracle_soft_limit)

    x = _greedy(_order(entries, supply.weights), supply.capacities)
    prices = {}
    for entry in entries:
        bidder = entry[0]
        if not x[bidder]:
            prices[bidder] = 0
            continue
        closed, critical = _closed_form(entries, entry, supply)
        b_star = _smallest_winning_bid(entries, entry, supply)
        if b_star not in (max(closed, 1), closed + 1):
            raise OracleMismatch(
                f"bidder {bidder}: closed-form price {closed} (critical {critical}) "
                f"but smallest winning rebid is {b_star}"
            )
        prices[bidder] = closed

    if isinstance(bids, dict):
        return x, prices
    return [x[i] for i in range(len(entries))], [prices[i] for i in range(len(entries))]


def verify(bids, supply, settings=None):
    """Engine and oracle must agree on every allocation bit and price"""
    keyed = bids if isinstance(bids, dict) else dict(enumerate(bids))
    ref_x, ref_p = reference_allocate_price(keyed, supply, settings)
    outcome = solve(keyed, supply)
    for bidder in keyed:
        eng_x = outcome.x.get(bidder, 0)
        eng_p = outcome.prices.get(bidder, 0)
        if eng_x != ref_x[bidder] or eng_p != ref_p[bidder]:
            raise OracleMismatch(
                f"bidder {bidder}: engine (x={eng_x}, P={eng_p}) vs oracle (x={ref_x[bidder]}, P={ref_p[bidder]})"
            )
    return {"bids": len(keyed), "winners": sum(ref_x.values()), "revenue": sum(ref_p.values())}


def random_instance(rng, max_users=5, max_types=2, max_capacity=3, max_price=6, max_count=2):
    """One small auction drawn from a numpy Generator"""
    m = int(rng.integers(1, max_types + 1))
    supply = ProviderSupply(
        tuple(int(c) for c in rng.integers(0, max_capacity + 1, size=m)),
        tuple(int(w) for w in rng.integers(1, 4, size=m)),
    )
    bids = []
    for _ in range(int(rng.integers(0, max_users + 1))):
        bundle = [int(k) for k in rng.integers(0, max_count + 1, size=m)]
        if not any(bundle):
            bundle[int(rng.integers(0, m))] = 1
        bids.append(BidTerms(tuple(bundle), int(rng.integers(1, max_price + 1))))
    return bids, supply


def fuzz(seed, count, settings=None, **limits):
    """Run `count` random instances through verify; returns the mismatches"""
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(count):
        bids, supply = random_instance(rng, **limits)
        try:
            verify(bids, supply, settings)
        except OracleMismatch as exc:
            failures.append({"instance": i, "bids": bids, "supply": supply, "error": str(exc)})
            logger.warning("fuzz instance %d: %s", i, exc)
    return failures


def verify_outcome(outcome, bids, supply, settings=None):
    """Check a recorded AuctionOutcome against the oracle on the same bids"""
    ref_x, ref_p = reference_allocate_price(bids, supply, settings)
    for bidder in bids:
        got = (outcome.x.get(bidder, 0), outcome.prices.get(bidder, 0))
        want = (ref_x[bidder], ref_p[bidder])
        if got != want:
            raise OracleMismatch(f"bidder {bidder}: engine {got} vs oracle {want}")
    return {"bids": len(bids), "winners": sum(ref_x.values()), "revenue": sum(ref_p.values())}
