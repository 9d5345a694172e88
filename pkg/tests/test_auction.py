from itertools import product

import pytest
from hypothesis import given, settings as hsettings, strategies as st

from agents.auction import Density, bid_density, critical_price, rank_bids, solve
from agents.models import Bid, BidTerms, ProviderSupply
from agents.oracle import fuzz, reference_allocate_price, verify
from agents.session import EscrowKind
from agents.states import USER_FAILS_IN_AUCTION, USER_WINS, ContractPhase
from utils.errors import InvalidBid, Rejected

ONE_TYPE = ProviderSupply((2,), (1,))
TWO_TYPES = ProviderSupply((2, 1), (1, 2))


def test_density_compares_without_floats():
    assert Density(2, 1) == Density(4, 4)
    assert Density(3, 2) > Density(2, 1)
    assert Density(7, 50) < Density(1, 1)
    assert Density(2, 4).at_least(1)
    assert not Density(2, 5).at_least(1)


def test_zero_size_bundle_has_no_density():
    with pytest.raises(InvalidBid):
        bid_density(BidTerms((0, 0), 5), (1, 2))
    with pytest.raises(InvalidBid):
        Bid((0,), 5)


def test_ties_break_on_ascending_bidder_key():
    ranked = rank_bids({"b": BidTerms((1,), 4), "a": BidTerms((4,), 8), "c": BidTerms((1,), 5)}, (1,))
    assert [r.bidder for r in ranked] == ["c", "a", "b"]


def test_three_bidders_two_slots():
    bids = {"alice": Bid((1,), 8), "bob": Bid((1,), 6), "carol": Bid((1,), 3)}
    outcome = solve(bids, ONE_TYPE)
    assert outcome.winners() == ["alice", "bob"]
    assert outcome.losers() == ["carol"]
    assert outcome.prices == {"alice": 3, "bob": 3}
    assert outcome.critical == {"alice": "carol", "bob": "carol"}


def test_two_vm_types():
    bids = {
        "alice": Bid((1, 1), 12), "bob": Bid((1, 0), 5),
        "carol": Bid((0, 1), 6), "dave": Bid((1, 0), 3),
    }
    outcome = solve(bids, TWO_TYPES)
    assert outcome.order == ["alice", "bob", "carol", "dave"]
    assert outcome.winners() == ["alice", "bob"]
    assert outcome.prices == {"alice": 7, "bob": 3}
    assert critical_price(outcome.ranked[2], outcome.ranked[0]) == 7


def test_lone_bidder_pays_nothing():
    outcome = solve({"alice": Bid((1,), 8)}, ONE_TYPE)
    assert outcome.x == {"alice": 1}
    assert outcome.prices == {"alice": 0}
    assert outcome.critical == {"alice": None}


def test_oversized_bundle_never_wins():
    outcome = solve({"alice": Bid((3,), 100), "bob": Bid((1,), 1)}, ONE_TYPE)
    assert outcome.x == {"alice": 0, "bob": 1}


@pytest.mark.parametrize("winner", ["alice", "bob"])
def test_price_is_the_critical_value(winner):
    bids = {"alice": Bid((1,), 8), "bob": Bid((1,), 6), "carol": Bid((1,), 3)}
    p = solve(bids, ONE_TYPE).prices[winner]
    above = dict(bids, **{winner: Bid((1,), p + 1)})
    below = dict(bids, **{winner: Bid((1,), p - 1)})
    assert solve(above, ONE_TYPE).x[winner] == 1
    assert solve(below, ONE_TYPE).x[winner] == 0


def test_run_auction_settles_deposits(make_harness, three_bids):
    h = make_harness()
    outcome = h.through_auction(three_bids)
    assert h.session.phase is ContractPhase.PROVIDER_SENDS_GOODS
    assert h.session.states.get(h.addr("alice")) == USER_WINS
    assert h.session.states.get(h.addr("carol")) == USER_FAILS_IN_AUCTION
    assert outcome.prices[h.addr("alice")] == 3
    assert h.balance("alice") == 997
    assert h.balance("carol") == 1000
    assert h.session.escrow.of(h.addr("bob"), EscrowKind.DEPOSIT) == 3
    assert set(h.session.trades) == {h.addr("alice"), h.addr("bob")}


def test_run_auction_runs_once(make_harness, three_bids):
    h = make_harness()
    h.through_auction(three_bids)
    with pytest.raises(Rejected, match="phase mismatch"):
        h.auction.run_auction(h.provider)


def test_single_type_example_with_a_double_bundle(make_harness):
    h = make_harness()
    bids = {"alice": Bid((1,), 10), "bob": Bid((2,), 6), "carol": Bid((1,), 4)}
    outcome = h.through_auction(bids)
    assert [outcome.x[h.addr(n)] for n in bids] == [1, 0, 1]
    assert outcome.prices[h.addr("alice")] == 4
    assert outcome.prices[h.addr("carol")] == 0
    assert outcome.critical[h.addr("alice")] == h.addr("bob")
    assert [h.balance(n) for n in bids] == [996, 1000, 1000]
    assert h.session.escrow.of(h.addr("alice"), EscrowKind.DEPOSIT) == 4
    assert h.session.escrow.of(h.addr("carol"), EscrowKind.DEPOSIT) == 0


def _small_grid(n, m, bundles, prices, weights=(1, 2)):
    for caps, w in product(product(range(4), repeat=m), product(weights, repeat=m)):
        supply = ProviderSupply(caps, w)
        terms = [BidTerms(b, p) for b, p in product(bundles, prices)]
        for bids in product(terms, repeat=n):
            yield list(bids), supply


BUNDLES = {1: [(1,), (2,)], 2: [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2)]}
PRICES = range(1, 7)


@pytest.mark.parametrize("n, m", [(1, 1), (2, 1), (3, 1), (1, 2), (2, 2)])
def test_engine_matches_oracle_on_small_grid(n, m):
    for bids, supply in _small_grid(n, m, BUNDLES[m], PRICES):
        verify(bids, supply)


def test_engine_matches_oracle_three_bidders_two_types():
    bundles = [(1, 0), (0, 1), (1, 1)]
    for bids, supply in _small_grid(3, 2, bundles, (1, 2, 4, 6), weights=(1,)):
        verify(bids, supply)


def test_reference_keeps_list_and_dict_keys():
    x, p = reference_allocate_price([BidTerms((1,), 8), BidTerms((1,), 6), BidTerms((1,), 3)], ONE_TYPE)
    assert x == [1, 1, 0]
    assert p == [3, 3, 0]
    x, p = reference_allocate_price({"a": BidTerms((1,), 8)}, ONE_TYPE)
    assert x == {"a": 1} and p == {"a": 0}


def test_reference_warns_above_soft_limit(caplog):
    bids = [BidTerms((1,), i + 1) for i in range(20)]
    reference_allocate_price(bids, ProviderSupply((5,), (1,)))
    assert "soft limit" in caplog.text


BID = st.tuples(
    st.tuples(st.integers(0, 2), st.integers(0, 2)).filter(any),
    st.integers(1, 20),
).map(lambda t: BidTerms(*t))


@hsettings(max_examples=150, deadline=None)
@given(
    st.lists(BID, max_size=5),
    st.tuples(st.integers(0, 3), st.integers(0, 3)),
    st.tuples(st.integers(1, 3), st.integers(1, 3)),
)
def test_engine_matches_oracle_on_random_auctions(bids, capacities, weights):
    verify(bids, ProviderSupply(capacities, weights))


def test_fuzz_finds_no_mismatch():
    assert fuzz(seed=7, count=200) == []


@hsettings(max_examples=150, deadline=None)
@given(
    st.lists(BID, min_size=1, max_size=5),
    st.tuples(st.integers(0, 3), st.integers(0, 3)),
    st.tuples(st.integers(1, 3), st.integers(1, 3)),
)
def test_rebidding_around_the_price_flips_the_allocation(bids, capacities, weights):
    supply = ProviderSupply(capacities, weights)
    keyed = dict(enumerate(bids))
    outcome = solve(keyed, supply)
    for bidder in outcome.winners():
        p = outcome.prices[bidder]
        if p == 0:
            continue
        bundle = keyed[bidder].bundle
        assert solve({**keyed, bidder: BidTerms(bundle, p + 1)}, supply).x[bidder] == 1
        assert solve({**keyed, bidder: BidTerms(bundle, p - 1)}, supply).x[bidder] == 0
