import pytest

from agents.ladder import LadderState, LadderTradeAgent, ladder_split, min_segments
from agents.models import Bid, LadderParams
from agents.session import TradeStatus
from agents.states import ContractPhase, ParticipantState
from utils.errors import ConfigurationError, Rejected

LADDER_BIDS = {"alice": Bid((1,), 20), "bob": Bid((1,), 15), "carol": Bid((1,), 10)}


@pytest.fixture
def laddered(make_harness):
    """alice and bob pay P=10 on a five-segment ladder over 50 ticks"""
    h = make_harness(adjudicated=False, ladder_params=LadderParams(50, segments=5))
    h.through_auction(LADDER_BIDS)
    for name in ("alice", "bob"):
        h.trade.provider_deliver(h.provider, h.addr(name), h.grant(name))
    return h


def test_delivery_opens_the_ladder(laddered):
    h = laddered
    ladder = h.session.ladders[h.addr("alice")]
    assert (ladder.price, ladder.e) == (10, 5)
    assert ladder.deadlines() == [50, 60, 70, 80, 90]
    assert h.session.states.get(h.addr("alice")) == ParticipantState.using(1)
    assert h.session.trades[h.addr("alice")].status is TradeStatus.LADDER
    assert h.session.phase is ContractPhase.TRADING


def test_segments_follow_the_tolerance(make_harness):
    h = make_harness(adjudicated=False, ladder_params=LadderParams(50, tolerate=2))
    assert LadderTradeAgent(h.session).segments_for(10) == 5
    assert min_segments(10, 3) == 4
    with pytest.raises(ConfigurationError, match="e=4 below"):
        LadderTradeAgent._check_segments(10, 4, 2)


def test_delivery_with_too_few_segments_is_rejected(make_harness):
    h = make_harness(adjudicated=False, ladder_params=LadderParams(50, segments=4, tolerate=2))
    h.through_auction(LADDER_BIDS)
    with pytest.raises(Rejected, match="e=4 below"):
        h.trade.provider_deliver(h.provider, h.addr("alice"), h.grant("alice"))
    assert h.session.trades[h.addr("alice")].status is TradeStatus.AWAITING_DELIVERY


def test_ladder_params_validation():
    with pytest.raises(ConfigurationError):
        LadderParams(0, segments=5)
    with pytest.raises(ConfigurationError):
        LadderParams(50)
    with pytest.raises(ConfigurationError):
        LadderParams(50, segments=0)


def test_confirmations_are_strictly_ordered(laddered):
    h = laddered
    alice = h.users["alice"]
    with pytest.raises(Rejected, match="index == 1"):
        h.ladder.confirm(alice, 2)
    h.ledger.advance_time(45)
    h.ladder.confirm(alice, 1)
    assert h.session.states.get(h.addr("alice")) == ParticipantState.using(2)
    with pytest.raises(Rejected, match="index == 2"):
        h.ladder.confirm(alice, 3)


def test_confirmation_after_its_deadline_is_rejected(laddered):
    h = laddered
    alice = h.users["alice"]
    h.ladder.confirm(alice, 1)
    h.ledger.advance_time(61)
    with pytest.raises(Rejected, match="deadline"):
        h.ladder.confirm(alice, 2)
    assert h.session.ladders[h.addr("alice")].ended(h.ledger.now)


def test_full_chain_pays_the_whole_price(laddered):
    h = laddered
    alice = h.users["alice"]
    for i in range(1, 6):
        h.ladder.confirm(alice, i)
    with pytest.raises(Rejected, match="ladder not complete"):
        h.ladder.confirm(alice, 5)
    assert h.ladder.settle_ladder(alice, h.addr("alice")) == (10, 0)
    assert h.session.trades[h.addr("alice")].status is TradeStatus.PAID


def test_partial_chain_splits_pro_rata(laddered):
    h = laddered
    bob = h.users["bob"]
    for i in range(1, 4):
        h.ladder.confirm(bob, i)
    with pytest.raises(Rejected, match="ladder ended"):
        h.ladder.settle_ladder(bob, h.addr("bob"))
    h.ledger.advance_time(81)
    assert h.ladder.settle_ladder(bob, h.addr("bob")) == (6, 4)
    with pytest.raises(Rejected, match="not yet settled"):
        h.ladder.settle_ladder(bob, h.addr("bob"))


def test_disaffirm_is_one_shot_and_blocks_confirmations(laddered):
    h = laddered
    alice = h.users["alice"]
    assert h.ladder.disaffirm(alice) is True
    assert h.ladder.disaffirm(alice) is False
    with pytest.raises(Rejected, match="not disaffirmed"):
        h.ladder.confirm(alice, 1)
    assert h.ladder.settle_ladder(h.provider, h.addr("alice")) == (0, 10)
    assert h.balance("alice") == 1000


def test_disaffirm_after_a_confirmation_is_rejected(laddered):
    h = laddered
    bob = h.users["bob"]
    h.ladder.confirm(bob, 1)
    with pytest.raises(Rejected, match="state mismatch"):
        h.ladder.disaffirm(bob)


def test_finalize_after_every_ladder_settles(laddered):
    h = laddered
    for name in ("alice", "bob"):
        for i in range(1, 6):
            h.ladder.confirm(h.users[name], i)
    with pytest.raises(Rejected, match="service period ended"):
        h.trade.finalize_trade(h.provider)
    for name in ("alice", "bob"):
        h.ladder.settle_ladder(h.users[name], h.addr(name))
    assert h.trade.finalize_trade(h.provider) == 0
    assert h.session.phase is ContractPhase.SETTLED
    assert h.ledger.balance(h.provider.address) == 1020
    assert h.ledger.balance(h.session.address) == 0


def test_served_segments():
    ladder = LadderState("w", 10, 5, 50, 40, confirmed=2)
    assert ladder.served_segments(True) == 3
    assert ladder.served_segments(True, active_until=2) == 2
    assert ladder.served_segments(False) == 0
    ladder.disaffirmed = True
    assert ladder.served_segments(True) == 0


def test_split_rejects_out_of_range():
    with pytest.raises(ValueError):
        ladder_split(10, 5, 6)
    with pytest.raises(ValueError):
        ladder_split(10, 0, 0)


def test_split_bounds_every_loss_by_one_segment():
    for price in range(1, 21):
        for e in range(1, 11):
            segment = -(-price // e)
            for i in range(e + 1):
                pay, rest = ladder_split(price, e, i)
                assert pay + rest == price
                assert 0 <= i * price - pay * e < e
                # honest provider ran min(i + 1, e) segments and got paid for i
                assert min(i + 1, e) * price // e - pay <= segment


def test_derived_segments_keep_the_loss_within_tolerance():
    for price in range(1, 21):
        for tolerate in range(1, 6):
            e = min_segments(price, tolerate)
            for i in range(e + 1):
                pay, _ = ladder_split(price, e, i)
                assert min(i + 1, e) * price // e - pay <= tolerate
