"""
Ladder payment for sessions without an adjudicator.

Usage time T~ is split into e equal segments. Segment i ends at
T_i = tau4 + i * T~ / e and is acknowledged by confirmation c_i; the chain is
strictly ordered. A winner who got invalid VMs sends one disaffirmation
instead of c_1. Settlement pays the provider floor(i * P / e) for i accepted
confirmations and gives the winner the exact complement.
"""

import logging
from dataclasses import dataclass

from agents.session import EscrowKind, TradeStatus
from agents.states import ContractPhase, ParticipantState
from utils.errors import ConfigurationError
from utils.ledger import EventKind

logger = logging.getLogger(__name__)

LADDER_PHASES = (ContractPhase.PROVIDER_SENDS_GOODS, ContractPhase.TRADING)


def min_segments(price, tolerate):
    """Smallest e that keeps a one-segment loss within the tolerance"""
    if not tolerate:
        return 1
    return max(1, -(-price // tolerate))


def ladder_split(price, e, confirmed):
    """(provider payment, winner remainder) after `confirmed` of e confirmations"""
    if e < 1 or not 0 <= confirmed <= e:
        raise ValueError(f"confirmed must lie in [0, {e}]")
    provider = confirmed * price // e
    return provider, price - provider


@dataclass
class LadderState:
    winner: object
    price: int
    e: int
    usage_total: int
    start: int
    tolerate: int = 0
    confirmed: int = 0
    disaffirmed: bool = False
    settled: bool = False
    provider_payment: int = 0
    winner_remainder: int = 0

    def deadline(self, i):
        return self.start + i * self.usage_total // self.e

    def deadlines(self):
        return [self.deadline(i) for i in range(1, self.e + 1)]

    @property
    def complete(self):
        return self.confirmed == self.e

    def ended(self, now):
        if self.complete or self.disaffirmed:
            return True
        return now > self.deadline(self.confirmed + 1)

    def served_segments(self, grant_valid, active_until=None):
        """Segments an honest provider actually ran: 1 on delivery, k+1 after c_k"""
        if not grant_valid or self.disaffirmed:
            return 0
        served = min(self.e, self.confirmed + 1)
        if active_until is not None:
            served = min(served, active_until)
        return max(0, served)


class LadderTradeAgent:
    """Confirmation chain and pro-rata settlement of one session"""

    def __init__(self, session):
        self.session = session

    def segments_for(self, price):
        params = self.session.ladder_params
        if params is None:
            raise ConfigurationError("session has no ladder parameters")
        e = params.segments_for(price)
        self._check_segments(price, e, params.tolerate)
        return e

    @staticmethod
    def _check_segments(price, e, tolerate):
        if e < 1:
            raise ConfigurationError("e must be at least 1")
        if tolerate and e < min_segments(price, tolerate):
            raise ConfigurationError(
                f"e={e} below ceil(P/P_tolerate)={min_segments(price, tolerate)} for P={price}"
            )

    def init_ladder(self, winner, price, e, usage_total=None, tolerate=None):
        s = self.session
        params = s.ladder_params
        usage_total = usage_total if usage_total is not None else params.usage_total
        tolerate = tolerate if tolerate is not None else (params.tolerate if params else 0)
        self._check_segments(price, e, tolerate)
        if usage_total <= 0:
            raise ConfigurationError("usage_total must be positive")

        ladder = LadderState(winner, price, e, usage_total, s.deadlines.tau4, tolerate)
        s.states.transition(winner, ParticipantState.using(1), f"ladder e={e} T~={usage_total}")
        s.ladders[winner] = ladder
        s.ledger.record(
            EventKind.STATE_CHANGE, s.address, winner,
            note=f"ladder open P={price} e={e} deadlines={ladder.deadlines()}",
        )
        return ladder

    def confirm(self, sender, index):
        s = self.session
        actor = sender.address
        ladder = s.ladders.get(actor)
        if ladder is None:
            s.reject("confirm", actor, "no ladder for this winner")
        i = min(ladder.confirmed + 1, ladder.e)
        s.require(
            "confirm", sender, actor,
            phase=LADDER_PHASES,
            state=ParticipantState.using(i),
            deadline=ladder.deadline(ladder.confirmed + 1),
            extra={"index": index},
            conditions=[
                ("not disaffirmed", lambda _: not ladder.disaffirmed),
                ("ladder not complete", lambda _: not ladder.complete),
                (f"index == {i}", lambda x: x["index"] == i),
            ],
        )
        ladder.confirmed = i
        if i < ladder.e:
            s.states.transition(actor, ParticipantState.using(i + 1), f"c_{i}")
        s.ledger.record(
            EventKind.STATE_CHANGE, actor, s.address,
            note=f"confirm c_{i} i={i}/{ladder.e} deadline={ladder.deadline(i)}",
        )

    def disaffirm(self, sender):
        """One-shot rejection in place of c_1; returns False for a repeat"""
        s = self.session
        actor = sender.address
        ladder = s.ladders.get(actor)
        if ladder is None:
            s.reject("disaffirm", actor, "no ladder for this winner")
        s.require(
            "disaffirm", sender, actor,
            phase=LADDER_PHASES,
            state=ParticipantState.using(1),
            deadline=ladder.deadline(1),
            conditions=[("no confirmation sent", lambda _: ladder.confirmed == 0)],
        )
        if ladder.disaffirmed:
            return False
        ladder.disaffirmed = True
        s.ledger.record(EventKind.STATE_CHANGE, actor, s.address, note="disaffirm c_bar")
        return True

    def settle_ladder(self, caller, winner):
        s = self.session
        ladder = s.ladders.get(winner)
        s.require(
            "settle_ladder", caller, caller.address,
            phase=LADDER_PHASES,
            conditions=[
                ("ladder exists", lambda _: ladder is not None),
                ("not yet settled", lambda _: not ladder.settled),
                ("ladder ended", lambda _: ladder.ended(s.now)),
            ],
        )
        pay, rest = ladder_split(ladder.price, ladder.e, ladder.confirmed)
        if pay:
            s.release(s.provider.addr, [(winner, EscrowKind.DEPOSIT, pay)],
                      f"ladder payment i*P/e={pay} i={ladder.confirmed} e={ladder.e}")
        if rest:
            s.release(winner, [(winner, EscrowKind.DEPOSIT, rest)], f"ladder remainder P-paid={rest}")
        ladder.settled = True
        ladder.provider_payment, ladder.winner_remainder = pay, rest

        trade = s.trades[winner]
        trade.paid_to_provider = pay
        trade.returned_to_winner = rest
        trade.status = TradeStatus.PAID
        logger.info("sid %s: ladder of %s settled %d/%d", s.sid, winner.short(), pay, rest)
        return pay, rest
