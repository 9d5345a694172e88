"""
Adjudicated trade: grant delivery before tau4, compensation on default,
disputes settled by the pinned adjudicator before tau5, final settlement.
"""

import logging
from dataclasses import dataclass

from agents.session import EscrowKind, TradeStatus
from agents.states import (
    PROVIDER_INIT,
    PROVIDER_SENT_GOODS,
    USER_RECEIVED_GOODS,
    USER_WINS,
    WRONG_GOODS,
    ContractPhase,
    ParticipantState,
)
from utils.errors import ConfigurationError, LedgerError
from utils.ledger import EventKind
from utils.sealing import SealedGrant

logger = logging.getLogger(__name__)

DELIVERY_PHASES = (ContractPhase.PROVIDER_SENDS_GOODS, ContractPhase.TRADING, ContractPhase.DISPUTE)


@dataclass(frozen=True)
class VMGrant:
    """G: permission information for the VM instances of one winner"""

    recipient: object
    bundle: tuple
    config_ok: bool = True
    active_until_segment: int = None

    def valid_for(self, bundle):
        return tuple(self.bundle) == tuple(bundle) and bool(self.config_ok)

    def active_through(self, segment):
        return self.active_until_segment is None or segment <= self.active_until_segment


@dataclass(frozen=True)
class Verdict:
    winner: object
    valid: bool
    refund: int = 0
    compensation: int = 0
    reason: str = ""


class AdjudicatedTradeAgent:
    """Trade and dispute phases of one session"""

    def __init__(self, session):
        self.session = session

    def _trade(self, winner):
        return self.session.trades.get(winner)

    # ------------------------------------------------------------------
    # Delivery
    # ------------------------------------------------------------------

    def provider_deliver(self, sender, winner, sealed):
        s = self.session
        trade = self._trade(winner)
        s.require(
            "provider_deliver", sender, s.provider.addr,
            phase=DELIVERY_PHASES,
            state=PROVIDER_INIT,
            deadline=s.deadlines.tau4,
            extra={"winner": winner, "sealed": sealed},
            conditions=[
                ("winner awaits delivery",
                 lambda x: trade is not None and trade.status is TradeStatus.AWAITING_DELIVERY),
                ("winner in UserWinsAtTheAuction",
                 lambda x: x["winner"] in s.states and s.states.get(x["winner"]) == USER_WINS),
                ("sealed for the winner", lambda x: x["sealed"].recipient == x["winner"]),
            ],
        )

        if not s.adjudicated:
            from agents.ladder import LadderTradeAgent
            ladder_agent = LadderTradeAgent(s)
            try:
                segments = ladder_agent.segments_for(trade.price)
            except ConfigurationError as exc:
                s.reject("provider_deliver", s.provider.addr, str(exc))
            trade.grant = sealed
            trade.status = TradeStatus.LADDER
            ladder_agent.init_ladder(winner, trade.price, segments)
        else:
            trade.grant = sealed
            trade.status = TradeStatus.DELIVERED
            s.states.transition(winner, USER_RECEIVED_GOODS, "sealed grant picked up")

        s.mark_provider_served()
        if s.all_served() and s.phase is ContractPhase.PROVIDER_SENDS_GOODS:
            s.set_phase(ContractPhase.TRADING, "all winners served")

    def default_settlement(self, caller):
        """After tau4: every unserved winner gets P_j + beta * S_j"""
        s = self.session
        unserved = [t for t in s.trades.values() if t.status is TradeStatus.AWAITING_DELIVERY]
        s.require(
            "default_settlement", caller, caller.address,
            phase=DELIVERY_PHASES,
            conditions=[
                ("now > tau4", lambda _: s.now > s.deadlines.tau4),
                ("some winner unserved", lambda _: bool(unserved)),
            ],
        )
        provider = s.provider.addr
        total = 0
        for trade in unserved:
            comp = s.provider.base_price * trade.size
            self._check_sufficiency(comp)
            trade.compensation = comp
            trade.returned_to_winner = s.release(
                trade.winner,
                [(trade.winner, EscrowKind.DEPOSIT, trade.price), (provider, EscrowKind.PROVIDER_DEPOSIT, comp)],
                f"default: refund P={trade.price} + compensation beta*S_j={comp}",
            )
            trade.status = TradeStatus.COMPENSATED
            total += comp
        logger.info("sid %s: %d winners compensated, %d from provider deposit", s.sid, len(unserved), total)

        s.mark_provider_served()
        if s.phase is ContractPhase.PROVIDER_SENDS_GOODS:
            s.set_phase(ContractPhase.TRADING, "delivery deadline passed")
        return total

    def _check_sufficiency(self, compensation):
        s = self.session
        held = s.escrow.of(s.provider.addr, EscrowKind.PROVIDER_DEPOSIT)
        if compensation > held:
            raise LedgerError(f"compensation {compensation} exceeds provider deposit {held}")

    # ------------------------------------------------------------------
    # Disputes
    # ------------------------------------------------------------------

    def raise_dispute(self, sender):
        s = self.session
        actor = sender.address
        trade = self._trade(actor)
        s.require(
            "raise_dispute", sender, actor,
            phase=DELIVERY_PHASES,
            state=USER_RECEIVED_GOODS,
            deadline=s.deadlines.tau5,
            conditions=[
                ("adjudicated session", lambda _: s.adjudicated),
                ("grant received", lambda _: trade is not None and trade.grant is not None),
            ],
        )
        s.states.transition(actor, WRONG_GOODS, "winner appeals to the adjudicator")
        trade.status = TradeStatus.DISPUTED
        s.set_phase(ContractPhase.DISPUTE, f"dispute by {actor.short()}")

    def provider_reseal(self, sender, winner, sealed):
        """Provider submits E_pkA(G) for a disputed trade"""
        s = self.session
        trade = self._trade(winner)
        s.require(
            "provider_reseal", sender, s.provider.addr,
            phase=ContractPhase.DISPUTE,
            deadline=s.deadlines.tau5,
            extra={"sealed": sealed},
            conditions=[
                ("trade disputed", lambda _: trade is not None and trade.open_dispute),
                ("sealed for the adjudicator", lambda x: x["sealed"].recipient == s.adjudicator),
                ("not yet resealed", lambda _: winner not in s.reseals),
            ],
        )
        s.reseals[winner] = sealed
        s.ledger.record(
            EventKind.STATE_CHANGE, s.provider.addr, s.address,
            note=f"reseal for {winner.short()} fp={sealed.fingerprint(s.ledger.settings)}",
        )

    def adjudicate(self, sender, winner, resealed=None):
        s = self.session
        trade = self._trade(winner)
        s.require(
            "adjudicate", sender, s.adjudicator,
            phase=ContractPhase.DISPUTE,
            extra={"resealed": resealed},
            conditions=[
                ("trade disputed",
                 lambda _: trade is not None and trade.open_dispute and s.states.get(winner) == WRONG_GOODS),
                ("provider in ProviderSentGoods",
                 lambda _: s.states.get(s.provider.addr) == PROVIDER_SENT_GOODS),
                ("sealed for the adjudicator",
                 lambda x: x["resealed"] is None or x["resealed"].recipient == s.adjudicator),
            ],
        )
        resealed = resealed or s.reseals.get(winner)
        if resealed is None:
            if s.now <= s.deadlines.tau5:
                s.reject("adjudicate", s.adjudicator, "awaiting provider reseal before tau5")
            verdict = self._refund(trade, "provider silent past tau5")
        else:
            grant = resealed.open(s.adjudicator)
            if grant.valid_for(trade.bundle):
                verdict = self._uphold(trade, grant)
            else:
                verdict = self._refund(trade, "grant does not meet the bid")

        if not any(t.open_dispute for t in s.trades.values()):
            s.ledger.record(EventKind.STATE_CHANGE, s.address, s.address, note="all disputes resolved")
        return verdict

    def _refund(self, trade, reason):
        s = self.session
        comp = s.provider.base_price * trade.size
        self._check_sufficiency(comp)
        trade.compensation = comp
        trade.returned_to_winner = s.release(
            trade.winner,
            [(trade.winner, EscrowKind.DEPOSIT, trade.price), (s.provider.addr, EscrowKind.PROVIDER_DEPOSIT, comp)],
            f"verdict invalid ({reason}): refund P={trade.price} + compensation beta*S_j={comp}",
        )
        trade.status = TradeStatus.REFUNDED
        logger.info("sid %s: dispute of %s upheld, %s", s.sid, trade.winner.short(), reason)
        return Verdict(trade.winner, False, trade.price, comp, reason)

    def _uphold(self, trade, grant):
        s = self.session
        trade.final_grant = SealedGrant(trade.winner, grant)
        trade.status = TradeStatus.RESOLVED
        s.states.transition(trade.winner, ParticipantState.using(1), "verdict valid: grant forwarded")
        logger.info("sid %s: dispute of %s rejected, grant is valid", s.sid, trade.winner.short())
        return Verdict(trade.winner, True, reason="grant meets the bid")

    # ------------------------------------------------------------------
    # Settlement
    # ------------------------------------------------------------------

    def finalize_trade(self, caller):
        """Pay the provider for every undisputed trade and close the session"""
        s = self.session
        s.require(
            "finalize_trade", caller, caller.address,
            phase=DELIVERY_PHASES,
            conditions=[
                ("no open dispute", lambda _: not any(t.open_dispute for t in s.trades.values())),
                ("every winner served or compensated", lambda _: s.all_served()),
                ("service period ended",
                 lambda _: s.now > s.deadlines.tau5 if s.adjudicated else s.all_ladders_settled()),
            ],
        )
        provider = s.provider.addr
        revenue = 0
        for trade in s.trades.values():
            if trade.status in (TradeStatus.DELIVERED, TradeStatus.RESOLVED):
                # Silence counts as satisfaction
                s.release(provider, [(trade.winner, EscrowKind.DEPOSIT, trade.price)],
                          f"payment P={trade.price} from {trade.winner.short()}")
                trade.paid_to_provider = trade.price
                trade.status = TradeStatus.PAID
                revenue += trade.price

        sources = [(provider, kind, s.escrow.of(provider, kind))
                   for kind in (EscrowKind.PROVIDER_DEPOSIT, EscrowKind.POOL)]
        sources = [src for src in sources if src[2]]
        returned = s.release(provider, sources, "provider deposit back") if sources else 0
        if s.escrow.total():
            raise LedgerError(f"escrow still holds {s.escrow.total()} after settlement")

        s.set_phase(ContractPhase.SETTLED)
        logger.info("sid %s: settled, provider revenue %d, deposit back %d", s.sid, revenue, returned)
        return revenue
