"""
One auction-and-trade instance (sid): contract phase, deadlines, state table
and the escrow book that mirrors the contract account's balance.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

from agents.states import (
    PROVIDER_INIT,
    PROVIDER_SENT_GOODS,
    USER_INIT,
    USER_SENT_COMMITMENT,
    ContractPhase,
    GuardEnv,
    StateTable,
    check_guard,
)
from utils.errors import LedgerError, Rejected
from utils.ledger import EventKind

logger = logging.getLogger(__name__)


class EscrowKind(str, Enum):
    GUARANTY = "guaranty"
    DEPOSIT = "deposit"
    POOL = "pool"
    PROVIDER_DEPOSIT = "provider_deposit"


class TradeStatus(str, Enum):
    AWAITING_DELIVERY = "awaiting_delivery"
    DELIVERED = "delivered"
    DISPUTED = "disputed"
    RESOLVED = "resolved"
    REFUNDED = "refunded"
    COMPENSATED = "compensated"
    LADDER = "ladder"
    PAID = "paid"


@dataclass
class Trade:
    """Per-winner trade bookkeeping after the auction"""

    winner: object
    bundle: tuple
    price: int
    size: int
    status: TradeStatus = TradeStatus.AWAITING_DELIVERY
    grant: object = None
    final_grant: object = None
    paid_to_provider: int = 0
    returned_to_winner: int = 0
    compensation: int = 0

    @property
    def open_dispute(self):
        return self.status is TradeStatus.DISPUTED


@dataclass
class EscrowBook:
    """Who the contract's coins belong to, by (owner, kind)"""

    entries: dict = field(default_factory=dict)

    def add(self, owner, kind, amount):
        key = (owner, kind)
        self.entries[key] = self.entries.get(key, 0) + amount

    def take(self, owner, kind, amount):
        held = self.entries.get((owner, kind), 0)
        if amount > held:
            raise LedgerError(f"escrow {kind.value} of {owner.short()} holds {held}, needs {amount}")
        self.entries[(owner, kind)] = held - amount

    def of(self, owner, kind):
        return self.entries.get((owner, kind), 0)

    def total(self):
        return sum(self.entries.values())


class ContractSession:
    """The smart contract SC for one sid"""

    def __init__(self, ledger, sid, provider, guaranty, deadlines, adjudicator,
                 adjudicated=True, contract=None, ladder_params=None):
        self.ledger = ledger
        self.sid = sid
        self.provider = provider
        self.guaranty = guaranty
        self.deadlines = deadlines
        self.adjudicator = adjudicator
        self.adjudicated = adjudicated
        self.ladder_params = ladder_params
        self.contract = contract or ledger.create_contract(
            f"{ledger.settings.contract_seed}:{sid}"
        )

        self.phase = ContractPhase.USER_SENDS_COMMITMENT
        self.states = StateTable(ledger, self.contract.address)
        self.states.register(provider.addr, PROVIDER_INIT)
        self.escrow = EscrowBook()

        self.users = []
        self.commitments = {}
        self.provider_funded = False
        self.refunds_settled = False
        self.refund_plan = None
        self.outcome = None
        self.trades = {}
        self.ladders = {}
        self.reseals = {}

    @property
    def address(self):
        return self.contract.address

    @property
    def now(self):
        return self.ledger.now

    # ------------------------------------------------------------------
    # Setup
    # ------------------------------------------------------------------

    def join(self, address):
        """Register a user for this sid in UserInitState"""
        if self.phase is not ContractPhase.USER_SENDS_COMMITMENT:
            self.reject("join", address, "session no longer accepts participants")
        self.states.register(address, USER_INIT)
        self.users.append(address)

    def fund_provider(self, provider):
        """Escrow beta * sum k_i w_i from the provider"""
        self.require(
            "fund_provider", provider, provider.address,
            phase=ContractPhase.USER_SENDS_COMMITMENT,
            state=PROVIDER_INIT,
            conditions=[("deposit not yet funded", lambda _: not self.provider_funded)],
        )
        self.collect(provider, self.provider.deposit, EscrowKind.PROVIDER_DEPOSIT, "provider deposit")
        self.provider_funded = True

    # ------------------------------------------------------------------
    # Guard and escrow plumbing
    # ------------------------------------------------------------------

    def require(self, action, sender, actor, phase=None, state=None, deadline=None,
                extra=None, conditions=()):
        """Evaluate the guard; record a Reject event and raise if refused"""
        env = GuardEnv(
            sid=self.sid,
            contract_addr=self.address,
            actor_addr=actor,
            sender_addr=self.ledger.sender_of(sender.seed),
            contract_phase=self.phase,
            actor_state=self.states.get(actor) if actor in self.states else None,
            now=self.now,
            deadline=deadline,
            required_phase=phase,
            required_state=state,
            extra=extra or {},
            extra_conditions=tuple(conditions),
            action=action,
        )
        verdict = check_guard(env)
        logger.debug("guard %s for %s: %s", action, actor.short(), verdict.reason or "admit")
        if not verdict:
            self.reject(action, actor, verdict.reason)
        return verdict

    def reject(self, action, actor, reason):
        self.ledger.record(EventKind.REJECT, actor or self.address, self.address, note=f"{action}: {reason}")
        raise Rejected(f"{action}: {reason}")

    def collect(self, sender, amount, kind, note):
        """Pull `amount` from sender into escrow under (sender, kind)"""
        event = self.ledger.transfer(sender.address, self.address, amount, sender.seed, note)
        if event.kind is EventKind.REJECT:
            raise Rejected(f"{note}: insufficient balance")
        self.escrow.add(sender.address, kind, amount)
        self._check_escrow()

    def release(self, recipient, sources, note):
        """Pay recipient from escrow; sources is [(owner, kind, amount)]"""
        amount = sum(a for _, _, a in sources)
        for owner, kind, part in sources:
            self.escrow.take(owner, kind, part)
        if amount:
            self.ledger.transfer(self.address, recipient, amount, self.contract.seed, note)
        self._check_escrow()
        return amount

    def move_escrow(self, owner, kind, new_owner, new_kind, amount):
        self.escrow.take(owner, kind, amount)
        self.escrow.add(new_owner, new_kind, amount)

    def _check_escrow(self):
        if self.escrow.total() != self.ledger.balance(self.address):
            raise LedgerError("escrow book disagrees with contract balance")

    # ------------------------------------------------------------------
    # Phases
    # ------------------------------------------------------------------

    def set_phase(self, phase, note=""):
        if self.phase.terminal:
            raise LedgerError(f"phase {self.phase.value} is terminal")
        if phase is not ContractPhase.ABORTED and phase.rank < self.phase.rank:
            raise LedgerError(f"phase cannot move back from {self.phase.value} to {phase.value}")
        if phase is self.phase:
            return
        self.ledger.record(
            EventKind.STATE_CHANGE, self.address, self.address,
            note=f"phase {self.phase.value} -> {phase.value}" + (f" ({note})" if note else ""),
        )
        logger.info("sid %s: phase %s -> %s", self.sid, self.phase.value, phase.value)
        self.phase = phase

    def all_committed(self):
        return not self.states.in_state(USER_INIT)

    def all_opened(self):
        return not self.states.in_state(USER_SENT_COMMITMENT)

    def all_served(self):
        return all(t.status is not TradeStatus.AWAITING_DELIVERY for t in self.trades.values())

    def phase_advance(self, caller=None, expected_from=None):
        """Move one step along the timeline if all acted or the deadline passed"""
        if expected_from is not None and self.phase is not expected_from:
            if self.phase.terminal or self.phase.rank > expected_from.rank:
                return self.phase

        now, d = self.now, self.deadlines
        who = caller.address if caller is not None else None
        phase = self.phase

        if phase is ContractPhase.USER_SENDS_COMMITMENT:
            if self.all_committed() or now > d.tau1:
                self.set_phase(ContractPhase.USER_OPENS_COMMITMENT)
                return self.phase
        elif phase is ContractPhase.USER_OPENS_COMMITMENT:
            if self.all_opened() or now > d.tau2:
                self.set_phase(ContractPhase.AUCTION)
                return self.phase
        elif phase is ContractPhase.AUCTION:
            if now > d.tau3:
                self.set_phase(ContractPhase.ABORTED, "auction never ran before tau3")
                return self.phase
        elif phase is ContractPhase.PROVIDER_SENDS_GOODS:
            if self.all_served() or now > d.tau4:
                self.set_phase(ContractPhase.TRADING)
                return self.phase

        self.reject("phase_advance", who, f"trigger condition not met in {phase.value}")

    def advance_if_all_acted(self):
        """All-acted advances immediately; deadlines need an explicit poke"""
        if self.phase is ContractPhase.USER_SENDS_COMMITMENT and self.users and self.all_committed():
            self.set_phase(ContractPhase.USER_OPENS_COMMITMENT, "all users committed")
        if self.phase is ContractPhase.USER_OPENS_COMMITMENT and self.all_opened():
            self.set_phase(ContractPhase.AUCTION, "all commitments opened")

    def all_ladders_settled(self):
        return all(ladder.settled for ladder in self.ladders.values())

    def mark_provider_served(self):
        """delta_p -> ProviderSentGoods once no winner awaits delivery"""
        if self.all_served() and self.states.get(self.provider.addr) == PROVIDER_INIT:
            if any(t.grant is not None for t in self.trades.values()):
                self.states.transition(self.provider.addr, PROVIDER_SENT_GOODS)
