"""
State mechanism: participant states, contract phases and the guard rule.

An action is admitted iff the sender is the actor, the contract is in the
required phase, the actor is in the required state, the deadline has not
passed and the action's extra predicate holds.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

from utils.errors import IllegalTransition, UnknownActor
from utils.ledger import EventKind

logger = logging.getLogger(__name__)


class StateName(str, Enum):
    USER_INIT = "UserInitState"
    USER_SENT_COMMITMENT = "UserSentCommitment"
    USER_OPENED_COMMITMENT = "UserOpenedCommitment"
    USER_FAILS_TO_OPEN = "UserFailsToOpenCommitment"
    USER_WINS = "UserWinsAtTheAuction"
    USER_FAILS_IN_AUCTION = "UserFailsInTheAuction"
    USER_RECEIVED_GOODS = "UserReceivedGoods"
    WRONG_GOODS = "WrongGoods"
    USING = "Using"
    PROVIDER_INIT = "ProviderInitState"
    PROVIDER_SENT_GOODS = "ProviderSentGoods"


@dataclass(frozen=True)
class ParticipantState:
    name: StateName
    segment: int = 0

    @classmethod
    def using(cls, segment):
        if segment < 1:
            raise ValueError("Using(i) needs i >= 1")
        return cls(StateName.USING, segment)

    def __str__(self):
        if self.name is StateName.USING:
            return f"Using({self.segment})"
        return self.name.value


USER_INIT = ParticipantState(StateName.USER_INIT)
USER_SENT_COMMITMENT = ParticipantState(StateName.USER_SENT_COMMITMENT)
USER_OPENED_COMMITMENT = ParticipantState(StateName.USER_OPENED_COMMITMENT)
USER_FAILS_TO_OPEN = ParticipantState(StateName.USER_FAILS_TO_OPEN)
USER_WINS = ParticipantState(StateName.USER_WINS)
USER_FAILS_IN_AUCTION = ParticipantState(StateName.USER_FAILS_IN_AUCTION)
USER_RECEIVED_GOODS = ParticipantState(StateName.USER_RECEIVED_GOODS)
WRONG_GOODS = ParticipantState(StateName.WRONG_GOODS)
PROVIDER_INIT = ParticipantState(StateName.PROVIDER_INIT)
PROVIDER_SENT_GOODS = ParticipantState(StateName.PROVIDER_SENT_GOODS)

# to: from
_EDGES = {
    StateName.USER_SENT_COMMITMENT: {StateName.USER_INIT},
    StateName.USER_OPENED_COMMITMENT: {StateName.USER_SENT_COMMITMENT},
    StateName.USER_FAILS_TO_OPEN: {StateName.USER_SENT_COMMITMENT},
    StateName.USER_WINS: {StateName.USER_OPENED_COMMITMENT},
    StateName.USER_FAILS_IN_AUCTION: {StateName.USER_OPENED_COMMITMENT},
    StateName.USER_RECEIVED_GOODS: {StateName.USER_WINS},
    StateName.WRONG_GOODS: {StateName.USER_RECEIVED_GOODS},
    StateName.PROVIDER_SENT_GOODS: {StateName.PROVIDER_INIT},
}
_USING_ENTRY = {StateName.USER_WINS, StateName.WRONG_GOODS}


def is_edge(source, target):
    """True iff source -> target is an edge of the participant state graph"""
    if target.name is StateName.USING:
        if target.segment == 1:
            return source.name in _USING_ENTRY
        return source.name is StateName.USING and source.segment == target.segment - 1
    return source.name in _EDGES.get(target.name, set())


class ContractPhase(str, Enum):
    USER_SENDS_COMMITMENT = "UserSendsCommitment"
    USER_OPENS_COMMITMENT = "UserOpensCommitment"
    AUCTION = "Auction"
    PROVIDER_SENDS_GOODS = "ProviderSendsGoods"
    TRADING = "Trading"
    DISPUTE = "Dispute"
    SETTLED = "Settled"
    ABORTED = "Aborted"

    @property
    def rank(self):
        return _PHASE_RANK[self]

    @property
    def terminal(self):
        return self in (ContractPhase.SETTLED, ContractPhase.ABORTED)


_PHASE_RANK = {phase: i for i, phase in enumerate(ContractPhase)}


@dataclass
class GuardEnv:
    """Everything the guard needs to judge one action"""

    sid: int
    contract_addr: object
    actor_addr: object
    sender_addr: object
    contract_phase: ContractPhase
    actor_state: object
    now: int
    deadline: object = None
    required_phase: object = None
    required_state: object = None
    extra: dict = field(default_factory=dict)
    extra_conditions: tuple = ()
    action: str = ""


@dataclass(frozen=True)
class GuardVerdict:
    admitted: bool
    reason: str = ""

    def __bool__(self):
        return self.admitted


ADMIT = GuardVerdict(True)


def check_guard(env):
    """Admit iff sender, phase, state, deadline and extra conditions all hold"""
    if env.sender_addr != env.actor_addr:
        return GuardVerdict(False, "sender is not the actor")

    if env.required_phase is not None:
        allowed = _as_tuple(env.required_phase)
        if env.contract_phase not in allowed:
            wanted = "|".join(p.value for p in allowed)
            return GuardVerdict(False, f"phase mismatch: {env.contract_phase.value} != {wanted}")

    if env.required_state is not None:
        allowed = _as_tuple(env.required_state)
        if env.actor_state not in allowed:
            wanted = "|".join(str(s) for s in allowed)
            return GuardVerdict(False, f"state mismatch: {env.actor_state} != {wanted}")

    if env.deadline is not None and env.now > env.deadline:
        return GuardVerdict(False, f"deadline: now {env.now} > {env.deadline}")

    # extra_conditions: (label, predicate over extra)
    for label, predicate in env.extra_conditions:
        if not predicate(env.extra):
            return GuardVerdict(False, f"extra condition failed: {label}")

    return ADMIT


def _as_tuple(value):
    if isinstance(value, (tuple, list, set, frozenset)):
        return tuple(value)
    return (value,)


class StateTable:
    """delta_j per address for one session"""

    def __init__(self, ledger, contract_addr):
        self.ledger = ledger
        self.contract_addr = contract_addr
        self._states = {}
        self.history = []

    def register(self, address, initial):
        if address in self._states:
            raise IllegalTransition(f"{address} already registered in this session")
        self._states[address] = initial

    def __contains__(self, address):
        return address in self._states

    def get(self, address):
        try:
            return self._states[address]
        except KeyError:
            raise UnknownActor(f"{address} has not joined this session") from None

    def addresses(self):
        return list(self._states)

    def in_state(self, *states):
        return [a for a, s in self._states.items() if s in states]

    def transition(self, actor, to, note=""):
        """Move actor to `to`; emits a StateChange event"""
        current = self.get(actor)
        if not is_edge(current, to):
            raise IllegalTransition(f"{actor.short()}: {current} -> {to} is not an edge")
        self._states[actor] = to
        self.history.append((actor, current, to))
        self.ledger.record(
            EventKind.STATE_CHANGE, self.contract_addr, actor,
            note=f"{current} -> {to}" + (f" ({note})" if note else ""),
        )
        logger.debug("%s %s -> %s", actor.short(), current, to)
