"""
Deterministic single-chain ledger simulation.

Accounts hold integer coin balances; contract accounts hold escrow. Every
balance mutation appends exactly one event, so folding the event log over the
genesis balances reproduces the live balances. Logical time only moves
forward.
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum

from utils.config import load_settings
from utils.errors import (
    AddressCollision,
    AuthenticationError,
    LedgerError,
    NonceLengthError,
    TimeRewindError,
    UnknownAccount,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class Address:
    """20-byte account identifier derived from a seed"""

    value: bytes

    def hex(self):
        return "0x" + self.value.hex()

    def short(self):
        return "0x" + self.value[:4].hex()

    def __str__(self):
        return self.hex()


@dataclass(frozen=True)
class Hash256:
    value: bytes

    def hex(self):
        return self.value.hex()

    def __bool__(self):
        return bool(self.value)


@dataclass(frozen=True)
class Account:
    """A key pair stand-in: the address plus the seed that authenticates it"""

    address: Address
    seed: bytes


class EventKind(str, Enum):
    TRANSFER = "Transfer"
    ESCROW_IN = "EscrowIn"
    ESCROW_OUT = "EscrowOut"
    STATE_CHANGE = "StateChange"
    REJECT = "Reject"


MONETARY_KINDS = (EventKind.TRANSFER, EventKind.ESCROW_IN, EventKind.ESCROW_OUT)


@dataclass(frozen=True)
class LedgerEvent:
    seq: int
    kind: EventKind
    sender: Address
    recipient: Address
    amount: int
    at: int
    note: str = ""

    @property
    def moves_coins(self):
        return self.kind in MONETARY_KINDS

    def to_dict(self):
        return {
            "seq": self.seq,
            "kind": self.kind.value,
            "from": self.sender.hex(),
            "to": self.recipient.hex(),
            "amount": self.amount,
            "at": self.at,
            "note": self.note,
        }

    def to_line(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def derive_address(seed, settings):
    """Address = truncated digest of the identity seed"""
    if not seed:
        raise ValueError("seed must be non-empty")
    return Address(settings.digest(b"addr|" + seed)[: settings.address_bytes])


def commit_hash(bid_bytes, nonce, addr, sid, settings):
    """h_j = H(bid || nonce || addr || sid); nonce must be lambda/8 bytes"""
    if len(nonce) != settings.nonce_bytes:
        raise NonceLengthError(
            f"nonce is {len(nonce)} bytes, expected {settings.nonce_bytes}"
        )
    # bid_bytes is the only variable-width field and it comes first
    payload = bytes(bid_bytes) + bytes(nonce) + addr.value + int(sid).to_bytes(8, "big")
    return Hash256(settings.digest(payload))


class Ledger:
    """Balances, escrow accounts, logical time and the audit log"""

    def __init__(self, settings=None):
        self.settings = settings or load_settings()
        self.balances = {}
        self.genesis = {}
        self.contracts = set()
        self.events = []
        self._now = 0
        self._supply = 0

    @property
    def now(self):
        return self._now

    # ------------------------------------------------------------------
    # Accounts
    # ------------------------------------------------------------------

    def create_account(self, seed, initial_balance=0):
        """Open an account; the address is derived from the seed"""
        seed = _as_bytes(seed)
        if initial_balance < 0:
            raise LedgerError("initial balance must be non-negative")
        address = derive_address(seed, self.settings)
        if address in self.balances:
            raise AddressCollision(f"account {address} already exists")

        self.balances[address] = int(initial_balance)
        self.genesis[address] = int(initial_balance)
        self._supply += int(initial_balance)
        logger.debug("account %s opened with %d", address.short(), initial_balance)
        return Account(address, seed)

    def create_contract(self, seed):
        """Open a contract account; its balance is escrow"""
        account = self.create_account(seed, 0)
        self.contracts.add(account.address)
        return account

    def balance(self, address):
        try:
            return self.balances[address]
        except KeyError:
            raise UnknownAccount(f"no account {address}") from None

    def authenticate(self, address, seed):
        """Model msg.sender: the seed must derive `address`"""
        if address not in self.balances:
            raise UnknownAccount(f"no account {address}")
        if derive_address(_as_bytes(seed), self.settings) != address:
            raise AuthenticationError(f"seed does not authenticate {address}")

    def sender_of(self, seed):
        """Address a seed signs as (msg.sender)"""
        return derive_address(_as_bytes(seed), self.settings)

    # ------------------------------------------------------------------
    # Mutations
    # ------------------------------------------------------------------

    def transfer(self, sender, recipient, amount, seed, note=""):
        """Move `amount` from sender to recipient; Reject event if underfunded"""
        self.authenticate(sender, seed)
        if recipient not in self.balances:
            raise UnknownAccount(f"no account {recipient}")
        if amount < 0:
            raise LedgerError("transfer amount must be non-negative")

        if self.balances[sender] < amount:
            logger.debug("reject %s -> %s: %d exceeds balance", sender.short(), recipient.short(), amount)
            return self.record(EventKind.REJECT, sender, recipient, note=f"insufficient balance: {note}", amount=amount)

        if recipient in self.contracts:
            kind = EventKind.ESCROW_IN
        elif sender in self.contracts:
            kind = EventKind.ESCROW_OUT
        else:
            kind = EventKind.TRANSFER

        self.balances[sender] -= amount
        self.balances[recipient] += amount
        event = self._append(kind, sender, recipient, amount, note)
        self.check_conservation()
        return event

    def record(self, kind, sender, recipient, note="", amount=0):
        """Append a non-monetary StateChange or Reject event"""
        if kind in MONETARY_KINDS:
            raise LedgerError("monetary events are only produced by transfer()")
        return self._append(kind, sender, recipient, amount, note)

    def advance_time(self, to):
        if to < self._now:
            raise TimeRewindError(f"cannot move time from {self._now} back to {to}")
        if to != self._now:
            logger.debug("time %d -> %d", self._now, to)
        self._now = to

    def commit_hash(self, bid_bytes, nonce, addr, sid):
        return commit_hash(bid_bytes, nonce, addr, sid, self.settings)

    def _append(self, kind, sender, recipient, amount, note):
        event = LedgerEvent(len(self.events), kind, sender, recipient, amount, self._now, note)
        self.events.append(event)
        return event

    # ------------------------------------------------------------------
    # Audit
    # ------------------------------------------------------------------

    def escrow_total(self):
        return sum(self.balances[c] for c in self.contracts)

    def replay(self):
        """Fold the event log over the genesis balances"""
        balances = dict(self.genesis)
        for event in self.events:
            if event.moves_coins:
                balances[event.sender] -= event.amount
                balances[event.recipient] += event.amount
        return balances

    def check_conservation(self):
        """Total supply is constant and the log replays the live balances"""
        total = sum(self.balances.values())
        if total != self._supply:
            raise LedgerError(f"supply changed: {total} != {self._supply}")
        if any(v < 0 for v in self.balances.values()):
            raise LedgerError("negative balance")
        if self.replay() != self.balances:
            raise LedgerError("event log does not replay to live balances")
        return True

    def trace_lines(self):
        return [event.to_line() for event in self.events]


def _as_bytes(seed):
    return seed.encode("utf-8") if isinstance(seed, str) else bytes(seed)
