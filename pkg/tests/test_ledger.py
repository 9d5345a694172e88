import json

import pytest
from hypothesis import given, settings as hsettings, strategies as st

from utils.config import load_settings
from utils.errors import (
    AddressCollision,
    AuthenticationError,
    LedgerError,
    NonceLengthError,
    TimeRewindError,
    UnknownAccount,
)
from utils.ledger import EventKind, Ledger, commit_hash, derive_address


def test_addresses_are_derived_and_unique(ledger, settings):
    alice = ledger.create_account("alice", 10)
    assert alice.address == derive_address(b"alice", settings)
    assert len(alice.address.value) == settings.address_bytes
    with pytest.raises(AddressCollision):
        ledger.create_account("alice", 5)


def test_transfer_moves_coins_and_logs_one_event(ledger):
    alice = ledger.create_account("alice", 10)
    bob = ledger.create_account("bob", 0)
    event = ledger.transfer(alice.address, bob.address, 4, alice.seed, "pay")
    assert event.kind is EventKind.TRANSFER
    assert ledger.balance(alice.address) == 6
    assert ledger.balance(bob.address) == 4
    assert len(ledger.events) == 1
    assert ledger.check_conservation()


def test_underfunded_transfer_is_a_reject_event(ledger):
    alice = ledger.create_account("alice", 3)
    bob = ledger.create_account("bob", 0)
    event = ledger.transfer(alice.address, bob.address, 4, alice.seed)
    assert event.kind is EventKind.REJECT
    assert ledger.balance(alice.address) == 3
    assert ledger.balance(bob.address) == 0


def test_transfer_requires_the_senders_seed(ledger):
    alice = ledger.create_account("alice", 3)
    bob = ledger.create_account("bob", 0)
    with pytest.raises(AuthenticationError):
        ledger.transfer(alice.address, bob.address, 1, bob.seed)


def test_unknown_recipient(ledger):
    alice = ledger.create_account("alice", 3)
    stranger = derive_address(b"stranger", ledger.settings)
    with pytest.raises(UnknownAccount):
        ledger.transfer(alice.address, stranger, 1, alice.seed)


def test_contract_transfers_are_escrow_events(ledger):
    alice = ledger.create_account("alice", 10)
    contract = ledger.create_contract("escrow")
    assert ledger.transfer(alice.address, contract.address, 7, alice.seed).kind is EventKind.ESCROW_IN
    assert ledger.escrow_total() == 7
    assert ledger.transfer(contract.address, alice.address, 2, contract.seed).kind is EventKind.ESCROW_OUT
    assert ledger.escrow_total() == 5


def test_time_never_rewinds(ledger):
    ledger.advance_time(5)
    ledger.advance_time(5)
    with pytest.raises(TimeRewindError):
        ledger.advance_time(4)
    assert ledger.now == 5


def test_record_refuses_monetary_kinds(ledger):
    alice = ledger.create_account("alice", 1)
    with pytest.raises(LedgerError):
        ledger.record(EventKind.TRANSFER, alice.address, alice.address, amount=1)


def test_commit_hash_checks_nonce_length(settings):
    addr = derive_address(b"alice", settings)
    with pytest.raises(NonceLengthError):
        commit_hash(b"1;5", b"\x00" * 31, addr, 1, settings)
    full = commit_hash(b"1;5", b"\x00" * 32, addr, 1, settings)
    assert full != commit_hash(b"1;5", b"\x00" * 32, addr, 2, settings)
    assert full != commit_hash(b"1;6", b"\x00" * 32, addr, 1, settings)


def test_trace_lines_are_sorted_json(ledger):
    alice = ledger.create_account("alice", 10)
    bob = ledger.create_account("bob", 0)
    ledger.advance_time(3)
    ledger.transfer(alice.address, bob.address, 2, alice.seed, "x")
    line = ledger.trace_lines()[0]
    assert list(json.loads(line)) == ["amount", "at", "from", "kind", "note", "seq", "to"]
    assert json.loads(line)["at"] == 3


def test_env_override_of_hash_algorithm(monkeypatch):
    monkeypatch.setenv("FAIRAUCTION_HASH_ALGORITHM", "sha256")
    assert load_settings().hash_algorithm == "sha256"


@hsettings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 40)), max_size=30))
def test_random_transfers_conserve_supply(moves):
    ledger = Ledger(load_settings())
    accounts = [ledger.create_account(f"acct-{i}", 25) for i in range(4)]
    for src, dst, amount in moves:
        ledger.transfer(accounts[src].address, accounts[dst].address, amount, accounts[src].seed)
        assert sum(ledger.balances.values()) == 100
    assert ledger.replay() == ledger.balances
