from dataclasses import dataclass, field

import pytest

from agents.auction import AuctionAgent
from agents.commitment import BidCommitmentAgent, make_commitment
from agents.ladder import LadderTradeAgent
from agents.models import Bid, Deadlines, ProviderConfig, ProviderSupply
from agents.orchestrator import ScenarioOrchestrator
from agents.session import ContractSession
from agents.states import ContractPhase
from agents.trade import AdjudicatedTradeAgent, VMGrant
from utils.config import SCENARIO_DIR, load_settings
from utils.ledger import Ledger
from utils.sealing import SealedGrant

DEADLINES = Deadlines(10, 20, 30, 40, 60)


@dataclass
class Harness:
    """A session wired to funded accounts, plus the agents acting on it"""

    ledger: Ledger
    session: ContractSession
    provider: object
    adjudicator: object
    users: dict = field(default_factory=dict)
    nonces: dict = field(default_factory=dict)

    @property
    def commitments(self):
        return BidCommitmentAgent(self.session)

    @property
    def auction(self):
        return AuctionAgent(self.session)

    @property
    def trade(self):
        return AdjudicatedTradeAgent(self.session)

    @property
    def ladder(self):
        return LadderTradeAgent(self.session)

    def addr(self, name):
        return self.users[name].address

    def balance(self, name):
        return self.ledger.balance(self.addr(name))

    def nonce(self, name):
        if name not in self.nonces:
            seed = self.ledger.settings.digest(name.encode())
            self.nonces[name] = seed[: self.ledger.settings.nonce_bytes].ljust(self.ledger.settings.nonce_bytes, b"\0")
        return self.nonces[name]

    def commit(self, name, bid):
        digest = make_commitment(bid, self.nonce(name), self.addr(name), self.session.sid, self.ledger.settings)
        self.commitments.submit_commitment(self.users[name], digest, self.session.guaranty)

    def open(self, name, bid):
        return self.commitments.open_commitment(self.users[name], bid, self.nonce(name), bid.price)

    def through_auction(self, bids, skip_open=()):
        """Commit every bid at tau1, open at tau2 and run the auction at tau3"""
        d = self.session.deadlines
        self.ledger.advance_time(d.tau1)
        for name, bid in bids.items():
            self.commit(name, bid)
        self.ledger.advance_time(d.tau2)
        for name, bid in bids.items():
            if name not in skip_open:
                self.open(name, bid)
        self.ledger.advance_time(d.tau3)
        self.session.phase_advance(self.provider, expected_from=ContractPhase.USER_OPENS_COMMITMENT)
        return self.auction.run_auction(self.provider)

    def grant(self, name, valid=True, active_until=None):
        trade = self.session.trades[self.addr(name)]
        return SealedGrant(self.addr(name), VMGrant(self.addr(name), trade.bundle, valid, active_until))


@pytest.fixture
def settings():
    return load_settings()


@pytest.fixture
def ledger(settings):
    return Ledger(settings)


@pytest.fixture
def make_harness(settings):
    def build(names=("alice", "bob", "carol"), capacities=(2,), weights=(1,), base_price=1,
              guaranty=5, deadlines=DEADLINES, adjudicated=True, ladder_params=None, balance=1000):
        ledger = Ledger(settings)
        provider = ledger.create_account("provider", 1000)
        adjudicator = ledger.create_account(settings.adjudicator_seed)
        config = ProviderConfig(provider.address, ProviderSupply(capacities, weights), base_price)
        session = ContractSession(
            ledger, 1, config, guaranty, deadlines, adjudicator.address,
            adjudicated=adjudicated, ladder_params=ladder_params,
        )
        harness = Harness(ledger, session, provider, adjudicator)
        session.fund_provider(provider)
        for name in names:
            harness.users[name] = ledger.create_account(name, balance)
            session.join(harness.users[name].address)
        return harness
    return build


@pytest.fixture
def three_bids():
    return {"alice": Bid((1,), 8), "bob": Bid((1,), 6), "carol": Bid((1,), 3)}


@pytest.fixture
def orchestrator(settings):
    return ScenarioOrchestrator(settings)


@pytest.fixture(scope="session")
def corpus_paths():
    return sorted(SCENARIO_DIR.glob("*.json"))
