import heapq
import logging
import time
from contextlib import contextmanager

from agents.auction import AuctionAgent
from agents.commitment import BidCommitmentAgent, make_commitment
from agents.fairness import PartyInfo, RunTrace, TradeRecord, adjusted_deltas, check_fairness
from agents.ladder import LadderTradeAgent
from agents.models import ProviderConfig
from agents.session import ContractSession, TradeStatus
from agents.states import ContractPhase
from agents.trade import AdjudicatedTradeAgent
from utils.config import load_settings
from utils.errors import LedgerError, Rejected
from utils.ledger import Ledger
from utils.sealing import SealedGrant

logger = logging.getLogger(__name__)


class ScenarioRun:
    """One deterministic execution of a scenario against a fresh ledger"""

    def __init__(self, scenario, settings):
        self.scenario = scenario
        self.settings = settings
        self.ledger = Ledger(settings)

        spec = scenario.provider
        self.provider = self.ledger.create_account(spec.seed, spec.balance)
        self.adjudicator = None
        if scenario.adjudicated:
            self.adjudicator = self.ledger.create_account(settings.adjudicator_seed)
        self.accounts = {u.label: self.ledger.create_account(u.seed, u.balance) for u in scenario.users}
        self.specs = {u.label: u for u in scenario.users}
        self.labels = {acct.address: label for label, acct in self.accounts.items()}
        self.nonces = {}

        self.session = ContractSession(
            self.ledger, scenario.sid,
            ProviderConfig(self.provider.address, spec.supply, spec.base_price),
            scenario.guaranty, scenario.deadlines,
            self.adjudicator.address if self.adjudicator else None,
            adjudicated=scenario.adjudicated,
            ladder_params=scenario.ladder,
        )
        self.commitments = BidCommitmentAgent(self.session)
        self.auction = AuctionAgent(self.session)
        self.trade = AdjudicatedTradeAgent(self.session)
        self.ladder = LadderTradeAgent(self.session)

        self.workflow_steps = []
        self.timings = {}
        self._queue = []
        self._seq = 0

    # ------------------------------------------------------------------
    # Plumbing
    # ------------------------------------------------------------------

    def at(self, moment):
        self.ledger.advance_time(max(moment, self.ledger.now))

    def attempt(self, step, action, *args):
        """Run one protocol action; a refusal is recorded and the run goes on"""
        try:
            result = action(*args)
        except Rejected as exc:
            self.workflow_steps.append({"step": step, "at": self.ledger.now, "status": "rejected", "data": exc.reason})
            logger.debug("%s rejected: %s", step, exc.reason)
            return None
        self.workflow_steps.append({"step": step, "at": self.ledger.now, "status": "completed", "data": result})
        return result

    def poke(self, expected_from):
        self.attempt(f"phase_advance {expected_from.value}", self.session.phase_advance, self.provider, expected_from)

    def schedule(self, moment, step, action, *args):
        heapq.heappush(self._queue, (moment, self._seq, step, action, args))
        self._seq += 1

    def drain(self):
        while self._queue:
            moment, _, step, action, args = heapq.heappop(self._queue)
            self.at(moment)
            self.attempt(step, action, *args)

    @contextmanager
    def timed(self, phase):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[phase] = self.timings.get(phase, 0.0) + time.perf_counter() - start

    # ------------------------------------------------------------------
    # Phases
    # ------------------------------------------------------------------

    def play(self):
        with self.timed("setup"):
            self.setup()
        with self.timed("bid"):
            self.bid()
        with self.timed("auction"):
            ran = self.run_auction()
        if not ran:
            with self.timed("abort"):
                self.abort()
            return
        with self.timed("trade"):
            self.deliver()
            if self.scenario.adjudicated:
                self.adjudicated_trade()
            else:
                self.ladder_trade()

    def setup(self):
        self.at(0)
        self.attempt("fund_provider", self.session.fund_provider, self.provider)
        for label, acct in self.accounts.items():
            self.attempt(f"join {label}", self.session.join, acct.address)

    def bid(self):
        sc, d = self.scenario, self.scenario.deadlines
        self.at(d.tau1)
        for index, (label, acct) in enumerate(self.accounts.items()):
            spec = self.specs[label]
            nonce = sc.nonce_for(index, self.settings.nonce_bytes)
            self.nonces[label] = nonce
            digest = make_commitment(spec.bid, nonce, acct.address, sc.sid, self.settings)
            self.attempt(f"commit {label}", self.commitments.submit_commitment, acct, digest, sc.guaranty)

        self.at(d.tau2)
        self.poke(ContractPhase.USER_SENDS_COMMITMENT)
        for label, acct in self.accounts.items():
            spec = self.specs[label]
            opened = spec.strategy.opening(spec.bid)
            if opened is None:
                continue
            self.attempt(
                f"open {label}", self.commitments.open_commitment,
                acct, opened, self.nonces[label], opened.price,
            )

    def run_auction(self):
        d = self.scenario.deadlines
        self.at(d.tau3)
        self.poke(ContractPhase.USER_OPENS_COMMITMENT)
        if self.scenario.provider.strategy.triggers_auction:
            self.attempt("run_auction", self.auction.run_auction, self.provider)
        return self.session.outcome is not None

    def abort(self):
        self.at(self.scenario.deadlines.tau3 + 1)
        self.poke(ContractPhase.AUCTION)
        for label, acct in list(self.accounts.items()) + [(self.scenario.provider.label, self.provider)]:
            self.attempt(f"reclaim {label}", self.commitments.reclaim_after_timeout, acct)

    def deliver(self):
        self.at(self.scenario.deadlines.tau3 + 1)
        strategy = self.scenario.provider.strategy
        for winner in self.session.outcome.winners():
            trade = self.session.trades[winner]
            grant = strategy.grant_for(winner, trade.bundle)
            if grant is None:
                continue
            self.attempt(
                f"deliver {self.labels[winner]}", self.trade.provider_deliver,
                self.provider, winner, SealedGrant(winner, grant),
            )

    def _opened_grant(self, label):
        trade = self.session.trades[self.accounts[label].address]
        if trade.grant is None:
            return None
        return trade.grant.open(self.accounts[label].address)

    def _default_if_needed(self):
        unserved = [t.winner for t in self.session.trades.values() if t.status is TradeStatus.AWAITING_DELIVERY]
        if unserved:
            caller = self.accounts[self.labels[unserved[0]]]
            self.attempt("default_settlement", self.trade.default_settlement, caller)

    def adjudicated_trade(self):
        d = self.scenario.deadlines
        strategy = self.scenario.provider.strategy
        self.at(d.tau4)
        for label in self._winner_labels():
            grant = self._opened_grant(label)
            if grant is None:
                continue
            trade = self.session.trades[self.accounts[label].address]
            if self.specs[label].strategy.disputes(grant.valid_for(trade.bundle)):
                self.attempt(f"dispute {label}", self.trade.raise_dispute, self.accounts[label])

        self.at(d.tau4 + 1)
        self._default_if_needed()
        for trade in self._disputed():
            grant = strategy.reseal_for(trade.winner, trade.bundle)
            label = self.labels[trade.winner]
            if grant is not None:
                self.attempt(
                    f"reseal {label}", self.trade.provider_reseal,
                    self.provider, trade.winner, SealedGrant(self.adjudicator.address, grant),
                )
            self.attempt(f"adjudicate {label}", self.trade.adjudicate, self.adjudicator, trade.winner)

        self.at(d.tau5 + 1)
        for trade in self._disputed():
            self.attempt(f"adjudicate {self.labels[trade.winner]}", self.trade.adjudicate, self.adjudicator, trade.winner)
        self.attempt("finalize_trade", self.trade.finalize_trade, self.provider)

    def ladder_trade(self):
        d = self.scenario.deadlines
        unserved = [t.winner for t in self.session.trades.values() if t.status is TradeStatus.AWAITING_DELIVERY]
        if unserved:
            caller = self.accounts[self.labels[unserved[0]]]
            self.schedule(d.tau4 + 1, "default_settlement", self.trade.default_settlement, caller)
        end = d.tau4 + 1
        for label in self._winner_labels():
            acct = self.accounts[label]
            ladder = self.session.ladders.get(acct.address)
            if ladder is None:
                continue
            trade = self.session.trades[acct.address]
            grant = self._opened_grant(label)
            strategy = self.specs[label].strategy
            if strategy.disaffirms(grant.valid_for(trade.bundle)):
                self.schedule(d.tau4, f"disaffirm {label}", self.ladder.disaffirm, acct)
            for i in range(1, strategy.confirmations(grant, trade.bundle, ladder.e) + 1):
                self.schedule(ladder.deadline(i), f"confirm {label} c_{i}", self.ladder.confirm, acct, i)
            end = max(end, ladder.deadline(ladder.e) + 1)

        for label in self._winner_labels():
            acct = self.accounts[label]
            if acct.address in self.session.ladders:
                self.schedule(end, f"settle_ladder {label}", self.ladder.settle_ladder, acct, acct.address)
        self.schedule(end, "finalize_trade", self.trade.finalize_trade, self.provider)
        self.drain()

    def _winner_labels(self):
        return [self.labels[w] for w in self.session.outcome.winners()]

    def _disputed(self):
        return [t for t in self.session.trades.values() if t.open_dispute]

    # ------------------------------------------------------------------
    # Results
    # ------------------------------------------------------------------

    def trade_records(self):
        records = []
        for trade in self.session.trades.values():
            ladder = self.session.ladders.get(trade.winner)
            obtained = trade.final_grant or trade.grant
            if obtained is not None:
                grant = obtained.open(trade.winner)
                valid = grant.valid_for(trade.bundle)
            else:
                grant, valid = None, False

            if ladder is not None:
                mode, e, confirmed = "ladder", ladder.e, ladder.confirmed
                served = ladder.served_segments(valid, grant.active_until_segment if grant else None)
            else:
                mode, e, confirmed = "escrow", 1, 0
                served = 1 if valid and trade.status is TradeStatus.PAID else 0
            records.append(TradeRecord(
                winner=self.labels[trade.winner], price=trade.price, size=trade.size,
                mode=mode, e=e, confirmed=confirmed, served=served, grant_valid=valid,
                paid_to_provider=trade.paid_to_provider, compensation=trade.compensation,
                status=trade.status.value,
            ))
        return records

    def parties(self):
        strategy = self.scenario.provider.strategy
        out = [PartyInfo(self.scenario.provider.label, "provider", self.provider.address,
                         strategy.describe(), strategy.honest)]
        for label, acct in self.accounts.items():
            s = self.specs[label].strategy
            out.append(PartyInfo(label, "user", acct.address, s.describe(), s.honest))
        if self.adjudicator is not None:
            out.append(PartyInfo("adjudicator", "adjudicator", self.adjudicator.address, "Trusted", True))
        out.append(PartyInfo("contract", "contract", self.session.address, "-", True))
        return out

    def trace(self):
        try:
            conserved = self.ledger.check_conservation()
        except LedgerError as exc:
            logger.warning("%s: conservation broken: %s", self.scenario.name, exc)
            conserved = False
        return RunTrace(
            scenario=self.scenario.name,
            parties=self.parties(),
            events=list(self.ledger.events),
            genesis=dict(self.ledger.genesis),
            final=dict(self.ledger.balances),
            trades=self.trade_records(),
            steps=list(self.workflow_steps),
            final_phase=self.session.phase.value,
            conservation_ok=conserved,
        )


class ScenarioOrchestrator:
    """Runs scenarios and judges them, including honest counterfactuals"""

    def __init__(self, settings=None):
        self.settings = settings or load_settings()
        self.last_run = None

    def execute(self, scenario):
        run = ScenarioRun(scenario, self.settings)
        run.play()
        self.last_run = run
        logger.info("%s: finished in phase %s", scenario.name, run.session.phase.value)
        return run.trace()

    def run(self, scenario, counterfactual=True):
        trace = self.execute(scenario)
        main_run = self.last_run
        baselines = {}
        if counterfactual:
            for label in scenario.deviators():
                other = self.execute(scenario.with_honest(label))
                baselines[label] = adjusted_deltas(other)[label]
            self.last_run = main_run
        return trace, check_fairness(trace, scenario, baselines)
