"""
Fairness verdicts over a finished run.

A party's delta is its final balance minus its genesis balance, read from the
event log. Service actually consumed is valued at floor(served * P / e) so a
winner who paid P for working VMs comes out even. An honest party must never
end below its bound: zero for adjudicated trades, sum of ceil(P / e) over its
ladder trades. A deviating party is penalized unless its gain over the honest
counterfactual run exceeds that same bound.
"""

import logging
from dataclasses import asdict, dataclass, field

import pandas as pd

logger = logging.getLogger(__name__)

PROTECTED = "protected"
PENALIZED = "penalized"
VIOLATION = "violation"


@dataclass(frozen=True)
class PartyInfo:
    label: str
    role: str
    address: object
    strategy: str
    honest: bool


@dataclass(frozen=True)
class TradeRecord:
    winner: str
    price: int
    size: int
    mode: str
    e: int
    confirmed: int
    served: int
    grant_valid: bool
    paid_to_provider: int
    compensation: int
    status: str

    @property
    def service_value(self):
        return self.served * self.price // self.e

    @property
    def loss_bound(self):
        if self.mode != "ladder":
            return 0
        return -(-self.price // self.e)


@dataclass
class RunTrace:
    """Everything a run leaves behind: events, parties and per-trade records"""

    scenario: str
    parties: list = field(default_factory=list)
    events: list = field(default_factory=list)
    genesis: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)
    trades: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    final_phase: str = ""
    conservation_ok: bool = True

    def lines(self):
        return [event.to_line() for event in self.events]

    def delta(self, party):
        return self.final.get(party.address, 0) - self.genesis.get(party.address, 0)

    def party(self, label):
        for party in self.parties:
            if party.label == label:
                return party
        raise KeyError(label)

    def trades_of(self, label):
        return [t for t in self.trades if t.winner == label]


@dataclass
class PartyVerdict:
    label: str
    role: str
    strategy: str
    honest: bool
    delta: int
    service: int
    adjusted: int
    bound: int
    verdict: str
    clause: str
    counterfactual: object = None


@dataclass
class FairnessReport:
    scenario: str
    rows: list = field(default_factory=list)
    conservation_ok: bool = True

    @property
    def violations(self):
        return [row for row in self.rows if row.verdict == VIOLATION]

    @property
    def ok(self):
        return self.conservation_ok and not self.violations

    def verdict_of(self, label):
        return next(row for row in self.rows if row.label == label)

    def to_frame(self):
        frame = pd.DataFrame([asdict(row) for row in self.rows])
        if not frame.empty:
            frame.insert(0, "scenario", self.scenario)
        return frame

    def to_lines(self):
        frame = self.to_frame()
        if frame.empty:
            return ""
        return frame.to_json(orient="records", lines=True)

    def summary(self):
        frame = self.to_frame()
        header = f"scenario {self.scenario}: conservation {'ok' if self.conservation_ok else 'BROKEN'}"
        if frame.empty:
            return header
        cols = ["label", "role", "strategy", "delta", "service", "adjusted", "bound", "verdict", "clause"]
        return header + "\n" + frame[cols].to_string(index=False)


def _clause(party, trades, mode):
    if party.role == "provider":
        if not trades:
            return "auction-provider"
        return "ladder-provider-bound" if mode == "ladder" else "adjudicated-provider-safety"
    if not trades:
        return "bid-commitment-refund"
    return "ladder-user-bound" if mode == "ladder" else "adjudicated-user-safety"


def _assess(trace, party):
    if party.role == "provider":
        trades = trace.trades
        service = -sum(t.service_value for t in trades)
    else:
        trades = trace.trades_of(party.label)
        service = sum(t.service_value for t in trades)
    delta = trace.delta(party)
    bound = sum(t.loss_bound for t in trades)
    mode = trades[0].mode if trades else ""
    return delta, service, delta + service, bound, _clause(party, trades, mode)


def check_fairness(trace, scenario=None, counterfactuals=None):
    """Classify every user and the provider; counterfactuals: label -> adjusted delta"""
    counterfactuals = counterfactuals or {}
    report = FairnessReport(trace.scenario, conservation_ok=trace.conservation_ok)
    for party in trace.parties:
        if party.role not in ("user", "provider"):
            continue
        delta, service, adjusted, bound, clause = _assess(trace, party)
        baseline = counterfactuals.get(party.label)
        if party.honest:
            verdict = VIOLATION if adjusted < -bound else PROTECTED
        elif baseline is not None and adjusted - baseline > bound:
            verdict = VIOLATION
        else:
            verdict = PENALIZED
        if verdict == VIOLATION:
            logger.warning(
                "%s: %s %s adjusted delta %d against bound %d",
                trace.scenario, party.role, party.label, adjusted, bound,
            )
        report.rows.append(PartyVerdict(
            label=party.label, role=party.role, strategy=party.strategy, honest=party.honest,
            delta=delta, service=service, adjusted=adjusted, bound=bound,
            verdict=verdict, clause=clause, counterfactual=baseline,
        ))
    return report


def adjusted_deltas(trace):
    """label -> adjusted delta, the baseline a deviator is compared against"""
    out = {}
    for party in trace.parties:
        if party.role in ("user", "provider"):
            out[party.label] = _assess(trace, party)[2]
    return out
