"""
Timed bid commitments with guaranties.

Users commit H(bid || nonce || addr || sid) with a guaranty `a` before tau1,
open with the bid, nonce and a deposit of the bid price before tau2, and are
refunded by the three-case rule: non-openers forfeit `a` to a pool, openers
below the base price get `a` back, openers at or above it share the pool in
proportion to their bid densities.
"""

import logging
from dataclasses import dataclass, field
from decimal import ROUND_FLOOR, ROUND_HALF_EVEN, Decimal, localcontext

from agents.auction import bid_density
from agents.models import Bid
from agents.session import EscrowKind
from agents.states import (
    USER_FAILS_TO_OPEN,
    USER_INIT,
    USER_OPENED_COMMITMENT,
    USER_SENT_COMMITMENT,
    ContractPhase,
)
from utils.errors import NonceLengthError
from utils.ledger import commit_hash

logger = logging.getLogger(__name__)

SHARE_PRECISION = 60
SHARE_SNAP = Decimal("1e-40")


@dataclass
class CommitmentRecord:
    owner: object
    digest: object
    guaranty: int
    opened_bid: object = None
    nonce: bytes = None
    density: object = None

    @property
    def opened(self):
        return self.opened_bid is not None


@dataclass
class RefundPlan:
    refunds: dict = field(default_factory=dict)
    bonuses: dict = field(default_factory=dict)
    forfeit_pool: int = 0
    n_f: int = 0
    beta: int = 0
    openers: int = 0
    remainder: int = 0

    def distributed(self):
        return sum(self.refunds.values())


def make_commitment(bid, nonce, addr, sid, settings):
    """User-side: the digest to post before tau1"""
    return commit_hash(bid.to_bytes(), nonce, addr, sid, settings)


def pool_shares(pool, densities):
    """floor(pool * d_j / sum d_y) for each eligible density"""
    if not densities or pool == 0:
        return {key: 0 for key in densities}
    with localcontext() as ctx:
        ctx.prec = SHARE_PRECISION
        weights = {key: d.decimal() for key, d in densities.items()}
        total = sum(weights.values())
        shares = {}
        for key, weight in weights.items():
            exact = Decimal(pool) * weight / total
            nearest = exact.to_integral_value(rounding=ROUND_HALF_EVEN)
            # Ratios of rational densities land on integers exactly
            if abs(exact - nearest) < SHARE_SNAP:
                shares[key] = int(nearest)
            else:
                shares[key] = int(exact.to_integral_value(rounding=ROUND_FLOOR))
    return shares


class BidCommitmentAgent:
    """Commit, open, refund and timeout-reclaim for one session"""

    def __init__(self, session):
        self.session = session

    def submit_commitment(self, sender, digest, guaranty):
        s = self.session
        actor = sender.address
        s.require(
            "submit_commitment", sender, actor,
            phase=ContractPhase.USER_SENDS_COMMITMENT,
            state=USER_INIT,
            deadline=s.deadlines.tau1,
            extra={"digest": digest, "guaranty": guaranty},
            conditions=[
                ("digest non-empty", lambda x: bool(x["digest"])),
                (f"guaranty == {s.guaranty}", lambda x: x["guaranty"] == s.guaranty),
            ],
        )
        s.collect(sender, guaranty, EscrowKind.GUARANTY, f"commit {digest.hex()[:16]}")
        s.commitments[actor] = CommitmentRecord(actor, digest, guaranty)
        s.states.transition(actor, USER_SENT_COMMITMENT, f"h={digest.hex()}")
        s.advance_if_all_acted()

    def open_commitment(self, sender, bid, nonce, deposit):
        """Returns True when the opening matched the commitment"""
        s = self.session
        actor = sender.address
        s.require(
            "open_commitment", sender, actor,
            phase=ContractPhase.USER_OPENS_COMMITMENT,
            state=USER_SENT_COMMITMENT,
            deadline=s.deadlines.tau2,
        )
        record = s.commitments[actor]

        matched, why = self._opening_matches(record, bid, nonce, deposit)
        if not matched:
            # The guaranty stays behind for the pool
            s.states.transition(actor, USER_FAILS_TO_OPEN, why)
            logger.info("sid %s: %s failed to open (%s)", s.sid, actor.short(), why)
            s.advance_if_all_acted()
            return False

        s.collect(sender, deposit, EscrowKind.DEPOSIT, "bid deposit")
        record.opened_bid = bid
        record.nonce = bytes(nonce)
        record.density = bid_density(bid, s.provider.supply.weights)
        s.states.transition(actor, USER_OPENED_COMMITMENT, f"bid={bid.to_bytes().decode()}")
        s.advance_if_all_acted()
        return True

    def _opening_matches(self, record, bid, nonce, deposit):
        s = self.session
        if not isinstance(bid, Bid) or bid.m != s.provider.supply.m:
            return False, "bid shape does not match supply"
        try:
            digest = commit_hash(bid.to_bytes(), nonce, record.owner, s.sid, s.ledger.settings)
        except NonceLengthError as exc:
            return False, str(exc)
        if digest != record.digest:
            return False, "hash mismatch"
        if deposit != bid.price:
            return False, f"deposit {deposit} != bid price {bid.price}"
        return True, ""

    def settle_refunds(self, caller, forfeit_unopened=True):
        """Three-case refund of guaranties plus the density-weighted pool

        With forfeit_unopened False, commitments that never had an opening
        window keep their guaranty in escrow for reclaim.
        """
        s = self.session
        s.require(
            "settle_refunds", caller, caller.address,
            phase=(ContractPhase.AUCTION, ContractPhase.ABORTED),
            conditions=[("refunds not yet settled", lambda _: not s.refunds_settled)],
        )

        # Late openers count as non-openers
        if forfeit_unopened:
            for addr in s.states.in_state(USER_SENT_COMMITMENT):
                s.states.transition(addr, USER_FAILS_TO_OPEN, "no valid opening before tau2")

        a = s.guaranty
        provider = s.provider.addr
        failed = [addr for addr in s.users if s.states.get(addr) == USER_FAILS_TO_OPEN]
        for addr in failed:
            s.move_escrow(addr, EscrowKind.GUARANTY, provider, EscrowKind.POOL, a)

        beta = s.provider.base_price
        openers = [addr for addr in s.users if addr in s.commitments and s.commitments[addr].opened]
        eligible = {
            addr: s.commitments[addr].density
            for addr in openers
            if s.commitments[addr].density.at_least(beta)
        }
        plan = RefundPlan(forfeit_pool=len(failed) * a, n_f=len(failed), beta=beta, openers=len(openers))
        bonuses = pool_shares(plan.forfeit_pool, eligible)
        if sum(bonuses.values()) > plan.forfeit_pool:
            raise AssertionError("pool shares exceed the forfeit pool")

        for addr in openers:
            bonus = bonuses.get(addr, 0)
            sources = [(addr, EscrowKind.GUARANTY, a)]
            if bonus:
                sources.append((provider, EscrowKind.POOL, bonus))
            note = f"refund a={a} bonus={bonus}"
            plan.refunds[addr] = s.release(addr, sources, note)
            plan.bonuses[addr] = bonus

        plan.remainder = plan.forfeit_pool - sum(plan.bonuses.values())
        s.refunds_settled = True
        s.refund_plan = plan
        logger.info(
            "sid %s: refunds settled, n_f=%d pool=%d remainder=%d",
            s.sid, plan.n_f, plan.forfeit_pool, plan.remainder,
        )
        return plan

    def reclaim_after_timeout(self, sender):
        """After tau3 with no auction: get deposits (and unsettled guaranties) back"""
        s = self.session
        actor = sender.address
        s.require(
            "reclaim_after_timeout", sender, actor,
            phase=(
                ContractPhase.USER_SENDS_COMMITMENT,
                ContractPhase.USER_OPENS_COMMITMENT,
                ContractPhase.AUCTION,
                ContractPhase.ABORTED,
            ),
            conditions=[("now > tau3", lambda _: s.now > s.deadlines.tau3)],
        )
        if actor not in s.states:
            s.reject("reclaim_after_timeout", actor, "not a participant of this session")

        paid = 0
        # Nobody could open while the session sat in UserSendsCommitment
        opening_window = s.phase is not ContractPhase.USER_SENDS_COMMITMENT
        if s.phase is not ContractPhase.ABORTED:
            s.set_phase(ContractPhase.ABORTED, "auction never ran before tau3")
        if not s.refunds_settled:
            plan = self.settle_refunds(sender, forfeit_unopened=opening_window)
            paid += plan.refunds.get(actor, 0)

        if actor == s.provider.addr:
            kinds = (EscrowKind.PROVIDER_DEPOSIT, EscrowKind.POOL)
        else:
            kinds = (EscrowKind.DEPOSIT, EscrowKind.GUARANTY)
        sources = [(actor, kind, s.escrow.of(actor, kind)) for kind in kinds]
        sources = [src for src in sources if src[2]]
        if sources:
            paid += s.release(actor, sources, "reclaim after tau3")
        return paid
