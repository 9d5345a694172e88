"""
Desk-scale sweep over user counts and VM-type counts with all-honest parties.

Per-phase wall times come from the runner's perf_counter sections; they are
machine dependent and reported as pandas tables, never compared across hosts.
"""

import logging
import time

import numpy as np
import pandas as pd

from agents.models import Bid, Deadlines, LadderParams, ProviderSupply
from agents.orchestrator import ScenarioOrchestrator
from agents.strategies import honest
from utils.scenario_parser import DEFAULT_USER_BALANCE, PROVIDER_FLOAT, ProviderSpec, Scenario, UserSpec

logger = logging.getLogger(__name__)

BENCH_DEADLINES = Deadlines(10, 20, 30, 40, 60)


def random_scenario(rng, users, types, adjudicated=True, sid=1):
    """All-honest scenario with `users` bidders over `types` VM types"""
    supply = ProviderSupply(
        tuple(int(c) for c in rng.integers(users // 2 + 1, users + 2, size=types)),
        tuple(int(w) for w in rng.integers(1, 5, size=types)),
    )
    base_price = 1
    specs = []
    for i in range(users):
        bundle = [int(k) for k in rng.integers(0, 3, size=types)]
        if not any(bundle):
            bundle[int(rng.integers(0, types))] = 1
        size = supply.weighted_size(bundle)
        price = int(rng.integers(size // 2 + 1, 3 * size + 2))
        specs.append(UserSpec(f"user-{i:02d}", Bid(tuple(bundle), price), honest("user"), DEFAULT_USER_BALANCE))

    deposit = base_price * supply.total_weight()
    provider = ProviderSpec("provider", supply, base_price, honest("provider"), deposit + PROVIDER_FLOAT)
    return Scenario(
        name=f"bench-u{users}-m{types}",
        sid=sid,
        guaranty=2,
        deadlines=BENCH_DEADLINES,
        provider=provider,
        users=tuple(specs),
        adjudicated=adjudicated,
        ladder=None if adjudicated else LadderParams(usage_total=20, segments=4),
        nonce_seed=int(rng.integers(0, 2**31)),
    )


def run_benchmark(users=range(5, 21, 5), types=(5, 7, 9), repeat=3, seed=0, settings=None):
    """One row per (users, types) with mean per-phase and total seconds"""
    rng = np.random.default_rng(seed)
    orchestrator = ScenarioOrchestrator(settings)
    rows = []
    for n in users:
        for m in types:
            for r in range(repeat):
                scenario = random_scenario(rng, n, m, sid=r + 1)
                start = time.perf_counter()
                orchestrator.execute(scenario)
                total = time.perf_counter() - start
                row = {"users": n, "types": m, "repeat": r, "total": total}
                row.update(orchestrator.last_run.timings)
                rows.append(row)
            logger.info("bench users=%d types=%d done", n, m)
    frame = pd.DataFrame(rows).fillna(0.0)
    return frame.drop(columns="repeat").groupby(["users", "types"]).mean().reset_index()
