"""Independent expected-value calculators for the allocation tests.

Written before the tests that use them and kept deliberately different from
the production code: the fair share here comes from a single sorted pass
(ascending demands, each takes min(need, remaining / flows_left)) instead of
the production progressive-fill loop. Agreement between the two routes is the
point; do not "fix" one by copying from the other.
"""
from __future__ import annotations

import random


def analytic_waterfill(demands: dict[str, float], budget: float) -> dict[str, float]:
    """Exact max-min fair split of ``budget`` over per-flow demands.

    Ascending order makes a single pass exact: when a flow's demand is below
    the current equal share, it is satisfied and the slack raises everyone
    else's share.
    """
    order = sorted(demands, key=lambda fid: (demands[fid], fid))
    fills: dict[str, float] = {}
    remaining = max(0.0, budget)
    left = len(order)
    for fid in order:
        share = remaining / left
        take = min(max(0.0, demands[fid]), share)
        fills[fid] = take
        remaining -= take
        left -= 1
    return fills


def oracle_allocate(
    capacity: float,
    flows: list[tuple[str, float, float, float | None]],
) -> tuple[dict[str, float], float]:
    """Expected (achieved_rates, cell_load) for one tick.

    ``flows`` rows are (flow_id, demand, efficiency, guarantee or None); a
    guarantee marks the flow admitted. Rates are in Mbps, the shared budget in
    resource units, demand at efficiency e costs demand / e units.
    """
    reserved: dict[str, float] = {}
    residual: dict[str, float] = {}
    eff = {}
    for fid, demand, efficiency, guarantee in flows:
        eff[fid] = efficiency
        if guarantee is not None:
            head = min(demand, guarantee)
            reserved[fid] = head / efficiency
            residual[fid] = max(0.0, demand - head) / efficiency
        else:
            reserved[fid] = 0.0
            residual[fid] = demand / efficiency
    budget = max(0.0, capacity - sum(reserved.values()))
    fills = analytic_waterfill(residual, budget)
    achieved = {fid: eff[fid] * (reserved[fid] + fills[fid]) for fid in reserved}
    used = sum(reserved[fid] + fills[fid] for fid in reserved)
    return achieved, min(1.0, used / capacity)


def oracle_admit(
    capacity: float,
    admitted: list[tuple[float, float]],
    request: tuple[float, float],
    fraction: float = 0.8,
) -> bool:
    """Expected admission verdict for one more (guarantee, efficiency) pair."""
    rate, efficiency = request
    committed = sum(g / e for g, e in admitted)
    return committed + rate / efficiency <= fraction * capacity + 1e-9


def oracle_latency(edge_route: bool, load: float) -> float:
    """Expected latency in ms for the stock path parameters."""
    return (5.0 if edge_route else 20.0) + 30.0 * load


def random_allocation_case(
    rng: random.Random,
) -> tuple[float, list[tuple[str, float, float, float | None]]]:
    """One random, always-feasible allocation instance.

    Guarantees are drawn under the budget constraint so the instance never
    violates admission; that keeps the comparison about fairness, not errors.
    """
    capacity = rng.uniform(4.0, 40.0)
    budget = 0.8 * capacity
    n = rng.randint(1, 8)
    committed = 0.0
    flows: list[tuple[str, float, float, float | None]] = []
    for i in range(n):
        demand = rng.uniform(0.0, 15.0)
        efficiency = rng.uniform(0.05, 1.0)
        guarantee: float | None = None
        if demand > 0 and rng.random() < 0.4:
            headroom = (budget - committed) * efficiency
            cap = min(demand, headroom)
            if cap > 1e-6:
                guarantee = rng.uniform(1e-6, cap)
                committed += guarantee / efficiency
        flows.append((f"f{i}", demand, efficiency, guarantee))
    return capacity, flows
