"""Fair distribution of accumulated cluster trading costs among hubs.

The closed form gives every hub the same relative cost benefit versus its
no-trading baseline.  The plug-out variant additionally charges departed
hubs a penalty, sized by a quadratic regularizer and projected so that the
remaining hubs' relative benefit never exceeds the configured ceiling.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class SettlementError(ValueError):
    """Degenerate cost data (e.g. nonpositive baseline cost)."""


@dataclass
class HubWindowCosts:
    """One hub's realized costs inside a settlement window.

    ``dec_in``/``grid_in`` accrue while the hub is a cluster member;
    ``dec_out`` accrues after a mid-window departure (leavers only).  Hubs
    that joined late simply have smaller in-window costs.
    """

    dec_in: float = 0.0
    grid_in: float = 0.0
    dec_out: float = 0.0


@dataclass
class SettlementResult:
    bids: dict[str, float]
    penalties: dict[str, float]
    beta: float
    gamma: float


def distribute_costs(
    dec_costs: dict[str, float],
    grid_costs: dict[str, float],
    accumulated_bid: float,
) -> tuple[dict[str, float], float]:
    """Equal-relative-benefit split of the accumulated cluster bid.

    Solves ``sum_i c_i = accumulated_bid`` with a common benefit ratio
    ``beta = (grid_i + c_i - dec_i) / dec_i`` in closed form.
    """
    ids = sorted(dec_costs)
    if set(grid_costs) != set(ids):
        raise SettlementError("decentralized and grid cost keys differ")
    for hid in ids:
        if dec_costs[hid] <= 0.0:
            raise SettlementError(f"hub {hid}: nonpositive baseline cost {dec_costs[hid]:.6f}")
    total_dec = sum(dec_costs.values())
    total_grid = sum(grid_costs.values())
    beta = (accumulated_bid + total_grid - total_dec) / total_dec
    bids = {hid: (1.0 + beta) * dec_costs[hid] - grid_costs[hid] for hid in ids}
    return bids, beta


def distribute_costs_pnp(
    costs: dict[str, HubWindowCosts],
    accumulated_bid: float,
    penalty_weight: float,
    beta_max: float = 0.0,
) -> SettlementResult:
    """Cost split with departure penalties.

    The benefit ratio is affine in the total penalty, so the regularized
    problem reduces to a scalar: the unconstrained optimum
    ``gamma = 1 / (2 * penalty_weight * total_in_baseline)`` projected up
    to whatever keeps ``beta <= beta_max``.  Penalties are shared pro rata
    by post-departure baseline cost; hubs absent for the whole window get
    neither a bid nor (without departure costs) a penalty.
    """
    if penalty_weight <= 0.0:
        raise SettlementError("penalty weight must be positive")
    ids = sorted(costs)
    members = [hid for hid in ids if costs[hid].dec_in > 0.0 or costs[hid].grid_in != 0.0]
    if not members:
        raise SettlementError("no hub accrued in-cluster costs during the window")
    for hid in members:
        if costs[hid].dec_in <= 0.0:
            raise SettlementError(
                f"hub {hid}: nonpositive in-window baseline cost "
                f"{costs[hid].dec_in:.6f}; the relative-benefit split is undefined"
            )
    total_out = sum(costs[hid].dec_out for hid in ids)
    dec_in = {hid: costs[hid].dec_in for hid in members}
    grid_in = {hid: costs[hid].grid_in for hid in members}
    if total_out <= 0.0:
        # Nobody left: the penalty machinery degenerates to the plain split.
        bids, beta = distribute_costs(dec_in, grid_in, accumulated_bid)
        bids.update({hid: 0.0 for hid in ids if hid not in bids})
        return SettlementResult(bids=bids, penalties={hid: 0.0 for hid in ids}, beta=beta, gamma=0.0)
    total_in = sum(dec_in.values())
    total_grid = sum(grid_in.values())
    gamma_opt = 1.0 / (2.0 * penalty_weight * total_in)
    gamma_min = accumulated_bid + total_grid - (1.0 + beta_max) * total_in
    gamma = max(gamma_opt, gamma_min)
    beta = (accumulated_bid - gamma + total_grid - total_in) / total_in
    bids = {hid: (1.0 + beta) * dec_in[hid] - grid_in[hid] for hid in members}
    bids.update({hid: 0.0 for hid in ids if hid not in bids})
    penalties = {hid: gamma * costs[hid].dec_out / total_out for hid in ids}
    return SettlementResult(bids=bids, penalties=penalties, beta=beta, gamma=gamma)


@dataclass
class SettlementLedger:
    """Per-cluster accumulators driving the periodic cost distribution."""

    penalty_weight: float = 1e-3
    beta_max: float = 0.0
    accumulated: dict[str, float] = field(default_factory=dict)
    window_costs: dict[str, dict[str, HubWindowCosts]] = field(default_factory=dict)

    def accumulate(self, cluster: str, average_bid: float) -> float:
        self.accumulated[cluster] = self.accumulated.get(cluster, 0.0) + average_bid
        return self.accumulated[cluster]

    def record_step(self, cluster: str, hub: str, dec_cost: float, grid_cost: float, member: bool) -> None:
        slot = self.window_costs.setdefault(cluster, {}).setdefault(hub, HubWindowCosts())
        if member:
            slot.dec_in += dec_cost
            slot.grid_in += grid_cost
        else:
            slot.dec_out += dec_cost

    def settle(self, cluster: str) -> SettlementResult:
        """Distribute the accumulated bid and reset the cluster's window."""
        costs = self.window_costs.get(cluster, {})
        if not costs:
            raise SettlementError(f"cluster {cluster}: nothing to settle")
        total = self.accumulated.get(cluster, 0.0)
        any_leaver = any(c.dec_out > 0.0 for c in costs.values())
        if any_leaver:
            result = distribute_costs_pnp(costs, total, self.penalty_weight, self.beta_max)
        else:
            members = {
                hid: c for hid, c in costs.items() if c.dec_in > 0.0 or c.grid_in != 0.0
            }
            bids, beta = distribute_costs(
                {hid: c.dec_in for hid, c in members.items()},
                {hid: c.grid_in for hid, c in members.items()},
                total,
            )
            bids.update({hid: 0.0 for hid in costs if hid not in bids})
            result = SettlementResult(bids=bids, penalties={hid: 0.0 for hid in costs}, beta=beta, gamma=0.0)
        self.accumulated[cluster] = 0.0
        self.window_costs[cluster] = {}
        return result
