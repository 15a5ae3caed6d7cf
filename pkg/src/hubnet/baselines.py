"""Decentralized (no trading) and centralized (full network) dispatch.

Both serve as anchors: the decentralized cost is each hub's disagreement
point in the bargaining game, and the centralized optimum bounds what any
coordination scheme can achieve.  Receding-horizon controller wrappers are
provided so realized costs are comparable with the clustered controller.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .hub import (
    ConstraintBlock,
    HubDataError,
    HubPlan,
    HubSpec,
    Tariffs,
    build_feasible_set,
    grid_cost,
    grid_cost_vector,
    realized_step_cost,
)
from .solver import ConvexSubproblem, solve_or_raise


@dataclass
class BaselineResult:
    plans: dict[str, HubPlan]
    costs: dict[str, float]
    total: float
    iterations: int


def solve_decentralized(
    hub: HubSpec,
    start: int,
    horizon: int,
    tariffs: Tariffs,
    profiles: dict[str, np.ndarray] | None = None,
    initial_states: list[np.ndarray] | None = None,
) -> BaselineResult:
    """Isolated economic dispatch with both trade caps forced to zero."""
    isolated = replace(hub, p_bid_cap=0.0, q_bid_cap=0.0)
    block = build_feasible_set(isolated, start, horizon, profiles, initial_states)
    c = grid_cost_vector(block, tariffs.window(start, horizon))
    sub = ConvexSubproblem(
        n=block.var_map.n,
        linear=c,
        eq_matrix=block.eq_matrix,
        eq_rhs=block.eq_rhs,
        ineq_matrix=block.ineq_matrix,
        ineq_rhs=block.ineq_rhs,
    )
    rep = solve_or_raise(sub, context=f"decentralized dispatch of hub {hub.id}")
    plan = HubPlan.from_vector(rep.x, block.var_map)
    cost = grid_cost(plan, tariffs.window(start, horizon))
    return BaselineResult(plans={hub.id: plan}, costs={hub.id: cost}, total=cost, iterations=rep.iterations)


def _stack_blocks(blocks: list[ConstraintBlock]) -> tuple[sp.csr_matrix, np.ndarray, sp.csr_matrix, np.ndarray, list[int]]:
    offsets = list(np.cumsum([0] + [b.var_map.n for b in blocks]))
    A = sp.block_diag([b.eq_matrix for b in blocks], format="csr")
    G = sp.block_diag([b.ineq_matrix for b in blocks], format="csr")
    b_eq = np.concatenate([b.eq_rhs for b in blocks])
    h = np.concatenate([b.ineq_rhs for b in blocks])
    return A, b_eq, G, h, offsets


def _coupling_rows(n_total, offsets, blocks, members, series_name, horizon):
    """Per-step rows: sum of one plan series over ``members`` equals zero."""
    rows, cols, vals = [], [], []
    for i in members:
        idx = blocks[i].var_map.series[series_name] + offsets[i]
        rows.append(np.arange(horizon))
        cols.append(idx)
        vals.append(np.ones(horizon))
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(horizon, n_total),
    ).tocsr()
    return mat


def solve_centralized(
    hubs: list[HubSpec],
    start: int,
    horizon: int,
    tariffs: Tariffs,
    profiles: dict[str, np.ndarray] | None = None,
    thermal_groups: list[list[str]] | None = None,
    initial_states: dict[str, list[np.ndarray]] | None = None,
) -> BaselineResult:
    """Network-wide optimum with electricity cleared across all hubs.

    Thermal trades clear within ``thermal_groups`` (defaults to one
    network-wide group); per-hub trading costs are omitted from the
    objective since they cancel over the network.
    """
    if not hubs:
        raise HubDataError("centralized dispatch needs at least one hub")
    hubs = sorted(hubs, key=lambda hb: hb.id)
    ids = [hb.id for hb in hubs]
    blocks = [
        build_feasible_set(
            hb, start, horizon, profiles,
            initial_states.get(hb.id) if initial_states else None,
        )
        for hb in hubs
    ]
    A, b_eq, G, h, offsets = _stack_blocks(blocks)
    n_total = offsets[-1]
    couplings = [_coupling_rows(n_total, offsets, blocks, range(len(hubs)), "elec_net", horizon)]
    if thermal_groups is None:
        thermal_groups = [ids]
    index_of = {hid: i for i, hid in enumerate(ids)}
    for group in thermal_groups:
        members = [index_of[hid] for hid in sorted(group)]
        couplings.append(_coupling_rows(n_total, offsets, blocks, members, "heat_net", horizon))
    A_full = sp.vstack([A] + couplings, format="csr")
    b_full = np.concatenate([b_eq, np.zeros(horizon * len(couplings))])

    window = tariffs.window(start, horizon)
    c = np.concatenate([grid_cost_vector(b, window) for b in blocks])
    sub = ConvexSubproblem(
        n=n_total, linear=c, eq_matrix=A_full, eq_rhs=b_full, ineq_matrix=G, ineq_rhs=h,
    )
    rep = solve_or_raise(sub, context="centralized network dispatch")
    plans, costs = {}, {}
    for i, hub in enumerate(hubs):
        x_local = rep.x[offsets[i] : offsets[i + 1]]
        plan = HubPlan.from_vector(x_local, blocks[i].var_map)
        plans[hub.id] = plan
        costs[hub.id] = grid_cost(plan, window)
    return BaselineResult(plans=plans, costs=costs, total=float(sum(costs.values())), iterations=rep.iterations)


class DecentralizedController:
    """Receding-horizon driver of the isolated dispatch for one hub."""

    def __init__(self, hub: HubSpec, tariffs: Tariffs, profiles: dict[str, np.ndarray] | None = None):
        self.hub = hub
        self.tariffs = tariffs
        self.profiles = profiles or {}
        self.states = hub.initial_states()
        self.realized_cost = 0.0

    def step(self, t: int, horizon: int) -> float:
        """Plan over ``[t, t + horizon)``, apply the first input, return its cost."""
        result = solve_decentralized(self.hub, t, horizon, self.tariffs, self.profiles, self.states)
        plan = result.plans[self.hub.id]
        cost = realized_step_cost(plan, 0, self.tariffs.window(t, horizon))
        self._advance(plan, t)
        self.realized_cost += cost
        return cost

    def _advance(self, plan: HubPlan, t: int) -> None:
        new_states = []
        for dev, u, x in zip(self.hub.devices, plan.device_inputs, self.states):
            if dev.state_dim:
                d = 0.0
                if dev.disturbance_profile_key and dev.disturbance_profile_key in self.profiles:
                    d = float(self.profiles[dev.disturbance_profile_key][t])
                new_states.append(dev.A @ x + dev.B @ u[0] + dev.D @ np.array([d]))
            else:
                new_states.append(x)
        self.states = new_states


class CentralizedController:
    """Receding-horizon driver of the network-wide dispatch."""

    def __init__(
        self,
        hubs: list[HubSpec],
        tariffs: Tariffs,
        profiles: dict[str, np.ndarray] | None = None,
        thermal_groups: list[list[str]] | None = None,
    ):
        self.hubs = sorted(hubs, key=lambda hb: hb.id)
        self.tariffs = tariffs
        self.profiles = profiles or {}
        self.thermal_groups = thermal_groups
        self.states = {hb.id: hb.initial_states() for hb in self.hubs}
        self.realized_costs = {hb.id: 0.0 for hb in self.hubs}

    @property
    def realized_total(self) -> float:
        return float(sum(self.realized_costs.values()))

    def step(self, t: int, horizon: int) -> dict[str, float]:
        result = solve_centralized(
            self.hubs, t, horizon, self.tariffs, self.profiles, self.thermal_groups, self.states,
        )
        window = self.tariffs.window(t, horizon)
        step_costs = {}
        for hub in self.hubs:
            plan = result.plans[hub.id]
            cost = realized_step_cost(plan, 0, window)
            step_costs[hub.id] = cost
            self.realized_costs[hub.id] += cost
            new_states = []
            for dev, u, x in zip(hub.devices, plan.device_inputs, self.states[hub.id]):
                if dev.state_dim:
                    d = 0.0
                    if dev.disturbance_profile_key and dev.disturbance_profile_key in self.profiles:
                        d = float(self.profiles[dev.disturbance_profile_key][t])
                    new_states.append(dev.A @ x + dev.B @ u[0] + dev.D @ np.array([d]))
                else:
                    new_states.append(x)
            self.states[hub.id] = new_states
        return step_costs
