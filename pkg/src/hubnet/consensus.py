"""Consensus ADMM within one cluster.

Each hub shares three quantities with its cluster coordinator: the
electricity trade series, the heat trade series, and its cost improvement
relative to isolated operation.  Every shared quantity has exactly two
owners (hub and coordinator), so the global value is their mean.  The same
machinery runs in two modes:

* ``bargaining`` — the coordinator additionally optimizes the cluster trade
  and cost bid under the weighted-log bargaining objective with a proximal
  coupling to the network-level trade reference.
* ``interim`` — cluster trades are fixed; hubs minimize their own grid cost
  and the coordinator merely enforces the cluster sums (a closed-form
  projection).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .hub import HubPlan, HubSpec, Tariffs, build_feasible_set, grid_cost_vector
from .solver import ConvexSubproblem, LogTerm, SolverError, solve_or_raise


class ClusterTopologyError(RuntimeError):
    """Fixed cluster trade cannot be met by the member hubs."""


# ---------------------------------------------------------------------------
# Generic N-agent consensus ADMM (the two-agent case is the cluster kernel).
# ---------------------------------------------------------------------------


@dataclass
class ConsensusState:
    """Iterate data of one consensus ADMM run over stacked shared variables."""

    dim: int
    n_agents: int
    z: np.ndarray
    z_prev: np.ndarray
    copies: list[np.ndarray]
    duals: list[np.ndarray]
    rho: float
    rho_growth: float
    iteration: int = 0
    r_sq: float = np.inf
    s_sq: float = np.inf

    @classmethod
    def cold(cls, dim: int, n_agents: int, rho: float, rho_growth: float) -> "ConsensusState":
        return cls(
            dim=dim,
            n_agents=n_agents,
            z=np.zeros(dim),
            z_prev=np.zeros(dim),
            copies=[np.zeros(dim) for _ in range(n_agents)],
            duals=[np.zeros(dim) for _ in range(n_agents)],
            rho=rho,
            rho_growth=rho_growth,
        )

    def restart(self, rho: float) -> None:
        """Keep z and duals (warm start) but reset the penalty schedule."""
        self.rho = rho
        self.iteration = 0
        self.r_sq = np.inf
        self.s_sq = np.inf


def consensus_round(state: ConsensusState, agent_solvers) -> None:
    """One full sweep: local solves, mean update, dual update, residuals.

    ``agent_solvers[i]`` is called as ``solver(z, dual, rho)`` and must
    return the agent's updated copy of the shared vector.
    """
    rho = state.rho
    new_copies = [np.asarray(slv(state.z, lam, rho), dtype=float)
                  for slv, lam in zip(agent_solvers, state.duals)]
    z_new = np.mean(new_copies, axis=0)
    state.z_prev = state.z
    state.z = z_new
    state.copies = new_copies
    state.duals = [lam + rho * (x - z_new) for lam, x in zip(state.duals, new_copies)]
    state.r_sq = float(sum(np.sum((x - z_new) ** 2) for x in new_copies))
    state.s_sq = float(state.n_agents * rho**2 * np.sum((z_new - state.z_prev) ** 2))
    state.rho = rho * (1.0 + state.rho_growth)
    state.iteration += 1


def run_consensus(
    state: ConsensusState,
    agent_solvers,
    eps_primal: float,
    eps_dual: float,
    w_max: int,
) -> str:
    """Iterate to the squared-norm tolerances; returns the outcome flag."""
    if eps_primal <= 0.0 or eps_dual <= 0.0:
        raise ValueError("consensus tolerances must be positive")
    for _ in range(w_max):
        consensus_round(state, agent_solvers)
        if state.r_sq <= eps_primal and state.s_sq <= eps_dual:
            return "converged"
    return "iteration_limit"


# ---------------------------------------------------------------------------
# Cluster instantiation.
# ---------------------------------------------------------------------------


@dataclass
class SharedLayout:
    """Positions of each hub's shared block inside the stacked vector."""

    hub_ids: list[str]
    horizon: int

    def __post_init__(self) -> None:
        T = self.horizon
        self.block = 2 * T + 1
        self.dim = self.block * len(self.hub_ids)
        self._offset = {hid: i * self.block for i, hid in enumerate(self.hub_ids)}

    def elec(self, hub_id: str) -> slice:
        off = self._offset[hub_id]
        return slice(off, off + self.horizon)

    def heat(self, hub_id: str) -> slice:
        off = self._offset[hub_id]
        return slice(off + self.horizon, off + 2 * self.horizon)

    def delta_cost(self, hub_id: str) -> int:
        return self._offset[hub_id] + 2 * self.horizon


@dataclass
class ClusterProblemMode:
    """Which inner problem the cluster is solving."""

    kind: str  # "bargaining" or "interim"
    trade_reference: np.ndarray | None = None  # bargaining: z_m, length T+1
    mu: float | None = None
    n_clusters: int | None = None
    alpha: float | None = None
    fixed_trade: np.ndarray | None = None  # interim: cluster trade over T
    log_floor: float = 1e-9
    enforce_caps: bool = False  # interim: error instead of clamping

    def __post_init__(self) -> None:
        if self.kind == "bargaining":
            if self.trade_reference is None or self.mu is None or self.n_clusters is None or self.alpha is None:
                raise ValueError("bargaining mode needs trade_reference, mu, n_clusters and alpha")
        elif self.kind == "interim":
            if self.fixed_trade is None:
                raise ValueError("interim mode needs the fixed cluster trade profile")
        else:
            raise ValueError(f"unknown cluster mode {self.kind!r}")


@dataclass
class ClusterSolution:
    """Outputs of one inner run: hub plans plus the cluster-level values."""

    plans: dict[str, HubPlan]
    hub_delta_costs: dict[str, float]
    consensus_trades: dict[str, np.ndarray]  # z-values of each hub's elec series
    cluster_trade: np.ndarray
    cluster_bid: float
    cluster_delta_cost: float
    outcome: str = ""


class ClusterWorker:
    """Solves one cluster's inner problem over a fixed horizon window.

    ``prepare`` must be called whenever the window, the member set or the
    device states change; the consensus state survives across bargaining
    iterations within a window (warm start) and is rebuilt on ``prepare``.
    """

    def __init__(
        self,
        cluster_id: str,
        hubs: list[HubSpec],
        tariffs: Tariffs,
        profiles: dict[str, np.ndarray] | None = None,
        rho0: float = 0.001,
        rho_growth: float = 0.02,
        subproblem_tol: float = 1e-7,
        subproblem_max_iter: int = 100,
    ):
        self.cluster_id = cluster_id
        self.hubs = sorted(hubs, key=lambda hb: hb.id)
        self.tariffs = tariffs
        self.profiles = profiles or {}
        self.rho0 = rho0
        self.rho_growth = rho_growth
        self.tol = subproblem_tol
        self.max_iter = subproblem_max_iter
        self.layout: SharedLayout | None = None
        self.state: ConsensusState | None = None
        self._hub_sub: dict[str, dict] = {}
        self._coord_cache: dict = {}
        self._warm: dict[str, np.ndarray] = {}
        self._last_plans: dict[str, HubPlan] = {}

    @property
    def hub_ids(self) -> list[str]:
        return [hb.id for hb in self.hubs]

    @property
    def total_trade_cap(self) -> float:
        return float(sum(hb.p_bid_cap for hb in self.hubs))

    # -- window preparation -------------------------------------------------

    def prepare(
        self,
        start: int,
        horizon: int,
        dec_costs: dict[str, float],
        initial_states: dict[str, list[np.ndarray]] | None = None,
    ) -> None:
        self.start = start
        self.horizon = horizon
        self.dec_costs = dict(dec_costs)
        self.layout = SharedLayout(self.hub_ids, horizon)
        self.state = ConsensusState.cold(self.layout.dim, 2, self.rho0, self.rho_growth)
        self._warm.clear()
        self._last_plans.clear()
        self.window_tariffs = self.tariffs.window(start, horizon)
        self._hub_sub = {}
        for hub in self.hubs:
            states0 = initial_states.get(hub.id) if initial_states else None
            block = build_feasible_set(hub, start, horizon, self.profiles, states0)
            n_ext = block.var_map.n + 1  # trailing variable: cost improvement
            cost_vec = grid_cost_vector(block, self.window_tariffs)
            # Equality tying the cost improvement to the plan's grid cost.
            tie = np.concatenate([cost_vec, [1.0]])
            eq = sp.vstack(
                [
                    sp.hstack([block.eq_matrix, sp.csr_matrix((block.eq_rhs.size, 1))]),
                    sp.csr_matrix(tie),
                ],
                format="csr",
            )
            eq_rhs = np.concatenate([block.eq_rhs, [dec_costs[hub.id]]])
            ineq = sp.hstack([block.ineq_matrix, sp.csr_matrix((block.ineq_rhs.size, 1))], format="csr")
            cost_ext = np.concatenate([cost_vec, [0.0]])
            quad_mask = np.zeros(n_ext)
            vm = block.var_map
            quad_mask[vm.elec_net] = 1.0
            quad_mask[vm.heat_net] = 1.0
            quad_mask[-1] = 1.0
            self._hub_sub[hub.id] = {
                "block": block,
                "n": n_ext,
                "eq": eq,
                "eq_rhs": eq_rhs,
                "ineq": ineq,
                "ineq_rhs": block.ineq_rhs,
                "cost": cost_ext,
                "quad_mask": quad_mask,
            }
        self._coord_cache = self._build_coordinator_structure()

    def seed_shared(self, z: np.ndarray, duals_hub: np.ndarray, duals_coord: np.ndarray) -> None:
        """Warm-start the consensus variables (e.g. from the previous game)."""
        assert self.state is not None
        self.state.z = z.copy()
        self.state.z_prev = z.copy()
        self.state.duals = [duals_hub.copy(), duals_coord.copy()]

    def _build_coordinator_structure(self) -> dict:
        lay = self.layout
        T = self.horizon
        H = len(self.hubs)
        n = lay.dim + T + 2  # copies + cluster trade (T) + bid + delta cost
        trade_idx = np.arange(lay.dim, lay.dim + T)
        bid_idx = lay.dim + T
        dj_idx = lay.dim + T + 1
        rows, cols, vals = [], [], []
        # Per-step: sum of electricity copies equals the cluster trade.
        for i, hid in enumerate(lay.hub_ids):
            e = lay.elec(hid)
            rows.append(np.arange(T))
            cols.append(np.arange(e.start, e.stop))
            vals.append(np.ones(T))
        rows.append(np.arange(T))
        cols.append(trade_idx)
        vals.append(-np.ones(T))
        # Per-step: heat copies sum to zero.
        for hid in lay.hub_ids:
            q = lay.heat(hid)
            rows.append(T + np.arange(T))
            cols.append(np.arange(q.start, q.stop))
            vals.append(np.ones(T))
        # Cost improvements sum to the cluster total.
        rows.append(np.full(H, 2 * T))
        cols.append(np.array([lay.delta_cost(hid) for hid in lay.hub_ids]))
        vals.append(np.ones(H))
        rows.append(np.array([2 * T]))
        cols.append(np.array([dj_idx]))
        vals.append(np.array([-1.0]))
        eq = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(2 * T + 1, n),
        ).tocsr()
        return {"n": n, "eq": eq, "eq_rhs": np.zeros(2 * T + 1),
                "trade_idx": trade_idx, "bid_idx": bid_idx, "dj_idx": dj_idx}

    # -- subproblems ---------------------------------------------------------

    def hub_subproblem(self, hub: HubSpec, z: np.ndarray, lam: np.ndarray,
                       rho: float, mode: ClusterProblemMode) -> tuple[HubPlan, float, np.ndarray]:
        """Solve one hub's augmented-Lagrangian subproblem.

        Returns the plan, its cost improvement, and the shared-block vector.
        """
        data = self._hub_sub[hub.id]
        lay = self.layout
        vm = data["block"].var_map
        n = data["n"]
        lin = np.zeros(n)
        if mode.kind == "interim":
            lin += data["cost"]
        shared_cols = {
            "elec": (vm.elec_net, lay.elec(hub.id)),
            "heat": (vm.heat_net, lay.heat(hub.id)),
        }
        for _, (cols, zslice) in shared_cols.items():
            lin[cols] += lam[zslice] - rho * z[zslice]
        dj_pos = lay.delta_cost(hub.id)
        lin[-1] += lam[dj_pos] - rho * z[dj_pos]
        quad = sp.diags(rho * data["quad_mask"], format="csr")
        sub = ConvexSubproblem(
            n=n, linear=lin, quadratic=quad,
            eq_matrix=data["eq"], eq_rhs=data["eq_rhs"],
            ineq_matrix=data["ineq"], ineq_rhs=data["ineq_rhs"],
        )
        try:
            rep = solve_or_raise(sub, context=f"hub {hub.id} subproblem",
                                 tol=self.tol, max_iter=self.max_iter,
                                 warm_start=self._warm.get(hub.id))
        except SolverError as exc:
            raise SolverError(f"cluster {self.cluster_id}: {exc}") from None
        self._warm[hub.id] = rep.x
        plan = HubPlan.from_vector(rep.x[:-1], vm)
        delta_cost = float(rep.x[-1])
        shared = np.zeros(lay.dim)
        shared[lay.elec(hub.id)] = plan.elec_net
        shared[lay.heat(hub.id)] = plan.heat_net
        shared[dj_pos] = delta_cost
        return plan, delta_cost, shared

    def coordinator_subproblem(self, z: np.ndarray, lam: np.ndarray, rho: float,
                               mode: ClusterProblemMode) -> tuple[np.ndarray, np.ndarray, float, float]:
        """Coordinator update; returns (copies, cluster trade, bid, delta cost)."""
        if mode.kind == "interim":
            return self._interim_projection(z, lam, rho, mode)
        cache = self._coord_cache
        lay = self.layout
        n = cache["n"]
        T = self.horizon
        mu, M, alpha = mode.mu, mode.n_clusters, mode.alpha
        quad_diag = np.zeros(n)
        quad_diag[: lay.dim] = rho
        quad_diag[cache["trade_idx"]] = 1.0 / (2.0 * mu * M)
        quad_diag[cache["bid_idx"]] = 1.0 / (2.0 * mu * M)
        lin = np.zeros(n)
        lin[: lay.dim] = lam - rho * z
        ref = mode.trade_reference
        lin[cache["trade_idx"]] = ref[:T] / (2.0 * mu * M)
        lin[cache["bid_idx"]] = ref[T] / (2.0 * mu * M)
        log_vec = np.zeros(n)
        log_vec[cache["dj_idx"]] = 1.0
        log_vec[cache["bid_idx"]] = -1.0
        sub = ConvexSubproblem(
            n=n, linear=lin, quadratic=sp.diags(quad_diag, format="csr"),
            eq_matrix=cache["eq"], eq_rhs=cache["eq_rhs"],
            log_terms=[LogTerm(weight=alpha, coeffs=log_vec, floor=mode.log_floor)],
        )
        rep = solve_or_raise(sub, context=f"cluster {self.cluster_id} coordinator",
                             tol=self.tol, max_iter=self.max_iter,
                             warm_start=self._warm.get("__coord__"))
        self._warm["__coord__"] = rep.x
        copies = rep.x[: lay.dim]
        trade = rep.x[cache["trade_idx"]].copy()
        bid = float(rep.x[cache["bid_idx"]])
        dj = float(rep.x[cache["dj_idx"]])
        return copies, trade, bid, dj

    def _interim_projection(self, z, lam, rho, mode):
        """Closed-form coordinator update when cluster trades are fixed.

        Minimizing ``lam@v + rho/2 ||v - z||^2`` under per-step sum targets
        is a shifted Euclidean projection onto the target hyperplanes.
        """
        lay = self.layout
        T = self.horizon
        H = len(self.hubs)
        target = np.asarray(mode.fixed_trade, dtype=float)
        if target.shape != (T,):
            raise ValueError("fixed trade profile length does not match horizon")
        if np.max(np.abs(target)) > self.total_trade_cap + 1e-9:
            if mode.enforce_caps:
                raise ClusterTopologyError(
                    f"cluster {self.cluster_id}: fixed trade exceeds aggregate hub cap "
                    f"({np.max(np.abs(target)):.3f} > {self.total_trade_cap:.3f} kWh)"
                )
            # Standing obligation beyond current capability (e.g. a member
            # departed): aim for what the hubs can deliver and let the grid
            # absorb the difference via the mismatch protocol.
            target = np.clip(target, -self.total_trade_cap, self.total_trade_cap)
        copies = np.zeros(lay.dim)
        elec_z = np.stack([z[lay.elec(hid)] for hid in lay.hub_ids])
        elec_l = np.stack([lam[lay.elec(hid)] for hid in lay.hub_ids])
        theta_p = (rho * (elec_z.sum(axis=0) - target) - elec_l.sum(axis=0)) / H
        heat_z = np.stack([z[lay.heat(hid)] for hid in lay.hub_ids])
        heat_l = np.stack([lam[lay.heat(hid)] for hid in lay.hub_ids])
        theta_q = (rho * heat_z.sum(axis=0) - heat_l.sum(axis=0)) / H
        for i, hid in enumerate(lay.hub_ids):
            copies[lay.elec(hid)] = elec_z[i] - (elec_l[i] + theta_p) / rho
            copies[lay.heat(hid)] = heat_z[i] - (heat_l[i] + theta_q) / rho
            dj = lay.delta_cost(hid)
            copies[dj] = z[dj] - lam[dj] / rho
        dj_total = float(sum(copies[lay.delta_cost(hid)] for hid in lay.hub_ids))
        return copies, target.copy(), 0.0, dj_total

    # -- full inner runs -----------------------------------------------------

    def _agents(self, mode: ClusterProblemMode):
        coord_out: dict = {}

        def hubs_agent(z, lam, rho):
            shared = np.zeros(self.layout.dim)
            for hub in self.hubs:
                plan, dj, part = self.hub_subproblem(hub, z, lam, rho, mode)
                self._last_plans[hub.id] = plan
                coord_out.setdefault("hub_dj", {})[hub.id] = dj
                shared += part
            return shared

        def coord_agent(z, lam, rho):
            copies, trade, bid, dj = self.coordinator_subproblem(z, lam, rho, mode)
            coord_out["trade"], coord_out["bid"], coord_out["dj"] = trade, bid, dj
            return copies

        return [hubs_agent, coord_agent], coord_out

    def run(self, mode: ClusterProblemMode, eps_primal: float, eps_dual: float,
            w_max: int, restart_rho: bool = True) -> ClusterSolution:
        """Run the inner consensus to convergence or the iteration limit."""
        assert self.state is not None, "call prepare() first"
        if restart_rho:
            self.state.restart(self.rho0)
        agents, coord_out = self._agents(mode)
        outcome = run_consensus(self.state, agents, eps_primal, eps_dual, w_max)
        lay = self.layout
        return ClusterSolution(
            plans=dict(self._last_plans),
            hub_delta_costs=dict(coord_out["hub_dj"]),
            consensus_trades={hid: self.state.z[lay.elec(hid)].copy() for hid in lay.hub_ids},
            cluster_trade=coord_out["trade"],
            cluster_bid=coord_out["bid"],
            cluster_delta_cost=coord_out["dj"],
            outcome=outcome,
        )
