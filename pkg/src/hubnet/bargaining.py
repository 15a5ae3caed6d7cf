"""Inter-cluster bargaining game solved by dual consensus ADMM.

Cluster coordinators exchange dual estimates ``y`` (one price per horizon
step plus one for the cost-bid coupling), accumulate disagreement in ``d``,
form a trade reference ``z`` and solve their inner cluster problem against
it.  At consensus the recovered trades clear the network: cluster trades
sum to zero at every step and cost bids sum to zero.

A direct (non-distributed) solve of the same welfare problem is provided
for validation and diagnostics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .consensus import ClusterProblemMode, ClusterWorker
from .hub import HubPlan, HubSpec, Tariffs, build_feasible_set, grid_cost_vector
from .solver import ConvexSubproblem, LogTerm, solve_or_raise

log = logging.getLogger(__name__)


@dataclass
class BargainingParams:
    """Algorithm knobs; defaults follow the reference tuning."""

    mu0: float = 2000.0
    mu_decay: float = 0.03
    mu_floor_frac: float = 0.01
    sigma_primal: float = 0.003
    sigma_dual: float = 0.003
    k_max: int = 200
    eps_primal: float = 0.05
    eps_dual: float = 0.03
    w_max: int = 200
    log_floor_scale: float = 1e-6

    def log_floor(self, delta_cost_estimate: float) -> float:
        return max(1e-9, self.log_floor_scale * max(1.0, abs(delta_cost_estimate)))


@dataclass
class ClusterBid:
    """A cluster's converged position in the game."""

    trade: np.ndarray  # kWh per step, positive = cluster imports
    bid: float  # CHF over the horizon, positive = cluster pays
    delta_cost: float  # decentralized-minus-grid cost over the horizon
    alpha: float

    @property
    def surplus(self) -> float:
        return self.delta_cost - self.bid


@dataclass
class DualAdmmState:
    cluster_ids: list[str]
    horizon: int
    mu: float
    y: dict[str, np.ndarray] = field(default_factory=dict)
    y_prev: dict[str, np.ndarray] = field(default_factory=dict)
    d: dict[str, np.ndarray] = field(default_factory=dict)
    z: dict[str, np.ndarray] = field(default_factory=dict)
    neighbors: dict[str, list[str]] = field(default_factory=dict)
    k: int = 0

    @classmethod
    def cold(cls, cluster_ids: list[str], horizon: int, mu: float,
             neighbors: dict[str, list[str]] | None = None) -> "DualAdmmState":
        ids = sorted(cluster_ids)
        dim = horizon + 1
        if neighbors is None:
            neighbors = {m: [n for n in ids if n != m] for m in ids}
        for m, ns in neighbors.items():
            for n in ns:
                if m not in neighbors.get(n, []):
                    raise ValueError(f"neighbor sets not symmetric: {m} <-> {n}")
        return cls(
            cluster_ids=ids,
            horizon=horizon,
            mu=mu,
            y={m: np.zeros(dim) for m in ids},
            y_prev={m: np.zeros(dim) for m in ids},
            d={m: np.zeros(dim) for m in ids},
            z={m: np.zeros(dim) for m in ids},
            neighbors=neighbors,
        )


def outer_update(state: DualAdmmState, cluster: str) -> tuple[np.ndarray, np.ndarray]:
    """Dual-price and trade-reference update for one cluster.

    The reference sum carries a self term so that, at the fixed point, the
    recovered trades clear the network exactly (the divisor below is the
    cluster count, which equals the self-inclusive neighborhood size on the
    complete communication graph used here).
    """
    mu = state.mu
    y_m = state.y[cluster]
    missing = [n for n in state.neighbors[cluster] if n not in state.y]
    if missing:
        raise KeyError(f"missing neighbor duals for {cluster}: {missing}")
    diff = sum((y_m - state.y[n] for n in state.neighbors[cluster]), np.zeros_like(y_m))
    summ = sum((y_m + state.y[n] for n in state.neighbors[cluster]), np.zeros_like(y_m))
    d_new = state.d[cluster] + mu * diff
    z_new = mu * (summ + 2.0 * y_m) - d_new
    return d_new, z_new


def dual_recovery(trade: np.ndarray, bid: float, z: np.ndarray, mu: float, n_clusters: int) -> np.ndarray:
    """Recover the dual estimate from the cluster's solved trade and bid."""
    stacked = np.concatenate([np.asarray(trade, dtype=float), [float(bid)]])
    return (stacked + z) / (2.0 * mu * n_clusters)


def bargaining_residuals(state: DualAdmmState) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Per-cluster primal (disagreement) and dual (drift) residual stacks.

    The primal residual measures how far neighboring dual estimates are
    from agreeing; the dual residual is the step-scaled movement of their
    edge averages, which also captures drift common to all clusters (a pure
    disagreement-change measure would flag convergence while every dual is
    still ascending together and the market has not cleared).
    """
    r, s = {}, {}
    for m in state.cluster_ids:
        parts_r, parts_s = [], []
        for n in state.neighbors[m]:
            parts_r.append(0.5 * (state.y[m] - state.y[n]))
            parts_s.append(
                -(state.mu / 2.0)
                * ((state.y[m] - state.y_prev[m]) + (state.y[n] - state.y_prev[n]))
            )
        r[m] = np.concatenate(parts_r) if parts_r else np.zeros(0)
        s[m] = np.concatenate(parts_s) if parts_s else np.zeros(0)
    return r, s


def residuals_converged(state: DualAdmmState, sigma_primal: float, sigma_dual: float) -> bool:
    r, s = bargaining_residuals(state)
    return all(
        np.linalg.norm(r[m]) <= sigma_primal and np.linalg.norm(s[m]) <= sigma_dual
        for m in state.cluster_ids
    )


def welfare(bids: dict[str, ClusterBid]) -> tuple[float, float]:
    """Weighted welfare product and its log-form objective (diagnostics)."""
    j_nbg = 0.0
    for cid, b in sorted(bids.items()):
        if b.surplus <= 0.0:
            raise ValueError(f"cluster {cid} has nonpositive surplus {b.surplus:.6f}")
        j_nbg -= b.alpha * np.log(b.surplus)
    return float(np.exp(-j_nbg)), float(j_nbg)


@dataclass
class BargainingOutcome:
    bids: dict[str, ClusterBid]
    plans: dict[str, dict[str, HubPlan]]
    consensus_trades: dict[str, dict[str, np.ndarray]]
    state: DualAdmmState
    converged: bool
    fallback: bool
    iterations: int
    trace: list[dict] = field(default_factory=list)

    def clearing_error(self) -> tuple[float, float]:
        """(max per-step trade imbalance, total bid imbalance)."""
        trade_sum = sum(b.trade for b in self.bids.values())
        bid_sum = sum(b.bid for b in self.bids.values())
        return float(np.max(np.abs(trade_sum))), float(abs(bid_sum))


def run_bargaining(
    workers: dict[str, ClusterWorker],
    horizon: int,
    alphas: dict[str, float],
    params: BargainingParams,
    warm: DualAdmmState | None = None,
    game_tag: int = 0,
) -> BargainingOutcome:
    """Run the full game across prepared cluster workers.

    Workers must have been ``prepare``d on the same window beforehand.  On
    hitting the iteration limit the outcome is flagged as fallback: trades
    and bids are zeroed and callers must restrict hubs to intra-cluster
    trading until the game is solved again.
    """
    ids = sorted(workers)
    M = len(ids)
    if M == 0:
        raise ValueError("no clusters to bargain over")
    if M == 1:
        return _single_cluster_outcome(ids[0], workers[ids[0]], horizon, alphas, params)

    # The welfare maximizer is invariant to a common scaling of the weights;
    # normalizing to mean one keeps the log-term curvature on the scale the
    # step-size schedule was tuned for.
    alpha_scale = M / sum(alphas[m] for m in ids)
    alphas_norm = {m: alphas[m] * alpha_scale for m in ids}

    if all(workers[m].total_trade_cap == 0.0 for m in ids):
        # No cluster can trade: the coupling pins every trade and bid to
        # zero, so skip the annealing entirely.
        return _no_trade_outcome(ids, workers, horizon, alphas, params)

    state = warm if warm is not None else DualAdmmState.cold(ids, horizon, params.mu0)
    if warm is not None:
        # Continue near the previous game's converged step size (with some
        # reheat headroom) instead of re-annealing from scratch; the warm
        # duals are only meaningful at a comparable step-size scale.
        state.mu = min(params.mu0, max(state.mu * 4.0, params.mu0 * params.mu_floor_frac))
        state.k = 0
    trace: list[dict] = []
    converged = False
    solutions: dict = {}

    for k in range(params.k_max):
        for m in ids:
            d_new, z_new = outer_update(state, m)
            state.d[m], state.z[m] = d_new, z_new
        for m in ids:
            worker = workers[m]
            dj_est = float(
                sum(worker.state.z[worker.layout.delta_cost(h)] for h in worker.hub_ids)
            )
            mode = ClusterProblemMode(
                kind="bargaining",
                trade_reference=state.z[m],
                mu=state.mu,
                n_clusters=M,
                alpha=alphas_norm[m],
                log_floor=params.log_floor(dj_est),
            )
            solutions[m] = worker.run(mode, params.eps_primal, params.eps_dual, params.w_max)
        state.y_prev = {m: state.y[m].copy() for m in ids}
        for m in ids:
            state.y[m] = dual_recovery(
                solutions[m].cluster_trade, solutions[m].cluster_bid, state.z[m], state.mu, M
            )
        state.k = k + 1
        r, s = bargaining_residuals(state)
        trade_sum = sum(solutions[m].cluster_trade for m in ids)
        bid_sum = float(sum(solutions[m].cluster_bid for m in ids))
        for m in ids:
            trace.append(
                {
                    "game_t": game_tag,
                    "iteration": k + 1,
                    "cluster": m,
                    "trade_total_kwh": float(np.sum(solutions[m].cluster_trade)),
                    "bid_chf": float(solutions[m].cluster_bid),
                    "residual_primal": float(np.linalg.norm(r[m])),
                    "residual_dual": float(np.linalg.norm(s[m])),
                    "clearing_trade_max_kwh": float(np.max(np.abs(trade_sum))),
                    "clearing_bid_chf": bid_sum,
                    "mu": state.mu,
                }
            )
        if residuals_converged(state, params.sigma_primal, params.sigma_dual):
            converged = True
            break
        state.mu = max(state.mu * (1.0 - params.mu_decay), params.mu0 * params.mu_floor_frac)

    fallback = not converged
    if fallback:
        log.warning("bargaining hit the iteration limit; zeroing inter-cluster trades")
        bids = {
            m: ClusterBid(trade=np.zeros(horizon), bid=0.0, delta_cost=0.0, alpha=alphas[m])
            for m in ids
        }
    else:
        bids = {
            m: ClusterBid(
                trade=solutions[m].cluster_trade.copy(),
                bid=float(solutions[m].cluster_bid),
                delta_cost=float(solutions[m].cluster_delta_cost),
                alpha=alphas[m],
            )
            for m in ids
        }
    return BargainingOutcome(
        bids=bids,
        plans={m: solutions[m].plans for m in ids} if solutions else {m: {} for m in ids},
        consensus_trades={m: solutions[m].consensus_trades for m in ids} if solutions else {},
        state=state,
        converged=converged,
        fallback=fallback,
        iterations=state.k,
        trace=trace,
    )


def _single_cluster_outcome(cid, worker, horizon, alphas, params) -> BargainingOutcome:
    # With a single cluster the network coupling pins trade and bid to zero,
    # so the game degenerates to intra-cluster dispatch at zero net trade.
    return _no_trade_outcome([cid], {cid: worker}, horizon, alphas, params)


def _no_trade_outcome(ids, workers, horizon, alphas, params) -> BargainingOutcome:
    bids, plans, trades = {}, {}, {}
    converged = True
    for cid in ids:
        mode = ClusterProblemMode(kind="interim", fixed_trade=np.zeros(horizon))
        sol = workers[cid].run(mode, params.eps_primal, params.eps_dual, params.w_max)
        converged = converged and sol.outcome == "converged"
        dj = float(sum(sol.hub_delta_costs.values()))
        bids[cid] = ClusterBid(trade=np.zeros(horizon), bid=0.0, delta_cost=dj, alpha=alphas[cid])
        plans[cid] = sol.plans
        trades[cid] = sol.consensus_trades
    state = DualAdmmState.cold(list(ids), horizon, params.mu0)
    return BargainingOutcome(
        bids=bids,
        plans=plans,
        consensus_trades=trades,
        state=state,
        converged=converged,
        fallback=False,
        iterations=0,
        trace=[],
    )


# ---------------------------------------------------------------------------
# Direct (non-distributed) solve of the welfare problem, for validation.
# ---------------------------------------------------------------------------


@dataclass
class DirectSolution:
    bids: dict[str, ClusterBid]
    plans: dict[str, dict[str, HubPlan]]
    objective: float  # the log-form objective value


def solve_direct(
    clusters: dict[str, list[HubSpec]],
    alphas: dict[str, float],
    start: int,
    horizon: int,
    tariffs: Tariffs,
    dec_costs: dict[str, float],
    profiles: dict[str, np.ndarray] | None = None,
    initial_states: dict[str, list[np.ndarray]] | None = None,
    log_floor: float = 1e-6,
    tol: float = 1e-8,
) -> DirectSolution:
    """Solve the clustered welfare problem as one convex program."""
    cids = sorted(clusters)
    window = tariffs.window(start, horizon)
    blocks, offsets, order = {}, {}, []
    n = 0
    for cid in cids:
        for hub in sorted(clusters[cid], key=lambda hb: hb.id):
            blk = build_feasible_set(
                hub, start, horizon, profiles,
                initial_states.get(hub.id) if initial_states else None,
            )
            blocks[hub.id] = blk
            offsets[hub.id] = n
            order.append((cid, hub.id))
            n += blk.var_map.n
    cluster_vars = {}
    for cid in cids:
        cluster_vars[cid] = {"trade": np.arange(n, n + horizon), "bid": n + horizon, "dj": n + horizon + 1}
        n += horizon + 2

    rows = []
    rhs_parts = []

    def add_row(cols, vals, rhs_val):
        rows.append((np.asarray(cols), np.asarray(vals, dtype=float)))
        rhs_parts.append(rhs_val)

    eq_blocks = [
        sp.hstack(
            [
                sp.csr_matrix((blocks[hid].eq_rhs.size, offsets[hid])),
                blocks[hid].eq_matrix,
                sp.csr_matrix((blocks[hid].eq_rhs.size, n - offsets[hid] - blocks[hid].var_map.n)),
            ],
            format="csr",
        )
        for _, hid in order
    ]
    eq_rhs = [blocks[hid].eq_rhs for _, hid in order]

    for cid in cids:
        members = sorted(h.id for h in clusters[cid])
        cv = cluster_vars[cid]
        for t in range(horizon):
            cols = [offsets[hid] + blocks[hid].var_map.elec_net[t] for hid in members] + [cv["trade"][t]]
            add_row(cols, [1.0] * len(members) + [-1.0], 0.0)
            qcols = [offsets[hid] + blocks[hid].var_map.heat_net[t] for hid in members]
            add_row(qcols, [1.0] * len(members), 0.0)
        # Cluster cost improvement tied to the member plans' grid costs.
        cols, vals = [cv["dj"]], [1.0]
        total_dec = 0.0
        for hid in members:
            cvec = grid_cost_vector(blocks[hid], window)
            nz = np.nonzero(cvec)[0]
            cols.extend(offsets[hid] + nz)
            vals.extend(cvec[nz])
            total_dec += dec_costs[hid]
        add_row(cols, vals, total_dec)
    for t in range(horizon):
        add_row([cluster_vars[cid]["trade"][t] for cid in cids], [1.0] * len(cids), 0.0)
    add_row([cluster_vars[cid]["bid"] for cid in cids], [1.0] * len(cids), 0.0)

    r_idx, c_idx, vals_all = [], [], []
    for i, (cols, vals) in enumerate(rows):
        r_idx.append(np.full(cols.size, i))
        c_idx.append(cols)
        vals_all.append(vals)
    extra_eq = sp.coo_matrix(
        (np.concatenate(vals_all), (np.concatenate(r_idx), np.concatenate(c_idx))),
        shape=(len(rows), n),
    ).tocsr()
    A = sp.vstack(eq_blocks + [extra_eq], format="csr")
    b = np.concatenate(eq_rhs + [np.asarray(rhs_parts)])
    G = sp.block_diag([blocks[hid].ineq_matrix for _, hid in order], format="csr")
    G = sp.hstack([G, sp.csr_matrix((G.shape[0], n - G.shape[1]))], format="csr")
    h = np.concatenate([blocks[hid].ineq_rhs for _, hid in order])

    alpha_scale = len(cids) / sum(alphas[cid] for cid in cids)
    log_terms = []
    for cid in cids:
        coeffs = np.zeros(n)
        coeffs[cluster_vars[cid]["dj"]] = 1.0
        coeffs[cluster_vars[cid]["bid"]] = -1.0
        log_terms.append(LogTerm(weight=alphas[cid] * alpha_scale, coeffs=coeffs, floor=log_floor))

    sub = ConvexSubproblem(
        n=n, linear=np.zeros(n), eq_matrix=A, eq_rhs=b,
        ineq_matrix=G, ineq_rhs=h, log_terms=log_terms,
    )
    rep = solve_or_raise(sub, context="direct welfare solve", tol=tol, max_iter=200)

    bids, plans = {}, {}
    for cid in cids:
        cv = cluster_vars[cid]
        bids[cid] = ClusterBid(
            trade=rep.x[cv["trade"]].copy(),
            bid=float(rep.x[cv["bid"]]),
            delta_cost=float(rep.x[cv["dj"]]),
            alpha=alphas[cid],
        )
        plans[cid] = {
            hid: HubPlan.from_vector(
                rep.x[offsets[hid] : offsets[hid] + blocks[hid].var_map.n], blocks[hid].var_map
            )
            for c2, hid in order
            if c2 == cid
        }
    # Report the log objective in raw-weight units for comparability.
    return DirectSolution(bids=bids, plans=plans, objective=welfare(bids)[1])
