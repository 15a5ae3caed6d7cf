"""Hub-level data model: demands, trades, balances and grid costs.

``build_feasible_set`` assembles one hub's operating envelope over a
horizon as sparse linear constraints: device dynamics and polyhedra,
electricity/heat/gas balances, trade caps and splits.  Trade sign
convention throughout the package: ``elec_import`` is energy received from
peers (credited to the balance after the loss factor ``eta_p``),
``elec_export`` is energy sent to peers (debited in full), and
``elec_net = elec_import - elec_export`` so positive net trade means the
hub is a buyer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .devices import ELEC_IN, ELEC_OUT, GAS_IN, HEAT_IN, HEAT_OUT, N_CHANNELS, DeviceModel

# Per-step scalar series carried by every plan, in assembly order.
STEP_SERIES = (
    "grid_buy",
    "grid_sell",
    "gas_buy",
    "elec_import",
    "elec_export",
    "heat_import",
    "heat_export",
    "elec_net",
    "heat_net",
)


class HubDataError(ValueError):
    """Raised for inconsistent hub data or insufficient series coverage."""


@dataclass
class Tariffs:
    """Per-step prices in CHF/kWh, all series covering the data horizon."""

    elec_buy: np.ndarray
    elec_feedin: np.ndarray
    gas: np.ndarray
    trading_fee: np.ndarray

    def __post_init__(self) -> None:
        for name in ("elec_buy", "elec_feedin", "gas", "trading_fee"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        lengths = {s.size for s in (self.elec_buy, self.elec_feedin, self.gas, self.trading_fee)}
        if len(lengths) != 1:
            raise HubDataError("tariff series must have equal lengths")
        for name in ("elec_buy", "elec_feedin", "gas", "trading_fee"):
            if np.any(getattr(self, name) < 0.0):
                raise HubDataError(f"tariff {name} has negative entries")
        if np.any(self.elec_feedin > self.elec_buy + 1e-12):
            raise HubDataError("feed-in tariff above purchase price invites grid arbitrage")

    @classmethod
    def from_daily(
        cls,
        n_steps: int,
        elec_peak: float = 0.27,
        elec_offpeak: float = 0.22,
        peak_hours: tuple[int, ...] = tuple(range(7, 20)),
        elec_feedin: float = 0.12,
        gas: float = 0.115,
        trading_fee: float = 0.02,
    ) -> "Tariffs":
        hours = np.arange(n_steps) % 24
        buy = np.where(np.isin(hours, np.asarray(peak_hours)), elec_peak, elec_offpeak)
        return cls(
            elec_buy=buy,
            elec_feedin=np.full(n_steps, elec_feedin),
            gas=np.full(n_steps, gas),
            trading_fee=np.full(n_steps, trading_fee),
        )

    def window(self, start: int, length: int) -> "Tariffs":
        if start + length > self.elec_buy.size:
            raise HubDataError("tariff series too short for requested window")
        sl = slice(start, start + length)
        return Tariffs(self.elec_buy[sl], self.elec_feedin[sl], self.gas[sl], self.trading_fee[sl])


@dataclass
class HubSpec:
    id: str
    devices: list[DeviceModel]
    elec_demand: np.ndarray
    heat_demand: np.ndarray
    eta_p: float = 1.0
    eta_q: float = 1.0
    p_bid_cap: float = 0.0
    q_bid_cap: float = 0.0
    annual_demand: float = 0.0

    def __post_init__(self) -> None:
        self.elec_demand = np.asarray(self.elec_demand, dtype=float)
        self.heat_demand = np.asarray(self.heat_demand, dtype=float)
        if not (0.0 < self.eta_p <= 1.0 and 0.0 < self.eta_q <= 1.0):
            raise HubDataError(f"hub {self.id}: trade efficiencies must lie in (0, 1]")
        if self.p_bid_cap < 0.0 or self.q_bid_cap < 0.0:
            raise HubDataError(f"hub {self.id}: trade caps must be nonnegative")
        if self.elec_demand.size != self.heat_demand.size:
            raise HubDataError(f"hub {self.id}: demand series lengths differ")

    @property
    def n_steps(self) -> int:
        return self.elec_demand.size

    def initial_states(self) -> list[np.ndarray]:
        return [dev.initial_state.copy() for dev in self.devices]


@dataclass
class VariableMap:
    """Index arrays locating every plan quantity inside the flat vector."""

    n: int
    series: dict[str, np.ndarray]
    device_inputs: list[np.ndarray]  # (T, 5) index arrays
    device_states: list[np.ndarray]  # (T, state_dim) index arrays

    def __getattr__(self, name: str) -> np.ndarray:
        try:
            return self.series[name]
        except KeyError:
            raise AttributeError(name) from None


@dataclass
class ConstraintBlock:
    horizon: int
    var_map: VariableMap
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    ineq_matrix: sp.csr_matrix
    ineq_rhs: np.ndarray


@dataclass
class HubPlan:
    """Decision trajectory of one hub over a horizon."""

    grid_buy: np.ndarray
    grid_sell: np.ndarray
    gas_buy: np.ndarray
    elec_import: np.ndarray
    elec_export: np.ndarray
    heat_import: np.ndarray
    heat_export: np.ndarray
    elec_net: np.ndarray
    heat_net: np.ndarray
    device_inputs: list[np.ndarray] = field(default_factory=list)  # (T, 5) each
    device_states: list[np.ndarray] = field(default_factory=list)  # (T, s) each

    @classmethod
    def from_vector(cls, x: np.ndarray, vmap: VariableMap) -> "HubPlan":
        return cls(
            **{name: x[idx] for name, idx in vmap.series.items()},
            device_inputs=[x[idx] for idx in vmap.device_inputs],
            device_states=[x[idx] for idx in vmap.device_states],
        )

    @property
    def horizon(self) -> int:
        return self.grid_buy.size

    def balance_violation(self, hub: HubSpec, elec_demand: np.ndarray, heat_demand: np.ndarray) -> float:
        """Worst absolute violation of the three energy balances."""
        dev_p = sum((u[:, ELEC_OUT] - u[:, ELEC_IN] for u in self.device_inputs), np.zeros(self.horizon))
        dev_q = sum((u[:, HEAT_OUT] - u[:, HEAT_IN] for u in self.device_inputs), np.zeros(self.horizon))
        dev_g = sum((u[:, GAS_IN] for u in self.device_inputs), np.zeros(self.horizon))
        elec = self.grid_buy - self.grid_sell + dev_p + hub.eta_p * self.elec_import - self.elec_export - elec_demand
        heat = dev_q + hub.eta_q * self.heat_import - self.heat_export - heat_demand
        gas = self.gas_buy - dev_g
        return float(max(np.max(np.abs(elec)), np.max(np.abs(heat)), np.max(np.abs(gas))))


class _Allocator:
    def __init__(self) -> None:
        self.n = 0

    def block(self, *shape: int) -> np.ndarray:
        size = int(np.prod(shape))
        idx = np.arange(self.n, self.n + size).reshape(shape)
        self.n += size
        return idx


class _SparseBuilder:
    """COO triplet accumulator with a running row counter."""

    def __init__(self, n_cols: int) -> None:
        self.n_cols = n_cols
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.rhs: list[np.ndarray] = []
        self.n_rows = 0

    def add_rows(self, cols_per_row: list[np.ndarray], vals_per_row: list[np.ndarray], rhs: np.ndarray) -> None:
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        for r, (cols, vals) in enumerate(zip(cols_per_row, vals_per_row)):
            cols = np.atleast_1d(cols)
            self.rows.append(np.full(cols.size, self.n_rows + r))
            self.cols.append(cols)
            self.vals.append(np.atleast_1d(np.asarray(vals, dtype=float)))
        self.rhs.append(rhs)
        self.n_rows += rhs.size

    def add_series(self, terms: list[tuple[np.ndarray, float]], rhs: np.ndarray) -> None:
        """T parallel rows: sum over (index_series, coeff) terms equals rhs."""
        rhs = np.asarray(rhs, dtype=float)
        T = rhs.size
        for idx, _ in terms:
            if idx.size != T:
                raise HubDataError("series length mismatch in constraint assembly")
        rows = np.tile(np.arange(self.n_rows, self.n_rows + T), len(terms))
        cols = np.concatenate([idx for idx, _ in terms])
        vals = np.concatenate([np.full(T, coeff) for _, coeff in terms])
        self.rows.append(rows)
        self.cols.append(cols)
        self.vals.append(vals)
        self.rhs.append(rhs)
        self.n_rows += T

    def build(self) -> tuple[sp.csr_matrix, np.ndarray]:
        if self.n_rows == 0:
            return sp.csr_matrix((0, self.n_cols)), np.zeros(0)
        mat = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.n_rows, self.n_cols),
        ).tocsr()
        return mat, np.concatenate(self.rhs)


def build_feasible_set(
    hub: HubSpec,
    start: int,
    horizon: int,
    profiles: dict[str, np.ndarray] | None = None,
    initial_states: list[np.ndarray] | None = None,
) -> ConstraintBlock:
    """Assemble the hub's constraints over ``[start, start + horizon)``.

    ``profiles`` maps profile keys (full series) used by device availability
    bounds; ``initial_states`` overrides the device defaults (used by the
    receding-horizon driver).  Assembly is deterministic: identical inputs
    produce bit-identical blocks.
    """
    if horizon <= 0:
        raise HubDataError("horizon must be positive")
    if start < 0 or start + horizon > hub.n_steps:
        raise HubDataError(
            f"hub {hub.id}: demand series cover {hub.n_steps} steps, "
            f"requested window [{start}, {start + horizon})"
        )
    profiles = profiles or {}
    if initial_states is None:
        initial_states = hub.initial_states()

    alloc = _Allocator()
    series = {name: alloc.block(horizon) for name in STEP_SERIES}
    device_inputs = [alloc.block(horizon, N_CHANNELS) for _ in hub.devices]
    device_states = [alloc.block(horizon, dev.state_dim) for dev in hub.devices]
    n = alloc.n
    vmap = VariableMap(n=n, series=series, device_inputs=device_inputs, device_states=device_states)

    elec_demand = hub.elec_demand[start : start + horizon]
    heat_demand = hub.heat_demand[start : start + horizon]

    eq = _SparseBuilder(n)
    ineq = _SparseBuilder(n)

    dev_p_terms = [(u[:, ELEC_OUT], 1.0) for u in device_inputs] + [(u[:, ELEC_IN], -1.0) for u in device_inputs]
    dev_q_terms = [(u[:, HEAT_OUT], 1.0) for u in device_inputs] + [(u[:, HEAT_IN], -1.0) for u in device_inputs]
    dev_g_terms = [(u[:, GAS_IN], -1.0) for u in device_inputs]

    eq.add_series(
        [(series["grid_buy"], 1.0), (series["grid_sell"], -1.0),
         (series["elec_import"], hub.eta_p), (series["elec_export"], -1.0)] + dev_p_terms,
        elec_demand,
    )
    eq.add_series(
        [(series["heat_import"], hub.eta_q), (series["heat_export"], -1.0)] + dev_q_terms,
        heat_demand,
    )
    eq.add_series([(series["gas_buy"], 1.0)] + dev_g_terms, np.zeros(horizon))
    eq.add_series(
        [(series["elec_net"], 1.0), (series["elec_import"], -1.0), (series["elec_export"], 1.0)],
        np.zeros(horizon),
    )
    eq.add_series(
        [(series["heat_net"], 1.0), (series["heat_import"], -1.0), (series["heat_export"], 1.0)],
        np.zeros(horizon),
    )

    for name in ("grid_buy", "grid_sell", "gas_buy", "elec_import", "elec_export", "heat_import", "heat_export"):
        ineq.add_series([(series[name], -1.0)], np.zeros(horizon))
    for name, cap in (
        ("elec_import", hub.p_bid_cap), ("elec_export", hub.p_bid_cap),
        ("heat_import", hub.q_bid_cap), ("heat_export", hub.q_bid_cap),
    ):
        if cap == 0.0:
            # Degenerate interval: keep the interior-point path well posed.
            eq.add_series([(series[name], 1.0)], np.zeros(horizon))
        else:
            ineq.add_series([(series[name], 1.0)], np.full(horizon, cap))

    for dev, u_idx, x_idx, x0 in zip(hub.devices, device_inputs, device_states, initial_states):
        s = dev.state_dim
        if s:
            x0 = np.asarray(x0, dtype=float)
            if x0.shape != (s,):
                raise HubDataError(f"hub {hub.id}: initial state shape mismatch for device {dev.name}")
            disturbance = np.zeros(horizon)
            if dev.disturbance_profile_key and dev.disturbance_profile_key in profiles:
                disturbance = profiles[dev.disturbance_profile_key][start : start + horizon]
            for t in range(horizon):
                rhs = dev.D @ np.array([disturbance[t]])
                cols, vals = [], []
                for r in range(s):
                    row_cols = [x_idx[t, r]]
                    row_vals = [1.0]
                    if t > 0:
                        row_cols += list(x_idx[t - 1])
                        row_vals += list(-dev.A[r])
                    row_cols += list(u_idx[t])
                    row_vals += list(-dev.B[r])
                    cols.append(np.array(row_cols))
                    vals.append(np.array(row_vals))
                base = rhs + (dev.A @ x0 if t == 0 else 0.0)
                eq.add_rows(cols, vals, base)
            for r in range(s):
                ineq.add_series([(x_idx[:, r], 1.0)], np.full(horizon, dev.state_upper[r]))
                ineq.add_series([(x_idx[:, r], -1.0)], np.full(horizon, -dev.state_lower[r]))
        for row, rhs_val in zip(dev.input_eq_matrix, dev.input_eq_rhs):
            nz = np.nonzero(row)[0]
            eq.add_series([(u_idx[:, ch], row[ch]) for ch in nz], np.full(horizon, rhs_val))
        for row, rhs_val in zip(dev.input_ineq_matrix, dev.input_ineq_rhs):
            nz = np.nonzero(row)[0]
            ineq.add_series([(u_idx[:, ch], row[ch]) for ch in nz], np.full(horizon, rhs_val))
        for bound in dev.availability:
            profile = profiles.get(bound.profile_key)
            if profile is None:
                raise HubDataError(
                    f"hub {hub.id}: device {dev.name} needs profile {bound.profile_key!r}"
                )
            if profile.size < start + horizon:
                raise HubDataError(f"profile {bound.profile_key!r} too short for window")
            ineq.add_series(
                [(u_idx[:, bound.channel], 1.0)],
                bound.capacity * profile[start : start + horizon],
            )

    eq_mat, eq_rhs = eq.build()
    ineq_mat, ineq_rhs = ineq.build()
    return ConstraintBlock(
        horizon=horizon,
        var_map=vmap,
        eq_matrix=eq_mat,
        eq_rhs=eq_rhs,
        ineq_matrix=ineq_mat,
        ineq_rhs=ineq_rhs,
    )


def grid_cost_vector(block: ConstraintBlock, tariffs: Tariffs, include_trading_fee: bool = True) -> np.ndarray:
    """Linear objective coefficients realizing the grid-cost of a plan.

    The trading fee applies to ``|elec_net|`` through its nonnegative split
    ``elec_import + elec_export``; with a positive fee an optimal plan never
    holds both sides positive, so the split is exact.
    """
    if tariffs.elec_buy.size != block.horizon:
        raise HubDataError("tariff window length does not match block horizon")
    c = np.zeros(block.var_map.n)
    vm = block.var_map
    c[vm.grid_buy] = tariffs.elec_buy
    c[vm.grid_sell] = -tariffs.elec_feedin
    c[vm.gas_buy] = tariffs.gas
    if include_trading_fee:
        c[vm.elec_import] += tariffs.trading_fee
        c[vm.elec_export] += tariffs.trading_fee
    return c


def _check_nonnegative(plan: HubPlan) -> None:
    for name in ("grid_buy", "grid_sell", "gas_buy", "elec_import", "elec_export", "heat_import", "heat_export"):
        if np.any(getattr(plan, name) < -1e-9):
            raise HubDataError(f"plan has negative {name} entries")


def grid_cost(plan: HubPlan, tariffs: Tariffs) -> float:
    """Grid-exchange cost of a plan in CHF, trading fee on |net elec trade|."""
    if tariffs.elec_buy.size != plan.horizon:
        raise HubDataError("tariff window length does not match plan horizon")
    _check_nonnegative(plan)
    return float(
        tariffs.elec_buy @ plan.grid_buy
        - tariffs.elec_feedin @ plan.grid_sell
        + tariffs.gas @ plan.gas_buy
        + tariffs.trading_fee @ (plan.elec_import + plan.elec_export)
    )


def realized_step_cost(plan: HubPlan, t: int, tariffs: Tariffs) -> float:
    """Single-step slice of :func:`grid_cost` at plan-local step ``t``."""
    if not 0 <= t < plan.horizon:
        raise HubDataError(f"step {t} outside plan horizon {plan.horizon}")
    _check_nonnegative(plan)
    return float(
        tariffs.elec_buy[t] * plan.grid_buy[t]
        - tariffs.elec_feedin[t] * plan.grid_sell[t]
        + tariffs.gas[t] * plan.gas_buy[t]
        + tariffs.trading_fee[t] * (plan.elec_import[t] + plan.elec_export[t])
    )
