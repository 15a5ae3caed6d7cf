"""Scenario configuration: JSON schema, validation, synthetic profiles.

A scenario file fully determines a simulation: topology, device presets,
tariffs, timing, algorithm parameters, demand/irradiance series (inline or
generated from a seeded seasonal model) and scheduled topology events.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bargaining import BargainingParams
from .devices import build_device
from .hub import HubSpec, Tariffs
from .orchestrator import ControllerConfig, Schedule, ScheduleError
from .topology import NetworkTopology, TopologyError, TopologyEvent

SCHEMA_VERSION = 1

SEASON_FACTORS = {
    # (heat level, irradiance level)
    "winter": (1.6, 0.45),
    "spring": (1.0, 0.8),
    "summer": (0.45, 1.0),
    "autumn": (1.1, 0.65),
}


class ScenarioError(ValueError):
    """Configuration file violates the schema or an invariant."""


def generate_synthetic(season: str, seed: int, n_steps: int, noise: float = 0.05) -> dict[str, np.ndarray]:
    """Deterministic seasonal base profiles (per-unit scale).

    Returns ``elec_base`` and ``heat_base`` (mean near one, nonnegative)
    and ``irradiance`` (clear-sky bell with seeded cloud dips, zero at
    night).
    """
    if season not in SEASON_FACTORS:
        raise ScenarioError(f"unknown season {season!r}; choose from {sorted(SEASON_FACTORS)}")
    if noise < 0.0:
        raise ScenarioError("noise level must be nonnegative")
    heat_level, irr_level = SEASON_FACTORS[season]
    rng = np.random.default_rng(seed)
    hours = np.arange(n_steps) % 24
    elec = (
        0.75
        + 0.5 * np.exp(-(((hours - 9.0) / 2.5) ** 2))
        + 0.65 * np.exp(-(((hours - 19.0) / 3.0) ** 2))
    )
    heat = heat_level * (1.0 + 0.35 * np.cos((hours - 4.0) / 24.0 * 2.0 * np.pi))
    sun = np.clip(np.sin((hours - 6.0) / 13.0 * np.pi), 0.0, None)
    sun[(hours < 6) | (hours > 19)] = 0.0
    clouds = np.clip(1.0 - np.abs(rng.normal(0.0, 2.0 * noise, size=n_steps)), 0.2, 1.0)
    irr = irr_level * sun * clouds
    elec = np.clip(elec * (1.0 + rng.normal(0.0, noise, size=n_steps)), 0.05, None)
    heat = np.clip(heat * (1.0 + rng.normal(0.0, noise, size=n_steps)), 0.0, None)
    return {"elec_base": elec, "heat_base": heat, "irradiance": irr}


@dataclass
class Scenario:
    name: str
    seed: int
    duration: int
    schedule: Schedule
    tariffs: Tariffs
    hubs: dict[str, HubSpec]
    cluster_map: dict[str, list[str]]
    weights: dict[str, float]
    inactive_clusters: set[str]
    events: list[TopologyEvent]
    profiles: dict[str, np.ndarray]
    controller: ControllerConfig
    raw: dict = field(default_factory=dict)

    def topology(self) -> NetworkTopology:
        topo = NetworkTopology(
            clusters={cid: list(hids) for cid, hids in self.cluster_map.items()},
            weights=self.weights,
            inactive=set(self.inactive_clusters),
            events=list(self.events),
        )
        topo.validate_events(self.schedule.t_rh, set(self.hubs))
        return topo

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ScenarioError(f"{where}: missing required field {key!r}")
    return data[key]


def _series_or_scaled(value, base: np.ndarray, n_steps: int, where: str) -> np.ndarray:
    if isinstance(value, (int, float)):
        return float(value) * base
    if isinstance(value, dict):
        if "scale" not in value:
            raise ScenarioError(f"{where}: demand spec dict needs a 'scale' entry")
        return float(value["scale"]) * base
    if isinstance(value, list):
        arr = np.asarray(value, dtype=float)
        if arr.size < n_steps:
            raise ScenarioError(f"{where}: inline series has {arr.size} steps, need >= {n_steps}")
        if np.any(arr < 0.0):
            raise ScenarioError(f"{where}: demand series has negative entries")
        return arr
    raise ScenarioError(f"{where}: demand must be a scale factor or an inline series")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
    return parse_scenario(data)


def parse_scenario(data: dict) -> Scenario:
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version}")
    name = data.get("name", "scenario")
    seed = int(data.get("seed", 0))
    duration = int(_require(data, "duration", "scenario"))
    if duration <= 0:
        raise ScenarioError("scenario: duration must be positive")

    sched_raw = _require(data, "schedule", "scenario")
    t_rh = int(_require(sched_raw, "t_rh", "schedule"))
    t_f = sched_raw.get("t_f")
    if t_f is None:
        # Settle once at the end of the run (rounded up to a boundary).
        t_f = max(t_rh, ((duration + t_rh - 1) // t_rh) * t_rh)
    try:
        schedule = Schedule(
            T_cl=int(_require(sched_raw, "T_cl", "schedule")),
            T_hb=int(_require(sched_raw, "T_hb", "schedule")),
            t_rh=t_rh,
            t_f=int(t_f),
        )
    except ScheduleError as exc:
        raise ScenarioError(f"schedule: {exc}") from None

    n_steps = duration + schedule.T_cl
    tr = data.get("tariffs", {})
    tariffs = Tariffs.from_daily(
        n_steps,
        elec_peak=float(tr.get("elec_peak", 0.27)),
        elec_offpeak=float(tr.get("elec_offpeak", 0.22)),
        peak_hours=tuple(tr.get("peak_hours", list(range(7, 20)))),
        elec_feedin=float(tr.get("elec_feedin", 0.12)),
        gas=float(tr.get("gas", 0.115)),
        trading_fee=float(tr.get("trading_fee", 0.02)),
    )

    prof_raw = data.get("profiles", {})
    season = prof_raw.get("season", "summer")
    noise = float(prof_raw.get("noise", 0.05))
    base = generate_synthetic(season, seed, n_steps, noise)
    profiles = {"irradiance": base["irradiance"]}

    params_raw = data.get("params", {})
    bargaining = BargainingParams(
        mu0=float(params_raw.get("mu0", 2000.0)),
        mu_decay=float(params_raw.get("mu_decay", 0.03)),
        mu_floor_frac=float(params_raw.get("mu_floor_frac", 0.01)),
        sigma_primal=float(params_raw.get("sigma_primal", 0.003)),
        sigma_dual=float(params_raw.get("sigma_dual", 0.003)),
        k_max=int(params_raw.get("k_max", 200)),
        eps_primal=float(params_raw.get("eps_primal", 0.05)),
        eps_dual=float(params_raw.get("eps_dual", 0.03)),
        w_max=int(params_raw.get("w_max", 200)),
        log_floor_scale=float(params_raw.get("log_floor_scale", 1e-6)),
    )
    for attr in ("sigma_primal", "sigma_dual", "eps_primal", "eps_dual", "mu0"):
        if getattr(bargaining, attr) <= 0.0:
            raise ScenarioError(f"params: {attr} must be positive")
    controller = ControllerConfig(
        schedule=schedule,
        bargaining=bargaining,
        rho0=float(params_raw.get("rho0", 0.001)),
        rho_growth=float(params_raw.get("rho_growth", 0.02)),
        subproblem_tol=float(params_raw.get("subproblem_tol", 1e-7)),
        subproblem_max_iter=int(params_raw.get("subproblem_max_iter", 100)),
        penalty_weight=float(params_raw.get("penalty_weight", 1e-3)),
        beta_max=float(params_raw.get("beta_max", 0.0)),
        reweight_mode=str(params_raw.get("reweight_mode", "annual_demand")),
    )
    if controller.rho0 <= 0.0 or controller.subproblem_tol <= 0.0:
        raise ScenarioError("params: rho0 and subproblem_tol must be positive")
    if controller.reweight_mode not in ("annual_demand", "fixed"):
        raise ScenarioError("params: reweight_mode must be 'annual_demand' or 'fixed'")

    clusters_raw = _require(data, "clusters", "scenario")
    if not clusters_raw:
        raise ScenarioError("scenario: at least one cluster is required")
    hubs: dict[str, HubSpec] = {}
    cluster_map: dict[str, list[str]] = {}
    weights: dict[str, float] = {}

    def parse_hub(hub_raw: dict, where: str) -> HubSpec:
        hid = str(_require(hub_raw, "id", where))
        if hid in hubs:
            raise ScenarioError(f"{where}: duplicate hub id {hid!r}")
        devices = []
        for d_idx, dev_raw in enumerate(hub_raw.get("devices", [])):
            dev_where = f"{where}.devices[{d_idx}]"
            kind = str(_require(dict(dev_raw), "kind", dev_where))
            params = {k: v for k, v in dev_raw.items() if k != "kind"}
            try:
                devices.append(build_device(kind, **params))
            except (KeyError, TypeError, ValueError) as exc:
                raise ScenarioError(f"{dev_where}: {exc}") from None
        try:
            hub = HubSpec(
                id=hid,
                devices=devices,
                elec_demand=_series_or_scaled(
                    _require(hub_raw, "elec_demand", where), base["elec_base"], n_steps, where
                ),
                heat_demand=_series_or_scaled(
                    _require(hub_raw, "heat_demand", where), base["heat_base"], n_steps, where
                ),
                eta_p=float(hub_raw.get("eta_p", 1.0)),
                eta_q=float(hub_raw.get("eta_q", 1.0)),
                p_bid_cap=float(hub_raw.get("p_bid_cap", 0.0)),
                q_bid_cap=float(hub_raw.get("q_bid_cap", 0.0)),
                annual_demand=float(hub_raw.get("annual_demand_kwh", 0.0)),
            )
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}") from None
        if hub.n_steps < n_steps:
            raise ScenarioError(f"{where}: series shorter than duration + T_cl")
        hubs[hid] = hub
        return hub

    for c_idx, cluster in enumerate(clusters_raw):
        cid = str(_require(cluster, "id", f"clusters[{c_idx}]"))
        if cid in cluster_map:
            raise ScenarioError(f"clusters: duplicate id {cid!r}")
        members = []
        for h_idx, hub_raw in enumerate(_require(cluster, "hubs", f"clusters[{c_idx}]")):
            hub = parse_hub(hub_raw, f"clusters[{c_idx}].hubs[{h_idx}]")
            members.append(hub.id)
        cluster_map[cid] = members
        if cluster.get("weight") is not None:
            weights[cid] = float(cluster["weight"])
    # Hubs that start outside every cluster (e.g. waiting to plug in).
    for h_idx, hub_raw in enumerate(data.get("standalone_hubs", [])):
        parse_hub(hub_raw, f"standalone_hubs[{h_idx}]")
    if controller.reweight_mode == "annual_demand":
        missing = [hid for hid, h in hubs.items() if h.annual_demand <= 0.0]
        if missing:
            raise ScenarioError(
                f"annual_demand_kwh must be positive for weight computation; missing on {missing}"
            )

    events = []
    for e_idx, ev_raw in enumerate(data.get("events", [])):
        where = f"events[{e_idx}]"
        try:
            events.append(
                TopologyEvent(
                    kind=str(_require(ev_raw, "kind", where)),
                    time=int(_require(ev_raw, "time", where)),
                    hub=ev_raw.get("hub"),
                    cluster=ev_raw.get("cluster"),
                )
            )
        except TopologyError as exc:
            raise ScenarioError(f"{where}: {exc}") from None

    scenario = Scenario(
        name=name,
        seed=seed,
        duration=duration,
        schedule=schedule,
        tariffs=tariffs,
        hubs=hubs,
        cluster_map=cluster_map,
        weights=weights,
        inactive_clusters=set(data.get("inactive_clusters", [])),
        events=events,
        profiles=profiles,
        controller=controller,
        raw=data,
    )
    try:
        scenario.topology()
    except TopologyError as exc:
        raise ScenarioError(f"topology: {exc}") from None
    _validate_heat_capacity(scenario)
    return scenario


def _validate_heat_capacity(scenario: Scenario) -> None:
    """Heat demand must be coverable locally (no heat comes from the grid).

    Only steady converters count toward peak coverage; storage and solar
    thermal cannot guarantee output at an arbitrary hour.
    """
    from .devices import ELEC_IN, GAS_IN

    for hid, hub in scenario.hubs.items():
        peak = float(np.max(hub.heat_demand[: scenario.duration + scenario.schedule.T_cl]))
        if peak <= 0.0:
            continue
        capacity = 0.0
        for dev in hub.devices:
            fuel_cap = float(dev.input_ineq_rhs[-1]) if dev.input_ineq_rhs.size else 0.0
            if dev.name == "boiler":
                capacity += fuel_cap * float(-dev.input_eq_matrix[0, GAS_IN])
            elif dev.name == "chp":
                capacity += fuel_cap * float(-dev.input_eq_matrix[1, GAS_IN])
            elif dev.name == "heat_pump":
                capacity += fuel_cap * float(-dev.input_eq_matrix[0, ELEC_IN])
        if capacity < peak - 1e-9:
            raise ScenarioError(
                f"hub {hid}: heat demand peaks at {peak:.1f} kWh per step but "
                f"steady heat capacity is only {capacity:.1f} kWh; the isolated "
                f"dispatch would be infeasible"
            )
