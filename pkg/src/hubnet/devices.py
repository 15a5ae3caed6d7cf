"""Energy-hub device models and configuration presets.

Every device is a discrete-time linear system over its internal energy
state, driven by a 5-channel input vector (per step, in kWh):

    [gas_in, elec_in, heat_in, elec_out, heat_out]

Conversion ratios and capacity limits live in a per-step polyhedron over
those channels; renewable availability enters as per-step upper bounds on
output channels scaled by a named profile (e.g. irradiance).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_CHANNELS = 5
GAS_IN, ELEC_IN, HEAT_IN, ELEC_OUT, HEAT_OUT = range(N_CHANNELS)


@dataclass
class AvailabilityBound:
    """Per-step bound ``u[channel] <= capacity * profile[t]``."""

    channel: int
    capacity: float
    profile_key: str


@dataclass
class DeviceModel:
    name: str
    state_dim: int
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    state_lower: np.ndarray
    state_upper: np.ndarray
    initial_state: np.ndarray
    input_eq_matrix: np.ndarray  # E u = f, shape (k, 5)
    input_eq_rhs: np.ndarray
    input_ineq_matrix: np.ndarray  # G u <= h, shape (m, 5)
    input_ineq_rhs: np.ndarray
    availability: list[AvailabilityBound] = field(default_factory=list)
    disturbance_profile_key: str | None = None

    def __post_init__(self) -> None:
        s = self.state_dim
        for attr in ("A", "B", "D", "state_lower", "state_upper", "initial_state",
                     "input_eq_matrix", "input_eq_rhs", "input_ineq_matrix", "input_ineq_rhs"):
            setattr(self, attr, np.asarray(getattr(self, attr), dtype=float))
        if self.A.shape != (s, s) or self.B.shape != (s, N_CHANNELS) or self.D.shape != (s, 1):
            raise ValueError(f"device {self.name}: system matrix shapes inconsistent with state_dim={s}")
        if self.state_lower.shape != (s,) or self.state_upper.shape != (s,) or self.initial_state.shape != (s,):
            raise ValueError(f"device {self.name}: state bound shapes inconsistent")
        if np.any(self.state_lower > self.state_upper):
            raise ValueError(f"device {self.name}: state lower bound exceeds upper bound")
        if self.input_eq_matrix.shape[1:] != (N_CHANNELS,) or self.input_ineq_matrix.shape[1:] != (N_CHANNELS,):
            raise ValueError(f"device {self.name}: input polyhedron must be over {N_CHANNELS} channels")
        # Every device must be allowed to idle.
        if np.any(np.abs(self.input_eq_rhs) > 0.0) or np.any(self.input_ineq_rhs < 0.0):
            raise ValueError(f"device {self.name}: input polyhedron excludes u = 0")


def _zero_channel_rows(channels) -> tuple[np.ndarray, np.ndarray]:
    E = np.zeros((len(channels), N_CHANNELS))
    for row, ch in enumerate(channels):
        E[row, ch] = 1.0
    return E, np.zeros(len(channels))


def _nonneg_rows(channels) -> tuple[np.ndarray, np.ndarray]:
    G = np.zeros((len(channels), N_CHANNELS))
    for row, ch in enumerate(channels):
        G[row, ch] = -1.0
    return G, np.zeros(len(channels))


def _stateless(name, eq, ineq, availability) -> DeviceModel:
    return DeviceModel(
        name=name,
        state_dim=0,
        A=np.zeros((0, 0)),
        B=np.zeros((0, N_CHANNELS)),
        D=np.zeros((0, 1)),
        state_lower=np.zeros(0),
        state_upper=np.zeros(0),
        initial_state=np.zeros(0),
        input_eq_matrix=eq[0],
        input_eq_rhs=eq[1],
        input_ineq_matrix=ineq[0],
        input_ineq_rhs=ineq[1],
        availability=availability,
        disturbance_profile_key=availability[0].profile_key if availability else None,
    )


def build_pv(capacity: float, profile: str = "irradiance") -> DeviceModel:
    eq = _zero_channel_rows([GAS_IN, ELEC_IN, HEAT_IN, HEAT_OUT])
    ineq = _nonneg_rows([ELEC_OUT])
    return _stateless("pv", eq, ineq, [AvailabilityBound(ELEC_OUT, capacity, profile)])


def build_solar_thermal(capacity: float, profile: str = "irradiance") -> DeviceModel:
    eq = _zero_channel_rows([GAS_IN, ELEC_IN, HEAT_IN, ELEC_OUT])
    ineq = _nonneg_rows([HEAT_OUT])
    return _stateless("solar_thermal", eq, ineq, [AvailabilityBound(HEAT_OUT, capacity, profile)])


def build_chp(gas_capacity: float, eta_el: float = 0.3, eta_th: float = 0.55) -> DeviceModel:
    E = np.zeros((4, N_CHANNELS))
    E[0, ELEC_OUT], E[0, GAS_IN] = 1.0, -eta_el
    E[1, HEAT_OUT], E[1, GAS_IN] = 1.0, -eta_th
    E[2, ELEC_IN] = 1.0
    E[3, HEAT_IN] = 1.0
    Gn, hn = _nonneg_rows([GAS_IN])
    G = np.vstack([Gn, np.eye(N_CHANNELS)[GAS_IN]])
    h = np.concatenate([hn, [gas_capacity]])
    return _stateless("chp", (E, np.zeros(4)), (G, h), [])


def build_boiler(gas_capacity: float, eta: float = 0.9) -> DeviceModel:
    E = np.zeros((4, N_CHANNELS))
    E[0, HEAT_OUT], E[0, GAS_IN] = 1.0, -eta
    E[1, ELEC_IN] = 1.0
    E[2, HEAT_IN] = 1.0
    E[3, ELEC_OUT] = 1.0
    Gn, hn = _nonneg_rows([GAS_IN])
    G = np.vstack([Gn, np.eye(N_CHANNELS)[GAS_IN]])
    h = np.concatenate([hn, [gas_capacity]])
    return _stateless("boiler", (E, np.zeros(4)), (G, h), [])


def build_heat_pump(elec_capacity: float, cop: float = 3.0) -> DeviceModel:
    E = np.zeros((4, N_CHANNELS))
    E[0, HEAT_OUT], E[0, ELEC_IN] = 1.0, -cop
    E[1, GAS_IN] = 1.0
    E[2, HEAT_IN] = 1.0
    E[3, ELEC_OUT] = 1.0
    Gn, hn = _nonneg_rows([ELEC_IN])
    G = np.vstack([Gn, np.eye(N_CHANNELS)[ELEC_IN]])
    h = np.concatenate([hn, [elec_capacity]])
    return _stateless("heat_pump", (E, np.zeros(4)), (G, h), [])


def _storage(
    name: str,
    charge_channel: int,
    discharge_channel: int,
    energy_capacity: float,
    charge_capacity: float,
    discharge_capacity: float,
    eta_charge: float,
    eta_discharge: float,
    retention: float,
    initial_soc: float,
) -> DeviceModel:
    other = [ch for ch in range(N_CHANNELS) if ch not in (charge_channel, discharge_channel)]
    E, f = _zero_channel_rows(other)
    Gn, hn = _nonneg_rows([charge_channel, discharge_channel])
    G = np.vstack([Gn, np.eye(N_CHANNELS)[charge_channel], np.eye(N_CHANNELS)[discharge_channel]])
    h = np.concatenate([hn, [charge_capacity, discharge_capacity]])
    B = np.zeros((1, N_CHANNELS))
    B[0, charge_channel] = eta_charge
    B[0, discharge_channel] = -1.0 / eta_discharge
    return DeviceModel(
        name=name,
        state_dim=1,
        A=np.array([[retention]]),
        B=B,
        D=np.zeros((1, 1)),
        state_lower=np.zeros(1),
        state_upper=np.array([energy_capacity]),
        initial_state=np.array([initial_soc * energy_capacity]),
        input_eq_matrix=E,
        input_eq_rhs=f,
        input_ineq_matrix=G,
        input_ineq_rhs=h,
    )


def build_battery(
    energy_capacity: float,
    charge_capacity: float,
    discharge_capacity: float,
    eta_charge: float = 0.95,
    eta_discharge: float = 0.95,
    retention: float = 1.0,
    initial_soc: float = 0.5,
) -> DeviceModel:
    return _storage("battery", ELEC_IN, ELEC_OUT, energy_capacity, charge_capacity,
                    discharge_capacity, eta_charge, eta_discharge, retention, initial_soc)


def build_water_tank(
    energy_capacity: float,
    charge_capacity: float,
    discharge_capacity: float,
    eta_charge: float = 0.98,
    eta_discharge: float = 0.98,
    retention: float = 0.995,
    initial_soc: float = 0.5,
) -> DeviceModel:
    return _storage("water_tank", HEAT_IN, HEAT_OUT, energy_capacity, charge_capacity,
                    discharge_capacity, eta_charge, eta_discharge, retention, initial_soc)


DEVICE_PRESETS = {
    "pv": build_pv,
    "solar_thermal": build_solar_thermal,
    "chp": build_chp,
    "boiler": build_boiler,
    "heat_pump": build_heat_pump,
    "battery": build_battery,
    "water_tank": build_water_tank,
}


def build_device(kind: str, **params) -> DeviceModel:
    """Instantiate a preset device; raises KeyError for unknown kinds."""
    try:
        builder = DEVICE_PRESETS[kind]
    except KeyError:
        raise KeyError(f"unknown device preset {kind!r}; known: {sorted(DEVICE_PRESETS)}") from None
    return builder(**params)
