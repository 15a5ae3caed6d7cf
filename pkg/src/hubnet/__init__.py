"""Peer-to-peer energy trading for clustered energy-hub networks.

The package simulates networks of multi-energy hubs grouped into clusters:
inter-cluster electricity trades are negotiated through a weighted
bargaining game solved by dual consensus ADMM, hubs coordinate inside each
cluster by consensus ADMM, and the whole thing runs under receding-horizon
control with periodic fair cost settlement and plug-and-play topology
changes.
"""

from .bargaining import (
    BargainingOutcome,
    BargainingParams,
    ClusterBid,
    DualAdmmState,
    run_bargaining,
    solve_direct,
    welfare,
)
from .baselines import (
    BaselineResult,
    CentralizedController,
    DecentralizedController,
    solve_centralized,
    solve_decentralized,
)
from .consensus import ClusterProblemMode, ClusterWorker, ConsensusState
from .devices import DEVICE_PRESETS, DeviceModel, build_device
from .hub import HubPlan, HubSpec, Tariffs, build_feasible_set, grid_cost, realized_step_cost
from .orchestrator import ControllerConfig, Orchestrator, ResultSet, Schedule, average_bid, run_simulation
from .results import read_summary, write_results
from .scenario import Scenario, ScenarioError, generate_synthetic, load_scenario, parse_scenario
from .settlement import SettlementLedger, distribute_costs, distribute_costs_pnp
from .solver import ConvexSubproblem, LogTerm, SolveReport, SolverError, solve
from .topology import NetworkTopology, TopologyEvent, reweight

__version__ = "0.1.0"
