"""Network topology and scheduled plug-and-play events.

Hub-level events take effect at the next whole step; cluster-level events
are only legal at trade-recomputation boundaries.  Event application is
local: only the named cluster's membership changes, and all standing
obligations (fixed trades, pending settlements) are owned by the
orchestrator and survive untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

HUB_JOIN = "hub_join"
HUB_LEAVE = "hub_leave"
CLUSTER_JOIN = "cluster_join"
CLUSTER_LEAVE = "cluster_leave"
EVENT_KINDS = (HUB_JOIN, HUB_LEAVE, CLUSTER_JOIN, CLUSTER_LEAVE)


class TopologyError(ValueError):
    """Inconsistent membership or an event violating its timing rule."""


@dataclass(frozen=True)
class TopologyEvent:
    kind: str
    time: int
    hub: str | None = None
    cluster: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise TopologyError(f"unknown event kind {self.kind!r}")
        if self.kind in (HUB_JOIN, HUB_LEAVE) and (self.hub is None or self.cluster is None):
            raise TopologyError(f"{self.kind} needs both hub and cluster")
        if self.kind in (CLUSTER_JOIN, CLUSTER_LEAVE) and self.cluster is None:
            raise TopologyError(f"{self.kind} needs a cluster")
        if self.time < 0:
            raise TopologyError("event time must be nonnegative")


@dataclass
class ClusterMembership:
    id: str
    hub_ids: list[str]
    weight: float = 1.0
    active: bool = True


class NetworkTopology:
    """Mutable cluster membership plus a queue of scheduled events."""

    def __init__(
        self,
        clusters: dict[str, list[str]],
        weights: dict[str, float] | None = None,
        inactive: set[str] | None = None,
        events: list[TopologyEvent] | None = None,
    ):
        weights = weights or {}
        inactive = inactive or set()
        self.clusters: dict[str, ClusterMembership] = {}
        seen: dict[str, str] = {}
        for cid in sorted(clusters):
            hubs = sorted(clusters[cid])
            for hid in hubs:
                if hid in seen:
                    raise TopologyError(f"hub {hid} belongs to both {seen[hid]} and {cid}")
                seen[hid] = cid
            weight = float(weights.get(cid, 1.0))
            if weight <= 0.0:
                raise TopologyError(f"cluster {cid}: weight must be positive")
            self.clusters[cid] = ClusterMembership(
                id=cid, hub_ids=hubs, weight=weight, active=cid not in inactive
            )
        self.events: list[TopologyEvent] = sorted(
            events or [], key=lambda e: (e.time, e.kind, e.cluster or "", e.hub or "")
        )
        self._applied: list[TopologyEvent] = []

    # -- queries --------------------------------------------------------------

    def active_cluster_ids(self) -> list[str]:
        return [cid for cid in sorted(self.clusters) if self.clusters[cid].active]

    def members(self, cluster: str) -> list[str]:
        return list(self.clusters[cluster].hub_ids)

    def cluster_of(self, hub: str) -> str | None:
        for cid in sorted(self.clusters):
            if hub in self.clusters[cid].hub_ids:
                return cid
        return None

    def weights(self) -> dict[str, float]:
        return {cid: self.clusters[cid].weight for cid in self.active_cluster_ids()}

    def all_member_hubs(self) -> list[str]:
        return sorted(h for c in self.clusters.values() for h in c.hub_ids)

    # -- event machinery -------------------------------------------------------

    def validate_events(self, t_rh: int, known_hubs: set[str]) -> None:
        for ev in self.events:
            if ev.kind in (CLUSTER_JOIN, CLUSTER_LEAVE) and ev.time % t_rh != 0:
                raise TopologyError(
                    f"{ev.kind} for {ev.cluster} at t={ev.time} violates the "
                    f"boundary rule (multiple of {t_rh})"
                )
            if ev.cluster is not None and ev.cluster not in self.clusters:
                raise TopologyError(f"event references unknown cluster {ev.cluster!r}")
            if ev.hub is not None and ev.hub not in known_hubs:
                raise TopologyError(f"event references unknown hub {ev.hub!r}")

    def due_events(self, t: int) -> list[TopologyEvent]:
        return [ev for ev in self.events if ev.time == t]

    def apply_events(self, t: int, t_rh: int) -> list[TopologyEvent]:
        """Apply all events scheduled for step t; returns those applied.

        Only the named clusters are mutated, keeping every other cluster's
        controller state untouched.
        """
        applied = []
        for ev in self.due_events(t):
            if ev.kind in (CLUSTER_JOIN, CLUSTER_LEAVE) and t % t_rh != 0:
                raise TopologyError(f"{ev.kind} for {ev.cluster} off the t_rh boundary at t={t}")
            cluster = self.clusters[ev.cluster]
            if ev.kind == HUB_JOIN:
                if self.cluster_of(ev.hub) is not None:
                    raise TopologyError(f"hub {ev.hub} already belongs to a cluster")
                cluster.hub_ids = sorted(cluster.hub_ids + [ev.hub])
            elif ev.kind == HUB_LEAVE:
                if ev.hub not in cluster.hub_ids:
                    raise TopologyError(f"hub {ev.hub} is not a member of {ev.cluster}")
                cluster.hub_ids = [h for h in cluster.hub_ids if h != ev.hub]
            elif ev.kind == CLUSTER_JOIN:
                cluster.active = True
            elif ev.kind == CLUSTER_LEAVE:
                cluster.active = False
            applied.append(ev)
        if applied:
            self.events = [ev for ev in self.events if ev.time != t]
            self._applied.extend(applied)
        return applied

    @property
    def applied_events(self) -> list[TopologyEvent]:
        return list(self._applied)


def reweight(topology: NetworkTopology, annual_demands: dict[str, float]) -> dict[str, float]:
    """Recompute bargaining weights from member hubs' annual demands.

    Weights are the cluster demand sums in MWh rounded to integers (floored
    at one to stay positive); empty active clusters are deactivated since
    their weight is undefined.
    """
    weights = {}
    for cid in topology.active_cluster_ids():
        cluster = topology.clusters[cid]
        if not cluster.hub_ids:
            cluster.active = False
            continue
        total_kwh = sum(annual_demands.get(hid, 0.0) for hid in cluster.hub_ids)
        if total_kwh <= 0.0:
            raise TopologyError(f"cluster {cid}: annual demand must be positive for reweighting")
        cluster.weight = float(max(1, round(total_kwh / 1000.0)))
        weights[cid] = cluster.weight
    return weights
