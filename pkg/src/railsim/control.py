"""Circuit control plane for reconfigurable rails.

The shim sits between the application and the collective layer: it intercepts
collective calls, profiles the first iteration's phase schedule, and issues
reconfiguration requests only when the demand matrix changes.  With
provisioning enabled it issues the request speculatively as soon as the
previous phase's traffic completes, so the switching delay hides inside the
idle window.  The controller realizes requests rail by rail: a group's
reconfiguration starts only once every member rank has requested it
(collective-barrier semantics), it is at the head of the first-come-first-serve
order for every port it touches, and no touched port carries ongoing traffic.
Ring pairings are cached per group and reused for the rest of the job.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .errors import DegreeInfeasible
from .model import CommGroup, Topology, ports_needed, ring_edges
from .workload import COLLECTIVE, EventDag

SERVE = "serve"
REQUEST = "request"


@dataclass(frozen=True)
class ReconfigRequest:
    group: str
    issuer: int  # rank; -1 for a coalesced speculative request
    issue_time: float
    speculative: bool = False


@dataclass
class ReconfigLogEntry:
    time: float
    rail: int
    group: str
    speculative: bool
    delay: float
    ports_changed: int


@dataclass
class ControlPhase:
    """One entry of a profiled per-rail schedule."""

    groups: frozenset
    events: tuple  # event ids, in start order


@dataclass
class GroupTable:
    """Job-specific controller metadata."""

    cached_configs: Dict[str, tuple] = field(default_factory=dict)  # group -> ring edges
    phase_order: Dict[int, List[ControlPhase]] = field(default_factory=dict)  # per rail
    queue: Dict[int, list] = field(default_factory=dict)  # per rail FC-FS pending requests
    configured: Dict[int, Set[str]] = field(default_factory=dict)  # per rail groups with rings up


def shim_intercept(event, now: float, state: GroupTable, dag: EventDag) -> Tuple[str, Optional[str]]:
    """Decide whether a collective needs a reconfiguration request.

    Returns (SERVE, None) when the group's ring is already configured on its
    rail, else (REQUEST, group_id).
    """
    group = dag.groups[event.group]
    rail = next(iter(group.rails_touched))
    if event.group in state.configured.get(rail, set()):
        return SERVE, None
    return REQUEST, event.group


def profile_iteration(dag: EventDag, times: Dict[str, object], rails: Sequence[int]) -> Dict[int, List[ControlPhase]]:
    """Per-rail ordered phase schedule from a first-iteration timeline.

    Consecutive collectives join the current phase when their group is already
    part of it or when they overlap the phase in time; otherwise a new phase
    starts.  Idempotent: identical timelines give identical schedules.
    """
    from .windows import comm_start, rail_collectives

    schedule: Dict[int, List[ControlPhase]] = {}
    for rail in rails:
        phases: List[ControlPhase] = []
        cur_events: List[str] = []
        cur_groups: Set[str] = set()
        cur_max_end = float("-inf")
        for eid in rail_collectives(dag, times, rail):
            g = dag.events[eid].group
            start = comm_start(times, eid)
            if cur_events and g not in cur_groups and start >= cur_max_end:
                phases.append(ControlPhase(frozenset(cur_groups), tuple(cur_events)))
                cur_events, cur_groups, cur_max_end = [], set(), float("-inf")
            cur_events.append(eid)
            cur_groups.add(g)
            cur_max_end = max(cur_max_end, times[eid].end)
        if cur_events:
            phases.append(ControlPhase(frozenset(cur_groups), tuple(cur_events)))
        schedule[rail] = phases
    return schedule


def provision(completed_event: str, schedule: Sequence[ControlPhase], now: float,
              completed: Set[str]) -> List[ReconfigRequest]:
    """Speculative requests to issue when `completed_event` finishes.

    Emits requests for the next phase's groups exactly when the completed
    event is the last unfinished event of its phase.
    """
    for i, phase in enumerate(schedule):
        if completed_event not in phase.events:
            continue
        if any(e not in completed for e in phase.events):
            return []
        if i + 1 < len(schedule):
            return [ReconfigRequest(group=g, issuer=-1, issue_time=now, speculative=True)
                    for g in sorted(schedule[i + 1].groups)]
        return []
    return []


def controller_apply(requests: Sequence["ReconfigRequest"], now: float,
                     controller: "Controller") -> List[Tuple[str, float]]:
    """Feed per-rank requests to the controller and serve whatever is eligible.

    A group is applied only once all its member ranks have requested it; the
    returned list holds (group, circuit-ready time) pairs.
    """
    by_group: Dict[str, Dict[int, float]] = {}
    spec_flag: Dict[str, bool] = {}
    for r in requests:
        by_group.setdefault(r.group, {})[r.issuer] = r.issue_time
        spec_flag[r.group] = spec_flag.get(r.group, True) and r.speculative
    for gid, times in by_group.items():
        g = controller.groups[gid]
        missing = set(g.members) - set(times)
        if missing and -1 in times:  # coalesced speculative request covers all ranks
            for m in g.members:
                times.setdefault(m, times[-1])
        times.pop(-1, None)
        if set(times) != set(g.members):
            # Barrier not met: park the partial request beyond `now`.
            full = dict(times)
            for m in g.members:
                full.setdefault(m, float("inf"))
            controller.request(gid, full, spec_flag[gid])
            continue
        controller.request(gid, times, spec_flag[gid])
    return controller.scan(now, protected=set())


@dataclass
class _Port:
    group: Optional[str] = None
    busy_until: float = 0.0
    reconfig_until: float = 0.0
    last_release: float = 0.0


@dataclass
class _Pending:
    times: Dict[int, float]  # per-rank request time (inf while not yet asked)
    group: str
    speculative: bool

    @property
    def order_time(self) -> float:
        """FC-FS position: earliest per-rank request."""
        return min(self.times.values())

    @property
    def barrier_time(self) -> float:
        """All member ranks have requested."""
        return max(self.times.values())


class Controller:
    """Port-level circuit state for every rail of one topology."""

    def __init__(self, topo: Topology, groups: Dict[str, CommGroup], delay: float):
        self.topo = topo
        self.delay = delay
        self.groups = groups
        self.table = GroupTable()
        self.ports: Dict[int, List[_Port]] = {}  # rank -> its rail ports
        # group -> time its ring is (or becomes) fully configured
        self.ready_at: Dict[str, float] = {}
        self.log: List[ReconfigLogEntry] = []
        self.circuit_intervals: List[tuple] = []  # (rail, rank, port, group, up, down)
        self._up_since: Dict[Tuple[int, int], float] = {}  # (rank, port) -> up time
        for g in groups.values():
            if g.is_scaleout and g.size >= 2 and ports_needed(g) > topo.nic.ports:
                raise DegreeInfeasible(
                    f"group {g.id} ring needs {ports_needed(g)} ports per rank, "
                    f"NIC has {topo.nic.ports}"
                )

    def _rank_ports(self, rank: int) -> List[_Port]:
        if rank not in self.ports:
            self.ports[rank] = [_Port() for _ in range(self.topo.nic.ports)]
        return self.ports[rank]

    def group_up(self, gid: str, t: float) -> bool:
        return gid in self.ready_at and self.ready_at[gid] <= t

    def request(self, gid: str, times: Dict[int, float], speculative: bool) -> None:
        """Enqueue (or merge) a request; `times` maps issuer rank to issue time."""
        g = self.groups[gid]
        rail = next(iter(g.rails_touched))
        q = self.table.queue.setdefault(rail, [])
        for p in q:
            if p.group == gid:
                for rank, t in times.items():
                    p.times[rank] = min(p.times.get(rank, float("inf")), t)
                p.speculative = p.speculative and speculative
                return
        q.append(_Pending(dict(times), gid, speculative))

    def has_pending(self, gid: str) -> bool:
        return any(p.group == gid for q in self.table.queue.values() for p in q)

    def scan(self, now: float, protected: Set[str]) -> List[Tuple[str, float]]:
        """Serve eligible requests in FC-FS order; returns (group, ready_time).

        `protected` groups may not be evicted (they have traffic waiting or a
        pending request of their own).
        """
        grants: List[Tuple[str, float]] = []
        for rail in sorted(self.table.queue):
            q = self.table.queue[rail]
            q.sort(key=lambda p: (p.order_time, p.group))
            blocked_ranks: Set[int] = set()
            remaining = []
            for p in q:
                g = self.groups[p.group]
                if p.barrier_time > now or (set(g.members) & blocked_ranks):
                    blocked_ranks.update(g.members)
                    remaining.append(p)
                    continue
                ready = self._try_apply(p, now, protected)
                if ready is None:
                    blocked_ranks.update(g.members)
                    remaining.append(p)
                else:
                    grants.append((p.group, ready))
            self.table.queue[rail] = remaining
        return grants

    def _try_apply(self, p: _Pending, now: float, protected: Set[str]) -> Optional[float]:
        """Configure the group's ring if every touched port is idle."""
        gid = p.group
        g = self.groups[gid]
        rail = next(iter(g.rails_touched))
        if self.group_up(gid, now):
            return now
        if gid in self.ready_at and self.ready_at[gid] > now:
            return self.ready_at[gid]  # reconfiguration already in flight
        need = ports_needed(g)
        chosen: Dict[int, List[int]] = {}
        for rank in g.members:
            ports = self._rank_ports(rank)
            have = [i for i, port in enumerate(ports) if port.group == gid]
            missing = need - len(have)
            if missing > 0:
                candidates = [
                    i for i, port in enumerate(ports)
                    if port.group != gid
                    and port.busy_until <= now
                    and port.reconfig_until <= now
                    and (port.group is None or port.group not in protected)
                ]
                # Free ports first, then least recently used circuits.
                candidates.sort(key=lambda i: (ports[i].group is not None,
                                               ports[i].last_release, i))
                if len(candidates) < missing:
                    return None
                have += candidates[:missing]
            chosen[rank] = have[:need]
        changed = 0
        for rank, idxs in chosen.items():
            ports = self._rank_ports(rank)
            for i in idxs:
                port = ports[i]
                if port.group == gid:
                    continue
                if port.group is not None:
                    self._tear(rank, i, now)
                port.group = gid
                port.reconfig_until = now + self.delay
                self._up_since[(rank, i)] = now + self.delay
                changed += 1
        if gid not in self.table.cached_configs:
            self.table.cached_configs[gid] = tuple(ring_edges(g))
        ready = now + self.delay if changed else now
        self.ready_at[gid] = ready
        self.table.configured.setdefault(rail, set()).add(gid)
        self.log.append(ReconfigLogEntry(time=now, rail=rail, group=gid,
                                         speculative=p.speculative, delay=self.delay,
                                         ports_changed=changed))
        return ready

    def _tear(self, rank: int, idx: int, now: float) -> None:
        port = self._rank_ports(rank)[idx]
        old = port.group
        rail = self.topo.rail_of(rank)
        self.circuit_intervals.append(
            (rail, rank, idx, old, self._up_since.get((rank, idx), 0.0), now))
        # The evicted group's ring is no longer complete.
        self.ready_at.pop(old, None)
        self.table.configured.get(rail, set()).discard(old)
        port.group = None

    def mark_busy(self, gid: str, start: float, end: float) -> List[Tuple[int, int]]:
        """Mark the group's circuit ports busy for one transfer; returns ports."""
        g = self.groups[gid]
        used = []
        for rank in g.members:
            for i, port in enumerate(self._rank_ports(rank)):
                if port.group == gid:
                    port.busy_until = max(port.busy_until, end)
                    port.last_release = max(port.last_release, end)
                    used.append((rank, i))
        return used

    def close(self, t: float) -> None:
        """Flush remaining circuit intervals at end of simulation."""
        for rank, ports in self.ports.items():
            for i, port in enumerate(ports):
                if port.group is not None:
                    self.circuit_intervals.append(
                        (self.topo.rail_of(rank), rank, i, port.group,
                         self._up_since.get((rank, i), 0.0), t))
