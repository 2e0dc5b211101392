"""Idle-window analysis between parallelism phases on a rail.

A phase is a maximal run of consecutive scale-out collectives (ordered by
communication start) sharing one (parallelism axis, collective kind) label;
TP traffic never appears in rail phases.  The idle window between phases P1
and P2 is

    window = [ max over c in P1 of end(c),  min over c in P2 of start(c) ]

where a collective's start is the join time of its slowest member rank.
Negative gaps mean the phases overlap and are reported separately, not as
windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

from .errors import EmptyInput, EmptyPhase, InvalidParams
from .workload import COLLECTIVE, EventDag


@dataclass
class Phase:
    id: str
    groups: frozenset  # CommGroup ids
    events: tuple  # ordered event ids
    axis: str = ""
    kind: str = ""


@dataclass
class Window:
    rail: int
    before_phase: str
    after_phase: str
    start: float
    end: float
    size: float
    next_volume_bytes: int
    volume_class: str = ""


@dataclass
class Overlap:
    rail: int
    before_phase: str
    after_phase: str
    magnitude: float  # seconds by which P2 starts before P1 ends


@dataclass
class WindowReport:
    windows: List[Window] = field(default_factory=list)
    overlaps: List[Overlap] = field(default_factory=list)


def comm_start(times: Dict[str, object], eid: str) -> float:
    """Join time of the slowest member rank."""
    t = times[eid]
    starts = getattr(t, "starts", None)
    if starts:
        return max(starts.values())
    return t.start


def rail_collectives(dag: EventDag, times: Dict[str, object], rail: int) -> List[str]:
    """Scale-out collectives on one rail, ordered by communication start."""
    out = []
    for eid, ev in dag.events.items():
        if ev.kind != COLLECTIVE or eid not in times:
            continue
        g = dag.groups.get(ev.group or "")
        if g is None or not g.is_scaleout or rail not in g.rails_touched:
            continue
        out.append(eid)
    out.sort(key=lambda e: (comm_start(times, e), e))
    return out


def segment_phases(dag: EventDag, times: Dict[str, object], rail: int) -> List[Phase]:
    """Split a rail's collectives into parallelism phases."""
    phases: List[Phase] = []
    current: List[str] = []
    key = None

    def flush():
        if current:
            groups = frozenset(dag.events[e].group for e in current)
            phases.append(Phase(id=f"rail{rail}.ph{len(phases)}", groups=groups,
                                events=tuple(current), axis=key[0], kind=key[1]))

    for eid in rail_collectives(dag, times, rail):
        ev = dag.events[eid]
        k = (dag.groups[ev.group].axis, ev.coll_kind)
        if k != key:
            flush()
            current = []
            key = k
        current.append(eid)
    flush()
    return phases


def extract_windows(times: Dict[str, object], phases: Sequence[Phase],
                    dag: EventDag = None, rail: int = -1) -> WindowReport:
    """Windows (and overlaps) between each consecutive phase pair."""
    report = WindowReport()
    for ph in phases:
        if not ph.events:
            raise EmptyPhase(f"phase {ph.id} has no events")
    for p1, p2 in zip(phases, phases[1:]):
        w_start = max(times[e].end for e in p1.events)
        w_end = min(comm_start(times, e) for e in p2.events)
        volume = 0
        if dag is not None:
            volume = sum(dag.events[e].bytes * len(dag.events[e].rank_set) for e in p2.events)
        if w_end >= w_start:
            report.windows.append(Window(rail=rail, before_phase=p1.id, after_phase=p2.id,
                                         start=w_start, end=w_end, size=w_end - w_start,
                                         next_volume_bytes=volume))
        else:
            report.overlaps.append(Overlap(rail=rail, before_phase=p1.id, after_phase=p2.id,
                                           magnitude=w_start - w_end))
    return report


def analyze_rail(dag: EventDag, times: Dict[str, object], rail: int) -> WindowReport:
    return extract_windows(times, segment_phases(dag, times, rail), dag=dag, rail=rail)


def window_cdf(windows: Iterable) -> List[Tuple[float, float]]:
    """Empirical CDF of window sizes: sorted (size, cumulative fraction) pairs."""
    sizes = sorted(w.size if isinstance(w, Window) else float(w) for w in windows)
    if not sizes:
        raise EmptyInput("no windows")
    n = len(sizes)
    return [(s, (i + 1) / n) for i, s in enumerate(sizes)]


@dataclass
class VolumeClassStats:
    label: str
    lo: float  # inclusive lower bound in bytes (-inf for the first class)
    hi: float  # exclusive upper bound (inf for the last class)
    count: int
    mean_size: float
    min_size: float
    max_size: float


def classify_by_volume(windows: Sequence[Window], class_edges: Sequence[float]) -> List[VolumeClassStats]:
    """Per-volume-class statistics of window sizes.

    ``class_edges`` are strictly increasing byte thresholds defining
    len(edges)+1 classes; a volume exactly on an edge goes to the upper class.
    """
    edges = list(class_edges)
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise InvalidParams("class edges must be strictly increasing")
    bounds = [float("-inf")] + edges + [float("inf")]
    labels = []
    for i in range(len(bounds) - 1):
        if i == 0:
            labels.append(f"<{edges[0]:g}B" if edges else "all")
        elif i == len(bounds) - 2:
            labels.append(f">={edges[-1]:g}B")
        else:
            labels.append(f"[{edges[i - 1]:g}B,{edges[i]:g}B)")
    buckets: List[List[float]] = [[] for _ in labels]
    for w in windows:
        idx = sum(1 for e in edges if w.next_volume_bytes >= e)
        w.volume_class = labels[idx]
        buckets[idx].append(w.size)
    stats = []
    for i, sizes in enumerate(buckets):
        if sizes:
            stats.append(VolumeClassStats(labels[i], bounds[i], bounds[i + 1], len(sizes),
                                          sum(sizes) / len(sizes), min(sizes), max(sizes)))
        else:
            stats.append(VolumeClassStats(labels[i], bounds[i], bounds[i + 1], 0, 0.0, 0.0, 0.0))
    return stats


def eq1_bound(pp: int, n_layer: int, n_microbatch: int, has_cp: bool, has_ep: bool) -> int:
    """Upper bound on the number of idle windows in one training iteration.

    Term by term: pipeline/FSDP forward-backward interleaving, first-microbatch
    forward interleaving and per-microbatch interleaving contributed by CP/EP,
    CP-with-EP interleaving, plus a constant for the pipeline state
    transitions (warm-up, steady, cool-down, sync).
    """
    if pp < 1:
        raise InvalidParams("pp must be >= 1")
    if n_layer < pp:
        raise InvalidParams(f"n_layer {n_layer} < pp {pp}")
    if n_microbatch < 1:
        raise InvalidParams("n_microbatch must be >= 1")
    # Ceiling split keeps the bound valid when pp does not divide n_layer.
    per_stage = -(-n_layer // pp)
    total = 4 * (pp - 1)
    if has_cp or has_ep:
        total += 2 * per_stage - 1
        total += 4 * n_microbatch
    if has_cp and has_ep:
        total += 2 * n_microbatch * (2 * per_stage - 1)
    total += 4
    return total
