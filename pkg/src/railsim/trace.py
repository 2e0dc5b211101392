"""Trace file format: one record per (rank, event), plus group declarations.

Layout (UTF-8, comma-separated, header line required):

    event_id,rank,stream,kind,coll_kind,group_id,bytes,dep_ids,observed_start_s,observed_end_s

Lines starting with ``#group,`` declare communication groups:

    #group,<id>,<axis>,<member;member;...>,<rail;rail;...>

Dependency edges are reconstructed from the explicit ``dep_ids`` column plus
per-(rank, stream) record order: a record depends on the previous record of
the same rank and stream.
"""

from __future__ import annotations

import io
from typing import Dict, Tuple

from .errors import CyclicDependency, ParseError
from .model import CommGroup
from .workload import COLLECTIVE, COMPUTE, Event, EventDag, topological_order

HEADER = "event_id,rank,stream,kind,coll_kind,group_id,bytes,dep_ids,observed_start_s,observed_end_s"


def _fmt_time(t) -> str:
    return "" if t is None else repr(float(t))


def save_trace(dag: EventDag, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(HEADER + "\n")
        for gid in sorted(dag.groups):
            g = dag.groups[gid]
            members = ";".join(str(m) for m in g.members)
            rails = ";".join(str(r) for r in sorted(g.rails_touched))
            f.write(f"#group,{gid},{g.axis},{members},{rails}\n")
        for ev in dag.events.values():
            deps = ";".join(ev.deps)
            for rank in sorted(ev.rank_set):
                f.write(
                    f"{ev.id},{rank},{ev.streams.get(rank, '')},{ev.kind},"
                    f"{ev.coll_kind or ''},{ev.group or ''},{ev.bytes},{deps},"
                    f"{_fmt_time(ev.observed_start)},{_fmt_time(ev.observed_end)}\n"
                )


def load_trace(path: str) -> EventDag:
    """Parse a trace file into an EventDag.

    Raises ParseError with a line number on malformed records and
    CyclicDependency when the reconstructed edges contain a cycle.
    """
    with open(path, "r", encoding="utf-8") as f:
        return _parse(f)


def loads_trace(text: str) -> EventDag:
    return _parse(io.StringIO(text))


def _parse(f) -> EventDag:
    dag = EventDag()
    stream_tail: Dict[Tuple[int, str], str] = {}
    header_seen = False
    for lineno, raw in enumerate(f, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#group,"):
            parts = line.split(",")
            if len(parts) != 5:
                raise ParseError("malformed #group line", lineno)
            _, gid, axis, members_s, rails_s = parts
            try:
                members = tuple(int(m) for m in members_s.split(";") if m != "")
                rails = frozenset(int(r) for r in rails_s.split(";") if r != "")
            except ValueError:
                raise ParseError("non-integer group member or rail", lineno)
            dag.groups[gid] = CommGroup(id=gid, axis=axis, members=members, rails_touched=rails)
            continue
        if line.startswith("#"):
            continue
        if not header_seen:
            if line != HEADER:
                raise ParseError(f"expected header {HEADER!r}", lineno)
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 10:
            raise ParseError(f"expected 10 fields, got {len(parts)}", lineno)
        eid, rank_s, stream, kind, coll_kind, group_id, bytes_s, deps_s, start_s, end_s = parts
        if not eid:
            raise ParseError("empty event_id", lineno)
        try:
            rank = int(rank_s)
            nbytes = int(bytes_s) if bytes_s else 0
            start = float(start_s) if start_s else None
            end = float(end_s) if end_s else None
        except ValueError:
            raise ParseError("malformed numeric field", lineno)
        if kind not in (COMPUTE, COLLECTIVE):
            raise ParseError(f"unknown event kind {kind!r}", lineno)
        if kind == COLLECTIVE:
            if not group_id:
                raise ParseError("collective record without group_id", lineno)
            if group_id not in dag.groups:
                raise ParseError(f"unknown group id {group_id!r}", lineno)
        deps = set(d for d in deps_s.split(";") if d)
        key = (rank, stream)
        if key in stream_tail and stream_tail[key] != eid:
            deps.add(stream_tail[key])
        stream_tail[key] = eid
        ev = dag.events.get(eid)
        if ev is None:
            ev = Event(
                id=eid, kind=kind, rank_set=(rank,), streams={rank: stream},
                group=group_id or None, coll_kind=coll_kind or None, bytes=nbytes,
                deps=tuple(sorted(deps)), observed_start=start, observed_end=end,
            )
            if start is not None and end is not None:
                ev.duration = end - start
            dag.add(ev)
        else:
            if rank not in ev.rank_set:
                ev.rank_set = tuple(ev.rank_set) + (rank,)
            ev.streams[rank] = stream
            ev.deps = tuple(sorted(set(ev.deps) | deps))
    for ev in dag.events.values():
        ev.rank_set = tuple(sorted(ev.rank_set))
        ev.deps = tuple(d for d in ev.deps if d != ev.id)
    if topological_order(dag) is None:
        raise CyclicDependency("trace dependency edges contain a cycle")
    return dag
