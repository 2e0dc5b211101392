"""Command-line interface: scenario generation, analysis, sweeps, reports.

Subcommands:
  gen      generate a 3D-parallel schedule and write it as a trace file
  windows  idle-window analysis (windows.csv, cdf.csv, console summary)
  sim      one simulation run (timeline.csv, reconfig.csv)
  sweep    reconfiguration-delay sweep, both policies (sweep.csv, sweep.svg)
  econ     fabric cost/power comparison (bom.csv, console savings)
  table4   OCS technology scalability table (table4.csv)

Scenarios and econ inputs are INI files with named sections; command-line
flags override file fields.  The OPUS_SEED environment variable overrides
the scenario seed.  Exit codes: 0 success, 2 config error, 3 infeasible
topology or port demand, 4 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .control import ReconfigLogEntry
from .econ import (EconConfig, FabricBom, electrical_fabric_bom,
                   ocs_fabric_bom, savings, scalability_table)
from .errors import (ConfigError, ConflictDeadlock, CyclicDependency,
                     DegreeInfeasible, EmptyInput, EmptyPhase, InvalidNicConfig,
                     InvalidParams, NotMember, ParseError, RadixExceeded,
                     UnsupportedKind)
from .fabric import ControlPolicy, SimResult, simulate, sweep_delay
from .model import Topology, TopologySpec, build_topology
from .trace import load_trace, save_trace
from .windows import Window, analyze_rail, classify_by_volume, window_cdf
from .workload import EventDag, WorkloadParams, generate_3d_schedule

# Window volume classes bracketing sync (<1 MB), pipeline activation,
# parameter AllGather, and gradient ReduceScatter traffic.
DEFAULT_CLASS_EDGES = (1e6, 500e6, 2e9)

_DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
DEFAULT_ECON_CONFIG = os.path.join(_DATA_DIR, "econ_h200.ini")
DEFAULT_SCENARIO = os.path.join(_DATA_DIR, "llama3_8b.ini")


@dataclass
class Scenario:
    """One experiment bundle: topology, workload or trace, policy, sweep."""

    topology: TopologySpec
    workload: Optional[WorkloadParams]
    trace_path: Optional[str]
    provisioning: bool
    alpha: float
    delays: Tuple[float, ...]
    seed: int


def _fmt(x: float) -> str:
    """Stable float formatting for CSV output (repr round-trips exactly)."""
    return repr(float(x))


def _getfloat(sec, key: str, default: Optional[float] = None) -> float:
    raw = sec.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing config key {key!r}")
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad numeric value for {key!r}: {raw!r}")


def _getint(sec, key: str, default: Optional[int] = None) -> int:
    v = _getfloat(sec, key, float(default) if default is not None else None)
    if v != int(v):
        raise ConfigError(f"{key!r} must be an integer, got {v}")
    return int(v)


def _getbool(sec, key: str, default: bool) -> bool:
    raw = sec.get(key)
    if raw is None:
        return default
    if raw.lower() in ("1", "true", "yes", "on"):
        return True
    if raw.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean value for {key!r}: {raw!r}")


def load_scenario(path: str, args: Optional[argparse.Namespace] = None) -> Scenario:
    """Parse a scenario INI file and apply flag and environment overrides."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, "r", encoding="utf-8") as f:
            cp.read_file(f, source=path)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse scenario {path}: {e}")
    if "topology" not in cp:
        raise ConfigError(f"scenario {path} missing [topology] section")
    t = cp["topology"]
    spec = TopologySpec(
        num_domains=_getint(t, "num_domains"),
        gpus_per_domain=_getint(t, "gpus_per_domain"),
        scaleup_bandwidth=_getfloat(t, "scaleup_bandwidth"),
        nic_ports=_getint(t, "nic_ports"),
        nic_port_bandwidth=_getfloat(t, "nic_port_bandwidth"),
        rail_switch_kind=t.get("rail_switch", "electrical").strip().lower(),
        reconfig_delay=_getfloat(t, "reconfig_delay", 0.0),
        radix=_getint(t, "radix", 0),
    )

    workload = None
    trace_path = None
    w = cp["workload"] if "workload" in cp else {}
    if isinstance(w, dict) or "trace" not in w:
        if not w:
            raise ConfigError(f"scenario {path} missing [workload] section")
        workload = WorkloadParams(
            pp=_getint(w, "pp"), dp=_getint(w, "dp"), tp=_getint(w, "tp"),
            n_layer=_getint(w, "n_layer"),
            n_microbatch=_getint(w, "n_microbatch"),
            bytes_per_layer_param=_getint(w, "bytes_per_layer_param"),
            bytes_activation=_getint(w, "bytes_activation"),
            bytes_sync_allreduce=_getint(w, "bytes_sync_allreduce"),
            compute_times={
                "fwd_layer": _getfloat(w, "fwd_layer"),
                "bwd_layer": _getfloat(w, "bwd_layer"),
                "optim": _getfloat(w, "optim"),
                "pre_stage": _getfloat(w, "pre_stage"),
            },
        )
    else:
        if len(w.keys()) > 1:
            raise ConfigError("[workload] must contain either a trace path "
                              "or generator parameters, not both")
        trace_path = w["trace"].strip()

    c = cp["control"] if "control" in cp else {}
    provisioning = _getbool(c, "provisioning", True) if c else True
    alpha = _getfloat(c, "alpha", 1e-6) if c else 1e-6

    delays: Tuple[float, ...] = (spec.reconfig_delay,)
    if "sweep" in cp and cp["sweep"].get("delays"):
        parts = [p for p in cp["sweep"]["delays"].replace(",", " ").split() if p]
        try:
            delays = tuple(float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"bad delay list: {cp['sweep']['delays']!r}")

    seed = _getint(cp["scenario"], "seed", 0) if "scenario" in cp else 0
    if os.environ.get("OPUS_SEED"):
        try:
            seed = int(os.environ["OPUS_SEED"])
        except ValueError:
            raise ConfigError(f"bad OPUS_SEED: {os.environ['OPUS_SEED']!r}")

    # Flag overrides.
    if args is not None:
        if getattr(args, "delay", None) is not None:
            spec = replace(spec, reconfig_delay=args.delay)
        if getattr(args, "switch", None):
            spec = replace(spec, rail_switch_kind=args.switch)
        if getattr(args, "provisioning", None) is not None:
            provisioning = args.provisioning
        if getattr(args, "seed", None) is not None:
            seed = args.seed

    return Scenario(topology=spec, workload=workload, trace_path=trace_path,
                    provisioning=provisioning, alpha=alpha, delays=delays,
                    seed=seed)


def _scenario_dag(scn: Scenario, topo: Topology) -> EventDag:
    if scn.trace_path is not None:
        return load_trace(scn.trace_path)
    return generate_3d_schedule(scn.workload, topo)


def _write_csv(path: str, header: str, rows: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(row + "\n")


def write_svg(path: str, series: Sequence[Tuple[str, Sequence[Tuple[float, float]]]],
              x_label: str, y_label: str, title: str) -> None:
    """Minimal deterministic polyline chart: axes, labels, one line per series."""
    width, height, margin = 640, 420, 60
    xs = [p[0] for _, pts in series for p in pts]
    ys = [p[1] for _, pts in series for p in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x: float) -> float:
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(y: float) -> float:
        return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 16}" text-anchor="middle" '
        f'font-size="12">{x_label}</text>',
        f'<text x="18" y="{height // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {height // 2})">{y_label}</text>',
    ]
    for i in range(5):
        xv = x_lo + (x_hi - x_lo) * i / 4
        yv = y_lo + (y_hi - y_lo) * i / 4
        lines.append(f'<text x="{sx(xv):.1f}" y="{height - margin + 16}" '
                     f'text-anchor="middle" font-size="10">{xv:.4g}</text>')
        lines.append(f'<text x="{margin - 6}" y="{sy(yv):.1f}" '
                     f'text-anchor="end" font-size="10">{yv:.4g}</text>')
    for i, (name, pts) in enumerate(series):
        color = colors[i % len(colors)]
        path_pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" '
                     f'points="{path_pts}"/>')
        lines.append(f'<text x="{width - margin - 4}" y="{margin + 16 * (i + 1)}" '
                     f'text-anchor="end" font-size="12" fill="{color}">{name}</text>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen(args: argparse.Namespace) -> int:
    scn = load_scenario(args.scenario, args)
    if scn.workload is None:
        raise ConfigError("gen needs generator parameters, not a trace path")
    topo = build_topology(scn.topology)
    dag = generate_3d_schedule(scn.workload, topo)
    # Stamp idealized observed times so the trace is self-contained for
    # window analysis.
    res = simulate(dag, topo, ControlPolicy(provisioning=False, alpha=scn.alpha),
                   force_baseline=True)
    for eid, t in res.event_times.items():
        dag.events[eid].observed_start = t.start
        dag.events[eid].observed_end = t.end
    save_trace(dag, args.out)
    print(f"wrote {args.out}: {len(dag.events)} events, "
          f"{len(dag.groups)} groups, makespan {res.makespan:.6f}s")
    return 0


def _observed_times(dag: EventDag) -> Dict[str, object]:
    class _T:
        __slots__ = ("start", "end", "starts")

        def __init__(self, s, e):
            self.start, self.end, self.starts = s, e, None

    times = {}
    for eid, ev in dag.events.items():
        if ev.observed_start is not None and ev.observed_end is not None:
            times[eid] = _T(ev.observed_start, ev.observed_end)
    return times


def cmd_windows(args: argparse.Namespace) -> int:
    edges = tuple(float(e) for e in args.classes.split(",")) if args.classes \
        else DEFAULT_CLASS_EDGES
    if args.trace:
        dag = load_trace(args.trace)
        times = _observed_times(dag)
        rails = sorted({r for g in dag.groups.values() if g.is_scaleout
                        for r in g.rails_touched})
    else:
        scn = load_scenario(args.scenario, args)
        topo = build_topology(scn.topology)
        dag = _scenario_dag(scn, topo)
        res = simulate(dag, topo, ControlPolicy(provisioning=scn.provisioning,
                                                alpha=scn.alpha),
                       force_baseline=True)
        times = res.event_times
        rails = list(range(topo.gpus_per_domain))

    windows: List[Window] = []
    overlaps = 0
    for rail in rails:
        rep = analyze_rail(dag, times, rail)
        windows.extend(rep.windows)
        overlaps += len(rep.overlaps)

    os.makedirs(args.out_dir, exist_ok=True)
    if windows:
        classes = classify_by_volume(windows, edges)  # stamps volume_class
    rows = [f"{w.rail},{_fmt(w.start)},{_fmt(w.end)},{_fmt(w.size)},"
            f"{int(w.next_volume_bytes)},{w.volume_class}"
            for w in sorted(windows, key=lambda w: (w.rail, w.start))]
    _write_csv(os.path.join(args.out_dir, "windows.csv"),
               "rail,start_s,end_s,size_s,next_volume_bytes,class", rows)
    if not windows:
        _write_csv(os.path.join(args.out_dir, "cdf.csv"), "size_s,fraction", [])
        print("no windows found")
        return 0
    cdf = window_cdf(windows)
    _write_csv(os.path.join(args.out_dir, "cdf.csv"), "size_s,fraction",
               [f"{_fmt(s)},{_fmt(fr)}" for s, fr in cdf])
    over_1ms = sum(1 for w in windows if w.size > 1e-3) / len(windows)
    print(f"{len(windows)} windows on {len(rails)} rails ({overlaps} overlaps)")
    print(f"fraction of windows > 1 ms: {over_1ms:.4f}")
    for st in classes:
        if st.count:
            print(f"class {st.label}: n={st.count} mean={st.mean_size * 1e3:.3f}ms "
                  f"min={st.min_size * 1e3:.3f}ms max={st.max_size * 1e3:.3f}ms")
    return 0


def _write_sim_outputs(res: SimResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for eid in sorted(res.event_times):
        t = res.event_times[eid]
        starts = t.starts or {}
        for rank in sorted(starts):
            rows.append(f"{eid},{rank},{_fmt(starts[rank])},{_fmt(t.end)}")
    _write_csv(os.path.join(out_dir, "timeline.csv"),
               "event_id,rank,start_s,end_s", rows)
    rrows = []
    for e in sorted(res.reconfig_log, key=lambda e: (e.time, e.rail, e.group)):
        rrows.append(f"{_fmt(e.time)},{e.rail},{e.group},"
                     f"{int(e.speculative)},{_fmt(e.delay)},{e.ports_changed}")
    _write_csv(os.path.join(out_dir, "reconfig.csv"),
               "time_s,rail,group_id,speculative,delay_s,ports_changed", rrows)


def cmd_sim(args: argparse.Namespace) -> int:
    scn = load_scenario(args.scenario, args)
    topo = build_topology(scn.topology)
    dag = _scenario_dag(scn, topo)
    res = simulate(dag, topo,
                   ControlPolicy(provisioning=scn.provisioning, alpha=scn.alpha))
    _write_sim_outputs(res, args.out_dir)
    print(f"makespan {res.makespan:.6f}s, overhead x{res.overhead_vs_baseline:.6f}, "
          f"{len(res.reconfig_log)} reconfigurations")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    scn = load_scenario(args.scenario, args)
    topo = build_topology(scn.topology)
    dag = _scenario_dag(scn, topo)
    policies = (ControlPolicy(provisioning=False, alpha=scn.alpha),
                ControlPolicy(provisioning=True, alpha=scn.alpha))
    rows = sweep_delay(dag, topo, scn.delays, policies, jobs=args.jobs)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_csv(os.path.join(args.out_dir, "sweep.csv"),
               "delay_s,policy,makespan_s,overhead",
               [f"{_fmt(d)},{p},{_fmt(m)},{_fmt(o)}" for d, p, m, o in rows])
    series = []
    for pol in policies:
        pts = [(d * 1e3, o) for d, p, m, o in rows if p == pol.label]
        series.append((pol.label, pts))
    write_svg(os.path.join(args.out_dir, "sweep.svg"), series,
              "reconfiguration delay (ms)", "iteration time vs baseline",
              "Reconfiguration delay sweep")
    for d, p, m, o in rows:
        print(f"delay {d * 1e3:8.3f}ms {p:16s} makespan {m:.6f}s "
              f"overhead {(o - 1) * 100:+.3f}%")
    return 0


def _bom_rows(bom: FabricBom) -> List[str]:
    rows = [f"{bom.fabric},{i.name},{i.count},{_fmt(i.unit_cost)},"
            f"{_fmt(i.unit_power_w)},{_fmt(i.cost)},{_fmt(i.power_w)}"
            for i in bom.items]
    rows.append(f"{bom.fabric},total,,,,{_fmt(bom.total_cost)},"
                f"{_fmt(bom.total_power_w)}")
    return rows


def load_econ_config(path: str) -> Tuple[EconConfig, TopologySpec]:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, "r", encoding="utf-8") as f:
            cp.read_file(f, source=path)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse econ config {path}: {e}")
    if "units" not in cp:
        raise ConfigError(f"econ config {path} missing [units] section")
    u = cp["units"]
    econ = EconConfig(
        electrical_switch_cost=_getfloat(u, "electrical_switch_cost"),
        electrical_switch_radix=_getint(u, "electrical_switch_radix"),
        electrical_port_power_w=_getfloat(u, "electrical_port_power_w"),
        transceiver_cost=_getfloat(u, "transceiver_cost"),
        transceiver_power_w=_getfloat(u, "transceiver_power_w"),
        ocs_port_cost=_getfloat(u, "ocs_port_cost"),
        ocs_chassis_power_w=_getfloat(u, "ocs_chassis_power_w"),
        ocs_chassis_ports=_getint(u, "ocs_chassis_ports"),
    )
    if "reference_topology" not in cp:
        raise ConfigError(f"econ config {path} missing [reference_topology]")
    r = cp["reference_topology"]
    spec = TopologySpec(
        num_domains=_getint(r, "num_domains"),
        gpus_per_domain=_getint(r, "gpus_per_domain"),
        scaleup_bandwidth=_getfloat(r, "scaleup_bandwidth", 900e9),
        nic_ports=_getint(r, "nic_ports"),
        nic_port_bandwidth=_getfloat(r, "nic_port_bandwidth", 50e9),
        rail_switch_kind="ocs",
        reconfig_delay=_getfloat(r, "reconfig_delay", 0.025),
        radix=_getint(r, "radix"),
    )
    return econ, spec


def cmd_econ(args: argparse.Namespace) -> int:
    econ, ref_spec = load_econ_config(args.config)
    if args.scenario:
        spec = load_scenario(args.scenario, None).topology
        spec = replace(spec, rail_switch_kind="ocs",
                       radix=spec.radix or ref_spec.radix)
    else:
        spec = ref_spec
    topo = build_topology(spec)
    elec = electrical_fabric_bom(topo, econ)
    ocs = ocs_fabric_bom(topo, econ)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_csv(os.path.join(args.out_dir, "bom.csv"),
               "fabric,item,count,unit_cost,unit_power_w,cost,power_w",
               _bom_rows(elec) + _bom_rows(ocs))
    sv = savings(elec, ocs)
    gpus = topo.num_domains * topo.gpus_per_domain
    print(f"config {args.config}: {gpus} GPUs "
          f"({topo.num_domains} domains x {topo.gpus_per_domain})")
    print(f"electrical: cost {elec.total_cost:,.0f}, power {elec.total_power_w:,.0f} W")
    print(f"ocs:        cost {ocs.total_cost:,.0f}, power {ocs.total_power_w:,.0f} W")
    print(f"cost saving {sv.cost_saving * 100:.2f}%, "
          f"power saving {sv.power_saving * 100:.2f}%")
    return 0


def cmd_table4(args: argparse.Namespace) -> int:
    rows = scalability_table()
    keys = [k for k in rows[0] if k.startswith("max_gpus_")]
    header = "tech,reconfig_time_s,radix," + ",".join(keys)
    out = [f"{r['tech']},{_fmt(r['reconfig_time_s'])},{r['radix']},"
           + ",".join(str(r[k]) for k in keys) for r in rows]
    _write_csv(args.out, header, out)
    for r in rows:
        cells = " ".join(f"{k[9:]}={r[k]}" for k in keys)
        print(f"{r['tech']:16s} t={r['reconfig_time_s']:g}s radix={r['radix']:5d} {cells}")
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="railsim",
        description="Simulator and analysis toolkit for circuit-switched GPU rails")
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", default=DEFAULT_SCENARIO,
                       help="scenario INI file")
        p.add_argument("--delay", type=float, default=None,
                       help="override rail reconfiguration delay (s)")
        p.add_argument("--switch", choices=("electrical", "ocs"), default=None,
                       help="override rail switch kind")
        p.add_argument("--seed", type=int, default=None, help="override seed")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--provisioning", dest="provisioning",
                       action="store_true", default=None)
        g.add_argument("--no-provisioning", dest="provisioning",
                       action="store_false")

    p = sub.add_parser("gen", help="generate a schedule trace")
    scenario_flags(p)
    p.add_argument("--out", default="trace.csv")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("windows", help="idle-window analysis")
    scenario_flags(p)
    p.add_argument("--trace", default=None, help="analyze a trace file instead")
    p.add_argument("--classes", default=None,
                   help="comma-separated volume class edges in bytes")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_windows)

    p = sub.add_parser("sim", help="single simulation run")
    scenario_flags(p)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("sweep", help="reconfiguration delay sweep")
    scenario_flags(p)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--jobs", type=int, default=1,
                   help="run sweep points in parallel")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("econ", help="fabric cost and power comparison")
    p.add_argument("--config", default=DEFAULT_ECON_CONFIG,
                   help="econ INI file with unit values")
    p.add_argument("--scenario", default=None,
                   help="take the topology from this scenario instead")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_econ)

    p = sub.add_parser("table4", help="OCS scalability table")
    p.add_argument("--out", default="table4.csv")
    p.set_defaults(func=cmd_table4)
    return ap


_CONFIG_ERRORS = (ConfigError, InvalidParams, InvalidNicConfig, ParseError,
                  NotMember, UnsupportedKind, EmptyPhase, EmptyInput,
                  CyclicDependency, ConflictDeadlock)
_INFEASIBLE_ERRORS = (DegreeInfeasible, RadixExceeded)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INFEASIBLE_ERRORS as e:
        print(f"error: infeasible: {e}", file=sys.stderr)
        return 3
    except _CONFIG_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
