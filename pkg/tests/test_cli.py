"""Command line entry points: exit codes, overrides, and output files."""

import os

import pytest

from railsim.cli import DEFAULT_CLASS_EDGES, load_scenario, main

SCENARIO = """\
[scenario]
seed = 7

[topology]
num_domains = 4
gpus_per_domain = 4
scaleup_bandwidth = 900e9
nic_ports = 2
nic_port_bandwidth = 25e9
rail_switch = ocs
reconfig_delay = 0.01
radix = 576

[workload]
pp = 2
dp = 2
tp = 4
n_layer = 8
n_microbatch = 2
bytes_per_layer_param = 1000000
bytes_activation = 500000
bytes_sync_allreduce = 10000
fwd_layer = 0.01
bwd_layer = 0.02
optim = 0.005
pre_stage = 0.001

[control]
provisioning = true
alpha = 1e-6

[sweep]
delays = 0, 0.01
"""


@pytest.fixture
def scenario(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SCENARIO)
    return str(p)


class TestExitCodes:
    def test_ok(self, scenario, tmp_path, capsys):
        assert main(["gen", "--scenario", scenario,
                     "--out", str(tmp_path / "t.csv")]) == 0
        assert "wrote" in capsys.readouterr().out

    def test_config_error(self, tmp_path, capsys):
        p = tmp_path / "broken.ini"
        p.write_text("[workload]\npp = 2\n")  # no [topology]
        assert main(["sim", "--scenario", str(p)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_infeasible(self, scenario, tmp_path, capsys):
        # 300 domains x 2 ports exceed the radix-576 circuit switch.
        text = SCENARIO.replace("num_domains = 4", "num_domains = 300")
        text = text.replace("dp = 2", "dp = 150")
        p = tmp_path / "big.ini"
        p.write_text(text)
        assert main(["gen", "--scenario", str(p),
                     "--out", str(tmp_path / "t.csv")]) == 3
        assert "infeasible" in capsys.readouterr().err

    def test_io_error(self, scenario, capsys):
        assert main(["gen", "--scenario", scenario,
                     "--out", "/nonexistent-dir/t.csv"]) == 4
        assert "io" in capsys.readouterr().err

    def test_missing_scenario_file(self, capsys):
        assert main(["sim", "--scenario", "/no/such/file.ini"]) == 4


class TestOverrides:
    def test_flag_overrides(self, scenario):
        class Args:
            delay = 0.5
            switch = "electrical"
            seed = 99
            provisioning = False

        scn = load_scenario(scenario, Args())
        assert scn.topology.reconfig_delay == 0.5
        assert scn.topology.rail_switch_kind == "electrical"
        assert scn.seed == 99
        assert not scn.provisioning

    def test_file_values_without_flags(self, scenario):
        scn = load_scenario(scenario)
        assert scn.topology.reconfig_delay == 0.01
        assert scn.seed == 7
        assert scn.provisioning
        assert scn.delays == (0.0, 0.01)

    def test_env_seed(self, scenario, monkeypatch):
        monkeypatch.setenv("OPUS_SEED", "123")
        assert load_scenario(scenario).seed == 123

    def test_bad_env_seed(self, scenario, monkeypatch, capsys):
        monkeypatch.setenv("OPUS_SEED", "not-a-number")
        assert main(["sim", "--scenario", scenario]) == 2


class TestGen:
    def test_deterministic_output(self, scenario, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["gen", "--scenario", scenario, "--out", str(a)]) == 0
        assert main(["gen", "--scenario", scenario, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestWindows:
    def test_scenario_and_trace_agree(self, scenario, tmp_path, capsys):
        trace = tmp_path / "trace.csv"
        assert main(["gen", "--scenario", scenario, "--out", str(trace)]) == 0
        d1, d2 = tmp_path / "w1", tmp_path / "w2"
        assert main(["windows", "--scenario", scenario,
                     "--out-dir", str(d1)]) == 0
        assert main(["windows", "--trace", str(trace),
                     "--out-dir", str(d2)]) == 0
        assert (d1 / "windows.csv").read_bytes() == (d2 / "windows.csv").read_bytes()
        assert (d1 / "cdf.csv").read_bytes() == (d2 / "cdf.csv").read_bytes()

    def test_no_windows_message(self, tmp_path, capsys):
        trace = tmp_path / "one.csv"
        trace.write_text(
            "event_id,rank,stream,kind,coll_kind,group_id,bytes,dep_ids,"
            "observed_start_s,observed_end_s\n"
            "#group,g,DP,0;4,0\n"
            "c1,0,dp,collective,AllGather,g,100,,0.0,1.0\n"
            "c1,4,dp,collective,AllGather,g,100,,0.0,1.0\n")
        assert main(["windows", "--trace", str(trace),
                     "--out-dir", str(tmp_path / "w")]) == 0
        assert "no windows found" in capsys.readouterr().out
        header = (tmp_path / "w" / "windows.csv").read_text().splitlines()
        assert header == ["rail,start_s,end_s,size_s,next_volume_bytes,class"]

    def test_class_edge_override(self, scenario, tmp_path, capsys):
        out = tmp_path / "w"
        assert main(["windows", "--scenario", scenario, "--classes", "1000",
                     "--out-dir", str(out)]) == 0
        body = (out / "windows.csv").read_text()
        labels = {line.rsplit(",", 1)[1] for line in body.splitlines()[1:]}
        assert labels <= {"<1000B", ">=1000B"}


class TestSimAndSweep:
    def test_sim_outputs(self, scenario, tmp_path, capsys):
        out = tmp_path / "sim"
        assert main(["sim", "--scenario", scenario, "--out-dir", str(out)]) == 0
        assert "makespan" in capsys.readouterr().out
        timeline = (out / "timeline.csv").read_text().splitlines()
        assert timeline[0] == "event_id,rank,start_s,end_s"
        assert len(timeline) > 1
        reconfig = (out / "reconfig.csv").read_text().splitlines()
        assert reconfig[0] == "time_s,rail,group_id,speculative,delay_s,ports_changed"
        assert len(reconfig) > 1

    def test_sweep_outputs_and_jobs(self, scenario, tmp_path):
        d1, d2 = tmp_path / "s1", tmp_path / "s2"
        assert main(["sweep", "--scenario", scenario, "--out-dir", str(d1)]) == 0
        assert main(["sweep", "--scenario", scenario, "--out-dir", str(d2),
                     "--jobs", "2"]) == 0
        assert (d1 / "sweep.csv").read_bytes() == (d2 / "sweep.csv").read_bytes()
        assert (d1 / "sweep.svg").read_bytes() == (d2 / "sweep.svg").read_bytes()
        lines = (d1 / "sweep.csv").read_text().splitlines()
        assert lines[0] == "delay_s,policy,makespan_s,overhead"
        assert len(lines) == 1 + 2 * 2  # two delays x two policies
        svg = (d1 / "sweep.svg").read_text()
        assert svg.startswith("<svg") or "<svg" in svg.splitlines()[0]
        assert "polyline" in svg


class TestEconAndTable:
    def test_econ_defaults(self, tmp_path, capsys, shipped_econ_path):
        out = tmp_path / "econ"
        assert main(["econ", "--out-dir", str(out)]) == 0
        text = capsys.readouterr().out
        assert "cost saving 70.71%" in text
        assert "power saving 92.84%" in text
        bom = (out / "bom.csv").read_text().splitlines()
        assert bom[0] == "fabric,item,count,unit_cost,unit_power_w,cost,power_w"
        assert any(line.startswith("electrical,") for line in bom[1:])
        assert any(line.startswith("ocs,") for line in bom[1:])

    def test_table4(self, tmp_path, capsys):
        out = tmp_path / "table4.csv"
        assert main(["table4", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "tech,reconfig_time_s,radix,max_gpus_GB200,max_gpus_H200"
        assert len(lines) == 8
        assert lines[5].startswith("Piezo,") and lines[5].endswith(",20736,2304")


class TestDefaults:
    def test_shipped_scenario_parses(self, shipped_scenario_path):
        scn = load_scenario(shipped_scenario_path)
        assert scn.topology.rail_switch_kind == "ocs"
        assert scn.workload is not None

    def test_default_class_edges(self):
        assert DEFAULT_CLASS_EDGES == (1e6, 500e6, 2e9)
