"""Shared builders for the test suite."""

import pytest

from railsim import ControlPolicy, TopologySpec, WorkloadParams, build_topology


class Times:
    """Minimal per-event timing record accepted by the window analyzer."""

    __slots__ = ("start", "end", "starts")

    def __init__(self, start, end, starts=None):
        self.start = start
        self.end = end
        self.starts = starts


def make_topo(num_domains=4, gpus_per_domain=4, nic_ports=2, kind="ocs",
              delay=0.0, radix=576, nic_bw=25e9, scaleup_bw=900e9):
    return build_topology(TopologySpec(
        num_domains=num_domains, gpus_per_domain=gpus_per_domain,
        scaleup_bandwidth=scaleup_bw, nic_ports=nic_ports,
        nic_port_bandwidth=nic_bw, rail_switch_kind=kind,
        reconfig_delay=delay, radix=radix))


def make_params(pp=2, dp=2, tp=4, n_layer=8, n_microbatch=2,
                param_bytes=1_000_000, act_bytes=500_000, sync_bytes=10_000,
                fwd=0.01, bwd=0.02, optim=0.005, pre=0.001):
    return WorkloadParams(
        pp=pp, dp=dp, tp=tp, n_layer=n_layer, n_microbatch=n_microbatch,
        bytes_per_layer_param=param_bytes, bytes_activation=act_bytes,
        bytes_sync_allreduce=sync_bytes,
        compute_times={"fwd_layer": fwd, "bwd_layer": bwd,
                       "optim": optim, "pre_stage": pre})


REACTIVE = ControlPolicy(provisioning=False)
PROVISIONED = ControlPolicy(provisioning=True)


@pytest.fixture(scope="session")
def shipped_scenario_path():
    import railsim.cli
    return railsim.cli.DEFAULT_SCENARIO


@pytest.fixture(scope="session")
def shipped_econ_path():
    import railsim.cli
    return railsim.cli.DEFAULT_ECON_CONFIG
