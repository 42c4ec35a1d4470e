import pytest

from adaptsim.adaptation import NodeProfile
from adaptsim.arch_graph import DataKind, FlowEdge, NodeRecord, build_abstract
from adaptsim.context import EnergyCostModel, LinkStochastics, StochasticParams
from adaptsim.refinement import refine
from adaptsim.scenario import load_scenario
from adaptsim.sim_engine import Scenario

D, P = DataKind.D, DataKind.P


def ema3_abstract():
    """Controller A1 fed by investigators A2 and A3 with both data kinds."""
    nodes = [NodeRecord("A1", "controller"), NodeRecord("A2", "investigator"), NodeRecord("A3", "investigator")]
    flows = [FlowEdge("A2", "A1", D), FlowEdge("A2", "A1", P), FlowEdge("A3", "A1", D), FlowEdge("A3", "A1", P)]
    return build_abstract(nodes, flows)


def ema4_abstract():
    nodes = [
        NodeRecord("A1", "controller"),
        NodeRecord("A2", "investigator"),
        NodeRecord("A3", "investigator"),
        NodeRecord("A4", "analyst", hosts=frozenset({D, P})),
    ]
    flows = [
        FlowEdge("A2", "A1", D), FlowEdge("A2", "A1", P),
        FlowEdge("A3", "A1", D), FlowEdge("A3", "A1", P),
        FlowEdge("A1", "A4", P),
    ]
    return build_abstract(nodes, flows)


def pair_scenario(kind=D, lam=0.0, duration=10.0, **kw):
    """Two nodes, one flow S->R of ``kind``; no bandwidth noise by default."""
    g = refine(build_abstract([NodeRecord("R"), NodeRecord("S")], [FlowEdge("S", "R", kind)]), "direct")
    stoch = kw.pop("stochastic", None) or StochasticParams(
        production={f"S.T_{kind.value}": lam},
        default_bandwidth=LinkStochastics(100.0, 0.0, 100.0),
    )
    return Scenario(
        graph=g,
        profiles={"R": NodeProfile(), "S": NodeProfile()},
        stochastic=stoch,
        duration=duration,
        **kw,
    )


@pytest.fixture
def ema3():
    return ema3_abstract()


@pytest.fixture
def ema4():
    return ema4_abstract()


@pytest.fixture(scope="session")
def reference():
    return load_scenario("ema4")


@pytest.fixture
def flat_costs():
    return EnergyCostModel(idle_cost=0.5, inactive_cost=0.5, active_base_cost=0.5,
                           push_send_cost=0, push_recv_cost=0, pull_request_cost=0, pull_transfer_cost=0)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
