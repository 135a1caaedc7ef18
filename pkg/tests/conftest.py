import numpy as np
import pytest

from cumtomo.cumulants import LinkDistribution
from cumtomo.netmodel import Link, RoutingMatrix, Scenario, Topology, routing_from_paths

DATA_DIR = None


def pytest_configure(config):
    global DATA_DIR
    DATA_DIR = config.rootpath / "data"


@pytest.fixture(scope="session")
def data_dir(pytestconfig):
    return pytestconfig.rootpath / "data"


def make_demo_scenario(rational: bool = False) -> Scenario:
    """Three monitor paths over three exponential links (rates 1, 1.5, 2):
    p1 = l1+l2, p2 = l1+l3, p3 = l3."""
    from fractions import Fraction

    if rational:
        rates = [Fraction(1), Fraction(3, 2), Fraction(2)]
    else:
        rates = [1.0, 1.5, 2.0]
    links = [
        Link("l1", "a", "b", LinkDistribution.exponential(rates[0])),
        Link("l2", "b", "c", LinkDistribution.exponential(rates[1])),
        Link("l3", "b", "d", LinkDistribution.exponential(rates[2])),
    ]
    topo = Topology(nodes=["a", "b", "c", "d"], links=links)
    paths = [["l1", "l2"], ["l1", "l3"], ["l3"]]
    routing = routing_from_paths(paths, ["p1", "p2", "p3"])
    return Scenario(
        topology=topo,
        monitors=["a", "b", "c", "d"],
        paths=paths,
        routing=routing,
        seed=0,
    )


@pytest.fixture
def demo_scenario() -> Scenario:
    return make_demo_scenario()


@pytest.fixture
def demo_scenario_rational() -> Scenario:
    return make_demo_scenario(rational=True)


# The 8-path x 8-link incidence used for the link-set examples.
EIGHT_PATH_MATRIX = np.array(
    [
        [1, 0, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 1, 0, 0],
        [0, 0, 0, 1, 0, 1, 0, 1],
        [0, 0, 1, 1, 0, 1, 1, 0],
        [0, 1, 1, 1, 0, 0, 0, 0],
        [0, 1, 0, 0, 1, 0, 1, 0],
        [0, 1, 1, 0, 1, 0, 0, 1],
        [0, 1, 0, 0, 0, 1, 1, 0],
    ],
    dtype=np.int8,
)


@pytest.fixture
def eight_path_routing() -> RoutingMatrix:
    return RoutingMatrix(
        EIGHT_PATH_MATRIX,
        [f"p{j}" for j in range(1, 9)],
        [f"l{k}" for k in range(1, 9)],
    )
