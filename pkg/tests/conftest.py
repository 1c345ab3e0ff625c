import numpy as np
import pytest

from dtmpc.cli import bundled_scenario_path
from dtmpc.model import SubsystemModel, Topology, build_selection_maps, load_scenario
from dtmpc.ocp import Scheme, solve_ocp
from dtmpc.synthesis import synthesize


@pytest.fixture(scope="session")
def paper():
    """Bundled two-subsystem unstable benchmark scenario."""
    return load_scenario(bundled_scenario_path())


@pytest.fixture(scope="session")
def ingredients(paper):
    ing, report = synthesize(paper.models, paper.topology, paper.maps)
    assert report.passed
    return ing


@pytest.fixture(scope="session")
def table1_solutions(paper, ingredients):
    """All scheme/initial-condition combinations of the benchmark study."""
    out = {}
    for x0 in ((-0.1, -0.4), (-0.8, -0.1), (-0.6, -0.6)):
        for scheme in Scheme:
            out[(x0, scheme)] = solve_ocp(
                scheme, np.array(x0), 2, ingredients,
                paper.models, paper.topology, paper.maps)
    return out


def make_scalar_subsystem(
    sid=0, a=0.5, b=1.0, q=1.0, r=1.0,
    G=((1.0,), (-1.0,)), g=(5.0, 5.0), H=((1.0,), (-1.0,)), h=(1.0, 1.0),
):
    return SubsystemModel(
        id=sid, A_Ni=[[a]], B=[[b]], G_Ni=list(G), g_Ni=list(g),
        H=list(H), h=list(h), Q_Ni=[[q]], R=[[r]],
    )


@pytest.fixture
def scalar_system():
    """Single stable scalar subsystem with box constraints."""
    topo = Topology.from_lists([[0]])
    maps = build_selection_maps(topo, [1], [1])
    return [make_scalar_subsystem()], topo, maps


@pytest.fixture
def chain3():
    """Three scalar subsystems in a chain: N_2 covers everything."""
    topo = Topology.from_lists([[0, 1], [0, 1, 2], [1, 2]])
    maps = build_selection_maps(topo, [1, 1, 1], [1, 1, 1])
    return topo, maps
