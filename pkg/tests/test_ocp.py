import json

import numpy as np
import pytest

from dtmpc.model import Topology, build_selection_maps
from dtmpc.ocp import (
    OcpStatus,
    Scheme,
    build_ocp,
    evaluate_cost,
    solution_to_json,
    solve_ocp,
    validate_solution,
)
from dtmpc.sdp import solve
from dtmpc.synthesis import TerminalIngredients, synthesize

from conftest import make_scalar_subsystem

X0_EASY = (-0.1, -0.4)
X0_MID = (-0.8, -0.1)
X0_HARD = (-0.6, -0.6)


class TestBenchmarkCosts:
    """Optimal costs and feasibility pattern on the coupled benchmark."""

    def test_easy_point_all_schemes_agree(self, table1_solutions):
        for scheme in Scheme:
            out = table1_solutions[(X0_EASY, scheme)]
            assert out.status is OcpStatus.OPTIMAL
            assert out.solution.objective == pytest.approx(0.2528, rel=5e-2)

    def test_mid_point_costs(self, table1_solutions):
        assert table1_solutions[(X0_MID, Scheme.ADAP)].status is OcpStatus.INFEASIBLE
        asym = table1_solutions[(X0_MID, Scheme.ASYM)]
        rlxd = table1_solutions[(X0_MID, Scheme.RLXD)]
        assert asym.solution.objective == pytest.approx(1.5167, rel=5e-2)
        assert rlxd.solution.objective == pytest.approx(1.4192, rel=5e-2)
        # The relaxed rows dominate the quadratic ones: never costlier.
        assert rlxd.solution.objective <= asym.solution.objective + 1e-6

    def test_hard_point_only_relaxed_feasible(self, table1_solutions):
        assert table1_solutions[(X0_HARD, Scheme.ADAP)].status is OcpStatus.INFEASIBLE
        assert table1_solutions[(X0_HARD, Scheme.ASYM)].status is OcpStatus.INFEASIBLE
        rlxd = table1_solutions[(X0_HARD, Scheme.RLXD)]
        assert rlxd.status is OcpStatus.OPTIMAL
        assert rlxd.solution.objective == pytest.approx(1.8185, rel=5e-2)

    def test_solutions_satisfy_all_invariants(self, table1_solutions, paper,
                                              ingredients):
        for out in table1_solutions.values():
            if out.status is not OcpStatus.OPTIMAL:
                continue
            issues = validate_solution(out.solution, ingredients, paper.models,
                                       paper.topology, paper.maps)
            assert issues == []

    def test_pinned_center_matches_adaptive_scheme(self, paper, ingredients):
        pinned = solve_ocp(Scheme.ASYM, np.array(X0_EASY), 2, ingredients,
                           paper.models, paper.topology, paper.maps,
                           pin_center_to_zero=True)
        adap = solve_ocp(Scheme.ADAP, np.array(X0_EASY), 2, ingredients,
                         paper.models, paper.topology, paper.maps)
        assert pinned.status is OcpStatus.OPTIMAL
        assert pinned.solution.objective == pytest.approx(
            adap.solution.objective, abs=1e-5)


def scalar_problem():
    topo = Topology.from_lists([[0]])
    maps = build_selection_maps(topo, [1], [1])
    mods = [make_scalar_subsystem(a=0.5, b=1.0, q=1.0, r=1.0)]
    ing, _ = synthesize(mods, topo, maps)
    return mods, topo, maps, ing


class TestCostEvaluation:
    def test_hand_computed_cost(self):
        # One subsystem, T = 1, P = 2: J = x0^2 q + u0^2 r + 2 x1^2.
        topo = Topology.from_lists([[0]])
        maps = build_selection_maps(topo, [1], [1])
        mods = [make_scalar_subsystem(q=1.0, r=1.0)]
        ing = TerminalIngredients(P=[np.array([[2.0]])], K=[np.array([[0.0]])])
        x = np.array([[1.0], [0.5]])
        u = np.array([[-0.5]])
        J = evaluate_cost(x, u, ing, mods, topo, maps)
        assert J == pytest.approx(1.0 + 0.25 + 2 * 0.25)

    def test_solver_objective_matches_reevaluation(self, table1_solutions,
                                                   paper, ingredients):
        out = table1_solutions[(X0_EASY, Scheme.RLXD)]
        J = evaluate_cost(out.solution.x, out.solution.u, ingredients,
                          paper.models, paper.topology, paper.maps)
        assert J == pytest.approx(out.solution.objective, abs=1e-9)

    def test_epigraph_objective_consistent(self, paper, ingredients):
        problem, layout = build_ocp(Scheme.RLXD, np.array(X0_EASY), 2,
                                    ingredients, paper.models, paper.topology,
                                    paper.maps)
        result = solve(problem)
        J = evaluate_cost(*_traj(result.assignment, layout, paper.maps),
                          ingredients, paper.models, paper.topology, paper.maps)
        assert result.objective == pytest.approx(J, abs=1e-5)


def _traj(assignment, layout, maps):
    x = np.zeros((layout.T + 1, maps.n))
    u = np.zeros((layout.T, maps.m))
    for j in range(len(maps.state_dims)):
        for t in range(layout.T + 1):
            for d in range(maps.state_dims[j]):
                x[t, maps.state_offset(j) + d] = assignment[f"x{j}_{t}_{d}"]
        for t in range(layout.T):
            for d in range(maps.input_dims[j]):
                u[t, maps.input_offset(j) + d] = assignment[f"u{j}_{t}_{d}"]
    return x, u


class TestDegenerateInstances:
    def test_origin_start_costs_nothing(self):
        mods, topo, maps, ing = scalar_problem()
        for scheme in Scheme:
            out = solve_ocp(scheme, np.zeros(1), 3, ing, mods, topo, maps)
            assert out.status is OcpStatus.OPTIMAL
            assert out.solution.objective == pytest.approx(0.0, abs=1e-6)
            assert np.allclose(out.solution.x, 0.0, atol=1e-5)

    def test_infeasible_start_reported_cleanly(self):
        mods, topo, maps, ing = scalar_problem()
        out = solve_ocp(Scheme.ADAP, np.array([100.0]), 1, ing, mods, topo, maps)
        assert out.status is OcpStatus.INFEASIBLE
        assert out.solution is None

    def test_short_horizon_rejected(self):
        mods, topo, maps, ing = scalar_problem()
        with pytest.raises(ValueError, match="horizon"):
            build_ocp(Scheme.ADAP, np.zeros(1), 0, ing, mods, topo, maps)

    def test_wrong_x0_dimension_rejected(self):
        mods, topo, maps, ing = scalar_problem()
        with pytest.raises(ValueError, match="dimension"):
            build_ocp(Scheme.ADAP, np.zeros(2), 2, ing, mods, topo, maps)

    def test_longer_horizon_never_costlier(self, paper, ingredients):
        short = solve_ocp(Scheme.RLXD, np.array(X0_MID), 2, ingredients,
                          paper.models, paper.topology, paper.maps)
        long = solve_ocp(Scheme.RLXD, np.array(X0_MID), 4, ingredients,
                         paper.models, paper.topology, paper.maps)
        assert long.solution.objective <= short.solution.objective + 1e-6


class TestSerialization:
    def test_solution_round_trip(self, table1_solutions, ingredients, tmp_path):
        out = table1_solutions[(X0_EASY, Scheme.ASYM)]
        path = tmp_path / "sol.json"
        solution_to_json(out, str(path), ingredients, Scheme.ASYM)
        data = json.loads(path.read_text())
        assert data["status"] == "OPTIMAL"
        assert data["scheme"] == "asym"
        assert np.allclose(np.array(data["x"]), out.solution.x)
        assert np.allclose(np.array(data["u"]), out.solution.u)
        assert data["objective"] == pytest.approx(out.solution.objective)
        assert len(data["sets"]) == 2
        for k, s in enumerate(out.solution.sets):
            assert data["sets"][k]["a"] == pytest.approx(s.a)
            assert np.allclose(data["sets"][k]["c"], s.c)
            assert np.allclose(data["sets"][k]["P"], ingredients.P[k])

    def test_infeasible_outcome_serializes(self, table1_solutions, tmp_path):
        out = table1_solutions[(X0_HARD, Scheme.ADAP)]
        path = tmp_path / "inf.json"
        solution_to_json(out, str(path))
        data = json.loads(path.read_text())
        assert data["status"] == "INFEASIBLE"
        assert "x" not in data
