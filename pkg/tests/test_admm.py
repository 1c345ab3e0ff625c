import numpy as np
import pytest

from dtmpc.admm import AdmmOptions, run_consensus, shared_coordinates
from dtmpc.model import Topology, build_selection_maps
from dtmpc.ocp import OcpLayout, OcpStatus, Scheme, solve_ocp
from dtmpc.synthesis import synthesize

from conftest import make_scalar_subsystem


def single_agent():
    topo = Topology.from_lists([[0]])
    maps = build_selection_maps(topo, [1], [1])
    mods = [make_scalar_subsystem(a=0.5, b=1.0)]
    ing, _ = synthesize(mods, topo, maps)
    return mods, topo, maps, ing


class TestSharedCoordinates:
    def test_single_agent_owns_everything_alone(self):
        mods, topo, maps, ing = single_agent()
        layout = OcpLayout(2, maps.state_dims, maps.input_dims, True)
        shared = shared_coordinates(Scheme.RLXD, layout, topo, 0)
        # Trajectory x0 over 3 stages, plus radius and center.
        assert set(shared) == {"x0_0_0", "x0_1_0", "x0_2_0", "a0", "c0_0"}

    def test_chain_overlap_structure(self, chain3):
        topo, maps = chain3
        layout = OcpLayout(1, maps.state_dims, maps.input_dims, False)
        views = [set(shared_coordinates(Scheme.ADAP, layout, topo, i))
                 for i in range(3)]
        # Agents 0 and 2 never share the other end's coordinates directly.
        assert not any(g.startswith(("x2", "a2")) for g in views[0])
        assert not any(g.startswith(("x0", "a0")) for g in views[2])
        # The middle agent sees everything; the ends overlap exactly on it.
        assert views[0] <= views[1] and views[2] <= views[1]
        assert views[0] & views[2] == {"x1_0_0", "x1_1_0", "a1"}


class TestConvergence:
    def test_single_agent_converges_in_one_iteration(self):
        mods, topo, maps, ing = single_agent()
        res = run_consensus(Scheme.RLXD, np.array([0.5]), 2, ing, mods, topo, maps)
        assert res.status is OcpStatus.OPTIMAL
        assert res.iterations == 1
        central = solve_ocp(Scheme.RLXD, np.array([0.5]), 2, ing, mods, topo, maps)
        assert res.outcome.solution.objective == pytest.approx(
            central.solution.objective, rel=1e-4)

    def test_benchmark_matches_centralized(self, paper, ingredients,
                                           table1_solutions):
        x0 = np.array([-0.1, -0.4])
        res = run_consensus(Scheme.RLXD, x0, 2, ingredients, paper.models,
                            paper.topology, paper.maps)
        assert res.status is OcpStatus.OPTIMAL
        central = table1_solutions[((-0.1, -0.4), Scheme.RLXD)]
        relgap = abs(res.outcome.solution.objective
                     - central.solution.objective) / central.solution.objective
        assert relgap < 1e-3

    def test_residuals_decrease_and_meet_tolerance(self, paper, ingredients):
        res = run_consensus(Scheme.RLXD, np.array([-0.1, -0.4]), 2, ingredients,
                            paper.models, paper.topology, paper.maps,
                            AdmmOptions(eps_primal=1e-4, eps_dual=1e-4))
        primal, dual = res.residual_history[-1]
        assert primal <= 1e-4 and dual <= 1e-4
        first_primal = res.residual_history[0][0]
        assert primal < first_primal

    def test_deterministic_replay(self, paper, ingredients):
        runs = [
            run_consensus(Scheme.RLXD, np.array([-0.6, -0.6]), 2, ingredients,
                          paper.models, paper.topology, paper.maps)
            for _ in range(2)
        ]
        assert runs[0].iterations == runs[1].iterations
        assert runs[0].residual_history == runs[1].residual_history
        assert np.array_equal(runs[0].outcome.solution.x,
                              runs[1].outcome.solution.x)

    def test_origin_is_a_fixed_point(self, paper, ingredients):
        res = run_consensus(Scheme.ADAP, np.zeros(2), 2, ingredients,
                            paper.models, paper.topology, paper.maps)
        assert res.status is OcpStatus.OPTIMAL
        assert res.outcome.solution.objective == pytest.approx(0.0, abs=1e-6)
        assert np.allclose(res.outcome.solution.x, 0.0, atol=1e-4)


class TestFailureModes:
    def test_local_infeasibility_detected(self, paper, ingredients):
        # x0 outside the state box makes every agent's subproblem infeasible.
        res = run_consensus(Scheme.ADAP, np.array([10.0, 10.0]), 2, ingredients,
                            paper.models, paper.topology, paper.maps)
        assert res.status is OcpStatus.INFEASIBLE
        assert res.iterations == 1

    def test_coupled_infeasibility_stalls_as_failure(self, paper, ingredients):
        # Locally feasible but globally inconsistent: the primal residual
        # stalls away from zero and the run reports non-convergence.
        res = run_consensus(Scheme.ADAP, np.array([-0.6, -0.6]), 2, ingredients,
                            paper.models, paper.topology, paper.maps,
                            AdmmOptions(max_iter=40))
        assert res.status is OcpStatus.NUMERICAL_FAILURE
        assert "no convergence" in res.outcome.detail
        assert res.residual_history[-1][0] > 1e-2

    def test_iteration_budget_exhaustion(self, paper, ingredients):
        res = run_consensus(Scheme.RLXD, np.array([-0.6, -0.6]), 2, ingredients,
                            paper.models, paper.topology, paper.maps,
                            AdmmOptions(eps_primal=1e-12, eps_dual=1e-12,
                                        max_iter=3))
        assert res.status is OcpStatus.NUMERICAL_FAILURE
        assert res.iterations == 3

    def test_trace_records_every_agent_each_round(self, paper, ingredients):
        res = run_consensus(Scheme.RLXD, np.array([-0.1, -0.4]), 2, ingredients,
                            paper.models, paper.topology, paper.maps,
                            keep_trace=True)
        assert len(res.trace) == 2 * res.iterations
        first_round = [m for m in res.trace if m.iteration == 1]
        assert sorted(m.sender for m in first_round) == [0, 1]
        assert all(np.isfinite(list(m.values.values())).all() for m in res.trace)
