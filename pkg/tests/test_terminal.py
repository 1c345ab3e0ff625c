import numpy as np
import pytest

from dtmpc.model import Topology, build_selection_maps
from dtmpc.sdp import Lin, SdpProblem, SolveStatus, eval_expr, solve
from dtmpc.synthesis import TerminalIngredients
from dtmpc.terminal import (
    TerminalSet,
    check_membership,
    input_row_lmi_quadratic,
    invariance_lmi,
    membership_lmi,
    sample_in_ellipsoid,
    soundness_check,
    state_row_lmi_linear,
    state_row_lmi_quadratic,
    _row_lmi_linear,
)

from conftest import make_scalar_subsystem


def min_eig(expr, assignment=None):
    return float(np.linalg.eigvalsh(eval_expr(expr, assignment or {})).min())


class TestMembership:
    def test_predicate_matches_quadratic(self):
        rng = np.random.default_rng(3)
        P = np.array([[2.0, 0.3], [0.3, 1.0]])
        ts = TerminalSet(c=[0.5, -0.2], a=0.7)
        for _ in range(50):
            x = rng.uniform(-2, 2, size=2)
            d = x - ts.c
            assert check_membership(x, ts, P) == (d @ P @ d <= ts.alpha + 1e-9)

    def test_lmi_psd_iff_member(self):
        P = np.array([[2.0, 0.3], [0.3, 1.0]])
        P_inv = np.linalg.inv(P)
        ts = TerminalSet(c=[0.5, -0.2], a=0.7)
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.uniform(-1, 1, size=2)
            expr = membership_lmi(P_inv, list(x), list(ts.c), ts.a)
            inside = check_membership(x, ts, P, tol=0.0)
            assert (min_eig(expr) >= -1e-12) == inside

    def test_zero_radius_forces_endpoint(self):
        expr = membership_lmi(np.eye(1), [0.3], [0.3], 0.0)
        assert min_eig(expr) >= -1e-12
        expr = membership_lmi(np.eye(1), [0.31], [0.3], 0.0)
        assert min_eig(expr) < -1e-6

    def test_affine_in_decision_entries(self):
        # Second differences along any variable direction must vanish.
        P_inv = np.array([[0.5]])
        vals = {}
        for t in (0.0, 1.0, 2.0):
            expr = membership_lmi(P_inv, [Lin.var("x")], [Lin.var("c")],
                                  Lin.var("a"))
            vals[t] = eval_expr(expr, {"x": t, "c": 0.2 * t, "a": 1 + t})
        assert np.allclose(vals[0.0] - 2 * vals[1.0] + vals[2.0], 0.0)


class TestSampling:
    def test_all_samples_inside(self):
        P = np.array([[3.0, 0.5], [0.5, 1.5]])
        c = np.array([1.0, -2.0])
        rng = np.random.default_rng(0)
        pts = sample_in_ellipsoid(P, c, 0.9, 2000, rng)
        d = pts - c
        q = np.einsum("ij,jk,ik->i", d, P, d)
        assert q.max() <= 0.81 + 1e-10

    def test_boundary_reached(self):
        rng = np.random.default_rng(1)
        pts = sample_in_ellipsoid(np.eye(2), np.zeros(2), 1.0, 5000, rng)
        r = np.linalg.norm(pts, axis=1)
        assert r.max() > 0.99
        # Uniformity sanity check: about half the mass inside r = 1/sqrt(2).
        assert abs((r <= 2 ** -0.5).mean() - 0.5) < 0.05

    def test_zero_radius_collapses_to_center(self):
        rng = np.random.default_rng(2)
        pts = sample_in_ellipsoid(np.eye(3), np.ones(3), 0.0, 10, rng)
        assert np.allclose(pts, 1.0)


def scalar_setup(p=1.0, k=-0.25, a_dyn=0.5):
    topo = Topology.from_lists([[0]])
    maps = build_selection_maps(topo, [1], [1])
    mods = [make_scalar_subsystem(a=a_dyn, b=1.0)]
    ing = TerminalIngredients(P=[np.array([[p]])], K=[np.array([[k]])])
    return mods, topo, maps, ing


class TestInvariance:
    def test_certificate_implies_containment(self):
        mods, topo, maps, ing = scalar_setup(k=-0.25)  # closed loop 0.25
        a = {0: 1.0}
        c = {0: 0.0}
        expr = invariance_lmi(0, ing, mods, topo, maps, a, c, {0: 0.25})
        assert min_eig(expr) >= -1e-12
        # Monte-Carlo oracle for the implication the LMI certifies.
        rng = np.random.default_rng(5)
        x = sample_in_ellipsoid(ing.P[0], np.zeros(1), a[0], 3000, rng)
        nxt = 0.25 * x
        assert (nxt ** 2).max() <= a[0] ** 2 + 1e-12

    def test_expanding_map_fails(self):
        mods, topo, maps, ing = scalar_setup(k=1.0, a_dyn=0.5)  # closed loop 1.5
        for lam in (0.1, 0.5, 1.0, 1.5, 2.25):
            expr = invariance_lmi(0, ing, mods, topo, maps,
                                  {0: 1.0}, {0: 0.0}, {0: lam})
            assert min_eig(expr) < -1e-9

    def test_equilibrium_center_feasible(self):
        # Fixed point of x+ = 0.25 x + 0 is the origin shifted: with
        # closed loop 0.25 and center c, invariance of a point set (a = 0)
        # holds iff 0.25 c = c, i.e. c = 0.
        mods, topo, maps, ing = scalar_setup(k=-0.25)
        ok = invariance_lmi(0, ing, mods, topo, maps, {0: 0.0}, {0: 0.0}, {0: 0.0})
        assert min_eig(ok) >= -1e-12
        bad = invariance_lmi(0, ing, mods, topo, maps, {0: 0.0}, {0: 0.4}, {0: 0.0})
        assert min_eig(bad) < -1e-9

    def test_affine_in_all_arguments(self):
        mods, topo, maps, ing = scalar_setup()
        mats = []
        for t in (0.0, 1.0, 2.0):
            expr = invariance_lmi(0, ing, mods, topo, maps,
                                  {0: Lin.var("a")}, {0: Lin.var("c")},
                                  {0: Lin.var("lam")})
            mats.append(eval_expr(expr, {"a": 1 + t, "c": 0.3 * t, "lam": 0.5 + t}))
        assert np.allclose(mats[0] - 2 * mats[1] + mats[2], 0.0)


def maximize_radius(build_expr, extra_vars=("m",), center=None):
    """Maximize a over a single row LMI with nonnegative multiplier(s)."""
    p = SdpProblem()
    a = p.add_var("a", lb=0.0)
    mult = {0: p.add_var("m", lb=0.0)}
    c = {0: center if center is not None else 0.0}
    p.obj_lin = -1.0 * a
    p.add_psd(build_expr({0: a}, c, mult))
    return solve(p)


class TestRowConstraints:
    def test_quadratic_state_row_max_radius(self):
        # |x| <= 5 box, P = 1, c = 0: the largest certifiable radius is 5.
        mods, topo, maps, ing = scalar_setup()
        res = maximize_radius(
            lambda a, c, m: state_row_lmi_quadratic(0, 0, ing, mods, topo,
                                                    maps, a, c, m))
        assert res.status is SolveStatus.OPTIMAL
        assert np.isclose(res.assignment["a"], 5.0, atol=1e-5)

    def test_quadratic_row_far_center_infeasible(self):
        # Center at -6 puts (row . c)^2 = 36 > g^2 = 25: no radius works.
        mods, topo, maps, ing = scalar_setup()
        res = maximize_radius(
            lambda a, c, m: state_row_lmi_quadratic(0, 0, ing, mods, topo,
                                                    maps, a, c, m),
            center=-6.0)
        assert res.status is SolveStatus.INFEASIBLE

    def test_quadratic_rejects_nonpositive_bound(self):
        mods, topo, maps, ing = scalar_setup()
        mods[0].g_Ni = np.array([0.0, 5.0])
        with pytest.raises(ValueError, match="positive bound"):
            state_row_lmi_quadratic(0, 0, ing, mods, topo, maps,
                                    {0: 1.0}, {0: 0.0}, {0: 1.0})

    def test_linear_state_row_max_radius(self):
        # One-sided row x <= 5 with P = 1, c = 0: sigma (5 - sigma) >= a^2 / 4
        # peaks at sigma = 2.5, giving a_max = 5.
        mods, topo, maps, ing = scalar_setup()
        res = maximize_radius(
            lambda a, c, m: state_row_lmi_linear(0, 0, ing, mods, topo,
                                                 maps, a, c, m))
        assert res.status is SolveStatus.OPTIMAL
        assert np.isclose(res.assignment["a"], 5.0, atol=1e-5)

    def test_linear_row_analytic_region(self):
        # Direct check of the scalar certificate sigma (g - c - sigma) >= a^2/4.
        mods, topo, maps, ing = scalar_setup()
        for sig, a_val, feas in [(2.5, 4.9, True), (2.5, 5.0, True),
                                 (2.5, 5.01, False), (1.0, 4.0, True),
                                 (1.0, 4.1, False)]:
            expr = state_row_lmi_linear(0, 0, ing, mods, topo, maps,
                                        {0: a_val}, {0: 0.0}, {0: sig})
            analytic = sig * (5.0 - sig) >= a_val ** 2 / 4 - 1e-12
            assert (min_eig(expr) >= -1e-9) == feas == analytic

    def test_linear_row_shifted_center(self):
        # x <= 5 with c = -6 leaves room 11; a_max = 11 for the single row.
        mods, topo, maps, ing = scalar_setup()
        res = maximize_radius(
            lambda a, c, m: state_row_lmi_linear(0, 0, ing, mods, topo,
                                                 maps, a, c, m),
            center=-6.0)
        assert res.status is SolveStatus.OPTIMAL
        assert np.isclose(res.assignment["a"], 11.0, atol=1e-5)

    def test_linear_row_allows_zero_bound(self):
        mods, topo, maps, ing = scalar_setup()
        expr = _row_lmi_linear(np.array([1.0]), 0.0, ing, topo, maps,
                               0, {0: 0.0}, {0: 0.0}, {0: 0.0})
        assert min_eig(expr) >= -1e-12

    def test_input_row_uses_terminal_gain(self):
        # |u| = |K x| with K = -0.25: h = 1 allows |x| <= 4, so a_max = 4
        # for the row that bounds -K x = 0.25 x by 1... both rows give 4.
        mods, topo, maps, ing = scalar_setup(k=-0.25)
        res = maximize_radius(
            lambda a, c, m: input_row_lmi_quadratic(0, 0, ing, mods, topo,
                                                    maps, a, c, m))
        assert res.status is SolveStatus.OPTIMAL
        assert np.isclose(res.assignment["a"], 4.0, atol=1e-4)


class TestSoundness:
    def test_certified_sets_pass(self, paper, ingredients, table1_solutions):
        from dtmpc.ocp import Scheme
        sol = table1_solutions[((-0.1, -0.4), Scheme.ASYM)].solution
        report = soundness_check(ingredients, paper.models, paper.topology,
                                 paper.maps, sol.sets, samples=10_000, seed=0)
        assert report.passed(tol=1e-6)

    def test_inflated_radii_detected(self, paper, ingredients, table1_solutions):
        from dtmpc.ocp import Scheme
        sol = table1_solutions[((-0.1, -0.4), Scheme.ASYM)].solution
        big = [TerminalSet(c=s.c, a=50.0 * s.a + 10.0) for s in sol.sets]
        report = soundness_check(ingredients, paper.models, paper.topology,
                                 paper.maps, big, samples=10_000, seed=0)
        assert not report.passed(tol=1e-6)
        assert report.max_state_violation > 0 or report.max_input_violation > 0
