"""Tests for the pointwise algebraic reduction.

Closed forms for the canonical scalar scenario (a = -1, T = 1, one point
observation at t = 1/2 with H = D = Q = B = 1, l0 = 1, f0 = 0) follow from
X(t) = e^{-t}, Z(t) = e^{t} by integrating the Cauchy formulas by hand:

    C0(t)   = e^t,                      b_1 = X(1/2) C0(1/2) = 1,
    R       = e / (1 - e),
    C_1(t)  = R (e^{2t} - 1)/2  +  [t > 1/2] (e^{2t} - e)/2,
    Mk_1    = C_1(1) / (e - 1)  = -e / (e - 1),
    alpha_11 = (e + 1) / (2 (e - 1)),   u_1 = 2 (e - 1) / (3 e - 1).

The cross-checks against the impulsive BVP engine and against the
variational solver are independent code paths: the reduction accumulates
prefix quadratures of transition factors, while the engines integrate the
differential equations directly.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from perimax import (
    ControlVector,
    HasIntervals,
    adjoint_state,
    assemble_reduction,
    compare_solutions,
    prepare,
    scenario_from_dict,
    solve_impulsive_adjoint,
    solve_offline,
    solve_periodic_forced,
    solve_pointwise,
    zbar0,
    zbar_i,
)

from helpers import (
    CANONICAL_JUMP_Z0,
    canonical_dict,
    random_scenario,
    rel_err,
)

E = math.e
R_CLOSED = E / (1.0 - E)
ALPHA11_CLOSED = (E + 1.0) / (2.0 * (E - 1.0))
U1_CLOSED = 2.0 * (E - 1.0) / (3.0 * E - 1.0)
MK1_CLOSED = -E / (E - 1.0)


def _c1_closed(ts: np.ndarray) -> np.ndarray:
    """Hand-integrated prefix C_1(t) of the canonical scenario."""
    base = R_CLOSED * (np.exp(2.0 * ts) - 1.0) / 2.0
    tail = np.where(ts > 0.5, (np.exp(2.0 * ts) - E) / 2.0, 0.0)
    return base + tail


# ---------------------------------------------------------------------------
# zbar0: response to the functional weight alone
# ---------------------------------------------------------------------------


def test_zbar0_zero_functional_is_zero():
    spec = canonical_dict()
    spec["functional"]["l0"] = [0.0]
    traj = zbar0(scenario_from_dict(spec))
    assert traj.sup_norm() <= 1e-15
    assert not traj.jumps


def test_zbar0_canonical_is_constant_one(canonical):
    # -dz/dt = -z + 1 with periodicity has the equilibrium solution z = 1.
    traj = zbar0(canonical)
    assert np.max(np.abs(traj.values - 1.0)) <= 1e-10
    assert not traj.jumps


@pytest.mark.parametrize("seed", [11, 12])
def test_zbar0_matches_impulsive_engine(seed):
    scn = random_scenario(seed, pointwise=True)
    ws = prepare(scn)
    direct = zbar0(scn, adj=ws.adj)
    engine = solve_impulsive_adjoint(
        scn.system, scn.functional.l0.at, [], ws.adj
    )
    dev = max(
        np.max(np.abs(direct.values - engine.values)),
        np.max(np.abs(direct.sv_values - engine.sv_values)),
    )
    assert dev <= 1e-8 * (1.0 + engine.sup_norm())


# ---------------------------------------------------------------------------
# zbar_i: response to a single point control
# ---------------------------------------------------------------------------


def test_zbar_i_zero_control_is_zero(canonical, canonical_ws):
    traj = zbar_i(canonical, canonical_ws.adj, 0, np.zeros(1, dtype=complex))
    assert traj.sup_norm() == 0.0
    assert not traj.jumps


def test_zbar_i_canonical_unit_control(canonical, canonical_ws):
    # zbar_1(t) = e^t (R + chi_(1/2,1](t)) e^{-1/2} for the canonical scenario.
    traj = zbar_i(canonical, canonical_ws.adj, 0, np.ones(1, dtype=complex))
    assert abs(traj.values[0, 0] - CANONICAL_JUMP_Z0) <= 1e-10
    grid = traj.grid
    node = int(np.searchsorted(grid.nodes, 0.75))
    assert grid.nodes[node] == 0.75
    expected = math.exp(0.25) * (R_CLOSED + 1.0)
    assert abs(traj.values[node, 0] - expected) <= 1e-10
    # left limit at the period end must close up with the initial value
    assert float(traj.periodic_residual()) <= 1e-10


@pytest.mark.parametrize("seed", [21, 22])
def test_zbar_i_jump_equals_adjoint_control(seed):
    rng = np.random.default_rng(seed)
    scn = random_scenario(seed, pointwise=True)
    ws = prepare(scn)
    for i, point in enumerate(scn.scheme.points):
        u = rng.normal(size=point.H.shape[0]) + 1j * rng.normal(size=point.H.shape[0])
        traj = zbar_i(scn, ws.adj, i, u)
        node = ws.grid.node_index(point.t)
        assert node in traj.jumps
        expected = point.H.conj().T @ u
        assert np.max(np.abs(traj.jumps[node] - expected)) <= 1e-12 * (1 + np.max(np.abs(u)))
        post = traj.post_jump_values[node]
        pre = traj.values[node]
        assert np.max(np.abs((post - pre) - expected)) <= 1e-12 * (1 + np.max(np.abs(u)))


@pytest.mark.parametrize("seed", [31, 32])
def test_zbar_i_matches_impulsive_engine(seed):
    rng = np.random.default_rng(seed)
    scn = random_scenario(seed, pointwise=True)
    ws = prepare(scn)

    def zero_g(ts):
        return np.zeros((len(np.atleast_1d(ts)), scn.system.n), dtype=complex)

    for i, point in enumerate(scn.scheme.points):
        u = rng.normal(size=point.H.shape[0]) + 1j * rng.normal(size=point.H.shape[0])
        direct = zbar_i(scn, ws.adj, i, u)
        engine = solve_impulsive_adjoint(
            scn.system, zero_g, [(point.t, point.H.conj().T @ u)], ws.adj
        )
        dev = np.max(np.abs(direct.sv_values - engine.sv_values))
        assert dev <= 1e-9 * (1.0 + engine.sup_norm())


# ---------------------------------------------------------------------------
# assembled tables
# ---------------------------------------------------------------------------


def test_Mi_indicator_convention(canonical):
    tables = assemble_reduction(canonical)
    t1 = tables.point_times[0]
    # chi is the open-interval indicator: no identity contribution at t_1 itself
    at_t1 = tables.Mi(0, np.array([t1]))
    assert np.allclose(at_t1[0], tables.R, atol=1e-15)
    before = tables.Mi(0, np.array([0.25 * t1]))
    assert np.allclose(before[0], tables.R, atol=1e-15)
    after = tables.Mi(0, np.array([t1 + 1e-9, 1.0]))
    assert np.allclose(after - tables.R, np.eye(1), atol=1e-15)


def test_canonical_tables_closed_forms(canonical, canonical_ws):
    tables = assemble_reduction(canonical)
    grid = canonical_ws.grid
    ts = grid.nodes

    assert abs(tables.R[0, 0] - R_CLOSED) <= 1e-12
    assert abs(tables.b[0] - 1.0) <= 1e-10
    assert abs(tables.alpha[0, 0] - ALPHA11_CLOSED) <= 1e-10
    assert abs(tables.Mk[0][0, 0] - MK1_CLOSED) <= 1e-10

    # C0(t) = e^t at every node, so C0(0) = 1
    assert abs(tables.C0[0, 0] - 1.0) <= 1e-10
    assert np.max(np.abs(tables.C0[:, 0] - np.exp(ts))) <= 1e-9

    # accumulated C_1 starts at zero and follows the piecewise closed form
    c1 = tables.Ck[0][:, 0, 0]
    assert abs(c1[0]) == 0.0
    assert np.max(np.abs(c1 - _c1_closed(ts))) <= 1e-9


def test_canonical_pointwise_control(canonical):
    solution = solve_pointwise(canonical)
    assert abs(solution.u_hat.point_parts[0][0] - U1_CLOSED) <= 1e-10
    assert abs(solution.c_hat) <= 1e-12


def test_zero_functional_zero_solution():
    spec = canonical_dict()
    spec["functional"]["l0"] = [0.0]
    scn = scenario_from_dict(spec)
    tables = assemble_reduction(scn)
    assert np.max(np.abs(tables.b)) <= 1e-14
    solution = solve_pointwise(scn)
    assert solution.sigma == 0.0
    assert abs(solution.u_hat.point_parts[0][0]) <= 1e-14
    assert abs(solution.c_hat) <= 1e-14


@pytest.mark.parametrize("seed", [41, 42])
def test_stacked_system_consistency(seed):
    scn = random_scenario(seed, pointwise=True)
    tables = assemble_reduction(scn)
    p_stack = np.linalg.solve(tables.system_matrix(), tables.b)
    residual = tables.system_matrix() @ p_stack - tables.b
    assert np.max(np.abs(residual)) <= 1e-12 * (1.0 + np.max(np.abs(tables.b)))

    solution = solve_pointwise(scn)
    n = scn.system.n
    for k, point in enumerate(scn.scheme.points):
        u_k = point.D @ (point.H @ p_stack[k * n:(k + 1) * n])
        dev = np.max(np.abs(u_k - solution.u_hat.point_parts[k]))
        assert dev <= 1e-10 * (1.0 + np.max(np.abs(u_k)))


# ---------------------------------------------------------------------------
# independent probe of alpha and b through the forced-BVP engine
# ---------------------------------------------------------------------------


def _periodic_response(ws, z_traj):
    """Periodic p with dp/dt = A p + Qt z, forced by a trajectory's values."""
    forcing_sv = np.einsum("kij,kj->ki", ws.Qt_sv, z_traj.sv_values)
    return solve_periodic_forced(ws.scenario.system, forcing_sv, ws.fund)


@pytest.mark.parametrize("seed", [51, 52])
def test_alpha_and_b_match_bvp_probe(seed):
    scn = random_scenario(seed, pointwise=True)
    ws = prepare(scn)
    tables = assemble_reduction(scn, fund=ws.fund, adj=ws.adj)
    n = scn.system.n
    N = len(scn.scheme.points)
    nodes = [ws.grid.node_index(p.t) for p in scn.scheme.points]

    # b_i is the periodic response to zbar0 alone, read at t_i
    p0 = _periodic_response(ws, zbar0(scn, adj=ws.adj))
    for i, node in enumerate(nodes):
        dev = np.max(np.abs(p0.values[node] - tables.b[i * n:(i + 1) * n]))
        assert dev <= 1e-8 * (1.0 + np.max(np.abs(tables.b)))

    # column s of block (i, k): the response to the control D_k H_k e_s,
    # read at t_i, equals -alpha_{ik} e_s
    scale = 1.0 + np.max(np.abs(tables.alpha))
    for k, point in enumerate(scn.scheme.points):
        for s in range(n):
            basis = np.zeros(n, dtype=complex)
            basis[s] = 1.0
            u_k = point.D @ (point.H @ basis)
            p_resp = _periodic_response(ws, zbar_i(scn, ws.adj, k, u_k))
            for i, node in enumerate(nodes):
                column = -tables.alpha[i * n:(i + 1) * n, k * n + s]
                dev = np.max(np.abs(p_resp.values[node] - column))
                assert dev <= 1e-8 * scale


# ---------------------------------------------------------------------------
# solve_pointwise structure and agreement with the variational path
# ---------------------------------------------------------------------------


def test_pointwise_zhat_decomposition(canonical, canonical_ws):
    solution = solve_pointwise(canonical)
    rebuilt = zbar0(canonical, adj=canonical_ws.adj)
    for i in range(len(canonical.scheme.points)):
        rebuilt = rebuilt + zbar_i(
            canonical, canonical_ws.adj, i, solution.u_hat.point_parts[i]
        )
    dev = np.max(np.abs(rebuilt.values - solution.z_hat.values))
    assert dev <= 1e-10 * (1.0 + solution.z_hat.sup_norm())

    control = ControlVector(list(solution.u_hat.point_parts), [])
    adj_state = adjoint_state(canonical_ws, control)
    dev = np.max(np.abs(adj_state.values - solution.z_hat.values))
    assert dev <= 1e-9 * (1.0 + solution.z_hat.sup_norm())


def test_pointwise_p_continuous_periodic(canonical):
    solution = solve_pointwise(canonical)
    assert not solution.p.jumps
    assert float(solution.p.periodic_residual()) <= 1e-9 * (1.0 + solution.p.sup_norm())


def test_dual_path_canonical(canonical, canonical_ws, canonical_offline):
    pointwise = solve_pointwise(canonical, fund=canonical_ws.fund, adj=canonical_ws.adj)
    report = compare_solutions(canonical_offline, pointwise)
    worst = max(report["max_rel_dev"], report["z_hat"], report["p"])
    assert worst <= 1e-9
    assert rel_err(pointwise.sigma, canonical_offline.sigma) <= 1e-10


@pytest.mark.parametrize("seed", [61, 62, 63])
def test_dual_path_random_pointwise(seed):
    scn = random_scenario(seed, pointwise=True)
    ws = prepare(scn)
    variational = solve_offline(ws)
    pointwise = solve_pointwise(scn, fund=ws.fund, adj=ws.adj)
    report = compare_solutions(variational, pointwise)
    worst = max(report["max_rel_dev"], report["z_hat"], report["p"])
    assert worst <= 1e-7


def test_interval_scenario_rejected():
    scn = next(
        s for s in (random_scenario(seed) for seed in range(71, 91))
        if s.scheme.intervals
    )
    with pytest.raises(HasIntervals):
        assemble_reduction(scn)
    with pytest.raises(HasIntervals):
        solve_pointwise(scn)
