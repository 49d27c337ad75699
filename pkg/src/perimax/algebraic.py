"""Closed-form reduction of the pointwise-only estimation problem.

When every observation is taken at an instant (no windows), the coupled
periodic system collapses to an N*n-dimensional linear algebraic system for
the values p(t_i).  This module builds that system from explicit Cauchy-form
ingredients -- the adjoint building blocks zbar0 and zbar_i, the transition
factor M_i(t), and the accumulated quadratures C0(t), C_k(t) -- and
reconstructs the full minimax solution from its solution.  It shares no
solver machinery with the stacked-BVP path, which makes the two routes
independent cross-checks of each other.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import HasIntervals, SingularReduction
from .estimator import ControlVector, MinimaxSolution, _as_workspace, summarize_solution
from .floquet import AdjointFundamentalTable, FundamentalMatrixTable
from .periodic_bvp import ImpulsiveTrajectory
from .quadrature import cumulative_simpson

__all__ = [
    "ReductionTables",
    "zbar0",
    "zbar_i",
    "assemble_reduction",
    "solve_pointwise",
    "compare_solutions",
]


def _context(scenario, fund: FundamentalMatrixTable | None,
             adj: AdjointFundamentalTable | None):
    ws = _as_workspace(scenario)
    ws.require_solvable()
    return ws, (fund if fund is not None else ws.fund), (adj if adj is not None else ws.adj)


def _prefix_over_grid(grid, integrand_sv: np.ndarray) -> np.ndarray:
    """Chain per-segment Simpson prefixes of a segment-view integrand.

    Returns per-node values of the running integral; the integrand may jump
    at breakpoints (both one-sided samples are present in the segment view),
    the prefix itself is continuous.
    """
    out_shape = (grid.n_nodes,) + integrand_sv.shape[1:]
    out = np.empty(out_shape, dtype=complex)
    total = np.zeros(integrand_sv.shape[1:], dtype=complex)
    for k in range(grid.n_segments):
        seg = cumulative_simpson(integrand_sv[grid.sv_slice(k)], grid.seg_h(k)) + total
        out[grid.seg_slice(k)] = seg
        total = seg[-1]
    return out


def zbar0(scenario, adj: AdjointFundamentalTable | None = None) -> ImpulsiveTrajectory:
    """Periodic adjoint response to the functional weight alone, in Cauchy form:

        zbar0(t) = -Z(t) [ (E - Z(T))^-1 Z(T) P(T) + P(t) ],
        P(t) = int_0^t Z(s)^-1 l0(s) ds.

    Continuous, no jumps; equals the adjoint state at zero control.
    """
    ws, _, adj = _context(scenario, None, adj)
    grid = ws.grid
    integrand = np.einsum("kij,kj->ki", adj.Z_inv, ws.l0_nodes)
    P = _prefix_over_grid(grid, integrand[grid.sv_index])
    c = adj.resolvent_solve(adj.monodromy @ P[-1])
    z_nodes = -np.einsum("kij,kj->ki", adj.Z, c[None, :] + P)
    segs = [z_nodes[grid.seg_slice(k)] for k in range(grid.n_segments)]
    return ImpulsiveTrajectory(grid, segs, {})


def zbar_i(scenario, adj: AdjointFundamentalTable | None, i: int,
           u_i: np.ndarray) -> ImpulsiveTrajectory:
    """Adjoint response to the control at point i, in transition form:

        zbar_i(t; u) = Z(t) M_i(t) Z(t_i)^-1 H_i* u_i,
        M_i(t) = (E - Z(T))^-1 Z(T) + chi_(t_i, T)(t) E,

    with chi the open-interval indicator (chi(t_i) = 0, left continuity).
    The jump at t_i equals H_i* u_i.
    """
    ws, _, adj = _context(scenario, None, adj)
    grid = ws.grid
    pt = ws.points[i]
    v = np.conj(pt.H.T) @ np.asarray(u_i, dtype=complex)
    R = adj.resolvent_solve(adj.monodromy)
    w = adj.Z_inv[pt.node] @ v
    seg_i = int(np.searchsorted(grid.seg_offsets, pt.node))
    base = R @ w
    segs = []
    for k in range(grid.n_segments):
        vec = base + w if k >= seg_i else base
        segs.append(np.einsum("kij,j->ki", adj.Z[grid.seg_slice(k)], vec))
    if np.any(v != 0):
        segs[seg_i] = segs[seg_i].copy()
        segs[seg_i][0] = segs[seg_i - 1][-1] + v
        jumps = {pt.node: v}
    else:
        jumps = {}
    return ImpulsiveTrajectory(grid, segs, jumps)


@dataclass(frozen=True)
class ReductionTables:
    """Assembled ingredients of the pointwise algebraic system.

    ``alpha`` holds the off-identity blocks: the system solved for the
    stacked values (p(t_1), ..., p(t_N)) is  (I + alpha) p = b.  ``C0`` and
    ``Ck[k]`` are accumulated quadratures at every grid node; ``Mi(i, ts)``
    evaluates the transition factor of point i.
    """

    n: int
    point_times: tuple
    point_nodes: tuple
    R: np.ndarray
    C0: np.ndarray
    Ck: tuple
    Mk: tuple
    alpha: np.ndarray
    b: np.ndarray
    zbar0: ImpulsiveTrajectory = field(repr=False)

    def Mi(self, i: int, ts: np.ndarray) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.broadcast_to(self.R, (len(ts), self.n, self.n)).copy()
        out[ts > self.point_times[i]] += np.eye(self.n)
        return out

    def system_matrix(self) -> np.ndarray:
        return np.eye(self.alpha.shape[0], dtype=complex) + self.alpha


def assemble_reduction(scenario, fund: FundamentalMatrixTable | None = None,
                       adj: AdjointFundamentalTable | None = None) -> ReductionTables:
    """Build C0, C_k, alpha, b for a pointwise-only scheme.

        C0(t)  = (E - X(T))^-1 X(T) P0(T) + P0(t),   P0(t) = int_0^t X^-1 Qt zbar0 ds,
        C_k(t) = int_0^t X^-1(s) Qt(s) Z(s) M_k(s) ds,
        alpha_ik = -X(t_i) [ (E - X(T))^-1 X(T) C_k(T) + C_k(t_i) ] Z(t_k)^-1 H_k* D_k H_k,
        b_i = X(t_i) C0(t_i).
    """
    ws, fund, adj = _context(scenario, fund, adj)
    if ws.intervals:
        raise HasIntervals(
            f"the algebraic reduction needs a pointwise-only scheme; "
            f"found {len(ws.intervals)} interval observation(s)"
        )
    grid = ws.grid
    n = ws.n
    points = ws.points
    N = len(points)

    z0 = zbar0(ws, adj)
    X_inv_sv = fund.X_inv[grid.sv_index]
    Qtz0 = np.einsum("kij,kj->ki", ws.Qt_sv, z0.sv_values)
    P0 = _prefix_over_grid(grid, np.einsum("kij,kj->ki", X_inv_sv, Qtz0))
    c0 = fund.resolvent_solve(fund.monodromy @ P0[-1])
    C0 = c0[None, :] + P0

    R = adj.resolvent_solve(adj.monodromy)
    Z_sv = adj.Z[grid.sv_index]
    G_sv = X_inv_sv @ ws.Qt_sv @ Z_sv
    Ck = []
    Mk = []
    for pt in points:
        seg_i = int(np.searchsorted(grid.seg_offsets, pt.node))
        integrand = G_sv @ R
        start = int(grid.sv_offsets[seg_i])
        integrand[start:] += G_sv[start:]
        Ck_nodes = _prefix_over_grid(grid, integrand)
        Ck.append(Ck_nodes)
        Mk.append(fund.resolvent_solve(fund.monodromy @ Ck_nodes[-1]))

    alpha = np.zeros((N * n, N * n), dtype=complex)
    b = np.zeros(N * n, dtype=complex)
    for i, pt_i in enumerate(points):
        b[i * n:(i + 1) * n] = fund.X[pt_i.node] @ C0[pt_i.node]
        for k, pt_k in enumerate(points):
            W = adj.Z_inv[pt_k.node] @ pt_k.HDH
            alpha[i * n:(i + 1) * n, k * n:(k + 1) * n] = \
                -fund.X[pt_i.node] @ (Mk[k] + Ck[k][pt_i.node]) @ W
    return ReductionTables(
        n=n,
        point_times=tuple(float(p.t) for p in ws.scenario.scheme.points),
        point_nodes=tuple(p.node for p in points),
        R=R,
        C0=C0,
        Ck=tuple(Ck),
        Mk=tuple(Mk),
        alpha=alpha,
        b=b,
        zbar0=z0,
    )


def solve_pointwise(scenario, fund: FundamentalMatrixTable | None = None,
                    adj: AdjointFundamentalTable | None = None) -> MinimaxSolution:
    """Full minimax solution through the algebraic reduction.

    Solves (I + alpha) p = b for the values p(t_i), reads off the controls
    u_i = D_i H_i p(t_i), rebuilds z_hat = zbar0 + sum_i zbar_i(u_i) and
    p(t) = X(t) [ C0(t) + sum_k ((E - X(T))^-1 X(T) C_k(T) + C_k(t))
    Z(t_k)^-1 H_k* u_k ], then derives c_hat and sigma as usual.
    """
    ws, fund, adj = _context(scenario, fund, adj)
    tables = assemble_reduction(ws, fund, adj)
    grid = ws.grid
    n = ws.n
    points = ws.points
    N = len(points)

    system = tables.system_matrix()
    if N:
        svals = scipy.linalg.svdvals(system)
        tol = ws.scenario.solver.singularity_tol
        if svals[-1] <= tol * max(float(svals[0]), 1.0):
            raise SingularReduction(
                f"the {N * n}-dimensional pointwise system is numerically singular "
                f"(s_min = {svals[-1]:.3e}, s_max = {svals[0]:.3e})"
            )
    p_ti = np.linalg.solve(system, tables.b).reshape(N, n) if N else np.zeros((0, n))

    u_parts = [pt.D @ (pt.H @ p_ti[k]) for k, pt in enumerate(points)]
    u_hat = ControlVector(u_parts, [])

    z_hat = tables.zbar0
    for i in range(N):
        z_hat = z_hat + zbar_i(ws, adj, i, u_parts[i])

    S = tables.C0.copy()
    for k, pt_k in enumerate(points):
        vec = adj.Z_inv[pt_k.node] @ (pt_k.HDH @ p_ti[k])
        S += np.einsum("kij,j->ki", tables.Mk[k][None, :, :] + tables.Ck[k], vec)
    p_nodes = np.einsum("kij,kj->ki", fund.X, S)
    p_traj = ImpulsiveTrajectory(
        grid, [p_nodes[grid.seg_slice(k)] for k in range(grid.n_segments)], {})

    return summarize_solution(ws, z_hat, p_traj, u_hat)


def _sup(arr) -> float:
    arr = np.asarray(arr)
    return float(np.abs(arr).max()) if arr.size else 0.0


def compare_solutions(a: MinimaxSolution, b: MinimaxSolution) -> dict:
    """Deviation report between two minimax solutions of the same scenario.

    All deviations are measured relative to the overall solution scale (the
    largest magnitude among sigma, c_hat and the controls of either side), so
    structurally tiny components cannot inflate the verdict.  The headline
    ``max_rel_dev`` covers the estimator contract (u_hat, sigma, c_hat);
    state-trajectory deviations are reported alongside.
    """
    u_a = np.concatenate([np.ravel(p) for p in a.u_hat.point_parts]) \
        if a.u_hat.point_parts else np.zeros(0)
    u_b = np.concatenate([np.ravel(p) for p in b.u_hat.point_parts]) \
        if b.u_hat.point_parts else np.zeros(0)
    iu_a = np.concatenate([np.ravel(ic.values) for ic in a.u_hat.interval_parts]) \
        if a.u_hat.interval_parts else np.zeros(0)
    iu_b = np.concatenate([np.ravel(ic.values) for ic in b.u_hat.interval_parts]) \
        if b.u_hat.interval_parts else np.zeros(0)
    if u_a.shape != u_b.shape or iu_a.shape != iu_b.shape:
        raise ValueError("solutions belong to different observation schemes")

    scale = max(a.sigma, b.sigma, abs(a.c_hat), abs(b.c_hat),
                _sup(u_a), _sup(u_b), _sup(iu_a), _sup(iu_b), 1e-300)
    report = {
        "sigma": abs(a.sigma - b.sigma) / scale,
        "c_hat": abs(a.c_hat - b.c_hat) / scale,
        "u_points": _sup(u_a - u_b) / scale if u_a.size else 0.0,
        "u_intervals": _sup(iu_a - iu_b) / scale if iu_a.size else 0.0,
        "scale": scale,
    }
    report["max_rel_dev"] = max(report["sigma"], report["c_hat"],
                                report["u_points"], report["u_intervals"])
    state_scale = max(a.z_hat.sup_norm(), b.z_hat.sup_norm(),
                      a.p.sup_norm(), b.p.sup_norm(), scale)
    report["z_hat"] = _sup(a.z_hat.sv_values - b.z_hat.sv_values) / state_scale
    report["p"] = _sup(a.p.sv_values - b.p.sv_values) / state_scale
    return report
