"""Minimax estimation of a linear functional of the periodic solution.

Offline stage: from the scheme alone, solve the coupled periodic system for
(z_hat, p), read off the optimal controls u_hat, the constant c_hat and the
guaranteed error sigma.  Online stage: given realized observations, solve the
mirrored system for (p_hat, x_hat); the realized estimate is l(x_hat), and
applying the offline controls to the data gives the same number by duality.

Both stages stack the forward and adjoint states into one 2n-dimensional
impulsive periodic BVP sharing the block generator

    F(t) = [[-A*(t), sum_j chi_j H_j* D_j H_j], [Qtilde(t), A(t)]]

and the block jump matrices [[0, H_i* D_i H_i], [0, 0]]; only the forcing and
the jump offsets differ, so the online stage reuses cached fundamental tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalInconsistency, ObservationMismatch
from .periodic_bvp import ImpulsiveLinearBVP, ImpulsiveTrajectory, solve_impulsive_bvp
from .scenario import Scenario
from .workspace import Workspace, prepare

__all__ = [
    "IntervalControl",
    "ControlVector",
    "MinimaxSolution",
    "OnlineSolution",
    "adjoint_state",
    "cost",
    "solve_offline",
    "solve_online",
    "apply_estimator",
]


def _as_workspace(scenario) -> Workspace:
    if isinstance(scenario, Workspace):
        return scenario
    if isinstance(scenario, Scenario):
        return prepare(scenario)
    raise TypeError(f"expected Scenario or Workspace, got {type(scenario).__name__}")


@dataclass(frozen=True)
class IntervalControl:
    """Grid-sampled control on one observation window.

    ``values[k]`` is the l-vector at ``times[k]``; ``weights`` are the Simpson
    weights of the window, so inner products over the window are plain sums.
    Between nodes the control is understood as linearly interpolated.
    """

    times: np.ndarray
    weights: np.ndarray
    values: np.ndarray

    def replace_values(self, values: np.ndarray) -> "IntervalControl":
        values = np.asarray(values, dtype=complex)
        if values.shape != self.values.shape:
            raise ValueError(f"expected shape {self.values.shape}, got {values.shape}")
        return IntervalControl(self.times, self.weights, values)


class ControlVector:
    """One control per observation: m-vectors at points, sampled functions on windows."""

    def __init__(self, point_parts, interval_parts):
        self.point_parts = tuple(np.asarray(u, dtype=complex) for u in point_parts)
        self.interval_parts = tuple(interval_parts)

    @classmethod
    def zeros(cls, ws: Workspace) -> "ControlVector":
        points = [np.zeros(p.H.shape[0], dtype=complex) for p in ws.points]
        intervals = [
            IntervalControl(
                iv.times, iv.weights,
                np.zeros((len(iv.times), iv.H_nodes.shape[1]), dtype=complex),
            )
            for iv in ws.intervals
        ]
        return cls(points, intervals)

    def norm(self) -> float:
        """Norm on the control space: squared point norms plus window integrals."""
        total = sum(float(np.real(np.vdot(u, u))) for u in self.point_parts)
        for ic in self.interval_parts:
            total += float(np.sum(ic.weights * np.real(np.sum(np.conj(ic.values) * ic.values, axis=1))))
        return math.sqrt(total)

    def __add__(self, other: "ControlVector") -> "ControlVector":
        points = [a + b for a, b in zip(self.point_parts, other.point_parts)]
        intervals = [
            a.replace_values(a.values + b.values)
            for a, b in zip(self.interval_parts, other.interval_parts)
        ]
        return ControlVector(points, intervals)

    def __mul__(self, scalar) -> "ControlVector":
        points = [scalar * u for u in self.point_parts]
        intervals = [ic.replace_values(scalar * ic.values) for ic in self.interval_parts]
        return ControlVector(points, intervals)

    __rmul__ = __mul__


@dataclass(frozen=True)
class MinimaxSolution:
    """Offline output: optimal controls, constant, guaranteed error, and both states."""

    u_hat: ControlVector
    c_hat: complex
    sigma: float
    z_hat: ImpulsiveTrajectory
    p: ImpulsiveTrajectory
    cost_at_optimum: float
    l_p: complex


@dataclass(frozen=True)
class OnlineSolution:
    """Online output: adjoint state, state estimate, and the realized value l(x_hat)."""

    p_hat: ImpulsiveTrajectory
    x_hat: ImpulsiveTrajectory
    estimate_value: complex


# -- controls and the adjoint state -----------------------------------------


def _check_control(ws: Workspace, u: ControlVector) -> None:
    if len(u.point_parts) != len(ws.points) or len(u.interval_parts) != len(ws.intervals):
        raise ValueError(
            f"control has {len(u.point_parts)} point / {len(u.interval_parts)} interval "
            f"parts; scheme has {len(ws.points)} / {len(ws.intervals)}"
        )
    for i, (part, p) in enumerate(zip(u.point_parts, ws.points)):
        if part.shape != (p.H.shape[0],):
            raise ValueError(f"point control {i} has shape {part.shape}, expected ({p.H.shape[0]},)")
    for j, (ic, iv) in enumerate(zip(u.interval_parts, ws.intervals)):
        if ic.values.shape != (len(iv.times), iv.H_nodes.shape[1]):
            raise ValueError(
                f"interval control {j} has shape {ic.values.shape}, "
                f"expected ({len(iv.times)}, {iv.H_nodes.shape[1]})"
            )


def _control_forcing_sv(ws: Workspace, u: ControlVector) -> np.ndarray:
    """Segment-view samples of  sum_j chi_j(t) H_j*(t) u_j(t)."""
    out = np.zeros((len(ws.sv_index), ws.n), dtype=complex)
    for ic, iv in zip(u.interval_parts, ws.intervals):
        hu = np.einsum("kli,kl->ki", np.conj(iv.H_nodes), ic.values)
        out[iv.sv_positions] += hu[iv.sv_src]
    return out


def adjoint_state(scenario, u: ControlVector) -> ImpulsiveTrajectory:
    """Periodic adjoint state z(.;u) driven by the functional and the controls.

    Solves  -dz/dt = A*z + l0 - sum_j chi_j H_j* u_j  with jump H_i* u_i at
    each observation point, via the cached adjoint resolver.
    """
    ws = _as_workspace(scenario)
    _check_control(ws, u)
    ws.require_solvable()
    forcing_sv = _control_forcing_sv(ws, u) - ws.l0_sv
    offsets = {}
    for p, part in zip(ws.points, u.point_parts):
        r = np.conj(p.H.T) @ part
        if np.any(r != 0):
            offsets[p.node] = r
    return ws.adjoint_cache.resolve(forcing_sv, offsets)


def cost(scenario, u: ControlVector) -> float:
    """Estimation cost I(u): adjoint energy plus weighted control norms."""
    ws = _as_workspace(scenario)
    z = adjoint_state(ws, u)
    total = ws.quad_form_sv(ws.Qt_sv, z.sv_values)
    for p, part in zip(ws.points, u.point_parts):
        total += float(np.real(np.vdot(part, p.D_inv @ part)))
    for ic, iv in zip(u.interval_parts, ws.intervals):
        du = np.einsum("kab,kb->ka", iv.D_inv_nodes, ic.values)
        total += float(np.sum(iv.weights * np.real(np.sum(np.conj(ic.values) * du, axis=1))))
    return total


# -- offline stage -----------------------------------------------------------


def _extract_controls(ws: Workspace, p_traj: ImpulsiveTrajectory) -> ControlVector:
    """Read the optimal controls off the continuous p component: u = D H p."""
    values = p_traj.values
    points = [pt.D @ (pt.H @ values[pt.node]) for pt in ws.points]
    intervals = []
    for iv in ws.intervals:
        p_nodes = values[iv.node_idx]
        u = np.einsum("kab,kb->ka", iv.D_nodes, np.einsum("kln,kn->kl", iv.H_nodes, p_nodes))
        intervals.append(IntervalControl(iv.times, iv.weights, u))
    return ControlVector(points, intervals)


def summarize_solution(ws: Workspace, z_hat: ImpulsiveTrajectory,
                       p_traj: ImpulsiveTrajectory,
                       u_hat: ControlVector) -> MinimaxSolution:
    """Derive (c_hat, sigma, cost) from solved states, with consistency guards."""
    bz = np.einsum("knr,kn->kr", np.conj(ws.B_sv), z_hat.sv_values)
    c_hat = ws.pairing_sv(ws.f0_sv, bz)
    l_p = ws.pairing_sv(p_traj.sv_values, ws.l0_sv)
    re = l_p.real
    if re < -1e-10 * abs(l_p):
        raise NumericalInconsistency(
            f"l(p) = {l_p:.6e} has a significantly negative real part; "
            "sigma^2 must be nonnegative"
        )
    sigma = math.sqrt(max(re, 0.0))
    return MinimaxSolution(
        u_hat=u_hat,
        c_hat=c_hat,
        sigma=sigma,
        z_hat=z_hat,
        p=p_traj,
        cost_at_optimum=cost(ws, u_hat),
        l_p=l_p,
    )


def solve_offline(scenario) -> MinimaxSolution:
    """Solve the coupled periodic system for (z_hat, p) and read off the estimator.

    The pair w = (z_hat, p) satisfies one 2n-dimensional impulsive periodic
    BVP with block forcing (-l0, 0); the optimal controls are u_i = D_i H_i
    p(t_i) and u_j(t) = D_j(t) H_j(t) p(t), the constant is
    c_hat = int (f0, B* z_hat) dt and sigma = [Re l(p)]^(1/2).
    """
    ws = _as_workspace(scenario)
    ws.require_solvable()
    n = ws.n

    def forcing(ts, _k):
        g = np.zeros((len(ts), 2 * n), dtype=complex)
        g[:, :n] = -ws.scenario.functional.l0.at(ts)
        return g

    bvp = ImpulsiveLinearBVP(
        dim=2 * n,
        rhs_matrix=ws.stacked_matrix_at,
        forcing=forcing,
        jump_matrices=ws.stacked_jump_matrices,
    )
    w = solve_impulsive_bvp(bvp, ws.grid, ws.scenario.solver.singularity_tol)
    z_hat = w.component(slice(0, n))
    p_traj = w.component(slice(n, 2 * n))
    u_hat = _extract_controls(ws, p_traj)
    return summarize_solution(ws, z_hat, p_traj, u_hat)


# -- online stage ------------------------------------------------------------


def _check_observations(ws: Workspace, obs) -> None:
    points = list(obs.point_obs)
    intervals = list(obs.interval_obs)
    if len(points) != len(ws.points) or len(intervals) != len(ws.intervals):
        raise ObservationMismatch(
            f"data has {len(points)} point / {len(intervals)} interval records; "
            f"scheme has {len(ws.points)} / {len(ws.intervals)}"
        )
    for i, (y, p) in enumerate(zip(points, ws.points)):
        y = np.asarray(y)
        if y.shape != (p.H.shape[0],):
            raise ObservationMismatch(
                f"point observation {i} has shape {y.shape}, expected ({p.H.shape[0]},)"
            )
    for j, (rec, iv) in enumerate(zip(intervals, ws.intervals)):
        times = np.asarray(rec.times, dtype=float)
        values = np.asarray(rec.values)
        if times.shape != iv.times.shape or not np.allclose(times, iv.times, rtol=0.0, atol=1e-9):
            raise ObservationMismatch(
                f"interval observation {j} is sampled on {len(times)} nodes that do not "
                f"match the scheme window (expected {len(iv.times)} grid nodes)"
            )
        if values.shape != (len(iv.times), iv.H_nodes.shape[1]):
            raise ObservationMismatch(
                f"interval observation {j} has shape {values.shape}, "
                f"expected ({len(iv.times)}, {iv.H_nodes.shape[1]})"
            )


def solve_online(scenario, observations) -> OnlineSolution:
    """Solve the data-driven periodic system for (p_hat, x_hat).

    The pair w = (p_hat, x_hat) satisfies the same block generator and jump
    matrices as the offline stage with forcing (-sum_j chi_j H_j* D_j y_j,
    B f0) and jump offsets (-H_i* D_i y_i, 0); the realized estimate is
    l(x_hat) = int (x_hat, l0) dt.
    """
    ws = _as_workspace(scenario)
    ws.require_solvable()
    _check_observations(ws, observations)
    n = ws.n
    L = len(ws.sv_index)

    forcing_sv = np.zeros((L, 2 * n), dtype=complex)
    for rec, iv in zip(observations.interval_obs, ws.intervals):
        y = np.asarray(rec.values, dtype=complex)
        hdy = np.einsum("knl,kl->kn", iv.HD_nodes, y)
        np.subtract.at(forcing_sv[:, :n], iv.sv_positions, hdy[iv.sv_src])
    forcing_sv[:, n:] = np.einsum("knr,kr->kn", ws.B_sv, ws.f0_sv)

    offsets = {}
    for y, p in zip(observations.point_obs, ws.points):
        hdy = p.HD @ np.asarray(y, dtype=complex)
        if np.any(hdy != 0):
            c = np.zeros(2 * n, dtype=complex)
            c[:n] = -hdy
            offsets[p.node] = c

    w = ws.stacked_cache.resolve(forcing_sv, offsets)
    p_hat = w.component(slice(0, n))
    x_hat = w.component(slice(n, 2 * n))
    estimate = ws.pairing_sv(x_hat.sv_values, ws.l0_sv)
    return OnlineSolution(p_hat=p_hat, x_hat=x_hat, estimate_value=estimate)


def apply_estimator(minimax: MinimaxSolution, observations) -> complex:
    """Apply the offline estimator to realized data:
    sum_i (y_i, u_i) + sum_j int (y_j, u_j) dt + c_hat."""
    u = minimax.u_hat
    points = list(observations.point_obs)
    intervals = list(observations.interval_obs)
    if len(points) != len(u.point_parts) or len(intervals) != len(u.interval_parts):
        raise ObservationMismatch(
            f"data has {len(points)} point / {len(intervals)} interval records; "
            f"estimator has {len(u.point_parts)} / {len(u.interval_parts)}"
        )
    total = complex(minimax.c_hat)
    for i, (y, part) in enumerate(zip(points, u.point_parts)):
        y = np.asarray(y, dtype=complex)
        if y.shape != part.shape:
            raise ObservationMismatch(
                f"point observation {i} has shape {y.shape}, expected {part.shape}"
            )
        total += complex(np.vdot(part, y))
    for j, (rec, ic) in enumerate(zip(intervals, u.interval_parts)):
        times = np.asarray(rec.times, dtype=float)
        values = np.asarray(rec.values, dtype=complex)
        if times.shape != ic.times.shape or not np.allclose(times, ic.times, rtol=0.0, atol=1e-9):
            raise ObservationMismatch(
                f"interval observation {j} sample nodes do not match the estimator's"
            )
        if values.shape != ic.values.shape:
            raise ObservationMismatch(
                f"interval observation {j} has shape {values.shape}, expected {ic.values.shape}"
            )
        total += complex(np.sum(ic.weights * np.sum(np.conj(ic.values) * values, axis=1)))
    return total
