"""Prepared scenario context shared by the estimation and simulation paths.

``prepare`` builds, once per scenario: the breakpoint-aligned grid, the
fundamental and adjoint fundamental tables, per-node coefficient data
(including  Q~ = B Q^-1 B*), per-observation precomputations (weighted
observation operators, Simpson weights over each interval), and the cached
periodic resolvers used for repeated solves.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotSolvable
from .floquet import (
    adjoint_fundamental,
    chain_fundamental,
    fundamental_matrix,
    solvability_check,
)
from .periodic_bvp import PeriodicResolveCache
from .scenario import Scenario, build_grid

__all__ = ["PointData", "IntervalData", "Workspace", "prepare"]


@dataclass(frozen=True)
class PointData:
    """Precomputed arrays for one point observation."""

    node: int
    H: np.ndarray      # (m, n)
    D: np.ndarray      # (m, m)
    D_inv: np.ndarray  # (m, m)
    HD: np.ndarray     # H* D      (n, m)
    HDH: np.ndarray    # H* D H    (n, n)


@dataclass(frozen=True)
class IntervalData:
    """Precomputed arrays for one interval observation on its grid nodes."""

    seg_first: int
    seg_last: int
    node_idx: np.ndarray     # unique global node indices in [a, b]
    times: np.ndarray
    weights: np.ndarray      # Simpson weights over [a, b] at node_idx
    H_nodes: np.ndarray      # (nn, l, n)
    D_nodes: np.ndarray      # (nn, l, l)
    D_inv_nodes: np.ndarray  # (nn, l, l)
    HD_nodes: np.ndarray     # H* D       (nn, n, l)
    S_nodes: np.ndarray      # H* D H     (nn, n, n)
    sv_positions: np.ndarray  # segment-view positions covered by the interval
    sv_src: np.ndarray        # index into node_idx for each sv position


class Workspace:
    """A scenario with everything expensive computed once."""

    def __init__(self, scenario: Scenario, base_steps: int | None = None):
        self.scenario = scenario
        system = scenario.system
        self.n = system.n
        self.r = system.r
        tol = scenario.solver.singularity_tol
        steps = scenario.solver.base_steps if base_steps is None else base_steps
        self.grid = build_grid(system, scenario.scheme, steps)
        grid = self.grid

        self.fund = fundamental_matrix(system, grid, tol)
        self.solvability = solvability_check(self.fund)
        self.adj = adjoint_fundamental(self.fund) if self.solvability.solvable else None

        nodes = grid.nodes
        self.l0_nodes = scenario.functional.l0.at(nodes)
        self.f0_nodes = scenario.uncertainty.f0.at(nodes)
        self.B_nodes = system.B.at(nodes)
        self.Q_nodes = scenario.uncertainty.Q.at(nodes)
        self.Qt_nodes = self.qtilde_at(nodes)

        self.sv_index = grid.sv_index
        self.sv_weights = grid.sv_weights
        self.l0_sv = self.l0_nodes[self.sv_index]
        self.f0_sv = self.f0_nodes[self.sv_index]
        self.Qt_sv = self.Qt_nodes[self.sv_index]
        self.B_sv = self.B_nodes[self.sv_index]
        self.Q_sv = self.Q_nodes[self.sv_index]

        self.points: list[PointData] = []
        for p in scenario.scheme.points:
            Hs = p.H.conj().T
            D_inv = np.linalg.inv(p.D)
            D_inv = 0.5 * (D_inv + D_inv.conj().T)
            self.points.append(
                PointData(
                    node=grid.node_index(p.t),
                    H=p.H,
                    D=p.D,
                    D_inv=D_inv,
                    HD=Hs @ p.D,
                    HDH=Hs @ p.D @ p.H,
                )
            )
        self.jump_nodes = [p.node for p in self.points]

        self.intervals: list[IntervalData] = []
        for iv in scenario.scheme.intervals:
            k0, k1 = grid.segment_range(iv.a, iv.b)
            node_idx = grid.node_indices_between(iv.a, iv.b)
            times = nodes[node_idx]
            weights = np.zeros(len(node_idx))
            sv_pos = []
            sv_src = []
            for k in range(k0, k1 + 1):
                loc = np.arange(grid.seg_steps[k] + 1)
                weights[int(grid.seg_offsets[k]) - int(node_idx[0]) + loc] += grid.seg_weights(k)
                sv_pos.append(int(grid.sv_offsets[k]) + loc)
                sv_src.append(int(grid.seg_offsets[k]) - int(node_idx[0]) + loc)
            H_nodes = iv.H.at(times)
            D_nodes = iv.D.at(times)
            D_inv_nodes = np.linalg.inv(D_nodes)
            D_inv_nodes = 0.5 * (D_inv_nodes + D_inv_nodes.conj().swapaxes(-1, -2))
            Hs = H_nodes.conj().swapaxes(-1, -2)
            self.intervals.append(
                IntervalData(
                    seg_first=k0,
                    seg_last=k1,
                    node_idx=node_idx,
                    times=times,
                    weights=weights,
                    H_nodes=H_nodes,
                    D_nodes=D_nodes,
                    D_inv_nodes=D_inv_nodes,
                    HD_nodes=Hs @ D_nodes,
                    S_nodes=Hs @ D_nodes @ H_nodes,
                    sv_positions=np.concatenate(sv_pos),
                    sv_src=np.concatenate(sv_src),
                )
            )
        self.seg_active = [
            [j for j, iv in enumerate(self.intervals) if iv.seg_first <= k <= iv.seg_last]
            for k in range(grid.n_segments)
        ]

        self._adjoint_cache = None
        self._stacked_cache = None
        self._stacked_jumps = None

    # -- coefficient evaluation ------------------------------------------------

    def qtilde_at(self, ts: np.ndarray) -> np.ndarray:
        """Q~(t) = B(t) Q(t)^-1 B(t)* at arbitrary times (Hermitized)."""
        B = self.scenario.system.B.at(ts)
        Q = self.scenario.uncertainty.Q.at(ts)
        Y = np.linalg.solve(Q, B.conj().swapaxes(-1, -2))
        Qt = B @ Y
        return 0.5 * (Qt + Qt.conj().swapaxes(-1, -2))

    def indicator_sum_at(self, ts: np.ndarray, k: int) -> np.ndarray:
        """Sum over intervals active on segment k of H*(t) D(t) H(t)."""
        n = self.n
        out = np.zeros((len(ts), n, n), dtype=complex)
        for j in self.seg_active[k]:
            iv = self.scenario.scheme.intervals[j]
            H = iv.H.at(ts)
            D = iv.D.at(ts)
            out += H.conj().swapaxes(-1, -2) @ D @ H
        return out

    def stacked_matrix_at(self, ts: np.ndarray, k: int) -> np.ndarray:
        """Block generator [[-A*, S], [Q~, A]] at times within segment k."""
        n = self.n
        A = self.scenario.system.A.at(ts)
        F = np.zeros((len(ts), 2 * n, 2 * n), dtype=complex)
        F[:, :n, :n] = -A.conj().swapaxes(-1, -2)
        F[:, :n, n:] = self.indicator_sum_at(ts, k)
        F[:, n:, :n] = self.qtilde_at(ts)
        F[:, n:, n:] = A
        return F

    def stacked_stage_matrices(self, k: int) -> np.ndarray:
        """Stacked-system generator at the kernel stage times of segment k."""
        return self.stacked_matrix_at(self.grid.seg_stage_times(k), k)

    @property
    def stacked_jump_matrices(self) -> dict[int, np.ndarray]:
        """Jump matrices [[0, H* D H], [0, 0]] of the stacked system."""
        if self._stacked_jumps is None:
            n = self.n
            out = {}
            for p in self.points:
                J = np.zeros((2 * n, 2 * n), dtype=complex)
                J[:n, n:] = p.HDH
                out[p.node] = J
            self._stacked_jumps = out
        return self._stacked_jumps

    # -- cached resolvers ------------------------------------------------------

    def require_solvable(self) -> None:
        if not self.solvability.solvable:
            raise NotSolvable(
                f"E - X(T) is numerically singular (s_min = {self.solvability.s_min:.3e}, "
                f"tol = {self.solvability.tol:g})"
            )

    @property
    def adjoint_cache(self) -> PeriodicResolveCache:
        """Resolver for  dz/dt = -A* z + phi  with additive jumps at point nodes."""
        if self._adjoint_cache is None:
            self.require_solvable()
            self._adjoint_cache = PeriodicResolveCache(
                self.grid, self.adj.Z, self.adj.Z_inv, self.jump_nodes,
                tol=self.scenario.solver.singularity_tol,
            )
        return self._adjoint_cache

    @property
    def stacked_cache(self) -> PeriodicResolveCache:
        """Resolver for the coupled 2n-dimensional estimator system."""
        if self._stacked_cache is None:
            self.require_solvable()
            Phi = chain_fundamental(self.grid, self.stacked_stage_matrices)
            Phi_inv = np.linalg.inv(Phi)
            self._stacked_cache = PeriodicResolveCache(
                self.grid, Phi, Phi_inv, self.jump_nodes, self.stacked_jump_matrices,
                tol=self.scenario.solver.singularity_tol,
            )
        return self._stacked_cache

    # -- quadrature over one period -------------------------------------------

    def integrate_sv(self, samples_sv: np.ndarray) -> complex:
        """Integrate scalar segment-view samples over [0, T]."""
        return complex(np.tensordot(self.sv_weights, samples_sv, axes=(0, 0)))

    def pairing_sv(self, x_sv: np.ndarray, v_sv: np.ndarray) -> complex:
        """int (x(t), v(t)) dt = int v(t)* x(t) dt on segment-view samples."""
        return complex(np.sum(self.sv_weights[:, None] * np.conj(v_sv) * x_sv))

    def quad_form_sv(self, M_sv: np.ndarray, z_sv: np.ndarray) -> float:
        """int (M(t) z(t), z(t)) dt, real for Hermitian M."""
        Mz = np.einsum("kij,kj->ki", M_sv, z_sv)
        return float(np.real(np.sum(self.sv_weights[:, None] * np.conj(z_sv) * Mz)))


def prepare(scenario: Scenario, base_steps: int | None = None) -> Workspace:
    """Build the shared workspace for a scenario (optionally overriding the grid)."""
    return Workspace(scenario, base_steps)
