"""Fundamental matrices of the periodic system and its adjoint.

``fundamental_matrix`` integrates  dX/dt = A(t) X, X(0) = E  across the grid
segments with the stepping kernel and chains the per-segment propagators into
per-node values of the normalized fundamental matrix X(t) together with its
inverses.  The adjoint table holds  Z(t) = (X(t)*)^-1, the fundamental matrix
of  dZ/dt = -A(t)* Z, obtained without further integration.

Periodic problems for the system are well posed iff  E - X(T)  is invertible;
``solvability_check`` measures that via singular values.  Because E - X(T)
computed numerically can consist of pure integration error (e.g. a full-turn
rotation, where X(T) = E exactly), the threshold is scaled by the monodromy
magnitude max(1, ||X(T)||) rather than by ||E - X(T)|| itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernel
from .errors import IntegrationOverflow, NotSolvable, SingularFundamental
from .quadrature import cumulative_simpson
from .scenario import PeriodicSystem, TimeGrid

__all__ = [
    "FundamentalMatrixTable",
    "AdjointFundamentalTable",
    "chain_fundamental",
    "fundamental_matrix",
    "adjoint_fundamental",
    "SolvabilityReport",
    "solvability_check",
]

OVERFLOW_LIMIT = 1e150


def chain_fundamental(grid: TimeGrid, stage_matrix) -> np.ndarray:
    """Per-node global fundamental matrix of  W' = F(t) W,  W(0) = E.

    ``stage_matrix(k)`` must return the (4 K_k + 1, d, d) stage values of F
    on segment k.  Segment-local propagators from the kernel are chained
    through the shared endpoints.
    """
    first = np.asarray(stage_matrix(0))
    d = first.shape[-1]
    out = np.empty((grid.n_nodes, d, d), dtype=complex)
    start = np.eye(d, dtype=complex)
    for k in range(grid.n_segments):
        stages = first if k == 0 else np.asarray(stage_matrix(k))
        phi_loc, _ = kernel.segment_propagate(stages, None, grid.seg_h(k))
        seg = phi_loc @ start
        out[grid.seg_slice(k)] = seg
        start = seg[-1]
        if not np.isfinite(start).all() or np.abs(start).max() > OVERFLOW_LIMIT:
            raise IntegrationOverflow(
                f"fundamental matrix exceeded {OVERFLOW_LIMIT:g} by segment {k}"
            )
    out[0] = np.eye(d, dtype=complex)
    return out


class FundamentalMatrixTable:
    """Per-node values of X(t), X(t)^-1 and derived monodromy data."""

    def __init__(self, grid: TimeGrid, X: np.ndarray, det_reference: np.ndarray,
                 singularity_tol: float):
        self.grid = grid
        self.dim = X.shape[-1]
        self.X = X
        self.X_inv = np.linalg.inv(X)
        self.X_inv[0] = np.eye(self.dim, dtype=complex)
        self.det_reference = det_reference
        self.singularity_tol = float(singularity_tol)
        self.monodromy = X[-1]
        eye = np.eye(self.dim, dtype=complex)
        self._closure = eye - self.monodromy
        self._svals = scipy.linalg.svdvals(self._closure)
        self._mono_svals = scipy.linalg.svdvals(self.monodromy)
        norms = np.abs(X).sum(axis=1).max(axis=1)  # 1-norms per node
        inv_norms = np.abs(self.X_inv).sum(axis=1).max(axis=1)
        self.cond_estimate = float((norms * inv_norms).max())
        self._lu = None

    @property
    def s_min(self) -> float:
        """Smallest singular value of E - X(T)."""
        return float(self._svals[-1])

    @property
    def solvable(self) -> bool:
        scale = max(1.0, float(self._mono_svals[0]))
        return self.s_min > self.singularity_tol * scale

    def resolvent_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (E - X(T)) y = rhs (raises NotSolvable when ill posed)."""
        if not self.solvable:
            raise NotSolvable(
                f"E - X(T) is numerically singular (s_min = {self.s_min:.3e})"
            )
        if self._lu is None:
            self._lu = scipy.linalg.lu_factor(self._closure)
        return scipy.linalg.lu_solve(self._lu, rhs)

    def det_max_rel_error(self) -> float:
        """Largest relative deviation of det X(t) from the trace-integral form."""
        dets = np.linalg.det(self.X)
        return float(np.abs(dets - self.det_reference).max() / np.abs(self.det_reference).max())


class AdjointFundamentalTable:
    """Per-node values of Z(t) = (X(t)*)^-1 and derived monodromy data."""

    def __init__(self, fund: FundamentalMatrixTable):
        self.grid = fund.grid
        self.dim = fund.dim
        self.Z = fund.X_inv.conj().swapaxes(-1, -2).copy()
        self.Z_inv = fund.X.conj().swapaxes(-1, -2).copy()
        self.singularity_tol = fund.singularity_tol
        self.monodromy = self.Z[-1]
        eye = np.eye(self.dim, dtype=complex)
        self._closure = eye - self.monodromy
        self._svals = scipy.linalg.svdvals(self._closure)
        self._mono_svals = scipy.linalg.svdvals(self.monodromy)
        self._lu = None

    @property
    def s_min(self) -> float:
        return float(self._svals[-1])

    @property
    def solvable(self) -> bool:
        scale = max(1.0, float(self._mono_svals[0]))
        return self.s_min > self.singularity_tol * scale

    def resolvent_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (E - Z(T)) y = rhs (raises NotSolvable when ill posed)."""
        if not self.solvable:
            raise NotSolvable(
                f"E - Z(T) is numerically singular (s_min = {self.s_min:.3e})"
            )
        if self._lu is None:
            self._lu = scipy.linalg.lu_factor(self._closure)
        return scipy.linalg.lu_solve(self._lu, rhs)


def fundamental_matrix(system: PeriodicSystem, grid: TimeGrid,
                       singularity_tol: float = 1e-10) -> FundamentalMatrixTable:
    """Integrate the fundamental matrix of dx/dt = A(t) x across the grid."""
    X = chain_fundamental(grid, lambda k: system.A.at(grid.seg_stage_times(k)))

    # reference determinant exp(int_0^t tr A) for consistency monitoring
    tr_nodes = np.trace(system.A.at(grid.nodes), axis1=-2, axis2=-1)
    prefix = np.empty(grid.n_nodes, dtype=complex)
    total = 0.0
    for k in range(grid.n_segments):
        seg = cumulative_simpson(tr_nodes[grid.seg_slice(k)], grid.seg_h(k))
        prefix[grid.seg_slice(k)] = seg + total
        total = prefix[grid.seg_slice(k)][-1]
    det_reference = np.exp(prefix)

    return FundamentalMatrixTable(grid, X, det_reference, singularity_tol)


def adjoint_fundamental(fund: FundamentalMatrixTable,
                        singularity_tol: float | None = None) -> AdjointFundamentalTable:
    """Derive the adjoint fundamental table Z = (X*)^-1 from the forward table."""
    tol = fund.singularity_tol if singularity_tol is None else singularity_tol
    if fund.cond_estimate > 1.0 / tol:
        raise SingularFundamental(
            f"fundamental matrix condition estimate {fund.cond_estimate:.3e} exceeds 1/{tol:g}"
        )
    return AdjointFundamentalTable(fund)


@dataclass(frozen=True)
class SolvabilityReport:
    s_min: float
    s_max: float
    s_min_adjoint: float
    cond_monodromy: float
    tol: float
    solvable: bool

    def as_dict(self) -> dict:
        return {
            "s_min": self.s_min,
            "solvable": self.solvable,
            "s_min_adjoint": self.s_min_adjoint,
            "cond_monodromy": self.cond_monodromy,
        }


def solvability_check(fund: FundamentalMatrixTable, tol: float | None = None) -> SolvabilityReport:
    """Singular-value test of E - X(T) (and of the adjoint closure E - Z(T))."""
    tol = fund.singularity_tol if tol is None else float(tol)
    s = fund._svals
    mono = fund._mono_svals
    scale = max(1.0, float(mono[0]))
    solvable = float(s[-1]) > tol * scale

    z_mono = fund.X_inv[-1].conj().swapaxes(-1, -2)
    s_adj = scipy.linalg.svdvals(np.eye(fund.dim, dtype=complex) - z_mono)

    cond = float(mono[0] / mono[-1]) if mono[-1] > 0 else np.inf
    return SolvabilityReport(
        s_min=float(s[-1]),
        s_max=float(s[0]),
        s_min_adjoint=float(s_adj[-1]),
        cond_monodromy=cond,
        tol=tol,
        solvable=solvable,
    )
