"""Independent verification machinery for the minimax estimator.

Three self-contained cross-checks:

* a generalized Cauchy-Bunyakovsky inequality with its explicit equality
  element, the workhorse behind the guaranteed-error derivation;
* a brute-force finite-dimensional route: the cost I(u) is an explicit real
  quadratic in the discretized controls, so its minimum can be found by one
  dense symmetric solve and compared against the solver's sigma^2;
* the explicit worst-case disturbance f0 + Q^-1 B* z / norm and worst-case
  rank-one noise correlations that attain the guaranteed error.

The quadratic model is assembled from linear responses: the adjoint state is
affine in the control coordinates, so probing one basis direction per complex
coordinate yields the exact Gram matrix of the quadratic part.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import (
    IllConditionedModel,
    SingularQ,
    ZeroControl,
    ZeroSensitivity,
)
from .estimator import ControlVector, IntervalControl, _as_workspace, adjoint_state
from .scenario import ObservationScheme, Scenario
from .workspace import Workspace

__all__ = [
    "CBSResult",
    "generalized_cbs",
    "QuadraticModel",
    "build_quadratic_model",
    "BruteForceResult",
    "brute_force_minimize",
    "WorstCaseForcing",
    "worst_case_f",
    "WorstCaseNoise",
    "worst_case_noise",
]


# -- generalized Cauchy-Bunyakovsky inequality -------------------------------


@dataclass(frozen=True)
class CBSResult:
    """Outcome of one inequality check: |(f, g)| <= (Q^-1 f, f)^1/2 (Q g, g)^1/2."""

    lhs: float
    bound: float
    holds: bool
    equality_element: np.ndarray


def generalized_cbs(Qmat: np.ndarray, f: np.ndarray, g: np.ndarray) -> CBSResult:
    """Check the weighted inequality and return its equality element.

    The element Q^-1 f / (Q^-1 f, f)^1/2 turns the inequality into an
    equality when substituted for g.
    """
    Q = np.asarray(Qmat, dtype=complex)
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise SingularQ(f"weight must be a square matrix, got shape {Q.shape}")
    scale = float(np.abs(Q).max()) or 1.0
    if float(np.abs(Q - Q.conj().T).max()) > 1e-10 * scale:
        raise SingularQ("weight matrix is not Hermitian")
    evals = np.linalg.eigvalsh(Q)
    if evals[0] <= 1e-14 * max(float(evals[-1]), 1.0):
        raise SingularQ(
            f"weight matrix is not positive definite (eigenvalues in "
            f"[{evals[0]:.3e}, {evals[-1]:.3e}])"
        )
    qf = np.linalg.solve(Q, f)
    nf = max(float(np.real(np.vdot(f, qf))), 0.0)
    ng = max(float(np.real(np.vdot(g, Q @ g))), 0.0)
    lhs = abs(complex(np.vdot(g, f)))
    bound = math.sqrt(nf) * math.sqrt(ng)
    holds = lhs <= bound * (1.0 + 1e-12) + 1e-300
    element = qf / math.sqrt(nf) if nf > 0.0 else np.zeros_like(f)
    return CBSResult(lhs=lhs, bound=bound, holds=holds, equality_element=element)


# -- brute-force quadratic route ---------------------------------------------


@dataclass(frozen=True)
class QuadraticModel:
    """The cost as an explicit quadratic in real control coordinates.

    Complex control slots are interleaved as (Re, Im) pairs; the model is
    I(x) = constant + gradient_at_zero . x + x^T hessian x / 2.  ``slots``
    records the coordinate layout: ("point", i, comp) or
    ("interval", j, node, comp), each contributing one complex slot.
    """

    dimension: int
    hessian: np.ndarray
    gradient_at_zero: np.ndarray
    constant: float
    slots: tuple
    workspace: Workspace = field(repr=False, compare=False)

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.constant + self.gradient_at_zero @ x + 0.5 * x @ (self.hessian @ x))

    def real_from_control(self, u: ControlVector) -> np.ndarray:
        out = np.empty(self.dimension, dtype=float)
        for s, slot in enumerate(self.slots):
            if slot[0] == "point":
                val = u.point_parts[slot[1]][slot[2]]
            else:
                val = u.interval_parts[slot[1]].values[slot[2], slot[3]]
            out[2 * s] = val.real
            out[2 * s + 1] = val.imag
        return out

    def control_from_real(self, x: np.ndarray) -> ControlVector:
        x = np.asarray(x, dtype=float)
        u = ControlVector.zeros(self.workspace)
        points = [p.copy() for p in u.point_parts]
        values = [ic.values.copy() for ic in u.interval_parts]
        for s, slot in enumerate(self.slots):
            val = complex(x[2 * s], x[2 * s + 1])
            if slot[0] == "point":
                points[slot[1]][slot[2]] = val
            else:
                values[slot[1]][slot[2], slot[3]] = val
        intervals = [ic.replace_values(v) for ic, v in zip(u.interval_parts, values)]
        return ControlVector(points, intervals)

    def predicted_cost(self, u: ControlVector) -> float:
        return self.value(self.real_from_control(u))


def _control_slots(ws: Workspace) -> tuple:
    slots = []
    for i, p in enumerate(ws.points):
        slots.extend(("point", i, c) for c in range(p.H.shape[0]))
    for j, iv in enumerate(ws.intervals):
        l = iv.H_nodes.shape[1]
        for k in range(len(iv.times)):
            slots.extend(("interval", j, k, c) for c in range(l))
    return tuple(slots)


def build_quadratic_model(scenario) -> QuadraticModel:
    """Assemble the exact discrete quadratic for I(u).

    The adjoint state is affine in u, so one linear response per complex
    slot gives z(u) = z0 + sum_s u_s zeta_s exactly; the quadratic part is
    the Gram matrix of the responses under the energy weight plus the
    block-diagonal control-norm kernel, and the linear part pairs the
    responses with z0.
    """
    ws = _as_workspace(scenario)
    ws.require_solvable()
    cache = ws.adjoint_cache
    slots = _control_slots(ws)
    C = len(slots)
    L = len(ws.sv_index)
    n = ws.n

    z0 = cache.resolve(-ws.l0_sv, {})
    z0_sv = z0.sv_values
    Qtz0 = np.einsum("kij,kj->ki", ws.Qt_sv, z0_sv)
    constant = float(np.real(np.sum(ws.sv_weights[:, None] * np.conj(z0_sv) * Qtz0)))

    responses = np.empty((C, L, n), dtype=complex)
    for s, slot in enumerate(slots):
        if slot[0] == "point":
            _, i, c = slot
            r = np.conj(ws.points[i].H[c, :])
            zeta = cache.resolve(None, {ws.points[i].node: r})
        else:
            _, j, k, c = slot
            iv = ws.intervals[j]
            forcing = np.zeros((L, n), dtype=complex)
            vec = np.conj(iv.H_nodes[k][c, :])
            forcing[iv.sv_positions[iv.sv_src == k]] = vec
            zeta = cache.resolve(forcing, {})
        responses[s] = zeta.sv_values

    # complex Hermitian form T[p, q] = int (Qt zeta_q, zeta_p) + control kernel
    weighted = ws.sv_weights[None, :, None] * np.einsum("kij,skj->ski", ws.Qt_sv, responses)
    T = np.conj(responses.reshape(C, -1)) @ weighted.reshape(C, -1).T
    gamma = np.conj(responses.reshape(C, -1)) @ (ws.sv_weights[:, None] * Qtz0).ravel()

    pos = 0
    for p in ws.points:
        m = p.H.shape[0]
        T[pos:pos + m, pos:pos + m] += p.D_inv
        pos += m
    for iv in ws.intervals:
        l = iv.H_nodes.shape[1]
        for k in range(len(iv.times)):
            T[pos:pos + l, pos:pos + l] += iv.weights[k] * iv.D_inv_nodes[k]
            pos += l
    T = 0.5 * (T + T.conj().T)

    hessian = np.empty((2 * C, 2 * C), dtype=float)
    hessian[0::2, 0::2] = 2.0 * T.real
    hessian[1::2, 1::2] = 2.0 * T.real
    hessian[0::2, 1::2] = -2.0 * T.imag
    hessian[1::2, 0::2] = 2.0 * T.imag
    gradient = np.empty(2 * C, dtype=float)
    gradient[0::2] = 2.0 * gamma.real
    gradient[1::2] = 2.0 * gamma.imag

    return QuadraticModel(
        dimension=2 * C,
        hessian=hessian,
        gradient_at_zero=gradient,
        constant=constant,
        slots=slots,
        workspace=ws,
    )


class BruteForceResult(NamedTuple):
    u_star: ControlVector
    I_star: float


def brute_force_minimize(model: QuadraticModel) -> BruteForceResult:
    """Minimize the quadratic model by one dense symmetric solve."""
    if model.dimension == 0:
        return BruteForceResult(ControlVector.zeros(model.workspace), model.constant)
    H = model.hessian
    try:
        cho = scipy.linalg.cho_factor(H, lower=False, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise IllConditionedModel(f"quadratic model is not positive definite: {exc}") from exc
    anorm = float(np.abs(H).sum(axis=0).max())
    rcond, info = scipy.linalg.lapack.dpocon(cho[0], anorm)
    if info != 0 or rcond <= 0.0 or 1.0 / rcond > 1e12:
        raise IllConditionedModel(
            f"quadratic model condition estimate {0.0 if rcond <= 0 else 1.0 / rcond:.3e} "
            "exceeds 1e12"
        )
    x = scipy.linalg.cho_solve(cho, -model.gradient_at_zero, check_finite=False)
    I_star = model.constant + 0.5 * float(model.gradient_at_zero @ x)
    return BruteForceResult(model.control_from_real(x), I_star)


# -- worst-case disturbance and noise ----------------------------------------


@dataclass(frozen=True)
class WorstCaseForcing:
    """The disturbance attaining the bias bound, sampled on the grid.

    ``sv_values`` carries both one-sided samples at observation instants
    (the driving adjoint state jumps there); ``values`` is the
    left-continuous per-node view.  ``denom`` is the normalizer
    (int (Q^-1 B* z, B* z) dt)^(1/2).
    """

    times: np.ndarray
    values: np.ndarray
    sv_values: np.ndarray
    denom: float
    sign: int


def worst_case_f(scenario, u: ControlVector, sign: int = 1) -> WorstCaseForcing:
    """Disturbance  f0 + sign * Q^-1 B* z(.; u) / denom  on the membership boundary."""
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    ws = _as_workspace(scenario)
    z = adjoint_state(ws, u)
    s_sv = np.einsum("knr,kn->kr", np.conj(ws.B_sv), z.sv_values)
    qs = np.linalg.solve(ws.Q_sv, s_sv[..., None])[..., 0]
    den2 = float(np.real(np.sum(ws.sv_weights[:, None] * np.conj(s_sv) * qs)))
    if den2 <= 1e-14:
        raise ZeroSensitivity(
            f"int (Q^-1 B* z, B* z) dt = {den2:.3e}; the functional is insensitive "
            "to the disturbance at this control"
        )
    denom = math.sqrt(den2)
    sv_values = ws.f0_sv + sign * qs / denom
    grid = ws.grid
    values = np.empty((grid.n_nodes,) + sv_values.shape[1:], dtype=complex)
    for k in range(grid.n_segments):
        values[grid.seg_slice(k)] = sv_values[grid.sv_slice(k)]
    for k in range(1, grid.n_segments):
        values[int(grid.seg_offsets[k])] = sv_values[int(grid.sv_offsets[k]) - 1]
    return WorstCaseForcing(
        times=grid.nodes.copy(),
        values=values,
        sv_values=sv_values,
        denom=denom,
        sign=sign,
    )


@dataclass(frozen=True)
class WorstCaseNoise:
    """Rank-one worst-case correlations, described by coefficient vectors.

    The attaining noise is  xi_i = eta * point_coeffs[i]  and
    xi_j(t) = eta' * interval_coeffs[j](t)  with unit-variance scalar
    factors eta, eta' (one per family, uncorrelated across families); only
    the second moments matter, so eta never needs sampling.  The induced
    correlations meet the trace budgets recorded in ``trace_points`` and
    ``trace_intervals``.
    """

    point_coeffs: tuple
    interval_coeffs: tuple
    point_norm_sq: float
    interval_norm_sq: float
    trace_points: float
    trace_intervals: float


def _as_scheme(scheme) -> ObservationScheme:
    if isinstance(scheme, ObservationScheme):
        return scheme
    if isinstance(scheme, Scenario):
        return scheme.scheme
    if isinstance(scheme, Workspace):
        return scheme.scenario.scheme
    raise TypeError(f"expected an observation scheme, got {type(scheme).__name__}")


def worst_case_noise(scheme, u: ControlVector) -> WorstCaseNoise:
    """Noise correlations attaining the control-norm part of the error bound."""
    scheme = _as_scheme(scheme)
    if len(u.point_parts) != len(scheme.points) or len(u.interval_parts) != len(scheme.intervals):
        raise ValueError("control does not match the observation scheme")

    d_invs = []
    np_sq = 0.0
    for obs, part in zip(scheme.points, u.point_parts):
        d_inv = np.linalg.inv(obs.D)
        d_inv = 0.5 * (d_inv + d_inv.conj().T)
        d_invs.append(d_inv)
        np_sq += float(np.real(np.vdot(part, d_inv @ part)))

    iv_d_invs = []
    ni_sq = 0.0
    for obs, ic in zip(scheme.intervals, u.interval_parts):
        d_nodes = obs.D.at(ic.times)
        d_inv = np.linalg.inv(d_nodes)
        d_inv = 0.5 * (d_inv + d_inv.conj().swapaxes(-1, -2))
        iv_d_invs.append(d_inv)
        du = np.einsum("kab,kb->ka", d_inv, ic.values)
        ni_sq += float(np.sum(ic.weights * np.real(np.sum(np.conj(ic.values) * du, axis=1))))

    if np_sq <= 1e-300 and ni_sq <= 1e-300:
        raise ZeroControl("all control slots vanish; no worst-case noise direction")

    pn = math.sqrt(np_sq) if np_sq > 0.0 else 0.0
    point_coeffs = tuple(
        (d_inv @ part) / pn if pn > 0.0 else np.zeros_like(part)
        for d_inv, part in zip(d_invs, u.point_parts)
    )
    inorm = math.sqrt(ni_sq) if ni_sq > 0.0 else 0.0
    interval_coeffs = tuple(
        np.einsum("kab,kb->ka", d_inv, ic.values) / inorm
        if inorm > 0.0 else np.zeros_like(ic.values)
        for d_inv, ic in zip(iv_d_invs, u.interval_parts)
    )

    trace_points = sum(
        float(np.real(np.vdot(c, obs.D @ c)))
        for obs, c in zip(scheme.points, point_coeffs)
    )
    trace_intervals = 0.0
    for obs, ic, coeff in zip(scheme.intervals, u.interval_parts, interval_coeffs):
        d_nodes = obs.D.at(ic.times)
        dc = np.einsum("kab,kb->ka", d_nodes, coeff)
        trace_intervals += float(np.sum(ic.weights * np.real(np.sum(np.conj(coeff) * dc, axis=1))))

    return WorstCaseNoise(
        point_coeffs=point_coeffs,
        interval_coeffs=interval_coeffs,
        point_norm_sq=np_sq,
        interval_norm_sq=ni_sq,
        trace_points=trace_points,
        trace_intervals=trace_intervals,
    )
