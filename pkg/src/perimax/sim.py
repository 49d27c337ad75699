"""Synthetic data generation: ground truth, admissible disturbances, noise.

The simulated world stays inside the uncertainty sets the estimator is
designed against: disturbances are drawn from the weighted-energy ball
(low-order Fourier perturbations normalized by their computed energy) and
noise is drawn as circular complex Gaussians whose correlation traces meet
prescribed budgets.  Observations package the sampled outputs in the format
the online solver and the applied estimator consume.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, ObservationMismatch
from .estimator import _as_workspace
from .periodic_bvp import ImpulsiveTrajectory, solve_periodic_forced
from .providers import CallableFunction, FourierFunction, PeriodicFunction
from .workspace import Workspace

__all__ = [
    "IntervalSamples",
    "ObservationData",
    "SampledForcing",
    "NoiseRealization",
    "simulate_truth",
    "sample_f_in_G1",
    "g1_membership",
    "sample_noise",
    "make_observations",
    "observations_to_dict",
    "observations_from_dict",
]


@dataclass(frozen=True)
class IntervalSamples:
    """Samples of one window observation on the grid nodes inside it."""

    times: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class ObservationData:
    """Realized observations: one vector per point, node samples per window."""

    point_obs: tuple
    interval_obs: tuple
    provenance: dict = field(default_factory=dict)


# -- ground truth ------------------------------------------------------------


def _forcing_samples(ws: Workspace, f_tilde):
    """State-equation forcing B(t) f(t) as a node or segment-view array."""
    if hasattr(f_tilde, "sv_values"):
        return np.einsum("knr,kr->kn", ws.B_sv, np.asarray(f_tilde.sv_values))
    if isinstance(f_tilde, PeriodicFunction):
        vals = f_tilde.at(ws.grid.nodes)
    elif callable(f_tilde):
        vals = np.asarray(f_tilde(ws.grid.nodes))
    else:
        vals = np.asarray(f_tilde)
    if vals.shape[0] == len(ws.sv_index):
        return np.einsum("knr,kr->kn", ws.B_sv, vals)
    if vals.shape[0] != ws.grid.n_nodes:
        raise ValueError(
            f"forcing has {vals.shape[0]} samples; expected {ws.grid.n_nodes} nodes"
        )
    return np.einsum("knr,kr->kn", ws.B_nodes, vals)


def simulate_truth(scenario, f_tilde) -> ImpulsiveTrajectory:
    """Periodic true state under a given disturbance: dx/dt = A x + B f_tilde."""
    ws = _as_workspace(scenario)
    ws.require_solvable()
    forcing = _forcing_samples(ws, f_tilde)
    return solve_periodic_forced(ws.scenario.system, forcing, ws.fund)


# -- disturbances in the energy ball -----------------------------------------


class SampledForcing(CallableFunction):
    """A drawn disturbance f0 + scale * delta with recorded draw metadata."""

    def __init__(self, period, shape, fn, *, seed, s, rho, scale, delta):
        super().__init__(period, shape, fn)
        self.seed = seed
        self.s = s
        self.rho = rho
        self.scale = scale
        self.delta = delta

    def describe(self) -> dict:
        return {
            "kind": "fourier-ball",
            "seed": self.seed,
            "s": self.s,
            "rho": self.rho,
            "scale": self.scale,
        }


def sample_f_in_G1(scenario, seed, boundary: bool = False) -> SampledForcing:
    """Draw a disturbance with weighted energy s^2, s <= 1 (s = 1 on the boundary).

    The perturbation is a real low-order Fourier sum; its energy
    rho^2 = int (Q delta, delta) dt is computed on the grid, and the returned
    function is f0 + (s / rho) delta, so membership holds by construction.
    """
    ws = _as_workspace(scenario)
    rng = np.random.default_rng(seed)
    r = ws.scenario.system.r
    T = ws.scenario.system.T
    harmonics = []
    for k in range(4):
        c = rng.standard_normal(r) / (1.0 + k)
        s_coef = rng.standard_normal(r) / (1.0 + k)
        harmonics.append((k, c, s_coef))
    s = 1.0 if boundary else float(rng.uniform())
    delta = FourierFunction(T, harmonics)

    d_nodes = delta.at(ws.grid.nodes)
    d_sv = d_nodes[ws.sv_index]
    qd = np.einsum("kab,kb->ka", ws.Q_sv, d_sv)
    rho_sq = float(np.real(np.sum(ws.sv_weights[:, None] * np.conj(d_sv) * qd)))
    f0 = ws.scenario.uncertainty.f0
    if rho_sq <= 1e-30:
        return SampledForcing(
            T, (r,), lambda ts: f0.at(ts),
            seed=seed, s=0.0, rho=0.0, scale=0.0, delta=delta,
        )
    rho = float(np.sqrt(rho_sq))
    scale = s / rho
    return SampledForcing(
        T, (r,), lambda ts: f0.at(ts) + scale * delta.at(ts),
        seed=seed, s=s, rho=rho, scale=scale, delta=delta,
    )


def g1_membership(scenario, f_tilde) -> float:
    """Weighted energy int (Q (f - f0), f - f0) dt of a disturbance."""
    ws = _as_workspace(scenario)
    if hasattr(f_tilde, "sv_values"):
        d_sv = np.asarray(f_tilde.sv_values) - ws.f0_sv
    else:
        if isinstance(f_tilde, PeriodicFunction):
            vals = f_tilde.at(ws.grid.nodes)
        elif callable(f_tilde):
            vals = np.asarray(f_tilde(ws.grid.nodes))
        else:
            vals = np.asarray(f_tilde)
        d_sv = (vals - ws.f0_nodes)[ws.sv_index]
    qd = np.einsum("kab,kb->ka", ws.Q_sv, d_sv)
    return float(np.real(np.sum(ws.sv_weights[:, None] * np.conj(d_sv) * qd)))


# -- admissible noise --------------------------------------------------------


@dataclass(frozen=True)
class NoiseRealization:
    """One draw of point and window noise with its trace-budget bookkeeping."""

    point_noise: tuple
    interval_noise: tuple
    point_weights: tuple
    interval_weights: tuple
    seed: object


def _family_weights(spec, count: int, label: str) -> np.ndarray:
    if spec is None:
        w = np.zeros(count)
    elif np.isscalar(spec):
        total = float(spec)
        if total < 0.0:
            raise BudgetExceeded(f"{label} budget must be nonnegative, got {total}")
        w = np.full(count, total / count) if count else np.zeros(0)
    else:
        w = np.asarray(spec, dtype=float)
        if w.shape != (count,):
            raise BudgetExceeded(
                f"{label} budget needs {count} weights, got shape {w.shape}"
            )
    if np.any(w < 0.0):
        raise BudgetExceeded(f"{label} weights must be nonnegative")
    if w.sum() > 1.0 + 1e-12:
        raise BudgetExceeded(f"{label} weights sum to {w.sum():.6f} > 1")
    return w


def _complex_standard_normal(rng, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_noise(scheme, seed, budget_split=None) -> NoiseRealization:
    """Draw admissible noise with per-slot trace weights.

    ``budget_split`` is a pair (point spec, interval spec); each spec is
    None (no noise), a scalar total split equally over the family, or a
    per-slot weight sequence.  Each family's weights must sum to at most 1.
    Point i's noise has covariance w_i D_i^-1 / m, so its trace against D_i
    is exactly w_i; window noise is white in the nodes with node covariance
    chosen so the Simpson-weighted trace integral equals the window's weight.
    """
    ws = _as_workspace(scheme)
    point_spec, interval_spec = budget_split if budget_split is not None else (None, None)
    pw = _family_weights(point_spec, len(ws.points), "point")
    iw = _family_weights(interval_spec, len(ws.intervals), "interval")
    rng = np.random.default_rng(seed)

    point_noise = []
    for w, pt in zip(pw, ws.points):
        m = pt.H.shape[0]
        eta = _complex_standard_normal(rng, m)
        root = np.linalg.cholesky(pt.D_inv)
        point_noise.append(np.sqrt(w / m) * (root @ eta))

    interval_noise = []
    for w, iv in zip(iw, ws.intervals):
        l = iv.H_nodes.shape[1]
        nn = len(iv.times)
        eta = _complex_standard_normal(rng, (nn, l))
        roots = np.linalg.cholesky(iv.D_inv_nodes)
        c = w / (l * float(iv.weights.sum()))
        interval_noise.append(np.sqrt(c) * np.einsum("kab,kb->ka", roots, eta))

    return NoiseRealization(
        point_noise=tuple(point_noise),
        interval_noise=tuple(interval_noise),
        point_weights=tuple(float(x) for x in pw),
        interval_weights=tuple(float(x) for x in iw),
        seed=seed,
    )


# -- packaging ---------------------------------------------------------------


def make_observations(scenario, x_tilde: ImpulsiveTrajectory,
                      noise: NoiseRealization | None = None,
                      provenance: dict | None = None) -> ObservationData:
    """Sample the observation scheme on a true state, optionally adding noise."""
    ws = _as_workspace(scenario)
    if x_tilde.dim != ws.n:
        raise ObservationMismatch(
            f"true state has dimension {x_tilde.dim}, scheme expects {ws.n}"
        )
    if x_tilde.grid.n_nodes != ws.grid.n_nodes:
        raise ObservationMismatch(
            f"true state is sampled on {x_tilde.grid.n_nodes} nodes, "
            f"scheme grid has {ws.grid.n_nodes}"
        )
    if noise is not None and (
        len(noise.point_noise) != len(ws.points)
        or len(noise.interval_noise) != len(ws.intervals)
    ):
        raise ObservationMismatch("noise realization does not match the scheme")

    x = x_tilde.values
    point_obs = []
    for i, pt in enumerate(ws.points):
        y = pt.H @ x[pt.node]
        if noise is not None:
            y = y + noise.point_noise[i]
        point_obs.append(y)
    interval_obs = []
    for j, iv in enumerate(ws.intervals):
        y = np.einsum("kln,kn->kl", iv.H_nodes, x[iv.node_idx])
        if noise is not None:
            y = y + noise.interval_noise[j]
        interval_obs.append(IntervalSamples(iv.times.copy(), y))

    prov = dict(provenance or {})
    if noise is not None:
        prov.setdefault("noise_seed", noise.seed)
        prov.setdefault("point_weights", list(noise.point_weights))
        prov.setdefault("interval_weights", list(noise.interval_weights))
    return ObservationData(tuple(point_obs), tuple(interval_obs), prov)


def _complex_to_pairs(arr: np.ndarray):
    stacked = np.stack([np.real(arr), np.imag(arr)], axis=-1)
    return stacked.tolist()


def _pairs_to_complex(data, shape: tuple, what: str) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape != shape + (2,):
        raise ObservationMismatch(
            f"{what} has shape {arr.shape}, expected {shape + (2,)} (re/im pairs)"
        )
    return arr[..., 0] + 1j * arr[..., 1]


def observations_to_dict(obs: ObservationData) -> dict:
    """Serialize observations to the shared JSON schema."""
    return {
        "points": [
            {"i": i, "y": _complex_to_pairs(np.asarray(y))}
            for i, y in enumerate(obs.point_obs)
        ],
        "intervals": [
            {
                "j": j,
                "t": [float(t) for t in rec.times],
                "y": _complex_to_pairs(np.asarray(rec.values)),
            }
            for j, rec in enumerate(obs.interval_obs)
        ],
        "provenance": dict(obs.provenance),
    }


def observations_from_dict(data: dict, scenario) -> ObservationData:
    """Parse observations against a scenario's scheme (shapes must match)."""
    ws = _as_workspace(scenario)
    if not isinstance(data, dict):
        raise ObservationMismatch("observation data must be a JSON object")
    point_recs = {int(rec["i"]): rec for rec in data.get("points", [])}
    interval_recs = {int(rec["j"]): rec for rec in data.get("intervals", [])}
    if sorted(point_recs) != list(range(len(ws.points))):
        raise ObservationMismatch(
            f"point records cover indices {sorted(point_recs)}, "
            f"expected 0..{len(ws.points) - 1}"
        )
    if sorted(interval_recs) != list(range(len(ws.intervals))):
        raise ObservationMismatch(
            f"interval records cover indices {sorted(interval_recs)}, "
            f"expected 0..{len(ws.intervals) - 1}"
        )
    point_obs = []
    for i, pt in enumerate(ws.points):
        m = pt.H.shape[0]
        point_obs.append(_pairs_to_complex(point_recs[i]["y"], (m,), f"point {i} data"))
    interval_obs = []
    for j, iv in enumerate(ws.intervals):
        rec = interval_recs[j]
        times = np.asarray(rec["t"], dtype=float)
        if times.shape != iv.times.shape or not np.allclose(times, iv.times, rtol=0.0, atol=1e-9):
            raise ObservationMismatch(
                f"interval {j} sample times do not match the scheme's grid nodes"
            )
        nn, l = len(iv.times), iv.H_nodes.shape[1]
        interval_obs.append(IntervalSamples(
            iv.times.copy(),
            _pairs_to_complex(rec["y"], (nn, l), f"interval {j} data"),
        ))
    return ObservationData(
        tuple(point_obs), tuple(interval_obs), dict(data.get("provenance", {}))
    )
