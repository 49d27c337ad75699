"""Shared scenario factories and small utilities for the test suite.

Random scenarios are drawn from seeded generators so every run sees the same
instances.  Observation times and interval endpoints are placed on a coarse
lattice so no segment of the induced grid becomes pathologically short.
"""
from __future__ import annotations

import math

import numpy as np

from perimax import (
    FunctionalSpec,
    IntervalObservation,
    ObservationScheme,
    PeriodicSystem,
    PointObservation,
    Scenario,
    SolverSettings,
    UncertaintySpec,
)
from perimax.providers import ConstantFunction, FourierFunction

CANONICAL_DICT = {
    "system": {"T": 1.0, "n": 1, "r": 1, "A": [[-1.0]], "B": [[1.0]]},
    "observations": {
        "points": [{"t": 0.5, "H": [[1.0]], "D": [[1.0]]}],
        "intervals": [],
    },
    "uncertainty": {"Q": [[1.0]], "f0": [0.0]},
    "functional": {"l0": [1.0]},
    "solver": {"base_steps": 256},
}

# Scalar canonical scenario invariants, from the closed forms:
#   X(1) = e^{-1}; the adjoint equilibrium is z == 1 so I(0) = 1;
#   the unit-jump adjoint value z(0) = e^{1/2}/(1 - e).
CANONICAL_X1 = math.exp(-1.0)
CANONICAL_Z1 = math.e
CANONICAL_JUMP_Z0 = math.exp(0.5) / (1.0 - math.e)


def canonical_dict(base_steps: int = 256) -> dict:
    import copy

    data = copy.deepcopy(CANONICAL_DICT)
    data["solver"]["base_steps"] = base_steps
    return data


def hermitian_pd(rng: np.random.Generator, k: int, *, real: bool = False, scale: float = 1.0) -> np.ndarray:
    """Random Hermitian positive-definite k x k matrix with O(1) spectrum."""
    G = rng.standard_normal((k, k))
    if not real:
        G = G + 1j * rng.standard_normal((k, k))
    M = G @ G.conj().T / k + np.eye(k)
    return scale * M


def _random_matrix(rng: np.random.Generator, shape, *, real: bool, scale: float = 1.0) -> np.ndarray:
    M = rng.standard_normal(shape)
    if not real:
        M = M + 1j * rng.standard_normal(shape)
    return scale * M


def _fourier_provider(rng, T, shape, *, real: bool, scale: float, order: int = 1):
    harmonics = []
    for k in range(order + 1):
        C = _random_matrix(rng, shape, real=real, scale=scale / (1 + k))
        S = _random_matrix(rng, shape, real=real, scale=scale / (1 + k)) if k else np.zeros(shape)
        harmonics.append((k, C, S))
    return FourierFunction(T, harmonics)


def random_scenario(
    seed: int,
    *,
    n_max: int = 3,
    N_max: int = 4,
    M_max: int = 2,
    base_steps: int = 256,
    pointwise: bool = False,
    real: bool = False,
    time_varying: bool = True,
) -> Scenario:
    """Random solvable scenario: n <= n_max states, N <= N_max points, M <= M_max windows.

    The generator A(t) carries a uniform negative shift so the monodromy stays
    well clear of the identity; window lengths are 1/16 .. 2/16 of the period.
    """
    rng = np.random.default_rng(seed)
    T = 1.0
    n = int(rng.integers(1, n_max + 1))
    r = int(rng.integers(1, 3))
    m = int(rng.integers(1, 3))

    shift = 0.8 + 0.4 * rng.random()
    if time_varying:
        A_free = _fourier_provider(rng, T, (n, n), real=real, scale=0.3 / math.sqrt(n))
        harmonics = [(k, C - (shift * np.eye(n) if k == 0 else 0.0), S) for k, C, S in A_free.harmonics]
        A = FourierFunction(T, harmonics)
    else:
        A = ConstantFunction(T, _random_matrix(rng, (n, n), real=real, scale=0.3 / math.sqrt(n)) - shift * np.eye(n))
    B = ConstantFunction(T, _random_matrix(rng, (n, r), real=real))

    N = int(rng.integers(1, N_max + 1))
    lattice = np.arange(1, 16) / 16.0
    times = np.sort(rng.choice(lattice, size=N, replace=False))
    points = tuple(
        PointObservation(
            t=float(t),
            H=_random_matrix(rng, (m, n), real=real),
            D=hermitian_pd(rng, m, real=real),
        )
        for t in times
    )

    intervals = ()
    if not pointwise and M_max > 0:
        M = int(rng.integers(0, M_max + 1))
        ivs = []
        for _ in range(M):
            length = int(rng.integers(1, 3)) / 16.0
            a = int(rng.integers(0, int(16 * (1 - length)) + 1)) / 16.0
            l_dim = 1
            ivs.append(
                IntervalObservation(
                    a=a,
                    b=a + length,
                    H=ConstantFunction(T, _random_matrix(rng, (l_dim, n), real=real)),
                    D=ConstantFunction(T, hermitian_pd(rng, l_dim, real=real)),
                )
            )
        intervals = tuple(ivs)

    Q = ConstantFunction(T, hermitian_pd(rng, r, real=real))
    f0 = _fourier_provider(rng, T, (r,), real=real, scale=0.5)
    l0 = _fourier_provider(rng, T, (n,), real=real, scale=1.0)

    return Scenario(
        system=PeriodicSystem(T=T, n=n, r=r, A=A, B=B),
        scheme=ObservationScheme(points=points, intervals=intervals),
        uncertainty=UncertaintySpec(Q=Q, f0=f0),
        functional=FunctionalSpec(l0=l0),
        solver=SolverSettings(base_steps=base_steps),
    )


def random_observations(scenario, ws, seed: int):
    """Arbitrary (not model-consistent) observation data matching the scheme shapes."""
    from perimax import ObservationData
    from perimax.sim import IntervalSamples

    rng = np.random.default_rng(seed)
    point_obs = tuple(
        _random_matrix(rng, (p.H.shape[0],), real=False) for p in ws.points
    )
    interval_obs = tuple(
        IntervalSamples(iv.times, _random_matrix(rng, (len(iv.times), iv.H_nodes.shape[1]), real=False))
        for iv in ws.intervals
    )
    return ObservationData(point_obs=point_obs, interval_obs=interval_obs, provenance={})


def random_control(ws, seed: int, *, scale: float = 1.0):
    """Random ControlVector matching the workspace's scheme."""
    from perimax import ControlVector

    rng = np.random.default_rng(seed)
    u = ControlVector.zeros(ws)
    points = [
        scale * _random_matrix(rng, part.shape, real=False) for part in u.point_parts
    ]
    intervals = [
        ic.replace_values(scale * _random_matrix(rng, ic.values.shape, real=False))
        for ic in u.interval_parts
    ]
    return ControlVector(points, intervals)


def rel_err(value, reference) -> float:
    ref = np.asarray(reference)
    scale = max(1e-300, float(np.abs(ref).max()))
    return float(np.abs(np.asarray(value) - ref).max()) / scale


def rotation_system(T: float) -> PeriodicSystem:
    A = ConstantFunction(T, np.array([[0.0, 1.0], [-1.0, 0.0]]))
    B = ConstantFunction(T, np.array([[1.0], [0.0]]))
    return PeriodicSystem(T=T, n=2, r=1, A=A, B=B)


def scalar_system(a: float = -1.0, T: float = 1.0) -> PeriodicSystem:
    A = ConstantFunction(T, np.array([[a]]))
    B = ConstantFunction(T, np.array([[1.0]]))
    return PeriodicSystem(T=T, n=1, r=1, A=A, B=B)


EMPTY_SCHEME = ObservationScheme(points=(), intervals=())
