"""Problem data model: system, observations, uncertainty, functional, grid.

A scenario bundles everything needed to pose the estimation problem:

* a T-periodic linear system  dx/dt = A(t) x + B(t) f(t)  of dimension n
  with r-dimensional forcing,
* point observations  y_i = H_i x(t_i) + xi_i  at interior times t_i and
  interval observations  y_j(t) = H_j(t) x(t) + xi_j(t)  on [a_j, b_j],
* the ellipsoidal forcing uncertainty description (weight Q(t), centre f0),
* the target functional  l(x) = int_0^T (x(t), l0(t)) dt,
* solver settings (grid resolution, singularity tolerance).

The time grid inserts every observation time and interval endpoint as an
exact breakpoint and gives each segment an even number of uniform steps, so
jumps always land on nodes and composite Simpson applies per segment.
"""
from __future__ import annotations

import json
import numbers
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioFormatError
from .providers import (
    PeriodicFunction,
    function_from_json,
    parse_complex_array,
)
from .quadrature import simpson_weights

__all__ = [
    "PeriodicSystem",
    "PointObservation",
    "IntervalObservation",
    "ObservationScheme",
    "UncertaintySpec",
    "FunctionalSpec",
    "SolverSettings",
    "Scenario",
    "TimeGrid",
    "build_grid",
    "ValidationReport",
    "validate_scenario",
    "scenario_from_dict",
    "load_scenario",
]


@dataclass(frozen=True)
class PeriodicSystem:
    """dx/dt = A(t) x + B(t) f(t), with T-periodic A (n x n) and B (n x r)."""

    T: float
    n: int
    r: int
    A: PeriodicFunction
    B: PeriodicFunction


@dataclass(frozen=True)
class PointObservation:
    """y_i = H_i x(t_i) + xi_i with H_i (m x n) and noise weight D_i (m x m)."""

    t: float
    H: np.ndarray
    D: np.ndarray


@dataclass(frozen=True)
class IntervalObservation:
    """y_j(t) = H_j(t) x(t) + xi_j(t) on [a, b], H_j (l x n), D_j (l x l)."""

    a: float
    b: float
    H: PeriodicFunction
    D: PeriodicFunction


@dataclass(frozen=True)
class ObservationScheme:
    points: tuple[PointObservation, ...]
    intervals: tuple[IntervalObservation, ...]

    @property
    def m(self) -> int:
        """Point observation dimension (0 when there are no points)."""
        return self.points[0].H.shape[0] if self.points else 0

    @property
    def l(self) -> int:
        """Interval observation dimension (0 when there are no intervals)."""
        return self.intervals[0].H.shape[0] if self.intervals else 0


@dataclass(frozen=True)
class UncertaintySpec:
    """Forcing set: f = f0 + deviation, int_0^T (Q (f - f0), f - f0) dt <= 1."""

    Q: PeriodicFunction
    f0: PeriodicFunction


@dataclass(frozen=True)
class FunctionalSpec:
    """Target l(x) = int_0^T (x(t), l0(t)) dt."""

    l0: PeriodicFunction


@dataclass(frozen=True)
class SolverSettings:
    base_steps: int = 256
    singularity_tol: float = 1e-10


@dataclass(frozen=True)
class Scenario:
    system: PeriodicSystem
    scheme: ObservationScheme
    uncertainty: UncertaintySpec
    functional: FunctionalSpec
    solver: SolverSettings = field(default_factory=SolverSettings)

    def with_base_steps(self, base_steps: int) -> "Scenario":
        """Copy of the scenario with a different base step count."""
        solver = SolverSettings(
            base_steps=int(base_steps),
            singularity_tol=self.solver.singularity_tol,
        )
        return Scenario(self.system, self.scheme, self.uncertainty, self.functional, solver)


# ---------------------------------------------------------------------------
# time grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Breakpoint-aligned mesh over one period.

    Segment k spans ``breakpoints[k]..breakpoints[k+1]`` with ``seg_steps[k]``
    uniform steps (even, >= 2).  Global nodes share segment endpoints; node
    values of a trajectory at a shared node are the left-limit values, with
    post-jump values stored separately by the solvers.

    The "segment view" (sv) layout concatenates the K_k + 1 nodes of every
    segment, duplicating shared endpoints.  It is the natural layout for
    per-segment quadrature of piecewise-continuous integrands: ``sv_index``
    maps sv positions to global node indices and ``sv_weights`` holds the
    composite Simpson weights of each segment.
    """

    period: float
    breakpoints: np.ndarray
    seg_steps: tuple[int, ...]
    nodes: np.ndarray
    seg_offsets: np.ndarray

    @property
    def n_segments(self) -> int:
        return len(self.seg_steps)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def seg_h(self, k: int) -> float:
        return (self.breakpoints[k + 1] - self.breakpoints[k]) / self.seg_steps[k]

    def seg_slice(self, k: int) -> slice:
        off = int(self.seg_offsets[k])
        return slice(off, off + self.seg_steps[k] + 1)

    def seg_nodes(self, k: int) -> np.ndarray:
        return self.nodes[self.seg_slice(k)]

    def seg_stage_times(self, k: int) -> np.ndarray:
        """Stage mesh of spacing h/4 used by the stepping kernel."""
        return np.linspace(
            self.breakpoints[k], self.breakpoints[k + 1], 4 * self.seg_steps[k] + 1
        )

    def seg_weights(self, k: int) -> np.ndarray:
        return simpson_weights(self.seg_steps[k], self.seg_h(k))

    @property
    def sv_index(self) -> np.ndarray:
        """Global node index of every segment-view position."""
        parts = [
            np.arange(int(self.seg_offsets[k]), int(self.seg_offsets[k]) + self.seg_steps[k] + 1)
            for k in range(self.n_segments)
        ]
        return np.concatenate(parts)

    @property
    def sv_weights(self) -> np.ndarray:
        return np.concatenate([self.seg_weights(k) for k in range(self.n_segments)])

    @property
    def sv_offsets(self) -> np.ndarray:
        """Segment-view start position of each segment."""
        sizes = np.array([s + 1 for s in self.seg_steps])
        return np.concatenate([[0], np.cumsum(sizes)[:-1]])

    def sv_slice(self, k: int) -> slice:
        off = int(self.sv_offsets[k])
        return slice(off, off + self.seg_steps[k] + 1)

    def breakpoint_index(self, t: float) -> int:
        """Index into ``breakpoints`` of an exact breakpoint time."""
        i = int(np.searchsorted(self.breakpoints, t))
        if i >= len(self.breakpoints) or self.breakpoints[i] != t:
            raise ValueError(f"{t!r} is not a grid breakpoint")
        return i

    def node_index(self, t: float) -> int:
        """Global node index of an exact breakpoint time."""
        i = self.breakpoint_index(t)
        if i == len(self.breakpoints) - 1:
            return self.n_nodes - 1
        return int(self.seg_offsets[i])

    def segment_range(self, a: float, b: float) -> tuple[int, int]:
        """Inclusive segment index range covering breakpoint span [a, b]."""
        return self.breakpoint_index(a), self.breakpoint_index(b) - 1

    def node_indices_between(self, a: float, b: float) -> np.ndarray:
        """Global node indices (unique) covering breakpoint span [a, b]."""
        k0, k1 = self.segment_range(a, b)
        first = int(self.seg_offsets[k0])
        last = int(self.seg_offsets[k1]) + self.seg_steps[k1]
        return np.arange(first, last + 1)


def _even_ceil_steps(raw: float) -> int:
    """Round a raw step count up to an even integer >= 2 (with float-noise slack)."""
    k = int(np.ceil(raw - 1e-9))
    if k % 2:
        k += 1
    return max(k, 2)


def build_grid(system: PeriodicSystem, scheme: ObservationScheme, base_steps: int) -> TimeGrid:
    """Mesh [0, T] with every observation time / interval endpoint as a breakpoint.

    Each segment receives steps proportional to its length (at least its
    share of ``base_steps``), rounded up to an even count >= 2.  Coincident
    breakpoints collapse.
    """
    T = system.T
    marks = [0.0, T]
    for p in scheme.points:
        if not 0.0 < p.t < T:
            raise ValueError(f"point time {p.t} outside (0, {T})")
        marks.append(float(p.t))
    for iv in scheme.intervals:
        if not (0.0 <= iv.a < iv.b <= T):
            raise ValueError(f"interval [{iv.a}, {iv.b}] invalid within [0, {T}]")
        marks.extend([float(iv.a), float(iv.b)])
    breakpoints = np.unique(np.array(marks, dtype=float))
    seg_steps = tuple(
        _even_ceil_steps(base_steps * (breakpoints[k + 1] - breakpoints[k]) / T)
        for k in range(len(breakpoints) - 1)
    )
    parts = [np.array([0.0])]
    offsets = []
    total = 0
    for k, steps in enumerate(seg_steps):
        offsets.append(total)
        seg = np.linspace(breakpoints[k], breakpoints[k + 1], steps + 1)
        if k == 0:
            parts = [seg]
        else:
            parts.append(seg[1:])
        total += steps
    nodes = np.concatenate(parts)
    return TimeGrid(
        period=float(T),
        breakpoints=breakpoints,
        seg_steps=seg_steps,
        nodes=nodes,
        seg_offsets=np.array(offsets, dtype=int),
    )


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _hermitian_pd_violation(M: np.ndarray, label: str) -> list[str]:
    out = []
    scale = np.linalg.norm(M)
    if np.linalg.norm(M - M.conj().T) > 1e-12 * max(scale, 1e-300):
        out.append(f"{label} is not Hermitian")
        return out
    eigs = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    if eigs.min() <= 0:
        out.append(f"{label} is not positive definite (eigenvalues {np.round(eigs, 12).tolist()})")
    return out


def _dyadic_probe_times(T: float, count: int = 16) -> np.ndarray:
    # dyadic multiples of T so that t, t + T and the mod-T reduction are exact
    return np.arange(1, count + 1) * (T / 256.0) * 7.0


def validate_scenario(scenario: Scenario) -> ValidationReport:
    """Collect all semantic violations (empty report means the scenario is usable)."""
    v: list[str] = []
    sys_ = scenario.system
    n, r, T = sys_.n, sys_.r, sys_.T

    if not (isinstance(T, numbers.Real) and T > 0):
        v.append(f"period T must be positive, got {T}")
        return ValidationReport(tuple(v))
    if n < 1:
        v.append(f"state dimension n must be >= 1, got {n}")
    if r < 1:
        v.append(f"forcing dimension r must be >= 1, got {r}")

    def check_shape(fn: PeriodicFunction, shape, label):
        if fn.shape != shape:
            v.append(f"{label} has shape {fn.shape}, expected {shape}")
            return False
        return True

    shapes_ok = all(
        [
            check_shape(sys_.A, (n, n), "A"),
            check_shape(sys_.B, (n, r), "B"),
            check_shape(scenario.uncertainty.Q, (r, r), "Q"),
            check_shape(scenario.uncertainty.f0, (r,), "f0"),
            check_shape(scenario.functional.l0, (n,), "l0"),
        ]
    )

    # periodicity and determinism of the coefficient functions (dyadic probes
    # make t + T exact, so periodic forms must match bit for bit)
    probes = _dyadic_probe_times(T)
    for label, fn in (("A", sys_.A), ("B", sys_.B), ("Q", scenario.uncertainty.Q)):
        try:
            v0 = fn.at(probes)
            v1 = fn.at(probes + T)
            v2 = fn.at(probes)
        except Exception as exc:  # pragma: no cover - defensive
            v.append(f"{label} failed to evaluate: {exc}")
            continue
        scale = max(np.abs(v0).max(), 1e-300)
        if np.abs(v0 - v1).max() > 1e-12 * scale:
            v.append(f"{label} is not T-periodic")
        if not np.array_equal(v0, v2):
            v.append(f"{label} evaluation is not deterministic")

    scheme = scenario.scheme
    times = [p.t for p in scheme.points]
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        v.append(f"point observation times must be strictly increasing, got {times}")
    m = scheme.m
    for i, p in enumerate(scheme.points, start=1):
        if not 0.0 < p.t < T:
            v.append(f"t_{i} = {p.t} must lie strictly inside (0, {T})")
        if p.H.shape[1] != n:
            v.append(f"H_{i} has {p.H.shape[1]} columns, expected n = {n}")
        if p.H.shape[0] != m:
            v.append(f"H_{i} has {p.H.shape[0]} rows, expected m = {m}")
        if p.D.shape != (p.H.shape[0], p.H.shape[0]):
            v.append(f"D_{i} has shape {p.D.shape}, expected square of size {p.H.shape[0]}")
        else:
            v.extend(_hermitian_pd_violation(p.D, f"D_{i}"))

    l_dim = scheme.l
    for j, iv in enumerate(scheme.intervals, start=1):
        if not (0.0 <= iv.a < iv.b <= T):
            v.append(f"interval {j} endpoints [{iv.a}, {iv.b}] must satisfy 0 <= a < b <= T")
        if iv.H.shape[1:] != (n,) or len(iv.H.shape) != 2:
            v.append(f"H of interval {j} has shape {iv.H.shape}, expected (l, {n})")
        if iv.H.shape[0] != l_dim:
            v.append(f"H of interval {j} has {iv.H.shape[0]} rows, expected l = {l_dim}")
        if iv.D.shape != (iv.H.shape[0], iv.H.shape[0]):
            v.append(f"D of interval {j} has shape {iv.D.shape}, expected square")

    st = scenario.solver
    if st.base_steps < 16:
        v.append(f"base_steps must be >= 16, got {st.base_steps}")
    if not 0 < st.singularity_tol <= 1e-2:
        v.append(f"singularity_tol must be in (0, 1e-2], got {st.singularity_tol}")

    # positive definiteness of the time-varying weights on the actual grid
    if shapes_ok and not v:
        grid = build_grid(sys_, scheme, st.base_steps)
        Q_nodes = scenario.uncertainty.Q.at(grid.nodes)
        herm_err = np.abs(Q_nodes - Q_nodes.conj().swapaxes(-1, -2)).max()
        if herm_err > 1e-12 * max(np.abs(Q_nodes).max(), 1e-300):
            v.append("Q(t) is not Hermitian at every grid node")
        else:
            eig_min = np.linalg.eigvalsh(Q_nodes).min()
            if eig_min <= 0:
                v.append(f"Q(t) is not positive definite at every grid node (min eig {eig_min:g})")
        for j, iv in enumerate(scheme.intervals, start=1):
            ts = grid.nodes[grid.node_indices_between(iv.a, iv.b)]
            D_nodes = iv.D.at(ts)
            herm_err = np.abs(D_nodes - D_nodes.conj().swapaxes(-1, -2)).max()
            if herm_err > 1e-12 * max(np.abs(D_nodes).max(), 1e-300):
                v.append(f"D of interval {j} is not Hermitian at every grid node")
            elif np.linalg.eigvalsh(D_nodes).min() <= 0:
                v.append(f"D of interval {j} is not positive definite at every grid node")

    return ValidationReport(tuple(v))


# ---------------------------------------------------------------------------
# JSON scenario files
# ---------------------------------------------------------------------------


def _infer_rows(data) -> int:
    if isinstance(data, (list, tuple)) and data and isinstance(data[0], (list, tuple)):
        return len(data)
    return 1


def _infer_provider_rows(data) -> int:
    if isinstance(data, dict):
        form = data.get("form", "constant")
        if form == "constant":
            return _infer_rows(data.get("value"))
        if form == "fourier":
            harmonics = data.get("harmonics") or [{}]
            return _infer_rows(harmonics[0].get("cos"))
        if form == "grid":
            samples = data.get("samples") or [None]
            return _infer_rows(samples[0])
        return 1
    return _infer_rows(data)


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ScenarioFormatError(f"missing key {key!r} in {where}")
    return data[key]


def scenario_from_dict(data: dict) -> Scenario:
    """Construct a scenario from parsed JSON (shape errors raise ScenarioFormatError)."""
    if not isinstance(data, dict):
        raise ScenarioFormatError("scenario file must contain a JSON object")
    sys_d = _require(data, "system", "scenario")
    T = float(_require(sys_d, "T", "system"))
    n = int(_require(sys_d, "n", "system"))
    r = int(_require(sys_d, "r", "system"))
    if T <= 0 or n < 1 or r < 1:
        raise ScenarioFormatError(f"invalid system dimensions T={T}, n={n}, r={r}")
    system = PeriodicSystem(
        T=T,
        n=n,
        r=r,
        A=function_from_json(_require(sys_d, "A", "system"), T, (n, n)),
        B=function_from_json(_require(sys_d, "B", "system"), T, (n, r)),
    )

    obs_d = data.get("observations", {})
    points = []
    point_rows = None
    for p in obs_d.get("points", []):
        t = float(_require(p, "t", "point observation"))
        m = _infer_rows(_require(p, "H", "point observation"))
        if point_rows is None:
            point_rows = m
        H = parse_complex_array(p["H"], (point_rows, n))
        D = parse_complex_array(_require(p, "D", "point observation"), (point_rows, point_rows))
        points.append(PointObservation(t=t, H=H, D=D))
    intervals = []
    iv_rows = None
    for iv in obs_d.get("intervals", []):
        a = float(_require(iv, "a", "interval observation"))
        b = float(_require(iv, "b", "interval observation"))
        l_dim = _infer_provider_rows(_require(iv, "H", "interval observation"))
        if iv_rows is None:
            iv_rows = l_dim
        H = function_from_json(iv["H"], T, (iv_rows, n))
        D = function_from_json(_require(iv, "D", "interval observation"), T, (iv_rows, iv_rows))
        intervals.append(IntervalObservation(a=a, b=b, H=H, D=D))
    scheme = ObservationScheme(points=tuple(points), intervals=tuple(intervals))

    unc_d = _require(data, "uncertainty", "scenario")
    uncertainty = UncertaintySpec(
        Q=function_from_json(_require(unc_d, "Q", "uncertainty"), T, (r, r)),
        f0=function_from_json(_require(unc_d, "f0", "uncertainty"), T, (r,)),
    )
    fun_d = _require(data, "functional", "scenario")
    functional = FunctionalSpec(l0=function_from_json(_require(fun_d, "l0", "functional"), T, (n,)))

    sol_d = data.get("solver", {})
    solver = SolverSettings(
        base_steps=int(sol_d.get("base_steps", SolverSettings.base_steps)),
        singularity_tol=float(sol_d.get("singularity_tol", SolverSettings.singularity_tol)),
    )
    return Scenario(
        system=system,
        scheme=scheme,
        uncertainty=uncertainty,
        functional=functional,
        solver=solver,
    )


def load_scenario(path) -> Scenario:
    """Load and parse a scenario JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioFormatError(f"cannot read scenario file {path}: {exc}") from exc
    return scenario_from_dict(data)
