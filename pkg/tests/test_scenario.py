"""Scenario model: providers, grid construction, validation, JSON loading."""
from __future__ import annotations

import copy
import json
import math

import numpy as np
import pytest

from perimax import (
    FunctionalSpec,
    ObservationScheme,
    PointObservation,
    Scenario,
    ScenarioFormatError,
    SolverSettings,
    UncertaintySpec,
    build_grid,
    load_scenario,
    scenario_from_dict,
    validate_scenario,
)
from perimax.providers import (
    ConstantFunction,
    FourierFunction,
    GridFunction,
    function_from_json,
)

from helpers import EMPTY_SCHEME, canonical_dict, scalar_system


# ---------------------------------------------------------------------------
# providers
# ---------------------------------------------------------------------------


def test_constant_provider_periodic_exact():
    fn = ConstantFunction(1.0, np.array([[2.0, 1.0], [0.0, 3.0]]))
    ts = np.array([0.0, 0.25, 0.75])
    assert np.array_equal(fn.at(ts), fn.at(ts + 1.0))


def test_fourier_provider_periodic_exact():
    fn = FourierFunction(2.0, [(1, np.array([1.0 + 2.0j]), np.array([0.5]))])
    # dyadic probe times make t + T exact in floating point
    ts = np.array([0.0, 0.25, 0.5, 1.25])
    assert np.array_equal(fn.at(ts), fn.at(ts + 2.0))


def test_fourier_provider_values():
    fn = FourierFunction(1.0, [(0, np.array([2.0]), None), (1, np.array([1.0]), np.array([3.0]))])
    t = 0.2
    expected = 2.0 + math.cos(2 * math.pi * t) + 3.0 * math.sin(2 * math.pi * t)
    assert abs(fn.at(np.array([t]))[0, 0] - expected) < 1e-14


def test_grid_provider_wraparound():
    samples = np.array([[0.0], [1.0], [0.5], [0.25]])
    fn = GridFunction(1.0, samples)
    ts = np.array([0.1, 0.6, 0.95])
    assert np.abs(fn.at(ts) - fn.at(ts + 1.0)).max() < 1e-14
    # linear interpolation between samples 0 and 1 at t = 0.125
    assert abs(fn.at(np.array([0.125]))[0, 0] - 0.5) < 1e-14


def test_function_from_json_forms():
    const = function_from_json([[1.0, [0.0, 2.0]]], 1.0, (1, 2))
    assert np.allclose(const.at(np.array([0.3]))[0], [[1.0, 2.0j]])
    four = function_from_json(
        {"form": "fourier", "harmonics": [{"k": 0, "cos": [1.0]}]}, 1.0, (1,)
    )
    assert np.allclose(four.at(np.array([0.7]))[0], [1.0])
    grid = function_from_json({"form": "grid", "samples": [[0.0], [1.0]]}, 1.0, (1,))
    assert np.allclose(grid.at(np.array([0.25]))[0], [0.5])
    with pytest.raises(ScenarioFormatError):
        function_from_json({"form": "nope"}, 1.0, (1,))
    with pytest.raises(ScenarioFormatError):
        function_from_json({"form": "grid", "samples": [[0.0]]}, 1.0, (1,))


# ---------------------------------------------------------------------------
# grid construction
# ---------------------------------------------------------------------------


def test_grid_single_segment():
    grid = build_grid(scalar_system(), EMPTY_SCHEME, 16)
    assert grid.n_nodes == 17
    assert np.allclose(grid.nodes, np.linspace(0.0, 1.0, 17))
    assert grid.seg_steps == (16,)


def test_grid_point_splits_segments():
    scheme = ObservationScheme(
        points=(PointObservation(0.5, np.eye(1, dtype=complex), np.eye(1, dtype=complex)),),
        intervals=(),
    )
    grid = build_grid(scalar_system(), scheme, 16)
    assert tuple(grid.breakpoints) == (0.0, 0.5, 1.0)
    assert grid.seg_steps == (8, 8)
    assert 0.5 in grid.nodes
    assert grid.nodes[grid.node_index(0.5)] == 0.5


def test_grid_proportional_rounding():
    # breakpoints {0, 0.3, 0.7, 1}; shares of 10 steps are 3, 4, 3 ->
    # rounded up to even minimum: 4, 4, 4
    from perimax import IntervalObservation

    scheme = ObservationScheme(
        points=(PointObservation(0.3, np.eye(1, dtype=complex), np.eye(1, dtype=complex)),),
        intervals=(
            IntervalObservation(
                0.3,
                0.7,
                ConstantFunction(1.0, np.eye(1)),
                ConstantFunction(1.0, np.eye(1)),
            ),
        ),
    )
    grid = build_grid(scalar_system(), scheme, 10)
    assert tuple(grid.breakpoints) == (0.0, 0.3, 0.7, 1.0)
    for steps in grid.seg_steps:
        assert steps >= 2 and steps % 2 == 0


def test_grid_idempotence():
    scheme = ObservationScheme(
        points=(PointObservation(0.25, np.eye(1, dtype=complex), np.eye(1, dtype=complex)),),
        intervals=(),
    )
    g1 = build_grid(scalar_system(), scheme, 64)
    g2 = build_grid(scalar_system(), scheme, 64)
    assert np.array_equal(g1.nodes, g2.nodes)
    assert g1.seg_steps == g2.seg_steps


def test_grid_node_count_meets_base():
    grid = build_grid(scalar_system(), EMPTY_SCHEME, 100)
    assert grid.n_nodes >= 101


def test_grid_segment_nodes_uniform_odd():
    scheme = ObservationScheme(
        points=(PointObservation(0.3, np.eye(1, dtype=complex), np.eye(1, dtype=complex)),),
        intervals=(),
    )
    grid = build_grid(scalar_system(), scheme, 32)
    for k in range(grid.n_segments):
        seg = grid.seg_nodes(k)
        assert len(seg) % 2 == 1
        assert np.allclose(np.diff(seg), grid.seg_h(k))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def test_validate_canonical_ok(canonical):
    report = validate_scenario(canonical)
    assert report.ok
    assert report.violations == ()


def _scenario_with(**overrides) -> Scenario:
    data = canonical_dict()
    base = scenario_from_dict(data)
    fields = {
        "system": base.system,
        "scheme": base.scheme,
        "uncertainty": base.uncertainty,
        "functional": base.functional,
        "solver": base.solver,
    }
    fields.update(overrides)
    return Scenario(**fields)


def test_validate_rejects_point_at_zero():
    scheme = ObservationScheme(
        points=(PointObservation(0.0, np.eye(1, dtype=complex), np.eye(1, dtype=complex)),),
        intervals=(),
    )
    report = validate_scenario(_scenario_with(scheme=scheme))
    assert any("inside (0," in msg for msg in report.violations)


def test_validate_rejects_unsorted_points():
    scheme = ObservationScheme(
        points=(
            PointObservation(0.5, np.eye(1, dtype=complex), np.eye(1, dtype=complex)),
            PointObservation(0.25, np.eye(1, dtype=complex), np.eye(1, dtype=complex)),
        ),
        intervals=(),
    )
    report = validate_scenario(_scenario_with(scheme=scheme))
    assert any("strictly increasing" in msg for msg in report.violations)


def test_validate_rejects_indefinite_D():
    # eigenvalues 3 and -1
    D = np.array([[1.0, 2.0], [2.0, 1.0]], dtype=complex)
    H = np.ones((2, 1), dtype=complex)
    scheme = ObservationScheme(points=(PointObservation(0.5, H, D),), intervals=())
    report = validate_scenario(_scenario_with(scheme=scheme))
    assert any("not positive definite" in msg for msg in report.violations)


def test_validate_rejects_non_hermitian_D():
    D = np.array([[1.0, 1.0], [0.0, 1.0]], dtype=complex)
    H = np.ones((2, 1), dtype=complex)
    scheme = ObservationScheme(points=(PointObservation(0.5, H, D),), intervals=())
    report = validate_scenario(_scenario_with(scheme=scheme))
    assert any("not Hermitian" in msg for msg in report.violations)


def test_validate_rejects_bad_interval_endpoints():
    from perimax import IntervalObservation

    iv = IntervalObservation(
        0.7, 0.2, ConstantFunction(1.0, np.eye(1)), ConstantFunction(1.0, np.eye(1))
    )
    scheme = ObservationScheme(points=(), intervals=(iv,))
    report = validate_scenario(_scenario_with(scheme=scheme))
    assert any("0 <= a < b <= T" in msg for msg in report.violations)


def test_validate_rejects_indefinite_Q():
    unc = UncertaintySpec(
        Q=ConstantFunction(1.0, np.array([[-1.0]])),
        f0=ConstantFunction(1.0, np.array([0.0])),
    )
    report = validate_scenario(_scenario_with(uncertainty=unc))
    assert any("Q(t) is not positive definite" in msg for msg in report.violations)


def test_validate_rejects_shape_mismatch():
    fnl = FunctionalSpec(l0=ConstantFunction(1.0, np.array([1.0, 0.0])))
    report = validate_scenario(_scenario_with(functional=fnl))
    assert any("l0" in msg and "shape" in msg for msg in report.violations)


def test_validate_rejects_small_base_steps():
    report = validate_scenario(_scenario_with(solver=SolverSettings(base_steps=8)))
    assert any("base_steps" in msg for msg in report.violations)


def test_validate_rejects_nonperiodic_provider():
    class Aperiodic(ConstantFunction):
        def at(self, ts):
            base = super().at(np.asarray(ts, dtype=float))
            return base + np.asarray(ts, dtype=float)[:, None, None]

    bad = Aperiodic(1.0, np.array([[-1.0]]))
    sys_ = scalar_system()
    from perimax import PeriodicSystem

    system = PeriodicSystem(T=1.0, n=1, r=1, A=bad, B=sys_.B)
    report = validate_scenario(_scenario_with(system=system))
    assert any("not T-periodic" in msg for msg in report.violations)


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def test_scenario_from_dict_canonical(canonical):
    assert canonical.system.n == 1
    assert canonical.system.T == 1.0
    assert len(canonical.scheme.points) == 1
    assert canonical.scheme.points[0].t == 0.5
    assert canonical.solver.base_steps == 256


def test_load_scenario_file(tmp_path):
    path = tmp_path / "scn.json"
    path.write_text(json.dumps(canonical_dict()))
    scn = load_scenario(path)
    assert scn.system.n == 1
    assert validate_scenario(scn).ok


def test_scenario_from_dict_missing_key():
    data = canonical_dict()
    del data["system"]["T"]
    with pytest.raises(ScenarioFormatError):
        scenario_from_dict(data)


def test_scenario_from_dict_bad_dimensions():
    data = canonical_dict()
    data["system"]["n"] = 0
    with pytest.raises(ScenarioFormatError):
        scenario_from_dict(data)


def test_scenario_from_dict_complex_entries():
    data = canonical_dict()
    data["system"]["A"] = [[[-1.0, 0.5]]]
    scn = scenario_from_dict(data)
    assert scn.system.A.at(np.array([0.0]))[0, 0, 0] == -1.0 + 0.5j


def test_with_base_steps(canonical):
    scn = canonical.with_base_steps(512)
    assert scn.solver.base_steps == 512
    assert scn.solver.singularity_tol == canonical.solver.singularity_tol
    assert canonical.solver.base_steps == 256
    assert scn.system is canonical.system


def test_deep_copy_independent():
    d1 = canonical_dict()
    d2 = copy.deepcopy(d1)
    d2["solver"]["base_steps"] = 999
    assert d1["solver"]["base_steps"] == 256
