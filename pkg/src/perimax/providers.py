"""T-periodic matrix- and vector-valued coefficient functions.

Three concrete forms cover all coefficient data accepted by the solvers:

* ``constant``  -- a fixed complex array;
* ``fourier``   -- a trigonometric polynomial
  ``sum_k C_k cos(2*pi*k*t/T) + S_k sin(2*pi*k*t/T)``;
* ``grid``      -- uniform samples over one period with linear interpolation
  and periodic wraparound.

Every form evaluates through reduction of ``t`` modulo the period, so the
periodic extension to the whole axis is structural, and evaluation is a pure
function of ``t`` (no state, no randomness).

JSON payloads encode complex scalars as two-element ``[re, im]`` arrays; a
bare number is taken as real.  Parsing is driven by the expected array shape,
which keeps ``[a, b]`` unambiguous (complex scalar where a scalar is expected,
row of reals where a row is expected).
"""
from __future__ import annotations

import numbers

import numpy as np

from .errors import ScenarioFormatError

__all__ = [
    "PeriodicFunction",
    "ConstantFunction",
    "FourierFunction",
    "GridFunction",
    "CallableFunction",
    "parse_complex_array",
    "function_from_json",
]


def _reduce_mod_period(ts: np.ndarray, period: float) -> np.ndarray:
    """Map times onto [0, period).  Exact for t already in [0, period)."""
    tau = ts - period * np.floor(ts / period)
    # floor rounding can leave tau == period for t a hair below a multiple
    return np.where(tau >= period, tau - period, tau)


class PeriodicFunction:
    """A T-periodic function of time with values of a fixed array shape."""

    def __init__(self, period: float, shape: tuple[int, ...]):
        if period <= 0:
            raise ScenarioFormatError(f"period must be positive, got {period}")
        self.period = float(period)
        self.shape = tuple(shape)

    def at(self, ts) -> np.ndarray:
        """Evaluate at an array of times; returns shape (len(ts), *shape)."""
        ts = np.asarray(ts, dtype=float)
        return self._eval(_reduce_mod_period(ts, self.period))

    def __call__(self, t: float) -> np.ndarray:
        return self.at(np.array([float(t)]))[0]

    def _eval(self, tau: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


class ConstantFunction(PeriodicFunction):
    def __init__(self, period: float, value: np.ndarray):
        value = np.asarray(value, dtype=complex)
        super().__init__(period, value.shape)
        self.value = value

    def _eval(self, tau: np.ndarray) -> np.ndarray:
        out = np.empty(tau.shape + self.shape, dtype=complex)
        out[...] = self.value
        return out


class FourierFunction(PeriodicFunction):
    """Trigonometric polynomial: sum of C_k cos(k w t) + S_k sin(k w t), w = 2 pi / T."""

    def __init__(self, period: float, harmonics):
        """``harmonics`` is a sequence of (k, C_k, S_k) with integer k >= 0."""
        terms = []
        shape = None
        for k, cmat, smat in harmonics:
            cmat = np.asarray(cmat, dtype=complex)
            smat = np.zeros_like(cmat) if smat is None else np.asarray(smat, dtype=complex)
            if cmat.shape != smat.shape:
                raise ScenarioFormatError("cos and sin coefficients must share a shape")
            if shape is None:
                shape = cmat.shape
            elif cmat.shape != shape:
                raise ScenarioFormatError("all harmonics must share a shape")
            terms.append((int(k), cmat, smat))
        if shape is None:
            raise ScenarioFormatError("fourier form needs at least one harmonic")
        super().__init__(period, shape)
        self.harmonics = tuple(terms)

    def _eval(self, tau: np.ndarray) -> np.ndarray:
        omega = 2.0 * np.pi / self.period
        out = np.zeros(tau.shape + self.shape, dtype=complex)
        extra = (np.newaxis,) * len(self.shape)
        for k, cmat, smat in self.harmonics:
            phase = (omega * k) * tau
            out += np.cos(phase)[(...,) + extra] * cmat
            out += np.sin(phase)[(...,) + extra] * smat
        return out


class GridFunction(PeriodicFunction):
    """Uniform samples over [0, T) with linear interpolation, periodic wraparound.

    ``samples[p]`` is the value at ``t = p * T / P`` for ``p = 0..P-1``.
    """

    def __init__(self, period: float, samples: np.ndarray):
        samples = np.asarray(samples, dtype=complex)
        if samples.ndim < 1 or samples.shape[0] < 2:
            raise ScenarioFormatError("grid form needs at least two samples")
        super().__init__(period, samples.shape[1:])
        self.samples = samples

    def _eval(self, tau: np.ndarray) -> np.ndarray:
        npts = self.samples.shape[0]
        x = tau * (npts / self.period)
        idx = np.minimum(np.floor(x).astype(int), npts - 1)
        frac = x - idx
        extra = (np.newaxis,) * len(self.shape)
        left = self.samples[idx]
        right = self.samples[(idx + 1) % npts]
        return left + frac[(...,) + extra] * (right - left)


class CallableFunction(PeriodicFunction):
    """Adapter wrapping a deterministic vectorized callable of reduced time."""

    def __init__(self, period: float, shape: tuple[int, ...], fn):
        super().__init__(period, shape)
        self._fn = fn

    def _eval(self, tau: np.ndarray) -> np.ndarray:
        out = np.asarray(self._fn(tau), dtype=complex)
        if out.shape != tau.shape + self.shape:
            raise ScenarioFormatError(
                f"callable returned shape {out.shape}, expected {tau.shape + self.shape}"
            )
        return out


def _parse_leaf(value) -> complex:
    if isinstance(value, numbers.Real):
        return complex(value, 0.0)
    if (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(v, numbers.Real) for v in value)
    ):
        return complex(value[0], value[1])
    raise ScenarioFormatError(
        f"expected a number or an [re, im] pair, got {value!r}"
    )


def parse_complex_array(data, shape: tuple[int, ...]) -> np.ndarray:
    """Parse nested JSON lists into a complex array of the given shape.

    Complex entries are [re, im] pairs; bare numbers are real.  A bare number
    is accepted as shorthand for any all-ones shape (scalar system data).
    """
    if not shape:
        return np.asarray(_parse_leaf(data))
    if isinstance(data, numbers.Real) and all(s == 1 for s in shape):
        return np.full(shape, complex(data, 0.0))
    if not isinstance(data, (list, tuple)):
        raise ScenarioFormatError(f"expected a list of length {shape[0]}, got {data!r}")
    # allow [re, im] for a length-1 axis whose element is a scalar leaf
    if (
        len(shape) == 1
        and shape[0] == 1
        and len(data) == 2
        and all(isinstance(v, numbers.Real) for v in data)
    ):
        return np.array([_parse_leaf(data)])
    if len(data) != shape[0]:
        raise ScenarioFormatError(
            f"expected a list of length {shape[0]}, got length {len(data)}"
        )
    out = np.empty(shape, dtype=complex)
    for i, item in enumerate(data):
        out[i] = parse_complex_array(item, shape[1:])
    return out


def function_from_json(data, period: float, shape: tuple[int, ...]) -> PeriodicFunction:
    """Build a coefficient function from its JSON description.

    Accepts either a bare value (number / nested list -> constant form) or an
    object ``{"form": ..., ...}`` with form-specific payload.
    """
    if isinstance(data, (numbers.Real, list, tuple)):
        return ConstantFunction(period, parse_complex_array(data, shape))
    if not isinstance(data, dict):
        raise ScenarioFormatError(f"cannot parse coefficient from {data!r}")
    form = data.get("form", "constant")
    if form == "constant":
        if "value" not in data:
            raise ScenarioFormatError("constant form requires a 'value' entry")
        return ConstantFunction(period, parse_complex_array(data["value"], shape))
    if form == "fourier":
        harmonics = data.get("harmonics")
        if not harmonics:
            raise ScenarioFormatError("fourier form requires a nonempty 'harmonics' list")
        terms = []
        for item in harmonics:
            if "k" not in item or "cos" not in item:
                raise ScenarioFormatError("each harmonic needs 'k' and 'cos' entries")
            cmat = parse_complex_array(item["cos"], shape)
            smat = (
                parse_complex_array(item["sin"], shape) if item.get("sin") is not None else None
            )
            terms.append((item["k"], cmat, smat))
        return FourierFunction(period, terms)
    if form == "grid":
        samples = data.get("samples")
        if not isinstance(samples, (list, tuple)) or len(samples) < 2:
            raise ScenarioFormatError("grid form requires a 'samples' list of length >= 2")
        parsed = np.stack([parse_complex_array(s, shape) for s in samples])
        return GridFunction(period, parsed)
    raise ScenarioFormatError(f"unknown coefficient form {form!r}")
