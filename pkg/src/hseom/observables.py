"""Echo, populations, correlators, their spectra and the FDT diagnostic."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

__all__ = [
    "SeriesKind",
    "ObservableSeries",
    "loschmidt",
    "population",
    "trace_health",
    "two_time_correlator",
    "three_time_correlator",
    "spectrum",
    "fdt_residual",
    "fdt_ratio",
]


class SeriesKind(str, enum.Enum):
    LOSCHMIDT_ECHO = "LoschmidtEcho"
    POPULATION = "Population"
    CORRELATOR_A = "CorrelatorA"
    CORRELATOR_C = "CorrelatorC"
    CORRELATOR_D = "CorrelatorD"
    SPECTRUM_C = "SpectrumC"
    SPECTRUM_A = "SpectrumA"
    FDT_RATIO = "FDTRatio"
    TRACE_HEALTH = "TraceHealth"


@dataclass
class ObservableSeries:
    kind: SeriesKind
    grid: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = SeriesKind(self.kind)
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.grid.shape != self.values.shape:
            raise ValueError(f"grid {self.grid.shape} and values {self.values.shape} differ in shape")
        if self.grid.size > 1 and np.any(np.diff(self.grid) <= 0):
            raise ValueError("series grid must be strictly increasing")

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def at(self, x: float) -> complex:
        i = int(np.argmin(np.abs(self.grid - x)))
        return complex(self.values[i])


def _as_rho(rho_s) -> np.ndarray:
    rho = np.asarray(rho_s)
    if rho.ndim != 3 or rho.shape[1:] != (2, 2):
        raise ValueError(f"expected a series of 2x2 density matrices, got shape {rho.shape}")
    return rho


def loschmidt(times, rho_s, **metadata) -> ObservableSeries:
    """``L(t) = |<+|rho_S(t)|->|^2 / |<+|rho_S(0)|->|^2``."""
    rho = _as_rho(rho_s)
    c = rho[:, 0, 1]
    c0 = abs(c[0])
    if c0 < 1e-14:
        raise ValueError("initial TLS coherence vanishes; the echo is undefined")
    return ObservableSeries(SeriesKind.LOSCHMIDT_ECHO, times, np.abs(c) ** 2 / c0**2, metadata)


def population(times, rho_s, state: str = "+", **metadata) -> ObservableSeries:
    """``<+|rho_S(t)|+>`` (or the ``-`` population), imaginary roundoff dropped."""
    rho = _as_rho(rho_s)
    i = {"+": 0, "-": 1}[state]
    return ObservableSeries(SeriesKind.POPULATION, times, rho[:, i, i].real,
                            {"state": state, **metadata})


def trace_health(times, traces, **metadata) -> ObservableSeries:
    return ObservableSeries(SeriesKind.TRACE_HEALTH, times, traces, metadata)


def two_time_correlator(times, forward, backward, **metadata):
    """Commutator and anticommutator correlators from the two operator orderings.

    Parameters
    ----------
    forward : array
        ``<sigma_j(t) sigma_k(0)>`` (insertion on the ket branch).
    backward : array
        ``<sigma_k(0) sigma_j(t)>`` (insertion on the bra branch).

    Returns
    -------
    A, C : ObservableSeries
        ``A = forward - backward``, ``C = (forward + backward)/2``. Their
        metadata carries ``hermiticity_residual = max |forward - conj(backward)|``.
    """
    f = np.asarray(forward, dtype=np.complex128)
    b = np.asarray(backward, dtype=np.complex128)
    herm = float(np.max(np.abs(f - b.conj()))) if f.size else 0.0
    meta = {**metadata, "hermiticity_residual": herm}
    A = ObservableSeries(SeriesKind.CORRELATOR_A, times, f - b, dict(meta))
    C = ObservableSeries(SeriesKind.CORRELATOR_C, times, 0.5 * (f + b), dict(meta))
    return A, C


def three_time_correlator(t_early, d_early, t_late, d_late, t_prime: float, **metadata) -> ObservableSeries:
    """Join ``D(t, t')`` from its ``t <= t'`` and ``t > t'`` pieces into one series."""
    t1 = np.asarray(t_early, dtype=float)
    t2 = np.asarray(t_late, dtype=float)
    if np.any(t1 > t_prime + 1e-12) or np.any(t2 <= t_prime):
        raise ValueError("early times must be <= t' and late times > t'")
    grid = np.concatenate([t1, t2])
    vals = np.concatenate([np.asarray(d_early, np.complex128), np.asarray(d_late, np.complex128)])
    return ObservableSeries(SeriesKind.CORRELATOR_D, grid, vals, {"t_prime": t_prime, **metadata})


def _uniform(t: np.ndarray, rtol: float = 1e-9) -> float:
    if t.size < 2:
        raise ValueError("spectrum needs at least two time samples")
    d = np.diff(t)
    h = float(d.mean())
    if np.max(np.abs(d - h)) > rtol * max(h, 1.0) * 10 or abs(t[0]) > 1e-12:
        raise ValueError("spectrum needs a uniform time grid starting at t = 0")
    return h


def spectrum(correlator, omegas, t_max: float | None = None, **metadata):
    """Finite-window cosine and sine transforms of ``X(t) = <sigma(t) sigma(0)>``.

    ``C[w] = 2 int_0^T cos(w t) Re X dt`` and ``A[w] = 4 int_0^T sin(w t) Im X dt`` by
    the composite trapezoid rule on the recorded grid. ``correlator`` is an
    ObservableSeries or a ``(times, values)`` pair. The finite window leaves
    ringing near w = 0, which is reported as is.
    """
    if isinstance(correlator, ObservableSeries):
        t, x = correlator.grid, correlator.values
    else:
        t, x = (np.asarray(a) for a in correlator)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=np.complex128)
    if t_max is not None:
        keep = t <= t_max + 1e-12
        t, x = t[keep], x[keep]
    _uniform(t)
    w = np.asarray(omegas, dtype=float)
    phase = np.multiply.outer(w, t)
    c = 2.0 * integrate.trapezoid(np.cos(phase) * x.real, t, axis=1)
    a = 4.0 * integrate.trapezoid(np.sin(phase) * x.imag, t, axis=1)
    meta = {"t_max": float(t[-1]), **metadata}
    return (ObservableSeries(SeriesKind.SPECTRUM_C, w, c, dict(meta)),
            ObservableSeries(SeriesKind.SPECTRUM_A, w, a, dict(meta)))


def _half_coth(beta: float, w: np.ndarray) -> np.ndarray:
    if math.isinf(beta):
        return 0.5 * np.sign(w)
    with np.errstate(divide="ignore"):
        return 0.5 / np.tanh(0.5 * beta * w)


def fdt_residual(c_spec: ObservableSeries, a_spec: ObservableSeries, beta: float,
                 omega_min: float = 0.0, **metadata) -> ObservableSeries:
    """Deviation from the fluctuation-dissipation relation, frequency by frequency.

    With the transforms of :func:`spectrum` (forward time evolution
    ``exp(-iHt)``) a Gaussian source gives ``C[w] = -coth(beta w/2) A[w] / 2``,
    so the residual is ``C + coth(beta w/2) A / 2``. Frequencies below
    ``omega_min`` are dropped to skip the finite-window artifact.
    """
    if not np.array_equal(c_spec.grid, a_spec.grid):
        raise ValueError("C and A spectra must share a frequency grid")
    w = c_spec.grid
    keep = np.abs(w) >= omega_min
    if not np.any(keep):
        raise ValueError("omega_min removes every frequency")
    w = w[keep]
    if np.any(w == 0):
        raise ValueError("omega = 0 must be excluded with omega_min > 0")
    res = c_spec.values[keep].real + _half_coth(beta, w) * a_spec.values[keep].real
    meta = {"beta": "inf" if math.isinf(beta) else beta, "omega_min": omega_min, **metadata}
    return ObservableSeries(SeriesKind.FDT_RATIO, w, res, meta)


fdt_ratio = fdt_residual
