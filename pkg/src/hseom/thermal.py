"""Initial states: TLS superposition times a Boltzmann mixture of chain eigenstates.

The chain is prepared without the TLS coupling. Its mixed state is split into
pure eigenstate runs whose results are summed with Boltzmann weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spin_model import DEGENERACY_RTOL, OperatorRep, Spectrum, exact_diagonalize

__all__ = [
    "ThermalComponent",
    "ground_manifold",
    "thermal_components",
    "assemble_runs",
    "default_tls_state",
    "preparation_report",
]


@dataclass(frozen=True)
class ThermalComponent:
    energy: float
    level: int  # index of the degenerate level, 0 = ground
    label: int  # position inside the level
    weight: float
    chain_state: np.ndarray | None


def default_tls_state() -> np.ndarray:
    """``(|+> + |->)/sqrt(2)``."""
    return np.array([1.0, 1.0], dtype=np.complex128) / math.sqrt(2.0)


def _spectrum(h, vectors: bool = True) -> Spectrum:
    if isinstance(h, Spectrum):
        if vectors and h.vectors is None:
            raise ValueError("spectrum was computed without eigenvectors")
        return h
    return exact_diagonalize(h, vectors=vectors)


def ground_manifold(h_se: OperatorRep | Spectrum, tol: float | None = None) -> list[np.ndarray]:
    """Chain eigenvectors within ``tol`` of the minimum energy.

    The default tolerance is the degeneracy grouping used by ``exact_diagonalize``.
    """
    spec = _spectrum(h_se)
    if tol is None:
        start, stop = spec.levels[0]
    else:
        stop = int(np.searchsorted(spec.energies, spec.energies[0] + tol, side="right"))
        start = 0
    return [spec.vectors[:, i].copy() for i in range(start, stop)]


def _retained_levels(spec: Spectrum, beta: float, retention: float) -> tuple[int, np.ndarray]:
    """Number of states kept and the unnormalized weights ``exp(-beta (e - e0))``."""
    e = spec.energies
    if math.isinf(beta):
        w = np.zeros(e.size)
        start, stop = spec.levels[0]
        w[start:stop] = 1.0
        return stop, w
    w = np.exp(-beta * (e - e[0]))
    z = w.sum()
    target = retention * z
    cum = 0.0
    for start, stop in spec.levels:
        cum += w[start:stop].sum()
        # relative slack absorbs roundoff when retention = 1
        if cum >= target * (1.0 - 1e-14):
            return stop, w
    return e.size, w


def thermal_components(h_se: OperatorRep | Spectrum, beta: float, retention: float = 0.99, *,
                       vectors: bool = True) -> list[ThermalComponent]:
    """Boltzmann-weighted chain eigenstates under the partition-function truncation.

    Levels are added in order of increasing energy, each degenerate level as a
    whole, until the kept weight reaches ``retention`` of the partition
    function. Weights are ``exp(-beta e)/Z`` with Z over all states, so the kept
    weights sum to at least ``retention``. At ``beta = inf`` the ground level is
    kept with equal weights.
    """
    if not 0.0 < retention <= 1.0:
        raise ValueError(f"retention must lie in (0, 1], got {retention}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    spec = _spectrum(h_se, vectors)
    n_keep, w = _retained_levels(spec, beta, retention)
    w = w / w.sum()
    out = []
    for level, (start, stop) in enumerate(spec.levels):
        if start >= n_keep:
            break
        for i in range(start, stop):
            vec = spec.vectors[:, i].copy() if vectors else None
            out.append(ThermalComponent(float(spec.energies[i]), level, i - start, float(w[i]), vec))
    return out


def assemble_runs(components: list[ThermalComponent], tls_state: np.ndarray | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Product initial states ``tls (x) chain`` (TLS is the leading factor) and their weights."""
    tls = default_tls_state() if tls_state is None else np.asarray(tls_state, dtype=np.complex128)
    if tls.shape != (2,) or abs(np.linalg.norm(tls) - 1.0) > 1e-10:
        raise ValueError("TLS state must be a normalized 2-vector")
    if not components:
        raise ValueError("no thermal components to assemble")
    if any(c.chain_state is None for c in components):
        raise ValueError("components were prepared without chain states")
    kets = np.stack([np.kron(tls, c.chain_state) for c in components])
    weights = np.array([c.weight for c in components])
    return kets, weights


def preparation_report(h_se: OperatorRep | Spectrum, beta: float, retention: float = 0.99) -> dict:
    """Summary of the chain spectrum and the truncation, JSON-serializable."""
    spec = _spectrum(h_se, vectors=False)
    n_keep, w = _retained_levels(spec, beta, retention)
    z = w.sum()
    return {
        "n_states": int(spec.energies.size),
        "n_levels": len(spec.levels),
        "n_blocks": int(spec.n_blocks),
        "ground_energy": float(spec.energies[0]),
        "ground_degeneracy": int(spec.ground_degeneracy),
        "spectral_range": [float(spec.energies[0]), float(spec.energies[-1])],
        "beta": "inf" if math.isinf(beta) else float(beta),
        "retention": float(retention),
        "retained_states": int(n_keep),
        "retained_weight": float(w[:n_keep].sum() / z),
        "degeneracy_rtol": DEGENERACY_RTOL,
    }
