"""Brute-force references for validating the hierarchy solver.

Nothing here touches the hierarchy, the propagator or the Bessel expansion.
Operators are turned into dense matrices with Kronecker products of the
Pauli matrices, independently of the matrix-free ``apply_operator`` path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
from scipy import integrate

from .spin_model import OperatorRep

__all__ = [
    "OracleResult",
    "ORACLE_MAX_DIM",
    "dense_matrix",
    "schrodinger_reference",
    "reduced_density_reference",
    "heisenberg_correlator_reference",
    "independent_boson_coherence",
    "dephasing_exponent",
]

ORACLE_MAX_DIM = 2**8

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}
_ID = np.eye(2, dtype=np.complex128)


@dataclass(frozen=True)
class OracleResult:
    quantity: str
    grid: np.ndarray
    values: np.ndarray
    method: str  # "spectral propagation", "quadrature" or "dense matrix"


def _guard(dim: int):
    if dim > ORACLE_MAX_DIM:
        raise ValueError(f"oracle dimension {dim} exceeds the dense limit {ORACLE_MAX_DIM}")


def dense_matrix(op: OperatorRep | np.ndarray) -> np.ndarray:
    """Dense matrix of a Pauli-string sum; site 0 is the leading Kronecker factor."""
    if isinstance(op, np.ndarray):
        return op.astype(np.complex128)
    n = op.n_sites
    _guard(2**n)
    out = np.zeros((2**n, 2**n), dtype=np.complex128)
    for term in op.terms:
        local = [_ID] * n
        for site, axis in term.factors:
            local[site] = _PAULI[axis]
        out += term.coefficient * reduce(np.kron, local, np.ones((1, 1), dtype=np.complex128))
    return out


def _eig(H):
    h = dense_matrix(H)
    _guard(h.shape[0])
    if not np.allclose(h, h.conj().T, atol=1e-13):
        raise ValueError("oracle Hamiltonian is not Hermitian")
    return np.linalg.eigh(h)


def schrodinger_reference(H, psi0: np.ndarray, times) -> OracleResult:
    """``exp(-i H t) psi0`` by full diagonalization; ``psi0`` may carry a leading batch axis.

    Values have shape ``(T, *psi0.shape)``.
    """
    e, u = _eig(H)
    t = np.asarray(times, dtype=float)
    psi0 = np.asarray(psi0, dtype=np.complex128)
    coeff = psi0 @ u.conj()  # <m|psi0> along the last axis
    phases = np.exp(-1j * np.multiply.outer(t, e))  # (T, dim)
    if psi0.ndim == 1:
        vals = (phases * coeff) @ u.T
    else:
        vals = (phases[:, None, :] * coeff[None]) @ u.T
    return OracleResult("state", t, vals, "spectral propagation")


def reduced_density_reference(H, kets: np.ndarray, weights, times) -> OracleResult:
    """TLS density matrix (site 0 traced against the rest) of a weighted mixture of kets."""
    kets = np.atleast_2d(kets)
    w = np.asarray(weights, dtype=float)
    states = schrodinger_reference(H, kets, times).values  # (T, B, dim)
    T, B, dim = states.shape
    halves = states.reshape(T, B, 2, dim // 2)
    rho = np.einsum("b,tbac,tbdc->tad", w, halves, halves.conj())
    return OracleResult("reduced_density", np.asarray(times, float), rho, "spectral propagation")


def heisenberg_correlator_reference(H, rho0, operators: Sequence, times) -> OracleResult:
    """Multi-time trace ``tr{ O_m(t_m) ... O_1(t_1) rho0 }`` with ``O(t) = U(t)^+ O U(t)``.

    Parameters
    ----------
    H : OperatorRep or ndarray
    rho0 : ndarray or (weights, kets)
        Initial density matrix, or a mixture given as weights and a (B, dim) array of kets.
    operators : sequence of OperatorRep or ndarray
        ``[O_1, ..., O_m]``; ``O_1`` acts first on ``rho0``.
    times : array of shape (T, m)
        Row ``r`` holds ``t_1 ... t_m``.
    """
    e, u = _eig(H)
    ops = [u.conj().T @ dense_matrix(o) @ u for o in operators]
    t = np.atleast_2d(np.asarray(times, dtype=float))
    if t.shape[1] != len(ops):
        raise ValueError(f"times has {t.shape[1]} columns for {len(ops)} operators")
    if isinstance(rho0, tuple):
        w, kets = rho0
        w = np.asarray(w, dtype=float)
        kets = np.atleast_2d(np.asarray(kets, dtype=np.complex128))
    else:
        r = np.asarray(rho0, dtype=np.complex128)
        w, vecs = np.linalg.eigh(0.5 * (r + r.conj().T))
        keep = np.abs(w) > 1e-15
        w, kets = w[keep], vecs[:, keep].T
    chi = kets @ u.conj()  # (B, dim) in the eigenbasis
    out = np.zeros(t.shape[0], dtype=np.complex128)
    for row, ts in enumerate(t):
        v = chi * np.exp(-1j * e * ts[0])
        v = v @ ops[0].T
        for m in range(1, len(ops)):
            v = v * np.exp(-1j * e * (ts[m] - ts[m - 1]))
            v = v @ ops[m].T
        left = chi * np.exp(-1j * e * ts[-1])
        out[row] = np.sum(w * np.einsum("bi,bi->b", left.conj(), v))
    return OracleResult("correlator", t, out, "spectral propagation")


def dephasing_exponent(bath, times, *, epsabs: float = 1e-13, epsrel: float = 1e-11) -> np.ndarray:
    """``Gamma(t) = 4 int_0^t (t - s) alpha'(s) ds`` for the circular-cutoff Ohmic bath.

    After exchanging the time and frequency integrals this is
    ``4 int_0^nu J(w) coth(beta w / 2) (1 - cos w t) / w^2 dw``, evaluated here
    by adaptive quadrature with the spectral density written out inline.
    ``bath`` needs attributes ``zeta``, ``nu`` and ``beta`` (``inf`` allowed).
    """
    zeta, nu, beta = float(bath.zeta), float(bath.nu), float(bath.beta)
    t_arr = np.atleast_1d(np.asarray(times, dtype=float))
    if zeta == 0:
        return np.zeros_like(t_arr)

    def integrand(w, t):
        root = math.sqrt(max(0.0, 1.0 - (w / nu) ** 2))
        if w <= 0.0:
            return 0.0 if math.isinf(beta) else zeta * root * t * t / beta
        if math.isinf(beta):
            coth = 1.0
        else:
            x = 0.5 * beta * w
            coth = 1.0 / math.tanh(x) if x > 1e-8 else 1.0 / x
        # (1 - cos wt)/w = 2 sin^2(wt/2)/w, finite at w -> 0
        s = math.sin(0.5 * w * t)
        f = 2.0 * s * s / w
        return zeta * root * coth * f

    out = np.empty_like(t_arr)
    for i, t in enumerate(t_arr):
        if t == 0:
            out[i] = 0.0
            continue
        val, _ = integrate.quad(integrand, 0.0, nu, args=(t,), epsabs=epsabs, epsrel=epsrel,
                                limit=max(200, int(4 * nu * t)))
        out[i] = 4.0 * val
    return out


def independent_boson_coherence(bath, times) -> OracleResult:
    """Coherence ratio ``|<+|rho_S(t)|->| / |<+|rho_S(0)|->| = exp(-Gamma(t))``.

    Exact for a TLS whose sigma_z couples linearly to a Gaussian bath.
    """
    t = np.asarray(times, dtype=float)
    return OracleResult("coherence_ratio", t, np.exp(-dephasing_exponent(bath, t)), "quadrature")
