"""Forward propagation of the paired ket/bra auxiliary wavefunctions.

For every hierarchy member ``n`` the ket and bra branches obey

    d phi_n/dt = -i H phi_n + sum_kk' eta_kk' n_k phi_{n-e_k+e_k'}
                 - i V [ sum_k c_k phi_{n+e_k} + sum_k n_k J_k(0) phi_{n-e_k} ]
    d psi_n/dt = -i H psi_n - sum_kk' eta_kk' (n_k+1) psi_{n+e_k-e_k'}
                 - i V [ sum_k c_k^* psi_{n-e_k} + sum_k (n_k+1) J_k(0) psi_{n+e_k} ]

and ``rho = sum_n |phi_n><psi_n|``. The bra branch runs the return leg of the
time contour, hence the opposite sign of its eta term; with it the trace
``sum_n <psi_n|phi_n>`` is a constant of motion.

Arrays are stored hierarchy-major as ``(2, n_aux, batch, dim)``: index 0 of
the first axis is the ket branch, 1 the bra branch. The batch axis holds
independent runs (thermal components, insertion variants) sharing H and V.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ._kernels import hseom_rhs, rk4_stage
from .bath import BathExpansion
from .hierarchy import OUTSIDE, HierarchySpace
from .spin_model import OperatorRep, apply_operator

__all__ = [
    "AWFSet",
    "HSEOMPropagator",
    "InsertionEvent",
    "InsertionSchedule",
    "NumericalError",
    "init_awfs",
    "insert_operator",
    "expectation",
    "reconstruct_density",
    "reduced_density",
    "trace",
    "normalize",
]

KET, BRA = 0, 1
_BRANCHES = {"ket": KET, "bra": BRA}


class NumericalError(RuntimeError):
    pass


@dataclass
class AWFSet:
    """Auxiliary wavefunctions for a batch of runs.

    ``energy_ref`` holds one real constant per run that is subtracted from H on
    both branches. It only changes a common phase, so density matrices and
    expectation values are unaffected, but it keeps the integrator error small
    for states far from zero energy.
    """

    data: np.ndarray
    time: float = 0.0
    step: int = 0
    energy_ref: np.ndarray | None = None

    def __post_init__(self):
        if self.data.ndim != 4 or self.data.shape[0] != 2:
            raise ValueError(f"AWF data must have shape (2, n_aux, batch, dim), got {self.data.shape}")
        if self.energy_ref is None:
            self.energy_ref = np.zeros(self.batch)

    @property
    def phi(self) -> np.ndarray:
        return self.data[KET]

    @property
    def psi(self) -> np.ndarray:
        return self.data[BRA]

    @property
    def n_aux(self) -> int:
        return self.data.shape[1]

    @property
    def batch(self) -> int:
        return self.data.shape[2]

    @property
    def dim(self) -> int:
        return self.data.shape[3]

    def copy(self) -> "AWFSet":
        return AWFSet(self.data.copy(), self.time, self.step, self.energy_ref.copy())


def init_awfs(space: HierarchySpace, initial_ket: np.ndarray, *, energy_ref=None,
              atol: float = 1e-10) -> AWFSet:
    """Root ket and bra set to the initial state(s); every other member zero.

    ``initial_ket`` is ``(dim,)`` or ``(batch, dim)``; each row must be normalized.
    """
    kets = np.atleast_2d(np.asarray(initial_ket, dtype=np.complex128))
    norms = np.linalg.norm(kets, axis=1)
    if np.any(np.abs(norms - 1.0) > atol):
        raise ValueError(f"initial state is not normalized (norms {norms})")
    batch, dim = kets.shape
    if dim & (dim - 1):
        raise ValueError(f"state dimension {dim} is not a power of two")
    data = np.zeros((2, space.size, batch, dim), dtype=np.complex128)
    data[KET, 0] = kets
    data[BRA, 0] = kets
    eref = np.zeros(batch) if energy_ref is None else np.broadcast_to(np.asarray(energy_ref, float), (batch,)).copy()
    return AWFSet(data, 0.0, 0, eref)


def _hierarchy_matrices(space: HierarchySpace, exp: BathExpansion, *, collapse_phi0: bool = True,
                        bra_eta_sign: float = -1.0):
    """Sparse couplings between members for both branches (rows: ket block then bra block)."""
    K = space.K
    if exp.n_terms != K:
        raise ValueError(f"expansion has {exp.n_terms} terms but the hierarchy K={K}")
    n = space.size
    eta = exp.eta
    c = exp.coeffs
    phi0 = exp.phi0()
    down_ks = [0] if collapse_phi0 else list(range(K))
    labels = space.labels
    eta_pairs = [(k, kp, eta[k, kp]) for k in range(K) for kp in range(K) if eta[k, kp] != 0 and k != kp]

    e_rows, e_cols, e_vals = [], [], []
    c_rows, c_cols, c_vals = [], [], []
    for i in range(n):
        lab = labels[i]
        # ket: eta n_k phi_{n-e_k+e_k'}
        for k, kp, val in eta_pairs:
            if lab[k] > 0:
                j = space.minus[i, k]
                j = space.plus[j, kp]
                if j != OUTSIDE:
                    e_rows.append(i); e_cols.append(j); e_vals.append(val * lab[k])
        # bra: -eta (n_k + 1) psi_{n+e_k-e_k'}
        for k, kp, val in eta_pairs:
            if lab[kp] > 0:
                j = space.minus[i, kp]
                j = space.plus[j, k]
                if j != OUTSIDE:
                    e_rows.append(n + i); e_cols.append(n + j); e_vals.append(bra_eta_sign * val * (lab[k] + 1))
        for k in range(K):
            up = space.plus[i, k]
            dn = space.minus[i, k]
            if up != OUTSIDE and c[k] != 0:
                c_rows.append(i); c_cols.append(up); c_vals.append(c[k])
            if dn != OUTSIDE and c[k] != 0:
                c_rows.append(n + i); c_cols.append(n + dn); c_vals.append(np.conj(c[k]))
        for k in down_ks:
            dn = space.minus[i, k]
            up = space.plus[i, k]
            if dn != OUTSIDE:
                c_rows.append(i); c_cols.append(dn); c_vals.append(lab[k] * phi0[k])
            if up != OUTSIDE:
                c_rows.append(n + i); c_cols.append(n + up); c_vals.append((lab[k] + 1) * phi0[k])
    shape = (2 * n, 2 * n)
    E = sp.csr_matrix((np.asarray(e_vals, dtype=np.complex128), (e_rows, e_cols)), shape=shape)
    C = sp.csr_matrix((np.asarray(c_vals, dtype=np.complex128), (c_rows, c_cols)), shape=shape)
    E.sort_indices()
    C.sort_indices()
    return E, C


class HSEOMPropagator:
    """Right-hand side and fixed-step RK4 integrator for the AWF hierarchy.

    Parameters
    ----------
    H : OperatorRep
        Hamiltonian of TLS plus chain.
    V : OperatorRep
        Thermostat coupling operator.
    expansion : BathExpansion
        Kernel coefficients ``c_k`` and derivative matrix ``eta``.
    space : HierarchySpace
        Enumerated hierarchy; ``space.K`` must equal ``expansion.n_terms``.
    collapse_phi0 : bool
        Keep only the k = 0 term of the ``J_k(0)`` sums (the others vanish).
    """

    def __init__(self, H: OperatorRep, V: OperatorRep, expansion: BathExpansion, space: HierarchySpace,
                 *, collapse_phi0: bool = True, bra_eta_sign: float = -1.0):
        if H.n_sites != V.n_sites:
            raise ValueError("H and V act on different registers")
        self.H = H
        self.V = V
        self.expansion = expansion
        self.space = space
        self.dim = H.dim
        self.E, self.C = _hierarchy_matrices(space, expansion, collapse_phi0=collapse_phi0,
                                             bra_eta_sign=bra_eta_sign)
        hc, vc = H.compiled, V.compiled
        h_real = bool(np.all(hc.coef.imag == 0))
        self._h = (np.ascontiguousarray(hc.masks), np.ascontiguousarray(hc.coef),
                   np.ascontiguousarray(hc.coef.real), h_real)
        self._v = (np.ascontiguousarray(vc.masks), np.ascontiguousarray(vc.coef))
        if np.any(self.E.data.imag != 0):
            raise ValueError("derivative couplings must be real")
        self._e = (self.E.indptr.astype(np.int64), self.E.indices.astype(np.int64),
                   np.ascontiguousarray(self.E.data.real))
        self._c = (self.C.indptr.astype(np.int64), self.C.indices.astype(np.int64), self.C.data)
        self._buffers: dict = {}

    # -- derivative ----------------------------------------------------------

    def _check(self, awfs: AWFSet):
        if awfs.n_aux != self.space.size or awfs.dim != self.dim:
            raise ValueError(f"AWF shape {awfs.data.shape} incompatible with hierarchy {self.space.size} "
                             f"and dimension {self.dim}")

    def rhs_array(self, data: np.ndarray, energy_ref: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        two, n_aux, batch, dim = data.shape
        x = data.reshape(two * n_aux, batch, dim)
        if out is None:
            out = np.empty_like(data)
        hseom_rhs(x, out.reshape(x.shape), *self._h, *self._v, *self._e, *self._c,
                  np.ascontiguousarray(energy_ref, dtype=np.float64))
        return out

    def rhs(self, awfs: AWFSet) -> np.ndarray:
        """Time derivative of every AWF, same shape as ``awfs.data``."""
        self._check(awfs)
        return self.rhs_array(awfs.data, awfs.energy_ref)

    def rhs_reference(self, awfs: AWFSet) -> np.ndarray:
        """Plain numpy/scipy evaluation of the same derivative, used to cross-check the kernel."""
        data = awfs.data
        two, n_aux, batch, dim = data.shape
        flat = data.reshape(two * n_aux, batch * dim)
        e_term = (self.E @ flat).reshape(data.shape)
        c_term = (self.C @ flat).reshape(data.shape)
        out = -1j * apply_operator(self.H, data) + e_term - 1j * apply_operator(self.V, c_term)
        out += 1j * awfs.energy_ref[None, None, :, None] * data
        return out

    # -- integration ---------------------------------------------------------

    def _buf(self, shape):
        bufs = self._buffers.get(shape)
        if bufs is None:
            bufs = tuple(np.empty(shape, dtype=np.complex128) for _ in range(3))
            self._buffers = {shape: bufs}
        return bufs

    def step(self, awfs: AWFSet, dt: float) -> AWFSet:
        """Advance in place by one classical RK4 step of size ``dt``."""
        if not dt > 0:
            raise ValueError("dt must be positive")
        self._check(awfs)
        two, n_aux, batch, dim = awfs.data.shape
        shape = (two * n_aux, batch, dim)
        y = awfs.data.reshape(shape)
        acc, a, b = self._buf(shape)
        ops = (*self._h, *self._v, *self._e, *self._c,
               np.ascontiguousarray(awfs.energy_ref, dtype=np.float64))
        rk4_stage(y, y, acc, a, dt / 6.0, 0.5 * dt, 0, *ops)
        rk4_stage(a, y, acc, b, dt / 3.0, 0.5 * dt, 1, *ops)
        rk4_stage(b, y, acc, a, dt / 3.0, dt, 1, *ops)
        rk4_stage(a, y, acc, a, dt / 6.0, 0.0, 2, *ops)
        awfs.step += 1
        awfs.time = awfs.step * dt
        return awfs

    def check_finite(self, awfs: AWFSet, limit: float = 1e150):
        amax = np.max(np.abs(awfs.data)) if awfs.data.size else 0.0
        if not np.isfinite(amax) or amax > limit:
            raise NumericalError(f"AWF amplitude overflow at t={awfs.time:g} (max |amplitude| = {amax:g}); "
                                 "reduce dt or check the hierarchy parameters")


# -- insertions ---------------------------------------------------------------


@dataclass(frozen=True)
class InsertionEvent:
    time: float
    branch: str
    operator: OperatorRep
    members: tuple[int, ...] | None = None  # batch members affected; None = all

    def __post_init__(self):
        if self.branch not in _BRANCHES:
            raise ValueError(f"branch must be 'ket' or 'bra', got {self.branch!r}")


@dataclass
class InsertionSchedule:
    events: list[InsertionEvent] = field(default_factory=list)

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: e.time)
        for e in self.events:
            if e.time < 0:
                raise ValueError(f"insertion time {e.time} is negative")

    def add(self, time: float, branch: str, operator: OperatorRep, members: Sequence[int] | None = None):
        if time < 0:
            raise ValueError(f"insertion time {time} is negative")
        self.events.append(InsertionEvent(float(time), branch, operator,
                                          None if members is None else tuple(int(m) for m in members)))
        self.events.sort(key=lambda e: e.time)
        return self

    def by_step(self, dt: float, t_max: float | None = None) -> dict[int, list[InsertionEvent]]:
        out: dict[int, list[InsertionEvent]] = {}
        for e in self.events:
            if t_max is not None and e.time > t_max + 1e-12:
                raise ValueError(f"insertion at t={e.time} lies beyond t_max={t_max}")
            s = e.time / dt
            step = int(round(s))
            if abs(s - step) > 1e-6:
                raise ValueError(f"insertion time {e.time} is not on the dt={dt} grid")
            out.setdefault(step, []).append(e)
        return out


def insert_operator(awfs: AWFSet, branch: str, op: OperatorRep, members: Sequence[int] | None = None) -> AWFSet:
    """Apply ``op`` to every ket AWF, or ``op``'s adjoint to every bra AWF, in place.

    Ket insertion maps rho -> op rho; bra insertion maps rho -> rho op.
    """
    if op.dim != awfs.dim:
        raise ValueError(f"operator dimension {op.dim} does not match AWF dimension {awfs.dim}")
    b = _BRANCHES[branch]
    target = op if b == KET else op.adjoint()
    if members is None:
        awfs.data[b] = apply_operator(target, awfs.data[b])
    else:
        idx = np.asarray(members, dtype=np.int64)
        awfs.data[b][:, idx] = apply_operator(target, awfs.data[b][:, idx])
    return awfs


# -- readout ------------------------------------------------------------------


def expectation(awfs: AWFSet, op: OperatorRep | None = None) -> np.ndarray:
    """``sum_n <psi_n|O|phi_n>`` for each run; ``op=None`` gives the trace."""
    phi = awfs.phi
    if op is not None:
        phi = apply_operator(op, phi)
    # member by member, so values do not depend on how runs are batched
    return np.array([np.vdot(awfs.psi[:, b].ravel(), phi[:, b].ravel()) for b in range(awfs.batch)],
                    dtype=np.complex128)


def trace(awfs: AWFSet) -> np.ndarray:
    return expectation(awfs, None)


def reconstruct_density(awfs: AWFSet) -> np.ndarray:
    """Full density matrix ``sum_n |phi_n><psi_n|`` per run, shape (batch, dim, dim)."""
    return np.einsum("nbi,nbj->bij", awfs.phi, awfs.psi.conj())


def reduced_density(awfs: AWFSet) -> np.ndarray:
    """TLS density matrix per run from the upper/lower halves of the AWFs, shape (batch, 2, 2).

    The TLS is the most significant bit, so the first half of each AWF is the
    ``|+>`` block and the second half the ``|->`` block.
    """
    n, b, d = awfs.phi.shape
    phi = awfs.phi.reshape(n, b, 2, d // 2)
    psi = awfs.psi.reshape(n, b, 2, d // 2)
    out = np.empty((b, 2, 2), dtype=np.complex128)
    for m in range(b):
        out[m] = np.einsum("nac,ndc->ad", phi[:, m], psi[:, m].conj())
    return out


def normalize(rho: np.ndarray, health: list | None = None) -> np.ndarray:
    """Divide a density matrix (or stack of them) by its trace.

    The pre-normalization trace is appended to ``health`` when given.
    """
    tr = np.trace(rho, axis1=-2, axis2=-1)
    if np.any(np.abs(tr) < 1e-300) or not np.all(np.isfinite(tr)):
        raise NumericalError("vanishing or non-finite trace; the hierarchy has blown up or dt is too large")
    if health is not None:
        health.append(tr)
    return rho / tr[..., None, None]
