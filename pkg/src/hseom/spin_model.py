"""Spin Hamiltonians as Pauli-string sums and their matrix-free action.

Register convention: site 0 is the most significant bit of a basis index.
In the full TLS + chain register site 0 is the TLS and sites 1..N are the
chain. Bit value 0 is spin up (sigma^z = +1, the ``|+>`` state of the TLS),
and ``sigma^y |up> = i |down>``. Units are hbar = omega0 = 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "CouplingKind",
    "SpinSystemSpec",
    "PauliString",
    "OperatorRep",
    "pauli",
    "build_system_hamiltonian",
    "build_chain_hamiltonian",
    "build_coupling_operator",
    "chain_magnetization",
    "apply_operator",
    "exact_diagonalize",
    "Spectrum",
    "MAX_ED_DIM",
]

MAX_ED_DIM = 2**14
DEGENERACY_RTOL = 1e-7


class CouplingKind(str, enum.Enum):
    DIAGONAL = "Diagonal"
    OFF_DIAGONAL = "OffDiagonal"
    DIRECT_TLS = "DirectTLS"
    NONE = "None"


@dataclass(frozen=True)
class SpinSystemSpec:
    """TLS + open XXZ chain parameters, frequencies in units of omega0.

    ``coupled_sites`` uses chain numbering 1..N. ``n_spins`` may be 0 only
    for the ``DirectTLS`` validation mode (a bare TLS register).
    """

    n_spins: int
    delta: float = 1.0
    j_coupling: float = 1.0
    epsilon0: float = 1.0
    coupling_kind: CouplingKind = CouplingKind.DIAGONAL
    coupled_sites: tuple[int, ...] = ()
    omega0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coupling_kind", CouplingKind(self.coupling_kind))
        object.__setattr__(self, "coupled_sites", tuple(int(s) for s in self.coupled_sites))
        self.validate()

    @classmethod
    def centered(cls, n_spins: int, **kwargs) -> "SpinSystemSpec":
        """TLS coupled to the single central spin, j1 = (N + 1) // 2."""
        return cls(n_spins=n_spins, coupled_sites=((n_spins + 1) // 2,), **kwargs)

    def validate(self) -> None:
        kind = self.coupling_kind
        min_spins = 0 if kind is CouplingKind.DIRECT_TLS else 1
        if self.n_spins < min_spins:
            raise ValueError(f"n_spins must be >= {min_spins}, got {self.n_spins}")
        if self.omega0 != 1.0:
            raise ValueError("omega0 is the frequency unit and must equal 1")
        sites = self.coupled_sites
        if kind in (CouplingKind.DIAGONAL, CouplingKind.OFF_DIAGONAL) and not sites:
            raise ValueError("coupled_sites must be nonempty for chain coupling")
        if len(set(sites)) != len(sites):
            raise ValueError(f"coupled_sites contains duplicates: {sites}")
        for s in sites:
            if not 1 <= s <= self.n_spins:
                raise ValueError(f"coupled_sites entry {s} outside 1..{self.n_spins}")

    @property
    def n_sites(self) -> int:
        return self.n_spins + 1

    @property
    def dim(self) -> int:
        return 2 ** (self.n_spins + 1)


@dataclass(frozen=True)
class PauliString:
    """Coefficient times a product of single-site Pauli matrices."""

    factors: tuple[tuple[int, str], ...]
    coefficient: complex = 1.0

    def __post_init__(self):
        factors = tuple(sorted((int(s), str(a)) for s, a in self.factors))
        sites = [s for s, _ in factors]
        if len(set(sites)) != len(sites):
            raise ValueError(f"repeated site in Pauli string: {factors}")
        for s, a in factors:
            if a not in ("x", "y", "z"):
                raise ValueError(f"unknown Pauli axis {a!r}")
            if s < 0:
                raise ValueError(f"negative site index {s}")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    def masks(self, n_sites: int) -> tuple[int, int, int]:
        """Return ``(flip_mask, phase_mask, n_y)`` on an ``n_sites`` register."""
        flip = phase = n_y = 0
        for s, a in self.factors:
            if s >= n_sites:
                raise ValueError(f"site {s} outside a {n_sites}-site register")
            bit = 1 << (n_sites - 1 - s)
            if a in ("x", "y"):
                flip |= bit
            if a in ("z", "y"):
                phase |= bit
            n_y += a == "y"
        return flip, phase, n_y

    def scaled(self, factor: complex) -> "PauliString":
        return PauliString(self.factors, self.coefficient * factor)


def pauli(coefficient: complex, *factors: tuple[int, str]) -> PauliString:
    return PauliString(tuple(factors), coefficient)


def _popcount_parity(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    parity = np.zeros_like(x)
    while np.any(x):
        parity ^= x & 1
        x >>= 1
    return parity


@dataclass(frozen=True)
class _Compiled:
    """Terms grouped by flip mask: ``(O v)[j] = sum_g coef[g, j] v[j ^ mask[g]]``."""

    masks: np.ndarray  # (G,) int64
    coef: np.ndarray  # (G, dim) complex128, evaluated at the target index
    gather: np.ndarray  # (G, dim) int64, j ^ mask[g]


@dataclass(frozen=True)
class OperatorRep:
    """Sum of Pauli strings acting on an ``n_sites`` qubit register."""

    terms: tuple[PauliString, ...]
    n_sites: int
    hermitian_flag: bool = False

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.hermitian_flag and not self.is_hermitian():
            raise ValueError("operator flagged Hermitian has non-real canonical coefficients")

    @property
    def dim(self) -> int:
        return 2**self.n_sites

    @classmethod
    def identity(cls, n_sites: int) -> "OperatorRep":
        return cls((PauliString((), 1.0),), n_sites, True)

    @classmethod
    def single(cls, n_sites: int, site: int, axis: str, coefficient: complex = 1.0) -> "OperatorRep":
        term = PauliString(((site, axis),), coefficient)
        return cls((term,), n_sites, np.imag(coefficient) == 0)

    def canonical(self) -> dict[tuple[int, int], complex]:
        """Map ``(flip, phase)`` masks to the coefficient of the Hermitian Pauli string.

        A string with ``n_y`` factors of y equals ``i**n_y X^flip Z^phase``; the
        returned coefficient multiplies the Hermitian product of Paulis itself.
        """
        out: dict[tuple[int, int], complex] = {}
        for t in self.terms:
            flip, phase, _ = t.masks(self.n_sites)
            out[(flip, phase)] = out.get((flip, phase), 0.0) + t.coefficient
        return {k: v for k, v in out.items() if v != 0}

    def is_hermitian(self, atol: float = 0.0) -> bool:
        return all(abs(c.imag) <= atol for c in self.canonical().values())

    def adjoint(self) -> "OperatorRep":
        terms = tuple(PauliString(t.factors, np.conj(t.coefficient)) for t in self.terms)
        return OperatorRep(terms, self.n_sites, self.hermitian_flag)

    def __add__(self, other: "OperatorRep") -> "OperatorRep":
        if other.n_sites != self.n_sites:
            raise ValueError("register size mismatch")
        return OperatorRep(self.terms + other.terms, self.n_sites,
                           self.hermitian_flag and other.hermitian_flag)

    def scaled(self, factor: complex) -> "OperatorRep":
        herm = self.hermitian_flag and np.imag(factor) == 0
        return OperatorRep(tuple(t.scaled(factor) for t in self.terms), self.n_sites, herm)

    @cached_property
    def compiled(self) -> _Compiled:
        dim = self.dim
        idx = np.arange(dim, dtype=np.int64)
        groups: dict[int, np.ndarray] = {}
        for t in self.terms:
            if t.coefficient == 0:
                continue
            flip, phase, n_y = t.masks(self.n_sites)
            # Z^phase acts first, then the flips; i**n_y completes y = i x z.
            src = idx ^ flip
            sign = 1.0 - 2.0 * _popcount_parity(src & phase)
            contrib = (t.coefficient * (1j**n_y)) * sign
            if flip in groups:
                groups[flip] = groups[flip] + contrib
            else:
                groups[flip] = contrib.astype(np.complex128)
        masks = np.array(sorted(groups), dtype=np.int64)
        if masks.size == 0:
            coef = np.zeros((0, dim), dtype=np.complex128)
        else:
            coef = np.stack([groups[m] for m in masks]).astype(np.complex128)
        gather = idx[None, :] ^ masks[:, None]
        return _Compiled(masks, coef, gather)

    def to_sparse(self) -> sp.csr_matrix:
        c = self.compiled
        dim = self.dim
        rows = np.tile(np.arange(dim), len(c.masks))
        cols = c.gather.ravel()
        mat = sp.coo_matrix((c.coef.ravel(), (rows, cols)), shape=(dim, dim)).tocsr()
        # XX + YY cancels exactly on aligned pairs; drop the stored zeros
        mat.sum_duplicates()
        mat.eliminate_zeros()
        return mat


def apply_operator(op: OperatorRep, v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Return ``op @ v`` along the last axis of ``v`` without forming a matrix.

    Cost is one gather and one multiply-add per distinct flip mask.
    """
    v = np.asarray(v)
    if v.shape[-1] != op.dim:
        raise ValueError(f"state dimension {v.shape[-1]} does not match operator dimension {op.dim}")
    c = op.compiled
    if out is None:
        out = np.zeros(v.shape, dtype=np.result_type(v.dtype, np.complex128))
    else:
        out[...] = 0
    for g in range(len(c.masks)):
        if c.masks[g] == 0:
            out += c.coef[g] * v
        else:
            out += c.coef[g] * np.take(v, c.gather[g], axis=-1)
    return out


# -- model Hamiltonians -------------------------------------------------------


def _xxz_terms(n_sites: int, first: int, n_spins: int, j_coupling: float, delta: float):
    terms = []
    pref = -0.5 * j_coupling
    for a in range(first, first + n_spins - 1):
        b = a + 1
        terms.append(pauli(pref, (a, "x"), (b, "x")))
        terms.append(pauli(pref, (a, "y"), (b, "y")))
        terms.append(pauli(pref * delta, (a, "z"), (b, "z")))
    return terms


def build_chain_hamiltonian(spec: SpinSystemSpec) -> OperatorRep:
    """XXZ chain Hamiltonian on the chain-only register (chain site j -> register site j - 1)."""
    terms = _xxz_terms(spec.n_spins, 0, spec.n_spins, spec.j_coupling, spec.delta)
    return OperatorRep(tuple(terms), spec.n_spins, True)


def build_system_hamiltonian(spec: SpinSystemSpec, parts: Iterable[str] = ("S", "S-SE", "SE")) -> OperatorRep:
    """Return H_S + H_{S-SE} + H_SE on the full register.

    ``parts`` selects a subset, e.g. ``("SE",)`` for the chain term alone.
    """
    parts = set(parts)
    unknown = parts - {"S", "S-SE", "SE"}
    if unknown:
        raise ValueError(f"unknown Hamiltonian parts: {sorted(unknown)}")
    n = spec.n_sites
    terms: list[PauliString] = []
    if "S" in parts:
        terms.append(pauli(-0.5 * spec.omega0, (0, "z")))
    if "S-SE" in parts:
        g = -0.5 * spec.epsilon0
        if spec.coupling_kind is CouplingKind.DIAGONAL:
            terms += [pauli(g, (0, "z"), (j, "z")) for j in spec.coupled_sites]
        elif spec.coupling_kind is CouplingKind.OFF_DIAGONAL:
            for j in spec.coupled_sites:
                terms.append(pauli(g, (0, "x"), (j, "x")))
                terms.append(pauli(g, (0, "y"), (j, "y")))
    if "SE" in parts:
        terms += _xxz_terms(n, 1, spec.n_spins, spec.j_coupling, spec.delta)
    return OperatorRep(tuple(terms), n, True)


def build_coupling_operator(spec: SpinSystemSpec) -> OperatorRep:
    """Thermostat coupling: sum_k (sigma_k^x + sigma_k^y) over the chain, or sigma_0^z for DirectTLS."""
    n = spec.n_sites
    if spec.coupling_kind is CouplingKind.DIRECT_TLS:
        return OperatorRep((pauli(1.0, (0, "z")),), n, True)
    terms = []
    for k in range(1, spec.n_spins + 1):
        terms.append(pauli(1.0, (k, "x")))
        terms.append(pauli(1.0, (k, "y")))
    return OperatorRep(tuple(terms), n, True)


def chain_magnetization(spec: SpinSystemSpec, register: str = "full") -> OperatorRep:
    if register == "full":
        return OperatorRep(tuple(pauli(1.0, (k, "z")) for k in range(1, spec.n_spins + 1)), spec.n_sites, True)
    if register == "chain":
        return OperatorRep(tuple(pauli(1.0, (k, "z")) for k in range(spec.n_spins)), spec.n_spins, True)
    raise ValueError(f"unknown register {register!r}")


# -- exact diagonalization ----------------------------------------------------


@dataclass
class Spectrum:
    """Full eigendecomposition with energies ascending.

    ``levels`` lists index ranges ``(start, stop)`` of degenerate groups.
    """

    energies: np.ndarray
    vectors: np.ndarray | None  # columns are eigenvectors; None when not requested
    levels: list[tuple[int, int]] = field(default_factory=list)
    n_blocks: int = 1

    @property
    def ground_degeneracy(self) -> int:
        start, stop = self.levels[0]
        return stop - start


def group_levels(energies: np.ndarray, rtol: float = DEGENERACY_RTOL) -> list[tuple[int, int]]:
    """Group sorted energies whose neighbouring gap is below ``rtol`` times the spectral range."""
    if energies.size == 0:
        return []
    span = float(energies[-1] - energies[0])
    tol = rtol * max(span, 1.0)
    levels = []
    start = 0
    for i in range(1, energies.size):
        if energies[i] - energies[i - 1] > tol:
            levels.append((start, i))
            start = i
    levels.append((start, energies.size))
    return levels


def exact_diagonalize(op: OperatorRep, dim: int | None = None, *, rtol: float = DEGENERACY_RTOL,
                      max_dim: int = MAX_ED_DIM, vectors: bool = True) -> Spectrum:
    """Diagonalize a Hermitian operator block by block.

    Blocks are the connected components of the operator's sparsity graph, which
    for the XXZ chain are (unions of) fixed-magnetization sectors.
    """
    dim = op.dim if dim is None else dim
    if dim != op.dim:
        raise ValueError(f"dim {dim} does not match operator dimension {op.dim}")
    if dim > max_dim:
        raise ValueError(f"dimension {dim} exceeds the diagonalization limit {max_dim}")
    if not op.is_hermitian(atol=1e-14):
        raise ValueError("exact_diagonalize requires a Hermitian operator")
    mat = op.to_sparse()
    pattern = sp.csr_matrix((np.ones(mat.nnz), mat.indices, mat.indptr), shape=mat.shape)
    n_blocks, labels = connected_components(pattern, directed=False)
    energies = np.empty(dim)
    want_vectors = vectors
    vectors = np.zeros((dim, dim), dtype=np.complex128) if want_vectors else None
    pos = 0
    for b in range(n_blocks):
        idx = np.flatnonzero(labels == b)
        block = mat[idx][:, idx].toarray()
        if np.allclose(block.imag, 0.0, atol=0.0):
            block = block.real
        n = idx.size
        if want_vectors:
            w, u = np.linalg.eigh(block)
            vectors[idx, pos:pos + n] = u
        else:
            w = np.linalg.eigvalsh(block)
        energies[pos:pos + n] = w
        pos += n
    order = np.argsort(energies, kind="stable")
    energies = energies[order]
    if want_vectors:
        vectors = vectors[:, order]
    return Spectrum(energies, vectors, group_levels(energies, rtol), n_blocks)


def random_state(dim: int, rng: np.random.Generator, batch: Sequence[int] = ()) -> np.ndarray:
    v = rng.normal(size=(*batch, dim)) + 1j * rng.normal(size=(*batch, dim))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)
