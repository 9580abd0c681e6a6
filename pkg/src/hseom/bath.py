"""Ohmic thermostat with a circular cutoff and its Bessel-function kernel expansion.

The two-time kernel is ``alpha(t) = alpha'(t) - i alpha''(t)`` with

    alpha'(t)  = int_0^nu dw J(w) coth(beta w / 2) cos(w t)
    alpha''(t) = int_0^nu dw J(w) sin(w t)

and ``J(w) = zeta w sqrt(1 - (w/nu)^2)``. The HSEOM use the expansion
``alpha(t) = sum_k c_k J_k(nu t)`` whose basis obeys ``dJ/dt = eta J``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

__all__ = [
    "BathSpec",
    "BathExpansion",
    "sdf_eval",
    "corr_exact",
    "bessel_coefficients",
    "derivative_matrix",
    "reconstruct_corr",
    "bessel_table",
    "QuadratureError",
    "expansion_residual",
    "check_expansion",
    "high_temperature_real",
]


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class BathSpec:
    """Thermostat parameters; ``beta = math.inf`` means zero temperature."""

    zeta: float
    nu: float
    beta: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "beta", _parse_beta(self.beta))
        if not self.zeta >= 0:
            raise ValueError(f"zeta must be >= 0, got {self.zeta}")
        if not self.nu > 0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0 or inf, got {self.beta}")

    @property
    def zero_temperature(self) -> bool:
        return math.isinf(self.beta)


def _parse_beta(beta) -> float:
    if isinstance(beta, str):
        if beta.strip().lower() in ("inf", "infinity"):
            return math.inf
        return float(beta)
    return float(beta)


def _thermal_factor(beta: float, w):
    """``w * coth(beta w / 2)`` with its finite w -> 0 limit ``2 / beta``."""
    w = np.asarray(w, dtype=float)
    if math.isinf(beta):
        return w.copy()
    x = 0.5 * beta * w
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 2.0 / beta, w / np.tanh(safe))


def sdf_eval(bath: BathSpec, omega):
    """Spectral density ``zeta w sqrt(1 - (w/nu)^2)`` on [0, nu], zero elsewhere."""
    w = np.asarray(omega, dtype=float)
    inside = (w >= 0) & (w <= bath.nu)
    r = np.where(inside, 1.0 - (w / bath.nu) ** 2, 0.0)
    out = np.where(inside, bath.zeta * w * np.sqrt(np.clip(r, 0.0, None)), 0.0)
    return out if out.ndim else float(out)


def corr_exact(bath: BathSpec, t: float, *, epsabs: float | None = None, epsrel: float = 1e-12,
               limit: int = 400) -> complex:
    """Kernel ``alpha(t)`` by adaptive quadrature over [0, nu].

    ``epsabs`` defaults to 1e-14 times the kernel scale ``zeta nu^2 max(1, 2/(beta nu))``.
    """
    t = float(t)
    if t < 0:
        raise ValueError("corr_exact needs t >= 0")
    if bath.zeta == 0:
        return 0j
    nu, zeta, beta = bath.nu, bath.zeta, bath.beta
    if epsabs is None:
        epsabs = 1e-14 * zeta * nu**2 * max(1.0, 2.0 / (beta * nu))

    def root(w):
        return zeta * math.sqrt(max(0.0, 1.0 - (w / nu) ** 2))

    def sym(w):
        return root(w) * float(_thermal_factor(beta, w))

    def asym(w):
        return root(w) * w

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if t == 0.0:
                re, err_re = integrate.quad(sym, 0.0, nu, epsabs=epsabs, epsrel=epsrel, limit=limit)
                im, err_im = 0.0, 0.0
            else:
                re, err_re = integrate.quad(sym, 0.0, nu, weight="cos", wvar=t,
                                            epsabs=epsabs, epsrel=epsrel, limit=limit)
                im, err_im = integrate.quad(asym, 0.0, nu, weight="sin", wvar=t,
                                            epsabs=epsabs, epsrel=epsrel, limit=limit)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"kernel quadrature did not converge at t={t}: {exc}") from exc
    return complex(re, -im)


def derivative_matrix(nu: float, K: int) -> np.ndarray:
    """Banded ``eta`` with ``d/dt J_k(nu t) = sum_k' eta[k, k'] J_k'(nu t)``; the J_K column is dropped."""
    if K < 2:
        raise ValueError("derivative_matrix needs K >= 2")
    eta = np.zeros((K, K))
    eta[0, 1] = -nu
    for k in range(1, K):
        eta[k, k - 1] = 0.5 * nu
        if k + 1 < K:
            eta[k, k + 1] = -0.5 * nu
    return eta


@dataclass(frozen=True)
class BathExpansion:
    """``alpha(t) ~ sum_{k<K} coeffs[k] J_k(nu t)`` plus the basis derivative matrix."""

    coeffs: np.ndarray
    eta: np.ndarray
    nu: float
    bath: BathSpec | None = None

    @property
    def n_terms(self) -> int:
        return int(self.coeffs.size)

    def phi0(self) -> np.ndarray:
        """Basis values at t = 0 (exactly the unit vector e_0)."""
        return special.jv(np.arange(self.n_terms), 0.0)


def bessel_coefficients(bath: BathSpec, K: int, n_nodes: int | None = None) -> BathExpansion:
    """Jacobi-Anger coefficients of the kernel in the basis J_k(nu t).

    With ``w = nu cos(theta)`` the symmetric part lands on even orders,

        Re c_2m = (2 - delta_m0) (-1)^m zeta nu^2
                  int_0^{pi/2} cos(th) sin(th)^2 coth(beta nu cos(th) / 2) cos(2 m th) dth,

    evaluated by Gauss-Legendre quadrature. The antisymmetric part is
    temperature independent and exact: ``alpha'' = (pi zeta nu^2 / 8)(J_1 + J_3)``,
    so ``c_1 = c_3 = -i pi zeta nu^2 / 8``.
    """
    if K < 4 or K % 2:
        raise ValueError(f"K must be an even integer >= 4, got {K}")
    nu, zeta = bath.nu, bath.zeta
    n_nodes = 4 * K if n_nodes is None else n_nodes
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    th = 0.25 * np.pi * (x + 1.0)
    w = 0.25 * np.pi * w
    cos_th = np.cos(th)
    # cos(th) coth(beta nu cos(th) / 2) == thermal_factor(nu cos th) / nu
    weight = w * _thermal_factor(bath.beta, nu * cos_th) / nu * np.sin(th) ** 2
    coeffs = np.zeros(K, dtype=np.complex128)
    for m in range(K // 2):
        val = np.dot(weight, np.cos(2 * m * th))
        coeffs[2 * m] = (1.0 if m == 0 else 2.0) * (-1.0) ** m * zeta * nu**2 * val
    anti = 0.125 * np.pi * zeta * nu**2
    coeffs[1] = -1j * anti
    coeffs[3] = -1j * anti
    return BathExpansion(coeffs, derivative_matrix(nu, K), nu, bath)


def bessel_table(K: int, x) -> np.ndarray:
    """``J_k(x)`` for k < K as an array of shape (K, *x.shape)."""
    x = np.asarray(x, dtype=float)
    k = np.arange(K).reshape((K,) + (1,) * x.ndim)
    return special.jv(k, x[None, ...])


def reconstruct_corr(exp: BathExpansion, t) -> np.ndarray | complex:
    """Evaluate ``sum_k c_k J_k(nu t)``."""
    t_arr = np.asarray(t, dtype=float)
    table = bessel_table(exp.n_terms, exp.nu * t_arr)
    out = np.tensordot(exp.coeffs, table, axes=(0, 0))
    return out if t_arr.ndim else complex(out)


def high_temperature_real(bath: BathSpec, t) -> np.ndarray:
    """Leading beta -> 0 form of alpha'(t): (pi zeta nu / 2 beta)(J_0 + J_2)."""
    x = bath.nu * np.asarray(t, dtype=float)
    return 0.5 * np.pi * bath.zeta * bath.nu / bath.beta * (special.jv(0, x) + special.jv(2, x))


def expansion_residual(exp: BathExpansion, t_max: float, n_points: int = 401) -> float:
    """Largest ``|reconstruct_corr - corr_exact|`` on a uniform grid over [0, t_max]."""
    if exp.bath is None:
        raise ValueError("expansion carries no BathSpec to compare against")
    ts = np.linspace(0.0, t_max, n_points)
    rec = reconstruct_corr(exp, ts)
    ref = np.array([corr_exact(exp.bath, t) for t in ts])
    return float(np.max(np.abs(rec - ref)))


def check_expansion(exp: BathExpansion, t_max: float, rtol: float = 1e-4) -> float:
    """Raise if the truncated expansion misses the kernel by more than ``rtol * |alpha'(0)|``."""
    scale = abs(corr_exact(exp.bath, 0.0)) if exp.bath is not None else 0.0
    res = expansion_residual(exp, t_max)
    if scale > 0 and res > rtol * scale:
        raise ValueError(f"K={exp.n_terms} leaves a kernel residual {res:.3g} over [0, {t_max}], "
                         f"above {rtol:g} x |alpha(0)| = {rtol * scale:.3g}; increase K")
    return res
