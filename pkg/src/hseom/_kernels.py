"""Compiled inner loops of the hierarchy right-hand side and the RK4 stages."""

import numba as nb
import numpy as np

# TBB builds on some systems are too old for numba; prefer OpenMP.
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@nb.njit(cache=True)
def _row_derivative(x, r, b, k, tmp_c, h_masks, h_coef, h_re, h_real, v_masks, v_coef,
                    e_ptr, e_idx, e_val, c_ptr, c_idx, c_val, shift):
    """k = -i H x[r,b] + (E x)[r,b] - i V (C x)[r,b] + shift x[r,b]."""
    dim = x.shape[2]
    xr = x[r, b]
    for j in range(dim):
        k[j] = shift * xr[j]
    for p in range(e_ptr[r], e_ptr[r + 1]):
        xs = x[e_idx[p], b]
        val = e_val[p]  # real: eta times occupation numbers
        for j in range(dim):
            v = xs[j]
            k[j] += complex(val * v.real, val * v.imag)
    if h_real:
        # real H (the usual case) needs half the multiplications
        for g in range(h_masks.shape[0]):
            m = h_masks[g]
            cg = h_re[g]
            for j in range(dim):
                v = xr[j ^ m]
                k[j] += complex(cg[j] * v.imag, -cg[j] * v.real)
    else:
        for g in range(h_masks.shape[0]):
            m = h_masks[g]
            cg = h_coef[g]
            for j in range(dim):
                k[j] += -1j * cg[j] * xr[j ^ m]
    if c_ptr[r + 1] > c_ptr[r]:
        for j in range(dim):
            tmp_c[j] = 0.0
        for p in range(c_ptr[r], c_ptr[r + 1]):
            xs = x[c_idx[p], b]
            val = c_val[p]
            for j in range(dim):
                tmp_c[j] += val * xs[j]
        for g in range(v_masks.shape[0]):
            m = v_masks[g]
            cg = v_coef[g]
            for j in range(dim):
                k[j] += -1j * cg[j] * tmp_c[j ^ m]


@nb.njit(parallel=True, cache=True)
def hseom_rhs(x, out, h_masks, h_coef, h_re, h_real, v_masks, v_coef,
              e_ptr, e_idx, e_val, c_ptr, c_idx, c_val, e_ref):
    """out[r, b] = -i H x[r, b] + (E x)[r, b] - i V (C x)[r, b] + i e_ref[b] x[r, b].

    ``x`` has shape (rows, batch, dim) with rows = both branches of the
    hierarchy; E and C are CSR matrices over rows.
    """
    n_rows, n_batch, dim = x.shape
    for r in nb.prange(n_rows):
        tmp_c = np.empty(dim, dtype=np.complex128)
        for b in range(n_batch):
            _row_derivative(x, r, b, out[r, b], tmp_c, h_masks, h_coef, h_re, h_real, v_masks, v_coef,
                            e_ptr, e_idx, e_val, c_ptr, c_idx, c_val, 1j * e_ref[b])
    return out


@nb.njit(parallel=True, cache=True)
def rk4_stage(x, y, acc, nxt, w_acc, c_next, mode, h_masks, h_coef, h_re, h_real, v_masks, v_coef,
              e_ptr, e_idx, e_val, c_ptr, c_idx, c_val, e_ref):
    """One RK4 stage with the combination step fused in.

    With k = f(x):
      mode 0: acc = w_acc k;  nxt = y + c_next k
      mode 1: acc += w_acc k; nxt = y + c_next k
      mode 2: y += acc + w_acc k
    Row r of ``y`` is only read for row r, so mode 2 may update it in place.
    """
    n_rows, n_batch, dim = x.shape
    for r in nb.prange(n_rows):
        tmp_c = np.empty(dim, dtype=np.complex128)
        k = np.empty(dim, dtype=np.complex128)
        for b in range(n_batch):
            _row_derivative(x, r, b, k, tmp_c, h_masks, h_coef, h_re, h_real, v_masks, v_coef,
                            e_ptr, e_idx, e_val, c_ptr, c_idx, c_val, 1j * e_ref[b])
            yr = y[r, b]
            ar = acc[r, b]
            if mode == 2:
                for j in range(dim):
                    yr[j] += ar[j] + w_acc * k[j]
            else:
                nr = nxt[r, b]
                if mode == 0:
                    for j in range(dim):
                        ar[j] = w_acc * k[j]
                        nr[j] = yr[j] + c_next * k[j]
                else:
                    for j in range(dim):
                        ar[j] += w_acc * k[j]
                        nr[j] = yr[j] + c_next * k[j]
