import math

import numpy as np
import pytest
from scipy import optimize, special

from hseom.bath import (BathSpec, bessel_coefficients, check_expansion, corr_exact, derivative_matrix,
                        expansion_residual, high_temperature_real, reconstruct_corr, sdf_eval)


def test_spectral_density_edges():
    b = BathSpec(0.01, 2.0, 2.0)
    assert sdf_eval(b, 0.0) == 0.0
    assert sdf_eval(b, 2.0) == 0.0
    assert sdf_eval(b, 3.0) == 0.0


def test_spectral_density_maximum():
    b = BathSpec(0.3, 2.0)
    res = optimize.minimize_scalar(lambda w: -sdf_eval(b, w), bounds=(0, 2), method="bounded",
                                   options={"xatol": 1e-10})
    assert res.x == pytest.approx(2.0 / math.sqrt(2.0), abs=1e-6)
    assert -res.fun == pytest.approx(0.3 * 2.0 / 2.0, rel=1e-10)


@pytest.mark.parametrize("beta", [2.0, math.inf, 0.5])
def test_antisymmetric_part_closed_form(beta):
    b = BathSpec(0.01, 2.0, beta)
    for t in (0.0, 0.3, 1.7, 6.0, 13.0):
        # alpha = alpha' - i alpha''
        expected = math.pi * 0.01 * 4.0 / 8.0 * (special.jv(1, 2 * t) + special.jv(3, 2 * t))
        assert -corr_exact(b, t).imag == pytest.approx(expected, abs=1e-13)


def test_coefficients_odd_and_zero():
    b = BathSpec(0.01, 2.0, 2.0)
    exp = bessel_coefficients(b, 20)
    anti = math.pi * 0.01 * 4.0 / 8.0
    assert abs(exp.coeffs[1].imag) == pytest.approx(anti)
    assert abs(exp.coeffs[3].imag) == pytest.approx(anti)
    assert np.all(exp.coeffs[5::2] == 0)
    assert np.all(exp.coeffs[0::2].imag == 0)
    z = bessel_coefficients(BathSpec(0.0, 2.0, 2.0), 20)
    assert np.all(z.coeffs == 0)


def test_high_temperature_coefficients():
    beta = 0.01
    b = BathSpec(0.01, 2.0, beta)
    c = bessel_coefficients(b, 20).coeffs
    lead = math.pi * 0.01 * 2.0 / (2 * beta)
    assert c[0].real == pytest.approx(lead, rel=1e-4)
    assert c[2].real == pytest.approx(lead, rel=1e-4)
    assert np.max(np.abs(c[4::2].real)) < 1e-3 * lead


def test_derivative_matrix_entries():
    eta = derivative_matrix(2.0, 10)
    assert eta[0, 1] == -2.0
    assert np.count_nonzero(eta[0]) == 1
    assert eta[5, 4] == 1.0 and eta[5, 6] == -1.0
    assert np.dot(eta[0], special.jv(np.arange(10), 0.0)) == 0.0


def test_derivative_matrix_reproduces_bessel_derivative():
    nu, K = 2.0, 30
    eta = derivative_matrix(nu, K)
    t = np.linspace(0, 5, 11)
    J = special.jv(np.arange(K)[:, None], nu * t)
    dJ = nu * special.jvp(np.arange(K)[:, None], nu * t)
    # the last row needs J_K, which is dropped
    np.testing.assert_allclose((eta @ J)[:-1], dJ[:-1], atol=1e-12)


def test_reconstruct_at_zero_is_c0():
    exp = bessel_coefficients(BathSpec(0.01, 2.0, 2.0), 16)
    assert reconstruct_corr(exp, 0.0) == exp.coeffs[0]


def test_reconstruct_imaginary_exact():
    exp = bessel_coefficients(BathSpec(0.01, 2.0, 2.0), 4)
    for t in np.linspace(0, 20, 9):
        assert reconstruct_corr(exp, t).imag == pytest.approx(corr_exact(exp.bath, t).imag, abs=1e-12)


def test_reconstruct_k40_beta2():
    exp = bessel_coefficients(BathSpec(0.01, 2.0, 2.0), 40)
    scale = abs(corr_exact(exp.bath, 0.0))
    assert expansion_residual(exp, 20.0) < 1e-4 * scale


def test_check_expansion_flags_small_k():
    exp = bessel_coefficients(BathSpec(0.01, 2.0, math.inf), 8)
    with pytest.raises(ValueError, match="increase K"):
        check_expansion(exp, 40.0, rtol=1e-6)


def test_high_temperature_real_part():
    b = BathSpec(0.01, 2.0, 0.01)
    for t in (0.0, 1.0, 5.0, 20.0):
        ref = high_temperature_real(b, t)
        assert corr_exact(b, t).real == pytest.approx(ref, rel=1e-4, abs=1e-4 * abs(high_temperature_real(b, 0.0)))


def test_bath_validation():
    with pytest.raises(ValueError):
        BathSpec(-1.0, 2.0)
    with pytest.raises(ValueError):
        BathSpec(0.1, 0.0)
    assert BathSpec(0.1, 2.0, "inf").zero_temperature
    with pytest.raises(ValueError):
        bessel_coefficients(BathSpec(0.1, 2.0), 5)
