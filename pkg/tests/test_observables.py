import math

import numpy as np
import pytest

from hseom.observables import (ObservableSeries, SeriesKind, fdt_residual, loschmidt, population, spectrum,
                               three_time_correlator, two_time_correlator)


def rho_series(coherence, pop=0.5):
    c = np.asarray(coherence, dtype=complex)
    rho = np.zeros((c.size, 2, 2), complex)
    rho[:, 0, 0] = pop
    rho[:, 1, 1] = 1 - pop
    rho[:, 0, 1] = c
    rho[:, 1, 0] = c.conj()
    return rho


def test_loschmidt_definition():
    t = np.linspace(0, 5, 11)
    rho = rho_series(0.5 * np.exp(1j * t) * np.exp(-0.1 * t))
    L = loschmidt(t, rho)
    assert L.values[0] == 1.0
    np.testing.assert_allclose(L.real, np.exp(-0.2 * t))
    assert np.all(L.values.imag == 0)


def test_loschmidt_constant_for_free_rotation():
    t = np.linspace(0, 5, 11)
    L = loschmidt(t, rho_series(0.5 * np.exp(1j * t)))
    np.testing.assert_allclose(L.real, 1.0)


def test_loschmidt_needs_coherence():
    with pytest.raises(ValueError):
        loschmidt([0.0, 1.0], rho_series([0.0, 0.0]))


def test_population():
    t = np.array([0.0, 1.0])
    p = population(t, rho_series([0.5, 0.5], pop=0.5))
    np.testing.assert_array_equal(p.real, [0.5, 0.5])
    assert population(t, rho_series([0.5, 0.5], pop=0.7), "-").real[0] == pytest.approx(0.3)


def test_series_grid_must_increase():
    with pytest.raises(ValueError):
        ObservableSeries(SeriesKind.POPULATION, [0.0, 0.0], [1.0, 1.0])


def test_two_time_equal_time_values():
    t = np.array([0.0, 0.1])
    f = np.array([1.0, 0.9 + 0.1j])
    A, C = two_time_correlator(t, f, f.conj())
    assert A.values[0] == 0
    assert C.values[0] == 1
    assert A.metadata["hermiticity_residual"] == 0


def test_three_time_identity_is_one():
    d = three_time_correlator([0.0, 5.0, 10.0], np.ones(3), [10.5, 11.0], np.ones(2), 10.0)
    np.testing.assert_array_equal(d.values, 1.0)
    assert d.kind is SeriesKind.CORRELATOR_D
    with pytest.raises(ValueError):
        three_time_correlator([0.0, 11.0], np.ones(2), [12.0], np.ones(1), 10.0)


def test_sine_transform_vanishes_at_zero():
    t = np.linspace(0, 50, 1001)
    _, a = spectrum((t, np.exp(-1j * t)), [0.0, 1.0])
    assert a.values[0] == 0


def test_cosine_signal_peak():
    T = 50.0
    t = np.linspace(0, T, 5001)
    w1 = 1.3
    w = np.linspace(0.5, 2.0, 301)
    c, _ = spectrum((t, np.cos(w1 * t)), w)
    assert w[np.argmax(c.real)] == pytest.approx(w1, abs=0.01)
    # 2 int_0^T cos^2 = T + sin(2 w1 T) / (2 w1)
    peak = c.at(w1).real
    assert peak == pytest.approx(T + math.sin(2 * w1 * T) / (2 * w1), rel=1e-4)


def test_spectrum_rejects_nonuniform_grid():
    t = np.array([0.0, 0.1, 0.3])
    with pytest.raises(ValueError):
        spectrum((t, np.ones(3)), [1.0])
    with pytest.raises(ValueError):
        spectrum((t + 1.0, np.ones(3)), [1.0])


def test_fdt_residual_with_zero_a_is_c():
    w = np.linspace(0.5, 1.5, 11)
    c = ObservableSeries(SeriesKind.SPECTRUM_C, w, np.cos(w))
    a = ObservableSeries(SeriesKind.SPECTRUM_A, w, np.zeros_like(w))
    r = fdt_residual(c, a, 2.0)
    np.testing.assert_allclose(r.values, np.cos(w))


def test_fdt_residual_vanishes_for_thermal_pair():
    beta = 2.0
    w = np.linspace(0.3, 2.0, 18)
    a_vals = -np.exp(-w)
    c_vals = -0.5 / np.tanh(0.5 * beta * w) * a_vals
    r = fdt_residual(ObservableSeries("SpectrumC", w, c_vals), ObservableSeries("SpectrumA", w, a_vals), beta)
    np.testing.assert_allclose(r.values, 0, atol=1e-15)
    r0 = fdt_residual(ObservableSeries("SpectrumC", w, -0.5 * a_vals), ObservableSeries("SpectrumA", w, a_vals),
                      math.inf)
    np.testing.assert_allclose(r0.values, 0, atol=1e-15)


def test_fdt_drops_low_frequencies():
    w = np.linspace(0.0, 1.0, 11)
    c = ObservableSeries("SpectrumC", w, np.ones(11))
    a = ObservableSeries("SpectrumA", w, np.ones(11))
    r = fdt_residual(c, a, 1.0, omega_min=0.25)
    assert r.grid[0] == pytest.approx(0.3)
    with pytest.raises(ValueError):
        fdt_residual(c, a, 1.0)
