import numpy as np
import pytest

from hseom.bath import BathSpec, bessel_coefficients
from hseom.hierarchy import enumerate_hierarchy
from hseom.propagator import HSEOMPropagator, InsertionEvent
from hseom.simulate import Integration, JobRunner, JobSpec, record_stride
from hseom.spin_model import (OperatorRep, SpinSystemSpec, build_chain_hamiltonian, build_coupling_operator,
                              build_system_hamiltonian)
from hseom.thermal import assemble_runs, thermal_components


@pytest.fixture(scope="module")
def setup():
    spec = SpinSystemSpec.centered(3, delta=2.0)
    P = HSEOMPropagator(build_system_hamiltonian(spec), build_coupling_operator(spec),
                        bessel_coefficients(BathSpec(0.05, 2.0, 2.0), 6), enumerate_hierarchy(6, 2))
    kets, w = assemble_runs(thermal_components(build_chain_hamiltonian(spec), 2.0))
    return P, kets, w


def test_record_stride():
    assert record_stride(0.002) == 25
    assert record_stride(0.02) == 3
    assert record_stride(0.1) == 1
    assert record_stride(0.001) == 50


def test_integration_grid():
    integ = Integration(0.01, 1.0, 5)
    assert integ.n_steps == 100
    np.testing.assert_allclose(integ.times, np.arange(21) * 0.05)
    with pytest.raises(ValueError):
        Integration(0.03, 1.0, 1)


def test_chunking_is_bitwise_neutral(setup):
    P, kets, w = setup
    sz = OperatorRep.single(4, 2, "z")
    job = JobSpec("j", kets, w, [InsertionEvent(0.1, "ket", sz, (0, 2))], [sz])
    integ = Integration(0.01, 0.3, 5)
    full = JobRunner(P, job, integ).run()
    single = JobRunner(P, job, integ, chunk_size=1).run()
    for a, b in zip(full.arrays().values(), single.arrays().values()):
        assert np.array_equal(a, b)


def test_runner_restore_midway(setup):
    P, kets, w = setup
    integ = Integration(0.01, 0.3, 5)
    job = JobSpec("j", kets, w)
    ref = JobRunner(P, job, integ, chunk_size=2).run()
    first = JobRunner(P, job, integ, chunk_size=2)
    first.advance(37)
    second = JobRunner(P, job, integ, chunk_size=2)
    second.restore(first.state_header(), first.state_arrays())
    res = second.run()
    assert np.array_equal(res.rho_s, ref.rho_s)
    assert np.array_equal(res.trace, ref.trace)


def test_initial_record(setup):
    P, kets, w = setup
    res = JobRunner(P, JobSpec("j", kets, w), Integration(0.01, 0.1, 5)).run()
    np.testing.assert_allclose(res.rho_s[0], 0.5, atol=1e-15)
    np.testing.assert_allclose(res.trace[0], 1.0, atol=1e-15)
