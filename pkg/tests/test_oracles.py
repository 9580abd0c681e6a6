import math

import numpy as np
import pytest
from scipy import linalg

from hseom.bath import BathSpec
from hseom.oracles import (ORACLE_MAX_DIM, dense_matrix, dephasing_exponent, heisenberg_correlator_reference,
                           independent_boson_coherence, reduced_density_reference, schrodinger_reference)
from hseom.spin_model import (OperatorRep, SpinSystemSpec, build_chain_hamiltonian, build_system_hamiltonian,
                              random_state)
from hseom.thermal import assemble_runs, thermal_components


def test_zero_hamiltonian_constant():
    psi = random_state(4, np.random.default_rng(0))
    res = schrodinger_reference(np.zeros((4, 4)), psi, [0.0, 1.0, 7.0])
    np.testing.assert_allclose(res.values, np.tile(psi, (3, 1)), atol=1e-15)


def test_larmor_phase():
    H = OperatorRep.single(1, 0, "z", -0.5)
    psi = np.array([1.0, 1.0], complex) / math.sqrt(2)
    t = np.linspace(0, 3, 7)
    rho = reduced_density_reference(H, psi[None], [1.0], t).values
    np.testing.assert_allclose(rho[:, 0, 1], 0.5 * np.exp(1j * t), atol=1e-14)


def test_schrodinger_matches_expm():
    H = build_system_hamiltonian(SpinSystemSpec.centered(3, delta=-1.0))
    psi = random_state(16, np.random.default_rng(1), batch=(2,))
    res = schrodinger_reference(H, psi, [1.7]).values[0]
    U = linalg.expm(-1.7j * dense_matrix(H))
    np.testing.assert_allclose(res, psi @ U.T, atol=1e-12)


def test_heisenberg_equal_time_pauli_square():
    H = build_system_hamiltonian(SpinSystemSpec.centered(3))
    sz = OperatorRep.single(4, 2, "z")
    ket = random_state(16, np.random.default_rng(2))
    val = heisenberg_correlator_reference(H, ([1.0], ket[None]), [sz, sz], [[0.0, 0.0], [1.3, 1.3]]).values
    np.testing.assert_allclose(val, 1.0, atol=1e-13)
    comm = (val - val.conj())
    np.testing.assert_allclose(comm, 0, atol=1e-13)


def test_heisenberg_density_and_mixture_agree():
    H = build_system_hamiltonian(SpinSystemSpec.centered(2))
    rng = np.random.default_rng(3)
    kets = random_state(8, rng, batch=(3,))
    w = np.array([0.5, 0.3, 0.2])
    rho = np.einsum("b,bi,bj->ij", w, kets, kets.conj())
    ops = [OperatorRep.single(3, 1, "z"), OperatorRep.single(3, 2, "x"), OperatorRep.single(3, 0, "z")]
    times = [[0.0, 0.4, 1.0], [0.0, 1.5, 0.7]]
    a = heisenberg_correlator_reference(H, rho, ops, times).values
    b = heisenberg_correlator_reference(H, (w, kets), ops, times).values
    np.testing.assert_allclose(a, b, atol=1e-13)
    # direct evaluation tr{O3(t3) O2(t2) O1(t1) rho}
    h = dense_matrix(H)
    U = lambda t: linalg.expm(-1j * t * h)
    t1, t2, t3 = times[1]
    O = [dense_matrix(o) for o in ops]
    heis = [U(t).conj().T @ o @ U(t) for o, t in zip(O, (t1, t2, t3))]
    ref = np.trace(heis[2] @ heis[1] @ heis[0] @ rho)
    assert b[1] == pytest.approx(ref, abs=1e-12)


def test_dense_guard():
    with pytest.raises(ValueError):
        dense_matrix(OperatorRep.identity(int(math.log2(ORACLE_MAX_DIM)) + 1))


def test_dephasing_limits():
    b = BathSpec(0.01, 2.0, 2.0)
    assert dephasing_exponent(b, [0.0])[0] == 0.0
    np.testing.assert_array_equal(independent_boson_coherence(BathSpec(0.0, 2.0, 2.0), [0.0, 3.0]).values, 1.0)


def test_dephasing_short_time_quadratic():
    # Gamma(t) ~ 2 t^2 int J coth for small t
    from scipy import integrate
    from hseom.bath import sdf_eval
    b = BathSpec(0.01, 2.0, 2.0)
    m2 = integrate.quad(lambda w: sdf_eval(b, w) / math.tanh(w), 0, 2)[0]
    t = 1e-3
    assert dephasing_exponent(b, [t])[0] == pytest.approx(2 * m2 * t**2, rel=1e-5)


@pytest.mark.parametrize("epsilon0", [0.0, 1.0])
def test_three_time_zz_null_over_ground_multiplet(epsilon0):
    # sigma_0^z is conserved at zeta=0 and flipping every chain spin swaps the two TLS branches
    # while reversing each sigma^z, so the multiplet average of D_zzz vanishes even with coupling
    spec = SpinSystemSpec.centered(5, delta=1.0, epsilon0=epsilon0)
    H = build_system_hamiltonian(spec)
    kets, w = assemble_runs(thermal_components(build_chain_hamiltonian(spec), float("inf")))
    sz = OperatorRep.single(6, 3, "z")
    t = np.linspace(0.0, 10.0, 21)
    times = np.stack([0 * t, t, np.full(t.size, 10.0)], 1)
    full = heisenberg_correlator_reference(H, (w, kets), [sz, sz, sz], times).values / w.sum()
    one = heisenberg_correlator_reference(H, (w[:1], kets[:1]), [sz, sz, sz], times).values / w[0]
    assert np.max(np.abs(full)) < 1e-12
    assert np.max(np.abs(one)) > 1e-2
