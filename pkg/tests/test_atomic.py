import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import constants as sc

from ionqubit import atomic
from ionqubit.atomic import (CALIBRATED_POLARIZATION, DEFAULT_CONSTANTS, PURE_SIGMA_PLUS, QUBIT_DOWN,
                             QUBIT_UP, STATES, AtomicConstants, HyperfineState, NoClockPointError,
                             Polarization, PerturbationBreakdown)
from ionqubit.pulses import Drive, rotating_frame_hamiltonian

H = HyperfineState
C = DEFAULT_CONSTANTS
I_SPIN = 3.5


# -- independent oracle: explicit Hamiltonian in the uncoupled |m_I, m_J> basis

def _spin(j):
    m = np.arange(j, -j - 1, -1)
    up = np.diag(np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1)), 1)
    return (up + up.T) / 2, (up - up.T) / 2j, np.diag(m)


def _uncoupled_ops():
    Ix, Iy, Iz = (np.kron(o, np.eye(2)) for o in _spin(I_SPIN))
    Jx, Jy, Jz = (np.kron(np.eye(8), o) for o in _spin(0.5))
    return (Ix, Iy, Iz), (Jx, Jy, Jz)


def _oracle_hamiltonian(B, c=C):
    (Ix, Iy, Iz), (Jx, Jy, Jz) = _uncoupled_ops()
    A = c.zero_field_splitting / (I_SPIN + 0.5)
    muB = sc.physical_constants["Bohr magneton in Hz/T"][0] * 1e-4
    muN = sc.physical_constants["nuclear magneton in MHz/T"][0] * 1e6 * 1e-4
    gI_term = -c.nuclear_moment / I_SPIN * muN
    return (A * (Ix @ Jx + Iy @ Jy + Iz @ Jz)
            + B * (c.electron_g_factor * muB * Jz + gI_term * Iz)).real


def _zero_field_states():
    """|F, M> vectors from diagonalising F^2 inside each M block."""
    (Ix, Iy, Iz), (Jx, Jy, Jz) = _uncoupled_ops()
    F2 = sum((i + j) @ (i + j) for i, j in zip((Ix, Iy, Iz), (Jx, Jy, Jz))).real
    Mz = np.diag(Iz + Jz).real
    vecs = {}
    for M in np.unique(Mz):
        idx = np.where(np.isclose(Mz, M))[0]
        w, v = np.linalg.eigh(F2[np.ix_(idx, idx)])
        for k, val in enumerate(w):
            F = int(round((-1 + np.sqrt(1 + 4 * val)) / 2))
            full = np.zeros(16)
            full[idx] = v[:, k]
            vecs[(F, int(round(M)))] = full
    return vecs


@given(st.floats(0.0, 300.0))
def test_breit_rabi_matches_explicit_diagonalisation(B):
    oracle = np.sort(np.linalg.eigvalsh(_oracle_hamiltonian(B)))
    br = np.sort([atomic.state_energy(s, B) for s in STATES])
    assert np.max(np.abs(oracle - br)) < 1e-3


def test_hamiltonian_in_coupled_basis_has_breit_rabi_spectrum():
    for B in (0.0, 10.0, 146.0942, 290.0):
        w = np.sort(np.linalg.eigvalsh(atomic.hamiltonian(B)))
        br = np.sort([atomic.state_energy(s, B) for s in STATES])
        assert np.max(np.abs(w - br)) < 1e-3


def test_zero_field_structure():
    e4 = [atomic.state_energy(H(4, m), 0.0) for m in range(-4, 5)]
    e3 = [atomic.state_energy(H(3, m), 0.0) for m in range(-3, 4)]
    assert np.ptp(e4) < 1e-6 and np.ptp(e3) < 1e-6
    assert e4[0] - e3[0] == pytest.approx(C.zero_field_splitting, abs=1e-3)


def test_stretched_state_is_linear_in_field():
    muB = sc.physical_constants["Bohr magneton in Hz/T"][0] * 1e-4
    muN = sc.physical_constants["nuclear magneton in MHz/T"][0] * 1e6 * 1e-4
    slope = C.electron_g_factor * muB / 2 - C.nuclear_moment * muN
    for B in (0.0, 1.0, 146.0, 300.0):
        expected = C.zero_field_splitting * I_SPIN / (2 * I_SPIN + 1) + slope * B
        assert atomic.state_energy(H(4, 4), B) == pytest.approx(expected, abs=1e-4)


def test_clock_point_and_frequency():
    B0 = atomic.field_independent_point()
    assert B0 == pytest.approx(146.094, abs=0.05)
    f0 = atomic.transition_frequency(QUBIT_DOWN, QUBIT_UP, B0)
    assert f0 == pytest.approx(3_199_941_077, abs=50)
    assert abs(atomic.transition_slope(QUBIT_DOWN, QUBIT_UP, B0)) < 1e-3


def test_curvature_at_clock_point():
    B0 = atomic.field_independent_point()
    curv = atomic.transition_curvature(QUBIT_DOWN, QUBIT_UP, B0)
    # 1 Hz/G^2 = 1e-3 mHz/mG^2
    assert curv * 1e-3 == pytest.approx(2.4, rel=0.10)
    h = 0.05
    fd = (atomic.transition_frequency(QUBIT_DOWN, QUBIT_UP, B0 + h)
          - 2 * atomic.transition_frequency(QUBIT_DOWN, QUBIT_UP, B0)
          + atomic.transition_frequency(QUBIT_DOWN, QUBIT_UP, B0 - h)) / h**2
    assert fd == pytest.approx(curv, rel=1e-3)


@given(st.floats(1.0, 299.0), st.sampled_from(atomic.microwave_transitions()))
def test_analytic_slope_matches_finite_difference(B, pair):
    an = atomic.transition_slope(*pair, B)
    fd = atomic.finite_difference_slope(*pair, B)
    assert an == pytest.approx(fd, rel=1e-5, abs=1e-2)


def test_transition_frequency_is_symmetric_in_arguments():
    assert atomic.transition_frequency(QUBIT_UP, QUBIT_DOWN, 10.0) == atomic.transition_frequency(QUBIT_DOWN, QUBIT_UP, 10.0)


def test_no_clock_point_for_field_sensitive_line():
    with pytest.raises(NoClockPointError):
        atomic.field_independent_point(H(4, 4), H(3, 3))


@pytest.mark.parametrize("bad", [(4, 5), (3, 4), (5, 0), (3, -4)])
def test_invalid_states_rejected(bad):
    with pytest.raises(ValueError):
        atomic.as_state(bad)


def test_constants_validation():
    with pytest.raises(ValueError):
        AtomicConstants(zero_field_splitting=0.0)
    with pytest.raises(ValueError):
        AtomicConstants(nuclear_spin=1.5)


def test_coupling_matches_wigner_eckart_oracle():
    """Zero-field relative dipole factors against an independent construction."""
    vec = _zero_field_states()
    (Ix, Iy, Iz), (Jx, Jy, Jz) = _uncoupled_ops()
    muB = sc.physical_constants["Bohr magneton in Hz/T"][0] * 1e-4
    muN = sc.physical_constants["nuclear magneton in MHz/T"][0] * 1e6 * 1e-4
    gJ, gI = C.electron_g_factor * muB, -C.nuclear_moment / I_SPIN * muN

    def comp(x, y, z, q):
        return {1: -(x + 1j * y) / np.sqrt(2), -1: (x - 1j * y) / np.sqrt(2), 0: z}[q]

    ops = {q: gJ * comp(Jx, Jy, Jz, q) + gI * comp(Ix, Iy, Iz, q) for q in (-1, 0, 1)}
    ref = abs(vec[(3, 1)] @ ops[1] @ vec[(4, 0)])
    for a, b in atomic.microwave_transitions():
        q = b.M - a.M
        oracle = abs(vec[(b.F, b.M)] @ ops[q] @ vec[(a.F, a.M)]) / ref
        pol = Polarization.from_sequence([1.0 if k == q else 0.0 for k in (-1, 0, 1)])
        got = abs(atomic.coupling_strength(a, b, pol))
        assert got == pytest.approx(oracle, rel=1e-9, abs=1e-12)


def test_coupling_properties():
    assert atomic.coupling_strength(QUBIT_DOWN, QUBIT_UP) == pytest.approx(1.0)
    assert atomic.coupling_strength(QUBIT_UP, QUBIT_DOWN) == atomic.coupling_strength(QUBIT_DOWN, QUBIT_UP)
    assert atomic.coupling_strength(H(4, 4), H(3, 1), Polarization(1, 1, 1)) == 0.0
    # pi light does not drive a sigma line
    assert atomic.coupling_strength(QUBIT_DOWN, QUBIT_UP, Polarization(0, 1, 0)) == 0.0
    # dressed basis tends to the zero-field basis
    for pair in atomic.microwave_transitions()[:6]:
        assert atomic.coupling_strength(*pair, CALIBRATED_POLARIZATION, B=1e-6) == pytest.approx(
            atomic.coupling_strength(*pair, CALIBRATED_POLARIZATION), rel=1e-6, abs=1e-9)


def test_dressed_states_are_orthonormal_eigenvectors():
    B = 146.0942
    V = atomic.dressed_states(B)
    assert np.allclose(V.T @ V, np.eye(16), atol=1e-12)
    Hd = V.T @ atomic.hamiltonian(B) @ V
    E = np.array([atomic.state_energy(s, B) for s in STATES])
    assert np.allclose(np.diag(Hd), E, atol=1e-3)
    assert np.max(np.abs(Hd - np.diag(np.diag(Hd)))) < 1e-3


def test_ac_zeeman_shift_quadratic_in_rabi():
    B0 = atomic.field_independent_point()
    r = 2 * np.pi * 20e3
    s1 = atomic.ac_zeeman_shift(r, CALIBRATED_POLARIZATION, B0)
    s2 = atomic.ac_zeeman_shift(2 * r, CALIBRATED_POLARIZATION, B0)
    assert s2 == pytest.approx(4 * s1, rel=1e-12)


def test_ac_zeeman_calibrated_value():
    B0 = atomic.field_independent_point()
    s = atomic.ac_zeeman_shift(2 * np.pi * 21e3, CALIBRATED_POLARIZATION, B0)
    assert s == pytest.approx(-1.0, abs=0.01)


def test_ac_zeeman_matches_sixteen_level_diagonalisation():
    """Perturbative shift against exact eigenvalues with the qubit coupling removed."""
    B0 = atomic.field_independent_point()
    rabi = 2 * np.pi * 200e3
    pol = CALIBRATED_POLARIZATION
    Hq = rotating_frame_hamiltonian(Drive(rabi, pol), B0)
    iu, idn = atomic.STATE_INDEX[QUBIT_UP], atomic.STATE_INDEX[QUBIT_DOWN]
    Hq[iu, idn] = Hq[idn, iu] = 0.0
    w, v = np.linalg.eigh(Hq)
    e_up = w[np.argmax(np.abs(v[iu]))]
    e_dn = w[np.argmax(np.abs(v[idn]))]
    exact = (e_up - e_dn) / (2 * np.pi)
    assert exact == pytest.approx(atomic.ac_zeeman_shift(rabi, pol, B0), rel=0.02)


def test_perturbation_breakdown_for_strong_drive():
    # pure sigma+ light couples no spectator line to either qubit level
    assert atomic.ac_zeeman_shift(2 * np.pi * 200e6, PURE_SIGMA_PLUS, 146.0942) == 0.0
    with pytest.raises(PerturbationBreakdown):
        atomic.ac_zeeman_shift(2 * np.pi * 200e6, CALIBRATED_POLARIZATION, 146.0942)


def test_level_table_rows():
    rows = atomic.level_table([0.0, 146.0])
    assert len(rows) == 32
    assert rows[0][:2] == (H(4, -4), 0.0)
    assert {r[0] for r in rows} == set(STATES)
