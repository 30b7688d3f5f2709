"""
Ground-level structure of 43Ca+ (4S1/2, I = 7/2) in a static magnetic field.

Frequencies are in Hz, fields in gauss and Rabi frequencies in rad/s.  The
hyperfine splitting is stored with its physical sign: for 43Ca+ the hyperfine
constant is negative, so the F=4 manifold lies *below* F=3 and
``zero_field_splitting = E(F=4) - E(F=3) < 0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import constants as _sc
from scipy import optimize

# Magnetons expressed as frequency per gauss.
MU_B_HZ_PER_G = _sc.physical_constants["Bohr magneton in Hz/T"][0] * 1e-4
MU_N_HZ_PER_G = _sc.physical_constants["nuclear magneton in MHz/T"][0] * 1e6 * 1e-4

TWO_PI = 2.0 * np.pi


class HyperfineState(NamedTuple):
    """Ground-level state labelled by total angular momentum ``F`` and ``M``."""

    F: int
    M: int

    def validate(self) -> "HyperfineState":
        if self.F not in (3, 4) or abs(self.M) > self.F or int(self.M) != self.M:
            raise ValueError(f"invalid hyperfine state (F={self.F}, M={self.M})")
        return self

    def __str__(self) -> str:
        return f"({self.F},{self.M:+d})"


def all_states() -> list[HyperfineState]:
    """The 16 ground-level states, F=4 manifold first, M ascending."""
    return [HyperfineState(F, M) for F in (4, 3) for M in range(-F, F + 1)]


STATES = all_states()
STATE_INDEX = {s: i for i, s in enumerate(STATES)}

QUBIT_DOWN = HyperfineState(4, 0)
QUBIT_UP = HyperfineState(3, 1)
FIELD_PROBE = (HyperfineState(4, 4), HyperfineState(3, 3))


def as_state(s) -> HyperfineState:
    if isinstance(s, HyperfineState):
        return s.validate()
    F, M = s
    return HyperfineState(int(F), int(M)).validate()


@dataclass(frozen=True)
class AtomicConstants:
    # A(4S1/2) = -806.402 071 60 MHz, times (I + 1/2)
    zero_field_splitting: float = -3_225_608_286.4
    nuclear_moment: float = -1.31535
    electron_g_factor: float = 2.00225664
    nuclear_spin: float = 3.5

    def __post_init__(self):
        if self.nuclear_spin != 3.5:
            raise ValueError("nuclear_spin is fixed at 7/2")
        if self.zero_field_splitting == 0:
            raise ValueError("zero_field_splitting must be non-zero")

    @property
    def hyperfine_a(self) -> float:
        return self.zero_field_splitting / (self.nuclear_spin + 0.5)

    @property
    def nuclear_zeeman(self) -> float:
        """Coefficient of ``I_z B`` in the Hamiltonian, Hz/G."""
        return -self.nuclear_moment / self.nuclear_spin * MU_N_HZ_PER_G

    @property
    def electron_zeeman(self) -> float:
        """Coefficient of ``J_z B`` in the Hamiltonian, Hz/G."""
        return self.electron_g_factor * MU_B_HZ_PER_G


DEFAULT_CONSTANTS = AtomicConstants()


def _branch(state: HyperfineState, c: AtomicConstants):
    I = c.nuclear_spin
    dE = c.zero_field_splitting
    k = (c.electron_zeeman - c.nuclear_zeeman) / dE
    sign = 1.0 if state.F == 4 else -1.0
    stretched = abs(state.M) == I + 0.5
    return I, dE, k, sign, stretched


def state_energy(state, B, c: AtomicConstants = DEFAULT_CONSTANTS):
    """Breit-Rabi energy of ``state`` at field ``B`` (gauss), in Hz."""
    s = as_state(state)
    B = np.asarray(B, dtype=float)
    if np.any(B < 0):
        raise ValueError("field must be non-negative")
    I, dE, k, sign, stretched = _branch(s, c)
    offset = -dE / (2 * (2 * I + 1)) + c.nuclear_zeeman * s.M * B
    x = k * B
    if stretched:
        e = offset + 0.5 * dE * (1.0 + np.sign(s.M) * x)
    else:
        e = offset + sign * 0.5 * dE * np.sqrt(1.0 + 4.0 * s.M * x / (2 * I + 1) + x * x)
    return e[()] if e.ndim == 0 else e


def _energy_derivatives(state, B, c):
    s = as_state(state)
    B = np.asarray(B, dtype=float)
    I, dE, k, sign, stretched = _branch(s, c)
    if stretched:
        d1 = c.nuclear_zeeman * s.M + 0.5 * dE * np.sign(s.M) * k + 0 * B
        return d1, 0 * B
    x = k * B
    a = 4.0 * s.M / (2 * I + 1)
    u = 1.0 + a * x + x * x
    du = a + 2.0 * x
    d1 = c.nuclear_zeeman * s.M + sign * 0.5 * dE * k * du / (2.0 * np.sqrt(u))
    d2 = sign * 0.5 * dE * k * k * (4.0 * u - du * du) / (4.0 * u**1.5)
    return d1, d2


def _pair(s1, s2):
    a, b = as_state(s1), as_state(s2)
    if a == b:
        raise ValueError(f"transition needs two distinct states, got {a} twice")
    return a, b


def transition_frequency(s1, s2, B, c: AtomicConstants = DEFAULT_CONSTANTS):
    """``|E(s1) - E(s2)|`` in Hz."""
    a, b = _pair(s1, s2)
    return np.abs(state_energy(a, B, c) - state_energy(b, B, c))


def transition_slope(s1, s2, B, c: AtomicConstants = DEFAULT_CONSTANTS):
    """Analytic ``df/dB`` (Hz/G) of the transition frequency."""
    a, b = _pair(s1, s2)
    da, _ = _energy_derivatives(a, B, c)
    db, _ = _energy_derivatives(b, B, c)
    sgn = np.sign(state_energy(a, B, c) - state_energy(b, B, c))
    out = sgn * (da - db)
    return out[()] if np.ndim(out) == 0 else out


def transition_curvature(s1, s2, B, c: AtomicConstants = DEFAULT_CONSTANTS):
    """Analytic ``d2f/dB2`` (Hz/G^2); 1 Hz/G^2 is 1e-3 mHz/mG^2."""
    a, b = _pair(s1, s2)
    _, da = _energy_derivatives(a, B, c)
    _, db = _energy_derivatives(b, B, c)
    sgn = np.sign(state_energy(a, B, c) - state_energy(b, B, c))
    out = sgn * (da - db)
    return out[()] if np.ndim(out) == 0 else out


def finite_difference_slope(s1, s2, B, c=DEFAULT_CONSTANTS, step=1e-3):
    """Central difference ``df/dB`` with a 1 mG default step."""
    return (transition_frequency(s1, s2, B + step, c)
            - transition_frequency(s1, s2, B - step, c)) / (2 * step)


class NoClockPointError(ValueError):
    pass


def field_independent_point(s1=QUBIT_DOWN, s2=QUBIT_UP, c: AtomicConstants = DEFAULT_CONSTANTS,
                            search_interval=(100.0, 200.0), xtol=1e-4) -> float:
    """Field where ``df/dB = 0`` for the given transition.

    Bisection on the analytic slope down to ``xtol`` gauss, followed by one
    Newton step using the analytic curvature.
    """
    lo, hi = map(float, search_interval)
    f_lo = transition_slope(s1, s2, lo, c)
    f_hi = transition_slope(s1, s2, hi, c)
    if not np.isfinite(f_lo * f_hi) or f_lo * f_hi > 0:
        raise NoClockPointError(
            f"no clock point for {as_state(s1)}<->{as_state(s2)} in [{lo}, {hi}] G")
    B = optimize.bisect(lambda b: transition_slope(s1, s2, b, c), lo, hi, xtol=xtol)
    curv = transition_curvature(s1, s2, B, c)
    if curv != 0:
        B_new = B - transition_slope(s1, s2, B, c) / curv
        if abs(B_new - B) <= xtol:
            B = B_new
    return float(B)


# ---------------------------------------------------------------------------
# angular momentum algebra

def spin_matrices(j: float):
    """``(Jx, Jy, Jz)`` for spin ``j`` in the basis m = j, j-1, ..., -j."""
    m = np.arange(j, -j - 1, -1)
    jp = np.diag(np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1)), 1)
    jm = jp.T
    return 0.5 * (jp + jm), -0.5j * (jp - jm), np.diag(m)


def spherical(op_xyz, q: int):
    """Spherical component ``T_q`` of a Cartesian vector operator."""
    x, y, z = op_xyz
    if q == 1:
        return -(x + 1j * y) / np.sqrt(2)
    if q == -1:
        return (x - 1j * y) / np.sqrt(2)
    if q == 0:
        return z
    raise ValueError(q)


@lru_cache(maxsize=None)
def _operators(I: float = 3.5):
    """Uncoupled operators ``I`` and ``J`` and the coupled-basis change matrix.

    Rows of the returned basis matrix are the ``|F, M>`` states (in ``STATES``
    order) expanded on ``|m_I, m_J>`` with Condon-Shortley CG coefficients.
    """
    from sympy import Rational
    from sympy.physics.wigner import clebsch_gordan

    nI = int(2 * I + 1)
    Ix, Iy, Iz = spin_matrices(I)
    Jx, Jy, Jz = spin_matrices(0.5)
    eye_i, eye_j = np.eye(nI), np.eye(2)
    Iops = tuple(np.kron(o, eye_j) for o in (Ix, Iy, Iz))
    Jops = tuple(np.kron(eye_i, o) for o in (Jx, Jy, Jz))
    mIs = np.arange(I, -I - 1, -1)
    mJs = (0.5, -0.5)
    R = Rational
    basis = np.zeros((len(STATES), nI * 2))
    for row, s in enumerate(STATES):
        for i, mI in enumerate(mIs):
            for j, mJ in enumerate(mJs):
                if mI + mJ != s.M:
                    continue
                cg = clebsch_gordan(R(int(2 * I), 2), R(1, 2), s.F,
                                    R(int(2 * mI), 2), R(int(2 * mJ), 2), s.M)
                basis[row, i * 2 + j] = float(cg)
    return Iops, Jops, basis


def hamiltonian(B: float, c: AtomicConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Hyperfine plus Zeeman Hamiltonian (Hz) in the ``|F, M>`` basis."""
    Iops, Jops, U = _operators(c.nuclear_spin)
    idot = sum(i @ j for i, j in zip(Iops, Jops))
    H = c.hyperfine_a * idot + B * (c.electron_zeeman * Jops[2] + c.nuclear_zeeman * Iops[2])
    return (U @ H @ U.T).real


def dressed_states(B: float, c: AtomicConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Field eigenvectors as columns, one per label in ``STATES``.

    Each column is the eigenvector of the 2x2 same-M block whose eigenvalue is
    nearest the Breit-Rabi energy for that label; phases are fixed so the
    overlap with the zero-field state is positive.
    """
    H = hamiltonian(B, c)
    V = np.zeros((16, 16))
    for M in range(-4, 5):
        idx = [STATE_INDEX[s] for s in STATES if s.M == M]
        if len(idx) == 1:
            V[idx[0], idx[0]] = 1.0
            continue
        w, v = np.linalg.eigh(H[np.ix_(idx, idx)])
        for k in idx:
            target = state_energy(STATES[k], B, c)
            col = v[:, int(np.argmin(np.abs(w - target)))]
            col = col * np.sign(col[idx.index(k)])
            V[idx, k] = col
    return V


@lru_cache(maxsize=64)
def _dipole_elements(B, c: AtomicConstants):
    Iops, Jops, U = _operators(c.nuclear_spin)
    V = np.eye(16) if B is None else dressed_states(B, c)
    out = {}
    for q in (-1, 0, 1):
        op = c.electron_zeeman * spherical(Jops, q) + c.nuclear_zeeman * spherical(Iops, q)
        out[q] = V.T @ (U @ op @ U.T) @ V
    return out


@dataclass(frozen=True)
class Polarization:
    """Relative field amplitudes of the sigma-, pi and sigma+ components."""

    sigma_minus: float = 0.0
    pi: float = 0.0
    sigma_plus: float = 1.0

    def weight(self, q: int) -> float:
        return {-1: self.sigma_minus, 0: self.pi, 1: self.sigma_plus}[q]

    @classmethod
    def from_sequence(cls, w: Sequence[float]) -> "Polarization":
        sm, p, sp = (float(x) for x in w)
        return cls(sm, p, sp)


PURE_SIGMA_PLUS = Polarization(0.0, 0.0, 1.0)
# Calibrated: -1.0 Hz qubit a.c. Zeeman shift at 21 kHz Rabi frequency and
# ~0.1e-6 off-resonant error per gate in the benchmarking simulation.
CALIBRATED_POLARIZATION = Polarization(sigma_minus=0.9707, pi=0.3402, sigma_plus=1.0)


def _ordered(s1: HyperfineState, s2: HyperfineState):
    if s1.F != s2.F:
        return (s1, s2) if s1.F == 4 else (s2, s1)
    return (s1, s2) if s1.M < s2.M else (s2, s1)


def coupling_strength(s1, s2, polarization: Polarization = PURE_SIGMA_PLUS,
                      B: float | None = None, c: AtomicConstants = DEFAULT_CONSTANTS) -> float:
    """Relative magnetic-dipole Rabi factor between two ground states.

    The pair is ordered with the F=4 state first (or the lower M when both
    share F) and ``q = M_second - M_first`` picks the polarization component,
    so the result does not depend on argument order.  Values are normalised
    to the (4,0)<->(3,+1) sigma+ element, evaluated in the zero-field basis
    when ``B`` is None and in the field-dressed basis otherwise.
    """
    a, b = _ordered(as_state(s1), as_state(s2))
    q = b.M - a.M
    if abs(q) > 1 or a == b:
        return 0.0
    elements = _dipole_elements(None if B is None else float(B), c)
    ref = elements[1][STATE_INDEX[QUBIT_UP], STATE_INDEX[QUBIT_DOWN]].real
    val = elements[q][STATE_INDEX[b], STATE_INDEX[a]].real
    return float(polarization.weight(q) * val / ref)


def microwave_transitions() -> list[tuple[HyperfineState, HyperfineState]]:
    """All (F=4, F=3) pairs with ``|dM| <= 1``, F=4 state first."""
    return [(a, b) for a in STATES if a.F == 4 for b in STATES
            if b.F == 3 and abs(b.M - a.M) <= 1]


class PerturbationBreakdown(ValueError):
    pass


def spectator_couplings(rabi: float, polarization: Polarization, B: float,
                        c: AtomicConstants = DEFAULT_CONSTANTS,
                        qubit=(QUBIT_DOWN, QUBIT_UP)):
    """Rabi frequencies (rad/s) of every microwave transition for a drive whose
    qubit-transition Rabi frequency is ``rabi``."""
    lower, upper = qubit
    ref = coupling_strength(lower, upper, polarization, B, c)
    if ref == 0:
        raise ValueError("polarization does not couple the reference transition")
    return {pair: rabi * coupling_strength(*pair, polarization, B, c) / ref
            for pair in microwave_transitions()}


def ac_zeeman_shift(rabi: float, polarization: Polarization, B: float,
                    c: AtomicConstants = DEFAULT_CONSTANTS, qubit=(QUBIT_DOWN, QUBIT_UP),
                    drive_detuning: float = 0.0, min_ratio: float = 10.0) -> float:
    """Second-order shift (Hz) of the qubit transition from spectator couplings.

    Each spectator transition i contributes ``Omega_i^2 / (4 Delta_i)`` to
    the state it shares with the qubit; the result is the shift of the upper
    qubit level minus that of the lower.  Raises ``PerturbationBreakdown``
    when a spectator lies within ``min_ratio`` Rabi frequencies of the drive.
    """
    lower, upper = (as_state(s) for s in qubit)
    if state_energy(lower, B, c) > state_energy(upper, B, c):
        lower, upper = upper, lower
    f_drive = transition_frequency(lower, upper, B, c) + drive_detuning
    omegas = spectator_couplings(rabi, polarization, B, c, (lower, upper))
    shift = {lower: 0.0, upper: 0.0}
    for (a, b), om in omegas.items():
        if {a, b} == {lower, upper} or om == 0:
            continue
        for s in (lower, upper):
            if s not in (a, b):
                continue
            other = b if s == a else a
            lo, hi = (s, other) if state_energy(s, B, c) < state_energy(other, B, c) else (other, s)
            delta = f_drive - transition_frequency(lo, hi, B, c)
            om_hz = om / TWO_PI
            if abs(delta) < min_ratio * abs(om_hz):
                raise PerturbationBreakdown(
                    f"spectator {lo}<->{hi} only {delta:.3g} Hz from the drive")
            level_shift = om_hz**2 / (4.0 * delta)
            shift[s] += level_shift if s == lo else -level_shift
    return shift[upper] - shift[lower]


def level_table(B_values: Iterable[float], c: AtomicConstants = DEFAULT_CONSTANTS):
    """Rows of ``(state, B, energy)`` for the ``levels`` output."""
    rows = []
    for B in B_values:
        for s in STATES:
            rows.append((s, float(B), float(state_energy(s, B, c))))
    return rows
