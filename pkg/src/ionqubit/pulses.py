"""
Unitary propagators for rectangular microwave pulses and free evolution.

Two-level matrices act on the qubit basis ``(|up>, |down>)`` with ``|up>`` =
(3,+1), the upper level.  In the frame rotating at the drive frequency a
segment with Rabi frequency ``rabi`` (rad/s), detuning ``detuning`` (Hz,
drive minus transition) and phase ``phase`` has

    H = -pi*detuning*sz + (rabi/2) * (cos(phase) sx + sin(phase) sy)

so a resonant pulse of area theta is ``exp(-i theta (n . sigma)/2)`` with
``n = (cos phase, sin phase, 0)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

from .atomic import (DEFAULT_CONSTANTS, QUBIT_DOWN, QUBIT_UP, STATE_INDEX, STATES, TWO_PI,
                     AtomicConstants, HyperfineState, Polarization, as_state,
                     coupling_strength, microwave_transitions, state_energy,
                     transition_frequency)

REUNITARIZE_EVERY = 512


@dataclass(frozen=True)
class PulseSpec:
    kind: str
    duration: float
    rabi: float = 0.0
    detuning: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("drive", "delay"):
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")
        if self.rabi < 0:
            raise ValueError("Rabi frequency must be non-negative")
        if self.kind == "delay" and self.rabi != 0:
            raise ValueError("a delay cannot carry a drive")

    @classmethod
    def drive(cls, rabi, duration, phase=0.0, detuning=0.0):
        return cls("drive", duration, rabi, detuning, phase)

    @classmethod
    def delay(cls, duration, detuning=0.0):
        return cls("delay", duration, 0.0, detuning, 0.0)


SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def two_level_hamiltonian(rabi, detuning, phase):
    """Rotating-frame Hamiltonian in rad/s."""
    return (-np.pi * detuning * SZ
            + 0.5 * rabi * (np.cos(phase) * SX + np.sin(phase) * SY))


def two_level_propagator(p: PulseSpec) -> np.ndarray:
    """Exact propagator of one constant segment (closed-form SU(2) rotation)."""
    hx = 0.5 * p.rabi * np.cos(p.phase)
    hy = 0.5 * p.rabi * np.sin(p.phase)
    hz = -np.pi * p.detuning
    norm = np.sqrt(hx * hx + hy * hy + hz * hz)
    a = norm * p.duration
    if norm == 0:
        return np.eye(2, dtype=complex)
    n = np.array([hx, hy, hz]) / norm
    return (np.cos(a) * np.eye(2)
            - 1j * np.sin(a) * (n[0] * SX + n[1] * SY + n[2] * SZ))


def rotation(axis_phase: float, angle: float) -> np.ndarray:
    """Ideal rotation by ``angle`` about the equatorial axis at ``axis_phase``."""
    n = np.cos(axis_phase) * SX + np.sin(axis_phase) * SY
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * n


def z_rotation(angle: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def hermitian_expm(H: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i H t)`` via eigendecomposition of the Hermitian ``H``."""
    w, v = np.linalg.eigh(H)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def project_unitary(U: np.ndarray) -> np.ndarray:
    """Nearest unitary (polar decomposition)."""
    u, _, vh = np.linalg.svd(U)
    return u @ vh


def unitarity_error(U: np.ndarray) -> float:
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))


def compose(segments: Sequence[np.ndarray], dim: int | None = None,
            reunitarize_every: int = REUNITARIZE_EVERY) -> np.ndarray:
    """Product of segment propagators; ``segments[0]`` acts first.

    The running product is projected back onto the unitary group every
    ``reunitarize_every`` multiplications and once at the end.
    """
    segments = list(segments)
    if not segments:
        return np.eye(dim or 2, dtype=complex)
    n = segments[0].shape[0]
    out = np.eye(n, dtype=complex)
    for i, U in enumerate(segments, 1):
        if U.shape != (n, n):
            raise ValueError(f"segment {i - 1} has shape {U.shape}, expected {(n, n)}")
        out = U @ out
        if reunitarize_every and i % reunitarize_every == 0:
            out = project_unitary(out)
    if len(segments) > 1:
        out = project_unitary(out)
    return out


def sequence_propagator(pulses: Iterable[PulseSpec]) -> np.ndarray:
    return compose([two_level_propagator(p) for p in pulses])


# ---------------------------------------------------------------------------
# full ground manifold

@dataclass(frozen=True)
class Drive:
    """Microwave drive described by the qubit-transition Rabi frequency.

    ``rabi`` is the Rabi frequency the field produces on ``reference``; all
    other transitions scale by their relative dipole factor.  ``frequency``
    is absolute (Hz); ``detuning`` is added to the reference transition when
    ``frequency`` is None.
    """

    rabi: float
    polarization: Polarization
    phase: float = 0.0
    frequency: float | None = None
    detuning: float = 0.0
    reference: tuple = (QUBIT_DOWN, QUBIT_UP)


def _lower_upper(s1, s2, B, c):
    a, b = as_state(s1), as_state(s2)
    return (a, b) if state_energy(a, B, c) < state_energy(b, B, c) else (b, a)


def rotating_frame_hamiltonian(drive: Drive | None, B: float,
                               c: AtomicConstants = DEFAULT_CONSTANTS,
                               frame_frequency: float | None = None,
                               decouple_spectators: bool = False,
                               dressed: bool = True) -> np.ndarray:
    """16x16 Hamiltonian (rad/s) in the frame where F=3 states rotate at the
    drive frequency (rotating-wave approximation on every F=4<->F=3 line).

    Energies are offset so the reference pair sits symmetrically about zero,
    making the reference 2x2 block identical to ``two_level_hamiltonian``.
    """
    ref = drive.reference if drive is not None else (QUBIT_DOWN, QUBIT_UP)
    lo, hi = _lower_upper(*ref, B, c)
    f_ref = transition_frequency(lo, hi, B, c)
    if frame_frequency is None:
        if drive is None:
            frame_frequency = f_ref
        else:
            frame_frequency = drive.frequency if drive.frequency is not None else f_ref + drive.detuning
    if drive is not None and drive.frequency is not None and frame_frequency != drive.frequency:
        raise ValueError("frame must rotate at the drive frequency")
    # Upper manifold (higher zero-field energy) is moved down by the frame frequency.
    upper_F = 3 if c.zero_field_splitting < 0 else 4
    energies = np.array([state_energy(s, B, c) for s in STATES], dtype=float)
    for i, s in enumerate(STATES):
        if s.F == upper_F:
            energies[i] -= frame_frequency
    centre = 0.5 * (energies[STATE_INDEX[lo]] + energies[STATE_INDEX[hi]])
    H = np.diag(TWO_PI * (energies - centre)).astype(complex)
    if drive is None or drive.rabi == 0:
        return H
    norm = coupling_strength(lo, hi, drive.polarization, B if dressed else None, c)
    if norm == 0:
        raise ValueError("polarization does not couple the reference transition")
    phase = np.exp(-1j * drive.phase)
    for a, b in microwave_transitions():
        if decouple_spectators and {a, b} != {lo, hi}:
            continue
        cs = coupling_strength(a, b, drive.polarization, B if dressed else None, c)
        if cs == 0:
            continue
        om = drive.rabi * cs / norm
        up, down = (b, a) if b.F == upper_F else (a, b)
        H[STATE_INDEX[up], STATE_INDEX[down]] += 0.5 * om * phase
        H[STATE_INDEX[down], STATE_INDEX[up]] += 0.5 * om * np.conj(phase)
    return H


def sixteen_level_propagator(drive: Drive | None, duration: float, B: float,
                             c: AtomicConstants = DEFAULT_CONSTANTS, *,
                             frame_frequency: float | None = None,
                             decouple_spectators: bool = False,
                             dressed: bool = True) -> np.ndarray:
    """Propagator over ``duration`` for the full ground manifold.

    A ``drive`` of None (or zero Rabi frequency) gives free evolution in the
    frame set by ``frame_frequency``.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    H = rotating_frame_hamiltonian(drive, B, c, frame_frequency, decouple_spectators, dressed)
    return hermitian_expm(H, duration)


def _lab_terms(drive: Drive, B: float, c: AtomicConstants, dressed: bool):
    lo, hi = _lower_upper(*drive.reference, B, c)
    f = drive.frequency if drive.frequency is not None else (
        transition_frequency(lo, hi, B, c) + drive.detuning)
    norm = coupling_strength(lo, hi, drive.polarization, B if dressed else None, c)
    w = TWO_PI * np.array([state_energy(s, B, c) for s in STATES])
    V = np.zeros((16, 16))
    for a, b in microwave_transitions():
        cs = coupling_strength(a, b, drive.polarization, B if dressed else None, c)
        V[STATE_INDEX[a], STATE_INDEX[b]] = V[STATE_INDEX[b], STATE_INDEX[a]] = drive.rabi * cs / norm
    return w, V, f


def lab_frame_hamiltonian(drive: Drive, B: float, c: AtomicConstants = DEFAULT_CONSTANTS,
                          dressed: bool = True):
    """Time-dependent 16x16 Hamiltonian H(t) (rad/s) without the RWA.

    The field ``B_mw cos(2 pi f t + phase)`` couples every microwave line
    with both co- and counter-rotating terms.  Returns ``(H, f)``.
    """
    w, V, f = _lab_terms(drive, B, c, dressed)

    def H(t):
        return np.diag(w) + V * np.cos(TWO_PI * f * t + drive.phase)

    return H, f


class IntegrationError(RuntimeError):
    pass


def time_stepped_propagator(drive: Drive, duration: float, B: float,
                            c: AtomicConstants = DEFAULT_CONSTANTS, step: float = 1e-12,
                            dressed: bool = True) -> np.ndarray:
    """Brute-force propagator keeping counter-rotating terms.

    Fixed midpoint steps in the interaction picture of the bare energies,
    each step exponentiated to second order (``|H step| < 1e-4``), then
    mapped into the same rotating frame as ``sixteen_level_propagator``.  The
    step must resolve the ~6.4 GHz counter-rotating terms; use for
    validation on sub-microsecond durations.
    """
    n = int(round(duration / step))
    if n < 1 or not np.isclose(n * step, duration, rtol=1e-9, atol=0):
        raise IntegrationError(f"duration {duration} is not a multiple of step {step}")
    w, V, f = _lab_terms(drive, B, c, dressed)
    if np.max(np.abs(V)) * step > 1e-4:
        raise IntegrationError("step too large for the second-order exponential")
    U = np.eye(16, dtype=complex)
    eye = np.eye(16)
    dw = w[:, None] - w[None, :]
    for k in range(n):
        t = (k + 0.5) * step
        Hi = V * np.exp(1j * dw * t) * np.cos(TWO_PI * f * t + drive.phase) * step
        U = (eye - 1j * Hi - 0.5 * (Hi @ Hi)) @ U
    U = np.exp(-1j * w * duration)[:, None] * U
    lo, hi = _lower_upper(*drive.reference, B, c)
    upper_F = 3 if c.zero_field_splitting < 0 else 4
    energies = np.array([state_energy(s, B, c) for s in STATES])
    shift = np.array([f if s.F == upper_F else 0.0 for s in STATES])
    centre = 0.5 * ((energies - shift)[STATE_INDEX[lo]] + (energies - shift)[STATE_INDEX[hi]])
    return np.exp(1j * TWO_PI * (shift + centre) * duration)[:, None] * U


def qubit_block(U16: np.ndarray, qubit=(QUBIT_UP, QUBIT_DOWN)) -> np.ndarray:
    idx = [STATE_INDEX[as_state(s)] for s in qubit]
    return U16[np.ix_(idx, idx)]


def ode_propagator(H_of_t, dim: int, duration: float, rtol=1e-12, atol=1e-13) -> np.ndarray:
    """Propagator by adaptive integration of ``dU/dt = -i H(t) U``."""
    def rhs(t, y):
        U = y.reshape(dim, dim)
        return (-1j * H_of_t(t) @ U).ravel()

    sol = integrate.solve_ivp(rhs, (0.0, duration), np.eye(dim, dtype=complex).ravel(),
                              method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(sol.message)
    return sol.y[:, -1].reshape(dim, dim)


def bloch_axis_angle(U: np.ndarray):
    """Rotation axis and angle of a 2x2 unitary, global phase removed."""
    U = U / np.sqrt(np.linalg.det(U))
    c = np.clip(np.real(np.trace(U)) / 2, -1.0, 1.0)
    angle = 2 * np.arccos(c)
    s = np.sin(angle / 2)
    if abs(s) < 1e-15:
        return np.array([0.0, 0.0, 1.0]), 0.0
    n = np.array([np.imag(U[0, 1] + U[1, 0]), np.real(U[0, 1] - U[1, 0]),
                  np.imag(U[0, 0] - U[1, 1])]) / (-2 * s)
    return n, angle


def matrix_to_rows(U: np.ndarray):
    """``(row, col, re, im)`` tuples for CSV debug dumps."""
    return [(i, j, float(U[i, j].real), float(U[i, j].imag))
            for i in range(U.shape[0]) for j in range(U.shape[1])]

