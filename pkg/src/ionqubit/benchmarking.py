"""
Single-qubit randomized benchmarking: sequence generation, compilation to
pi/2 pulses with logical-frame z rotations, expected-value simulation, shot
sampling and the weighted straight-line error-per-gate fit.

Each computational gate is a Pauli (two pi/2 pulses, or two idle slots for
+-z and +-I) followed by a Clifford (one pi/2 pulse about +-x or +-y).  A
+-z Pauli advances the logical frame by pi, flipping the phase of every
later pulse.  Every slot, pulse or idle, is followed by the dead time.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from . import atomic
from .atomic import CALIBRATED_POLARIZATION, DEFAULT_CONSTANTS, AtomicConstants, Polarization
from .pulses import (Drive, PulseSpec, compose, rotation, sixteen_level_propagator,
                     two_level_propagator, z_rotation)

PAULIS = ("+x", "+y", "+z", "-x", "-y", "-z", "+I", "-I")
CLIFFORDS = ("+x", "+y", "-x", "-y")
_AXIS_INDEX = {"+x": 0, "+y": 1, "-x": 2, "-y": 3}
# phase index (quarter turns) of the rotation axis for each Pauli, -1 if no pulse
_PAULI_AXIS = np.array([0, 1, -1, 2, 3, -1, -1, -1])
_PAULI_IS_Z = np.array([False, False, True, False, False, True, False, False])

IDLE = 4      # idle slot of pulse duration
NOOP = 5      # padding, no time elapses

DEFAULT_LENGTHS = (2, 20, 60, 200, 600, 1200, 2000)

# Bloch axis states: +z (= |up>), -z, +x, -x, +y, -y
_BLOCH = [np.array(v, dtype=complex) / np.linalg.norm(v) for v in
          ([1, 0], [0, 1], [1, 1], [1, -1], [1, 1j], [1, -1j])]
UP, DOWN = 0, 1
OUTCOMES = ("up", "down")


@dataclass(frozen=True)
class Timing:
    pi2_duration: float = 12.1e-6
    dead_time: float = 14e-6

    @property
    def rabi(self) -> float:
        """Nominal Rabi frequency (rad/s) giving a pi/2 pulse."""
        return 0.5 * np.pi / self.pi2_duration


DEFAULT_TIMING = Timing()


def _ideal_slot_matrices():
    mats = [rotation(k * np.pi / 2, np.pi / 2) for k in range(4)]
    return np.array(mats + [np.eye(2), np.eye(2)], dtype=complex)


def _bloch_table():
    mats = _ideal_slot_matrices()
    table = np.zeros((len(mats), 6), dtype=np.int8)
    for code, U in enumerate(mats):
        for s, v in enumerate(_BLOCH):
            w = U @ v
            overlaps = [abs(np.vdot(b, w)) for b in _BLOCH]
            table[code, s] = int(np.argmax(overlaps))
    return table


_TABLE = _bloch_table()
_TERMINAL_CANDIDATES = [()] + [(k,) for k in range(4)] + [(k, k) for k in range(4)]


def _terminal_for(state: int, target: int) -> tuple[int, ...]:
    for cand in _TERMINAL_CANDIDATES:
        s = state
        for code in cand:
            s = _TABLE[code, s]
        if s == target:
            return cand
    raise AssertionError("unreachable: every Bloch axis state maps to a pole")


_TERMINAL = {(s, t): _terminal_for(s, t) for s in range(6) for t in (UP, DOWN)}


class ComputationalGate(NamedTuple):
    pauli: str
    clifford: str


@dataclass(frozen=True, eq=False)
class GateSequence:
    """A benchmarking sequence; ``paulis``/``cliffords`` index ``PAULIS``/``CLIFFORDS``."""

    paulis: np.ndarray
    cliffords: np.ndarray
    terminal: tuple
    expected_outcome: str
    seed: int | None = None

    def __len__(self):
        return len(self.paulis)

    @property
    def gates(self) -> list[ComputationalGate]:
        return [ComputationalGate(PAULIS[p], CLIFFORDS[c])
                for p, c in zip(self.paulis, self.cliffords)]

    @classmethod
    def from_gates(cls, gates: Sequence, target: str = "up", seed=None) -> "GateSequence":
        """Build a sequence from ``(pauli, clifford)`` labels; the terminal
        rotation is derived for ``target``."""
        p = np.array([PAULIS.index(g[0]) for g in gates], dtype=np.int8)
        c = np.array([CLIFFORDS.index(g[1]) for g in gates], dtype=np.int8)
        slots = _gate_slots(p[None, :], c[None, :])
        final = _ideal_final(slots)[0]
        t = OUTCOMES.index(target)
        return cls(p, c, _TERMINAL[(int(final), t)], target, seed)

    def slots(self) -> np.ndarray:
        """Physical slot codes: 0-3 pi/2 pulse at phase k*pi/2, 4 idle."""
        body = _gate_slots(self.paulis[None, :], self.cliffords[None, :])[0]
        return np.concatenate([body, np.array(self.terminal, dtype=np.int8)])

    @property
    def frame_rotation(self) -> float:
        """Net logical-frame angle left unapplied at the end of the gates."""
        return np.pi * (int(np.sum(_PAULI_IS_Z[self.paulis])) % 2)


def _gate_slots(paulis: np.ndarray, cliffords: np.ndarray) -> np.ndarray:
    """Vectorised compilation of ``(n, L)`` gate arrays to ``(n, 3L)`` slots."""
    paulis = np.asarray(paulis, dtype=np.int64)
    cliffords = np.asarray(cliffords, dtype=np.int64)
    is_z = _PAULI_IS_Z[paulis]
    # frame offset (quarter turns) seen by the Pauli pulses of gate g
    before = 2 * (np.cumsum(is_z, axis=1) - is_z) % 4
    after = (before + 2 * is_z) % 4
    axis = _PAULI_AXIS[paulis]
    pauli_code = np.where(axis >= 0, (axis + before) % 4, IDLE)
    cliff_code = (cliffords + after) % 4
    n, L = paulis.shape
    out = np.empty((n, 3 * L), dtype=np.int8)
    out[:, 0::3] = pauli_code
    out[:, 1::3] = pauli_code
    out[:, 2::3] = cliff_code
    return out


def _ideal_final(slots: np.ndarray) -> np.ndarray:
    state = np.zeros(slots.shape[0], dtype=np.int8)
    for k in range(slots.shape[1]):
        state = _TABLE[slots[:, k], state]
    return state


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def sequence_seeds(master_seed: int, n: int) -> list[int]:
    """Independent per-sequence seeds derived from one master seed."""
    ss = np.random.SeedSequence(master_seed)
    return [int(x) for x in ss.generate_state(n, dtype=np.uint64)]


def generate_sequences(length: int, seeds: Sequence[int]) -> list[GateSequence]:
    """One sequence per seed; each seed fully determines its sequence."""
    if length < 1:
        raise ValueError("sequence length must be at least 1")
    draws = []
    for s in seeds:
        rng = make_rng(s)
        draws.append((rng.integers(0, 8, length), rng.integers(0, 4, length),
                      int(rng.integers(0, 2))))
    paulis = np.array([d[0] for d in draws], dtype=np.int8).reshape(len(seeds), length)
    cliffs = np.array([d[1] for d in draws], dtype=np.int8).reshape(len(seeds), length)
    final = _ideal_final(_gate_slots(paulis, cliffs))
    return [GateSequence(paulis[i], cliffs[i], _TERMINAL[(int(final[i]), d[2])],
                         OUTCOMES[d[2]], int(s))
            for i, (s, d) in enumerate(zip(seeds, draws))]


def generate_sequence(length: int, seed: int) -> GateSequence:
    return generate_sequences(length, [seed])[0]


def compile_to_pulses(seq: GateSequence, timing: Timing = DEFAULT_TIMING,
                      rabi: float | None = None, detuning: float = 0.0,
                      dead_time: bool = True) -> list[PulseSpec]:
    """Physical pulse train for ``seq``; each slot is followed by the dead time."""
    rabi = timing.rabi if rabi is None else rabi
    out = []
    for code in seq.slots():
        if code == IDLE:
            out.append(PulseSpec.delay(timing.pi2_duration, detuning))
        else:
            out.append(PulseSpec.drive(rabi, timing.pi2_duration, code * np.pi / 2, detuning))
        if dead_time and timing.dead_time > 0:
            out.append(PulseSpec.delay(timing.dead_time, detuning))
    return out


def logical_unitary(seq: GateSequence) -> np.ndarray:
    """Ideal gate product without compilation, z Paulis as explicit rotations."""
    U = np.eye(2, dtype=complex)
    for p, c in zip(seq.paulis, seq.cliffords):
        label = PAULIS[p]
        if label[1] in "xy":
            U = rotation(_AXIS_INDEX[label] * np.pi / 2, np.pi) @ U
        elif label[1] == "z":
            U = z_rotation(np.pi if label[0] == "+" else -np.pi) @ U
        U = rotation(int(c) * np.pi / 2, np.pi / 2) @ U
    return U


# ---------------------------------------------------------------------------
# error models and simulation

@dataclass(frozen=True)
class ErrorModel:
    """Imperfections applied to the compiled pulse train.

    ``detuning`` is drive minus bare qubit frequency (Hz).  ``ac_zeeman`` is
    the shift of the qubit transition while the drive is on; pulses see
    ``detuning - ac_zeeman``.  ``depolarizing`` injects a stochastic
    per-gate error whose contribution to the error per gate equals its value.
    """

    detuning: float = 0.0
    rabi_offset: float = 0.0
    ac_zeeman: float = 0.0
    dead_time: bool = True
    sixteen_level: bool = False
    polarization: Polarization = CALIBRATED_POLARIZATION
    field: float | None = None
    depolarizing: float = 0.0
    timing: Timing = DEFAULT_TIMING

    def __post_init__(self):
        if not 0 <= self.depolarizing < 0.5:
            raise ValueError("depolarizing error must be in [0, 0.5)")
        if self.rabi_offset <= -1:
            raise ValueError("rabi_offset must exceed -1")


IDEAL = ErrorModel()
# nominal conditions of the sampling study, off-resonant effects neglected
NOMINAL_CONDITIONS = ErrorModel(detuning=4.5, rabi_offset=5e-4)


def slot_library(model: ErrorModel, constants: AtomicConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Propagators for slot codes 0-5 (pulse/idle followed by dead time)."""
    t = model.timing
    rabi = t.rabi * (1.0 + model.rabi_offset)
    if model.sixteen_level:
        B = model.field if model.field is not None else atomic.field_independent_point(c=constants)
        free = lambda dur: sixteen_level_propagator(None, dur, B, constants,
                                                    frame_frequency=_drive_frequency(model, B, constants))
        dead = free(t.dead_time) if model.dead_time and t.dead_time > 0 else np.eye(16)
        mats = []
        for k in range(4):
            d = Drive(rabi, model.polarization, phase=k * np.pi / 2, detuning=model.detuning)
            mats.append(dead @ sixteen_level_propagator(d, t.pi2_duration, B, constants))
        mats.append(dead @ free(t.pi2_duration))
        mats.append(np.eye(16))
        return np.array(mats, dtype=complex)
    pulse_det = model.detuning - model.ac_zeeman
    dead = (two_level_propagator(PulseSpec.delay(t.dead_time, model.detuning))
            if model.dead_time and t.dead_time > 0 else np.eye(2))
    mats = [dead @ two_level_propagator(PulseSpec.drive(rabi, t.pi2_duration, k * np.pi / 2, pulse_det))
            for k in range(4)]
    mats.append(dead @ two_level_propagator(PulseSpec.delay(t.pi2_duration, model.detuning)))
    mats.append(np.eye(2))
    return np.array(mats, dtype=complex)


def _drive_frequency(model, B, c):
    return atomic.transition_frequency(atomic.QUBIT_DOWN, atomic.QUBIT_UP, B, c) + model.detuning


def _padded_slots(seqs: Sequence[GateSequence]) -> np.ndarray:
    body = _gate_slots(np.stack([s.paulis for s in seqs]), np.stack([s.cliffords for s in seqs]))
    term = np.full((len(seqs), 2), NOOP, dtype=np.int8)
    for i, s in enumerate(seqs):
        term[i, :len(s.terminal)] = s.terminal
    return np.concatenate([body, term], axis=1)


def _propagate(lib: np.ndarray, slots: np.ndarray, targets: np.ndarray) -> np.ndarray:
    d = lib.shape[1]
    up, down = (0, 1) if d == 2 else (atomic.STATE_INDEX[atomic.QUBIT_UP],
                                      atomic.STATE_INDEX[atomic.QUBIT_DOWN])
    psi = np.zeros((slots.shape[0], d), dtype=complex)
    psi[:, up] = 1.0
    for k in range(slots.shape[1]):
        psi = np.einsum("nij,nj->ni", lib[slots[:, k]], psi)
    idx = np.where(targets == UP, up, down)
    p_ok = np.abs(psi[np.arange(len(idx)), idx]) ** 2
    return np.clip(1.0 - p_ok, 0.0, 1.0)


def simulate_sequences(seqs: Sequence[GateSequence], model: ErrorModel = IDEAL,
                       constants: AtomicConstants = DEFAULT_CONSTANTS,
                       threads: int = 1, chunk: int = 1024) -> np.ndarray:
    """Expected failure probability of each sequence (prepared in |up>)."""
    if not seqs:
        return np.zeros(0)
    lib = slot_library(model, constants)
    lengths = np.array([len(s) for s in seqs])
    out = np.empty(len(seqs))
    # equal lengths share one padded array; group otherwise
    groups: dict[int, list[int]] = {}
    for i, L in enumerate(lengths):
        groups.setdefault(int(L), []).append(i)
    jobs = []
    for L, idx in groups.items():
        for start in range(0, len(idx), chunk):
            jobs.append(idx[start:start + chunk])

    def run(idx):
        sub = [seqs[i] for i in idx]
        targets = np.array([OUTCOMES.index(s.expected_outcome) for s in sub])
        return idx, _propagate(lib, _padded_slots(sub), targets)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    for idx, p in results:
        out[idx] = p
    if model.depolarizing:
        shrink = (1.0 - 2.0 * model.depolarizing) ** lengths
        out = 0.5 * (1.0 - shrink * (1.0 - 2.0 * out))
    return out


def simulate_sequence(seq: GateSequence, model: ErrorModel = IDEAL,
                      constants: AtomicConstants = DEFAULT_CONSTANTS) -> float:
    return float(simulate_sequences([seq], model, constants)[0])


def sequence_propagator(seq: GateSequence, model: ErrorModel = IDEAL,
                        constants: AtomicConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Full propagator of the compiled sequence (slot library composed)."""
    lib = slot_library(model, constants)
    return compose([lib[c] for c in seq.slots()], dim=lib.shape[1])


# ---------------------------------------------------------------------------
# sampled benchmarking and fitting

@dataclass(frozen=True)
class BenchmarkPoint:
    length: int
    trials: int
    failures: int
    sequences: int = 32

    def __post_init__(self):
        if self.failures > self.trials or self.failures < 0:
            raise ValueError("failures must lie in [0, trials]")

    @property
    def error(self) -> float:
        return self.failures / self.trials

    @property
    def sigma(self) -> float:
        p = self.error
        return math.sqrt(p * (1 - p) / self.trials)


def combine_spam(p_seq, spam_error: float):
    """Outcome flip probability with a symmetric SPAM error."""
    return p_seq * (1 - spam_error) + (1 - p_seq) * spam_error


def run_benchmark(lengths: Sequence[int] = DEFAULT_LENGTHS, sequences_per_length: int = 32,
                  shots_per_sequence: int = 100, model: ErrorModel = IDEAL,
                  spam_error: float = 0.0, seed: int = 0, threads: int = 1,
                  constants: AtomicConstants = DEFAULT_CONSTANTS,
                  return_probabilities: bool = False):
    """Sampled benchmarking run, one ``BenchmarkPoint`` per length.

    Sequence and shot randomness come from per-sequence streams, so results
    do not depend on ``threads``.
    """
    if not len(lengths):
        raise ValueError("at least one sequence length is required")
    if shots_per_sequence < 1:
        raise ValueError("shots_per_sequence must be positive")
    if sequences_per_length < 1:
        raise ValueError("sequences_per_length must be positive")
    seeds = sequence_seeds(seed, len(lengths) * sequences_per_length)
    points, probs = [], []
    for i, L in enumerate(lengths):
        block = seeds[i * sequences_per_length:(i + 1) * sequences_per_length]
        seqs = generate_sequences(int(L), block)
        p = combine_spam(simulate_sequences(seqs, model, constants, threads), spam_error)
        fails = sum(int(make_rng([s, 1]).binomial(shots_per_sequence, pi)) for s, pi in zip(block, p))
        points.append(BenchmarkPoint(int(L), shots_per_sequence * len(seqs), fails, len(seqs)))
        probs.append(p)
    return (points, probs) if return_probabilities else points


@dataclass(frozen=True)
class EpgFit:
    slope: float
    intercept: float
    slope_uncertainty: float
    intercept_uncertainty: float
    reduced_chi2: float
    dof: int = 0

    def as_dict(self):
        return {"epg": self.slope, "epg_uncertainty": self.slope_uncertainty,
                "intercept": self.intercept, "intercept_uncertainty": self.intercept_uncertainty,
                "reduced_chi2": self.reduced_chi2, "dof": self.dof}


def _wls(x, y, sigma):
    w = 1.0 / sigma**2
    A = np.stack([np.ones_like(x), x], axis=1)
    cov = np.linalg.inv(A.T @ (A * w[:, None]))
    beta = cov @ (A.T @ (w * y))
    return beta, cov


def fit_epg(points: Sequence[BenchmarkPoint], iterations: int = 3) -> EpgFit:
    """Weighted straight-line fit of error against number of gates.

    Binomial weights use the fitted line's probability at each length
    (iterated), which avoids the zero-variance weights of points with few
    or no failures.  Uncertainties are 1-sigma (68%).
    """
    x = np.array([p.length for p in points], dtype=float)
    if len(np.unique(x)) < 2:
        raise ValueError("fit needs at least two distinct sequence lengths")
    k = np.array([p.failures for p in points], dtype=float)
    n = np.array([p.trials for p in points], dtype=float)
    y = k / n
    p_model = (k + 0.5) / (n + 1.0)
    for _ in range(max(1, iterations)):
        sigma = np.sqrt(p_model * (1 - p_model) / n)
        beta, cov = _wls(x, y, sigma)
        p_model = np.clip(beta[0] + beta[1] * x, 0.5 / n, 1 - 0.5 / n)
    sigma = np.sqrt(p_model * (1 - p_model) / n)
    beta, cov = _wls(x, y, sigma)
    resid = (y - (beta[0] + beta[1] * x)) / sigma
    dof = len(x) - 2
    chi2 = float(np.sum(resid**2) / dof) if dof > 0 else 0.0
    return EpgFit(float(beta[1]), float(beta[0]), float(np.sqrt(cov[1, 1])),
                  float(np.sqrt(cov[0, 0])), chi2, dof)


# ---------------------------------------------------------------------------
# simulation studies

def standard_set(length: int = 2000, n_sequences: int = 32, seed: int = 0) -> list[GateSequence]:
    return generate_sequences(length, sequence_seeds(seed, n_sequences))


def mean_epg(seqs: Sequence[GateSequence], model: ErrorModel,
             constants: AtomicConstants = DEFAULT_CONSTANTS, threads: int = 1) -> float:
    """Mean expected failure probability divided by the gate count."""
    p = simulate_sequences(seqs, model, constants, threads)
    return float(np.mean(p / np.array([len(s) for s in seqs])))


def scan_epg_vs_detuning(detunings: Sequence[float], dead_time: bool = True,
                         rabi_offset: float = 0.0, length: int = 2000,
                         n_sequences: int = 32, seed: int = 0, threads: int = 1,
                         sequences: Sequence[GateSequence] | None = None):
    """``(detuning, EPG)`` pairs over one fixed sequence set."""
    seqs = sequences if sequences is not None else standard_set(length, n_sequences, seed)
    return [(float(d), mean_epg(seqs, ErrorModel(detuning=d, rabi_offset=rabi_offset,
                                                 dead_time=dead_time), threads=threads))
            for d in detunings]


def scan_epg_vs_pulse_area(rabi_offsets: Sequence[float], detunings: Sequence[float] = (0.0, 4.5),
                           length: int = 2000, n_sequences: int = 32, seed: int = 0,
                           threads: int = 1, sequences: Sequence[GateSequence] | None = None):
    """``{detuning: [(rabi_offset, EPG), ...]}`` at fixed pulse duration."""
    seqs = sequences if sequences is not None else standard_set(length, n_sequences, seed)
    return {float(d): [(float(r), mean_epg(seqs, ErrorModel(detuning=d, rabi_offset=r),
                                           threads=threads)) for r in rabi_offsets]
            for d in detunings}


@dataclass(frozen=True)
class OffResonantResult:
    epg: float
    epg_sixteen: float
    epg_two_level: float
    ac_zeeman: float


def off_resonant_epg(polarization: Polarization = CALIBRATED_POLARIZATION,
                     detuning: float = 4.5, rabi_offset: float = 0.0,
                     field: float | None = None, length: int = 2000, n_sequences: int = 32,
                     seed: int = 0, threads: int = 1,
                     constants: AtomicConstants = DEFAULT_CONSTANTS,
                     sequences: Sequence[GateSequence] | None = None) -> OffResonantResult:
    """Spectator-transition error: 16-level EPG minus the matched 2-level EPG.

    The matched 2-level model carries the drive-induced a.c. Zeeman shift
    during pulses, so the difference isolates off-resonant excitation.
    """
    B = field if field is not None else atomic.field_independent_point(c=constants)
    seqs = sequences if sequences is not None else standard_set(length, n_sequences, seed)
    rabi = DEFAULT_TIMING.rabi * (1 + rabi_offset)
    ac = atomic.ac_zeeman_shift(rabi, polarization, B, constants)
    full = ErrorModel(detuning=detuning, rabi_offset=rabi_offset, sixteen_level=True,
                      polarization=polarization, field=B)
    matched = ErrorModel(detuning=detuning, rabi_offset=rabi_offset, ac_zeeman=ac)
    e16 = mean_epg(seqs, full, constants, threads)
    e2 = mean_epg(seqs, matched, constants, threads)
    return OffResonantResult(e16 - e2, e16, e2, ac)


@dataclass(frozen=True)
class SamplingResult:
    samples: np.ndarray
    mean: float
    std: float
    mean_uncertainty: float
    std_uncertainty: float

    def histogram(self, bins: int = 30):
        return np.histogram(self.samples, bins=bins)


def sampling_distribution(n_sets: int = 500, set_size: int = 32, length: int = 2000,
                          model: ErrorModel = NOMINAL_CONDITIONS, seed: int = 0,
                          threads: int = 1,
                          constants: AtomicConstants = DEFAULT_CONSTANTS) -> SamplingResult:
    """Per-set mean EPG over ``n_sets`` independent sets, with a normal fit."""
    seeds = sequence_seeds(seed, n_sets * set_size)
    per_seq = np.empty(n_sets * set_size)
    batch = 4096
    for start in range(0, len(seeds), batch):
        seqs = generate_sequences(length, seeds[start:start + batch])
        per_seq[start:start + len(seqs)] = simulate_sequences(seqs, model, constants, threads) / length
    samples = per_seq.reshape(n_sets, set_size).mean(axis=1)
    mu, sd = stats.norm.fit(samples)
    return SamplingResult(samples, float(mu), float(sd), float(sd / np.sqrt(n_sets)),
                          float(sd / np.sqrt(2 * max(n_sets - 1, 1))))
