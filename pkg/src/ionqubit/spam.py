"""
State preparation and measurement (SPAM) pipeline.

Each stage is a 16x16 column-stochastic matrix acting on populations over
the ground hyperfine states: optical pumping to the stretch state with
microwave-enhanced clean-up, the microwave pi-pulse ladder into the qubit,
the ladder back out to the shelving basis, then shelving to D5/2 and
fluorescence detection.  Stage errors are composed incoherently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .atomic import (CALIBRATED_POLARIZATION, DEFAULT_CONSTANTS, QUBIT_DOWN, QUBIT_UP,
                     STATE_INDEX, STATES, AtomicConstants, HyperfineState, Polarization,
                     as_state, field_independent_point, transition_frequency)
from .benchmarking import make_rng
from .pulses import Drive, sixteen_level_propagator
from .readout import BRIGHT, DARK, DetectionModel, classify_counts, detection_error_budget, simulate_traces

H = HyperfineState
STRETCH = H(4, 4)
N_STATES = len(STATES)

# (4,+4) -> (3,+3) -> (4,+2) -> (3,+1) -> (4,0)
LADDER = ((H(4, 4), H(3, 3)), (H(3, 3), H(4, 2)), (H(4, 2), H(3, 1)), (H(3, 1), H(4, 0)))
PREP_PULSES = {"up": (0, 1, 2), "down": (0, 1, 2, 3)}
# |up> goes back to (4,+4); |down> goes to (3,+1) and stays bright
READOUT_PULSES = (2, 1, 0, 3)
PUMP_CLEANUP = ((H(4, 3), H(3, 3)), (H(4, 2), H(3, 2)))


def _e(s) -> np.ndarray:
    v = np.zeros(N_STATES)
    v[STATE_INDEX[as_state(s)]] = 1.0
    return v


def swap_matrix(a, b, error: float) -> np.ndarray:
    """Incoherent pi-pulse on ``a <-> b``: populations swap with probability 1-error."""
    M = np.eye(N_STATES)
    i, j = STATE_INDEX[as_state(a)], STATE_INDEX[as_state(b)]
    M[i, i] = M[j, j] = error
    M[i, j] = M[j, i] = 1.0 - error
    return M


# ---------------------------------------------------------------- pumping

@dataclass(frozen=True)
class PumpingModel:
    polarization_leakage: float = 0.02
    repetitions: int = 2
    pi_pulse_error: float = 0.5e-4
    leak_split: tuple = (0.7, 0.3)     # fraction of leakage into (4,+3), (4,+2)

    def __post_init__(self):
        if not 0.0 <= self.polarization_leakage < 1.0:
            raise ValueError("polarization_leakage must be in [0, 1)")
        if self.repetitions < 0:
            raise ValueError("repetitions must be >= 0")
        if not 0.0 <= self.pi_pulse_error <= 1.0:
            raise ValueError("pi_pulse_error must be in [0, 1]")
        if any(x < 0 for x in self.leak_split) or not math.isclose(sum(self.leak_split), 1.0):
            raise ValueError("leak_split must be non-negative and sum to 1")

    @property
    def pumped_distribution(self) -> np.ndarray:
        eps = self.polarization_leakage
        return ((1 - eps) * _e(STRETCH) + eps * self.leak_split[0] * _e(H(4, 3))
                + eps * self.leak_split[1] * _e(H(4, 2)))

    @property
    def recapture_ratio(self) -> float:
        """Factor by which each clean-up cycle multiplies the residual."""
        e, eps = self.pi_pulse_error, self.polarization_leakage
        return e + (1 - e) * eps


def pumping_matrix(m: PumpingModel) -> np.ndarray:
    """Two-frequency sigma+ pumping: every state ends in the pumped distribution."""
    return np.repeat(m.pumped_distribution[:, None], N_STATES, axis=1)


def clearout_matrix(m: PumpingModel) -> np.ndarray:
    """Single-frequency clear-out of F=3, re-pumped with the same leakage."""
    M = np.eye(N_STATES)
    d = m.pumped_distribution
    for s in STATES:
        if s.F == 3:
            M[:, STATE_INDEX[s]] = d
    return M


def pumping_stage(m: PumpingModel) -> np.ndarray:
    M = pumping_matrix(m)
    cycle = clearout_matrix(m)
    for a, b in PUMP_CLEANUP:
        cycle = cycle @ swap_matrix(a, b, m.pi_pulse_error)
    for _ in range(m.repetitions):
        M = cycle @ M
    return M


def simulate_pumping(m: PumpingModel, initial=None) -> np.ndarray:
    """Population over the 16 ground states after pumping and clean-up cycles."""
    p = np.full(N_STATES, 1.0 / N_STATES) if initial is None else np.asarray(initial, float)
    return pumping_stage(m) @ p


def pumping_error(m: PumpingModel) -> float:
    return float(1.0 - simulate_pumping(m)[STATE_INDEX[STRETCH]])


# ---------------------------------------------------------------- transfer

def transfer_chain_error(n_pulses: int, per_pulse_error) -> float:
    """``1 - prod(1 - e_i)`` for a chain of independent pulses."""
    if n_pulses not in (3, 4):
        raise ValueError("transfer chains have 3 or 4 pulses")
    e = np.broadcast_to(np.asarray(per_pulse_error, float), (n_pulses,))
    if np.any((e < 0) | (e > 1)):
        raise ValueError("per-pulse error must be in [0, 1]")
    return float(1.0 - np.prod(1.0 - e))


@dataclass(frozen=True)
class TransferModel:
    """Microwave pi-pulse ladder.

    In the simple mode every pulse swaps its pair with probability
    ``1 - per_pulse_error``.  The detailed mode builds each pulse from the
    16-level propagator at ``transfer_rabi`` (Hz), averaged over Gaussian
    field noise of rms ``field_noise`` (G) with the drive tuned to the
    nominal field.
    """
    per_pulse_error: float | tuple = 0.5e-4
    detailed: bool = False
    transfer_rabi: float = 270e3
    field_noise: float = 1e-3
    polarization: Polarization = CALIBRATED_POLARIZATION
    field: float | None = None
    quadrature_points: int = 15

    def __post_init__(self):
        e = np.atleast_1d(np.asarray(self.per_pulse_error, float))
        if e.size not in (1, len(LADDER)) or np.any((e < 0) | (e > 1)):
            raise ValueError("per_pulse_error must be a probability or one per ladder pulse")
        if self.field_noise < 0 or not self.transfer_rabi > 0:
            raise ValueError("field_noise must be >= 0 and transfer_rabi > 0")

    def pulse_errors(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.per_pulse_error, float), (len(LADDER),)).copy()


@lru_cache(maxsize=32)
def _detailed_pulses(rabi, noise, pol, B, n_quad, c):
    B0 = field_independent_point(c=c) if B is None else B
    x, w = np.polynomial.hermite_e.hermegauss(n_quad)
    w = w / w.sum()
    if noise == 0:
        x, w = np.zeros(1), np.ones(1)
    mats = []
    for pair in LADDER:
        drive = Drive(2 * np.pi * rabi, pol, frequency=transition_frequency(*pair, B0, c), reference=pair)
        T = np.zeros((N_STATES, N_STATES))
        for xi, wi in zip(x, w):
            U = sixteen_level_propagator(drive, 0.5 / rabi, B0 + noise * xi, c)
            T += wi * np.abs(U) ** 2
        mats.append(T / T.sum(axis=0, keepdims=True))
    return tuple(mats)


def ladder_matrices(t: TransferModel, c: AtomicConstants = DEFAULT_CONSTANTS) -> list[np.ndarray]:
    if t.detailed:
        return list(_detailed_pulses(t.transfer_rabi, t.field_noise, t.polarization,
                                     t.field, t.quadrature_points, c))
    return [swap_matrix(a, b, e) for (a, b), e in zip(LADDER, t.pulse_errors())]


def ladder_pulse_errors(t: TransferModel, c: AtomicConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Probability that each pulse fails to move population from its source."""
    mats = ladder_matrices(t, c)
    return np.array([1.0 - M[STATE_INDEX[b], STATE_INDEX[a]] for M, (a, b) in zip(mats, LADDER)])


# ---------------------------------------------------------------- shelving

def _shelve_table(stretch_error: float, bright_error: float) -> dict:
    table = {}
    spectator_f4 = {3: 0.30, 2: 0.12, 1: 0.05, 0: 0.02}
    for s in STATES:
        if s == STRETCH:
            table[s] = 1.0 - stretch_error
        elif s.F == 4:
            table[s] = spectator_f4.get(s.M, 0.01)
        else:
            table[s] = 1e-3
    table[QUBIT_UP] = bright_error
    return table


@dataclass(frozen=True)
class ShelvingModel:
    per_state_shelve_prob: Mapping

    def __post_init__(self):
        probs = {as_state(k): float(v) for k, v in dict(self.per_state_shelve_prob).items()}
        if set(probs) != set(STATES):
            missing = sorted(set(STATES) - set(probs))
            raise ValueError(f"shelve probabilities missing for {missing}")
        if any(not 0.0 <= p <= 1.0 for p in probs.values()):
            raise ValueError("shelve probabilities must be in [0, 1]")
        if probs[STRETCH] < max(probs.values()):
            raise ValueError("(4,+4) must have the largest shelve probability")
        object.__setattr__(self, "per_state_shelve_prob", probs)

    def vector(self) -> np.ndarray:
        return np.array([self.per_state_shelve_prob[s] for s in STATES])

    @property
    def stretch_error(self) -> float:
        return 1.0 - self.per_state_shelve_prob[STRETCH]

    @property
    def spectator_max(self) -> float:
        return max(p for s, p in self.per_state_shelve_prob.items() if s != STRETCH)

    @classmethod
    def preset(cls, name: str) -> "ShelvingModel":
        if name not in SHELVING_PRESETS:
            raise ValueError(f"unknown shelving preset {name!r}; choose from {sorted(SHELVING_PRESETS)}")
        return cls(_shelve_table(*SHELVING_PRESETS[name]))


# (stretch not shelved, bright-path (3,+1) wrongly shelved)
SHELVING_PRESETS = {"ideal": (1.0e-4, 1.0e-4), "broadened": (1.0e-4, 2.4e-4), "perfect": (0.0, 0.0)}


def shelving_error(s: ShelvingModel, entering_state) -> float:
    """Chance the shelving step gives the wrong bright/dark outcome for a state
    that should be dark only if it is the stretch state."""
    st = as_state(entering_state)
    p = s.per_state_shelve_prob[st]
    return 1.0 - p if st == STRETCH else p


# ---------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class SpamConfig:
    pumping: PumpingModel = field(default_factory=PumpingModel)
    transfer: TransferModel = field(default_factory=TransferModel)
    shelving: ShelvingModel = field(default_factory=lambda: ShelvingModel.preset("broadened"))
    detection: DetectionModel = field(default_factory=DetectionModel)
    stretch_only: bool = False


# uniform per-pulse error chosen so the full chain sums to the measured combined error
CALIBRATED_PULSE_ERROR = 1.0e-4


def calibrated_config(**kw) -> SpamConfig:
    base = SpamConfig(transfer=TransferModel(per_pulse_error=CALIBRATED_PULSE_ERROR),
                      shelving=ShelvingModel.preset("broadened"))
    return replace(base, **kw)


def ideal_config() -> SpamConfig:
    return SpamConfig(PumpingModel(0.0, 0, 0.0), TransferModel(per_pulse_error=0.0),
                      ShelvingModel.preset("perfect"),
                      DetectionModel(dark_rate=0.0, shelf_decay_lifetime=math.inf))


def _chain(indices, mats) -> np.ndarray:
    M = np.eye(N_STATES)
    for k in indices:
        M = mats[k] @ M
    return M


def stage_matrices(cfg: SpamConfig, prepared: str, c: AtomicConstants = DEFAULT_CONSTANTS):
    """Population maps for (prep_stretch, transfer_in, transfer_out)."""
    mats = ladder_matrices(cfg.transfer, c)
    if cfg.stretch_only:
        return pumping_stage(cfg.pumping), np.eye(N_STATES), np.eye(N_STATES)
    return pumping_stage(cfg.pumping), _chain(PREP_PULSES[prepared], mats), _chain(READOUT_PULSES, mats)


def shelved_probability(cfg: SpamConfig, prepared: str, c=DEFAULT_CONSTANTS) -> float:
    pump, tin, tout = stage_matrices(cfg, prepared, c)
    p = tout @ tin @ pump @ np.full(N_STATES, 1.0 / N_STATES)
    return float(cfg.shelving.vector() @ p)


def _expected_dark(prepared: str, stretch_only: bool) -> bool:
    return stretch_only or prepared == "up"


def analytic_error(cfg: SpamConfig, prepared: str, detection_rates, c=DEFAULT_CONSTANTS) -> float:
    """Probability of a wrong inference for one prepared state.

    ``detection_rates`` is (bright_error, dark_error) of the classifier.
    """
    eb, ed = detection_rates
    ps = shelved_probability(cfg, prepared, c)
    if _expected_dark(prepared, cfg.stretch_only):
        return ps * ed + (1 - ps) * (1 - eb)
    return ps * (1 - ed) + (1 - ps) * eb


def _states(cfg):
    return ("up",) if cfg.stretch_only else ("up", "down")


def analytic_combined(cfg: SpamConfig, detection_rates, c=DEFAULT_CONSTANTS) -> float:
    return float(np.mean([analytic_error(cfg, s, detection_rates, c) for s in _states(cfg)]))


@dataclass(frozen=True)
class SpamBudget:
    prep_stretch: float
    transfer_in: float
    transfer_out: float
    shelving: float
    detection: float
    combined: float

    @property
    def rows(self) -> dict:
        return {"stretch state preparation": self.prep_stretch,
                "transfer to qubit": self.transfer_in,
                "transfer from qubit": self.transfer_out,
                "shelving transfer": self.shelving,
                "fluorescence detection": self.detection}

    @property
    def sum_of_parts(self) -> float:
        return sum(self.rows.values())

    def as_dict(self):
        d = dict(self.rows)
        d["combined"] = self.combined
        d["sum_of_parts"] = self.sum_of_parts
        return d


def _isolate(cfg: SpamConfig, stage: str) -> SpamConfig:
    """Copy of ``cfg`` with every stage ideal except ``stage``."""
    ideal = ideal_config()
    keep = {"prep_stretch": "pumping", "shelving": "shelving", "detection": "detection"}
    out = replace(ideal, stretch_only=cfg.stretch_only)
    if stage in keep:
        return replace(out, **{keep[stage]: getattr(cfg, keep[stage])})
    return replace(out, transfer=cfg.transfer)


def _stage_transfer_error(cfg, which, c):
    """Transfer-in or transfer-out error with the other ladder made perfect."""
    if cfg.stretch_only:
        return 0.0
    iso = _isolate(cfg, "transfer")
    mats_real = ladder_matrices(cfg.transfer, c)
    mats_ideal = ladder_matrices(TransferModel(per_pulse_error=0.0), c)
    errs = []
    for prepared in ("up", "down"):
        tin = _chain(PREP_PULSES[prepared], mats_real if which == "in" else mats_ideal)
        tout = _chain(READOUT_PULSES, mats_real if which == "out" else mats_ideal)
        p = tout @ tin @ _e(STRETCH)
        ps = float(iso.shelving.vector() @ p)
        errs.append(1 - ps if prepared == "up" else ps)
    return float(np.mean(errs))


def spam_budget(cfg: SpamConfig, detection_rates, c=DEFAULT_CONSTANTS) -> SpamBudget:
    """Per-stage errors (each with all other stages ideal) and the combined error."""
    det = _isolate(cfg, "detection")
    return SpamBudget(
        prep_stretch=analytic_combined(_isolate(cfg, "prep_stretch"), (0.0, 0.0), c),
        transfer_in=_stage_transfer_error(cfg, "in", c),
        transfer_out=_stage_transfer_error(cfg, "out", c),
        shelving=analytic_combined(_isolate(cfg, "shelving"), (0.0, 0.0), c),
        detection=analytic_combined(det, detection_rates, c),
        combined=analytic_combined(cfg, detection_rates, c),
    )


@dataclass(frozen=True, eq=False)
class SpamResult:
    budget: SpamBudget
    errors: dict            # prepared state -> measured error fraction
    sigmas: dict
    shots: int
    combined: float
    combined_sigma: float
    log_ratios: dict        # prepared state -> per-shot log(p_up/p_down)
    detection_rates: tuple

    def as_dict(self):
        return {"budget": self.budget.as_dict(), "measured": dict(self.errors),
                "measured_sigma": dict(self.sigmas), "combined": self.combined,
                "combined_sigma": self.combined_sigma, "shots_per_state": self.shots,
                "detection_bright_error": self.detection_rates[0],
                "detection_dark_error": self.detection_rates[1]}


def _sample_categorical(P: np.ndarray, idx: np.ndarray, rng) -> np.ndarray:
    """Next-state draw for each shot given column-stochastic ``P``."""
    cdf = np.cumsum(P[:, idx], axis=0)
    u = rng.random(idx.size)
    return np.minimum((u[None, :] > cdf).sum(axis=0), N_STATES - 1)


def _run_state(cfg, prepared, n, seed, c, chunk=50_000):
    pump, tin, tout = stage_matrices(cfg, prepared, c)
    shelve = cfg.shelving.vector()
    dark_expected = _expected_dark(prepared, cfg.stretch_only)
    wrong = 0
    ratios = []
    for k, start in enumerate(range(0, n, chunk)):
        m = min(chunk, n - start)
        rng = make_rng([seed, 0 if prepared == "up" else 1, k])
        idx = rng.integers(0, N_STATES, m)
        for P in (pump, tin, tout):
            idx = _sample_categorical(P, idx, rng)
        shelved = rng.random(m) < shelve[idx]
        counts = np.empty((m, cfg.detection.n_bins), dtype=np.int64)
        if shelved.any():
            counts[shelved] = simulate_traces(DARK, cfg.detection, int(shelved.sum()), rng)
        if (~shelved).any():
            counts[~shelved] = simulate_traces(BRIGHT, cfg.detection, int((~shelved).sum()), rng)
        up, r = classify_counts(counts, cfg.detection)
        wrong += int(np.sum(~up)) if dark_expected else int(np.sum(up))
        ratios.append(r)
    return wrong, np.concatenate(ratios)


def spam_experiment(cfg: SpamConfig, n_shots_per_state: int = 150_000, seed: int = 0,
                    detection_shots: int = 150_000, c: AtomicConstants = DEFAULT_CONSTANTS) -> SpamResult:
    """Full-chain Monte Carlo of preparation and readout.

    Each shot starts in a random ground state, is sampled through pumping,
    transfer in, transfer out and shelving, and its photon trace is
    simulated and classified.  The budget rows come from the population
    model with detection rates estimated by a separate Monte Carlo.
    """
    if n_shots_per_state < 1:
        raise ValueError("n_shots_per_state must be positive")
    db = detection_error_budget(cfg.detection, detection_shots, seed=seed + 1)
    rates = (db.bright_error, db.dark_error)
    errors, sigmas, ratios = {}, {}, {}
    for prepared in _states(cfg):
        w, r = _run_state(cfg, prepared, n_shots_per_state, seed, c)
        p = w / n_shots_per_state
        errors[prepared] = p
        sigmas[prepared] = math.sqrt(max(p * (1 - p), 1.0 / n_shots_per_state) / n_shots_per_state)
        ratios[prepared] = r
    comb = float(np.mean(list(errors.values())))
    comb_sig = math.sqrt(sum(s ** 2 for s in sigmas.values())) / len(sigmas)
    return SpamResult(spam_budget(cfg, rates, c), errors, sigmas, n_shots_per_state,
                      comb, comb_sig, ratios, rates)


def llr_histogram(result: SpamResult, bins: Sequence[float] | int = 80, span=(-60.0, 60.0)):
    """``(edges, counts)`` of per-shot log-likelihood ratios, counts keyed by prepared state.

    Values outside ``span`` are clipped into the end bins.
    """
    edges = np.linspace(*span, bins + 1) if isinstance(bins, int) else np.asarray(bins)
    out = {k: np.histogram(np.clip(v, edges[0], edges[-1]), edges)[0] for k, v in result.log_ratios.items()}
    return edges, out
