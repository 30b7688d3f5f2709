"""
Ramsey spectroscopy on the clock transition.

Fringes follow P_up(phi) = 1/2 [1 + C cos(phi + Phi)] where phi is the phase
of the second pi/2 pulse and Phi = 2 pi * integral of (f_LO - f_atom) over
the free precession, the same sign convention as a drive detuning.
Contrast is lost by averaging Phi over shot-to-shot field offsets (through
the clock parabola) and local-oscillator phase diffusion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .atomic import (DEFAULT_CONSTANTS, FIELD_PROBE, QUBIT_DOWN, QUBIT_UP, AtomicConstants,
                     field_independent_point, transition_curvature, transition_frequency,
                     transition_slope)
from .benchmarking import make_rng

DEFAULT_DELAYS = (0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
DRIFT_KINDS = ("none", "static", "random_walk")

# White frequency noise giving a 50 s exponential contrast decay together
# with the default 1 mG quasi-static field noise (calibrated, not predicted).
CALIBRATED_LO_INSTABILITY = 1.0e-11


@dataclass(frozen=True)
class NoiseModel:
    """Shot-to-shot noise sources.

    ``field_sigma`` (G) is the rms offset from B0: drawn once per shot for
    ``static`` drift, or the rms random-walk spread per sqrt(second) for
    ``random_walk``.  ``lo_fractional_instability`` is the white-FM level
    (Allan deviation at 1 s).  ``contrast_floor`` is a fractional contrast
    loss independent of t_R (e.g. readout degradation).
    """
    field_offset_drift: str = "static"
    field_sigma: float = 1e-3
    lo_fractional_instability: float = CALIBRATED_LO_INSTABILITY
    contrast_floor: float = 0.0

    def __post_init__(self):
        if self.field_offset_drift not in DRIFT_KINDS:
            raise ValueError(f"field_offset_drift must be one of {DRIFT_KINDS}")
        for name in ("field_sigma", "lo_fractional_instability", "contrast_floor"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.contrast_floor > 1:
            raise ValueError("contrast_floor must not exceed 1")


NOISELESS = NoiseModel("none", 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RamseyConfig:
    free_precession: float = 1.0
    phase_points: tuple = tuple(np.linspace(0, 2 * np.pi, 8, endpoint=False))
    shots_per_point: int = 100
    noise: NoiseModel = field(default_factory=NoiseModel)
    detuning: float = 0.0          # LO minus clock frequency at B0 (Hz)
    field_offset: float = 0.0      # static B - B0 (G)

    def __post_init__(self):
        if self.free_precession < 0:
            raise ValueError("free_precession must be >= 0")
        if len(self.phase_points) < 4:
            raise ValueError("need at least 4 phase points for a contrast fit")
        if self.shots_per_point < 1:
            raise ValueError("shots_per_point must be positive")


@dataclass(frozen=True, eq=False)
class Fringe:
    phases: np.ndarray
    p_up: np.ndarray          # measured fraction per phase point
    expected: np.ndarray      # shot-averaged probability per phase point
    contrast: float
    contrast_sigma: float
    fringe_phase: float
    offset: float


@dataclass(frozen=True)
class CoherenceFit:
    t2_star: float
    uncertainty: float
    c0: float
    rate: float
    rate_sigma: float
    reduced_chi2: float

    def __post_init__(self):
        if not self.t2_star > 0:
            raise ValueError("t2_star must be positive")

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.t2_star)

    def as_dict(self):
        return {"t2_star": self.t2_star, "uncertainty": self.uncertainty, "c0": self.c0,
                "rate": self.rate, "rate_sigma": self.rate_sigma, "reduced_chi2": self.reduced_chi2}


def clock_parameters(c: AtomicConstants = DEFAULT_CONSTANTS):
    """(B0, f0, d2f/dB2) of the clock transition."""
    B0 = field_independent_point(c=c)
    return B0, transition_frequency(QUBIT_DOWN, QUBIT_UP, B0, c), transition_curvature(QUBIT_DOWN, QUBIT_UP, B0, c)


def parabola_phase(delta_B, t_R, c: AtomicConstants = DEFAULT_CONSTANTS):
    """Phase lag accumulated over ``t_R`` from a static offset ``delta_B``:
    -2 pi * (1/2 f'' dB^2) * t_R (the atom runs ahead of a fixed LO)."""
    _, _, curv = clock_parameters(c)
    return -2 * np.pi * 0.5 * curv * np.asarray(delta_B) ** 2 * t_R


def trajectory_phase(B_of_t: Callable, t_R: float, c: AtomicConstants = DEFAULT_CONSTANTS,
                     lo_frequency: float | None = None, n: int = 401) -> float:
    """2 pi * integral of (f_LO - f(B(t))) over [0, t_R] using the exact
    transition frequency (Simpson rule on ``n`` points)."""
    from scipy.integrate import simpson
    B0, f0, _ = clock_parameters(c)
    f_lo = f0 if lo_frequency is None else lo_frequency
    if t_R == 0:
        return 0.0
    t = np.linspace(0, t_R, n)
    B = np.broadcast_to(np.asarray(B_of_t(t), float), t.shape)
    df = (f_lo - f0) - (transition_frequency(QUBIT_DOWN, QUBIT_UP, B, c) - f0)
    return float(2 * np.pi * simpson(df, x=t))


def shot_phases(cfg: RamseyConfig, n: int, rng, c: AtomicConstants = DEFAULT_CONSTANTS,
                B_trajectory: Callable | None = None, steps: int = 64) -> np.ndarray:
    """Accumulated phase Phi for ``n`` independent shots."""
    rng = make_rng(rng)
    t_R = cfg.free_precession
    _, f0, curv = clock_parameters(c)
    base = 2 * np.pi * cfg.detuning * t_R
    nz = cfg.noise
    if B_trajectory is not None:
        base += trajectory_phase(B_trajectory, t_R, c)
        dB = np.zeros(n)
        phi = np.full(n, base)
    elif nz.field_offset_drift == "random_walk" and nz.field_sigma > 0 and t_R > 0:
        dt = t_R / steps
        walk = np.cumsum(rng.normal(0, nz.field_sigma * math.sqrt(dt), (n, steps)), axis=1)
        dB = cfg.field_offset + np.concatenate([np.zeros((n, 1)), walk], axis=1)
        mid = 0.5 * (dB[:, 1:] ** 2 + dB[:, :-1] ** 2)
        phi = base - 2 * np.pi * 0.5 * curv * mid.sum(axis=1) * dt
    else:
        sig = nz.field_sigma if nz.field_offset_drift == "static" else 0.0
        dB = cfg.field_offset + sig * rng.standard_normal(n)
        phi = base + parabola_phase(dB, t_R, c)
    if nz.lo_fractional_instability > 0 and t_R > 0:
        # white FM: LO phase diffuses with variance (2 pi f0 sigma_y)^2 t_R
        phi = phi + rng.normal(0, 2 * np.pi * f0 * nz.lo_fractional_instability * math.sqrt(t_R), n)
    return phi


def fit_fringe(phases, p_up, shots: int | None = None):
    """Least-squares fit of a + b cos(phi) + s sin(phi).

    Returns (contrast, contrast_sigma, fringe_phase, offset) where the fringe
    is a + C/2 cos(phi + fringe_phase).
    """
    phases = np.asarray(phases, float)
    y = np.asarray(p_up, float)
    A = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    a, b, s = coef
    amp = math.hypot(b, s)
    contrast = 2 * amp
    resid = y - A @ coef
    if shots:
        # shrink towards 1/2 so points at a fringe extremum keep finite weight
        q = (shots * np.clip(A @ coef, 0.0, 1.0) + 1.0) / (shots + 2.0)
        var = q * (1 - q) / shots
    else:
        dof = max(len(y) - 3, 1)
        var = np.full_like(y, max(resid @ resid / dof, 1e-300))
    cov = np.linalg.inv(A.T @ (A / var[:, None]))
    if amp > 0:
        g = np.array([0.0, b / amp, s / amp]) * 2
        sigma = math.sqrt(max(g @ cov @ g, 0.0))
    else:
        sigma = 2 * math.sqrt(0.5 * (cov[1, 1] + cov[2, 2]))
    return min(contrast, 1.0), sigma, math.atan2(-s, b), a


def ramsey_fringe(cfg: RamseyConfig, B_trajectory: Callable | None = None, rng=0,
                  c: AtomicConstants = DEFAULT_CONSTANTS) -> Fringe:
    """Simulated fringe: each shot of each phase point sees its own noise realisation."""
    rng = make_rng(rng)
    phases = np.asarray(cfg.phase_points, float)
    k = cfg.shots_per_point
    phi = shot_phases(cfg, k * len(phases), rng, c, B_trajectory).reshape(len(phases), k)
    scale = 1.0 - cfg.noise.contrast_floor
    p = 0.5 * (1 + scale * np.cos(phases[:, None] + phi))
    clicks = rng.random(p.shape) < p
    frac = clicks.mean(axis=1)
    contrast, sig, fphase, off = fit_fringe(phases, frac, k)
    return Fringe(phases, frac, p.mean(axis=1), contrast, sig, fphase, off)


def expected_contrast(t_R, noise: NoiseModel, c: AtomicConstants = DEFAULT_CONSTANTS):
    """Closed-form shot-averaged contrast for static Gaussian field noise and
    white-FM LO noise."""
    t_R = np.asarray(t_R, float)
    _, f0, curv = clock_parameters(c)
    out = np.full(t_R.shape, 1.0 - noise.contrast_floor)
    if noise.field_offset_drift == "static" and noise.field_sigma > 0:
        a = np.pi * curv * noise.field_sigma ** 2 * t_R
        out = out * (1 + 4 * a ** 2) ** -0.25      # |E exp(i a chi^2_1)|
    elif noise.field_offset_drift == "random_walk" and noise.field_sigma > 0:
        raise NotImplementedError("no closed form for random-walk drift")
    s = 2 * np.pi * f0 * noise.lo_fractional_instability
    return out * np.exp(-0.5 * s ** 2 * t_R)


def _decay(t, c0, rate):
    return c0 * np.exp(-rate * t)


def fit_contrast_decay(points) -> CoherenceFit:
    """Weighted fit of C0 exp(-t/T2*).

    ``points`` is a sequence of (t_R, contrast, sigma).  When the best-fit
    rate is negative, or zero to within a millionth of its uncertainty,
    the decay is unresolved and T2* = inf is returned.
    """
    pts = np.asarray(points, float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
        raise ValueError("points must be (t_R, contrast, sigma) triples, at least two")
    t, y, s = pts.T
    if np.any(s <= 0):
        raise ValueError("sigmas must be positive")
    popt, pcov = optimize.curve_fit(_decay, t, y, p0=(max(y[0], 1e-3), 1.0 / max(t.max(), 1e-9)),
                                    sigma=s, absolute_sigma=True)
    c0, rate = popt
    rate_sig = float(math.sqrt(max(pcov[1, 1], 0.0)))
    chi2 = float(np.sum(((y - _decay(t, *popt)) / s) ** 2) / max(len(t) - 2, 1))
    if rate <= 1e-6 * rate_sig:
        best = optimize.curve_fit(lambda tt, a: _decay(tt, a, 0.0), t, y, p0=(y[0],), sigma=s,
                                  absolute_sigma=True)[0]
        chi2 = float(np.sum(((y - best[0]) / s) ** 2) / max(len(t) - 2, 1))
        return CoherenceFit(math.inf, math.inf, float(best[0]), 0.0, rate_sig, chi2)
    return CoherenceFit(1.0 / rate, rate_sig / rate ** 2, float(c0), float(rate), rate_sig, chi2)


@dataclass(frozen=True, eq=False)
class RamseyRun:
    delays: np.ndarray
    fringes: list
    fit: CoherenceFit
    label: str = "calibration reproduction: noise levels tuned to give T2* near 50 s"

    def rows(self):
        return [(float(t), f.contrast, f.contrast_sigma, f.fringe_phase) for t, f in zip(self.delays, self.fringes)]


def ramsey_experiment(delays: Sequence[float] = DEFAULT_DELAYS, noise: NoiseModel = NoiseModel(),
                      shots_per_point: int = 100, phase_points: int = 8, seed: int = 0,
                      c: AtomicConstants = DEFAULT_CONSTANTS, detuning: float = 0.0) -> RamseyRun:
    """Fringes at each delay followed by the exponential contrast fit."""
    phases = tuple(np.linspace(0, 2 * np.pi, phase_points, endpoint=False))
    fringes = []
    for i, t in enumerate(delays):
        cfg = RamseyConfig(float(t), phases, shots_per_point, noise, detuning)
        fringes.append(ramsey_fringe(cfg, rng=make_rng([seed, i]), c=c))
    pts = [(t, f.contrast, max(f.contrast_sigma, 1e-6)) for t, f in zip(delays, fringes)]
    label = RamseyRun.label if noise != NOISELESS else "noiseless reference"
    return RamseyRun(np.asarray(delays, float), fringes, fit_contrast_decay(pts), label)


def clock_scan(B_values, c: AtomicConstants = DEFAULT_CONSTANTS):
    """Clock-transition frequency across a field scan."""
    B = np.asarray(B_values, float)
    return B, transition_frequency(QUBIT_DOWN, QUBIT_UP, B, c)


def default_scan_fields(c: AtomicConstants = DEFAULT_CONSTANTS, half_width: float = 0.5, step: float = 0.001):
    B0 = field_independent_point(c=c)
    n = int(round(half_width / step))
    return np.round(B0, 3) + step * np.arange(-n, n + 1)


# ---------------------------------------------------------------- field servo

@dataclass(frozen=True)
class ServoConfig:
    period: float = 10.0               # s between probe measurements
    gain: float = 1.0                  # proportional gain (unity: full correction)
    frequency_precision: float = 0.1   # Hz rms on the probe-frequency estimate
    duration: float = 3600.0
    initial_offset: float = 0.0        # G
    probe: tuple = FIELD_PROBE

    def __post_init__(self):
        if not self.period > 0 or not self.duration > 0:
            raise ValueError("period and duration must be positive")
        if not 0 < self.gain < 2:
            raise ValueError("gain must be in (0, 2) for a stable loop")
        if self.frequency_precision < 0:
            raise ValueError("frequency_precision must be >= 0")


@dataclass(frozen=True, eq=False)
class ServoTrace:
    times: np.ndarray
    residual: np.ndarray      # B_applied - B0 just before each measurement (G)
    correction: np.ndarray    # correction field after each update (G)

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.residual ** 2)))


def linear_drift(rate: float):
    return lambda t: rate * np.asarray(t, float)


def random_walk_drift(sigma: float, period: float, duration: float, rng):
    """Field random walk sampled on the servo grid (sigma in G/sqrt(s))."""
    rng = make_rng(rng)
    n = int(math.ceil(duration / period)) + 1
    steps = rng.normal(0, sigma * math.sqrt(period), n)
    steps[0] = 0.0
    path = np.cumsum(steps)
    return lambda t: np.interp(t, period * np.arange(n), path)


def field_servo(cfg: ServoConfig, B_true: Callable, rng=0, c: AtomicConstants = DEFAULT_CONSTANTS) -> ServoTrace:
    """Proportional field lock on the field-sensitive probe transition.

    ``B_true(t)`` is the uncorrected field offset from B0.  At each period
    the probe frequency is measured with Gaussian error, converted to a field
    estimate through the local slope, and the correction coil moves by
    ``-gain`` times the estimated offset.
    """
    rng = make_rng(rng)
    B0 = field_independent_point(c=c)
    f_ref = transition_frequency(*cfg.probe, B0, c)
    slope = transition_slope(*cfg.probe, B0, c)
    if slope == 0:
        raise ValueError("probe transition is field-independent at B0")
    times = np.arange(0.0, cfg.duration + 0.5 * cfg.period, cfg.period)
    corr = 0.0
    resid, corrs = [], []
    for t in times:
        offset = cfg.initial_offset + float(B_true(t)) + corr
        f_meas = transition_frequency(*cfg.probe, B0 + offset, c) + cfg.frequency_precision * rng.standard_normal()
        est = (f_meas - f_ref) / slope
        corr -= cfg.gain * est
        resid.append(offset)
        corrs.append(corr)
    return ServoTrace(times, np.array(resid), np.array(corrs))


def steady_state_lag(rate: float, cfg: ServoConfig) -> float:
    """Residual offset for a linear drift once the loop settles: rate*period/gain."""
    return rate * cfg.period / cfg.gain
