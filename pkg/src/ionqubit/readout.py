"""
Time-resolved fluorescence readout of a shelved ion.

The |down> qubit state is read out bright (scattering at ``bright_rate`` on
top of the background ``dark_rate``).  The |up> state is shelved in the
metastable D5/2 level and is dark until it decays, after which it scatters
like a bright ion.  Shots are classified by comparing the likelihood of the
binned photon counts under the two hypotheses, marginalising the dark
hypothesis over the decay time.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import special, stats

from .benchmarking import make_rng

BRIGHT, DARK = "bright", "dark"


@dataclass(frozen=True)
class DetectionModel:
    bright_rate: float = 50_000.0
    dark_rate: float = 10_000.0
    shelf_decay_lifetime: float = 1.168
    detection_duration: float = 1.0e-3
    bin_width: float = 1.0e-4

    def __post_init__(self):
        for name in ("bright_rate", "dark_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.detection_duration > 0 or not self.bin_width > 0:
            raise ValueError("detection_duration and bin_width must be positive")
        if not self.shelf_decay_lifetime > 0:
            raise ValueError("shelf_decay_lifetime must be positive")
        ratio = self.detection_duration / self.bin_width
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError("bin_width must divide detection_duration")

    @property
    def n_bins(self) -> int:
        return int(round(self.detection_duration / self.bin_width))

    def bin_edges(self) -> np.ndarray:
        return np.arange(self.n_bins + 1) * self.bin_width


@dataclass(frozen=True, eq=False)
class PhotonTrace:
    bins: np.ndarray
    truth: str | None = None

    @property
    def total(self) -> int:
        return int(np.sum(self.bins))


class Classification(NamedTuple):
    p_down: float
    p_up: float
    decision: str
    log_ratio: float


def _means_after_decay(t_decay: np.ndarray, m: DetectionModel) -> np.ndarray:
    """Per-bin expected counts for decay at ``t_decay`` (shape (n,) -> (n, bins))."""
    edges = m.bin_edges()
    lit = np.clip(edges[None, 1:] - np.maximum(edges[None, :-1], t_decay[:, None]), 0.0, m.bin_width)
    return m.dark_rate * m.bin_width + m.bright_rate * lit


def simulate_traces(truth, m: DetectionModel, n: int, rng) -> np.ndarray:
    """``(n, bins)`` photon counts for shots of one truth label."""
    rng = make_rng(rng)
    if truth == BRIGHT:
        mean = np.full((n, m.n_bins), (m.bright_rate + m.dark_rate) * m.bin_width)
    elif truth == DARK:
        t_decay = rng.exponential(m.shelf_decay_lifetime, n)
        mean = _means_after_decay(t_decay, m)
    else:
        raise ValueError(f"truth must be {BRIGHT!r} or {DARK!r}")
    return rng.poisson(mean)


def simulate_trace(truth: str, m: DetectionModel, rng) -> PhotonTrace:
    return PhotonTrace(simulate_traces(truth, m, 1, rng)[0], truth)


def _poisson_logpmf(n, mu):
    return special.xlogy(n, mu) - mu - special.gammaln(n + 1)


_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(12)


def log_likelihoods(counts, m: DetectionModel):
    """``(log L_down, log L_up)`` for an ``(n, bins)`` count array.

    The dark hypothesis sums the no-decay term and the decay-in-bin-j terms;
    inside the decay bin the Poisson mean is integrated over the decay time
    with Gauss-Legendre quadrature against the exponential density.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    if counts.shape[1] != m.n_bins:
        raise ValueError(f"trace has {counts.shape[1]} bins, model expects {m.n_bins}")
    w = m.bin_width
    mu_b = (m.bright_rate + m.dark_rate) * w
    mu_d = m.dark_rate * w
    lb = _poisson_logpmf(counts, mu_b)
    ld = _poisson_logpmf(counts, mu_d)
    log_down = lb.sum(axis=1)
    tau = m.shelf_decay_lifetime
    T = m.detection_duration
    no_decay = ld.sum(axis=1) - (T / tau if np.isfinite(tau) else 0.0)
    if not np.isfinite(tau):
        return log_down, no_decay
    nb = m.n_bins
    prefix = np.concatenate([np.zeros((len(counts), 1)), np.cumsum(ld, axis=1)], axis=1)[:, :nb]
    suffix = np.concatenate([np.cumsum(lb[:, ::-1], axis=1)[:, ::-1][:, 1:],
                             np.zeros((len(counts), 1))], axis=1)
    terms = [no_decay]
    u = 0.5 * (_NODES + 1.0)           # fractional decay position in the bin
    for j in range(nb):
        t = (j + u) * w
        mu = mu_d + m.bright_rate * w * (1.0 - u)
        log_pdf = -np.log(tau) - t / tau + np.log(0.5 * w * _WEIGHTS)
        inner = _poisson_logpmf(counts[:, j:j + 1], mu[None, :]) + log_pdf[None, :]
        terms.append(prefix[:, j] + special.logsumexp(inner, axis=1) + suffix[:, j])
    log_up = special.logsumexp(np.stack(terms, axis=1), axis=1)
    return log_down, log_up


def classify_counts(counts, m: DetectionModel):
    """Vectorised decisions: True where |up> (dark) is inferred; ties go to |up>."""
    ld, lu = log_likelihoods(counts, m)
    return lu >= ld, lu - ld


def classify(trace, m: DetectionModel) -> Classification:
    bins = trace.bins if isinstance(trace, PhotonTrace) else np.asarray(trace)
    ld, lu = log_likelihoods(bins[None, :], m)
    r = float(lu[0] - ld[0])
    p_up = float(special.expit(r))
    return Classification(1.0 - p_up, p_up, "up" if r >= 0 else "down", r)


def count_threshold(m: DetectionModel) -> float:
    """Total-count threshold equivalent to the classifier without shelf decay:
    |up> is inferred for totals at or below the returned value."""
    if m.dark_rate <= 0:
        return 0.0
    return m.bright_rate * m.detection_duration / math.log1p(m.bright_rate / m.dark_rate)


def threshold_error_rates(m: DetectionModel):
    """Closed-form ``(bright_error, dark_error)`` for a never-decaying shelf."""
    n_star = math.floor(count_threshold(m))
    T = m.detection_duration
    bright = stats.poisson.cdf(n_star, (m.bright_rate + m.dark_rate) * T)
    dark = stats.poisson.sf(n_star, m.dark_rate * T) if m.dark_rate > 0 else 0.0
    return float(bright), float(dark)


@dataclass(frozen=True)
class DetectionBudget:
    bright_error: float
    dark_error: float
    bright_sigma: float
    dark_sigma: float
    shots: int
    lifetime_sensitivity: float

    @property
    def combined(self) -> float:
        return 0.5 * (self.bright_error + self.dark_error)

    @property
    def combined_sigma(self) -> float:
        return 0.5 * math.hypot(self.bright_sigma, self.dark_sigma)

    def as_dict(self):
        return {"bright_error": self.bright_error, "dark_error": self.dark_error,
                "bright_sigma": self.bright_sigma, "dark_sigma": self.dark_sigma,
                "combined": self.combined, "combined_sigma": self.combined_sigma,
                "shots_per_side": self.shots,
                "dark_error_per_lifetime_fraction": self.lifetime_sensitivity}


CHUNK = 50_000


def misclassification_rate(truth: str, m: DetectionModel, shots: int, seed: int = 0) -> int:
    """Number of misclassified shots out of ``shots``.

    Shots are drawn in fixed-size chunks, each with its own generator keyed
    by (seed, side, chunk index).
    """
    side = 0 if truth == BRIGHT else 1
    wrong = 0
    for k, start in enumerate(range(0, shots, CHUNK)):
        n = min(CHUNK, shots - start)
        counts = simulate_traces(truth, m, n, make_rng([seed, side, k]))
        up, _ = classify_counts(counts, m)
        wrong += int(np.sum(up)) if truth == BRIGHT else int(np.sum(~up))
    return wrong


def detection_error_budget(m: DetectionModel, shots: int = 150_000, seed: int = 0) -> DetectionBudget:
    """Monte Carlo misclassification rate for each prepared side."""
    if shots < 1:
        raise ValueError("shots must be positive")
    eb = misclassification_rate(BRIGHT, m, shots, seed) / shots
    ed = misclassification_rate(DARK, m, shots, seed) / shots
    sig = lambda p: math.sqrt(max(p * (1 - p), 1.0 / shots) / shots)
    # decay-limited dark error scales as duration/lifetime: d(err)/d(ln tau) ~ -err
    return DetectionBudget(eb, ed, sig(eb), sig(ed), shots, -ed)


def read_traces_csv(path, m: DetectionModel | None = None) -> list[PhotonTrace]:
    """Traces from a CSV with one shot per row of per-bin counts.

    An optional ``truth`` column (bright/dark) is carried through; other
    non-numeric columns are rejected.
    """
    out = []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        truth_col = header.index("truth") if "truth" in header else None
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            truth = row[truth_col] if truth_col is not None else None
            vals = [v for i, v in enumerate(row) if i != truth_col]
            try:
                bins = np.array([int(v) for v in vals])
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: non-integer count") from exc
            if np.any(bins < 0):
                raise ValueError(f"{path}:{line_no}: negative count")
            if m is not None and len(bins) != m.n_bins:
                raise ValueError(f"{path}:{line_no}: {len(bins)} bins, expected {m.n_bins}")
            out.append(PhotonTrace(bins, truth or None))
    return out


def write_traces_csv(path, traces: Sequence[PhotonTrace]):
    n = len(traces[0].bins)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"bin{i}" for i in range(n)] + ["truth"])
        for t in traces:
            w.writerow([int(x) for x in t.bins] + [t.truth or ""])
