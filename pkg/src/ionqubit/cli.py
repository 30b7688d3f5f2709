"""
Command-line runner.

    ionqubit [--config FILE] [--seed N] [--threads N] [--out DIR] <command> [options]

Every command writes CSV and/or JSON files into the output directory.  Each
file starts with provenance metadata (config hash, seed, version), and the
effective configuration is saved next to them as ``config-<hash>.json`` so
any output can be regenerated.  Exit codes: 0 ok, 1 invalid configuration
or usage, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import atomic, benchmarking as rb, ramsey, readout, spam
from .config import ConfigError, RunConfig, deep_merge, default_config, load_file, build, resolve_path, validate_file

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

COMMANDS = ("levels", "clock-scan", "ramsey", "benchmark", "scan-detuning", "scan-area",
            "sampling", "spam", "spam-budget", "validate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ionqubit", description="Hyperfine clock-qubit simulations.")
    p.add_argument("--version", action="version", version=f"ionqubit {__version__}")
    p.add_argument("--config", help="TOML run configuration (default: $IONQUBIT_CONFIG or shipped defaults)")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--out", help="output directory override")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name == "validate":
            sp.add_argument("path", nargs="?", help="config file to check (default: --config)")
        if name in ("benchmark", "scan-detuning", "scan-area", "sampling"):
            sp.add_argument("--detuning-hz", type=float)
            sp.add_argument("--rabi-offset", type=float)
        if name == "benchmark":
            sp.add_argument("--length-set", help="comma-separated sequence lengths")
        if name in ("benchmark", "ramsey", "spam", "spam-budget"):
            sp.add_argument("--shots", type=int)
        if name == "sampling":
            sp.add_argument("--smoke", action="store_true", help="50 sets instead of the configured count")
        if name == "spam":
            sp.add_argument("--stretch-only", action="store_true")
    return p


def _overrides(args) -> dict:
    o: dict = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.out is not None:
        o["output_dir"] = args.out
    b = {}
    if getattr(args, "detuning_hz", None) is not None:
        b["detuning"] = args.detuning_hz
    if getattr(args, "rabi_offset", None) is not None:
        b["rabi_offset"] = args.rabi_offset
    if getattr(args, "length_set", None):
        try:
            b["lengths"] = [int(x) for x in args.length_set.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError([("--length-set", "expected comma-separated integers")]) from exc
    shots = getattr(args, "shots", None)
    if shots is not None:
        key = {"benchmark": ("benchmark", "shots_per_sequence"), "ramsey": ("ramsey", "shots_per_point"),
               "spam": ("spam", "shots_per_state"), "spam-budget": ("detection", "shots")}[args.command]
        o.setdefault(key[0], {})[key[1]] = shots
    if getattr(args, "stretch_only", False):
        o.setdefault("spam", {})["stretch_only"] = True
    if b:
        o["benchmark"] = b
    return o


# ---------------------------------------------------------------- writers

class Writer:
    def __init__(self, run: RunConfig, command: str):
        self.run = run
        self.command = command
        self.dir = run.output_dir
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise RuntimeError(f"cannot create output directory {self.dir}: {exc}") from exc
        self.written: list[Path] = []
        self.metadata = {"command": command, "config_hash": run.hash, "seed": run.seed,
                         "version": __version__}
        self._save(f"config-{run.hash}.json", json.dumps(run.raw, indent=2, sort_keys=True) + "\n")

    def _save(self, name, text):
        path = self.dir / name
        try:
            path.write_text(text)
        except OSError as exc:
            raise RuntimeError(f"cannot write {path}: {exc}") from exc
        self.written.append(path)
        return path

    def csv(self, name, header, rows):
        buf = io.StringIO()
        for k, v in self.metadata.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
        return self._save(name, buf.getvalue())

    def json(self, name, payload):
        doc = {"metadata": self.metadata, **payload}
        return self._save(name, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    return x


# ---------------------------------------------------------------- commands

def cmd_levels(run: RunConfig, w: Writer, threads: int):
    rows = atomic.level_table(run.section("levels")["fields"], run.constants)
    w.csv("levels.csv", ["B_G", "F", "M", "energy_Hz"], [(B, s.F, s.M, e) for s, B, e in rows])


def cmd_clock_scan(run: RunConfig, w: Writer, threads: int):
    cs = run.section("clock_scan")
    c = run.constants
    B, f = ramsey.clock_scan(ramsey.default_scan_fields(c, cs["half_width"], cs["step"]), c)
    B0 = atomic.field_independent_point(c=c)
    f0 = atomic.transition_frequency(atomic.QUBIT_DOWN, atomic.QUBIT_UP, B0, c)
    w.csv("clock_scan.csv", ["B_G", "frequency_Hz", "offset_from_f0_Hz"],
          [(b, fi, fi - f0) for b, fi in zip(B, f)])
    i = int(np.argmin(f)) if atomic.transition_curvature(atomic.QUBIT_DOWN, atomic.QUBIT_UP, B0, c) > 0 else int(np.argmax(f))
    w.json("clock_point.json", {"B0_G": B0, "f0_Hz": f0, "grid_extremum_B_G": B[i],
                                "curvature_Hz_per_G2": atomic.transition_curvature(atomic.QUBIT_DOWN, atomic.QUBIT_UP, B0, c)})


def cmd_ramsey(run: RunConfig, w: Writer, threads: int):
    r = run.section("ramsey")
    noise = run.ramsey
    res = ramsey.ramsey_experiment(r["delays"], noise, r["shots_per_point"], r["phase_points"],
                                   run.seed, run.constants, r["detuning"])
    w.csv("ramsey_contrast.csv", ["t_R_s", "contrast", "contrast_sigma", "fringe_phase_rad"], res.rows())
    w.csv("ramsey_fringes.csv", ["t_R_s", "phase_rad", "p_up"],
          [(t, ph, p) for t, f in zip(res.delays, res.fringes) for ph, p in zip(f.phases, f.p_up)])
    w.json("ramsey_fit.json", {"fit": res.fit.as_dict(), "label": res.label})


def _model(run: RunConfig) -> rb.ErrorModel:
    return run.benchmark


def cmd_benchmark(run: RunConfig, w: Writer, threads: int):
    b = run.section("benchmark")
    pts = rb.run_benchmark(b["lengths"], b["sequences_per_length"], b["shots_per_sequence"],
                           _model(run), b["spam_error"], run.seed, threads, run.constants)
    w.csv("benchmark.csv", ["length", "trials", "failures", "error", "sigma"],
          [(p.length, p.trials, p.failures, p.error, p.sigma) for p in pts])
    fit = rb.fit_epg(pts) if len({p.length for p in pts}) > 1 else None
    w.json("benchmark_fit.json", {"fit": fit.as_dict() if fit else None})


def _scan_set(run):
    b = run.section("benchmark")
    return rb.standard_set(b["scan_length"], b["scan_sequences"], run.seed)


def cmd_scan_detuning(run: RunConfig, w: Writer, threads: int):
    b = run.section("benchmark")
    seqs = _scan_set(run)
    m = _model(run)
    rows = []
    for d in b["scan_detunings"]:
        with_dt = rb.mean_epg(seqs, replace(m, detuning=d, dead_time=True), run.constants, threads)
        without = rb.mean_epg(seqs, replace(m, detuning=d, dead_time=False), run.constants, threads)
        rows.append((d, with_dt, without))
    w.csv("scan_detuning.csv", ["detuning_Hz", "epg_with_dead_time", "epg_without_dead_time"], rows)


def cmd_scan_area(run: RunConfig, w: Writer, threads: int):
    b = run.section("benchmark")
    seqs = _scan_set(run)
    m = _model(run)
    rows = []
    for r in b["scan_rabi_offsets"]:
        rows.append((r, rb.mean_epg(seqs, replace(m, detuning=0.0, rabi_offset=r), run.constants, threads),
                     rb.mean_epg(seqs, replace(m, rabi_offset=r), run.constants, threads)))
    w.csv("scan_area.csv", ["rabi_offset", "epg_resonant", f"epg_detuned_{m.detuning:g}Hz"], rows)


def cmd_sampling(run: RunConfig, w: Writer, threads: int, smoke: bool = False):
    b = run.section("benchmark")
    n_sets = 50 if smoke else b["sampling_sets"]
    res = rb.sampling_distribution(n_sets, b["sampling_set_size"], b["sampling_length"],
                                   _model(run), run.seed, threads, run.constants)
    counts, edges = res.histogram()
    w.csv("sampling_histogram.csv", ["epg_left", "epg_right", "count"],
          [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))])
    w.csv("sampling_sets.csv", ["set", "epg"], list(enumerate(res.samples)))
    w.json("sampling_fit.json", {"mu": res.mean, "sigma": res.std, "mu_uncertainty": res.mean_uncertainty,
                                 "sigma_uncertainty": res.std_uncertainty, "sets": n_sets})


def cmd_spam(run: RunConfig, w: Writer, threads: int):
    s = run.section("spam")
    res = spam.spam_experiment(run.spam, s["shots_per_state"], run.seed,
                               run.section("detection")["shots"], run.constants)
    edges, hist = spam.llr_histogram(res)
    keys = sorted(hist)
    w.csv("spam_histogram.csv", ["llr_left", "llr_right"] + [f"count_prepared_{k}" for k in keys],
          [(edges[i], edges[i + 1], *[int(hist[k][i]) for k in keys]) for i in range(len(edges) - 1)])
    w.json("spam_summary.json", res.as_dict())


def cmd_spam_budget(run: RunConfig, w: Writer, threads: int):
    db = readout.detection_error_budget(run.detection, run.section("detection")["shots"], run.seed)
    budget = spam.spam_budget(run.spam, (db.bright_error, db.dark_error), run.constants)
    w.csv("spam_budget.csv", ["operation", "error"], list(budget.rows.items()) + [("combined", budget.combined)])
    w.json("spam_budget.json", {"budget": budget.as_dict(), "detection": db.as_dict(),
                                "shelf_decay_lifetime_s": run.detection.shelf_decay_lifetime})


HANDLERS = {"levels": cmd_levels, "clock-scan": cmd_clock_scan, "ramsey": cmd_ramsey,
            "benchmark": cmd_benchmark, "scan-detuning": cmd_scan_detuning, "scan-area": cmd_scan_area,
            "sampling": cmd_sampling, "spam": cmd_spam, "spam-budget": cmd_spam_budget}


def _validate(args, out) -> int:
    path = args.path or resolve_path(args.config)
    if path is None:
        build(default_config())
        bad = []
        src = "shipped defaults"
    else:
        bad = validate_file(path)
        src = str(path)
    if bad:
        for key, msg in bad:
            print(f"{key}: {msg}", file=out)
        print(f"{src}: {len(bad)} violation(s)", file=out)
        return EXIT_INVALID
    print(f"{src}: ok", file=out)
    return EXIT_OK


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"ionqubit: {exc}", file=err)
        return EXIT_INVALID
    try:
        if args.command == "validate":
            return _validate(args, out)
        if args.threads < 1:
            raise ConfigError([("--threads", "must be >= 1")])
        cfg = default_config()
        path = resolve_path(args.config)
        if path is not None:
            cfg = deep_merge(cfg, load_file(path))
        cfg = deep_merge(cfg, _overrides(args))
        run_cfg = build(cfg)
        w = Writer(run_cfg, args.command)
        handler = HANDLERS[args.command]
        if args.command == "sampling":
            handler(run_cfg, w, args.threads, smoke=args.smoke)
        else:
            handler(run_cfg, w, args.threads)
    except ConfigError as exc:
        for key, msg in exc.violations:
            print(f"ionqubit: {key}: {msg}", file=err)
        return EXIT_INVALID
    except Exception as exc:     # runtime failures map to exit code 2
        print(f"ionqubit: error: {exc}", file=err)
        return EXIT_RUNTIME
    for p in w.written:
        print(p, file=out)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
