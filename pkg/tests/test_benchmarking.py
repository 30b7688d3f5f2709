import numpy as np
import pytest
from hypothesis import given, strategies as st

from ionqubit import benchmarking as rb
from ionqubit.benchmarking import (CLIFFORDS, IDEAL, PAULIS, BenchmarkPoint, ErrorModel, GateSequence,
                                   compile_to_pulses, fit_epg, generate_sequence, generate_sequences,
                                   logical_unitary, run_benchmark, sequence_seeds, simulate_sequences)
from ionqubit.pulses import rotation, sequence_propagator, unitarity_error, z_rotation

seeds = st.integers(0, 2**63 - 1)
lengths = st.integers(1, 60)

UP = np.array([1, 0], dtype=complex)


def _phase_equal(U, V, atol=1e-9):
    k = np.argmax(np.abs(V))
    ph = U.flat[k] / V.flat[k]
    return np.allclose(U, V * ph, atol=atol)


@given(lengths, seeds)
def test_generated_sequence_shape_and_alphabet(L, seed):
    s = generate_sequence(L, seed)
    assert len(s) == L and len(s.gates) == L
    assert all(g.pauli in PAULIS and g.clifford in CLIFFORDS for g in s.gates)
    assert s.expected_outcome in ("up", "down")
    slots = s.slots()
    assert len(slots) == 3 * L + len(s.terminal)
    assert set(np.unique(slots)) <= {0, 1, 2, 3, rb.IDLE}


@given(lengths, seeds)
def test_generation_is_deterministic(L, seed):
    a, b = generate_sequence(L, seed), generate_sequence(L, seed)
    assert np.array_equal(a.paulis, b.paulis) and np.array_equal(a.cliffords, b.cliffords)
    assert a.terminal == b.terminal and a.expected_outcome == b.expected_outcome


@given(lengths, seeds)
def test_ideal_sequence_reaches_expected_outcome(L, seed):
    """Self-consistency: the compiled ideal pulse train lands on the recorded outcome."""
    s = generate_sequence(L, seed)
    U = sequence_propagator(compile_to_pulses(s))
    psi = U @ UP
    target = 0 if s.expected_outcome == "up" else 1
    assert abs(psi[target]) ** 2 == pytest.approx(1.0, abs=1e-12)
    assert unitarity_error(U) < 1e-12


@given(lengths, seeds)
def test_frame_tracking_equivalence(L, seed):
    """Compiled gates (frame updates, no physical z) equal the logical product
    once the residual frame rotation is applied."""
    s = generate_sequence(L, seed)
    body = GateSequence(s.paulis, s.cliffords, (), s.expected_outcome)
    U_phys = sequence_propagator(compile_to_pulses(body, dead_time=False))
    assert _phase_equal(z_rotation(body.frame_rotation) @ U_phys, logical_unitary(body))


def test_z_pauli_compiles_to_idles_and_frame_flip():
    s = GateSequence.from_gates([("+z", "+x"), ("+x", "+x")])
    slots = s.slots()
    assert list(slots[:3]) == [rb.IDLE, rb.IDLE, 2]     # +x seen in a frame rotated by pi
    assert list(slots[3:6]) == [2, 2, 2]
    assert s.frame_rotation == pytest.approx(np.pi)


def test_identity_pauli_compiles_to_idles():
    s = GateSequence.from_gates([("+I", "+y")])
    assert list(s.slots()[:3]) == [rb.IDLE, rb.IDLE, 1]
    assert s.frame_rotation == 0.0


def test_from_gates_terminal_targets():
    for target in ("up", "down"):
        s = GateSequence.from_gates([("+x", "+y"), ("-z", "-x")], target=target)
        p = rb.simulate_sequence(s, IDEAL)
        assert p == pytest.approx(0.0, abs=1e-12)


def test_seeds_are_distinct_and_reproducible():
    a = sequence_seeds(0, 1000)
    assert len(set(a)) == 1000 and a == sequence_seeds(0, 1000)
    assert sequence_seeds(1, 5) != a[:5]


def test_ideal_model_has_zero_error():
    seqs = generate_sequences(200, sequence_seeds(3, 16))
    assert np.max(simulate_sequences(seqs, IDEAL)) < 1e-10


def test_detuned_error_is_symmetric_on_average():
    # sign flip of the detuning maps y pulses to -y, so symmetry holds over the ensemble only
    seqs = rb.standard_set(200, 16, seed=2)
    e_plus = rb.mean_epg(seqs, ErrorModel(detuning=5.0))
    e_minus = rb.mean_epg(seqs, ErrorModel(detuning=-5.0))
    assert e_plus == pytest.approx(e_minus, rel=1e-2)


def test_error_grows_quadratically_with_small_detuning():
    seqs = rb.standard_set(500, 16, seed=4)
    e1 = rb.mean_epg(seqs, ErrorModel(detuning=1.0))
    e2 = rb.mean_epg(seqs, ErrorModel(detuning=2.0))
    assert 3.0 < e2 / e1 < 5.0


def test_threads_do_not_change_results():
    seqs = rb.standard_set(300, 40, seed=5)
    m = rb.NOMINAL_CONDITIONS
    assert np.array_equal(simulate_sequences(seqs, m, threads=1, chunk=7),
                          simulate_sequences(seqs, m, threads=4, chunk=7))


def test_sixteen_level_pure_sigma_plus_matches_two_level():
    from ionqubit.atomic import PURE_SIGMA_PLUS
    seqs = rb.standard_set(100, 8, seed=6)
    two = simulate_sequences(seqs, ErrorModel(detuning=4.5))
    sixteen = simulate_sequences(seqs, ErrorModel(detuning=4.5, sixteen_level=True,
                                                  polarization=PURE_SIGMA_PLUS))
    assert np.allclose(two, sixteen, atol=1e-9)


def test_sixteen_level_probabilities_stay_normalised():
    seqs = rb.standard_set(200, 4, seed=8)
    for s in seqs:
        U = rb.sequence_propagator(s, ErrorModel(sixteen_level=True))
        assert unitarity_error(U) < 1e-10


def test_depolarizing_injection_epg():
    seqs = rb.standard_set(2000, 8, seed=9)
    e = rb.mean_epg(seqs, ErrorModel(depolarizing=1e-6))
    assert e == pytest.approx(1e-6, rel=0.01)


def test_error_model_validation():
    with pytest.raises(ValueError):
        ErrorModel(depolarizing=0.6)
    with pytest.raises(ValueError):
        ErrorModel(rabi_offset=-1.0)


# -- sampling and fitting

def test_fit_recovers_exact_line():
    pts = [BenchmarkPoint(L, 10**9, int(round((5e-4 + 2e-6 * L) * 10**9))) for L in (2, 200, 2000)]
    fit = fit_epg(pts)
    assert fit.slope == pytest.approx(2e-6, rel=1e-4)
    assert fit.intercept == pytest.approx(5e-4, rel=1e-4)


def test_fit_handles_zero_failures():
    pts = [BenchmarkPoint(2, 3200, 0), BenchmarkPoint(2000, 3200, 5)]
    fit = fit_epg(pts)
    assert np.isfinite(fit.slope) and fit.slope_uncertainty > 0


def test_fit_needs_two_lengths():
    with pytest.raises(ValueError):
        fit_epg([BenchmarkPoint(2, 10, 1), BenchmarkPoint(2, 10, 2)])


def test_benchmark_point_validation():
    with pytest.raises(ValueError):
        BenchmarkPoint(2, 10, 11)


def test_run_benchmark_determinism_and_threads():
    kw = dict(lengths=(2, 200), sequences_per_length=8, shots_per_sequence=50,
              model=ErrorModel(depolarizing=1e-4), spam_error=1e-3, seed=11)
    a = run_benchmark(**kw, threads=1)
    b = run_benchmark(**kw, threads=3)
    assert [(p.failures, p.trials) for p in a] == [(p.failures, p.trials) for p in b]
    assert a[0].trials == 400


def test_run_benchmark_rejects_bad_shots():
    with pytest.raises(ValueError):
        run_benchmark((2,), 1, 0)


def test_combine_spam_limits():
    assert rb.combine_spam(0.0, 1e-3) == pytest.approx(1e-3)
    assert rb.combine_spam(1.0, 1e-3) == pytest.approx(1 - 1e-3)


def test_dead_time_increases_detuning_error():
    seqs = rb.standard_set(500, 16, seed=12)
    rows_with = rb.scan_epg_vs_detuning([4.0], dead_time=True, sequences=seqs)
    rows_without = rb.scan_epg_vs_detuning([4.0], dead_time=False, sequences=seqs)
    assert rows_with[0][1] > rows_without[0][1]


def test_sampling_distribution_smoke():
    r = rb.sampling_distribution(n_sets=6, set_size=4, length=200, seed=1)
    assert r.samples.shape == (6,) and r.std >= 0
    again = rb.sampling_distribution(n_sets=6, set_size=4, length=200, seed=1)
    assert np.array_equal(r.samples, again.samples)
