from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from mbo_settle.simulator import (
    HardwareEfficientAnsatz,
    QaoaAnsatz,
    ReadoutNoise,
    SampleSet,
    Statevector,
    apply_readout_noise,
    mitigate_readout,
    prepare_he_state,
    prepare_qaoa_state,
    sample,
)
import reference as ref


def he(n, d, theta):
    return prepare_he_state(HardwareEfficientAnsatz(n, d), theta)


# --- hardware-efficient ansatz ----------------------------------------------------


def test_he_examples():
    np.testing.assert_allclose(he(1, 0, [0.0]).amplitudes, [1, 0], atol=1e-15)
    np.testing.assert_allclose(he(1, 0, [np.pi]).amplitudes, [0, 1], atol=1e-15)
    np.testing.assert_allclose(he(2, 0, [np.pi / 2] * 2).probabilities, [0.25] * 4, atol=1e-15)


def test_he_parameter_count():
    assert HardwareEfficientAnsatz(3, 2).num_parameters == 9
    with pytest.raises(ValueError):
        he(3, 2, np.zeros(8))
    with pytest.raises(ValueError):
        HardwareEfficientAnsatz(2, -1)


@pytest.mark.parametrize("n, d", [(1, 0), (2, 1), (3, 2), (4, 3), (4, 0)])
def test_he_matches_dense_reference(n, d):
    rng = np.random.default_rng(10 * n + d)
    for _ in range(5):
        theta = rng.uniform(-np.pi, np.pi, n * (d + 1))
        got = he(n, d, theta)
        assert abs(got.norm - 1) < 1e-10
        np.testing.assert_allclose(got.amplitudes, ref.he_state(n, d, theta), atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_he_depth0_factorises(n, seed):
    theta = np.random.default_rng(seed).uniform(-np.pi, np.pi, n)
    probs = he(n, 0, theta).probabilities
    for k in range(2**n):
        want = np.prod([np.sin(t / 2) ** 2 if (k >> q) & 1 else np.cos(t / 2) ** 2 for q, t in enumerate(theta)])
        assert probs[k] == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_cz_block_is_phase_only_on_basis_states(n):
    # Ry(0) or Ry(pi) layers keep a computational basis state; the CZ block must not move it
    rng = np.random.default_rng(n)
    for _ in range(5):
        first = rng.choice([0.0, np.pi], n)
        theta = np.concatenate([first, np.zeros(n)])
        probs = he(n, 1, theta).probabilities
        k = sum(1 << q for q in range(n) if first[q])
        assert probs[k] == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 7), d=st.integers(0, 4), seed=st.integers(0, 2**32 - 1))
def test_he_norm(n, d, seed):
    theta = np.random.default_rng(seed).uniform(-10, 10, n * (d + 1))
    assert abs(he(n, d, theta).norm - 1) < 1e-10


# --- QAOA -------------------------------------------------------------------------------


def test_qaoa_trivial_evolutions():
    energies = np.arange(8.0)
    uniform = prepare_qaoa_state(QaoaAnsatz(energies, (0.0,), (0.0,)))
    np.testing.assert_allclose(uniform.probabilities, 1 / 8, atol=1e-15)
    phased = prepare_qaoa_state(QaoaAnsatz(energies, (1.234,), (0.0,)))
    np.testing.assert_allclose(phased.probabilities, 1 / 8, atol=1e-15)


def test_qaoa_maxcut_edge_matches_dense():
    energies = np.array([0.0, -1.0, -1.0, 0.0])  # minus the cut size of one edge
    got = prepare_qaoa_state(QaoaAnsatz(energies, (np.pi / 4,), (np.pi / 4,)))
    np.testing.assert_allclose(got.amplitudes, ref.qaoa_state(energies, [np.pi / 4], [np.pi / 4]), atol=1e-10)


@pytest.mark.parametrize("n, p", [(1, 1), (2, 2), (3, 1), (4, 3)])
def test_qaoa_matches_dense_reference(n, p):
    rng = np.random.default_rng(n + 7 * p)
    energies = rng.normal(size=2**n)
    g, b = rng.uniform(-np.pi, np.pi, p), rng.uniform(-np.pi, np.pi, p)
    got = prepare_qaoa_state(QaoaAnsatz(energies, g, b))
    assert abs(got.norm - 1) < 1e-10
    np.testing.assert_allclose(got.amplitudes, ref.qaoa_state(energies, g, b), atol=1e-10)


def test_qaoa_validation():
    with pytest.raises(ValueError):
        QaoaAnsatz(np.zeros(3), (0.0,), (0.0,))
    with pytest.raises(ValueError):
        QaoaAnsatz(np.zeros(4), (0.0, 1.0), (0.0,))


# --- sampling ---------------------------------------------------------------------------


def test_sample_point_mass():
    s = sample(Statevector(2, [1, 0, 0, 0]), 100, seed=1)
    assert s.to_dict() == {"00": 100}
    assert s.shots == 100


def test_sample_uniform_binomial_band():
    s = sample(Statevector(2, np.full(4, 0.5)), 8192, seed=5)
    sigma = np.sqrt(8192 * 0.25 * 0.75)
    assert np.all(np.abs(s.counts - 2048) < 5 * sigma)


def test_sample_deterministic():
    state = he(3, 2, np.linspace(-1, 1, 9))
    a, b = sample(state, 1000, seed=42), sample(state, 1000, seed=42)
    np.testing.assert_array_equal(a.counts, b.counts)
    with pytest.raises(ValueError):
        sample(state, 0)


@pytest.mark.parametrize("seed", range(5))
def test_sampling_chi_squared(seed):
    rng = np.random.default_rng(100 + seed)
    state = he(3, 2, rng.uniform(-np.pi, np.pi, 9))
    p = state.probabilities
    keep = p * 8192 >= 5
    s = sample(state, 8192, seed=seed)
    observed = np.append(s.counts[keep], s.counts[~keep].sum())
    expected = np.append(p[keep], p[~keep].sum()) * 8192
    if expected[-1] == 0:
        observed, expected = observed[:-1], expected[:-1]
    assert chisquare(observed, expected).pvalue > 1e-3


def test_sampleset_dict_round_trip():
    s = SampleSet.from_dict(3, {"011": 5, "100": 2})
    assert s.to_dict() == {"100": 2, "011": 5}
    assert s.counts[6] == 5
    with pytest.raises(ValueError):
        SampleSet.from_dict(3, {"01": 1})


# --- readout noise ----------------------------------------------------------------------


def test_zero_noise_is_identity():
    s = SampleSet.from_dict(3, {"011": 500, "100": 12})
    out = apply_readout_noise(s, ReadoutNoise.uniform(3, 0.0, 0.0), seed=1)
    np.testing.assert_array_equal(out.counts, s.counts)


@pytest.mark.parametrize("p", [0.5, 1.0, -0.1])
def test_noise_bounds(p):
    with pytest.raises(ValueError):
        ReadoutNoise((0.0,), (p,))


def test_single_qubit_flip_rate():
    s = SampleSet.from_dict(1, {"0": 1000})
    out = apply_readout_noise(s, ReadoutNoise((0.1,), (0.0,)), seed=3)
    assert out.shots == 1000
    assert abs(out.counts[1] - 100) < 5 * np.sqrt(1000 * 0.1 * 0.9)


def test_noise_preserves_shots_and_is_seeded():
    s = SampleSet.from_dict(3, {"011": 4000, "000": 4192})
    noise = ReadoutNoise((0.02, 0.05, 0.1), (0.08, 0.03, 0.01))
    a, b = apply_readout_noise(s, noise, seed=9), apply_readout_noise(s, noise, seed=9)
    assert a.shots == s.shots
    np.testing.assert_array_equal(a.counts, b.counts)


def test_mitigation_examples():
    s = SampleSet.from_dict(1, {"0": 9, "1": 1})
    np.testing.assert_allclose(mitigate_readout(s, ReadoutNoise((0.1,), (0.1,))), [1.0, 0.0], atol=1e-9)
    s = SampleSet.from_dict(2, {"01": 3, "11": 1})
    np.testing.assert_allclose(mitigate_readout(s, ReadoutNoise.uniform(2, 0, 0)), s.frequencies(), atol=1e-15)


def dense_confusion(noise, n):
    M = np.array([[1.0]])
    for q in reversed(range(n)):
        M = np.kron(M, noise.confusion(q))
    return M


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_mitigation_inverts_confusion(n, seed):
    rng = np.random.default_rng(seed)
    noise = ReadoutNoise(tuple(rng.uniform(0, 0.45, n)), tuple(rng.uniform(0, 0.45, n)))
    p = rng.dirichlet(np.ones(2**n))
    noisy = dense_confusion(noise, n) @ p
    # feed the exact noisy distribution through a large-shot SampleSet surrogate
    scale = 10**12
    counts = np.round(noisy * scale).astype(np.int64)
    got = mitigate_readout(SampleSet(n, counts), noise)
    np.testing.assert_allclose(got, p, atol=1e-9)


def test_mitigation_noise_width_mismatch():
    with pytest.raises(ValueError):
        mitigate_readout(SampleSet.from_dict(2, {"00": 1}), ReadoutNoise((0.1,), (0.1,)))
