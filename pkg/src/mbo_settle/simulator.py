"""Exact statevector simulation of the two ansatz families, shot sampling and readout noise.

States are dense complex vectors of length ``2**n``. Qubit ``q`` is bit ``q``
of the basis index, so when the vector is viewed as an ``n``-dimensional
``(2, ..., 2)`` tensor in C order, qubit ``q`` lives on axis ``n - 1 - q``.
Single-qubit gates are applied by contracting that axis; nothing larger
than a 2x2 matrix is ever built.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mbo_core import bitstring, bitstring_index


def make_rng(seed) -> np.random.Generator:
    """A ``numpy`` Generator from an int, SeedSequence, Generator or ``None``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class Statevector:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.n,):
            raise ValueError(f"expected {2**self.n} amplitudes, got shape {amps.shape}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.probabilities.sum()))


@dataclass(frozen=True)
class HardwareEfficientAnsatz:
    """``d + 1`` layers of Ry rotations interleaved with ``d`` all-to-all CZ blocks."""

    n: int
    depth: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one qubit")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")

    @property
    def num_parameters(self) -> int:
        return self.n * (self.depth + 1)


@dataclass(frozen=True, eq=False)
class QaoaAnsatz:
    energies: np.ndarray
    gammas: tuple[float, ...]
    betas: tuple[float, ...]

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        n = int(np.log2(e.size)) if e.size else -1
        if n < 1 or 2**n != e.size:
            raise ValueError("energies must have length 2**n with n >= 1")
        if len(self.gammas) != len(self.betas) or len(self.gammas) < 1:
            raise ValueError("need p >= 1 with len(gammas) == len(betas)")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    @property
    def n(self) -> int:
        return int(np.log2(self.energies.size))

    @property
    def p(self) -> int:
        return len(self.gammas)


def _apply_1q(tensor: np.ndarray, gate: np.ndarray, qubit: int, n: int) -> np.ndarray:
    axis = n - 1 - qubit
    out = np.tensordot(gate, tensor, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def cz_all_pairs_phase(n: int) -> np.ndarray:
    """Diagonal of the product of CZ over every pair: ``(-1)**C(k, 2)`` for popcount ``k``."""
    k = np.array([bin(i).count("1") for i in range(2**n)])
    return np.where((k * (k - 1) // 2) % 2 == 0, 1.0, -1.0)


def prepare_he_state(ansatz: HardwareEfficientAnsatz, theta: Sequence[float]) -> Statevector:
    """Parameters are layer-major: ``theta[l * n + q]`` rotates qubit ``q`` in layer ``l``."""
    theta = np.asarray(theta, dtype=float)
    n = ansatz.n
    if theta.shape != (ansatz.num_parameters,):
        raise ValueError(f"expected {ansatz.num_parameters} parameters, got {theta.size}")
    psi = np.zeros((2,) * n, dtype=complex)
    psi[(0,) * n] = 1.0
    cz = cz_all_pairs_phase(n).reshape((2,) * n)
    for layer in range(ansatz.depth + 1):
        if layer > 0:
            psi = psi * cz
        for q in range(n):
            psi = _apply_1q(psi, ry(theta[layer * n + q]), q, n)
    return Statevector(n, psi.reshape(-1))


def prepare_qaoa_state(qaoa: QaoaAnsatz) -> Statevector:
    n = qaoa.n
    psi = np.full(2**n, 2 ** (-n / 2), dtype=complex)
    for gamma, beta in zip(qaoa.gammas, qaoa.betas):
        psi = psi * np.exp(-1j * gamma * qaoa.energies)
        t = psi.reshape((2,) * n)
        mixer = rx(2 * beta)
        for q in range(n):
            t = _apply_1q(t, mixer, q, n)
        psi = t.reshape(-1)
    return Statevector(n, psi)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Shot counts indexed by basis index (``counts[k]`` shots of bitstring ``bitstring(k, n)``)."""

    n: int
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (2**self.n,):
            raise ValueError(f"expected {2**self.n} count bins, got shape {c.shape}")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_dict(cls, n: int, counts: dict[str, int]) -> SampleSet:
        arr = np.zeros(2**n, dtype=np.int64)
        for bits, c in counts.items():
            if len(bits) != n:
                raise ValueError(f"bitstring {bits!r} does not have length {n}")
            arr[bitstring_index(bits)] += c
        return cls(n, arr)

    @property
    def shots(self) -> int:
        return int(self.counts.sum())

    @property
    def observed(self) -> np.ndarray:
        """Basis indices with at least one shot, ascending."""
        return np.flatnonzero(self.counts)

    def to_dict(self) -> dict[str, int]:
        return {bitstring(int(k), self.n): int(self.counts[k]) for k in self.observed}

    def frequencies(self) -> np.ndarray:
        return self.counts / self.shots


def sample(state: Statevector, shots: int, seed=None) -> SampleSet:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = state.probabilities
    p = p / p.sum()
    return SampleSet(state.n, make_rng(seed).multinomial(shots, p))


@dataclass(frozen=True)
class ReadoutNoise:
    p01: tuple[float, ...]
    p10: tuple[float, ...]

    def __post_init__(self):
        if len(self.p01) != len(self.p10):
            raise ValueError("p01 and p10 must have one entry per qubit")
        for p in (*self.p01, *self.p10):
            if not 0.0 <= p < 0.5:
                raise ValueError(f"flip probabilities must lie in [0, 0.5), got {p}")
        object.__setattr__(self, "p01", tuple(float(p) for p in self.p01))
        object.__setattr__(self, "p10", tuple(float(p) for p in self.p10))

    @classmethod
    def uniform(cls, n: int, p01: float, p10: float) -> ReadoutNoise:
        return cls((p01,) * n, (p10,) * n)

    @property
    def n(self) -> int:
        return len(self.p01)

    def confusion(self, qubit: int) -> np.ndarray:
        """``M[read, true]`` for one qubit."""
        a, b = self.p01[qubit], self.p10[qubit]
        return np.array([[1 - a, b], [a, 1 - b]])


def _check_noise(noise: ReadoutNoise, n: int):
    if noise.n != n:
        raise ValueError(f"noise model covers {noise.n} qubits, samples have {n}")


def apply_readout_noise(samples: SampleSet, noise: ReadoutNoise, seed=None) -> SampleSet:
    """Flip every measured bit independently (``0 -> 1`` with ``p01``, ``1 -> 0`` with ``p10``)."""
    n = samples.n
    _check_noise(noise, n)
    shots = np.repeat(np.arange(2**n), samples.counts)
    bits = (shots[:, None] >> np.arange(n)) & 1
    flip_p = np.where(bits == 1, np.array(noise.p10), np.array(noise.p01))
    flips = make_rng(seed).random(bits.shape) < flip_p
    read = bits ^ flips
    idx = read @ (1 << np.arange(n))
    return SampleSet(n, np.bincount(idx, minlength=2**n))


def mitigate_readout(samples: SampleSet, noise: ReadoutNoise) -> np.ndarray:
    """Quasi-probabilities (indexed by basis index) after inverting the confusion matrices.

    Entries may be slightly negative; callers that need a distribution clamp them.
    """
    n = samples.n
    _check_noise(noise, n)
    t = samples.frequencies().reshape((2,) * n)
    for q in range(n):
        if abs(noise.p01[q] + noise.p10[q] - 1.0) < 1e-12:
            raise ValueError(f"confusion matrix of qubit {q} is singular")
        t = _apply_1q(t, np.linalg.inv(noise.confusion(q)), q, n)
    quasi = np.real_if_close(t.reshape(-1)).astype(float)
    return quasi / quasi.sum()
