"""Tiny statevector simulator for the per-pixel complement-encoding circuit.

Qubit 0 is the most significant bit of the basis index, so for two qubits
``|10>`` is index 2. The pixel circuit uses qubit 0 as the ancilla and
qubit 1 as the data qubit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_QUBITS = 4
ANCILLA = 0
DATA = 1


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.n_qubits,):
            raise ValueError(f"expected {2**self.n_qubits} amplitudes, got {amps.shape}")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sum(self.probabilities))


@dataclass(frozen=True)
class MeasurementCounts:
    shots: int
    count_original: int
    count_inverted: int

    def __post_init__(self):
        if self.count_original + self.count_inverted != self.shots:
            raise ValueError("counts must add up to shots")

    @property
    def p_inverted(self) -> float:
        return self.count_inverted / self.shots

    @property
    def q_original(self) -> float:
        return self.count_original / self.shots


def new_statevector(n_qubits: int) -> StateVector:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(amps, n_qubits)


def _check_qubit(s: StateVector, qubit: int) -> None:
    if not 0 <= qubit < s.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {s.n_qubits} qubits")


def apply_single(s: StateVector, qubit: int, matrix: np.ndarray) -> StateVector:
    """Apply a 2x2 unitary to one qubit."""
    _check_qubit(s, qubit)
    psi = s.amplitudes.reshape((2,) * s.n_qubits)
    psi = np.moveaxis(np.tensordot(matrix, psi, axes=([1], [qubit])), 0, qubit)
    return StateVector(psi.reshape(-1), s.n_qubits)


_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / math.sqrt(2.0)
_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)


def apply_hadamard(s: StateVector, qubit: int) -> StateVector:
    return apply_single(s, qubit, _H)


def apply_x(s: StateVector, qubit: int) -> StateVector:
    return apply_single(s, qubit, _X)


def apply_z(s: StateVector, qubit: int) -> StateVector:
    return apply_single(s, qubit, _Z)


def rotation_matrix(theta: float) -> np.ndarray:
    c, sn = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -sn], [sn, c]], dtype=np.complex128)


def apply_rotation(s: StateVector, qubit: int, theta: float) -> StateVector:
    """Real rotation [[cos t/2, -sin t/2], [sin t/2, cos t/2]] on ``qubit``."""
    if not math.isfinite(theta):
        raise ValueError("rotation angle must be finite")
    return apply_single(s, qubit, rotation_matrix(theta))


def apply_cnot(s: StateVector, control: int, target: int) -> StateVector:
    _check_qubit(s, control)
    _check_qubit(s, target)
    if control == target:
        raise ValueError("control and target must differ")
    n = s.n_qubits
    idx = np.arange(2**n)
    cbit = 1 << (n - 1 - control)
    tbit = 1 << (n - 1 - target)
    src = np.where(idx & cbit, idx ^ tbit, idx)
    return StateVector(s.amplitudes[src], n)


def _parity_odd(parity) -> bool:
    if parity in ("even", 0):
        return False
    if parity in ("odd", 1):
        return True
    raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")


def _prepare_data(x_bit: int) -> StateVector:
    if x_bit not in (0, 1):
        raise ValueError("x_bit must be 0 or 1")
    s = new_statevector(2)
    return apply_x(s, DATA) if x_bit else s


def beta_state(x_bit: int, parity="even") -> StateVector:
    """(|0, x> + (-1)^i |1, not x>) / sqrt(2) via H on the ancilla and CNOT."""
    s = apply_cnot(apply_hadamard(_prepare_data(x_bit), ANCILLA), ANCILLA, DATA)
    return apply_z(s, ANCILLA) if _parity_odd(parity) else s


def build_pixel_state(x_bit: int, theta: float, parity="even") -> StateVector:
    """cos(theta) |0, x> + (-1)^i sin(theta) |1, not x>.

    Built as R(2 theta) on the ancilla followed by CNOT onto the data qubit.
    The odd-parity sign sits on the ancilla branch and never changes the
    data-qubit statistics.
    """
    if not (0.0 <= theta <= math.pi / 2):
        raise ValueError(f"theta must lie in [0, pi/2], got {theta}")
    s = apply_rotation(_prepare_data(x_bit), ANCILLA, 2.0 * theta)
    s = apply_cnot(s, ANCILLA, DATA)
    return apply_z(s, ANCILLA) if _parity_odd(parity) else s


def data_marginal(s: StateVector, qubit: int = DATA) -> np.ndarray:
    """Probability of reading 0 and 1 on ``qubit``."""
    _check_qubit(s, qubit)
    probs = s.probabilities.reshape((2,) * s.n_qubits)
    other = tuple(a for a in range(s.n_qubits) if a != qubit)
    return probs.sum(axis=other)


def measure_exact(s: StateVector, x_bit: int) -> tuple[float, float]:
    """(P, Q): probability of reading the inverted and the original bit."""
    marg = data_marginal(s)
    return float(marg[1 - x_bit]), float(marg[x_bit])


def measure_data_qubit(s: StateVector, shots: int, seed: int, x_bit: int) -> MeasurementCounts:
    """Sample ``shots`` data-qubit readouts with a seeded generator."""
    if shots < 1:
        raise ValueError("shots must be a positive integer")
    p_inv, _ = measure_exact(s, x_bit)
    rng = np.random.default_rng(seed)
    inverted = int(rng.binomial(shots, min(max(p_inv, 0.0), 1.0)))
    return MeasurementCounts(shots=shots, count_original=shots - inverted, count_inverted=inverted)


def exact_probabilities(theta) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (P, Q) = (sin^2, cos^2) for arrays of angles."""
    theta = np.asarray(theta, dtype=np.float64)
    return np.sin(theta) ** 2, np.cos(theta) ** 2


def sample_probabilities(theta, shots: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Shot estimates of (P, Q) for arrays of angles, one binomial per pixel."""
    if shots < 1:
        raise ValueError("shots must be a positive integer")
    p, _ = exact_probabilities(theta)
    inverted = rng.binomial(shots, np.clip(p, 0.0, 1.0))
    p_hat = inverted / shots
    return p_hat, 1.0 - p_hat
