"""Pure-state engine: local matrix application, Kraus action, bulk shot sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AnnihilatedStateError, ValidationError

# 2**(n+1) machine floats per state (2**n complex128); 24 qubits = 256 MiB.
MAX_QUBITS = 24
NORM_TOL = 1e-10
ANNIHILATION_TOL = 1e-14


@dataclass
class ComplexState:
    """Amplitude vector of a pure n-qubit state; bit q of a basis index is qubit q."""

    n_qubits: int
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "ComplexState":
        return ComplexState(self.n_qubits, self.amplitudes.copy())


@dataclass
class ShotBatch:
    """Measurement shots as bitstring -> multiplicity; qubit n-1 is the leftmost character."""

    n_qubits: int
    counts: dict[str, int]
    total: int

    @classmethod
    def from_indices(cls, indices: np.ndarray, n_qubits: int) -> "ShotBatch":
        values, reps = np.unique(indices, return_counts=True)
        counts = {format(int(v), f"0{n_qubits}b"): int(c) for v, c in zip(values, reps)}
        return cls(n_qubits, counts, int(indices.size))

    def bitstrings(self):
        """Yield each shot, grouped by bitstring in ascending order."""
        for bits in sorted(self.counts):
            for _ in range(self.counts[bits]):
                yield bits

    def merged(self, other: "ShotBatch") -> "ShotBatch":
        if other.n_qubits != self.n_qubits:
            raise ValidationError("cannot merge shot batches of different widths")
        counts = dict(self.counts)
        for bits, c in other.counts.items():
            counts[bits] = counts.get(bits, 0) + c
        return ShotBatch(self.n_qubits, counts, self.total + other.total)


def init_zero(n: int) -> ComplexState:
    if not 1 <= n <= MAX_QUBITS:
        raise ValidationError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return ComplexState(n, amps)


def _check_targets(n: int, targets, dim: int) -> None:
    k = len(targets)
    if dim != 1 << k:
        raise ValidationError(f"matrix dimension {dim} does not fit {k} target qubit(s)")
    if len(set(targets)) != k:
        raise ValidationError(f"duplicate target in {tuple(targets)}")
    for t in targets:
        if not 0 <= t < n:
            raise ValidationError(f"target qubit {t} out of range for {n} qubits")


def transform_rows(block: np.ndarray, matrix: np.ndarray, targets, n: int) -> np.ndarray:
    """Apply a k-qubit matrix to the row index of a (2**n, ...) array.

    The first-listed target is the most significant local bit of the matrix.
    """
    k = len(targets)
    if k == 1 and block.ndim == 1:
        return _transform_single(block, matrix, targets[0])
    axes = [n - 1 - t for t in targets]
    tail = block.shape[1:]
    tensor = block.reshape((2,) * n + tail)
    tensor = np.moveaxis(tensor, axes, range(k))
    moved_shape = tensor.shape
    out = matrix @ tensor.reshape(1 << k, -1)
    out = out.reshape(moved_shape)
    out = np.moveaxis(out, range(k), axes)
    return out.reshape((1 << n,) + tail)


def _transform_single(amps: np.ndarray, matrix: np.ndarray, q: int) -> np.ndarray:
    # Slicing on bit q avoids the strided repack of the generic path.
    blocks = amps.reshape(-1, 2, 1 << q)
    a0, a1 = blocks[:, 0, :], blocks[:, 1, :]
    out = np.empty_like(blocks)
    out[:, 0, :] = matrix[0, 0] * a0 + matrix[0, 1] * a1
    out[:, 1, :] = matrix[1, 0] * a0 + matrix[1, 1] * a1
    return out.reshape(-1)


def expand_matrix(matrix: np.ndarray, targets, n: int) -> np.ndarray:
    """Full 2**n x 2**n matrix acting as `matrix` on the target qubits."""
    _check_targets(n, targets, matrix.shape[0])
    return transform_rows(np.eye(1 << n, dtype=np.complex128), matrix, targets, n)


def apply_matrix(state: ComplexState, matrix: np.ndarray, targets) -> ComplexState:
    _check_targets(state.n_qubits, targets, matrix.shape[0])
    out = transform_rows(state.amplitudes, matrix, targets, state.n_qubits)
    return ComplexState(state.n_qubits, out)


def apply_gate(state: ComplexState, op) -> ComplexState:
    """Apply a GateOp's unitary to its target qubits."""
    return apply_matrix(state, op.matrix, op.targets)


def kraus_outcome_probability(state: ComplexState, kraus: np.ndarray, targets) -> float:
    """||K|psi>||**2 for a normalized state, without mutating the state."""
    _check_targets(state.n_qubits, targets, kraus.shape[0])
    out = transform_rows(state.amplitudes, kraus, targets, state.n_qubits)
    return float(np.sum(np.abs(out) ** 2))


def apply_kraus_normalized(state: ComplexState, kraus: np.ndarray, targets) -> tuple[ComplexState, float]:
    """State -> K|psi> / ||K|psi>||; returns the new state and realized ||K|psi>||**2."""
    _check_targets(state.n_qubits, targets, kraus.shape[0])
    out = transform_rows(state.amplitudes, kraus, targets, state.n_qubits)
    realized = float(np.sum(np.abs(out) ** 2))
    if realized <= ANNIHILATION_TOL:
        raise AnnihilatedStateError(
            f"Kraus selection annihilates the state (norm^2 = {realized:.3e})"
        )
    return ComplexState(state.n_qubits, out / math.sqrt(realized)), realized


def sample_shots(state: ComplexState, m: int, rng: np.random.Generator) -> ShotBatch:
    """Draw m independent computational-basis shots; the state is not collapsed.

    One O(2**n) prefix-sum build, then a binary search per shot.
    """
    if m < 1:
        raise ValidationError(f"shot count must be >= 1, got {m}")
    probs = state.probabilities()
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"state norm^2 = {total}, too far from 1 to sample")
    cum = np.cumsum(probs)
    cum /= cum[-1]
    idx = np.searchsorted(cum, rng.random(m), side="right")
    np.clip(idx, 0, probs.size - 1, out=idx)
    return ShotBatch.from_indices(idx, state.n_qubits)
