"""Exact density-matrix reference simulator for small systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .statevector import transform_rows

# Beyond roughly 12 qubits the 4**n matrix stops being a trustworthy desk-side oracle.
MAX_ORACLE_QUBITS = 12


@dataclass
class DensityMatrix:
    n_qubits: int
    rho: np.ndarray


def _conjugate(rho: np.ndarray, matrix: np.ndarray, targets, n: int) -> np.ndarray:
    # rho -> M rho M^dag via a row-side apply on rho and then on rho^dag.
    left = transform_rows(rho, matrix, targets, n)
    return transform_rows(left.conj().T, matrix, targets, n).conj().T


def evolve_exact(circuit) -> DensityMatrix:
    """Evolve |0...0><0...0| through gates (U rho U^dag) and full Kraus sums."""
    n = circuit.n_qubits
    if n > MAX_ORACLE_QUBITS:
        raise ValidationError(
            f"density oracle supports at most {MAX_ORACLE_QUBITS} qubits, got {n}"
        )
    dim = 1 << n
    rho = np.zeros((dim, dim), dtype=np.complex128)
    rho[0, 0] = 1.0
    by_pos = circuit.sites_by_position()
    for pos, op in enumerate(circuit.ops):
        rho = _conjugate(rho, op.matrix, op.targets, n)
        for site in by_pos.get(pos, ()):
            channel = circuit.channels[site.channel_id]
            acc = np.zeros_like(rho)
            for K in channel.kraus_ops:
                acc += _conjugate(rho, K, site.targets, n)
            rho = acc
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    trace = float(np.trace(rho).real)
    if herm > 1e-10 or abs(trace - 1.0) > 1e-10:
        raise ValidationError(
            f"evolved density matrix violates invariants (hermiticity {herm:.2e}, "
            f"trace {trace!r})"
        )
    return DensityMatrix(n, rho)


def outcome_distribution(dm: DensityMatrix) -> np.ndarray:
    """diag(rho) clipped to [0, 1] and renormalized within tolerance."""
    diag = np.real(np.diagonal(dm.rho)).copy()
    if float(diag.min()) < -1e-8:
        raise ValidationError(f"negative outcome probability {diag.min():.3e} beyond tolerance")
    np.clip(diag, 0.0, 1.0, out=diag)
    total = float(diag.sum())
    if abs(total - 1.0) > 1e-8:
        raise ValidationError(f"outcome probabilities sum to {total}, too far from 1")
    return diag / total


def tv_distance(p, q) -> float:
    """Total-variation distance 0.5 * sum |p_i - q_i|."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValidationError(f"length mismatch: {p.shape} vs {q.shape}")
    for name, vec in (("p", p), ("q", q)):
        if abs(float(vec.sum()) - 1.0) > 1e-6:
            raise ValidationError(f"{name} sums to {vec.sum()}, not a distribution")
    return 0.5 * float(np.abs(p - q).sum())
