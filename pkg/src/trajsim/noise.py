"""Kraus noise channels: CPTP validation, unitary-mixture detection, builtins."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

CPTP_TOL = 1e-8
MIXTURE_TOL = 1e-8
ZERO_OP_TOL = 1e-12

_I = np.eye(2, dtype=np.complex128)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

BUILTIN_CHANNELS = ("depolarizing", "bit_flip", "phase_flip", "amplitude_damping")


@dataclass(frozen=True)
class UnitaryMixture:
    """Decomposition K_i = sqrt(p_i) U_i with state-independent outcome probabilities."""

    probs: np.ndarray
    unitaries: tuple[np.ndarray, ...]

    def __post_init__(self):
        total = float(np.sum(self.probs))
        if abs(total - 1.0) > 1e-8:
            raise ValidationError(f"mixture probabilities sum to {total}, expected 1")
        if np.any(self.probs <= 0.0) or np.any(self.probs > 1.0 + 1e-12):
            raise ValidationError("mixture probabilities must lie in (0, 1]")


class KrausChannel:
    """A noise channel given by Kraus operators of equal dimension 2**arity.

    Operators with max-norm below ZERO_OP_TOL are dropped at construction so
    degenerate parameters (p=0, p=1) yield clean single-operator channels.
    Trace preservation is checked separately by validate_cptp, so deliberately
    broken channels can still be constructed and inspected.
    """

    def __init__(self, kraus_ops, name: str | None = None):
        mats = [np.array(K, dtype=np.complex128) for K in kraus_ops]
        if not mats:
            raise ValidationError("channel needs at least one Kraus operator")
        d = mats[0].shape[0] if mats[0].ndim == 2 else 0
        for K in mats:
            if K.ndim != 2 or K.shape[0] != K.shape[1]:
                raise ValidationError("Kraus operators must be square matrices")
            if K.shape[0] != d:
                raise ValidationError("Kraus operators must share one dimension")
        arity = d.bit_length() - 1
        if d < 2 or d != 1 << arity:
            raise ValidationError(f"Kraus dimension {d} is not a power of two")
        mats = [K for K in mats if float(np.max(np.abs(K))) >= ZERO_OP_TOL]
        if not mats:
            raise ValidationError("all Kraus operators are numerically zero")
        self.kraus_ops = mats
        self.dim = d
        self.arity = arity
        self.name = name
        self._mixture: UnitaryMixture | None = None
        self._mixture_known = False

    def unitary_mixture(self, tol: float = MIXTURE_TOL) -> UnitaryMixture | None:
        """Detected unitary-mixture form, cached for the default tolerance."""
        if tol != MIXTURE_TOL:
            return detect_unitary_mixture(self, tol)
        if not self._mixture_known:
            self._mixture = detect_unitary_mixture(self, MIXTURE_TOL)
            self._mixture_known = True
        return self._mixture

    def __repr__(self):
        label = self.name or "custom"
        return f"KrausChannel({label}, arity={self.arity}, n_ops={len(self.kraus_ops)})"


@dataclass(frozen=True)
class CptpReport:
    valid: bool
    deviation: float


def validate_cptp(channel: KrausChannel, tol: float = CPTP_TOL) -> CptpReport:
    """Check sum_i K_i^dag K_i == I; deviation is the max elementwise error."""
    acc = np.zeros((channel.dim, channel.dim), dtype=np.complex128)
    for K in channel.kraus_ops:
        acc += K.conj().T @ K
    deviation = float(np.max(np.abs(acc - np.eye(channel.dim))))
    return CptpReport(deviation <= tol, deviation)


def detect_unitary_mixture(channel: KrausChannel, tol: float = MIXTURE_TOL) -> UnitaryMixture | None:
    """Return the {p_i, U_i} form when every K_i is a scalar multiple of a unitary.

    Scales are fixed by c_i = sqrt(tr(K_i^dag K_i) / d), so p_i = c_i**2; absent
    (None) when any rescaled operator fails the unitarity test.
    """
    d = channel.dim
    eye = np.eye(d)
    probs = []
    unitaries = []
    for K in channel.kraus_ops:
        c2 = float(np.trace(K.conj().T @ K).real) / d
        if c2 <= 0.0:
            return None
        U = K / math.sqrt(c2)
        if float(np.max(np.abs(U.conj().T @ U - eye))) > tol:
            return None
        probs.append(c2)
        unitaries.append(U)
    return UnitaryMixture(np.array(probs), tuple(unitaries))


def builtin_channel(name: str, param: float) -> KrausChannel:
    """Construct a named single-qubit channel; index 0 is the no-error/dominant operator."""
    param = float(param)
    if not 0.0 <= param <= 1.0:
        raise ValidationError(f"{name} parameter must be in [0, 1], got {param}")
    if name == "depolarizing":
        a, b = math.sqrt(1.0 - param), math.sqrt(param / 3.0)
        ops = [a * _I, b * _X, b * _Y, b * _Z]
    elif name == "bit_flip":
        ops = [math.sqrt(1.0 - param) * _I, math.sqrt(param) * _X]
    elif name == "phase_flip":
        ops = [math.sqrt(1.0 - param) * _I, math.sqrt(param) * _Z]
    elif name == "amplitude_damping":
        K0 = np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - param)]], dtype=np.complex128)
        K1 = np.array([[0.0, math.sqrt(param)], [0.0, 0.0]], dtype=np.complex128)
        ops = [K0, K1]
    else:
        raise ValidationError(f"unknown builtin channel '{name}'")
    return KrausChannel(ops, name=f"{name}({param!r})")
