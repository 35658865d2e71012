"""Shared fixtures and generators for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

import trajsim as ts
from trajsim import demos

GATE_POOL_1Q = ("h", "x", "y", "z", "s", "t", "rx", "ry", "rz")
GATE_POOL_2Q = ("cx", "cz")
MIXTURE_CHANNELS = ("bit_flip", "phase_flip", "depolarizing")


def counts_to_dist(counts: dict[str, int], n_qubits: int) -> np.ndarray:
    dist = np.zeros(1 << n_qubits)
    for bits, c in counts.items():
        dist[int(bits, 2)] += c
    return dist / dist.sum()


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_gate_list(rng: np.random.Generator, n_qubits: int, n_gates: int) -> list:
    ops = []
    for _ in range(n_gates):
        if n_qubits >= 2 and rng.random() < 0.3:
            name = GATE_POOL_2Q[rng.integers(len(GATE_POOL_2Q))]
            a, b = rng.choice(n_qubits, size=2, replace=False)
            ops.append(ts.gate_op(name, [int(a), int(b)]))
        else:
            name = GATE_POOL_1Q[rng.integers(len(GATE_POOL_1Q))]
            q = int(rng.integers(n_qubits))
            params = [float(rng.uniform(0, 2 * np.pi))] if name.startswith("r") else []
            ops.append(ts.gate_op(name, [q], params))
    return ops


def random_mixture_circuit(rng: np.random.Generator, max_qubits: int = 6,
                           max_sites: int = 8, max_sets: int = 4096) -> ts.NoisyCircuit:
    """Random circuit with unitary-mixture noise, bounded site count and enumeration size."""
    while True:
        n = int(rng.integers(2, max_qubits + 1))
        ops = random_gate_list(rng, n, int(rng.integers(5, 13)))
        circuit = ts.make_circuit(n, ops)
        noisy_names = list(
            rng.choice(sorted({op.name for op in ops}),
                       size=min(3, len({op.name for op in ops})), replace=False)
        )
        rules = []
        channels = {}
        for name in noisy_names:
            kind = MIXTURE_CHANNELS[rng.integers(len(MIXTURE_CHANNELS))]
            param = float(rng.uniform(0.02, 0.3))
            channel = ts.builtin_channel(kind, param)
            channels[channel.name] = channel
            rules.append(ts.NoiseRule(name, None, channel.name))
        noisy = ts.attach_noise(circuit, ts.NoiseModel(rules, channels))
        n_sets = 1
        for site in noisy.sites:
            n_sets *= len(noisy.channels[site.channel_id].kraus_ops)
        if 1 <= len(noisy.sites) <= max_sites and n_sets <= max_sets:
            return noisy


def random_mixed_circuit(rng: np.random.Generator, max_qubits: int = 5,
                         max_sites: int = 6) -> ts.NoisyCircuit:
    """Random circuit mixing unitary-mixture and general (damping) channels."""
    while True:
        n = int(rng.integers(2, max_qubits + 1))
        ops = random_gate_list(rng, n, int(rng.integers(4, 10)))
        circuit = ts.make_circuit(n, ops)
        names = sorted({op.name for op in ops})
        rules = []
        channels = {}
        for name in rng.choice(names, size=min(3, len(names)), replace=False):
            kind = (MIXTURE_CHANNELS + ("amplitude_damping",))[rng.integers(4)]
            channel = ts.builtin_channel(kind, float(rng.uniform(0.05, 0.3)))
            channels[channel.name] = channel
            rules.append(ts.NoiseRule(str(name), None, channel.name))
        noisy = ts.attach_noise(circuit, ts.NoiseModel(rules, channels))
        mixtures = [noisy.channels[s.channel_id].unitary_mixture() for s in noisy.sites]
        mixed = any(m is None for m in mixtures) and any(m is not None for m in mixtures)
        if mixed and 1 <= len(noisy.sites) <= max_sites:
            return noisy


def load_demo(circ_name: str, noise_name: str | None = None) -> ts.NoisyCircuit:
    circuit = ts.parse_circuit(demos.demo_path(circ_name).read_text())
    if noise_name is not None:
        model = ts.parse_noise_model(demos.demo_path(noise_name).read_text())
        circuit = ts.attach_noise(circuit, model)
    return circuit


@pytest.fixture(scope="session")
def rychain_mixture() -> ts.NoisyCircuit:
    return load_demo("rychain4.circ", "rychain_mixture.noise")


@pytest.fixture(scope="session")
def rychain_damped() -> ts.NoisyCircuit:
    return load_demo("rychain4.circ", "rychain_damped.noise")
