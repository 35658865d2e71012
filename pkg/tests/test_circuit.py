import math

import numpy as np
import pytest

import trajsim as ts
from trajsim.errors import CircuitSyntaxError, ValidationError

from conftest import random_gate_list


def test_parse_minimal():
    circuit = ts.parse_circuit("qubits 1\ngate h 0\n")
    assert circuit.n_qubits == 1
    assert len(circuit.ops) == 1
    assert circuit.ops[0].name == "h"
    assert circuit.sites == []


def test_parse_out_of_range_qubit():
    with pytest.raises(CircuitSyntaxError, match="line 3.*qubit 5 out of range"):
        ts.parse_circuit("qubits 2\ngate cx 0 1\ngate x 5\n")


def test_moments_greedy_earliest():
    circuit = ts.parse_circuit("qubits 2\ngate h 0\ngate h 1\ngate cx 0 1\n")
    assert circuit.moments == [0, 0, 1]


def test_moments_respect_qubit_order():
    circuit = ts.parse_circuit("qubits 2\ngate h 0\ngate cx 0 1\ngate h 1\n")
    assert circuit.moments == [0, 1, 2]


@pytest.mark.parametrize(
    "text, message",
    [
        ("qubits 2\ngate foo 0\n", "unknown gate"),
        ("qubits 2\ngate cx 0 0\n", "duplicate target"),
        ("qubits 2\ngate rx 0\n", "exactly one angle"),
        ("qubits 2\ngate h 0 @ 0.3\n", "no angle"),
        ("gate h 0\n", "'qubits <n>' must come"),
        ("qubits 2\nqubits 2\n", "duplicate 'qubits'"),
        ("qubits 0\n", "must be >= 1"),
        ("qubits 2\nbogus 1\n", "unknown statement"),
        ("qubits 2\ngate h zero\n", "bad qubit index"),
    ],
)
def test_parse_errors(text, message):
    with pytest.raises(CircuitSyntaxError, match=message):
        ts.parse_circuit(text)


def test_parse_comments_and_blank_lines():
    circuit = ts.parse_circuit("# header\nqubits 1\n\ngate x 0  # flip\n")
    assert len(circuit.ops) == 1


def test_umat_parse_and_apply():
    s = 1 / math.sqrt(2)
    text = f"qubits 1\numat 0 : {s}+0i {s}+0i {s}+0i -{s}+0i\n"
    circuit = ts.parse_circuit(text)
    assert circuit.ops[0].name == "umat"
    assert np.allclose(circuit.ops[0].matrix, ts.builtin_gate_matrix("h", []))


def test_umat_rejects_non_unitary():
    with pytest.raises(CircuitSyntaxError, match="not unitary"):
        ts.parse_circuit("qubits 1\numat 0 : 1+0i 0+0i 0+0i 0.5+0i\n")


def test_umat_entry_count():
    with pytest.raises(CircuitSyntaxError, match="needs 16 entries"):
        ts.parse_circuit("qubits 2\numat 0 1 : 1+0i 0+0i 0+0i 1+0i\n")


@pytest.mark.parametrize("name", ["ghz4.circ", "teleport5.circ", "distill5.circ", "bench20.circ"])
def test_serialize_round_trip_demos(name):
    from trajsim import demos

    first = ts.parse_circuit(demos.demo_path(name).read_text())
    text = ts.serialize_circuit(first)
    second = ts.parse_circuit(text)
    assert second.n_qubits == first.n_qubits
    assert ts.serialize_circuit(second) == text
    for a, b in zip(first.ops, second.ops):
        assert (a.name, a.params, a.targets) == (b.name, b.params, b.targets)
        assert np.array_equal(a.matrix, b.matrix)


def test_serialize_round_trip_random():
    rng = np.random.default_rng(7)
    for _ in range(25):
        n = int(rng.integers(1, 6))
        circuit = ts.make_circuit(n, random_gate_list(rng, n, int(rng.integers(1, 15))))
        text = ts.serialize_circuit(circuit)
        again = ts.parse_circuit(text)
        assert ts.serialize_circuit(again) == text
        assert again.moments == circuit.moments


def test_moment_disjointness_random():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = int(rng.integers(2, 8))
        circuit = ts.make_circuit(n, random_gate_list(rng, n, 20))
        per_moment = {}
        for op, m in zip(circuit.ops, circuit.moments):
            taken = per_moment.setdefault(m, set())
            assert not (taken & set(op.targets))
            taken |= set(op.targets)


def test_builtin_gate_matrices():
    assert np.array_equal(ts.builtin_gate_matrix("x", []), np.array([[0, 1], [1, 0]]))
    assert np.allclose(ts.builtin_gate_matrix("rz", [0.0]), np.eye(2))
    # exp(-i pi X / 2) carries the global phase -i
    assert np.allclose(
        ts.builtin_gate_matrix("rx", [math.pi]), -1j * np.array([[0, 1], [1, 0]])
    )


def test_builtin_gate_unitarity_grid():
    rng = np.random.default_rng(3)
    for name in ("i", "x", "y", "z", "h", "s", "t", "cx", "cz", "swap"):
        m = ts.builtin_gate_matrix(name, [])
        assert np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) <= 1e-10
    for name in ("rx", "ry", "rz"):
        for a in rng.uniform(-7, 7, size=5):
            m = ts.builtin_gate_matrix(name, [a])
            assert np.max(np.abs(m.conj().T @ m - np.eye(2))) <= 1e-10


# --- noise model and attachment ---


def test_attach_matching_rules():
    circuit = ts.parse_circuit("qubits 2\ngate h 0\ngate x 1\ngate cx 0 1\n")
    model = ts.parse_noise_model(
        "rule gate=h qubit=* channel=depolarizing(0.01)\n"
        "rule gate=x qubit=* channel=depolarizing(0.01)\n"
    )
    noisy = ts.attach_noise(circuit, model)
    assert [(s.site_id, s.position) for s in noisy.sites] == [(0, 0), (1, 1)]
    assert all(s.channel_id == "depolarizing(0.01)" for s in noisy.sites)


def test_attach_empty_rules():
    circuit = ts.parse_circuit("qubits 2\ngate h 0\n")
    noisy = ts.attach_noise(circuit, ts.NoiseModel([], {}))
    assert noisy.sites == []


def test_attach_first_match_wins():
    circuit = ts.parse_circuit("qubits 1\ngate x 0\n")
    model = ts.parse_noise_model(
        "rule gate=x qubit=0 channel=bit_flip(0.1)\n"
        "rule gate=* qubit=* channel=depolarizing(0.2)\n"
    )
    noisy = ts.attach_noise(circuit, model)
    assert len(noisy.sites) == 1
    assert noisy.sites[0].channel_id == "bit_flip(0.1)"


def test_attach_one_site_per_target_for_1q_channels():
    circuit = ts.parse_circuit("qubits 2\ngate cx 0 1\n")
    model = ts.parse_noise_model("rule gate=cx qubit=* channel=bit_flip(0.1)\n")
    noisy = ts.attach_noise(circuit, model)
    assert [s.targets for s in noisy.sites] == [(0,), (1,)]
    assert all(s.moment == 0 for s in noisy.sites)


def test_attach_multi_qubit_channel_arity():
    two_q = ts.KrausChannel([np.eye(4)], name="id2")
    model = ts.NoiseModel([ts.NoiseRule("cx", None, "id2")], {"id2": two_q})
    circuit = ts.parse_circuit("qubits 2\ngate cx 0 1\n")
    noisy = ts.attach_noise(circuit, model)
    assert [s.targets for s in noisy.sites] == [(0, 1)]

    bad = ts.NoiseModel([ts.NoiseRule("h", None, "id2")], {"id2": two_q})
    with pytest.raises(ValidationError, match="does not divide"):
        ts.attach_noise(ts.parse_circuit("qubits 2\ngate h 0\n"), bad)


def test_attach_structure_idempotent_when_nothing_matches():
    circuit = ts.parse_circuit("qubits 2\ngate h 0\ngate x 1\n")
    model = ts.parse_noise_model("rule gate=h qubit=* channel=bit_flip(0.1)\n")
    once = ts.attach_noise(circuit, model)
    again = ts.attach_noise(once, ts.NoiseModel([], {}))
    assert [(s.site_id, s.position, s.targets) for s in again.sites] == [
        (s.site_id, s.position, s.targets) for s in once.sites
    ]


def test_noise_model_custom_channel_block():
    text = (
        "channel name=soft arity=1\n"
        "kraus 1+0i 0+0i 0+0i 0.9486832980505138+0i\n"
        "kraus 0+0i 0+0i 0+0i 0.31622776601683794+0i\n"
        "end\n"
        "rule gate=* qubit=* channel=soft\n"
    )
    model = ts.parse_noise_model(text)
    assert model.rules[0].channel_id == "soft"
    assert ts.validate_cptp(model.channels["soft"]).valid


def test_noise_model_rejects_broken_channel():
    text = "channel name=bad arity=1\nkraus 0.5+0i 0+0i 0+0i 0.5+0i\nend\nrule gate=* qubit=* channel=bad\n"
    with pytest.raises(ValidationError, match="not trace preserving"):
        ts.parse_noise_model(text)
    model = ts.parse_noise_model(text, require_cptp=False)
    assert not ts.validate_cptp(model.channels["bad"]).valid


@pytest.mark.parametrize(
    "text, message",
    [
        ("rule gate=h qubit=* channel=nope(0.1)\n", "unknown channel"),
        ("rule gate=h qubit=* channel=mychan\n", "unknown channel"),
        ("kraus 1+0i 0+0i 0+0i 1+0i\n", "outside a channel"),
        ("channel name=a arity=1\n", "unterminated"),
        ("rule gate=h channel=bit_flip(0.1)\n", "missing key"),
    ],
)
def test_noise_model_parse_errors(text, message):
    with pytest.raises(CircuitSyntaxError, match=message):
        ts.parse_noise_model(text)


def test_noise_model_serialize_stable():
    from trajsim import demos

    text = demos.demo_path("custom_example.noise").read_text()
    model = ts.parse_noise_model(text)
    canon = ts.serialize_noise_model(model)
    again = ts.parse_noise_model(canon)
    assert ts.serialize_noise_model(again) == canon
    assert ts.noise_model_hash(again) == ts.noise_model_hash(model)


def test_circuit_hash_changes_with_content():
    a = ts.parse_circuit("qubits 1\ngate h 0\n")
    b = ts.parse_circuit("qubits 1\ngate x 0\n")
    assert ts.circuit_hash(a) != ts.circuit_hash(b)
    assert ts.circuit_hash(a) == ts.circuit_hash(ts.parse_circuit(ts.serialize_circuit(a)))
