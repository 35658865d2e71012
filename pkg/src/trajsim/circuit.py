"""Circuit data model, the line-based text formats, and noise-site attachment."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CircuitSyntaxError, ValidationError
from .noise import BUILTIN_CHANNELS, CPTP_TOL, KrausChannel, builtin_channel, validate_cptp

UNITARY_TOL = 1e-10

_SQ2 = 1.0 / math.sqrt(2.0)
_FIXED_GATES = {
    "i": np.eye(2, dtype=np.complex128),
    "x": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
    "h": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=np.complex128),
    "s": np.array([[1, 0], [0, 1j]], dtype=np.complex128),
    "t": np.array([[1, 0], [0, np.exp(1j * math.pi / 4)]], dtype=np.complex128),
    # First-listed target is the most significant local bit, so for cx the
    # first target is the control.
    "cx": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
    ),
    "cz": np.diag([1, 1, 1, -1]).astype(np.complex128),
    "swap": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=np.complex128
    ),
}
_ROTATION_GATES = {
    "rx": lambda a: np.array(
        [[math.cos(a / 2), -1j * math.sin(a / 2)], [-1j * math.sin(a / 2), math.cos(a / 2)]],
        dtype=np.complex128,
    ),
    "ry": lambda a: np.array(
        [[math.cos(a / 2), -math.sin(a / 2)], [math.sin(a / 2), math.cos(a / 2)]],
        dtype=np.complex128,
    ),
    "rz": lambda a: np.array(
        [[np.exp(-1j * a / 2), 0], [0, np.exp(1j * a / 2)]], dtype=np.complex128
    ),
}
GATE_ARITIES = {name: 1 for name in ("i", "x", "y", "z", "h", "s", "t", "rx", "ry", "rz")}
GATE_ARITIES.update({"cx": 2, "cz": 2, "swap": 2})


def builtin_gate_matrix(name: str, params) -> np.ndarray:
    if name in _FIXED_GATES:
        if params:
            raise ValidationError(f"gate '{name}' takes no angle")
        return _FIXED_GATES[name].copy()
    if name in _ROTATION_GATES:
        if len(params) != 1:
            raise ValidationError(f"gate '{name}' takes exactly one angle")
        return _ROTATION_GATES[name](float(params[0]))
    raise ValidationError(f"unknown gate '{name}'")


@dataclass(eq=False)
class GateOp:
    name: str
    params: tuple[float, ...]
    targets: tuple[int, ...]
    matrix: np.ndarray


@dataclass(frozen=True)
class NoiseSite:
    site_id: int
    position: int  # index into the op sequence; the site fires right after that op
    moment: int
    targets: tuple[int, ...]
    channel_id: str


def _check_op_matrix(matrix: np.ndarray, n_targets: int) -> None:
    dim = 1 << n_targets
    if matrix.shape != (dim, dim):
        raise ValidationError(f"matrix shape {matrix.shape} does not fit {n_targets} qubit(s)")
    dev = float(np.max(np.abs(matrix.conj().T @ matrix - np.eye(dim))))
    if dev > UNITARY_TOL:
        raise ValidationError(f"gate matrix is not unitary (deviation {dev:.2e})")


def gate_op(name: str, targets, params=()) -> GateOp:
    """Build a named-gate op with its textbook matrix."""
    targets = tuple(int(t) for t in targets)
    params = tuple(float(p) for p in params)
    if name not in GATE_ARITIES:
        raise ValidationError(f"unknown gate '{name}'")
    if len(targets) != GATE_ARITIES[name]:
        raise ValidationError(
            f"gate '{name}' expects {GATE_ARITIES[name]} qubit(s), got {len(targets)}"
        )
    if len(set(targets)) != len(targets):
        raise ValidationError(f"duplicate target in {targets}")
    return GateOp(name, params, targets, builtin_gate_matrix(name, params))


def matrix_op(matrix, targets) -> GateOp:
    """Build an op from an explicit unitary matrix."""
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets):
        raise ValidationError(f"duplicate target in {targets}")
    matrix = np.array(matrix, dtype=np.complex128)
    _check_op_matrix(matrix, len(targets))
    return GateOp("umat", (), targets, matrix)


def compute_moments(ops) -> list[int]:
    """Greedy-earliest time layers: each op lands right after its latest qubit conflict."""
    last: dict[int, int] = {}
    moments = []
    for op in ops:
        m = 1 + max((last.get(q, -1) for q in op.targets), default=-1)
        moments.append(m)
        for q in op.targets:
            last[q] = m
    return moments


@dataclass
class NoisyCircuit:
    n_qubits: int
    ops: list[GateOp]
    sites: list[NoiseSite] = field(default_factory=list)
    channels: dict[str, KrausChannel] = field(default_factory=dict)
    moments: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.moments:
            self.moments = compute_moments(self.ops)

    def site(self, site_id: int) -> NoiseSite:
        if not 0 <= site_id < len(self.sites):
            raise ValidationError(f"unknown noise site {site_id}")
        return self.sites[site_id]

    def sites_by_position(self) -> dict[int, list[NoiseSite]]:
        by_pos: dict[int, list[NoiseSite]] = {}
        for s in self.sites:
            by_pos.setdefault(s.position, []).append(s)
        return by_pos

    def validate(self) -> None:
        if self.n_qubits < 1:
            raise ValidationError("circuit needs at least one qubit")
        for op in self.ops:
            for q in op.targets:
                if not 0 <= q < self.n_qubits:
                    raise ValidationError(f"qubit {q} out of range in gate '{op.name}'")
        if len(self.moments) != len(self.ops):
            raise ValidationError("moment table length does not match op count")
        used: dict[int, set[int]] = {}
        for op, m in zip(self.ops, self.moments):
            taken = used.setdefault(m, set())
            if taken & set(op.targets):
                raise ValidationError(f"moment {m} holds two ops sharing a qubit")
            taken |= set(op.targets)
        prev_pos = -1
        for i, s in enumerate(self.sites):
            if s.site_id != i:
                raise ValidationError(f"site ids must be dense 0..S-1, got {s.site_id} at {i}")
            if s.position < prev_pos:
                raise ValidationError("site ids must increase with op position")
            prev_pos = s.position
            if not 0 <= s.position < len(self.ops):
                raise ValidationError(f"site {i} points at op {s.position}, which does not exist")
            for q in s.targets:
                if not 0 <= q < self.n_qubits:
                    raise ValidationError(f"site {i} targets qubit {q}, out of range")
            ch = self.channels.get(s.channel_id)
            if ch is None:
                raise ValidationError(f"site {i} references unknown channel '{s.channel_id}'")
            if ch.arity != len(s.targets):
                raise ValidationError(
                    f"site {i}: channel '{s.channel_id}' arity {ch.arity} "
                    f"does not match {len(s.targets)} target(s)"
                )


def make_circuit(n_qubits: int, ops, sites=(), channels=None) -> NoisyCircuit:
    circuit = NoisyCircuit(n_qubits, list(ops), list(sites), dict(channels or {}))
    circuit.validate()
    return circuit


# --- circuit text format -----------------------------------------------------


def _parse_complex(token: str, lineno: int) -> complex:
    try:
        return complex(token.replace("i", "j"))
    except ValueError:
        raise CircuitSyntaxError(f"bad complex number '{token}'", lineno) from None


def _format_complex(z: complex) -> str:
    sign = "+" if z.imag >= 0 else "-"
    return f"{float(z.real)!r}{sign}{abs(float(z.imag))!r}i"


def _parse_int(token: str, lineno: int, what: str = "integer") -> int:
    try:
        return int(token)
    except ValueError:
        raise CircuitSyntaxError(f"bad {what} '{token}'", lineno) from None


def _parse_qubits(tokens, lineno: int, n_qubits: int) -> tuple[int, ...]:
    qubits = tuple(_parse_int(t, lineno, "qubit index") for t in tokens)
    for q in qubits:
        if not 0 <= q < n_qubits:
            raise CircuitSyntaxError(f"qubit {q} out of range (declared {n_qubits})", lineno)
    if len(set(qubits)) != len(qubits):
        raise CircuitSyntaxError(f"duplicate target in {qubits}", lineno)
    return qubits


def parse_circuit(text: str) -> NoisyCircuit:
    """Parse the line-based circuit format; noise channels come from a noise model."""
    n_qubits = None
    ops: list[GateOp] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head = line.split(None, 1)[0]
        if head == "qubits":
            if n_qubits is not None:
                raise CircuitSyntaxError("duplicate 'qubits' declaration", lineno)
            tokens = line.split()
            if len(tokens) != 2:
                raise CircuitSyntaxError("expected 'qubits <n>'", lineno)
            n_qubits = _parse_int(tokens[1], lineno, "qubit count")
            if n_qubits < 1:
                raise CircuitSyntaxError(f"qubit count must be >= 1, got {n_qubits}", lineno)
            continue
        if n_qubits is None:
            raise CircuitSyntaxError("'qubits <n>' must come before any operation", lineno)
        if head == "gate":
            tokens = line.split()
            if len(tokens) < 3:
                raise CircuitSyntaxError("expected 'gate <name> <q0> [q1 ...] [@ angles]'", lineno)
            name = tokens[1]
            if name not in GATE_ARITIES:
                raise CircuitSyntaxError(f"unknown gate '{name}'", lineno)
            if "@" in tokens:
                at = tokens.index("@")
                qubit_tokens, param_tokens = tokens[2:at], tokens[at + 1 :]
            else:
                qubit_tokens, param_tokens = tokens[2:], []
            targets = _parse_qubits(qubit_tokens, lineno, n_qubits)
            try:
                params = tuple(float(t) for t in param_tokens)
            except ValueError:
                raise CircuitSyntaxError(f"bad angle in {param_tokens}", lineno) from None
            try:
                ops.append(gate_op(name, targets, params))
            except ValidationError as exc:
                raise CircuitSyntaxError(str(exc), lineno) from None
        elif head == "umat":
            if ":" not in line:
                raise CircuitSyntaxError("expected 'umat <q0> [q1 ...] : <entries>'", lineno)
            left, right = line.split(":", 1)
            targets = _parse_qubits(left.split()[1:], lineno, n_qubits)
            if not targets:
                raise CircuitSyntaxError("umat needs at least one target qubit", lineno)
            entries = [_parse_complex(t, lineno) for t in right.split()]
            dim = 1 << len(targets)
            if len(entries) != dim * dim:
                raise CircuitSyntaxError(
                    f"umat on {len(targets)} qubit(s) needs {dim * dim} entries, got {len(entries)}",
                    lineno,
                )
            matrix = np.array(entries, dtype=np.complex128).reshape(dim, dim)
            try:
                ops.append(matrix_op(matrix, targets))
            except ValidationError as exc:
                raise CircuitSyntaxError(str(exc), lineno) from None
        else:
            raise CircuitSyntaxError(f"unknown statement '{head}'", lineno)
    if n_qubits is None:
        raise CircuitSyntaxError("missing 'qubits <n>' declaration")
    return make_circuit(n_qubits, ops)


def serialize_circuit(circuit: NoisyCircuit) -> str:
    """Canonical text for a circuit's gate structure (sites live in the noise model)."""
    lines = [f"qubits {circuit.n_qubits}"]
    for op in circuit.ops:
        if op.name == "umat":
            entries = " ".join(_format_complex(z) for z in op.matrix.reshape(-1))
            lines.append(f"umat {' '.join(map(str, op.targets))} : {entries}")
        else:
            line = f"gate {op.name} {' '.join(map(str, op.targets))}"
            if op.params:
                line += " @ " + " ".join(repr(p) for p in op.params)
            lines.append(line)
    return "\n".join(lines) + "\n"


# --- noise model -------------------------------------------------------------


@dataclass(frozen=True)
class NoiseRule:
    gate_pattern: str  # gate name or "*"
    qubit_pattern: int | None  # None is the wildcard
    channel_id: str

    def matches(self, op: GateOp) -> bool:
        if self.gate_pattern != "*" and self.gate_pattern != op.name:
            return False
        return self.qubit_pattern is None or self.qubit_pattern in op.targets


@dataclass
class NoiseModel:
    rules: list[NoiseRule]
    channels: dict[str, KrausChannel]

    def match(self, op: GateOp) -> NoiseRule | None:
        """First matching rule wins."""
        for rule in self.rules:
            if rule.matches(op):
                return rule
        return None

    def validate(self, tol: float = CPTP_TOL) -> None:
        for cid, ch in self.channels.items():
            report = validate_cptp(ch, tol)
            if not report.valid:
                raise ValidationError(
                    f"channel '{cid}' is not trace preserving (deviation {report.deviation:.3e})"
                )


def _builtin_spec(spec: str) -> tuple[str, float] | None:
    if "(" not in spec or not spec.endswith(")"):
        return None
    name, arg = spec[:-1].split("(", 1)
    if name not in BUILTIN_CHANNELS:
        return None
    try:
        return name, float(arg)
    except ValueError:
        return None


def _keyvals(tokens, lineno: int, expected: tuple[str, ...]) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise CircuitSyntaxError(f"expected key=value, got '{tok}'", lineno)
        key, val = tok.split("=", 1)
        if key not in expected:
            raise CircuitSyntaxError(f"unknown key '{key}' (expected {expected})", lineno)
        if key in out:
            raise CircuitSyntaxError(f"duplicate key '{key}'", lineno)
        out[key] = val
    missing = [k for k in expected if k not in out]
    if missing:
        raise CircuitSyntaxError(f"missing key(s) {missing}", lineno)
    return out


def parse_noise_model(text: str, require_cptp: bool = True) -> NoiseModel:
    """Parse the key/value noise-model format: ordered rules plus custom channel blocks."""
    channels: dict[str, KrausChannel] = {}
    rule_stubs: list[tuple[str, int | None, str, int]] = []
    block: dict | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head == "channel":
            if block is not None:
                raise CircuitSyntaxError("channel block inside channel block", lineno)
            kv = _keyvals(tokens[1:], lineno, ("name", "arity"))
            arity = _parse_int(kv["arity"], lineno, "arity")
            if arity < 1:
                raise CircuitSyntaxError(f"arity must be >= 1, got {arity}", lineno)
            if kv["name"] in channels:
                raise CircuitSyntaxError(f"duplicate channel '{kv['name']}'", lineno)
            block = {"name": kv["name"], "arity": arity, "ops": [], "line": lineno}
        elif head == "kraus":
            if block is None:
                raise CircuitSyntaxError("'kraus' outside a channel block", lineno)
            entries = [_parse_complex(t, lineno) for t in tokens[1:]]
            dim = 1 << block["arity"]
            if len(entries) != dim * dim:
                raise CircuitSyntaxError(
                    f"kraus row needs {dim * dim} entries for arity {block['arity']}, "
                    f"got {len(entries)}",
                    lineno,
                )
            block["ops"].append(np.array(entries, dtype=np.complex128).reshape(dim, dim))
        elif head == "end":
            if block is None:
                raise CircuitSyntaxError("'end' without a channel block", lineno)
            try:
                channels[block["name"]] = KrausChannel(block["ops"], name=block["name"])
            except ValidationError as exc:
                raise CircuitSyntaxError(str(exc), block["line"]) from None
            block = None
        elif head == "rule":
            if block is not None:
                raise CircuitSyntaxError("rule inside a channel block", lineno)
            kv = _keyvals(tokens[1:], lineno, ("gate", "qubit", "channel"))
            qubit = None if kv["qubit"] == "*" else _parse_int(kv["qubit"], lineno, "qubit index")
            rule_stubs.append((kv["gate"], qubit, kv["channel"], lineno))
        else:
            raise CircuitSyntaxError(f"unknown statement '{head}'", lineno)
    if block is not None:
        raise CircuitSyntaxError("unterminated channel block", block["line"])

    rules = []
    for gate_pat, qubit_pat, spec, lineno in rule_stubs:
        if spec in channels:
            cid = spec
        else:
            builtin = _builtin_spec(spec)
            if builtin is None:
                raise CircuitSyntaxError(f"unknown channel '{spec}'", lineno)
            name, param = builtin
            try:
                ch = builtin_channel(name, param)
            except ValidationError as exc:
                raise CircuitSyntaxError(str(exc), lineno) from None
            cid = ch.name
            channels.setdefault(cid, ch)
        rules.append(NoiseRule(gate_pat, qubit_pat, cid))
    model = NoiseModel(rules, channels)
    if require_cptp:
        model.validate()
    return model


def serialize_noise_model(model: NoiseModel) -> str:
    """Canonical text form; custom channels as blocks, builtins by their spec string."""
    lines = []
    for cid, ch in model.channels.items():
        if _builtin_spec(cid) is not None:
            continue
        lines.append(f"channel name={cid} arity={ch.arity}")
        for K in ch.kraus_ops:
            lines.append("kraus " + " ".join(_format_complex(z) for z in K.reshape(-1)))
        lines.append("end")
    for rule in model.rules:
        qubit = "*" if rule.qubit_pattern is None else str(rule.qubit_pattern)
        lines.append(f"rule gate={rule.gate_pattern} qubit={qubit} channel={rule.channel_id}")
    return "\n".join(lines) + "\n"


def attach_noise(circuit: NoisyCircuit, model: NoiseModel) -> NoisyCircuit:
    """Attach one noise site per matched op (chunked over targets by channel arity).

    Existing sites are kept; the merged list is re-sorted by op position and
    site ids are renumbered densely.
    """
    new_sites: list[NoiseSite] = []
    channels = dict(circuit.channels)
    for pos, op in enumerate(circuit.ops):
        rule = model.match(op)
        if rule is None:
            continue
        ch = model.channels[rule.channel_id]
        k = ch.arity
        if len(op.targets) % k != 0:
            raise ValidationError(
                f"channel '{rule.channel_id}' arity {k} does not divide the "
                f"{len(op.targets)} target(s) of gate '{op.name}'"
            )
        existing = channels.get(rule.channel_id)
        if existing is not None and existing is not ch:
            same = len(existing.kraus_ops) == len(ch.kraus_ops) and all(
                np.array_equal(a, b) for a, b in zip(existing.kraus_ops, ch.kraus_ops)
            )
            if not same:
                raise ValidationError(f"conflicting definitions for channel '{rule.channel_id}'")
        channels.setdefault(rule.channel_id, ch)
        for start in range(0, len(op.targets), k):
            new_sites.append(
                NoiseSite(
                    site_id=-1,
                    position=pos,
                    moment=circuit.moments[pos],
                    targets=op.targets[start : start + k],
                    channel_id=rule.channel_id,
                )
            )
    merged = sorted(circuit.sites + new_sites, key=lambda s: s.position)
    merged = [replace(s, site_id=i) for i, s in enumerate(merged)]
    out = NoisyCircuit(circuit.n_qubits, circuit.ops, merged, channels, list(circuit.moments))
    out.validate()
    return out


# --- content hashes ----------------------------------------------------------


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def circuit_hash(circuit: NoisyCircuit) -> str:
    return _sha256(serialize_circuit(circuit))


def noise_model_hash(model: NoiseModel) -> str:
    return _sha256(serialize_noise_model(model))


def sites_hash(circuit: NoisyCircuit) -> str:
    """Hash of the attached noise structure (sites plus their channel matrices)."""
    lines = []
    for s in circuit.sites:
        targets = ",".join(map(str, s.targets))
        lines.append(f"site {s.site_id} pos={s.position} moment={s.moment} "
                     f"targets={targets} channel={s.channel_id}")
    for cid in sorted(circuit.channels):
        ch = circuit.channels[cid]
        for K in ch.kraus_ops:
            lines.append(f"{cid} " + " ".join(_format_complex(z) for z in K.reshape(-1)))
    return _sha256("\n".join(lines) + "\n")
