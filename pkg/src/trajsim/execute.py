"""Batched execution: one preparation per trajectory spec, bulk shots, datasets.

Records are grouped by trajectory id in ascending order regardless of worker
completion order, so output bytes do not depend on the parallelism level.
"""

from __future__ import annotations

import copy
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import statevector as sv
from .circuit import circuit_hash, sites_hash
from .errors import AnnihilatedStateError, ValidationError
from .presample import TrajectorySpec, canonical_selections
from .version import __version__

MASK64 = (1 << 64) - 1
SCHEMA_VERSION = 1
RECORDS_FILE = "records.jsonl"
MANIFEST_FILE = "manifest.json"
# Manifest keys that hold wall-clock measurements; excluded from hashed or
# compared content.
TIMING_KEYS = ("prep_time", "sample_time", "wall_time", "created_unix")


def mix_seed(master_seed: int, stream: int) -> int:
    """SplitMix64-style avalanche of (master_seed, stream) into a 64-bit stream seed.

    Constants are the standard SplitMix64 increment and finalizer multipliers.
    """
    z = (master_seed + (stream + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_rng(master_seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix_seed(master_seed, stream)))


@dataclass(frozen=True)
class ShotRecord:
    trajectory_id: int
    bitstring: str
    count: int


@dataclass
class TrajectoryResult:
    batch: sv.ShotBatch
    realized_weight: float
    prep_time: float
    sample_time: float


def validate_spec(circuit, spec: TrajectorySpec) -> None:
    if canonical_selections(spec.selections) != tuple(spec.selections):
        raise ValidationError(f"spec selections {spec.selections} are not canonical")
    for site_id, k in spec.selections:
        channel = circuit.channels[circuit.site(site_id).channel_id]
        if not 0 <= k < len(channel.kraus_ops):
            raise ValidationError(f"site {site_id} has no Kraus outcome {k}")
    if spec.shots < 0:
        raise ValidationError(f"shots must be >= 0, got {spec.shots}")


def prepare_state(circuit, spec: TrajectorySpec) -> tuple[sv.ComplexState, float]:
    """Evolve once with the spec's fixed operators (index 0 at unlisted sites).

    Unitary-mixture outcomes apply U_k directly; general outcomes renormalize
    and accumulate the realized probability into the returned weight.
    """
    validate_spec(circuit, spec)
    chosen = dict(spec.selections)
    state = sv.init_zero(circuit.n_qubits)
    by_pos = circuit.sites_by_position()
    weight = 1.0
    for pos, op in enumerate(circuit.ops):
        state = sv.apply_gate(state, op)
        for site in by_pos.get(pos, ()):
            k = chosen.get(site.site_id, 0)
            channel = circuit.channels[site.channel_id]
            mixture = channel.unitary_mixture()
            if mixture is not None:
                state = sv.apply_matrix(state, mixture.unitaries[k], site.targets)
            else:
                state, realized = sv.apply_kraus_normalized(
                    state, channel.kraus_ops[k], site.targets
                )
                weight *= realized
    return state, weight


def execute_trajectory(circuit, spec: TrajectorySpec, rng: np.random.Generator) -> TrajectoryResult:
    """One state preparation, then all of the spec's shots in bulk."""
    t0 = time.perf_counter()
    state, weight = prepare_state(circuit, spec)
    t1 = time.perf_counter()
    if spec.shots > 0:
        batch = sv.sample_shots(state, spec.shots, rng)
    else:
        batch = sv.ShotBatch(circuit.n_qubits, {}, 0)
    t2 = time.perf_counter()
    return TrajectoryResult(batch, weight, t1 - t0, t2 - t1)


def execute_naive(circuit, spec: TrajectorySpec, n_shots: int,
                  rng: np.random.Generator) -> tuple[sv.ShotBatch, float]:
    """Baseline mode: n_shots full repreparations of the same fixed trajectory, one shot each."""
    if n_shots < 1:
        raise ValidationError(f"n_shots must be >= 1, got {n_shots}")
    single = replace(spec, shots=1)
    counts: dict[str, int] = {}
    t0 = time.perf_counter()
    for _ in range(n_shots):
        result = execute_trajectory(circuit, single, rng)
        for bits, c in result.batch.counts.items():
            counts[bits] = counts.get(bits, 0) + c
    elapsed = time.perf_counter() - t0
    return sv.ShotBatch(circuit.n_qubits, counts, n_shots), elapsed


def execute_all(circuit, specs, parallelism: int = 1, master_seed: int = 0,
                meta: dict | None = None) -> "Dataset":
    """Run every spec (trajectory t seeded with mix(master_seed, t)) and collect a Dataset.

    Workers pull trajectories from a shared pool; a failed trajectory is kept in
    the manifest with zero records and marks the dataset partial.
    """
    if parallelism < 1:
        raise ValidationError(f"parallelism must be >= 1, got {parallelism}")
    specs = list(specs)
    for spec in specs:
        validate_spec(circuit, spec)
    start = time.perf_counter()

    def run_one(t: int) -> dict:
        seed = mix_seed(master_seed, t)
        rng = np.random.Generator(np.random.PCG64(seed))
        spec = specs[t]
        row = {
            "id": t,
            "selections": tuple(spec.selections),
            "joint_prob": spec.joint_prob,
            "shots": spec.shots,
            "seed": seed,
            "tags": spec.tags,
        }
        try:
            result = execute_trajectory(circuit, spec, rng)
        except AnnihilatedStateError as exc:
            row.update(status="annihilated", error=str(exc), counts={},
                       realized_weight=0.0, prep_time=None, sample_time=None)
            return row
        except Exception as exc:  # noqa: BLE001 - worker failures mark the dataset partial
            row.update(status="error", error=f"{type(exc).__name__}: {exc}", counts={},
                       realized_weight=0.0, prep_time=None, sample_time=None)
            return row
        row.update(status="ok", counts=result.batch.counts,
                   realized_weight=result.realized_weight,
                   prep_time=result.prep_time, sample_time=result.sample_time)
        return row

    if parallelism == 1 or len(specs) <= 1:
        rows = [run_one(t) for t in range(len(specs))]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(run_one, range(len(specs))))
    wall = time.perf_counter() - start
    return assemble_dataset(circuit, rows, master_seed=master_seed, mode="batched",
                            meta=meta, wall_time=wall)


def assemble_dataset(circuit, rows, *, master_seed: int, mode: str,
                     meta: dict | None = None, wall_time: float = 0.0) -> "Dataset":
    """Build the records list (sorted by trajectory, then bitstring) and the manifest.

    The worker count is deliberately not recorded: the output does not depend
    on it.
    """
    records: list[ShotRecord] = []
    trajectories = []
    total_shots = 0
    partial = False
    for row in rows:
        counts = row.pop("counts")
        status = row["status"]
        if status != "ok":
            partial = True
        emitted = sum(counts.values())
        total_shots += emitted
        for bits in sorted(counts):
            records.append(ShotRecord(row["id"], bits, counts[bits]))
        entry = dict(row)
        entry["selections"] = [list(pair) for pair in row["selections"]]
        entry["emitted"] = emitted
        trajectories.append(entry)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "engine": {"name": "trajsim", "version": __version__},
        "n_qubits": circuit.n_qubits,
        "circuit_sha256": circuit_hash(circuit),
        "noise_sites_sha256": sites_hash(circuit),
        "noise_model_sha256": None,
        "mode": mode,
        "master_seed": master_seed,
        "n_trajectories": len(trajectories),
        "total_shots": total_shots,
        "partial": partial,
        "trajectories": trajectories,
        "wall_time": wall_time,
        "created_unix": time.time(),
    }
    if meta:
        manifest.update(meta)
    return Dataset(manifest, records)


def manifest_core(manifest: dict) -> dict:
    """Deep copy of a manifest with all timing fields removed (for comparisons)."""

    def strip(obj):
        if isinstance(obj, dict):
            return {k: strip(v) for k, v in obj.items() if k not in TIMING_KEYS}
        if isinstance(obj, list):
            return [strip(v) for v in obj]
        return obj

    return strip(copy.deepcopy(manifest))


@dataclass
class Dataset:
    """Shot records plus the manifest that makes them reproducible."""

    manifest: dict
    records: list[ShotRecord]

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        records_path = out / RECORDS_FILE
        manifest_path = out / MANIFEST_FILE
        with records_path.open("w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps({"t": r.trajectory_id, "b": r.bitstring, "c": r.count},
                                    separators=(",", ":")))
                fh.write("\n")
        with manifest_path.open("w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return records_path, manifest_path

    @classmethod
    def read(cls, out_dir) -> "Dataset":
        out = Path(out_dir)
        with (out / MANIFEST_FILE).open(encoding="utf-8") as fh:
            manifest = json.load(fh)
        records = []
        with (out / RECORDS_FILE).open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                records.append(ShotRecord(obj["t"], obj["b"], obj["c"]))
        return cls(manifest, records)

    def validate(self) -> None:
        by_id = {row["id"]: row for row in self.manifest["trajectories"]}
        per_traj: dict[int, int] = {}
        for r in self.records:
            if r.trajectory_id not in by_id:
                raise ValidationError(f"record references unknown trajectory {r.trajectory_id}")
            if len(r.bitstring) != self.manifest["n_qubits"]:
                raise ValidationError(f"record bitstring '{r.bitstring}' has wrong width")
            per_traj[r.trajectory_id] = per_traj.get(r.trajectory_id, 0) + r.count
        for row in self.manifest["trajectories"]:
            expected = row["shots"] if row["status"] == "ok" else 0
            if per_traj.get(row["id"], 0) != expected:
                raise ValidationError(
                    f"trajectory {row['id']}: {per_traj.get(row['id'], 0)} recorded shots, "
                    f"expected {expected}"
                )

    def pooled_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for r in self.records:
            counts[r.bitstring] = counts.get(r.bitstring, 0) + r.count
        return counts

    def counts_for(self, trajectory_id: int) -> dict[str, int]:
        return {
            r.bitstring: r.count for r in self.records if r.trajectory_id == trajectory_id
        }


def unique_fraction(batch: sv.ShotBatch) -> float:
    """Distinct bitstrings over total shots."""
    if batch.total == 0:
        raise ValidationError("empty shot batch")
    return len(batch.counts) / batch.total


@dataclass(frozen=True)
class ThroughputRow:
    m: int
    mode: str
    shots_per_second: float
    unique_fraction: float


def throughput_report(circuit, spec: TrajectorySpec, batch_sizes,
                      master_seed: int = 0, naive_prep_cap: int = 32) -> list[ThroughputRow]:
    """Measure batched (one prep + m shots) vs naive (one prep per shot) rates.

    Naive preparations are capped at naive_prep_cap per batch size: the naive
    per-shot rate does not depend on m, and a full 10^4-preparation sweep on a
    wide state would dominate the runtime without changing the measurement.
    """
    rows = []
    for m in batch_sizes:
        if m < 1:
            raise ValidationError(f"batch size must be >= 1, got {m}")
        rng = stream_rng(master_seed, m)
        result = execute_trajectory(circuit, replace(spec, shots=m), rng)
        elapsed = max(result.prep_time + result.sample_time, 1e-12)
        rows.append(ThroughputRow(m, "batched", m / elapsed, unique_fraction(result.batch)))
        n_prep = min(m, naive_prep_cap)
        naive_batch, naive_elapsed = execute_naive(circuit, spec, n_prep, rng)
        rows.append(ThroughputRow(m, "naive", n_prep / max(naive_elapsed, 1e-12),
                                  unique_fraction(naive_batch)))
    return rows


def write_throughput_csv(rows, path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("m,mode,shots_per_second,unique_fraction\n")
        for row in rows:
            fh.write(f"{row.m},{row.mode},{row.shots_per_second!r},{row.unique_fraction!r}\n")
    return path
