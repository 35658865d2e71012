"""Command-line front end: validate, run, oracle, bench.

Exit codes: 0 success, 2 parse error, 3 validation failure, 4 execution
failure, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .circuit import (
    attach_noise,
    circuit_hash,
    noise_model_hash,
    parse_circuit,
    parse_noise_model,
    sites_hash,
)
from .density import MAX_ORACLE_QUBITS, evolve_exact, outcome_distribution, tv_distance
from .errors import CircuitSyntaxError, ExecutionError, TrajsimError, ValidationError
from .execute import (
    Dataset,
    TrajectorySpec,
    execute_all,
    prepare_state,
    stream_rng,
    throughput_report,
    unique_fraction,
    write_throughput_csv,
)
from .noise import validate_cptp
from .presample import (
    SiteFilter,
    enumerate_cutoff,
    presample_band,
    presample_probabilistic,
    reallocate_proportional,
)
from .statevector import sample_shots
from .version import __version__

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_EXECUTION = 4
EXIT_IO = 5

# Strategies that assign a uniform shot budget per spec; their datasets are
# compared against the oracle after reweighting by relative joint probability.
UNIFORM_SHOT_STRATEGIES = ("probabilistic", "band", "cutoff")


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_circuit(args) -> tuple:
    circuit = parse_circuit(_read_text(args.circuit))
    model = None
    if getattr(args, "noise", None):
        model = parse_noise_model(_read_text(args.noise))
        circuit = attach_noise(circuit, model)
    return circuit, model


def _site_filter(args) -> SiteFilter | None:
    gates = frozenset(args.filter_gate) if args.filter_gate else None
    qubits = frozenset(args.filter_qubit) if args.filter_qubit else None
    moments = frozenset(args.filter_moment) if args.filter_moment else None
    if gates is None and qubits is None and moments is None:
        return None
    return SiteFilter(gates, qubits, moments)


def cmd_validate(args) -> int:
    circuit = parse_circuit(_read_text(args.circuit))
    model = parse_noise_model(_read_text(args.noise), require_cptp=False)
    print(f"circuit: {args.circuit} ({circuit.n_qubits} qubits, {len(circuit.ops)} ops)")
    all_valid = True
    for cid, channel in model.channels.items():
        report = validate_cptp(channel)
        if report.valid:
            mixture = channel.unitary_mixture()
            kind = f"unitary mixture ({len(mixture.probs)} ops)" if mixture else "general"
            print(f"channel {cid}: ok, cptp deviation {report.deviation:.3e}, {kind}")
        else:
            print(f"channel {cid}: INVALID, cptp deviation {report.deviation:.3e}")
        all_valid = all_valid and report.valid
    noisy = attach_noise(circuit, model) if all_valid else None
    if noisy is not None:
        print(f"noise sites: {len(noisy.sites)}")
    return EXIT_OK if all_valid else EXIT_VALIDATION


def _build_specs(args, circuit):
    strategy_rng = stream_rng(args.seed, 1 << 63)
    site_filter = _site_filter(args)
    if args.strategy == "probabilistic":
        return presample_probabilistic(circuit, args.nsamples, args.nshots, strategy_rng,
                                       site_filter)
    if args.strategy == "proportional":
        specs = presample_probabilistic(circuit, args.nsamples, args.nshots, strategy_rng,
                                        site_filter)
        return reallocate_proportional(specs, args.total_shots)
    if args.strategy == "band":
        return presample_band(circuit, args.p_min, args.p_max, args.nsamples, args.nshots,
                              strategy_rng, site_filter)
    if args.strategy == "cutoff":
        return enumerate_cutoff(circuit, args.cutoff, args.nshots, site_filter=site_filter)
    raise ValidationError(f"unknown strategy '{args.strategy}'")


def _dataset_empirical(dataset: Dataset, n_qubits: int) -> np.ndarray:
    """Empirical outcome distribution; uniform-shot strategies are reweighted by p'_alpha."""
    dim = 1 << n_qubits
    strategy = dataset.manifest.get("strategy")
    rows = [r for r in dataset.manifest["trajectories"] if r["status"] == "ok" and r["emitted"]]
    if not rows:
        raise ValidationError("dataset has no successful trajectories")
    if strategy in UNIFORM_SHOT_STRATEGIES:
        if any(r["joint_prob"] is None for r in rows):
            raise ValidationError(
                "cannot reweight: dataset trajectories carry no joint probabilities"
            )
        total_p = sum(r["joint_prob"] for r in rows)
        per_traj: dict[int, dict[str, int]] = {}
        for record in dataset.records:
            per_traj.setdefault(record.trajectory_id, {})[record.bitstring] = record.count
        dist = np.zeros(dim)
        for row in rows:
            weight = row["joint_prob"] / total_p
            for bits, c in per_traj.get(row["id"], {}).items():
                dist[int(bits, 2)] += weight * c / row["emitted"]
    else:
        dist = np.zeros(dim)
        for bits, c in dataset.pooled_counts().items():
            dist[int(bits, 2)] += c
        dist /= dist.sum()
    return dist


def cmd_run(args) -> int:
    circuit, model = _load_circuit(args)
    specs = _build_specs(args, circuit)
    meta = {
        "strategy": args.strategy,
        "noise_model_sha256": noise_model_hash(model) if model else None,
    }
    dataset = execute_all(circuit, specs, parallelism=args.parallelism,
                          master_seed=args.seed, meta=meta)
    records_path, manifest_path = dataset.write(args.out)
    pooled = dataset.pooled_counts()
    total = sum(pooled.values())
    print(f"specs: {len(specs)}")
    print(f"total shots: {total}")
    print(f"unique fraction: {len(pooled) / total if total else 0.0:.6f}")
    print(f"wall time: {dataset.manifest['wall_time']:.3f} s")
    print(f"records: {records_path}")
    print(f"manifest: {manifest_path}")
    if dataset.manifest["partial"]:
        print("warning: dataset is partial (some trajectories failed)", file=sys.stderr)
    if args.oracle:
        if circuit.n_qubits > MAX_ORACLE_QUBITS:
            raise ValidationError(
                f"--oracle needs <= {MAX_ORACLE_QUBITS} qubits, circuit has {circuit.n_qubits}"
            )
        reference = outcome_distribution(evolve_exact(circuit))
        tv = tv_distance(_dataset_empirical(dataset, circuit.n_qubits), reference)
        print(f"oracle tv distance: {tv:.6f}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    circuit, model = _load_circuit(args)
    if circuit.n_qubits > MAX_ORACLE_QUBITS:
        raise ValidationError(
            f"oracle supports <= {MAX_ORACLE_QUBITS} qubits, circuit has {circuit.n_qubits}"
        )
    dataset = Dataset.read(args.dataset)
    dataset.validate()
    manifest = dataset.manifest
    if manifest["circuit_sha256"] != circuit_hash(circuit):
        raise ValidationError("dataset manifest does not match this circuit (hash mismatch)")
    if manifest["noise_sites_sha256"] != sites_hash(circuit):
        raise ValidationError("dataset manifest does not match this noise attachment")
    if model is not None and manifest.get("noise_model_sha256") not in (None,
                                                                        noise_model_hash(model)):
        raise ValidationError("dataset manifest does not match this noise model (hash mismatch)")
    reference = outcome_distribution(evolve_exact(circuit))
    empirical = _dataset_empirical(dataset, circuit.n_qubits)
    tv = tv_distance(empirical, reference)
    print(f"tv distance: {tv:.6f} (threshold {args.threshold})")
    return EXIT_OK if tv <= args.threshold else EXIT_VALIDATION


def cmd_bench(args) -> int:
    circuit, _model = _load_circuit(args)
    batch_sizes = [int(tok) for tok in args.batch_sizes.split(",") if tok.strip()]
    spec = TrajectorySpec(selections=(), shots=0, joint_prob=None,
                          tags={"strategy": "bench"})
    rows = throughput_report(circuit, spec, batch_sizes, master_seed=args.seed,
                             naive_prep_cap=args.naive_prep_cap)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    throughput_path = write_throughput_csv(rows, out / "throughput.csv")
    state, _weight = prepare_state(circuit, spec)
    uniq_path = out / "uniqueness.csv"
    with uniq_path.open("w", encoding="utf-8") as fh:
        fh.write("m,unique_fraction\n")
        for i, m in enumerate(batch_sizes):
            batch = sample_shots(state, m, stream_rng(args.seed, 1000 + i))
            fh.write(f"{m},{unique_fraction(batch)!r}\n")
    print(f"throughput: {throughput_path}")
    print(f"uniqueness: {uniq_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajsim",
                                     description="Noisy quantum-circuit trajectory simulator")
    parser.add_argument("--version", action="version", version=f"trajsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    val = sub.add_parser("validate", help="check a circuit and noise model")
    val.add_argument("circuit")
    val.add_argument("noise")
    val.set_defaults(func=cmd_validate)

    run = sub.add_parser("run", help="pre-sample trajectories and collect a dataset")
    run.add_argument("--circuit", required=True)
    run.add_argument("--noise")
    run.add_argument("--strategy", required=True,
                     choices=("probabilistic", "proportional", "band", "cutoff"))
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--nsamples", type=int, default=1000)
    run.add_argument("--nshots", type=int, default=1000)
    run.add_argument("--total-shots", type=int, default=100_000, dest="total_shots")
    run.add_argument("--p-min", type=float, default=0.0, dest="p_min")
    run.add_argument("--p-max", type=float, default=1.0, dest="p_max")
    run.add_argument("--cutoff", type=float, default=0.01)
    run.add_argument("--parallelism", type=int, default=1)
    run.add_argument("--out", default="dataset")
    run.add_argument("--oracle", action="store_true",
                     help="also print the tv distance to the exact reference")
    run.add_argument("--filter-gate", action="append", dest="filter_gate")
    run.add_argument("--filter-qubit", action="append", type=int, dest="filter_qubit")
    run.add_argument("--filter-moment", action="append", type=int, dest="filter_moment")
    run.set_defaults(func=cmd_run)

    orc = sub.add_parser("oracle", help="compare a dataset against the exact reference")
    orc.add_argument("--circuit", required=True)
    orc.add_argument("--noise")
    orc.add_argument("--dataset", required=True)
    orc.add_argument("--threshold", type=float, default=0.05)
    orc.set_defaults(func=cmd_oracle)

    bench = sub.add_parser("bench", help="throughput and uniqueness sweeps")
    bench.add_argument("--circuit", required=True)
    bench.add_argument("--noise")
    bench.add_argument("--seed", type=int, required=True)
    bench.add_argument("--out", default="bench")
    bench.add_argument("--batch-sizes", default="1,10,100,1000,10000", dest="batch_sizes")
    bench.add_argument("--naive-prep-cap", type=int, default=32, dest="naive_prep_cap")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CircuitSyntaxError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ExecutionError as exc:
        print(f"execution error: {exc}", file=sys.stderr)
        return EXIT_EXECUTION
    except TrajsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXECUTION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())
