"""Noisy quantum-circuit trajectory simulator with pre-sampled batched execution.

Two sampling pipelines over one statevector engine:

- conventional trajectories: stochastic Kraus selection interleaved with gate
  application, one fresh state per trajectory (trajectory module);
- pre-sampled batched execution: trajectory selections and shot budgets chosen
  up front (presample module), each prepared once and sampled in bulk with
  full error provenance (execute module).

An exact density-matrix simulator (density module) serves as the ground-truth
reference for small systems.
"""

from .circuit import (
    GateOp,
    NoiseModel,
    NoiseRule,
    NoiseSite,
    NoisyCircuit,
    attach_noise,
    builtin_gate_matrix,
    circuit_hash,
    gate_op,
    make_circuit,
    matrix_op,
    noise_model_hash,
    parse_circuit,
    parse_noise_model,
    serialize_circuit,
    serialize_noise_model,
)
from .density import DensityMatrix, evolve_exact, outcome_distribution, tv_distance
from .errors import (
    AnnihilatedStateError,
    CircuitSyntaxError,
    ExecutionError,
    TrajsimError,
    ValidationError,
)
from .execute import (
    Dataset,
    ShotRecord,
    execute_all,
    execute_naive,
    execute_trajectory,
    manifest_core,
    mix_seed,
    prepare_state,
    stream_rng,
    throughput_report,
    unique_fraction,
)
from .noise import (
    KrausChannel,
    UnitaryMixture,
    builtin_channel,
    detect_unitary_mixture,
    validate_cptp,
)
from .presample import (
    PresampleConfig,
    SiteFilter,
    TrajectorySpec,
    canonical_selections,
    compatible,
    enumerate_cutoff,
    joint_probability,
    presample_band,
    presample_probabilistic,
    reallocate_proportional,
    site_outcome_probs,
    unique_kraus,
)
from .statevector import (
    ComplexState,
    ShotBatch,
    apply_gate,
    apply_kraus_normalized,
    apply_matrix,
    init_zero,
    kraus_outcome_probability,
    sample_shots,
)
from .trajectory import RealizedTrajectory, run_trajectory, sample_conventional, select_index
from .version import __version__
