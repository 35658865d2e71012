"""Conventional trajectory simulation: per-site stochastic Kraus selection."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import statevector as sv
from .errors import AnnihilatedStateError, ValidationError

# Circuits up to this width use a dense-matrix ensemble engine in
# sample_conventional; wider circuits fall back to a per-trajectory loop.
DENSE_ENSEMBLE_LIMIT = 8


@dataclass
class RealizedTrajectory:
    """One stochastic realization: a selection per site, in site order."""

    selections: list[tuple[int, int]]
    weight: float
    final_state: sv.ComplexState


def select_index(r: float, probs) -> int:
    """Smallest k with cumulative probability > r; clamps to the last index."""
    n = len(probs)
    if n == 0:
        raise ValidationError("empty probability list")
    acc = 0.0
    for k in range(n):
        acc += probs[k]
        if r < acc:
            return k
    return n - 1


def run_trajectory(circuit, rng: np.random.Generator) -> RealizedTrajectory:
    """Walk the ops; after each op fire its noise sites with one uniform draw per site.

    Unitary-mixture sites use the cached state-independent probabilities; general
    sites compute ||K_i |psi>||**2 on the current state and renormalize the pick.
    """
    state = sv.init_zero(circuit.n_qubits)
    by_pos = circuit.sites_by_position()
    selections: list[tuple[int, int]] = []
    weight = 1.0
    for pos, op in enumerate(circuit.ops):
        state = sv.apply_gate(state, op)
        for site in by_pos.get(pos, ()):
            channel = circuit.channels[site.channel_id]
            r = rng.random()
            mixture = channel.unitary_mixture()
            if mixture is not None:
                k = select_index(r, mixture.probs)
                state = sv.apply_matrix(state, mixture.unitaries[k], site.targets)
            else:
                probs = [
                    sv.kraus_outcome_probability(state, K, site.targets)
                    for K in channel.kraus_ops
                ]
                k = select_index(r, probs)
                state, realized = sv.apply_kraus_normalized(
                    state, channel.kraus_ops[k], site.targets
                )
                weight *= realized
            selections.append((site.site_id, k))
    return RealizedTrajectory(selections, weight, state)


def sample_conventional(circuit, n_traj: int, shots_per_traj: int = 1, master_seed: int = 0):
    """Run n_traj independent trajectories, fresh state each, and collect shots.

    This is the repreparation-per-trajectory baseline. Returns a Dataset whose
    manifest carries per-trajectory selections and realized weights.
    """
    from .execute import assemble_dataset, mix_seed

    if n_traj < 1:
        raise ValidationError(f"trajectory count must be >= 1, got {n_traj}")
    if shots_per_traj < 1:
        raise ValidationError(f"shots per trajectory must be >= 1, got {shots_per_traj}")
    start = time.perf_counter()
    if circuit.n_qubits <= DENSE_ENSEMBLE_LIMIT:
        rows = _ensemble_rows_dense(circuit, n_traj, shots_per_traj, master_seed)
    else:
        rows = []
        for t in range(n_traj):
            rng = np.random.Generator(np.random.PCG64(mix_seed(master_seed, t)))
            traj = run_trajectory(circuit, rng)
            batch = sv.sample_shots(traj.final_state, shots_per_traj, rng)
            rows.append(
                _conventional_row(circuit, t, traj.selections, traj.weight, batch.counts,
                                  shots_per_traj)
            )
    wall = time.perf_counter() - start
    return assemble_dataset(
        circuit,
        rows,
        master_seed=master_seed,
        mode="conventional",
        meta={"strategy": "conventional", "shots_per_trajectory": shots_per_traj},
        wall_time=wall,
    )


def _conventional_row(circuit, t, selections, weight, counts, shots):
    nondefault = tuple((s, k) for s, k in selections if k != 0)
    joint = _mixture_joint_prob(circuit, selections)
    return {
        "id": t,
        "selections": nondefault,
        "joint_prob": joint,
        "realized_weight": weight,
        "shots": shots,
        "counts": counts,
        "seed": None,
        "status": "ok",
        "tags": {},
        "prep_time": None,
        "sample_time": None,
    }


def _mixture_joint_prob(circuit, selections):
    p = 1.0
    for site_id, k in selections:
        channel = circuit.channels[circuit.site(site_id).channel_id]
        mixture = channel.unitary_mixture()
        if mixture is None:
            return None
        p *= float(mixture.probs[k])
    return p


def _ensemble_rows_dense(circuit, n_traj, shots_per_traj, master_seed):
    """Vectorized ensemble evolution with precomputed full-dimension operators.

    Distributionally identical to looping run_trajectory; the random stream is
    consumed in (chunk, site)-major order instead of per trajectory.
    """
    n = circuit.n_qubits
    dim = 1 << n
    rng = np.random.Generator(np.random.PCG64(master_seed))
    full_ops = [sv.expand_matrix(op.matrix, op.targets, n) for op in circuit.ops]
    site_table = []
    for site in circuit.sites:
        channel = circuit.channels[site.channel_id]
        mixture = channel.unitary_mixture()
        if mixture is not None:
            mats = [sv.expand_matrix(U, site.targets, n) for U in mixture.unitaries]
            site_table.append(("mixture", np.cumsum(mixture.probs), mats, mixture.probs))
        else:
            mats = [sv.expand_matrix(K, site.targets, n) for K in channel.kraus_ops]
            site_table.append(("general", None, mats, None))
    by_pos = circuit.sites_by_position()
    site_index = {s.site_id: i for i, s in enumerate(circuit.sites)}

    chunk_size = int(min(65536, max(256, (1 << 21) // dim)))
    rows = []
    done = 0
    while done < n_traj:
        b = min(chunk_size, n_traj - done)
        states = np.zeros((b, dim), dtype=np.complex128)
        states[:, 0] = 1.0
        weights = np.ones(b)
        draws = np.zeros((b, len(circuit.sites)), dtype=np.int64)
        for pos in range(len(circuit.ops)):
            states = states @ full_ops[pos].T
            for site in by_pos.get(pos, ()):
                idx = site_index[site.site_id]
                kind, cum, mats, _probs = site_table[idx]
                r = rng.random(b)
                if kind == "mixture":
                    ks = np.searchsorted(cum, r, side="right")
                    np.clip(ks, 0, len(mats) - 1, out=ks)
                    for k in np.unique(ks):
                        mask = ks == k
                        states[mask] = states[mask] @ mats[k].T
                else:
                    branch = [states @ K.T for K in mats]
                    norms = np.stack([np.sum(np.abs(B) ** 2, axis=1) for B in branch], axis=1)
                    ks = np.sum(np.cumsum(norms, axis=1) <= r[:, None], axis=1)
                    np.clip(ks, 0, len(mats) - 1, out=ks)
                    for k in np.unique(ks):
                        mask = ks == k
                        realized = norms[mask, k]
                        if float(realized.min()) <= sv.ANNIHILATION_TOL:
                            raise AnnihilatedStateError(
                                "conventional draw annihilated a trajectory state"
                            )
                        states[mask] = branch[k][mask] / np.sqrt(realized)[:, None]
                        weights[mask] *= realized
                draws[:, idx] = ks
        probs = np.abs(states) ** 2
        cum = np.cumsum(probs, axis=1)
        cum /= cum[:, -1:]
        shot_idx = np.empty((b, shots_per_traj), dtype=np.int64)
        for j in range(shots_per_traj):
            r = rng.random(b)
            shot_idx[:, j] = np.sum(cum <= r[:, None], axis=1)
        np.clip(shot_idx, 0, dim - 1, out=shot_idx)

        width = f"0{n}b"
        for i in range(b):
            selections = [(s.site_id, int(k)) for s, k in zip(circuit.sites, draws[i])]
            if shots_per_traj == 1:
                counts = {format(int(shot_idx[i, 0]), width): 1}
            else:
                vals, reps = np.unique(shot_idx[i], return_counts=True)
                counts = {format(int(v), width): int(c) for v, c in zip(vals, reps)}
            rows.append(
                _conventional_row(circuit, done + i, selections, float(weights[i]), counts,
                                  shots_per_traj)
            )
        done += b
    return rows
