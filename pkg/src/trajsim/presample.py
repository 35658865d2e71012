"""Trajectory pre-selection: pick Kraus outcomes and shot budgets before any state evolution.

Strategies only read circuit structure and channel probabilities; they never
touch amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .trajectory import select_index

ENUMERATION_BOUND = 1_000_000


@dataclass(frozen=True)
class TrajectorySpec:
    """A fixed choice of Kraus outcomes (non-default only), shot budget, and provenance tags.

    selections are sorted by site id; unlisted sites take outcome 0, the
    no-error/dominant operator.
    """

    selections: tuple[tuple[int, int], ...]
    shots: int
    joint_prob: float | None = None
    tags: dict = field(default_factory=dict)


def canonical_selections(pairs) -> tuple[tuple[int, int], ...]:
    """Sort by site id, reject duplicates and default (index 0) outcomes."""
    rows = sorted((int(s), int(k)) for s, k in pairs)
    seen = set()
    for s, k in rows:
        if s in seen:
            raise ValidationError(f"duplicate site {s} in selections")
        seen.add(s)
        if k < 1:
            raise ValidationError(
                f"site {s}: index-0 outcomes are defaults and must be omitted"
            )
    return tuple(rows)


@dataclass(frozen=True)
class SiteFilter:
    """Restrict which noise sites may take non-default outcomes."""

    gates: frozenset[str] | None = None
    qubits: frozenset[int] | None = None
    moments: frozenset[int] | None = None

    def allows(self, site, circuit) -> bool:
        if self.gates is not None and circuit.ops[site.position].name not in self.gates:
            return False
        if self.qubits is not None and not (set(site.targets) & self.qubits):
            return False
        if self.moments is not None and site.moment not in self.moments:
            return False
        return True


@dataclass(frozen=True)
class PresampleConfig:
    """Bag of strategy knobs mirrored by the CLI."""

    strategy: str = "probabilistic"
    nsamples: int = 1000
    nshots: int = 1000
    total_shots: int = 100_000
    p_min: float = 0.0
    p_max: float = 1.0
    cutoff: float = 0.01
    seed: int = 0
    site_filter: SiteFilter | None = None

    def __post_init__(self):
        if self.strategy not in ("probabilistic", "proportional", "band", "cutoff"):
            raise ValidationError(f"unknown strategy '{self.strategy}'")
        if not 0.0 <= self.p_min <= self.p_max <= 1.0:
            raise ValidationError(f"need 0 <= p_min <= p_max <= 1, got [{self.p_min}, {self.p_max}]")
        if not 0.0 <= self.cutoff <= 1.0:
            raise ValidationError(f"cutoff must be in [0, 1], got {self.cutoff}")


@dataclass(frozen=True)
class SiteOutcomes:
    """Per-site outcome probabilities used by the strategies.

    For unitary mixtures these are the exact state-independent probabilities;
    for general channels they are nominal tr(K^dag K)/d values (the outcome
    probabilities for a maximally mixed input), flagged via is_mixture=False.
    """

    site: object
    probs: np.ndarray
    is_mixture: bool


def site_outcome_probs(circuit) -> list[SiteOutcomes]:
    table = []
    for site in circuit.sites:
        channel = circuit.channels[site.channel_id]
        mixture = channel.unitary_mixture()
        if mixture is not None:
            table.append(SiteOutcomes(site, np.asarray(mixture.probs, dtype=float), True))
        else:
            nominal = np.array(
                [float(np.trace(K.conj().T @ K).real) / channel.dim for K in channel.kraus_ops]
            )
            table.append(SiteOutcomes(site, nominal, False))
    return table


def compatible(candidate: tuple[int, int], sample, circuit) -> bool:
    """False iff the site is already selected, or a selected site shares a qubit
    with it in the same moment."""
    site_id, _k = candidate
    cand = circuit.site(site_id)
    cand_targets = set(cand.targets)
    for other_id, _ in sample:
        if other_id == site_id:
            return False
        other = circuit.site(other_id)
        if other.moment == cand.moment and cand_targets & set(other.targets):
            return False
    return True


def unique_kraus(sample, accepted) -> bool:
    """True iff no accepted spec has the same canonical selections.

    `accepted` may be a list of TrajectorySpec or a prebuilt set of selection
    tuples (the strategies keep a set for O(1) queries).
    """
    key = tuple(sample)
    if isinstance(accepted, (set, frozenset)):
        return key not in accepted
    return key not in {spec.selections for spec in accepted}


def joint_probability(selections, circuit) -> float:
    """Product over all sites of the selected outcome's probability (default index 0)."""
    chosen = dict(canonical_selections(selections))
    table = site_outcome_probs(circuit)
    for entry in table:
        if not entry.is_mixture:
            raise ValidationError(
                f"joint probability unavailable: site {entry.site.site_id} carries a "
                "general channel; use realized weights instead"
            )
    p = 1.0
    for entry in table:
        k = chosen.pop(entry.site.site_id, 0)
        if not 0 <= k < entry.probs.size:
            raise ValidationError(f"site {entry.site.site_id} has no outcome {k}")
        p *= float(entry.probs[k])
    if chosen:
        raise ValidationError(f"unknown site(s) in selections: {sorted(chosen)}")
    return p


def _provenance_tags(strategy: str, selections, circuit) -> dict:
    errors = []
    for site_id, k in selections:
        site = circuit.site(site_id)
        errors.append(
            {
                "site": site_id,
                "kraus": k,
                "gate": circuit.ops[site.position].name,
                "qubits": list(site.targets),
                "moment": site.moment,
                "channel": site.channel_id,
            }
        )
    return {"strategy": strategy, "errors": errors}


def _draw_sample(table, circuit, rng, site_filter, raw_sink):
    """One pass over the sites; returns (selections tuple, joint probability)."""
    sample: list[tuple[int, int]] = []
    p = 1.0
    raw = [] if raw_sink is not None else None
    for entry in table:
        site_id = entry.site.site_id
        if site_filter is not None and not site_filter.allows(entry.site, circuit):
            outcome = 0
        else:
            k = select_index(rng.random(), entry.probs)
            if raw is not None:
                raw.append((site_id, k))
            outcome = k if k == 0 or compatible((site_id, k), sample, circuit) else 0
            if outcome != 0:
                sample.append((site_id, outcome))
        p *= float(entry.probs[outcome])
    if raw_sink is not None:
        raw_sink.append(raw)
    return tuple(sample), p


def _probabilistic(circuit, nsamples, nshots, rng, site_filter, raw_sink, accept,
                   require_mixture, strategy):
    if nsamples < 1:
        raise ValidationError(f"nsamples must be >= 1, got {nsamples}")
    if nshots < 0:
        raise ValidationError(f"nshots must be >= 0, got {nshots}")
    table = site_outcome_probs(circuit)
    all_mixture = all(entry.is_mixture for entry in table)
    if require_mixture and not all_mixture:
        raise ValidationError(
            f"strategy '{strategy}' requires unitary-mixture channels at every site"
        )
    accepted: list[TrajectorySpec] = []
    seen: set[tuple] = set()
    for _ in range(nsamples):
        selections, p = _draw_sample(table, circuit, rng, site_filter, raw_sink)
        if accept is not None and not accept(p):
            continue
        if not unique_kraus(selections, seen):
            continue
        seen.add(selections)
        accepted.append(
            TrajectorySpec(
                selections=selections,
                shots=nshots,
                joint_prob=p if all_mixture else None,
                tags=_provenance_tags(strategy, selections, circuit),
            )
        )
    return accepted


def presample_probabilistic(circuit, nsamples: int, nshots: int, rng: np.random.Generator,
                            site_filter: SiteFilter | None = None,
                            raw_sink: list | None = None) -> list[TrajectorySpec]:
    """Draw nsamples trajectory candidates site by site; keep first occurrences only.

    Every accepted spec gets the same nshots budget. raw_sink, when given,
    collects the per-site draws before the compatibility veto (diagnostics).
    """
    return _probabilistic(circuit, nsamples, nshots, rng, site_filter, raw_sink,
                          accept=None, require_mixture=False, strategy="probabilistic")


def presample_band(circuit, p_min: float, p_max: float, nsamples: int, nshots: int,
                   rng: np.random.Generator,
                   site_filter: SiteFilter | None = None) -> list[TrajectorySpec]:
    """Probabilistic sampling that accepts only p_min <= p_alpha <= p_max (inclusive)."""
    if not 0.0 <= p_min <= p_max <= 1.0:
        raise ValidationError(f"need 0 <= p_min <= p_max <= 1, got [{p_min}, {p_max}]")
    return _probabilistic(circuit, nsamples, nshots, rng, site_filter, None,
                          accept=lambda p: p_min <= p <= p_max,
                          require_mixture=True, strategy="band")


def reallocate_proportional(specs, total_shots: int) -> list[TrajectorySpec]:
    """Reassign shots proportionally to p_alpha / sum(p) by largest remainder.

    Exactly total_shots are assigned; remainder ties go to the lower spec index.
    """
    if not specs:
        raise ValidationError("no specs to reallocate")
    if total_shots < 0:
        raise ValidationError(f"total_shots must be >= 0, got {total_shots}")
    for i, spec in enumerate(specs):
        if spec.joint_prob is None:
            raise ValidationError(f"spec {i} has no joint probability; cannot reallocate")
    total_p = sum(spec.joint_prob for spec in specs)
    quotas = [total_shots * spec.joint_prob / total_p for spec in specs]
    shots = [int(math.floor(q)) for q in quotas]
    remainder = total_shots - sum(shots)
    order = sorted(range(len(specs)), key=lambda i: (-(quotas[i] - shots[i]), i))
    for i in order[:remainder]:
        shots[i] += 1
    return [replace(spec, shots=shots[i]) for i, spec in enumerate(specs)]


def enumerate_cutoff(circuit, cutoff: float, nshots: int,
                     max_sets: int = ENUMERATION_BOUND,
                     site_filter: SiteFilter | None = None) -> list[TrajectorySpec]:
    """Deterministic enumeration of every compatible selection set with p_alpha >= cutoff.

    Depth-first over sites in site order, pruning prefixes whose probability
    times the best possible completion falls below the cutoff. Output is sorted
    by descending p_alpha, ties by selection order.
    """
    if not 0.0 <= cutoff <= 1.0:
        raise ValidationError(f"cutoff must be in [0, 1], got {cutoff}")
    if nshots < 0:
        raise ValidationError(f"nshots must be >= 0, got {nshots}")
    table = site_outcome_probs(circuit)
    for entry in table:
        if not entry.is_mixture:
            raise ValidationError(
                f"cutoff enumeration requires unitary-mixture channels; site "
                f"{entry.site.site_id} carries a general channel"
            )
    allowed = []
    for entry in table:
        if site_filter is not None and not site_filter.allows(entry.site, circuit):
            allowed.append([0])
        else:
            allowed.append(list(range(entry.probs.size)))
    if cutoff <= 0.0:
        total = 1
        for ks in allowed:
            total *= len(ks)
            if total > max_sets:
                raise ValidationError(
                    f"enumeration bound exceeded: >{max_sets} sets at cutoff 0"
                )
    n_sites = len(table)
    suffix_max = [1.0] * (n_sites + 1)
    for i in range(n_sites - 1, -1, -1):
        suffix_max[i] = suffix_max[i + 1] * max(float(table[i].probs[k]) for k in allowed[i])

    results: list[tuple[tuple[tuple[int, int], ...], float]] = []
    stack: list[tuple[int, int]] = []

    def walk(i: int, p: float) -> None:
        # The bound keeps a small relative slack so float rounding in the
        # suffix product cannot prune a set whose exact p reaches the cutoff.
        if p * suffix_max[i] < cutoff * (1.0 - 1e-12):
            return
        if i == n_sites:
            if p >= cutoff:
                if len(results) >= max_sets:
                    raise ValidationError(f"enumeration bound exceeded: >{max_sets} sets")
                results.append((tuple(stack), p))
            return
        entry = table[i]
        site_id = entry.site.site_id
        for k in allowed[i]:
            if k == 0:
                walk(i + 1, p * float(entry.probs[0]))
            elif compatible((site_id, k), stack, circuit):
                stack.append((site_id, k))
                walk(i + 1, p * float(entry.probs[k]))
                stack.pop()

    walk(0, 1.0)
    results.sort(key=lambda item: (-item[1], item[0]))
    return [
        TrajectorySpec(
            selections=sels,
            shots=nshots,
            joint_prob=p,
            tags=_provenance_tags("cutoff", sels, circuit),
        )
        for sels, p in results
    ]
