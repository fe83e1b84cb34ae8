"""Choosing which marginals to publish.

Every attribute pair gets a noisy dependency score (its distance from
independence, published under a small budget slice). A greedy loop then
trades the dependency error of pairs left out against the noise error of
pairs taken in, and a combining pass merges selected pairs that form small
cliques into higher-order marginals.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from margsyn.data import Dataset
from margsyn.marginal import MarginalSpec, indif
from margsyn.privacy import add_noise, allocate_budget, gaussian_sigma, noise_error

INDIF_SENSITIVITY = 4.0
DEFAULT_GAMMA = 5000
DEFAULT_MAX_SHARED = 2
CLIQUE_SIZE_CAP = 12


@dataclass(frozen=True)
class PairScore:
    pair: tuple[int, int]
    noisy_indif: float
    cell_count: int

    def __post_init__(self):
        if self.pair[0] >= self.pair[1]:
            raise ValueError(f"pair must be ordered, got {self.pair}")


@dataclass
class SelectionResult:
    chosen: list[MarginalSpec]
    rho_per_marginal: dict[MarginalSpec, float]
    combined: list[MarginalSpec] = field(default_factory=list)
    trajectory: list[float] = field(default_factory=list)


def publish_indif(
    dataset: Dataset, rho_select: float, rng: np.random.Generator
) -> list[PairScore]:
    """Release the dependency score of every attribute pair.

    One scalar per pair, sensitivity 4, so the even budget split puts
    sigma^2 = 8m / rho_select on each of the m = d(d-1)/2 scores. Passing
    an infinite budget disables the noise, which test harnesses use to pin
    down exact values.
    """
    if dataset.d < 2:
        raise ValueError("dependency scores need at least two attributes")
    if rho_select <= 0.0:
        raise ValueError(f"rho_select must be positive, got {rho_select}")
    pairs = list(itertools.combinations(range(dataset.d), 2))
    exact = np.array([indif(dataset, i, j) for i, j in pairs])
    if math.isinf(rho_select):
        sigma = 0.0
    else:
        sigma = gaussian_sigma(INDIF_SENSITIVITY, rho_select / len(pairs))
    noisy = add_noise(exact, sigma, rng)
    sizes = dataset.sizes
    return [
        PairScore(pair, float(score), sizes[pair[0]] * sizes[pair[1]])
        for pair, score in zip(pairs, noisy)
    ]


def select_marginals(
    scores: Sequence[PairScore], rho_publish: float, domain_sizes: Sequence[int]
) -> SelectionResult:
    """Greedily pick the pairs worth spending the publish budget on.

    Each round re-splits the budget over the current picks plus one
    candidate and scores the world as (noise error of everything in) +
    (dependency error of everything out); the best candidate joins if that
    total still improves. Negative published scores count as zero
    dependency, and ties go to the lowest pair.
    """
    if rho_publish <= 0.0:
        raise ValueError(f"rho_publish must be positive, got {rho_publish}")
    ordered = sorted(scores, key=lambda s: s.pair)
    phi = [max(s.noisy_indif, 0.0) for s in ordered]
    costs = [s.cell_count for s in ordered]

    chosen: list[int] = []
    trajectory = [sum(phi)]
    while len(chosen) < len(ordered):
        best_idx = None
        best_error = math.inf
        for idx in range(len(ordered)):
            if idx in chosen:
                continue
            group = chosen + [idx]
            shares = allocate_budget([costs[i] for i in group], rho_publish)
            total = sum(
                noise_error(costs[i], share) for i, share in zip(group, shares)
            )
            total += sum(phi[i] for i in range(len(ordered)) if i not in group)
            if total < best_error:
                best_error = total
                best_idx = idx
        if best_idx is None or best_error >= trajectory[-1]:
            break
        chosen.append(best_idx)
        trajectory.append(best_error)

    specs = [
        MarginalSpec.for_attrs(ordered[i].pair, domain_sizes) for i in chosen
    ]
    rho_map: dict[MarginalSpec, float] = {}
    if specs:
        shares = allocate_budget([costs[i] for i in chosen], rho_publish)
        rho_map = dict(zip(specs, shares))
    return SelectionResult(chosen=specs, rho_per_marginal=rho_map, trajectory=trajectory)


def _maximal_cliques(adjacency: dict[int, set[int]]) -> list[frozenset[int]]:
    """Bron-Kerbosch with pivoting over an adjacency-set graph."""
    found: list[frozenset[int]] = []

    def expand(current: set[int], candidates: set[int], excluded: set[int]) -> None:
        if not candidates and not excluded:
            found.append(frozenset(current))
            return
        pivot = max(candidates | excluded, key=lambda v: len(adjacency[v] & candidates))
        for v in sorted(candidates - adjacency[pivot]):
            expand(current | {v}, candidates & adjacency[v], excluded & adjacency[v])
            candidates = candidates - {v}
            excluded = excluded | {v}

    expand(set(), set(adjacency), set())
    return found


def combine_marginals(
    pairs: Sequence[MarginalSpec],
    domain_sizes: Sequence[int],
    gamma: int = DEFAULT_GAMMA,
    max_shared: int = DEFAULT_MAX_SHARED,
) -> list[MarginalSpec]:
    """Merge selected pairs into higher-order marginals along small cliques.

    Candidate cliques (all sizes 3 and up within each maximal clique) are
    scanned largest first; one is accepted when its cell count stays within
    gamma and it shares at most max_shared attributes with the cliques
    already taken. Pairs not swallowed by any accepted clique pass through.
    """
    edges = set()
    adjacency: dict[int, set[int]] = {}
    for spec in pairs:
        if spec.arity != 2:
            raise ValueError(f"combine expects 2-way specs, got {spec}")
        a, b = spec.attributes
        edges.add((a, b))
        adjacency.setdefault(a, set()).add(b)
        adjacency.setdefault(b, set()).add(a)

    candidates: set[tuple[int, ...]] = set()
    for clique in _maximal_cliques(adjacency):
        if len(clique) > CLIQUE_SIZE_CAP:
            warnings.warn(
                f"skipping a clique of {len(clique)} attributes "
                f"(cap is {CLIQUE_SIZE_CAP}); its pairs stay two-way",
                stacklevel=2,
            )
            continue
        members = sorted(clique)
        for size in range(3, len(members) + 1):
            candidates.update(itertools.combinations(members, size))

    accepted: list[tuple[int, ...]] = []
    taken: set[int] = set()
    for clique in sorted(candidates, key=lambda c: (-len(c), c)):
        product = math.prod(domain_sizes[a] for a in clique)
        if product > gamma:
            continue
        if len(taken.intersection(clique)) > max_shared:
            continue
        accepted.append(clique)
        taken.update(clique)

    covered = set()
    for clique in accepted:
        covered.update(itertools.combinations(clique, 2))
    out = [MarginalSpec.for_attrs(clique, domain_sizes) for clique in accepted]
    out.extend(spec for spec in pairs if spec.attributes not in covered)
    return out
