"""Reconciling noisy marginals into a mutually consistent set.

Marginals published under different budgets disagree about the attribute
sets they share. Two repairs alternate here: precision-weighted averaging
pulls every shared projection onto one estimate, and an exact L2 projection
restores nonnegativity and a common total. Iterating the two drives the
whole set toward joint consistency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from margsyn.marginal import MarginalSpec, MarginalTable, project_onto

MAX_ROUNDS = 30
RELATIVE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SharedAttributeGroup:
    """An attribute set plus the tables that contain it.

    Members are (table index, rho, fiber size) triples, where the fiber
    size g is how many member cells collapse onto one cell of the shared
    set.
    """

    attrs: tuple[int, ...]
    members: list[tuple[int, float, int]]


def shared_groups(
    specs: Sequence[MarginalSpec], rhos: Sequence[float]
) -> list[SharedAttributeGroup]:
    """Every distinct pairwise intersection, with all tables containing it.

    Groups come back largest attribute set first (attribute order breaking
    ties) so reconciliation applies the tightest constraints first and
    stays deterministic.
    """
    overlaps: set[tuple[int, ...]] = set()
    for i in range(len(specs)):
        for j in range(i + 1, len(specs)):
            inter = set(specs[i].attributes) & set(specs[j].attributes)
            if inter:
                overlaps.add(tuple(sorted(inter)))

    groups = []
    for attrs in sorted(overlaps, key=lambda a: (-len(a), a)):
        members = []
        for idx, spec in enumerate(specs):
            if not set(attrs) <= set(spec.attributes):
                continue
            shared_cells = math.prod(
                spec.sizes[spec.attributes.index(a)] for a in attrs
            )
            members.append((idx, float(rhos[idx]), spec.cell_count // shared_cells))
        groups.append(SharedAttributeGroup(attrs, members))
    return groups


def weighted_average(
    group: SharedAttributeGroup, tables: list[MarginalTable]
) -> list[MarginalTable]:
    """Pull every member's shared projection onto the precision-weighted mean.

    Weights are proportional to rho_i / g_i (inverse variance of each
    member's estimate of the shared marginal). The correction spreads
    additively and uniformly across each shared cell's fiber, so if all
    member totals agree beforehand they still agree afterwards.
    """
    precisions = [rho / g for _, rho, g in group.members]
    weights = [p / sum(precisions) for p in precisions]
    estimates = [
        project_onto(tables[idx], group.attrs).counts for idx, _, _ in group.members
    ]
    average = np.zeros_like(estimates[0])
    for w, est in zip(weights, estimates):
        average += w * est

    for (idx, _, g), est in zip(group.members, estimates):
        spec = tables[idx].spec
        grid = tables[idx].counts.reshape(spec.sizes)
        broadcast = tuple(
            spec.sizes[k] if spec.attributes[k] in group.attrs else 1
            for k in range(spec.arity)
        )
        grid += ((average - est) / g).reshape(broadcast)
    return tables


def project_valid(table: MarginalTable, target_total: float) -> MarginalTable:
    """Closest table (in L2) with nonnegative counts summing to the target.

    Uniform shift with iterative clipping: shift all cells equally to hit
    the total, clip any that went negative, and re-shift the survivors.
    Each pass fixes at least one cell, so the loop is finite and lands on
    the exact optimum.
    """
    if target_total < 0.0:
        raise ValueError(f"target_total must be nonnegative, got {target_total}")
    values = table.counts.copy()
    if target_total == 0.0:
        return MarginalTable(table.spec, np.zeros_like(values))
    active = np.ones(values.size, dtype=bool)
    while True:
        shift = (target_total - values[active].sum()) / active.sum()
        lifted = values + shift
        dropped = active & (lifted < 0.0)
        if not dropped.any():
            break
        active &= ~dropped
    return MarginalTable(table.spec, np.where(active, values + shift, 0.0))


def _common_total(tables: Sequence[MarginalTable], rhos: Sequence[float]) -> float:
    """Precision-weighted estimate of the record count behind all tables."""
    weights = [rho / t.spec.cell_count for t, rho in zip(tables, rhos)]
    return sum(w * t.total() for w, t in zip(weights, tables)) / sum(weights)


def _max_disagreement(
    tables: Sequence[MarginalTable], groups: Sequence[SharedAttributeGroup]
) -> float:
    worst = 0.0
    for group in groups:
        estimates = np.stack(
            [project_onto(tables[idx], group.attrs).counts for idx, _, _ in group.members]
        )
        worst = max(worst, float((estimates.max(axis=0) - estimates.min(axis=0)).max()))
    return worst


def make_consistent(
    tables: Sequence[MarginalTable],
    rhos: Sequence[float],
    max_rounds: int = MAX_ROUNDS,
) -> list[MarginalTable]:
    """Average-then-project every round until the tables agree.

    The shared total is fixed once up front (precision-weighted across all
    tables) and every projection targets it, so the output tables are
    valid, share one total, and agree on every shared attribute set within
    a tolerance proportional to that total.
    """
    if not tables:
        return []
    if len(rhos) != len(tables) or any(r <= 0 for r in rhos):
        raise ValueError("one positive rho per table is required")
    work = [t.copy() for t in tables]
    target = _common_total(work, rhos)
    tolerance = RELATIVE_TOLERANCE * target
    groups = shared_groups([t.spec for t in work], rhos)
    for _ in range(max_rounds):
        for group in groups:
            weighted_average(group, work)
        work = [project_valid(t, target) for t in work]
        if _max_disagreement(work, groups) <= tolerance:
            break
    return work
