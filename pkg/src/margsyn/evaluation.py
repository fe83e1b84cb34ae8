"""Utility metrics comparing a synthetic dataset against its source.

Two complementary views: `two_way_error` averages the L1 gap between all
pairwise marginals (as frequencies, so the score is comparable across
dataset sizes), and `range_query_error` measures agreement on random
three-attribute interval counting queries.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import AttributeDomain, Dataset
from .marginal import MarginalSpec, compute_marginal

QUERY_ARITY = 3


@dataclass(frozen=True)
class RangeQuery:
    """Conjunction of inclusive value-index intervals over three attributes.

    ``clauses`` holds (attribute, low, high) triples; a record matches when
    every clause holds.
    """

    clauses: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if len(self.clauses) != QUERY_ARITY:
            raise ValueError(f"expected {QUERY_ARITY} clauses, got {len(self.clauses)}")
        attrs = [a for a, _, _ in self.clauses]
        if len(set(attrs)) != len(attrs):
            raise ValueError(f"query attributes must be distinct, got {attrs}")
        for attr, lo, hi in self.clauses:
            if attr < 0 or lo < 0 or lo > hi:
                raise ValueError(f"bad clause ({attr}, {lo}, {hi})")

    def match_fraction(self, dataset: Dataset) -> float:
        """Fraction of records satisfying every clause."""
        if dataset.n == 0:
            return 0.0
        mask = np.ones(dataset.n, dtype=bool)
        for attr, lo, hi in self.clauses:
            if attr >= dataset.d or hi >= dataset.sizes[attr]:
                raise ValueError(f"clause ({attr}, {lo}, {hi}) is out of bounds")
            col = dataset.records[:, attr]
            mask &= (col >= lo) & (col <= hi)
        return float(mask.mean())


def _check_same_domains(original: Dataset, synthetic: Dataset) -> None:
    same = original.d == synthetic.d and all(
        a.name == b.name and a.values == b.values
        for a, b in zip(original.domains, synthetic.domains)
    )
    if not same:
        raise ValueError("datasets must share the same attribute domains")


def two_way_error(original: Dataset, synthetic: Dataset) -> float:
    """Mean L1 distance between all pairwise marginals, as frequencies.

    Each pair contributes a value in [0, 2]; identical datasets score 0.
    """
    _check_same_domains(original, synthetic)
    if original.d < 2:
        raise ValueError("need at least two attributes to compare pairs")
    if original.n == 0 or synthetic.n == 0:
        raise ValueError("cannot compare empty datasets")
    gaps = []
    for pair in itertools.combinations(range(original.d), 2):
        spec = MarginalSpec.for_attrs(pair, original.sizes)
        freq_orig = compute_marginal(original, spec).counts / original.n
        freq_syn = compute_marginal(synthetic, spec).counts / synthetic.n
        gaps.append(np.abs(freq_orig - freq_syn).sum())
    return float(np.mean(gaps))


def range_query_error(
    original: Dataset, synthetic: Dataset, queries: Sequence[RangeQuery]
) -> float:
    """Mean absolute gap in match fraction over the given queries."""
    _check_same_domains(original, synthetic)
    if not queries:
        raise ValueError("need at least one query")
    gaps = [
        abs(q.match_fraction(original) - q.match_fraction(synthetic))
        for q in queries
    ]
    return float(np.mean(gaps))


def sample_queries(
    domains: Sequence[AttributeDomain],
    count: int,
    rng: np.random.Generator,
) -> list[RangeQuery]:
    """Draw random three-attribute range queries over the given domains.

    Attributes are drawn uniformly without replacement; each interval takes
    two independent uniform endpoints over the attribute's values, ordered.
    """
    if len(domains) < QUERY_ARITY:
        raise ValueError(f"need at least {QUERY_ARITY} attributes to sample queries")
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    sizes = [dom.size for dom in domains]
    queries = []
    for _ in range(count):
        attrs = sorted(rng.choice(len(domains), size=QUERY_ARITY, replace=False))
        clauses = []
        for attr in attrs:
            a, b = rng.integers(0, sizes[attr], size=2)
            clauses.append((int(attr), int(min(a, b)), int(max(a, b))))
        queries.append(RangeQuery(tuple(clauses)))
    return queries
