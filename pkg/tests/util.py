"""Shared fixture builders and independent oracles for the test suite.

Oracles here are deliberately written from first principles (dict counting,
sort-based projection, exhaustive enumeration) so they share no code path
with the implementations they check.
"""

import itertools

import numpy as np

from margsyn.data import AttributeDomain, Dataset


def domains_for(sizes, prefix="a"):
    """Generic labeled domains for encoded test data."""
    return [
        AttributeDomain(f"{prefix}{i}", tuple(f"v{j}" for j in range(size)))
        for i, size in enumerate(sizes)
    ]


def dataset_from_records(sizes, records, names=None):
    recs = np.ascontiguousarray(np.atleast_2d(records), dtype=np.int64)
    if recs.size == 0:
        recs = recs.reshape(0, len(sizes))
    domains = domains_for(sizes)
    if names is not None:
        domains = [
            AttributeDomain(name, dom.values) for name, dom in zip(names, domains)
        ]
    return Dataset(domains, recs)


def dataset_from_joint(sizes, joint_counts, names=None):
    """Expand a dense cell-count array into one record per counted unit."""
    joint = np.asarray(joint_counts, dtype=np.int64).reshape(sizes)
    records = []
    for cell in itertools.product(*(range(s) for s in sizes)):
        records.extend([cell] * int(joint[cell]))
    if not records:
        records = np.empty((0, len(sizes)), dtype=np.int64)
    return dataset_from_records(sizes, records, names=names)


def gender_age_dataset():
    """100 records over gender x age with a joint dependency gap of exactly 8.

    One-way counts are [40, 60] and [20, 30, 50]; the joint cell counts are
    [10, 10, 20, 10, 20, 30] against an independence product of
    [8, 12, 20, 12, 18, 30].
    """
    joint = [[10, 10, 20], [10, 20, 30]]
    ds = dataset_from_joint((2, 3), joint, names=("gender", "age"))
    ds.domains[0] = AttributeDomain("gender", ("male", "female"))
    ds.domains[1] = AttributeDomain("age", ("teen", "adult", "elderly"))
    return ds


def oracle_marginal(records, attrs, sizes):
    """Dict-based reference count table, row-major over ``attrs``."""
    attrs = list(attrs)
    shape = [int(sizes[a]) for a in attrs]
    counts = {}
    for row in np.atleast_2d(records):
        key = tuple(int(row[a]) for a in attrs)
        counts[key] = counts.get(key, 0) + 1
    flat = np.zeros(int(np.prod(shape)) if shape else 1, dtype=np.float64)
    for key, c in counts.items():
        idx = 0
        for v, s in zip(key, shape):
            idx = idx * s + v
        flat[idx] = c
    return flat


def oracle_indif(records, a, b, sizes):
    """Dependency score straight from its definition, no shared code."""
    records = np.atleast_2d(records)
    n = records.shape[0]
    lo, hi = (a, b) if a < b else (b, a)
    joint = oracle_marginal(records, (lo, hi), sizes).reshape(sizes[lo], sizes[hi])
    one_lo = oracle_marginal(records, (lo,), sizes)
    one_hi = oracle_marginal(records, (hi,), sizes)
    product = np.outer(one_lo, one_hi) / n
    return float(np.abs(joint - product).sum())


def oracle_simplex_projection(values, total):
    """Sort-based exact L2 projection onto {x >= 0, sum(x) = total}."""
    y = np.asarray(values, dtype=np.float64)
    if total <= 0:
        return np.zeros_like(y)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - total
    ks = np.arange(1, len(y) + 1)
    cond = u - css / ks > 0
    hits = np.nonzero(cond)[0]
    # mathematically the first entry always qualifies; rounding can erase
    # that for vanishing totals, where a single-support answer is exact
    k = int(hits.max()) + 1 if hits.size else 1
    tau = css[k - 1] / k
    return np.maximum(y - tau, 0.0)


def oracle_all_cliques(nodes, edges, min_size=3, max_size=None):
    """Exhaustive clique enumeration for small graphs."""
    edge_set = {frozenset(e) for e in edges}
    nodes = sorted(nodes)
    max_size = max_size or len(nodes)
    out = []
    for size in range(min_size, max_size + 1):
        for combo in itertools.combinations(nodes, size):
            if all(
                frozenset(p) in edge_set for p in itertools.combinations(combo, 2)
            ):
                out.append(frozenset(combo))
    return out


def oracle_transport_cost(supplies, demands, costs):
    """Minimal transportation cost by brute force over unit assignments.

    Only usable for tiny instances: expands every supply/demand unit and
    minimizes over all matchings via itertools.permutations.
    """
    units_out = []
    for i, s in enumerate(supplies):
        units_out.extend([i] * int(s))
    units_in = []
    for j, d in enumerate(demands):
        units_in.extend([j] * int(d))
    assert len(units_out) == len(units_in)
    best = None
    for perm in itertools.permutations(units_in):
        cost = sum(costs[i][j] for i, j in zip(units_out, perm))
        if best is None or cost < best:
            best = cost
    return best


def independent_baseline(dataset, epsilon, delta, rng):
    """Synthesis from noisy one-way marginals only, full budget, no pairs.

    The strongest version of the independent-columns strawman: every bit of
    budget goes to the d one-way marginals and columns are sampled
    independently from them.
    """
    from margsyn.marginal import MarginalTable, one_way
    from margsyn.privacy import add_noise, dp_to_zcdp, gaussian_sigma
    from margsyn.synthesis import init_random

    rho = dp_to_zcdp(epsilon, delta)
    sigma = gaussian_sigma(1.0, rho / dataset.d)
    noisy = [
        MarginalTable(t.spec, add_noise(t.counts, sigma, rng))
        for t in (one_way(dataset, a) for a in range(dataset.d))
    ]
    totals = [float(np.clip(t.counts, 0.0, None).sum()) for t in noisy]
    n_s = max(1, round(float(np.mean(totals))))
    return init_random(noisy, dataset.domains, n_s, rng)
