"""Building synthetic records that honor a set of target marginals.

The main engine initializes records from one-way distributions, then walks
every target marginal repeatedly, nudging cell counts toward their targets
with capped, decaying updates that replace or duplicate whole records. A
min-cost-flow updater (rewrite as few attribute values as possible, no
randomness) serves as the comparison baseline, and helpers append
disconnected attributes and synthesize independent attribute groups
separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from margsyn._kernels import cell_codes
from margsyn.data import AttributeDomain, Dataset
from margsyn.marginal import MarginalSpec, MarginalTable, compute_marginal, project_onto

_STRATEGY_PHASES = {
    "S1": ("replace", "replace"),
    "S2": ("duplicate", "duplicate"),
    "S3": ("half", "half"),
    "S4": ("replace", "duplicate"),
    "S5": ("half", "duplicate"),
    "S6": ("half", "replace"),
}
_DECAY_KINDS = ("step", "exponential", "linear", "sqrt")
_MODES = ("replace", "duplicate", "half")


@dataclass
class SynthConfig:
    n_s: int
    alpha0: float = 1.0
    decay: tuple = ("step", 0.5, 20)
    iterations: int = 100
    strategy: str = "S5"
    strategy_switch_iteration: int | None = None

    def __post_init__(self):
        if self.n_s < 1:
            raise ValueError(f"n_s must be at least 1, got {self.n_s}")
        if self.alpha0 <= 0.0:
            raise ValueError(f"alpha0 must be positive, got {self.alpha0}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be at least 1, got {self.iterations}")
        if self.strategy not in _STRATEGY_PHASES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.decay[0] not in _DECAY_KINDS:
            raise ValueError(f"unknown decay kind {self.decay[0]!r}")

    @property
    def switch_iteration(self) -> int:
        if self.strategy_switch_iteration is not None:
            return self.strategy_switch_iteration
        return self.iterations // 2


def decay_alpha(alpha0: float, t: int, schedule) -> float:
    """Step size at iteration t (first iteration is t=0, full alpha0)."""
    kind, k, s = schedule
    if kind == "step":
        return alpha0 * k ** (t // s)
    if kind == "exponential":
        return alpha0 * math.exp(-k * t)
    if kind == "linear":
        return alpha0 / (1.0 + k * t)
    if kind == "sqrt":
        return alpha0 / math.sqrt(1.0 + k * t)
    raise ValueError(f"unknown decay kind {kind!r}")


def strategy_mode(strategy: str, t: int, switch_iteration: int) -> str:
    """Resolve a strategy name to the update mode used at iteration t."""
    if strategy not in _STRATEGY_PHASES:
        raise ValueError(f"unknown strategy {strategy!r}")
    early, late = _STRATEGY_PHASES[strategy]
    return early if t < switch_iteration else late


def largest_remainder(
    raw: np.ndarray, total: int, cap: np.ndarray | None = None
) -> np.ndarray:
    """Round nonnegative amounts to integers summing exactly to ``total``.

    Floors first, then hands out the missing units to the largest
    fractional parts (lowest index on ties); if the floors overshoot,
    units come back from the smallest fractions (highest index on ties).
    A per-cell cap is never exceeded.
    """
    raw = np.asarray(raw, dtype=np.float64)
    out = np.floor(raw).astype(np.int64)
    if cap is not None:
        out = np.minimum(out, cap)
    fracs = raw - out
    short = int(total - out.sum())
    while short > 0:
        order = sorted(range(len(out)), key=lambda i: (-fracs[i], i))
        progressed = False
        for i in order:
            if short == 0:
                break
            if cap is not None and out[i] >= cap[i]:
                continue
            out[i] += 1
            fracs[i] -= 1.0
            short -= 1
            progressed = True
        if not progressed:
            raise ValueError("total exceeds the summed caps")
    while short < 0:
        order = sorted(range(len(out)), key=lambda i: (fracs[i], -i))
        for i in order:
            if short == 0:
                break
            if out[i] > 0:
                out[i] -= 1
                fracs[i] += 1.0
                short += 1
    return out


def update_amounts(
    current: np.ndarray, target: np.ndarray, alpha: float
) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-cell additions and removals for one capped update step.

    Under-counted cells gain min(deficit, alpha * current); a single beta
    then scales removals from over-counted cells, each capped at its
    surplus, so that removals balance the additions exactly. Returns
    (additions, removals, beta), all still fractional.
    """
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    current = np.asarray(current, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    deficit = target - current
    adds = np.where(deficit > 0.0, np.minimum(deficit, alpha * current), 0.0)
    surplus = np.where(deficit < 0.0, -deficit, 0.0)
    beta = _solve_beta(surplus, current, float(adds.sum()))
    removes = np.where(surplus > 0.0, np.minimum(surplus, beta * current), 0.0)
    return adds, removes, beta


def _solve_beta(surplus: np.ndarray, current: np.ndarray, amount: float) -> float:
    """Smallest beta whose capped removals sum to ``amount`` (waterfilling)."""
    over = np.nonzero(surplus > 0.0)[0]
    if amount <= 0.0 or over.size == 0:
        return 0.0
    ratios = surplus[over] / current[over]
    order = over[np.argsort(ratios, kind="stable")]
    slope = float(current[over].sum())
    consumed = 0.0
    prev = 0.0
    for idx in order:
        ratio = surplus[idx] / current[idx]
        reach = consumed + (ratio - prev) * slope
        if reach >= amount:
            return prev + (amount - consumed) / slope
        consumed = reach
        slope -= current[idx]
        prev = ratio
    return prev


def gum_update(
    ds: Dataset,
    target: MarginalTable,
    alpha: float,
    mode: str,
    rng: np.random.Generator,
) -> Dataset:
    """One capped update of ``ds`` toward a single target marginal.

    Mutates the dataset in place (and returns it): fractional amounts are
    rounded by largest remainder to a common integer total, victims are
    drawn uniformly from over-counted cells, and each landing cell fills
    its quota by rewriting victims (replace), copying residents over them
    (duplicate), or half of each.
    """
    if mode not in _MODES:
        raise ValueError(f"unknown update mode {mode!r}")
    current = compute_marginal(ds, target.spec).counts
    adds_raw, removes_raw, _ = update_amounts(current, target.counts, alpha)
    total = int(round(min(adds_raw.sum(), removes_raw.sum())))
    if total <= 0:
        return ds
    adds = largest_remainder(adds_raw, total)
    removes = largest_remainder(removes_raw, total, cap=current.astype(np.int64))
    _realize_updates(ds, target.spec, adds, removes, mode, rng)
    return ds


def _realize_updates(
    ds: Dataset,
    spec: MarginalSpec,
    adds: np.ndarray,
    removes: np.ndarray,
    mode: str,
    rng: np.random.Generator,
) -> None:
    """Overwrite victim rows so the marginal moves by (adds, removes).

    Victims come from over-counted cells (uniform, without replacement),
    get pooled and shuffled, and are assigned to under-counted cells in
    ascending order. Duplicate sources are read from a snapshot taken
    here, so copies never chain within one update; a cell with no
    residents to copy falls back to replace.
    """
    attrs = np.asarray(spec.attributes, dtype=np.int64)
    codes = cell_codes(ds.records, attrs, np.asarray(spec.sizes, dtype=np.int64))
    snapshot = ds.records.copy()

    # rows grouped by cell, ascending within each group (stable sort), so
    # members(cell) is the same array a per-cell nonzero scan would give
    order = np.argsort(codes, kind="stable").astype(np.int64)
    bounds = np.searchsorted(codes[order], np.arange(spec.cell_count + 1))

    def members(cell: int) -> np.ndarray:
        return order[bounds[cell] : bounds[cell + 1]]

    victim_groups = []
    for cell in np.nonzero(removes > 0)[0]:
        group = members(int(cell))
        take = min(int(removes[cell]), group.size)
        victim_groups.append(rng.choice(group, size=take, replace=False))
    pool = (
        np.concatenate(victim_groups)
        if victim_groups
        else np.empty(0, dtype=np.int64)
    )
    rng.shuffle(pool)

    add_cells = np.nonzero(adds > 0)[0]
    add_values = (
        np.stack(np.unravel_index(add_cells, spec.sizes), axis=1).astype(np.int64)
        if add_cells.size
        else np.empty((0, len(spec.sizes)), dtype=np.int64)
    )
    cursor = 0
    for k, cell in enumerate(add_cells):
        rows = pool[cursor : cursor + int(adds[cell])]
        cursor += int(adds[cell])
        if rows.size == 0:
            continue
        sources = members(int(cell))
        cell_mode = mode
        if cell_mode != "replace" and sources.size == 0:
            cell_mode = "replace"
        if cell_mode == "replace":
            n_replace = rows.size
        elif cell_mode == "duplicate":
            n_replace = 0
        else:
            n_replace = (rows.size + 1) // 2
        if n_replace:
            ds.records[rows[:n_replace][:, None], attrs] = add_values[k]
        copied = rows[n_replace:]
        if copied.size:
            picks = rng.choice(sources, size=copied.size, replace=True)
            ds.records[copied] = snapshot[picks]


def mcf_update(ds: Dataset, target: MarginalTable) -> Dataset:
    """Rewrite the fewest attribute values so the marginal matches ``target``.

    The target is integerized to the record count, surpluses become flow
    supplies and deficits demands, and moves are costed by how many of the
    marginal's attributes they rewrite. No randomness: victims are the
    lowest-index records of each surplus cell.
    """
    spec = target.spec
    goal = largest_remainder(np.clip(target.counts, 0.0, None), ds.n)
    codes = cell_codes(
        ds.records,
        np.asarray(spec.attributes, dtype=np.int64),
        np.asarray(spec.sizes, dtype=np.int64),
    )
    current = np.bincount(codes, minlength=spec.cell_count)
    diff = current - goal
    supply_cells = np.nonzero(diff > 0)[0]
    demand_cells = np.nonzero(diff < 0)[0]
    if supply_cells.size == 0:
        return ds

    supplies = diff[supply_cells].tolist()
    demands = (-diff[demand_cells]).tolist()
    if spec.arity == 1:
        flows = _greedy_flow(supplies, demands)
    else:
        cells = np.stack(np.unravel_index(supply_cells, spec.sizes), axis=1)
        targets = np.stack(np.unravel_index(demand_cells, spec.sizes), axis=1)
        costs = (cells[:, None, :] != targets[None, :, :]).sum(axis=2)
        flows = _min_cost_flow(supplies, demands, costs)

    by_supply: dict[int, list[tuple[int, int]]] = {}
    for s, j, units in flows:
        by_supply.setdefault(s, []).append((j, units))
    order = np.argsort(codes, kind="stable").astype(np.int64)
    bounds = np.searchsorted(codes[order], np.arange(spec.cell_count + 1))
    attrs = np.asarray(spec.attributes, dtype=np.int64)
    for i, cell in enumerate(supply_cells):
        members = order[bounds[cell] : bounds[cell + 1]]
        used = 0
        for j, units in sorted(by_supply.get(i, [])):
            rows = members[used : used + units]
            used += units
            values = np.unravel_index(int(demand_cells[j]), spec.sizes)
            ds.records[rows[:, None], attrs] = np.asarray(values, dtype=np.int64)
    return ds


def _greedy_flow(supplies: list[int], demands: list[int]) -> list[tuple[int, int, int]]:
    """All unit costs equal: pair surpluses and deficits in index order."""
    flows = []
    i = j = 0
    left_s = list(supplies)
    left_d = list(demands)
    while i < len(left_s) and j < len(left_d):
        units = min(left_s[i], left_d[j])
        if units > 0:
            flows.append((i, j, units))
        left_s[i] -= units
        left_d[j] -= units
        if left_s[i] == 0:
            i += 1
        if left_d[j] == 0:
            j += 1
    return flows


def _min_cost_flow(
    supplies: list[int], demands: list[int], costs
) -> list[tuple[int, int, int]]:
    """Exact transportation plan via successive shortest augmenting paths.

    Bellman-Ford over the residual bipartite graph, with each relaxation
    sweep done as one matrix pass. Ties go to the lowest index on both
    sides (argmin keeps the first minimum), so the plan is deterministic.
    """
    ns, nd = len(supplies), len(demands)
    cost = np.asarray(costs, dtype=np.float64).reshape(ns, nd)
    flow = np.zeros((ns, nd), dtype=np.int64)
    left_s = np.asarray(supplies, dtype=np.int64).copy()
    left_d = np.asarray(demands, dtype=np.int64).copy()
    outstanding = int(left_d.sum())

    while outstanding > 0:
        dist_s = np.where(left_s > 0, 0.0, np.inf)
        dist_d = np.full(nd, np.inf)
        parent_d = np.full(nd, -1, dtype=np.int64)
        parent_s = np.full(ns, -1, dtype=np.int64)
        for _ in range(ns + nd):
            via = dist_s[:, None] + cost
            best = via.min(axis=0)
            forward = best < dist_d
            if forward.any():
                dist_d[forward] = best[forward]
                parent_d[forward] = via.argmin(axis=0)[forward]
            back = np.where(flow > 0, dist_d[None, :] - cost, np.inf)
            best = back.min(axis=1)
            backward = best < dist_s
            if backward.any():
                dist_s[backward] = best[backward]
                parent_s[backward] = back.argmin(axis=1)[backward]
            if not forward.any() and not backward.any():
                break

        reachable = np.where((left_d > 0) & np.isfinite(dist_d))[0]
        end = int(reachable[np.argmin(dist_d[reachable])])
        # walk back to a live supply, recording the path and its bottleneck
        path = []
        bottleneck = int(left_d[end])
        j = end
        while True:
            i = int(parent_d[j])
            path.append((i, j))
            if parent_s[i] == -1:
                bottleneck = min(bottleneck, int(left_s[i]))
                break
            back_j = int(parent_s[i])
            bottleneck = min(bottleneck, int(flow[i, back_j]))
            j = back_j
        start = path[-1][0]
        for k, (i, j) in enumerate(path):
            flow[i, j] += bottleneck
            if k + 1 < len(path):
                flow[i, path[k + 1][1]] -= bottleneck
        left_s[start] -= bottleneck
        left_d[end] -= bottleneck
        outstanding -= bottleneck

    rows, cols = np.nonzero(flow > 0)
    return [(int(i), int(j), int(flow[i, j])) for i, j in zip(rows, cols)]


def init_random(
    one_way: Sequence[MarginalTable],
    domains: Sequence[AttributeDomain],
    n_s: int,
    rng: np.random.Generator,
) -> Dataset:
    """Independent columns, each drawn i.i.d. from its one-way distribution."""
    if len(one_way) != len(domains):
        raise ValueError("need exactly one one-way table per domain")
    columns = []
    for table, domain in zip(one_way, domains):
        counts = np.clip(table.counts, 0.0, None)
        if counts.size != domain.size:
            raise ValueError(
                f"one-way table for {domain.name!r} has {counts.size} cells, "
                f"domain has {domain.size}"
            )
        total = counts.sum()
        if total > 0:
            probs = counts / total
        else:
            probs = np.full(domain.size, 1.0 / domain.size)
        columns.append(rng.choice(domain.size, size=n_s, p=probs))
    records = np.column_stack(columns)
    return Dataset(list(domains), records)


def _localize(
    tables: Sequence[MarginalTable], domains: Sequence[AttributeDomain]
) -> tuple[list[int], list[AttributeDomain], list[MarginalTable]]:
    """Restrict to the attributes the tables cover, renumbering from zero."""
    universe = sorted({a for t in tables for a in t.spec.attributes})
    position = {a: i for i, a in enumerate(universe)}
    sub_domains = [domains[a] for a in universe]
    local_tables = []
    for t in tables:
        local_attrs = tuple(position[a] for a in t.spec.attributes)
        local_tables.append(
            MarginalTable(MarginalSpec(local_attrs, t.spec.sizes), t.counts.copy())
        )
    return universe, sub_domains, local_tables


def gum_synthesize(
    tables: Sequence[MarginalTable],
    domains: Sequence[AttributeDomain],
    config: SynthConfig,
    rng: np.random.Generator,
) -> Dataset:
    """Full synthesis loop over the attributes the tables cover.

    Starts from independent one-way sampling, then for each iteration
    updates every marginal in input order with the decayed step size and
    the strategy's current mode, and reshuffles the records. Output
    columns follow ascending attribute order.
    """
    if not tables:
        raise ValueError("at least one target marginal is required")
    universe, sub_domains, local_tables = _localize(tables, domains)

    one_ways = []
    for i in range(len(universe)):
        holder = next(t for t in local_tables if i in t.spec.attributes)
        one_ways.append(project_onto(holder, (i,)))
    ds = init_random(one_ways, sub_domains, config.n_s, rng)

    for t in range(config.iterations):
        alpha = decay_alpha(config.alpha0, t, config.decay)
        mode = strategy_mode(config.strategy, t, config.switch_iteration)
        for table in local_tables:
            gum_update(ds, table, alpha, mode, rng)
        ds.records = ds.records[rng.permutation(ds.n)]
    return ds


def mcf_synthesize(
    tables: Sequence[MarginalTable],
    domains: Sequence[AttributeDomain],
    config: SynthConfig,
    rng: np.random.Generator,
) -> Dataset:
    """Baseline loop: same skeleton as gum_synthesize, min-cost-flow updates.

    Each marginal is enforced fully on every visit (no step-size cap), so
    within one iteration later marginals can undo earlier ones.
    """
    if not tables:
        raise ValueError("at least one target marginal is required")
    universe, sub_domains, local_tables = _localize(tables, domains)
    one_ways = []
    for i in range(len(universe)):
        holder = next(t for t in local_tables if i in t.spec.attributes)
        one_ways.append(project_onto(holder, (i,)))
    ds = init_random(one_ways, sub_domains, config.n_s, rng)

    for _ in range(config.iterations):
        for table in local_tables:
            mcf_update(ds, table)
        ds.records = ds.records[rng.permutation(ds.n)]
    return ds


@dataclass
class AppendPlan:
    """How to attach one new attribute to an existing synthetic dataset.

    With a partner column and pairing counts, values are drawn from the
    conditional distribution given the partner value (partner rows with no
    mass fall back to the one-way). Without one, the column is sampled
    independently from the one-way distribution.
    """

    domain: AttributeDomain
    one_way: np.ndarray
    partner: int | None = None
    pairing: np.ndarray | None = None


def append_attributes(
    ds: Dataset, plans: Sequence[AppendPlan], rng: np.random.Generator
) -> Dataset:
    """Extend the dataset with one column per plan, in plan order.

    A plan's partner may reference a column appended by an earlier plan,
    so chains of dependent attributes build left to right.
    """
    records = ds.records
    domains = list(ds.domains)
    for plan in plans:
        size = plan.domain.size
        one_way = np.clip(np.asarray(plan.one_way, dtype=np.float64), 0.0, None)
        if one_way.size != size:
            raise ValueError(f"one-way length {one_way.size} != domain size {size}")
        base = (
            one_way / one_way.sum()
            if one_way.sum() > 0
            else np.full(size, 1.0 / size)
        )
        if plan.partner is None:
            column = rng.choice(size, size=records.shape[0], p=base)
        else:
            partner_size = domains[plan.partner].size
            pairing = np.clip(np.asarray(plan.pairing, dtype=np.float64), 0.0, None)
            if pairing.shape != (partner_size, size):
                raise ValueError(
                    f"pairing shape {pairing.shape} != ({partner_size}, {size})"
                )
            partner_values = records[:, plan.partner]
            column = np.zeros(records.shape[0], dtype=np.int64)
            for value in range(partner_size):
                mask = partner_values == value
                hits = int(mask.sum())
                if hits == 0:
                    continue
                row_total = pairing[value].sum()
                probs = pairing[value] / row_total if row_total > 0 else base
                column[mask] = rng.choice(size, size=hits, p=probs)
        records = np.column_stack([records, column])
        domains.append(plan.domain)
    return Dataset(domains, records)


def separate_and_join(
    tables: Sequence[MarginalTable],
    domains: Sequence[AttributeDomain],
    config: SynthConfig,
    rng: np.random.Generator,
) -> Dataset:
    """Synthesize each connected attribute group separately, then join.

    A single component is handed to gum_synthesize unchanged. Otherwise
    each component runs under its own child generator (so components never
    perturb each other), per-block rows are shuffled, and the blocks are
    concatenated with columns restored to ascending attribute order.
    """
    if not tables:
        raise ValueError("at least one target marginal is required")
    neighbors: dict[int, set[int]] = {}
    for t in tables:
        for a in t.spec.attributes:
            neighbors.setdefault(a, set()).update(t.spec.attributes)
    components = []
    seen: set[int] = set()
    for start in sorted(neighbors):
        if start in seen:
            continue
        stack = [start]
        comp = set()
        while stack:
            node = stack.pop()
            if node in comp:
                continue
            comp.add(node)
            stack.extend(neighbors[node] - comp)
        seen |= comp
        components.append(sorted(comp))

    if len(components) <= 1:
        return gum_synthesize(tables, domains, config, rng)

    children = rng.spawn(len(components))
    column_of: dict[int, tuple[int, int]] = {}
    blocks = []
    for b, (comp, child) in enumerate(zip(components, children)):
        comp_tables = [t for t in tables if set(t.spec.attributes) <= set(comp)]
        block = gum_synthesize(comp_tables, domains, config, child)
        block.records = block.records[child.permutation(block.n)]
        blocks.append(block)
        for pos, attr in enumerate(comp):
            column_of[attr] = (b, pos)

    ordered_attrs = sorted(column_of)
    columns = [blocks[column_of[a][0]].records[:, column_of[a][1]] for a in ordered_attrs]
    return Dataset(
        [domains[a] for a in ordered_attrs], np.column_stack(columns)
    )
