"""End-to-end synthesis run with exact budget bookkeeping.

The run spends its zCDP budget in three committed stages: noisy one-way
marginals, pairwise dependency scores, and the selected marginals
themselves. Every expenditure lands in an audit log whose entries sum to
the total budget. After the last spend the private dataset is never read
again; everything downstream is post-processing of published tables.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .consistency import make_consistent
from .data import Dataset, ValueMergePlan, apply_merge, filter_low_counts, unmerge
from .marginal import MarginalSpec, MarginalTable, compute_marginal, one_way
from .privacy import (
    DEFAULT_SPLITS,
    PrivacyBudget,
    add_noise,
    allocate_budget,
    dp_to_zcdp,
    gaussian_sigma,
)
from .selection import (
    DEFAULT_GAMMA,
    DEFAULT_MAX_SHARED,
    PairScore,
    SelectionResult,
    combine_marginals,
    publish_indif,
    select_marginals,
)
from .synthesis import (
    AppendPlan,
    SynthConfig,
    append_attributes,
    gum_synthesize,
    mcf_synthesize,
    separate_and_join,
)

MARGINAL_SENSITIVITY = 1.0

_SYNTHESIZERS = ("gum", "mcf")


class PipelineError(RuntimeError):
    """A stage failed after part of the budget was already committed."""

    def __init__(self, message: str, stage: str, audit: list[tuple[str, float]]):
        super().__init__(message)
        self.stage = stage
        self.audit = audit


@dataclass
class PipelineConfig:
    """Tunable knobs; the defaults reproduce the standard configuration."""

    splits: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_SPLITS))
    n_records: int | None = None
    synthesizer: str = "gum"
    provisional_delta: float = 1e-6
    gamma: int = DEFAULT_GAMMA
    max_shared: int = DEFAULT_MAX_SHARED
    iterations: int = 100
    alpha0: float = 1.0
    decay: tuple = ("step", 0.5, 20)
    strategy: str = "S5"
    strategy_switch_iteration: int | None = None

    def __post_init__(self):
        if set(self.splits) != {"one_way", "select", "publish"}:
            raise ValueError(f"splits must name the three stages, got {self.splits}")
        if any(f <= 0.0 for f in self.splits.values()):
            raise ValueError(f"split fractions must be positive, got {self.splits}")
        if not math.isclose(sum(self.splits.values()), 1.0, rel_tol=1e-9):
            raise ValueError("split fractions must sum to 1")
        if self.n_records is not None and self.n_records < 1:
            raise ValueError(f"n_records must be positive, got {self.n_records}")
        if self.synthesizer not in _SYNTHESIZERS:
            raise ValueError(f"synthesizer must be one of {_SYNTHESIZERS}")
        if not 0.0 < self.provisional_delta < 1.0:
            raise ValueError("provisional_delta must lie in (0, 1)")
        if self.gamma < 1 or self.max_shared < 0:
            raise ValueError("gamma must be >= 1 and max_shared >= 0")
        # borrow the synthesis validation for the iteration knobs
        self.synth_config(1)

    def synth_config(self, n_s: int) -> SynthConfig:
        return SynthConfig(
            n_s=n_s,
            alpha0=self.alpha0,
            decay=self.decay,
            iterations=self.iterations,
            strategy=self.strategy,
            strategy_switch_iteration=self.strategy_switch_iteration,
        )


@dataclass
class PipelineRun:
    """Everything a run produced, including the full spending record."""

    budget: PrivacyBudget
    merge_plan: ValueMergePlan
    scores: list[PairScore]
    selection: SelectionResult
    published: list[MarginalTable]
    consistent: list[MarginalTable]
    rho_per_published: dict[MarginalSpec, float]
    synthetic: Dataset
    n_synth: int
    audit: list[tuple[str, float]]

    def __post_init__(self):
        spent = sum(rho for _, rho in self.audit)
        if not math.isclose(spent, self.budget.rho_total, rel_tol=1e-12):
            raise ValueError(
                f"audit log sums to {spent}, budget is {self.budget.rho_total}"
            )


@contextmanager
def _stage(name: str, audit: list[tuple[str, float]]):
    try:
        yield
    except Exception as exc:
        raise PipelineError(
            f"{name} stage failed: {exc}", stage=name, audit=list(audit)
        ) from exc


def degree_one_peels(specs: Sequence[MarginalSpec]) -> dict[int, int]:
    """Attributes to strip from synthesis and append afterwards.

    An attribute qualifies when it appears in exactly one spec, that spec
    is a pair, and the partner keeps coverage in some spec not consumed by
    an earlier peel (scanned in ascending attribute order). The returned
    map sends the attribute to the index of its pairing spec.
    """
    containing: dict[int, list[int]] = {}
    for idx, spec in enumerate(specs):
        for attr in spec.attributes:
            containing.setdefault(attr, []).append(idx)
    consumed: set[int] = set()
    peels: dict[int, int] = {}
    for attr in sorted(containing):
        owners = containing[attr]
        if len(owners) != 1 or specs[owners[0]].arity != 2:
            continue
        idx = owners[0]
        partner = next(a for a in specs[idx].attributes if a != attr)
        if any(o != idx and o not in consumed for o in containing[partner]):
            peels[attr] = idx
            consumed.add(idx)
    return peels


def _estimate_total(noisy_one_ways: Sequence[MarginalTable]) -> int:
    totals = [t.total() for t in noisy_one_ways]
    return max(2, round(float(np.mean(totals))))


def _build_synthetic(
    consistent: Sequence[MarginalTable],
    merged: Dataset,
    merge_plan: ValueMergePlan,
    n_s: int,
    config: PipelineConfig,
    rng: np.random.Generator,
) -> Dataset:
    """Synthesize the core attributes, append the rest, restore column order."""
    domains = merged.domains
    peels = degree_one_peels([t.spec for t in consistent])
    consumed = set(peels.values())
    core = [t for i, t in enumerate(consistent) if i not in consumed]
    universe = sorted({a for t in core for a in t.spec.attributes})
    column_of = {attr: i for i, attr in enumerate(universe)}

    synth_cfg = config.synth_config(n_s)
    if config.synthesizer == "gum":
        block = separate_and_join(core, domains, synth_cfg, rng)
    else:
        block = mcf_synthesize(core, domains, synth_cfg, rng)

    plans: list[AppendPlan] = []
    appended: list[int] = []
    for attr in sorted(peels):
        table = consistent[peels[attr]]
        first, second = table.spec.attributes
        grid = table.counts.reshape(table.spec.sizes)
        if attr == second:
            partner, pairing = first, grid
        else:
            partner, pairing = second, grid.T
        plans.append(
            AppendPlan(
                domain=domains[attr],
                one_way=pairing.sum(axis=0),
                partner=column_of[partner],
                pairing=pairing,
            )
        )
        appended.append(attr)
    for attr in range(merged.d):
        if attr not in column_of and attr not in peels:
            plans.append(
                AppendPlan(domain=domains[attr], one_way=merge_plan.merged_one_way(attr))
            )
            appended.append(attr)

    full = append_attributes(block, plans, rng)
    order = universe + appended
    permutation = [order.index(attr) for attr in range(merged.d)]
    return Dataset(list(domains), full.records[:, permutation])


def run(
    dataset: Dataset,
    epsilon: float,
    delta: float | None,
    config: PipelineConfig | None = None,
    rng: np.random.Generator | None = None,
) -> PipelineRun:
    """Produce a synthetic dataset under an (epsilon, delta) guarantee.

    Passing ``delta=None`` uses 1/m^2 with m the noisy record count from the
    first stage; that stage is then committed against a provisional delta,
    and the remaining budget is split between selection and publishing in
    the configured proportion.
    """
    config = config if config is not None else PipelineConfig()
    rng = rng if rng is not None else np.random.default_rng()
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if delta is not None and not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if dataset.d < 2:
        raise ValueError("need at least two attributes")
    if dataset.n < 1:
        raise ValueError("need at least one record")

    audit: list[tuple[str, float]] = []

    # stage 1: noisy one-way marginals
    if delta is not None:
        rho_total = dp_to_zcdp(epsilon, delta)
        rho_one_way = config.splits["one_way"] * rho_total
    else:
        rho_one_way = config.splits["one_way"] * dp_to_zcdp(
            epsilon, config.provisional_delta
        )
    with _stage("one_way", audit):
        sigma1 = gaussian_sigma(MARGINAL_SENSITIVITY, rho_one_way / dataset.d)
        noisy_one_ways = [
            MarginalTable(t.spec, add_noise(t.counts, sigma1, rng))
            for t in (one_way(dataset, a) for a in range(dataset.d))
        ]
    audit.append(("one_way", rho_one_way))

    # budget closure: with delta deferred, the remainder is split now
    with _stage("accounting", audit):
        if delta is not None:
            rho_select = config.splits["select"] * rho_total
        else:
            total_estimate = _estimate_total(noisy_one_ways)
            delta = 1.0 / total_estimate**2
            rho_total = dp_to_zcdp(epsilon, delta)
            remainder = rho_total - rho_one_way
            if remainder <= 0.0:
                raise ValueError(
                    "one-way spend exceeds the final budget; pass delta explicitly"
                )
            rho_select = remainder * (
                config.splits["select"]
                / (config.splits["select"] + config.splits["publish"])
            )
        rho_publish = rho_total - (rho_one_way + rho_select)
        budget = PrivacyBudget(
            epsilon,
            delta,
            rho_total,
            {
                "one_way": rho_one_way / rho_total,
                "select": rho_select / rho_total,
                "publish": rho_publish / rho_total,
            },
        )

    # stage 2: suppress weak values, then work in the merged domain
    with _stage("filter", audit):
        merge_plan = filter_low_counts(noisy_one_ways, sigma1)
        merged = apply_merge(dataset, merge_plan)

    # stage 3: pairwise dependency scores and greedy selection
    with _stage("select", audit):
        scores = publish_indif(merged, rho_select, rng)
    audit.append(("select", rho_select))
    with _stage("combine", audit):
        selection = select_marginals(scores, rho_publish, merged.sizes)
        if selection.chosen:
            combined = combine_marginals(
                selection.chosen, merged.sizes, config.gamma, config.max_shared
            )
        else:
            combined = [
                MarginalSpec.for_attrs((a,), merged.sizes) for a in range(merged.d)
            ]
        selection.combined = combined

    # stage 4: publish the selected marginals
    with _stage("publish", audit):
        shares = allocate_budget([spec.cell_count for spec in combined], rho_publish)
        published = []
        for spec, share in zip(combined, shares):
            sigma = gaussian_sigma(MARGINAL_SENSITIVITY, share)
            exact = compute_marginal(merged, spec)
            published.append(MarginalTable(spec, add_noise(exact.counts, sigma, rng)))
        rho_per_published = dict(zip(combined, shares))
    audit.append(("publish", rho_publish))

    # everything below is post-processing of published tables
    with _stage("consistency", audit):
        consistent = make_consistent(published, shares)

    with _stage("synthesize", audit):
        if config.n_records is not None:
            n_s = config.n_records
        else:
            n_s = max(1, round(consistent[0].total()))
        merged_synthetic = _build_synthetic(
            consistent, merged, merge_plan, n_s, config, rng
        )

    with _stage("unmerge", audit):
        synthetic = unmerge(merged_synthetic, merge_plan, rng, domains=dataset.domains)

    return PipelineRun(
        budget=budget,
        merge_plan=merge_plan,
        scores=scores,
        selection=selection,
        published=published,
        consistent=consistent,
        rho_per_published=rho_per_published,
        synthetic=synthetic,
        n_synth=n_s,
        audit=audit,
    )
