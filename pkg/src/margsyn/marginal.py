"""Dense k-way marginal tables and the pairwise dependency score.

Tables are flat float arrays laid out row-major over ascending attribute
indices; that layout is part of the serialization contract. Counting is
delegated to the kernel backend (compiled when available).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from margsyn import _kernels

if TYPE_CHECKING:
    from margsyn.data import Dataset


@dataclass(frozen=True)
class MarginalSpec:
    """Attribute subset of a marginal plus the matching domain sizes."""

    attributes: tuple[int, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.attributes)) != len(self.attributes):
            raise ValueError(f"duplicate attributes in spec: {self.attributes}")
        if tuple(sorted(self.attributes)) != self.attributes:
            raise ValueError(f"spec attributes must be ascending: {self.attributes}")
        if len(self.sizes) != len(self.attributes) or any(s < 1 for s in self.sizes):
            raise ValueError("one positive domain size required per attribute")

    @classmethod
    def for_attrs(cls, attrs: Iterable[int], domain_sizes: Sequence[int]) -> MarginalSpec:
        ordered = tuple(sorted(int(a) for a in attrs))
        return cls(ordered, tuple(int(domain_sizes[a]) for a in ordered))

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.sizes)) if self.sizes else 1

    @property
    def arity(self) -> int:
        return len(self.attributes)


@dataclass
class MarginalTable:
    """Dense cell counts for one marginal; noisy tables may hold any reals."""

    spec: MarginalSpec
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64).reshape(-1)
        if self.counts.shape[0] != self.spec.cell_count:
            raise ValueError(
                f"expected {self.spec.cell_count} cells, got {self.counts.shape[0]}"
            )

    def copy(self) -> MarginalTable:
        return MarginalTable(self.spec, self.counts.copy())

    def total(self) -> float:
        return float(self.counts.sum())


def compute_marginal(dataset: Dataset, spec: MarginalSpec) -> MarginalTable:
    """Count dataset records per cell of ``spec``."""
    for a, size in zip(spec.attributes, spec.sizes):
        if a >= dataset.d or dataset.sizes[a] != size:
            raise ValueError(f"spec attribute {a} does not match the dataset domains")
    attrs = np.asarray(spec.attributes, dtype=np.int64)
    sizes = np.asarray(spec.sizes, dtype=np.int64)
    counts = _kernels.marginal_counts(dataset.records, attrs, sizes, spec.cell_count)
    return MarginalTable(spec, counts)


def one_way(dataset: Dataset, attr: int) -> MarginalTable:
    return compute_marginal(dataset, MarginalSpec.for_attrs((attr,), dataset.sizes))


def independent_product(a: MarginalTable, b: MarginalTable) -> MarginalTable:
    """Two-way table predicted by independence from two one-way tables."""
    if a.spec.arity != 1 or b.spec.arity != 1:
        raise ValueError("independent_product expects one-way tables")
    if a.spec.attributes == b.spec.attributes:
        raise ValueError("one-way tables must cover distinct attributes")
    if a.spec.attributes[0] > b.spec.attributes[0]:
        a, b = b, a
    n = a.total()
    if abs(n - b.total()) > 1e-9 * max(1.0, abs(n)):
        raise ValueError(f"one-way totals differ: {n} vs {b.total()}")
    if n <= 0:
        raise ValueError("independence product undefined for zero total")
    spec = MarginalSpec(
        a.spec.attributes + b.spec.attributes, a.spec.sizes + b.spec.sizes
    )
    return MarginalTable(spec, np.outer(a.counts, b.counts).reshape(-1) / n)


def l1_distance(a: MarginalTable, b: MarginalTable) -> float:
    if a.spec != b.spec:
        raise ValueError(f"spec mismatch: {a.spec} vs {b.spec}")
    return float(np.abs(a.counts - b.counts).sum())


def indif(dataset: Dataset, a: int, b: int) -> float:
    """Dependency score of an attribute pair: L1 gap to independence.

    Zero for exactly independent attributes, up to 2n for a fully
    dependent pair; single-record changes move it by at most 4.
    """
    if a == b:
        raise ValueError("dependency score needs two distinct attributes")
    joint = compute_marginal(dataset, MarginalSpec.for_attrs((a, b), dataset.sizes))
    product = independent_product(one_way(dataset, a), one_way(dataset, b))
    return l1_distance(joint, product)


def project_onto(table: MarginalTable, attrs: Iterable[int]) -> MarginalTable:
    """Sum out every attribute of ``table`` not listed in ``attrs``."""
    keep = tuple(sorted(attrs))
    if not set(keep) <= set(table.spec.attributes):
        raise ValueError(f"{keep} is not a subset of {table.spec.attributes}")
    axes = tuple(
        i for i, a in enumerate(table.spec.attributes) if a not in set(keep)
    )
    grid = table.counts.reshape(table.spec.sizes)
    reduced = grid.sum(axis=axes) if axes else grid.copy()
    sizes = tuple(s for a, s in zip(table.spec.attributes, table.spec.sizes) if a in keep)
    return MarginalTable(MarginalSpec(keep, sizes), reduced.reshape(-1))


def table_to_json(table: MarginalTable) -> dict:
    return {
        "attributes": list(table.spec.attributes),
        "counts": table.counts.tolist(),
    }


def table_from_json(obj: dict, domain_sizes: Sequence[int]) -> MarginalTable:
    spec = MarginalSpec.for_attrs(obj["attributes"], domain_sizes)
    return MarginalTable(spec, np.asarray(obj["counts"], dtype=np.float64))
