"""Categorical datasets: CSV loading, integer encoding, low-count value merging.

A dataset is an (n, d) int64 matrix plus one labeled domain per column. The
domain spec is an explicit sidecar (never inferred from data) so the private
dataset's support cannot leak through the schema.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from margsyn.marginal import MarginalTable


class DataError(ValueError):
    """Input violates the data contract; the message carries the position."""


@dataclass(frozen=True)
class AttributeDomain:
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))

    @property
    def size(self) -> int:
        return len(self.values)


@dataclass
class Dataset:
    domains: list[AttributeDomain]
    records: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.records = np.ascontiguousarray(self.records, dtype=np.int64)
        if self.records.ndim != 2 or self.records.shape[1] != len(self.domains):
            raise DataError(
                f"records shape {self.records.shape} does not match "
                f"{len(self.domains)} domains"
            )

    @property
    def n(self) -> int:
        return self.records.shape[0]

    @property
    def d(self) -> int:
        return self.records.shape[1]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(dom.size for dom in self.domains)

    def copy(self) -> Dataset:
        return Dataset(list(self.domains), self.records.copy())


def load_domain(path) -> list[AttributeDomain]:
    """Read a domain spec: a JSON object mapping attribute name to labels.

    Key order defines the column order of the encoded matrix.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read domain spec {path}: {exc}") from exc
    if not isinstance(raw, dict) or not raw:
        raise DataError("domain spec must be a non-empty JSON object")
    domains = []
    for name, values in raw.items():
        if not isinstance(values, list) or not values:
            raise DataError(f"attribute {name!r} needs a non-empty label array")
        labels = [str(v) for v in values]
        if len(set(labels)) != len(labels):
            raise DataError(f"attribute {name!r} has duplicate labels")
        domains.append(AttributeDomain(name, tuple(labels)))
    return domains


def load_csv(path, domain_spec) -> Dataset:
    """Encode a headered CSV against a domain spec (path or loaded domains).

    Record order is preserved; errors carry the offending row and column.
    """
    if isinstance(domain_spec, (str, Path)):
        domains = load_domain(domain_spec)
    else:
        domains = list(domain_spec)
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file, a header row is required")
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    positions = {name.strip(): i for i, name in enumerate(header)}
    columns = []
    for dom in domains:
        if dom.name not in positions:
            raise DataError(f"{path}: column {dom.name!r} missing from header")
        columns.append(positions[dom.name])

    encoders = [{v: i for i, v in enumerate(dom.values)} for dom in domains]
    records = np.zeros((len(rows), len(domains)), dtype=np.int64)
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(
                f"{path}: row {r + 2} has {len(row)} fields, expected {len(header)}"
            )
        for j, (dom, col) in enumerate(zip(domains, columns)):
            cell = row[col]
            code = encoders[j].get(cell)
            if code is None:
                raise DataError(
                    f"{path}: row {r + 2}, column {dom.name!r}: "
                    f"value {cell!r} is not in the domain"
                )
            records[r, j] = code
    return Dataset(domains, records)


def write_csv(dataset: Dataset, path) -> None:
    """Emit the dataset with original labels, one column per domain."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([dom.name for dom in dataset.domains])
        decoders = [dom.values for dom in dataset.domains]
        for row in dataset.records:
            writer.writerow([decoders[j][v] for j, v in enumerate(row)])


@dataclass(frozen=True)
class AttributeMerge:
    """Per-attribute outcome of low-count filtering.

    ``retained`` keeps original value indices in order; ``merged`` values map
    to one shared post-merge index, ``zeroed`` values to the modal retained
    value. ``noisy_counts`` holds the published one-way counts for recovery.
    """

    retained: tuple[int, ...]
    merged: tuple[int, ...]
    zeroed: tuple[int, ...]
    merged_index: int | None
    modal: int | None
    noisy_counts: np.ndarray = field(repr=False)

    @property
    def original_size(self) -> int:
        return len(self.noisy_counts)

    @property
    def merged_size(self) -> int:
        return len(self.retained) + (1 if self.merged_index is not None else 0)

    def old_to_new(self) -> np.ndarray:
        lut = np.zeros(self.original_size, dtype=np.int64)
        for new, old in enumerate(self.retained):
            lut[old] = new
        if self.merged_index is not None:
            for old in self.merged:
                lut[old] = self.merged_index
        if self.zeroed:
            modal_new = self.retained.index(self.modal)
            for old in self.zeroed:
                lut[old] = modal_new
        return lut


@dataclass
class ValueMergePlan:
    theta: float
    attributes: list[AttributeMerge]

    @property
    def is_identity(self) -> bool:
        return all(not m.merged and not m.zeroed for m in self.attributes)

    def merged_domains(self, domains: Sequence[AttributeDomain]) -> list[AttributeDomain]:
        out = []
        for dom, merge in zip(domains, self.attributes):
            values = [dom.values[v] for v in merge.retained]
            if merge.merged_index is not None:
                label = "<merged>"
                while label in values:
                    label = "<" + label[1:-1] + "+>"
                values.append(label)
            out.append(AttributeDomain(dom.name, tuple(values)))
        return out

    def merged_one_way(self, attr: int) -> np.ndarray:
        """Published one-way counts re-expressed over the merged domain."""
        merge = self.attributes[attr]
        counts = [float(merge.noisy_counts[v]) for v in merge.retained]
        if merge.merged_index is not None:
            counts.append(float(sum(merge.noisy_counts[v] for v in merge.merged)))
        return np.asarray(counts, dtype=np.float64)


def filter_low_counts(noisy_one_way: list[MarginalTable], sigma: float) -> ValueMergePlan:
    """Plan value suppression from noisy one-way counts at threshold 3*sigma.

    Values with counts under the threshold are summed: a small remainder is
    zeroed outright, a large one becomes a single merged value. The threshold
    comparison is strict, so counts exactly at it are retained.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    theta = 3.0 * sigma
    merges = []
    for attr, table in enumerate(noisy_one_way):
        if table.spec.attributes != (attr,):
            raise ValueError(
                f"expected a one-way table for attribute {attr}, got {table.spec}"
            )
        counts = table.counts
        low = tuple(int(v) for v in np.nonzero(counts < theta)[0])
        retained = tuple(int(v) for v in np.nonzero(counts >= theta)[0])
        low_sum = float(counts[list(low)].sum()) if low else 0.0
        if low and retained and low_sum <= theta:
            merged, zeroed = (), low
        else:
            # covers the plain merge case and the total wipe-out, where a
            # merged value is forced because a domain cannot go empty
            merged, zeroed = low, ()
        modal = None
        if retained:
            modal = int(retained[int(np.argmax(counts[list(retained)]))])
        merges.append(
            AttributeMerge(
                retained=retained,
                merged=merged,
                zeroed=zeroed,
                merged_index=len(retained) if merged else None,
                modal=modal,
                noisy_counts=np.asarray(counts, dtype=np.float64).copy(),
            )
        )
    return ValueMergePlan(theta=theta, attributes=merges)


def apply_merge(dataset: Dataset, plan: ValueMergePlan) -> Dataset:
    """Rewrite records into the merged domains described by the plan."""
    if len(plan.attributes) != dataset.d:
        raise ValueError("plan does not cover every dataset attribute")
    records = dataset.records.copy()
    for attr, merge in enumerate(plan.attributes):
        if merge.original_size != dataset.sizes[attr]:
            raise ValueError(f"plan for attribute {attr} built from other domains")
        if merge.merged or merge.zeroed:
            records[:, attr] = merge.old_to_new()[records[:, attr]]
    return Dataset(plan.merged_domains(dataset.domains), records)


def unmerge(dataset: Dataset, plan: ValueMergePlan, rng, domains=None) -> Dataset:
    """Map a merged-domain dataset back to original value indices.

    Records holding a merged value draw one of the represented originals in
    proportion to their clipped noisy counts (uniform when all nonpositive).
    ``domains`` supplies the original labels; generic ones are synthesized
    when omitted.
    """
    records = dataset.records.copy()
    for attr, merge in enumerate(plan.attributes):
        new_to_old = np.zeros(merge.merged_size, dtype=np.int64)
        for new, old in enumerate(merge.retained):
            new_to_old[new] = old
        if merge.merged_index is None:
            records[:, attr] = new_to_old[records[:, attr]]
            continue
        column = records[:, attr]
        hit = column == merge.merged_index
        restored = np.where(hit, 0, new_to_old[np.minimum(column, len(merge.retained))])
        k = int(hit.sum())
        if k:
            weights = np.maximum(merge.noisy_counts[list(merge.merged)], 0.0)
            total = weights.sum()
            probs = weights / total if total > 0 else None
            draws = rng.choice(np.asarray(merge.merged), size=k, p=probs)
            restored[hit] = draws
        records[:, attr] = restored
    if domains is None:
        domains = [
            AttributeDomain(
                dataset.domains[a].name,
                tuple(f"v{i}" for i in range(m.original_size)),
            )
            for a, m in enumerate(plan.attributes)
        ]
    return Dataset(list(domains), records)
