"""Cross-marginal reconciliation: averaging, projection, joint iteration.

The projection implementation (uniform shift with clipping) is verified
against the sort-based closed form in util.py and against random feasible
points, which exercise the optimality claim without sharing any code.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from margsyn.consistency import (
    SharedAttributeGroup,
    make_consistent,
    project_valid,
    shared_groups,
    weighted_average,
)
from margsyn.marginal import MarginalSpec, MarginalTable, project_onto

from util import oracle_simplex_projection


def table(attrs, sizes, counts):
    return MarginalTable(MarginalSpec(tuple(attrs), tuple(sizes)), np.asarray(counts, dtype=np.float64))


class TestProjectValid:
    def test_pure_shift_case(self):
        out = project_valid(table([0], [3], [5.0, 6.0, 1.0]), 10.0)
        assert np.allclose(out.counts, [13.0 / 3, 16.0 / 3, 1.0 / 3])

    def test_clipping_case(self):
        out = project_valid(table([0], [3], [-1.0, 2.0, 1.0]), 2.0)
        assert np.allclose(out.counts, [0.0, 1.5, 0.5])

    def test_valid_input_is_fixed_point(self):
        out = project_valid(table([0], [3], [1.0, 2.0, 3.0]), 6.0)
        assert np.allclose(out.counts, [1.0, 2.0, 3.0])

    def test_zero_target_zeroes_everything(self):
        out = project_valid(table([0], [3], [4.0, -2.0, 9.0]), 0.0)
        assert np.array_equal(out.counts, np.zeros(3))

    def test_negative_target_rejected(self):
        with pytest.raises(ValueError):
            project_valid(table([0], [2], [1.0, 1.0]), -1.0)

    @given(
        values=st.lists(st.floats(-50.0, 50.0), min_size=2, max_size=8),
        target=st.floats(0.0, 100.0),
    )
    @settings(max_examples=200)
    def test_feasible_and_matches_sort_oracle(self, values, target):
        out = project_valid(table([0], [len(values)], values), target)
        assert (out.counts >= 0.0).all()
        assert abs(out.counts.sum() - target) <= 1e-9 * max(target, 1.0)
        assert np.allclose(out.counts, oracle_simplex_projection(values, target), atol=1e-9)

    def test_no_closer_feasible_point_exists(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            values = rng.normal(0.0, 5.0, size=5)
            target = float(rng.uniform(0.5, 20.0))
            out = project_valid(table([0], [5], values), target).counts
            best = float(np.linalg.norm(out - values))
            for _ in range(40):
                feasible = rng.dirichlet(np.ones(5)) * target
                assert best <= np.linalg.norm(feasible - values) + 1e-9


class TestSharedGroups:
    def test_pairwise_overlap_found(self):
        specs = [MarginalSpec((0, 1), (2, 3)), MarginalSpec((0, 2), (2, 4))]
        groups = shared_groups(specs, [1.0, 2.0])
        assert len(groups) == 1
        assert groups[0].attrs == (0,)
        assert groups[0].members == [(0, 1.0, 3), (1, 2.0, 4)]

    def test_three_tables_form_one_group(self):
        specs = [
            MarginalSpec((0, 1), (2, 2)),
            MarginalSpec((0, 2), (2, 2)),
            MarginalSpec((0, 3), (2, 2)),
        ]
        groups = shared_groups(specs, [1.0, 1.0, 1.0])
        assert len(groups) == 1
        assert [m[0] for m in groups[0].members] == [0, 1, 2]

    def test_disjoint_tables_share_nothing(self):
        specs = [MarginalSpec((0, 1), (2, 2)), MarginalSpec((2, 3), (2, 2))]
        assert shared_groups(specs, [1.0, 1.0]) == []

    def test_larger_overlaps_processed_first(self):
        specs = [
            MarginalSpec((0, 1, 2), (2, 2, 2)),
            MarginalSpec((0, 1, 3), (2, 2, 2)),
            MarginalSpec((1, 4), (2, 2)),
        ]
        groups = shared_groups(specs, [1.0, 1.0, 1.0])
        assert [g.attrs for g in groups] == [(0, 1), (1,)]
        # the singleton group spans all three tables
        assert [m[0] for m in groups[1].members] == [0, 1, 2]


class TestWeightedAverage:
    def test_equal_members_average_evenly(self):
        t1 = table([0, 1], [2, 2], [10.0, 10.0, 20.0, 20.0])
        t2 = table([0, 2], [2, 2], [5.0, 15.0, 25.0, 15.0])
        group = SharedAttributeGroup((0,), [(0, 1.0, 2), (1, 1.0, 2)])
        weighted_average(group, [t1, t2])
        expected = 0.5 * np.array([20.0, 40.0]) + 0.5 * np.array([20.0, 40.0])
        assert np.allclose(project_onto(t1, (0,)).counts, expected)
        assert np.allclose(project_onto(t2, (0,)).counts, expected)

    def test_budget_and_fanout_weighting(self):
        # one member observes the shared attribute directly, the other
        # through four-cell fibers; same budget means weights 0.8 and 0.2
        one_way = table([0], [3], [12.0, 30.0, 18.0])
        two_way = table(
            [0, 1], [3, 4], np.arange(12, dtype=float) + 1.0
        )
        est_two = project_onto(two_way, (0,)).counts.copy()
        group = SharedAttributeGroup((0,), [(0, 1.0, 1), (1, 1.0, 4)])
        weighted_average(group, [one_way, two_way])
        expected = 0.8 * np.array([12.0, 30.0, 18.0]) + 0.2 * est_two
        assert np.allclose(one_way.counts, expected)
        assert np.allclose(project_onto(two_way, (0,)).counts, expected)

    def test_fiber_adjustment_is_uniform(self):
        original = np.arange(12, dtype=float)
        two_way = table([0, 1], [3, 4], original.copy())
        one_way = table([0], [3], [40.0, 4.0, 22.0])
        group = SharedAttributeGroup((0,), [(0, 1.0, 1), (1, 1.0, 4)])
        weighted_average(group, [one_way, two_way])
        delta = (two_way.counts - original).reshape(3, 4)
        for row in delta:
            assert np.allclose(row, row[0])

    def test_common_total_is_preserved(self):
        t1 = table([0, 1], [2, 2], [25.0, 25.0, 25.0, 25.0])
        t2 = table([0, 2], [2, 2], [10.0, 40.0, 30.0, 20.0])
        group = SharedAttributeGroup((0,), [(0, 2.0, 2), (1, 0.5, 2)])
        weighted_average(group, [t1, t2])
        assert np.isclose(t1.total(), 100.0)
        assert np.isclose(t2.total(), 100.0)

    def test_weights_minimize_averaging_variance(self):
        # the estimator variance is sum(w_i^2 * g_i / rho_i); the formula
        # weights are its stationary point under sum(w) = 1
        rng = np.random.default_rng(11)
        for _ in range(30):
            rhos = rng.uniform(0.05, 3.0, size=4)
            gs = rng.integers(1, 9, size=4).astype(float)
            raw = rhos / gs
            w = raw / raw.sum()
            base = float((w * w * gs / rhos).sum())
            for _ in range(20):
                bump = w + rng.normal(0.0, 0.01, size=4)
                bump = np.abs(bump) / np.abs(bump).sum()
                if np.allclose(bump, w):
                    continue
                assert (bump * bump * gs / rhos).sum() > base


class TestMakeConsistent:
    def test_single_valid_table_unchanged(self):
        t = table([0, 1], [2, 2], [10.0, 20.0, 30.0, 40.0])
        (out,) = make_consistent([t], [1.0])
        assert np.allclose(out.counts, t.counts)

    def test_inputs_not_mutated(self):
        t1 = table([0, 1], [2, 2], [30.0, 10.0, 20.0, 40.0])
        t2 = table([0, 2], [2, 2], [15.0, 35.0, 25.0, 25.0])
        before = t1.counts.copy()
        make_consistent([t1, t2], [1.0, 1.0])
        assert np.array_equal(t1.counts, before)

    def test_postcondition_agreement_and_validity(self):
        rng = np.random.default_rng(5)
        t1 = table([0, 1], [2, 3], rng.uniform(0.0, 60.0, size=6))
        t2 = table([0, 2], [2, 2], rng.uniform(0.0, 60.0, size=4))
        t3 = table([1, 2], [3, 2], rng.uniform(0.0, 60.0, size=6))
        out = make_consistent([t1, t2, t3], [0.4, 0.4, 0.2])
        total = out[0].total()
        tol = 1e-6 * total
        for t in out:
            assert (t.counts >= 0.0).all()
            assert abs(t.total() - total) <= tol
        for attrs, pair in [((0,), (0, 1)), ((1,), (0, 2)), ((2,), (1, 2))]:
            a = project_onto(out[pair[0]], attrs).counts
            b = project_onto(out[pair[1]], attrs).counts
            assert np.abs(a - b).max() <= tol

    def test_disjoint_tables_only_get_projected(self):
        # no shared attributes, so the only effect is scaling both tables
        # onto the precision-weighted common total
        t1 = table([0], [2], [60.0, 60.0])
        t2 = table([1], [3], [20.0, 30.0, 40.0])
        out = make_consistent([t1, t2], [1.0, 2.0])
        w1 = 1.0 / 2
        w2 = 2.0 / 3
        target = (w1 * 120.0 + w2 * 90.0) / (w1 + w2)
        assert np.isclose(out[0].total(), target)
        assert np.isclose(out[1].total(), target)

    def test_idempotent_at_tolerance(self):
        rng = np.random.default_rng(9)
        t1 = table([0, 1], [3, 3], rng.uniform(0.0, 40.0, size=9))
        t2 = table([1, 2], [3, 2], rng.uniform(0.0, 40.0, size=6))
        first = make_consistent([t1, t2], [1.0, 1.0])
        second = make_consistent(first, [1.0, 1.0])
        tol = 1e-6 * first[0].total()
        for a, b in zip(first, second):
            assert np.abs(a.counts - b.counts).max() <= tol

    def test_deterministic(self):
        t1 = table([0, 1], [2, 2], [9.0, 1.0, 4.0, 6.0])
        t2 = table([0, 2], [2, 2], [3.0, 7.0, 5.0, 5.0])
        a = make_consistent([t1, t2], [0.7, 0.3])
        b = make_consistent([t1, t2], [0.7, 0.3])
        for x, y in zip(a, b):
            assert np.array_equal(x.counts, y.counts)
