import numpy as np
import numpy.testing as nptest
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wassalign import (
    CompressionResult,
    ConsistencyError,
    RigidTransform,
    TransportPlan,
    WeightedPointSet,
    apply_transform,
    compose_sequence,
    cost_matrix,
    diameter_estimate,
    random_orthogonal,
)
from oracles import exhaustive_diameter, fold_apply, pairwise_sq_dists


def make_set(points, weights=None):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if weights is None:
        weights = np.ones(len(points))
    return WeightedPointSet(points, weights)


class TestWeightedPointSet:
    def test_total_weight_cached(self):
        ps = make_set([[0.0, 1.0], [2.0, 3.0]], [0.25, 0.5])
        assert ps.total_weight == pytest.approx(0.75, rel=1e-12)
        assert ps.n == 2 and ps.d == 2

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            make_set([[0.0], [1.0]], [1.0, -0.5])

    def test_zero_total_rejected(self):
        with pytest.raises(ValueError):
            make_set([[0.0], [1.0]], [0.0, 0.0])

    def test_zero_weight_points_allowed(self):
        ps = make_set([[0.0], [1.0]], [0.0, 2.0])
        assert ps.total_weight == 2.0

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            make_set([[np.nan], [1.0]])
        with pytest.raises(ValueError):
            make_set([[0.0], [1.0]], [1.0, np.inf])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            WeightedPointSet(np.zeros((3, 2)), np.ones(2))
        with pytest.raises(ValueError):
            WeightedPointSet(np.zeros(3), np.ones(3))

    def test_arrays_are_copied_and_frozen(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0]])
        ps = WeightedPointSet(pts, [1.0, 1.0])
        pts[0, 0] = 99.0
        assert ps.points[0, 0] == 0.0
        with pytest.raises(ValueError):
            ps.points[0, 0] = 1.0


class TestRigidTransform:
    def test_non_orthogonal_rejected(self):
        with pytest.raises(ValueError):
            RigidTransform(np.array([[1.0, 0.1], [0.0, 1.0]]), np.zeros(2))

    def test_reflection_accepted(self):
        t = RigidTransform(np.array([[1.0, 0.0], [0.0, -1.0]]), np.zeros(2))
        assert np.linalg.det(t.rotation) == pytest.approx(-1.0)

    def test_one_dimensional_sign_transform(self):
        t = RigidTransform(np.array([[-1.0]]), np.array([2.0]))
        nptest.assert_allclose(t.apply(np.array([[3.0]])), [[-1.0]])

    def test_identity(self):
        t = RigidTransform.identity(3)
        nptest.assert_array_equal(t.rotation, np.eye(3))
        nptest.assert_array_equal(t.translation, np.zeros(3))


class TestApplyTransform:
    def test_identity_keeps_points(self):
        ps = make_set([[1.0, 2.0], [3.0, 4.0]], [1.0, 2.0])
        out = apply_transform(RigidTransform.identity(2), ps)
        nptest.assert_allclose(out.points, ps.points)
        nptest.assert_allclose(out.weights, ps.weights)

    def test_quarter_turn(self):
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])
        out = apply_transform(RigidTransform(rot, np.zeros(2)), make_set([[1.0, 0.0]]))
        nptest.assert_allclose(out.points, [[0.0, 1.0]], atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            apply_transform(RigidTransform.identity(3), make_set([[1.0, 0.0]]))

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_pairwise_distances_preserved(self, seed):
        rng = np.random.default_rng(seed)
        ps = make_set(rng.normal(size=(10, 5)))
        t = RigidTransform(random_orthogonal(5, rng), rng.normal(size=5))
        before = pairwise_sq_dists(ps.points, ps.points)
        after = pairwise_sq_dists(apply_transform(t, ps).points, apply_transform(t, ps).points)
        nptest.assert_allclose(after, before, rtol=1e-9, atol=1e-9)


class TestComposeSequence:
    def test_single_step_is_returned(self):
        rng = np.random.default_rng(0)
        step = RigidTransform(random_orthogonal(3, rng), rng.normal(size=3))
        out = compose_sequence([step])
        nptest.assert_allclose(out.rotation, step.rotation)
        nptest.assert_allclose(out.translation, step.translation)

    def test_two_translations_add(self):
        s1 = RigidTransform(np.eye(2), np.array([1.0, 2.0]))
        s2 = RigidTransform(np.eye(2), np.array([10.0, 20.0]))
        out = compose_sequence([s1, s2])
        nptest.assert_allclose(out.rotation, np.eye(2))
        nptest.assert_allclose(out.translation, [11.0, 22.0])

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError):
            compose_sequence([])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            compose_sequence([RigidTransform.identity(2), RigidTransform.identity(3)])

    def test_three_random_steps_match_sequential_apply(self):
        rng = np.random.default_rng(7)
        steps = [
            RigidTransform(random_orthogonal(4, rng), rng.normal(size=4))
            for _ in range(3)
        ]
        points = rng.normal(size=(20, 4))
        composed = compose_sequence(steps).apply(points)
        sequential = fold_apply([(s.rotation, s.translation) for s in steps], points)
        nptest.assert_allclose(composed, sequential, atol=1e-9)

    @given(seed=st.integers(0, 2**32 - 1), h=st.integers(1, 6), d=st.integers(1, 5))
    @settings(max_examples=40, deadline=None)
    def test_compose_equals_fold(self, seed, h, d):
        rng = np.random.default_rng(seed)
        steps = [
            RigidTransform(random_orthogonal(d, rng), rng.normal(size=d))
            for _ in range(h)
        ]
        points = rng.normal(size=(8, d))
        composed = compose_sequence(steps).apply(points)
        sequential = fold_apply([(s.rotation, s.translation) for s in steps], points)
        nptest.assert_allclose(composed, sequential, atol=1e-9)


class TestCostMatrix:
    def test_single_identical_point(self):
        a = make_set([[1.0, 1.0]])
        nptest.assert_allclose(cost_matrix(a, a), [[0.0]])

    def test_three_four_five(self):
        a = make_set([[0.0, 0.0]])
        b = make_set([[3.0, 4.0]])
        nptest.assert_allclose(cost_matrix(a, b), [[25.0]])

    def test_matches_per_pair_recomputation(self):
        rng = np.random.default_rng(11)
        a = make_set(rng.normal(size=(4, 6)))
        b = make_set(rng.normal(size=(3, 6)))
        nptest.assert_allclose(
            cost_matrix(a, b), pairwise_sq_dists(a.points, b.points), rtol=1e-9, atol=1e-12
        )

    def test_swap_transposes(self):
        rng = np.random.default_rng(12)
        a = make_set(rng.normal(size=(5, 3)))
        b = make_set(rng.normal(size=(4, 3)))
        nptest.assert_allclose(cost_matrix(a, b), cost_matrix(b, a).T, rtol=1e-9, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cost_matrix(make_set([[0.0]]), make_set([[0.0, 1.0]]))


class TestDiameterEstimate:
    def test_single_point(self):
        assert diameter_estimate(make_set([[5.0, 5.0]])) == 0.0

    def test_anchor_is_an_extreme_point(self):
        ps = make_set([[0.0], [3.0], [10.0]])
        assert diameter_estimate(ps) == pytest.approx(10.0)

    def test_anchor_is_interior(self):
        ps = make_set([[3.0], [0.0], [10.0]])
        est = diameter_estimate(ps)
        true = exhaustive_diameter(ps.points)
        assert est == pytest.approx(7.0)
        assert true == pytest.approx(10.0)
        assert true / 2 <= est <= true

    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 12), d=st.integers(1, 4))
    @settings(max_examples=60, deadline=None)
    def test_within_factor_two_of_true_diameter(self, seed, n, d):
        rng = np.random.default_rng(seed)
        ps = make_set(rng.normal(size=(n, d)))
        est = diameter_estimate(ps)
        true = exhaustive_diameter(ps.points)
        assert true / 2 - 1e-12 <= est <= true + 1e-12


class TestTransportPlan:
    def plan(self, **overrides):
        kwargs = dict(
            sources=[0, 1],
            targets=[1, 0],
            flows=[1.0, 2.0],
            total_flow=3.0,
            cost=5.0,
            normalized_distance=5.0 / 3.0,
            n_source=2,
            n_target=2,
        )
        kwargs.update(overrides)
        return TransportPlan(**kwargs)

    def test_accessors(self):
        plan = self.plan()
        assert plan.nnz == 2
        assert list(plan.entries()) == [(0, 1, 1.0), (1, 0, 2.0)]
        nptest.assert_allclose(plan.as_dense(), [[0.0, 1.0], [2.0, 0.0]])
        nptest.assert_allclose(plan.row_sums(), [1.0, 2.0])
        nptest.assert_allclose(plan.col_sums(), [2.0, 1.0])

    def test_nonpositive_flow_rejected(self):
        with pytest.raises(ValueError):
            self.plan(flows=[1.0, 0.0])

    def test_index_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            self.plan(targets=[1, 2])

    def test_validate_feasible(self):
        a = make_set([[0.0], [1.0]], [1.0, 2.0])
        b = make_set([[0.0], [1.0]], [2.0, 1.0])
        self.plan().validate(a, b, fraction=1.0)

    def test_validate_catches_capacity_violation(self):
        a = make_set([[0.0], [1.0]], [1.0, 2.0])
        b = make_set([[0.0], [1.0]], [1.5, 1.5])
        with pytest.raises(ConsistencyError):
            self.plan().validate(a, b, fraction=1.0)

    def test_validate_catches_wrong_total(self):
        a = make_set([[0.0], [1.0]], [1.0, 2.0])
        b = make_set([[0.0], [1.0]], [2.0, 1.0])
        with pytest.raises(ConsistencyError):
            self.plan().validate(a, b, fraction=0.5)


class TestCompressionResult:
    def test_unknown_tag_rejected(self):
        centers = make_set([[0.0]])
        with pytest.raises(ValueError):
            CompressionResult(centers, [0], 0.0, "bogus", seed=0)

    def test_validate_radius_and_weights(self):
        original = make_set([[0.0], [1.0], [10.0]])
        centers = make_set([[0.5], [10.0]], [2.0, 1.0])
        good = CompressionResult(centers, [0, 0, 1], 0.5, "kcenter", seed=0)
        good.validate(original)
        bad_radius = CompressionResult(centers, [0, 0, 1], 0.4, "kcenter", seed=0)
        with pytest.raises(ConsistencyError):
            bad_radius.validate(original)
        light = make_set([[0.5], [10.0]], [1.0, 1.0])
        leaky = CompressionResult(light, [0, 0, 1], 0.5, "kcenter", seed=0)
        with pytest.raises(ConsistencyError):
            leaky.validate(original)


def test_random_orthogonal_is_orthogonal():
    rng = np.random.default_rng(3)
    for d in (1, 2, 5, 17):
        q = random_orthogonal(d, rng)
        nptest.assert_allclose(q.T @ q, np.eye(d), atol=1e-12)
        assert abs(abs(np.linalg.det(q)) - 1.0) < 1e-9
