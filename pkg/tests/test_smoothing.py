import numpy as np
import pytest

from kernelinr.engine.ntk import dft2_magnitude, low_freq_energy_fraction
from kernelinr.engine.smoothing import (
    brute_force_order,
    cosine_objective,
    grid_cost,
    layer_orders,
    layer_path_cost,
    mos_order,
    path_cost,
    smooth_matrix,
    smoothness_energy,
    smoothness_report,
    uos_order,
)
from kernelinr.engine.weights import apply_permutation, layer_slots
from kernelinr.exceptions import InvalidInputError, RefusalError
from kernelinr.models.analysis import OrderingConfig
from kernelinr.models.enums import DistanceMetric, OrderingStrategy, Refinement, StartRule
from kernelinr.models.weights import WeightBundle
from tests.conftest import make_bundle, make_scalar_bundle

SCALARS = np.array([0.0, 10.0, 1.0, 11.0])


class TestSmoothnessEnergy:
    def test_identical_kernels_give_zero(self):
        layer = np.ones((3, 2, 3, 3), dtype=np.float32)
        assert smoothness_energy(WeightBundle(layers=[layer, layer])) == 0.0

    def test_filter_direction_difference(self):
        assert smoothness_energy(make_scalar_bundle([0.0, 3.0])) == pytest.approx(3.0)

    def test_channel_direction_difference(self):
        assert smoothness_energy(make_scalar_bundle([1.0, -1.0], filters=1)) == pytest.approx(2.0)

    def test_cross_layer_term_only_for_equal_shapes(self):
        a = np.zeros((1, 1, 1, 1), dtype=np.float32)
        b = np.full((1, 1, 1, 1), 4.0, dtype=np.float32)
        assert smoothness_energy(WeightBundle(layers=[a, b])) == pytest.approx(4.0)
        c = np.full((1, 1, 3, 3), 4.0, dtype=np.float32)
        assert smoothness_energy(WeightBundle(layers=[a, c])) == 0.0

    def test_not_scale_invariant(self, bundle):
        scaled = WeightBundle(layers=[layer * 2 for layer in bundle.layers])
        assert smoothness_energy(scaled) == pytest.approx(2 * smoothness_energy(bundle), rel=1e-6)


class TestCosineObjective:
    def test_identical_kernels_give_zero(self):
        layer = np.ones((2, 2, 3, 3), dtype=np.float32)
        assert cosine_objective(WeightBundle(layers=[layer])) == pytest.approx(0.0, abs=1e-12)

    def test_opposite_kernels(self):
        assert cosine_objective(make_scalar_bundle([1.0, -1.0])) == pytest.approx(2.0)

    def test_orthogonal_kernels(self):
        layer = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32).reshape(2, 1, 1, 2)
        # 1x2 kernels are not valid bundle kernels but the metric only needs flat vectors
        assert cosine_objective(WeightBundle(layers=[layer])) == pytest.approx(1.0)

    def test_zero_kernel_pairs_are_skipped(self):
        assert cosine_objective(make_scalar_bundle([0.0, 5.0, 5.0])) == pytest.approx(0.0)

    def test_positive_scaling_of_one_kernel_leaves_objective_unchanged(self, bundle):
        layers = [layer.copy() for layer in bundle.layers]
        layers[0][1, 2] *= 7.5
        scaled = WeightBundle(layers=layers)
        assert cosine_objective(scaled) == pytest.approx(cosine_objective(bundle), rel=1e-6)


class TestPathCost:
    def test_single_kernel(self):
        assert path_cost([np.ones((3, 3))], [0]) == 0.0

    def test_identity_order(self):
        assert path_cost(SCALARS, [0, 1, 2, 3]) == pytest.approx(29.0)

    def test_reordered(self):
        assert path_cost(SCALARS, [0, 2, 1, 3]) == pytest.approx(11.0)

    def test_non_permutation_rejected(self):
        with pytest.raises(InvalidInputError):
            path_cost(SCALARS, [0, 0, 1, 2])

    def test_layer_path_cost_uses_stored_order(self):
        bundle = make_scalar_bundle(list(SCALARS))
        assert layer_path_cost(bundle.layers[0]) == pytest.approx(29.0)


class TestUosOrder:
    def test_scalar_example(self):
        order = uos_order(SCALARS)
        assert order.tolist() == [0, 2, 1, 3]
        assert path_cost(SCALARS, order) == pytest.approx(11.0)

    def test_single_kernel(self):
        assert uos_order(np.array([4.0])).tolist() == [0]

    def test_sorted_scalars_keep_identity(self):
        values = np.arange(7, dtype=float) ** 1.5
        assert uos_order(values).tolist() == list(range(7))

    def test_ties_go_to_lowest_index(self):
        assert uos_order(np.array([0.0, 1.0, -1.0])).tolist() == [0, 1, 2]

    def test_max_norm_start(self):
        config = OrderingConfig(start_rule=StartRule.MAX_NORM)
        order = uos_order(np.array([0.0, 5.0, 1.0, 9.0]), config)
        assert order[0] == 3

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            uos_order([np.zeros((3, 3)), np.zeros((1, 1))])

    def test_never_worse_than_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            kernels = rng.standard_normal((int(rng.integers(1, 9)), 9))
            n = kernels.shape[0]
            assert path_cost(kernels, uos_order(kernels)) <= path_cost(kernels, np.arange(n)) + 1e-9

    def test_two_opt_never_worse_than_greedy(self):
        rng = np.random.default_rng(1)
        refine = OrderingConfig(refinement=Refinement.TWO_OPT)
        for _ in range(20):
            kernels = rng.standard_normal((12, 9))
            greedy = path_cost(kernels, uos_order(kernels))
            assert path_cost(kernels, uos_order(kernels, refine)) <= greedy + 1e-9

    def test_deterministic(self):
        kernels = np.random.default_rng(2).standard_normal((30, 9))
        assert np.array_equal(uos_order(kernels), uos_order(kernels))


class TestBruteForceOrder:
    def test_scalar_example(self):
        assert path_cost(SCALARS, brute_force_order(SCALARS)) == pytest.approx(11.0)

    def test_two_kernels_tie_to_identity(self):
        assert brute_force_order(np.array([3.0, 8.0])).tolist() == [0, 1]

    def test_sorted_scalars_are_optimal_in_identity_order(self):
        for n in range(1, 7):
            assert brute_force_order(np.arange(n, dtype=float)).tolist() == list(range(n))

    def test_refuses_large_instances(self):
        with pytest.raises(RefusalError):
            brute_force_order(np.arange(10, dtype=float))

    def test_lower_bounds_greedy(self):
        rng = np.random.default_rng(3)
        ratios = []
        for _ in range(50):
            kernels = rng.standard_normal((int(rng.integers(2, 9)), 9))
            best = path_cost(kernels, brute_force_order(kernels))
            greedy = path_cost(kernels, uos_order(kernels))
            assert best <= greedy + 1e-9
            ratios.append(greedy / best if best > 0 else 1.0)
        assert np.mean(ratios) >= 1.0

    def test_grid_objective(self):
        order = brute_force_order(np.array([0.0, 10.0, 1.0, 11.0]), objective="grid_cost", rows=2, cols=2)
        assert grid_cost(SCALARS, order, 2, 2) == pytest.approx(22.0)

    def test_unknown_objective(self):
        with pytest.raises(InvalidInputError):
            brute_force_order(SCALARS, objective="area")


class TestMosOrder:
    def test_single_row_matches_uos(self):
        kernels = np.random.default_rng(4).standard_normal((6, 9))
        assert mos_order(kernels, 1, 6).tolist() == uos_order(kernels).tolist()

    def test_identical_kernels_give_identity(self):
        assert mos_order(np.ones((6, 9)), 2, 3).tolist() == list(range(6))

    def test_two_by_two_example(self):
        values = np.array([0.0, 1.0, 10.0, 11.0])
        order = mos_order(values, 2, 2)
        assert grid_cost(values, order, 2, 2) == pytest.approx(22.0)

    def test_never_worse_than_identity_on_grid(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            kernels = rng.standard_normal((12, 9))
            order = mos_order(kernels, 3, 4)
            assert grid_cost(kernels, order, 3, 4) <= grid_cost(kernels, np.arange(12), 3, 4) + 1e-9

    def test_grid_size_mismatch(self):
        with pytest.raises(InvalidInputError):
            mos_order(np.ones((5, 9)), 2, 3)

    def test_cosine_metric_never_worse_than_identity(self):
        kernels = np.random.default_rng(6).standard_normal((12, 9))
        order = mos_order(kernels, 3, 4, metric=DistanceMetric.COSINE)
        identity = grid_cost(kernels, np.arange(12), 3, 4, DistanceMetric.COSINE)
        assert grid_cost(kernels, order, 3, 4, DistanceMetric.COSINE) <= identity + 1e-9


class TestLayerOrders:
    @pytest.mark.parametrize(
        "strategy",
        [OrderingStrategy.IDENTITY, OrderingStrategy.UOS, OrderingStrategy.MOS, OrderingStrategy.COSINE_BASELINE],
    )
    def test_table_fits_bundle(self, bundle, strategy):
        table = layer_orders(bundle, OrderingConfig(strategy=strategy))
        assert table.slot_counts == bundle.slot_counts

    def test_identity_strategy(self, bundle):
        assert layer_orders(bundle, OrderingConfig(strategy=OrderingStrategy.IDENTITY)).is_identity

    def test_uos_table_never_increases_path_cost(self):
        bundle = make_bundle([(8, 8, 3), (4, 8, 3)], seed=9)
        permuted = apply_permutation(bundle, layer_orders(bundle, OrderingConfig()))
        for before, after in zip(bundle.layers, permuted.layers):
            assert layer_path_cost(after) <= layer_path_cost(before) + 1e-6

    def test_uos_table_reproduces_visit_order(self):
        bundle = make_bundle([(4, 2, 3)], seed=1)
        permuted = apply_permutation(bundle, layer_orders(bundle, OrderingConfig()))
        slots = layer_slots(bundle.layers[0])
        order = uos_order(slots)
        assert np.array_equal(layer_slots(permuted.layers[0]), slots[order])


class TestSmoothMatrix:
    def test_two_by_two_example(self):
        smoothed, order = smooth_matrix([[0.0, 10.0], [1.0, 11.0]])
        assert order.tolist() == [0, 2, 1, 3]
        assert smoothed.tolist() == [[0.0, 1.0], [10.0, 11.0]]

    def test_constant_matrix_unchanged(self):
        smoothed, order = smooth_matrix(np.full((3, 3), 2.0))
        assert order.tolist() == list(range(9))
        assert np.array_equal(smoothed, np.full((3, 3), 2.0))

    def test_gaussian_matrix_gains_low_frequency_energy(self):
        matrix = np.random.default_rng(0).standard_normal((16, 16))
        smoothed, _ = smooth_matrix(matrix)
        before = low_freq_energy_fraction(dft2_magnitude(matrix), 0.25)
        after = low_freq_energy_fraction(dft2_magnitude(smoothed), 0.25)
        assert after > before

    def test_values_are_a_rearrangement(self):
        matrix = np.random.default_rng(1).standard_normal((5, 5))
        smoothed, _ = smooth_matrix(matrix)
        assert np.array_equal(np.sort(smoothed.ravel()), np.sort(matrix.ravel()))

    def test_non_square_rejected(self):
        with pytest.raises(InvalidInputError):
            smooth_matrix(np.zeros((2, 3)))


class TestSmoothnessReport:
    def test_report_fields(self, bundle):
        report = smoothness_report(bundle)
        assert report.euclidean_energy == pytest.approx(smoothness_energy(bundle))
        assert len(report.per_layer_path_cost) == bundle.layer_count
        assert all(cost >= 0 for cost in report.per_layer_path_cost)
