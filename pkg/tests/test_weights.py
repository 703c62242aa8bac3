import numpy as np
import pytest

from kernelinr.engine.validator import validate_bundle, validate_table
from kernelinr.engine.weights import (
    apply_permutation,
    bundle_meta,
    coordinate_array,
    coordinate_grid,
    identity_table,
    invert_permutation,
    kernel_at,
    slot_index,
    table_from_orders,
)
from kernelinr.exceptions import InvalidInputError
from kernelinr.models.weights import KernelCoord, PermutationTable, WeightBundle
from tests.conftest import make_bundle, make_table


class TestCoordinateGrid:
    def test_single_layer_enumeration_order(self):
        bundle = make_bundle([(2, 2, 3)])
        assert coordinate_grid(bundle) == [(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1)]

    def test_one_kernel_per_layer(self):
        assert len(coordinate_grid(make_bundle([(1, 1, 3), (1, 1, 1)]))) == 2

    def test_three_square_layers(self):
        grid = coordinate_grid(make_bundle([(4, 4, 3)] * 3))
        assert len(grid) == 48
        assert len(set(grid)) == 48

    def test_array_matches_grid(self, bundle):
        arr = coordinate_array(bundle)
        assert arr.shape == (bundle.slot_count, 3)
        assert [tuple(row) for row in arr.tolist()] == [tuple(c) for c in coordinate_grid(bundle)]

    def test_slot_index_is_filter_major(self):
        assert slot_index(1, 2, channels=3) == 5


class TestKernelAt:
    def test_zero_kernel(self):
        layer = np.zeros((2, 1, 3, 3), dtype=np.float32)
        bundle = WeightBundle(layers=[layer])
        assert np.array_equal(kernel_at(bundle, KernelCoord(0, 0, 0)), np.zeros((3, 3)))

    def test_filter_out_of_range(self, bundle):
        with pytest.raises(IndexError):
            kernel_at(bundle, KernelCoord(0, bundle.shapes[0][0], 0))

    def test_layer_out_of_range(self, bundle):
        with pytest.raises(IndexError):
            kernel_at(bundle, KernelCoord(bundle.layer_count, 0, 0))

    def test_returned_kernel_is_read_only(self, bundle):
        kernel = kernel_at(bundle, KernelCoord(0, 0, 0))
        with pytest.raises(ValueError):
            kernel[0, 0] = 1.0


class TestApplyPermutation:
    def test_identity_table_leaves_bundle_unchanged(self, bundle):
        permuted = apply_permutation(bundle, identity_table(bundle))
        for a, b in zip(bundle.layers, permuted.layers):
            assert np.array_equal(a, b)

    def test_slot_zero_moves_to_slot_three(self):
        bundle = make_bundle([(2, 2, 3)])
        permuted = apply_permutation(bundle, make_table([3, 0, 1, 2]))
        assert np.array_equal(
            kernel_at(permuted, KernelCoord(0, 1, 1)),
            kernel_at(bundle, KernelCoord(0, 0, 0)),
        )

    def test_two_slot_swap(self):
        bundle = make_bundle([(2, 1, 1)])
        permuted = apply_permutation(bundle, make_table([1, 0]))
        assert permuted.layers[0][0, 0, 0, 0] == bundle.layers[0][1, 0, 0, 0]
        assert permuted.layers[0][1, 0, 0, 0] == bundle.layers[0][0, 0, 0, 0]

    def test_inverse_restores_bit_exactly(self, bundle):
        rng = np.random.default_rng(5)
        table = PermutationTable.from_perms(rng.permutation(n) for n in bundle.slot_counts)
        restored = apply_permutation(apply_permutation(bundle, table), invert_permutation(table))
        for a, b in zip(bundle.layers, restored.layers):
            assert a.tobytes() == b.tobytes()

    def test_carries_residuals_and_metadata(self, bundle):
        permuted = apply_permutation(bundle, identity_table(bundle))
        assert permuted.residuals == bundle.residuals
        assert permuted.model_name == bundle.model_name

    def test_slot_count_mismatch_rejected(self, bundle):
        with pytest.raises(InvalidInputError) as exc:
            apply_permutation(bundle, make_table([0, 1]))
        assert any(v.rule_id == "P02" for v in exc.value.violations)

    def test_input_bundle_not_mutated(self, bundle):
        before = [layer.copy() for layer in bundle.layers]
        apply_permutation(bundle, table_from_orders([np.arange(n)[::-1] for n in bundle.slot_counts]))
        for a, b in zip(before, bundle.layers):
            assert np.array_equal(a, b)


class TestInvertPermutation:
    def test_identity_is_self_inverse(self, bundle):
        table = identity_table(bundle)
        assert invert_permutation(table).is_identity

    def test_involution(self):
        table = make_table([2, 0, 1], [1, 0])
        twice = invert_permutation(invert_permutation(table))
        for a, b in zip(table.perms, twice.perms):
            assert np.array_equal(a, b)

    def test_three_cycle(self):
        inverse = invert_permutation(make_table([2, 0, 1]))
        assert inverse.perms[0].tolist() == [1, 2, 0]
        assert inverse.inverses[0].tolist() == [2, 0, 1]

    def test_non_bijection_rejected(self):
        with pytest.raises(InvalidInputError):
            invert_permutation(make_table([0, 0, 1]))


class TestTableFromOrders:
    def test_order_lists_the_source_slot_of_each_position(self):
        table = table_from_orders([np.array([2, 0, 1])])
        assert table.perms[0].tolist() == [1, 2, 0]
        assert table.inverses[0].tolist() == [2, 0, 1]

    def test_permuted_layer_follows_order(self):
        bundle = make_bundle([(3, 1, 1)])
        order = [2, 0, 1]
        permuted = apply_permutation(bundle, table_from_orders([np.array(order)]))
        assert permuted.layers[0].reshape(-1).tolist() == bundle.layers[0].reshape(-1)[order].tolist()


class TestBundleValidation:
    def test_valid_bundle(self, bundle):
        assert validate_bundle(bundle).valid

    def test_empty_bundle(self):
        result = validate_bundle(WeightBundle(layers=[]))
        assert [v.rule_id for v in result.violations] == ["W01"]

    def test_non_square_kernel(self):
        result = validate_bundle(WeightBundle(layers=[np.zeros((1, 1, 3, 1))]))
        assert any(v.rule_id == "W03" for v in result.violations)

    def test_five_by_five_kernel(self):
        result = validate_bundle(WeightBundle(layers=[np.zeros((1, 1, 5, 5))]))
        assert any(v.rule_id == "W03" for v in result.violations)

    def test_non_finite_entry(self):
        layer = np.zeros((1, 1, 3, 3))
        layer[0, 0, 1, 1] = np.nan
        result = validate_bundle(WeightBundle(layers=[layer]))
        assert [v.rule_id for v in result.violations] == ["W04"]
        assert result.violations[0].layer == 0

    def test_parameter_count(self, bundle):
        assert bundle.parameter_count == 2 * 3 * 9 + 4 * 2 * 9 + 3 * 4


class TestTableValidation:
    def test_holes_reported(self):
        result = validate_table(make_table([0, 3, 1]))
        assert not result.valid
        assert result.violations[0].rule_id == "P01"

    def test_layer_count_mismatch(self):
        result = validate_table(make_table([0, 1]), slot_counts=[2, 2])
        assert any(v.rule_id == "P02" for v in result.violations)


class TestBundleMeta:
    def test_meta_describes_bundle(self, bundle):
        meta = bundle_meta(bundle)
        assert meta.shapes == bundle.shapes
        assert meta.kernel_size == 3
        assert meta.slot_counts == bundle.slot_counts
        assert meta.residuals == bundle.residuals

    def test_meta_json_round_trip(self, bundle):
        meta = bundle_meta(bundle)
        again = type(meta).model_validate_json(meta.model_dump_json())
        assert again == meta
