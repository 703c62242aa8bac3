import numpy as np

from kernelinr.engine.validator import raise_if_invalid, validate_table
from kernelinr.models.weights import BundleMeta, KernelCoord, PermutationTable, WeightBundle


def slot_index(filter_idx: int, channel_idx: int, channels: int) -> int:
    """Filter-major flattening of a (filter, channel) position."""
    return filter_idx * channels + channel_idx


def kernel_at(bundle: WeightBundle, coord: KernelCoord) -> np.ndarray:
    """Return the kh x kw kernel at coord as a read-only view."""
    layer_idx, f, c = coord
    if not 0 <= layer_idx < bundle.layer_count:
        raise IndexError(f"layer {layer_idx} outside [0, {bundle.layer_count})")
    layer = bundle.layers[layer_idx]
    if not 0 <= f < layer.shape[0]:
        raise IndexError(f"filter {f} outside [0, {layer.shape[0]}) in layer {layer_idx}")
    if not 0 <= c < layer.shape[1]:
        raise IndexError(f"channel {c} outside [0, {layer.shape[1]}) in layer {layer_idx}")
    return layer[f, c]


def coordinate_grid(bundle: WeightBundle) -> list[KernelCoord]:
    """All kernel coordinates, layer-major then filter then channel."""
    return [KernelCoord(*(int(v) for v in row)) for row in coordinate_array(bundle)]


def coordinate_array(bundle: WeightBundle) -> np.ndarray:
    """coordinate_grid as an (n, 3) int64 array."""
    return coordinate_array_for_shapes(bundle.shapes)


def coordinate_array_for_shapes(shapes) -> np.ndarray:
    blocks = []
    for layer_idx, shape in enumerate(shapes):
        f, c = shape[:2]
        ff, cc = np.meshgrid(np.arange(f), np.arange(c), indexing="ij")
        block = np.empty((f * c, 3), dtype=np.int64)
        block[:, 0] = layer_idx
        block[:, 1] = ff.ravel()
        block[:, 2] = cc.ravel()
        blocks.append(block)
    if not blocks:
        return np.empty((0, 3), dtype=np.int64)
    return np.concatenate(blocks)


def layer_slots(layer: np.ndarray) -> np.ndarray:
    """View a [F, C, kh, kw] layer as (F * C, kh * kw) float64 slot vectors."""
    f, c, kh, kw = layer.shape
    return layer.reshape(f * c, kh * kw).astype(np.float64)


def identity_table(bundle: WeightBundle) -> PermutationTable:
    return PermutationTable.from_perms(np.arange(n) for n in bundle.slot_counts)


def table_from_orders(orders: list[np.ndarray]) -> PermutationTable:
    """Build a table from visiting orders; order[k] is the input slot placed at k."""
    perms = []
    for order in orders:
        order = np.asarray(order, dtype=np.int64)
        perm = np.empty_like(order)
        perm[order] = np.arange(order.size)
        perms.append(perm)
    return PermutationTable.from_perms(perms)


def apply_permutation(bundle: WeightBundle, table: PermutationTable) -> WeightBundle:
    """Output slot i of each layer holds input slot inverses[i]."""
    raise_if_invalid(validate_table(table, bundle.slot_counts), "Permutation table does not fit bundle")
    layers = []
    for layer, inv in zip(bundle.layers, table.inverses):
        f, c, kh, kw = layer.shape
        flat = layer.reshape(f * c, kh, kw)
        layers.append(flat[inv].reshape(f, c, kh, kw))
    return with_layers(bundle, layers)


def with_layers(bundle: WeightBundle, layers: list[np.ndarray]) -> WeightBundle:
    """New bundle with replaced kernels; name, accuracy and residual blobs carried over."""
    return WeightBundle(
        layers=layers,
        model_name=bundle.model_name,
        source_accuracy=bundle.source_accuracy,
        residuals=list(bundle.residuals),
    )


def invert_permutation(table: PermutationTable) -> PermutationTable:
    raise_if_invalid(validate_table(table), "Permutation table is not invertible")
    return PermutationTable(perms=list(table.inverses), inverses=list(table.perms))


def bundle_meta(bundle: WeightBundle) -> BundleMeta:
    return BundleMeta(
        model_name=bundle.model_name,
        source_accuracy=bundle.source_accuracy,
        shapes=bundle.shapes,
        residuals=list(bundle.residuals),
    )
