import itertools
import logging

import numpy as np

from kernelinr.engine.weights import layer_slots, table_from_orders
from kernelinr.exceptions import InvalidInputError, RefusalError
from kernelinr.models.analysis import OrderingConfig, SmoothnessReport
from kernelinr.models.enums import DistanceMetric, OrderingStrategy, Refinement, StartRule
from kernelinr.models.weights import PermutationTable, WeightBundle

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 9
_PAIRWISE_CHUNK = 256
_IMPROVEMENT_EPS = 1e-12


def _as_vectors(kernels) -> np.ndarray:
    """Stack equal-shape kernels into an (n, k) float64 matrix."""
    if isinstance(kernels, np.ndarray):
        arr = kernels.astype(np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        return arr.reshape(arr.shape[0], -1)
    items = [np.asarray(k, dtype=np.float64) for k in kernels]
    if not items:
        raise InvalidInputError("At least one kernel is required")
    shapes = {k.shape for k in items}
    if len(shapes) != 1:
        raise InvalidInputError(f"Kernels must share one shape, got {sorted(shapes)}")
    return np.stack([k.reshape(-1) for k in items])


def _check_order(order, n: int) -> np.ndarray:
    order = np.asarray(order, dtype=np.int64)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise InvalidInputError(f"Order is not a permutation of 0..{n - 1}")
    return order


def _cosine_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise 1 - cos(a, b); pairs involving a zero vector give 0."""
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    denom = na * nb
    dots = np.sum(a * b, axis=-1)
    out = np.zeros(np.broadcast(na, nb).shape)
    nz = denom > 0
    out[nz] = 1.0 - (dots / np.where(nz, denom, 1.0))[nz]
    return out


def _distance(a: np.ndarray, b: np.ndarray, metric: DistanceMetric) -> np.ndarray:
    if metric == DistanceMetric.COSINE:
        return _cosine_distance(a, b)
    return np.linalg.norm(a - b, axis=-1)


def pairwise_distances(vectors: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance matrix, built in row chunks."""
    n = vectors.shape[0]
    out = np.empty((n, n))
    for start in range(0, n, _PAIRWISE_CHUNK):
        block = vectors[start : start + _PAIRWISE_CHUNK]
        out[start : start + block.shape[0]] = np.linalg.norm(
            block[:, None, :] - vectors[None, :, :], axis=-1
        )
    return out


# ── Metrics ──────────────────────────────────────────────────────────


def path_cost(kernels, order) -> float:
    """Sum of Euclidean distances between consecutive kernels along `order`."""
    vectors = _as_vectors(kernels)
    order = _check_order(order, vectors.shape[0])
    if order.size < 2:
        return 0.0
    path = vectors[order]
    return float(np.linalg.norm(path[1:] - path[:-1], axis=-1).sum())


def grid_cost(
    kernels,
    order,
    rows: int,
    cols: int,
    metric: DistanceMetric = DistanceMetric.EUCLIDEAN,
) -> float:
    """Sum of up- and left-neighbour distances of kernels placed row-major on a grid."""
    vectors = _as_vectors(kernels)
    if rows * cols != vectors.shape[0]:
        raise InvalidInputError(f"{vectors.shape[0]} kernels do not fill a {rows}x{cols} grid")
    order = _check_order(order, vectors.shape[0])
    grid = vectors[order].reshape(rows, cols, -1)
    total = 0.0
    if rows > 1:
        total += float(_distance(grid[1:], grid[:-1], metric).sum())
    if cols > 1:
        total += float(_distance(grid[:, 1:], grid[:, :-1], metric).sum())
    return total


def layer_path_cost(layer: np.ndarray) -> float:
    """Path cost of a layer's kernels in stored slot order."""
    slots = layer_slots(layer)
    if slots.shape[0] < 2:
        return 0.0
    return float(np.linalg.norm(slots[1:] - slots[:-1], axis=-1).sum())


def _layer_energy(layer: np.ndarray) -> float:
    w = layer.astype(np.float64)
    total = 0.0
    if w.shape[0] > 1:
        total += float(np.linalg.norm((w[1:] - w[:-1]).reshape(w.shape[0] - 1, w.shape[1], -1), axis=-1).sum())
    if w.shape[1] > 1:
        total += float(np.linalg.norm((w[:, 1:] - w[:, :-1]).reshape(w.shape[0], w.shape[1] - 1, -1), axis=-1).sum())
    return total


def smoothness_energy(bundle: WeightBundle) -> float:
    """Forward-difference Euclidean energy along layer, filter and channel directions.

    The layer direction only contributes between adjacent layers of identical shape.
    """
    total = sum(_layer_energy(layer) for layer in bundle.layers)
    for prev, nxt in zip(bundle.layers[:-1], bundle.layers[1:]):
        if prev.shape == nxt.shape:
            diff = (nxt.astype(np.float64) - prev.astype(np.float64)).reshape(-1, prev.shape[2] * prev.shape[3])
            total += float(np.linalg.norm(diff, axis=-1).sum())
    return total


def layer_smoothness_energy(layer: np.ndarray) -> float:
    """In-layer (filter and channel direction) part of smoothness_energy."""
    return _layer_energy(layer)


def cosine_objective(bundle: WeightBundle) -> float:
    """Sum of cosine distances between filter- and channel-adjacent kernels."""
    total = 0.0
    for layer in bundle.layers:
        f, c = layer.shape[:2]
        grid = layer.astype(np.float64).reshape(f, c, -1)
        if f > 1:
            total += float(_cosine_distance(grid[1:], grid[:-1]).sum())
        if c > 1:
            total += float(_cosine_distance(grid[:, 1:], grid[:, :-1]).sum())
    return total


def smoothness_report(bundle: WeightBundle) -> SmoothnessReport:
    return SmoothnessReport(
        euclidean_energy=smoothness_energy(bundle),
        cosine_objective=cosine_objective(bundle),
        per_layer_path_cost=[layer_path_cost(layer) for layer in bundle.layers],
    )


# ── Orderings ────────────────────────────────────────────────────────


def _start_slot(vectors: np.ndarray, rule: StartRule) -> int:
    if rule == StartRule.MAX_NORM:
        return int(np.argmax(np.linalg.norm(vectors, axis=-1)))
    return 0


def _greedy_path(vectors: np.ndarray, start: int) -> np.ndarray:
    # np.argmin returns the first minimum, i.e. the lowest original index on ties.
    n = vectors.shape[0]
    order = np.empty(n, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    current = start
    for pos in range(n):
        order[pos] = current
        visited[current] = True
        if pos == n - 1:
            break
        dist = np.linalg.norm(vectors - vectors[current], axis=-1)
        dist[visited] = np.inf
        current = int(np.argmin(dist))
    return order


def two_opt(order: np.ndarray, dist: np.ndarray, max_passes: int) -> np.ndarray:
    """First-improvement 2-opt on an open path; stops when a pass finds no gain."""
    path = order.copy()
    n = path.size
    for _ in range(max_passes):
        improved = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                if i == 0 and j == n - 1:
                    continue
                before = (dist[path[i - 1], path[i]] if i > 0 else 0.0) + (
                    dist[path[j], path[j + 1]] if j < n - 1 else 0.0
                )
                after = (dist[path[i - 1], path[j]] if i > 0 else 0.0) + (
                    dist[path[i], path[j + 1]] if j < n - 1 else 0.0
                )
                if after < before - _IMPROVEMENT_EPS:
                    path[i : j + 1] = path[i : j + 1][::-1]
                    improved = True
        if not improved:
            break
    return path


def uos_order(kernels, config: OrderingConfig | None = None) -> np.ndarray:
    """Greedy nearest-neighbour path over all kernels (unidirectional smoothing).

    Falls back to the identity order if the path would cost more than it.
    """
    config = config or OrderingConfig()
    vectors = _as_vectors(kernels)
    n = vectors.shape[0]
    order = _greedy_path(vectors, _start_slot(vectors, config.start_rule))
    if config.refinement == Refinement.TWO_OPT and n > 3:
        order = two_opt(order, pairwise_distances(vectors), config.max_passes)
    identity = np.arange(n)
    if path_cost(vectors, order) > path_cost(vectors, identity):
        logger.debug("Greedy path worse than identity for %d kernels; keeping identity", n)
        return identity
    return order


def _grid_fill(
    vectors: np.ndarray, rows: int, cols: int, start: int, metric: DistanceMetric
) -> np.ndarray:
    n = rows * cols
    order = np.empty(n, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    order[0] = start
    visited[start] = True
    for pos in range(1, n):
        r, c = divmod(pos, cols)
        cost = np.zeros(n)
        if r > 0:
            cost += _distance(vectors, vectors[order[pos - cols]], metric)
        if c > 0:
            cost += _distance(vectors, vectors[order[pos - 1]], metric)
        cost[visited] = np.inf
        chosen = int(np.argmin(cost))
        order[pos] = chosen
        visited[chosen] = True
    return order


def mos_order(
    kernels,
    rows: int,
    cols: int,
    config: OrderingConfig | None = None,
    metric: DistanceMetric = DistanceMetric.EUCLIDEAN,
) -> np.ndarray:
    """Greedy row-major grid fill minimising distance to placed up/left neighbours.

    With the cosine metric this is the neighbour-cosine baseline permutation.
    Falls back to identity if the fill scores worse than it.
    """
    config = config or OrderingConfig()
    vectors = _as_vectors(kernels)
    if rows * cols != vectors.shape[0]:
        raise InvalidInputError(f"{vectors.shape[0]} kernels do not fill a {rows}x{cols} grid")
    order = _grid_fill(vectors, rows, cols, _start_slot(vectors, config.start_rule), metric)
    identity = np.arange(rows * cols)
    if grid_cost(vectors, order, rows, cols, metric) > grid_cost(vectors, identity, rows, cols, metric):
        return identity
    return order


def brute_force_order(
    kernels,
    objective: str = "path_cost",
    rows: int | None = None,
    cols: int | None = None,
) -> np.ndarray:
    """Exact minimiser over all n! orders; first in lexicographic order among ties."""
    vectors = _as_vectors(kernels)
    n = vectors.shape[0]
    if n > BRUTE_FORCE_LIMIT:
        raise RefusalError(f"Refusing exhaustive search over {n}! orders (limit {BRUTE_FORCE_LIMIT})")
    orders = np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)
    dist = pairwise_distances(vectors)
    if objective == "path_cost":
        costs = dist[orders[:, :-1], orders[:, 1:]].sum(axis=1) if n > 1 else np.zeros(len(orders))
    elif objective == "grid_cost":
        if rows is None or cols is None or rows * cols != n:
            raise InvalidInputError("grid_cost objective needs rows * cols == n")
        grid = orders.reshape(-1, rows, cols)
        costs = np.zeros(len(orders))
        if rows > 1:
            costs += dist[grid[:, 1:, :], grid[:, :-1, :]].sum(axis=(1, 2))
        if cols > 1:
            costs += dist[grid[:, :, 1:], grid[:, :, :-1]].sum(axis=(1, 2))
    else:
        raise InvalidInputError(f"Unknown objective {objective!r}")
    # Reversed paths sum the same edges in another order; treat round-off as a tie.
    best = costs.min()
    tolerance = 1e-12 * max(1.0, abs(best))
    return orders[int(np.flatnonzero(costs <= best + tolerance)[0])]


def order_layer(layer: np.ndarray, config: OrderingConfig) -> np.ndarray:
    """Visiting order of a layer's (F * C) slots under the configured strategy."""
    f, c = layer.shape[:2]
    slots = layer_slots(layer)
    if config.strategy == OrderingStrategy.UOS:
        return uos_order(slots, config)
    if config.strategy == OrderingStrategy.MOS:
        return mos_order(slots, f, c, config)
    if config.strategy == OrderingStrategy.COSINE_BASELINE:
        return mos_order(slots, f, c, config, metric=DistanceMetric.COSINE)
    return np.arange(f * c)


def layer_orders(bundle: WeightBundle, config: OrderingConfig) -> PermutationTable:
    """Permutation table applying the configured strategy within every layer."""
    orders = []
    for idx, layer in enumerate(bundle.layers):
        order = order_layer(layer, config)
        orders.append(order)
        logger.debug("Ordered layer %d | strategy=%s | slots=%d", idx, config.strategy.value, order.size)
    return table_from_orders(orders)


def smooth_matrix(matrix, config: OrderingConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Reorder an n x n matrix's entries along a greedy path, refilled row-major."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise InvalidInputError(f"Expected a square matrix, got shape {matrix.shape}")
    values = matrix.reshape(-1, 1)
    order = uos_order(values, config)
    return values[order, 0].reshape(matrix.shape), order
