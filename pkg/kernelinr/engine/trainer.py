"""Reconstruction training: fit the MLP to (permuted) kernels, then reconstruct."""

from __future__ import annotations

import csv
import logging
import time
from pathlib import Path

import numpy as np

from kernelinr.engine.encoders import build_encoder, encode_coords, normalize_coords
from kernelinr.engine.mlp import adam_init, adam_step, backward_mse, forward, mlp_init
from kernelinr.engine.weights import (
    apply_permutation,
    bundle_meta,
    coordinate_array_for_shapes,
    invert_permutation,
)
from kernelinr.exceptions import InvalidInputError, NumericError
from kernelinr.models.enums import EncoderKind, SigmaMode
from kernelinr.models.inr import InrCheckpoint, LayerStats
from kernelinr.models.training import EvalRecord, SigmaSweepRecord, TrainConfig, TrainHistory
from kernelinr.models.weights import BundleMeta, PermutationTable, WeightBundle
from kernelinr.storage.codec import encode_bundle, encode_table

logger = logging.getLogger(__name__)

OVERHEAD_WARN_FRACTION = 0.05


def _grid_dims(shapes) -> tuple[int, int, int]:
    return (len(shapes), max(s[0] for s in shapes), max(s[1] for s in shapes))


def _encoded_inputs(checkpoint_encoder, shapes) -> np.ndarray:
    coords = coordinate_array_for_shapes(shapes)
    norm = normalize_coords(coords, _grid_dims(shapes))
    return encode_coords(checkpoint_encoder, norm, coords[:, 0]).astype(np.float32)


def _layer_stats(bundle: WeightBundle) -> list[LayerStats]:
    stats = []
    for layer in bundle.layers:
        values = layer.astype(np.float64)
        std = float(values.std())
        stats.append(LayerStats(mean=float(values.mean()), std=std if std > 0 else 1.0))
    return stats


def _targets(bundle: WeightBundle, stats: list[LayerStats], kmax: int) -> np.ndarray:
    """Z-scored kernels centred in kmax x kmax patches, one row per slot."""
    rows = []
    for layer, s in zip(bundle.layers, stats):
        f, c, k, _ = layer.shape
        patch = np.zeros((f * c, kmax, kmax), dtype=np.float32)
        off = (kmax - k) // 2
        patch[:, off : off + k, off : off + k] = (layer.reshape(f * c, k, k) - s.mean) / s.std
        rows.append(patch.reshape(f * c, kmax * kmax))
    return np.concatenate(rows)


def _cosine_lr(config: TrainConfig, step: int) -> float:
    lr = config.optim.lr
    floor = config.optim.lr_floor
    progress = (step - 1) / max(1, config.steps - 1)
    return lr * (floor + (1.0 - floor) * 0.5 * (1.0 + np.cos(np.pi * progress)))


def train(
    bundle: WeightBundle,
    table: PermutationTable | None,
    config: TrainConfig,
) -> tuple[InrCheckpoint, TrainHistory]:
    """Fit the coordinate MLP to the kernels of apply_permutation(bundle, table).

    Batches are drawn without replacement from a fresh shuffle of all slots each
    epoch. The history's final_recon_mse is measured against the unpermuted bundle.
    """
    permuted = apply_permutation(bundle, table) if table is not None else bundle
    encoder = build_encoder(config, bundle)
    kmax = bundle.kernel_size
    stats = _layer_stats(permuted)
    X = _encoded_inputs(encoder, bundle.shapes)
    T = _targets(permuted, stats, kmax)
    n = X.shape[0]
    if config.batch > n:
        raise InvalidInputError(f"Batch size {config.batch} exceeds the {n} kernel slots")

    hidden = config.hidden
    model = mlp_init([encoder.output_dim, hidden, hidden, hidden, hidden, kmax * kmax], seed=config.seed)
    adam = adam_init(model, config.optim.lr, config.optim.beta1, config.optim.beta2, config.optim.eps)
    rng = np.random.default_rng(config.seed)

    logger.info(
        "Training | slots=%d | encoder=%s | hidden=%d | steps=%d | batch=%d",
        n,
        encoder.kind.value,
        hidden,
        config.steps,
        config.batch,
    )
    history = TrainHistory()
    start = time.perf_counter()
    order = rng.permutation(n)
    cursor = 0
    for step in range(1, config.steps + 1):
        if cursor + config.batch > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor : cursor + config.batch]
        cursor += config.batch

        loss, grads = backward_mse(model, X[idx], T[idx])
        if not np.isfinite(loss):
            raise NumericError(
                f"Non-finite training loss at step {step}",
                record={"step": step, "loss": loss, "lr": _cosine_lr(config, step)},
            )
        adam_step(model, adam, grads, lr=_cosine_lr(config, step))

        if step % config.eval_every == 0 or step == config.steps:
            full = float(np.mean(np.square(forward(model, X) - T, dtype=np.float64)))
            if not np.isfinite(full):
                raise NumericError(f"Non-finite evaluation loss at step {step}", record={"step": step})
            wall_ms = (time.perf_counter() - start) * 1000.0
            history.records.append(EvalRecord(step=step, recon_loss=full, wall_ms=wall_ms))
            logger.debug("Eval | step=%d | loss=%.6g", step, full)

    checkpoint = InrCheckpoint(model=model, encoder=encoder, layer_stats=stats, kernel_size=kmax, adam=adam, table=table)
    inverse = invert_permutation(table) if table is not None else None
    history.final_recon_mse = recon_mse(bundle, reconstruct(checkpoint, bundle_meta(bundle), inverse))
    logger.info("Training done | final_loss=%.6g | recon_mse=%.6g", history.final_loss, history.final_recon_mse)
    return checkpoint, history


def reconstruct(
    checkpoint: InrCheckpoint,
    meta: BundleMeta,
    inverse_table: PermutationTable | None = None,
) -> WeightBundle:
    """Predict every kernel, undo scaling and padding, and return slots to original order."""
    if checkpoint.kernel_size != meta.kernel_size:
        raise InvalidInputError(
            f"Checkpoint kernel size {checkpoint.kernel_size} does not match bundle ({meta.kernel_size})"
        )
    if checkpoint.model.output_dim != meta.kernel_size**2:
        raise InvalidInputError("Checkpoint output width does not match kernel size")
    if len(checkpoint.layer_stats) != len(meta.shapes):
        raise InvalidInputError(
            f"Checkpoint has stats for {len(checkpoint.layer_stats)} layers, bundle has {len(meta.shapes)}"
        )
    if checkpoint.encoder.per_layer and len(checkpoint.encoder.rff_maps) != len(meta.shapes):
        raise InvalidInputError("Per-layer encoder does not match bundle layer count")

    kmax = meta.kernel_size
    pred = forward(checkpoint.model, _encoded_inputs(checkpoint.encoder, meta.shapes))
    layers = []
    start = 0
    for (f, c, k, _), s in zip(meta.shapes, checkpoint.layer_stats):
        block = pred[start : start + f * c].reshape(f * c, kmax, kmax)
        start += f * c
        off = (kmax - k) // 2
        kernels = block[:, off : off + k, off : off + k].astype(np.float64) * s.std + s.mean
        layers.append(kernels.reshape(f, c, k, k))
    bundle = WeightBundle(
        layers=layers,
        model_name=meta.model_name,
        source_accuracy=meta.source_accuracy,
        residuals=list(meta.residuals),
    )
    if inverse_table is not None:
        bundle = apply_permutation(bundle, inverse_table)
    return bundle


def recon_mse(original: WeightBundle, reconstructed: WeightBundle) -> float:
    if original.shapes != reconstructed.shapes:
        raise InvalidInputError(f"Bundle shapes differ: {original.shapes} vs {reconstructed.shapes}")
    total = sum(
        float(np.sum(np.square(a.astype(np.float64) - b.astype(np.float64))))
        for a, b in zip(original.layers, reconstructed.layers)
    )
    return total / original.parameter_count


def compression_ratio(
    checkpoint: InrCheckpoint,
    bundle: WeightBundle,
    table: PermutationTable | None = None,
) -> float:
    """MLP parameter bytes (plus table bytes when non-identity) over kernel bytes."""
    numerator = 4 * checkpoint.model.parameter_count
    if table is not None and not table.is_identity:
        numerator += len(encode_table(table))
    return numerator / (4 * bundle.parameter_count)


def permutation_overhead(table: PermutationTable, bundle: WeightBundle) -> float:
    """Serialized table size as a fraction of the serialized bundle."""
    fraction = len(encode_table(table)) / len(encode_bundle(bundle))
    if fraction > OVERHEAD_WARN_FRACTION:
        logger.warning("Permutation table is %.1f%% of the bundle size", fraction * 100)
    return fraction


def sigma_sweep(
    bundle: WeightBundle,
    table: PermutationTable | None,
    config: TrainConfig,
    sigmas: list[float],
) -> list[SigmaSweepRecord]:
    """Reconstruction MSE for each global RFF bandwidth."""
    records = []
    for sigma in sigmas:
        run = config.model_copy(
            update={
                "rff": config.rff.model_copy(update={"sigma": sigma}),
                "encoder": EncoderKind.RFF,
                "sigma": config.sigma.model_copy(update={"mode": SigmaMode.GLOBAL_FIXED, "base": None}),
            }
        )
        _, history = train(bundle, table, run)
        records.append(
            SigmaSweepRecord(sigma=sigma, recon_mse=history.final_recon_mse, final_loss=history.final_loss)
        )
        logger.info("Sigma sweep | sigma=%.4g | recon_mse=%.6g", sigma, history.final_recon_mse)
    return records


def write_history_csv(history: TrainHistory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "recon_loss", "wall_ms"])
        for record in history.records:
            writer.writerow([record.step, repr(record.recon_loss), f"{record.wall_ms:.3f}"])
