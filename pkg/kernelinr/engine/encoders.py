import logging

import numpy as np

from kernelinr.exceptions import InvalidInputError
from kernelinr.models.encoding import CoordinateEncoder, PeConfig, RffMap, SigmaSchedule
from kernelinr.models.enums import EncoderKind, SigmaMode
from kernelinr.models.training import TrainConfig
from kernelinr.models.weights import WeightBundle

logger = logging.getLogger(__name__)


def normalize_coords(coords, dims) -> np.ndarray:
    """Scale integer (layer, filter, channel) coordinates into [0, 1]^d.

    Each axis is divided by (dims[j] - 1); an axis of extent 1 maps to 0.
    """
    coords = np.asarray(coords, dtype=np.float64)
    dims = np.asarray(dims, dtype=np.float64)
    scale = dims - 1.0
    out = np.zeros_like(coords)
    nz = scale > 0
    out[..., nz] = coords[..., nz] / scale[nz]
    return out


def pe_encode(coords, config: PeConfig) -> np.ndarray:
    """sin/cos(b^l pi x) ladder; per scalar, levels run in order with sin before cos."""
    x = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("PE input must be finite")
    freqs = config.base ** np.arange(config.levels) * np.pi
    angles = x[:, :, None] * freqs  # (n, d, L)
    out = np.stack([np.sin(angles), np.cos(angles)], axis=-1)  # (n, d, L, 2)
    out = out.reshape(x.shape[0], -1)
    return out[0] if np.ndim(coords) == 1 else out


def rff_init(input_dim: int, features: int, sigma: float, seed: int) -> RffMap:
    if sigma <= 0:
        raise InvalidInputError(f"RFF sigma must be positive, got {sigma}")
    if features < 1 or input_dim < 1 or seed < 0:
        raise InvalidInputError(f"RFF needs features >= 1, input_dim >= 1 and seed >= 0, got {features}, {input_dim}, {seed}")
    rng = np.random.default_rng(seed)
    matrix = sigma * rng.standard_normal((features, input_dim))
    return RffMap(matrix=matrix, sigma=sigma, seed=seed)


def rff_encode(rff_map: RffMap, coords) -> np.ndarray:
    """[cos(pi B x), sin(pi B x)] for one coordinate or a batch of rows."""
    x = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if x.shape[1] != rff_map.input_dim:
        raise InvalidInputError(
            f"Coordinate dimension {x.shape[1]} does not match RFF input dimension {rff_map.input_dim}"
        )
    proj = np.pi * (x @ rff_map.matrix.astype(np.float64).T)
    out = np.concatenate([np.cos(proj), np.sin(proj)], axis=1)
    return out[0] if np.ndim(coords) == 1 else out


def gaussian_kernel_expect(sigma: float, dist) -> np.ndarray | float:
    """E[cos(pi b . delta)] for b ~ N(0, sigma^2 I), i.e. exp(-pi^2 sigma^2 d^2 / 2)."""
    value = np.exp(-(np.pi**2) * sigma**2 * np.square(dist) / 2.0)
    return float(value) if np.ndim(value) == 0 else value


def sigma_for_layer(schedule: SigmaSchedule, layer_param_count: int) -> float:
    if layer_param_count < 1:
        raise InvalidInputError(f"Layer parameter count must be >= 1, got {layer_param_count}")
    if schedule.mode == SigmaMode.GLOBAL_FIXED:
        return schedule.sigma_base
    sigma = schedule.sigma_base * np.sqrt(schedule.ref_params / layer_param_count)
    return float(np.clip(sigma, schedule.clamp_min, schedule.clamp_max))


def sigma_schedule(config: TrainConfig) -> SigmaSchedule:
    s = config.sigma
    return SigmaSchedule(
        mode=s.mode,
        sigma_base=s.base if s.base is not None else config.rff.sigma,
        ref_params=s.ref_params,
        clamp_min=s.clamp_min,
        clamp_max=s.clamp_max,
    )


def build_encoder(config: TrainConfig, bundle: WeightBundle) -> CoordinateEncoder:
    """Encoder for a training run; adaptive sigma gives one RFF map per bundle layer."""
    if config.encoder == EncoderKind.NONE:
        return CoordinateEncoder(kind=EncoderKind.NONE)
    if config.encoder == EncoderKind.PE:
        return CoordinateEncoder(kind=EncoderKind.PE, pe=config.pe)

    features = config.rff.features or max(1, config.hidden // 2)
    schedule = sigma_schedule(config)
    if schedule.mode == SigmaMode.GLOBAL_FIXED:
        maps = [rff_init(3, features, schedule.sigma_base, config.rff.seed)]
    else:
        maps = []
        for idx, layer in enumerate(bundle.layers):
            sigma = sigma_for_layer(schedule, int(layer.size))
            logger.debug("RFF sigma | layer=%d | params=%d | sigma=%.4g", idx, layer.size, sigma)
            maps.append(rff_init(3, features, sigma, config.rff.seed))
    return CoordinateEncoder(kind=EncoderKind.RFF, rff_maps=maps)


def encode_coords(encoder: CoordinateEncoder, coords: np.ndarray, layer_idx=None) -> np.ndarray:
    """Encode normalized (n, 3) coordinates.

    Per-layer RFF encoders pick each row's map from layer_idx (the integer layer of each row).
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if encoder.kind == EncoderKind.NONE:
        return coords.copy()
    if encoder.kind == EncoderKind.PE:
        return pe_encode(coords, encoder.pe)
    if not encoder.per_layer:
        return rff_encode(encoder.rff_maps[0], coords)
    if layer_idx is None:
        raise InvalidInputError("Per-layer RFF encoding needs the layer index of every row")
    layer_idx = np.asarray(layer_idx, dtype=np.int64)
    out = np.empty((coords.shape[0], encoder.output_dim))
    for idx, rff_map in enumerate(encoder.rff_maps):
        rows = layer_idx == idx
        if rows.any():
            out[rows] = rff_encode(rff_map, coords[rows])
    return out
