"""Bit-exact binary codecs for bundles, permutation tables, checkpoints and datasets.

All integers and floats are little-endian. Layouts:

  SBSW  u16 version, u16 layer_count, per layer (u16 F, u16 C, u8 kh, u8 kw),
        f32 kernel payload, u32 blob_count, per blob (u32 length, bytes),
        optional trailer "META" u16 name_len, name (utf-8), f64 accuracy (NaN = none)
  SBSP  u16 version, u16 layer_count, per layer (u32 slot_count, u32 perm[slot_count])
  SBSM  u16 version, u8 width_count, u32 widths, encoder block, stats block,
        u8 kernel_size, f32 parameters, u8 has_optimizer [, optimizer block],
        optional trailer "PERM" followed by an SBSP body (u16 layer_count, per layer ...)
  SBSD  u16 version, u32 n, u16 C, u16 H, u16 W, u16 classes, f32 pixels, u16 labels
"""

import math
import struct

import numpy as np

from kernelinr.engine.mlp import LAYER_COUNT
from kernelinr.engine.validator import raise_if_invalid, validate_bundle, validate_table
from kernelinr.exceptions import CorruptionError, FormatError
from kernelinr.models.encoding import CoordinateEncoder, PeConfig, RffMap
from kernelinr.models.enums import EncoderKind
from kernelinr.models.inr import AdamState, InrCheckpoint, InrModel, LayerStats
from kernelinr.models.network import LabeledDataset
from kernelinr.models.weights import PermutationTable, WeightBundle

BUNDLE_MAGIC = b"SBSW"
TABLE_MAGIC = b"SBSP"
MODEL_MAGIC = b"SBSM"
DATASET_MAGIC = b"SBSD"
META_MAGIC = b"META"
PERM_MAGIC = b"PERM"
VERSION = 1

_ENCODER_TAGS = {EncoderKind.PE: 0, EncoderKind.RFF: 1, EncoderKind.NONE: 2}
_TAG_ENCODERS = {tag: kind for kind, tag in _ENCODER_TAGS.items()}


class _Reader:
    def __init__(self, data: bytes, what: str):
        self._data = memoryview(data)
        self._pos = 0
        self._what = what

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def take(self, n: int) -> bytes:
        if n > self.remaining:
            raise CorruptionError(
                f"{self._what} truncated: wanted {n} bytes at offset {self._pos}, "
                f"{self.remaining} left"
            )
        chunk = bytes(self._data[self._pos : self._pos + n])
        self._pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        width = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(width * count), dtype=dtype).copy()

    def expect_header(self, magic: bytes) -> None:
        got = self.take(len(magic)) if self.remaining >= len(magic) else b""
        if got != magic:
            raise FormatError(f"{self._what}: bad magic {got!r}, expected {magic!r}")
        (version,) = self.unpack("<H")
        if version != VERSION:
            raise FormatError(f"{self._what}: unsupported version {version}")

    def finish(self) -> None:
        if self.remaining:
            raise CorruptionError(f"{self._what}: {self.remaining} trailing bytes")


def _f32(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


# ── Weight bundle ────────────────────────────────────────────────────


def encode_bundle(bundle: WeightBundle) -> bytes:
    raise_if_invalid(validate_bundle(bundle), "Cannot serialize bundle")
    parts = [BUNDLE_MAGIC, struct.pack("<HH", VERSION, bundle.layer_count)]
    for f, c, kh, kw in bundle.shapes:
        parts.append(struct.pack("<HHBB", f, c, kh, kw))
    parts.extend(_f32(layer) for layer in bundle.layers)
    parts.append(struct.pack("<I", len(bundle.residuals)))
    for blob in bundle.residuals:
        parts.append(struct.pack("<I", len(blob)))
        parts.append(bytes(blob))
    name = bundle.model_name.encode("utf-8")
    accuracy = math.nan if bundle.source_accuracy is None else bundle.source_accuracy
    parts.append(META_MAGIC + struct.pack("<H", len(name)) + name + struct.pack("<d", accuracy))
    return b"".join(parts)


def decode_bundle(data: bytes) -> WeightBundle:
    reader = _Reader(data, "weight bundle")
    reader.expect_header(BUNDLE_MAGIC)
    (layer_count,) = reader.unpack("<H")
    shapes = [reader.unpack("<HHBB") for _ in range(layer_count)]
    layers = [
        reader.array("<f4", f * c * kh * kw).reshape(f, c, kh, kw) for f, c, kh, kw in shapes
    ]
    (blob_count,) = reader.unpack("<I")
    residuals = []
    for _ in range(blob_count):
        (length,) = reader.unpack("<I")
        residuals.append(reader.take(length))

    model_name, accuracy = "", None
    if reader.remaining:
        if reader.take(min(4, reader.remaining)) != META_MAGIC:
            raise CorruptionError("weight bundle: unrecognised trailer")
        (name_len,) = reader.unpack("<H")
        model_name = reader.take(name_len).decode("utf-8")
        (raw_accuracy,) = reader.unpack("<d")
        accuracy = None if math.isnan(raw_accuracy) else raw_accuracy
    reader.finish()

    bundle = WeightBundle(
        layers=layers, model_name=model_name, source_accuracy=accuracy, residuals=residuals
    )
    raise_if_invalid(validate_bundle(bundle), "Loaded bundle is invalid")
    return bundle


# ── Permutation table ────────────────────────────────────────────────


def _table_body(table: PermutationTable) -> bytes:
    raise_if_invalid(validate_table(table), "Cannot serialize permutation table")
    parts = [struct.pack("<H", table.layer_count)]
    for perm in table.perms:
        parts.append(struct.pack("<I", perm.size))
        parts.append(np.ascontiguousarray(perm, dtype="<u4").tobytes())
    return b"".join(parts)


def _read_table_body(reader: _Reader) -> PermutationTable:
    (layer_count,) = reader.unpack("<H")
    perms = []
    for _ in range(layer_count):
        (slots,) = reader.unpack("<I")
        perms.append(reader.array("<u4", slots).astype(np.int64))
    table = PermutationTable.from_perms(perms)
    raise_if_invalid(validate_table(table), "Loaded permutation table is invalid")
    return table


def encode_table(table: PermutationTable) -> bytes:
    return TABLE_MAGIC + struct.pack("<H", VERSION) + _table_body(table)


def decode_table(data: bytes) -> PermutationTable:
    reader = _Reader(data, "permutation table")
    reader.expect_header(TABLE_MAGIC)
    table = _read_table_body(reader)
    reader.finish()
    return table


# ── Model checkpoint ─────────────────────────────────────────────────


def _encode_encoder(encoder: CoordinateEncoder) -> bytes:
    parts = [struct.pack("<BH", _ENCODER_TAGS[encoder.kind], encoder.input_dim)]
    if encoder.kind == EncoderKind.PE:
        parts.append(struct.pack("<Hd", encoder.pe.levels, encoder.pe.base))
    elif encoder.kind == EncoderKind.RFF:
        parts.append(struct.pack("<HI", len(encoder.rff_maps), encoder.rff_maps[0].features))
        for rff in encoder.rff_maps:
            parts.append(struct.pack("<dQ", rff.sigma, rff.seed))
            parts.append(_f32(rff.matrix))
    return b"".join(parts)


def _decode_encoder(reader: _Reader) -> CoordinateEncoder:
    tag, input_dim = reader.unpack("<BH")
    if tag not in _TAG_ENCODERS:
        raise FormatError(f"model checkpoint: unknown encoder tag {tag}")
    kind = _TAG_ENCODERS[tag]
    if kind == EncoderKind.PE:
        levels, base = reader.unpack("<Hd")
        return CoordinateEncoder(kind=kind, input_dim=input_dim, pe=PeConfig(levels=levels, base=base))
    if kind == EncoderKind.RFF:
        count, features = reader.unpack("<HI")
        maps = []
        for _ in range(count):
            sigma, seed = reader.unpack("<dQ")
            matrix = reader.array("<f4", features * input_dim).reshape(features, input_dim)
            maps.append(RffMap(matrix=matrix, sigma=sigma, seed=seed))
        return CoordinateEncoder(kind=kind, input_dim=input_dim, rff_maps=maps)
    return CoordinateEncoder(kind=kind, input_dim=input_dim)


def encode_checkpoint(checkpoint: InrCheckpoint) -> bytes:
    model = checkpoint.model
    parts = [MODEL_MAGIC, struct.pack("<HB", VERSION, len(model.widths))]
    parts.append(struct.pack(f"<{len(model.widths)}I", *model.widths))
    parts.append(_encode_encoder(checkpoint.encoder))
    parts.append(struct.pack("<H", len(checkpoint.layer_stats)))
    for stats in checkpoint.layer_stats:
        parts.append(struct.pack("<dd", stats.mean, stats.std))
    parts.append(struct.pack("<BQ", checkpoint.kernel_size, model.seed))
    for w, b in zip(model.weights, model.biases):
        parts.append(_f32(w))
        parts.append(_f32(b))
    adam = checkpoint.adam
    parts.append(struct.pack("<B", 0 if adam is None else 1))
    if adam is not None:
        parts.append(struct.pack("<Qdddd", adam.step, adam.lr, adam.beta1, adam.beta2, adam.eps))
        for group in (adam.m_weights, adam.v_weights, adam.m_biases, adam.v_biases):
            parts.extend(_f32(arr) for arr in group)
    if checkpoint.table is not None:
        parts.append(PERM_MAGIC + _table_body(checkpoint.table))
    return b"".join(parts)


def decode_checkpoint(data: bytes) -> InrCheckpoint:
    reader = _Reader(data, "model checkpoint")
    reader.expect_header(MODEL_MAGIC)
    (count,) = reader.unpack("<B")
    if count != LAYER_COUNT + 1:
        raise FormatError(f"model checkpoint: expected {LAYER_COUNT + 1} widths, got {count}")
    widths = list(reader.unpack(f"<{count}I"))
    if min(widths) < 1:
        raise CorruptionError(f"model checkpoint: zero layer width in {widths}")
    encoder = _decode_encoder(reader)
    (stats_count,) = reader.unpack("<H")
    stats = [LayerStats(mean=m, std=s) for m, s in (reader.unpack("<dd") for _ in range(stats_count))]
    kernel_size, seed = reader.unpack("<BQ")
    shapes = list(zip(widths[:-1], widths[1:]))
    weights, biases = [], []
    for fan_in, fan_out in shapes:
        weights.append(reader.array("<f4", fan_in * fan_out).reshape(fan_in, fan_out))
        biases.append(reader.array("<f4", fan_out))
    model = InrModel(widths=widths, weights=weights, biases=biases, seed=seed)

    adam = None
    (has_adam,) = reader.unpack("<B")
    if has_adam:
        step, lr, beta1, beta2, eps = reader.unpack("<Qdddd")
        groups = []
        for per_layer in (True, True, False, False):
            groups.append(
                [
                    reader.array("<f4", fi * fo).reshape(fi, fo) if per_layer else reader.array("<f4", fo)
                    for fi, fo in shapes
                ]
            )
        adam = AdamState(
            lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=step,
            m_weights=groups[0], v_weights=groups[1], m_biases=groups[2], v_biases=groups[3],
        )

    table = None
    if reader.remaining:
        if reader.take(min(4, reader.remaining)) != PERM_MAGIC:
            raise CorruptionError("model checkpoint: unrecognised trailer")
        table = _read_table_body(reader)
    reader.finish()
    return InrCheckpoint(
        model=model, encoder=encoder, layer_stats=stats, kernel_size=kernel_size, adam=adam, table=table
    )


# ── Labeled dataset ──────────────────────────────────────────────────


def encode_dataset(dataset: LabeledDataset) -> bytes:
    n, c, h, w = dataset.images.shape
    header = struct.pack("<HIHHHH", VERSION, n, c, h, w, dataset.classes)
    return b"".join(
        [
            DATASET_MAGIC,
            header,
            _f32(dataset.images),
            np.ascontiguousarray(dataset.labels, dtype="<u2").tobytes(),
        ]
    )


def decode_dataset(data: bytes) -> LabeledDataset:
    reader = _Reader(data, "dataset")
    reader.expect_header(DATASET_MAGIC)
    n, c, h, w, classes = reader.unpack("<IHHHH")
    images = reader.array("<f4", n * c * h * w).reshape(n, c, h, w)
    labels = reader.array("<u2", n).astype(np.int64)
    reader.finish()
    return LabeledDataset(images=images, labels=labels, classes=classes)
