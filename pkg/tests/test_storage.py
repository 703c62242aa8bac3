import math
import struct

import numpy as np
import pytest

from kernelinr.engine.encoders import rff_init
from kernelinr.engine.fixtures import make_blob_dataset
from kernelinr.engine.mlp import adam_init, mlp_init
from kernelinr.engine.weights import bundle_meta
from kernelinr.exceptions import CorruptionError, FormatError, InvalidInputError
from kernelinr.models.encoding import CoordinateEncoder, PeConfig
from kernelinr.models.enums import EncoderKind
from kernelinr.models.inr import InrCheckpoint, LayerStats
from kernelinr.models.report import RunManifest
from kernelinr.models.weights import WeightBundle
from kernelinr.storage import LocalFileStore, load_bundle, save_bundle
from kernelinr.storage.codec import (
    decode_bundle,
    decode_checkpoint,
    decode_dataset,
    decode_table,
    encode_bundle,
    encode_checkpoint,
    encode_dataset,
    encode_table,
)
from tests.conftest import make_bundle, make_table


def _checkpoint(encoder: CoordinateEncoder, with_adam: bool = True) -> InrCheckpoint:
    model = mlp_init([encoder.output_dim, 4, 4, 4, 4, 9], seed=1)
    adam = adam_init(model) if with_adam else None
    if adam is not None:
        adam.step = 7
        adam.m_weights[0][:] = 0.25
    return InrCheckpoint(
        model=model,
        encoder=encoder,
        layer_stats=[LayerStats(mean=0.1, std=2.0), LayerStats(mean=-0.5, std=0.3)],
        kernel_size=3,
        adam=adam,
    )


class TestBundleFormat:
    def test_round_trip_is_bit_exact(self, bundle):
        again = decode_bundle(encode_bundle(bundle))
        assert again.shapes == bundle.shapes
        for a, b in zip(bundle.layers, again.layers):
            assert a.tobytes() == b.tobytes()
        assert again.residuals == bundle.residuals

    def test_randomized_round_trips(self):
        rng = np.random.default_rng(11)
        for trial in range(50):
            shapes = [
                (int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.choice([1, 3])))
                for _ in range(int(rng.integers(1, 4)))
            ]
            bundle = make_bundle(shapes, seed=trial, residuals=[rng.bytes(int(rng.integers(0, 9)))])
            again = decode_bundle(encode_bundle(bundle))
            assert all(a.tobytes() == b.tobytes() for a, b in zip(bundle.layers, again.layers))

    def test_metadata_round_trips(self):
        bundle = make_bundle(name="résnet-toy", accuracy=0.875)
        again = decode_bundle(encode_bundle(bundle))
        assert again.model_name == "résnet-toy"
        assert again.source_accuracy == 0.875

    def test_missing_accuracy_round_trips_as_none(self):
        assert decode_bundle(encode_bundle(make_bundle())).source_accuracy is None

    def test_deterministic_bytes(self, bundle):
        assert encode_bundle(bundle) == encode_bundle(bundle)

    def test_header_fields(self):
        data = encode_bundle(make_bundle([(2, 1, 3), (1, 2, 1)]))
        assert data[:4] == b"SBSW"
        assert struct.unpack("<HH", data[4:8]) == (1, 2)
        assert struct.unpack("<HHBB", data[8:14]) == (2, 1, 3, 3)

    def test_payload_float_count(self):
        bundle = make_bundle([(2, 1, 3)])
        data = encode_bundle(bundle)
        payload = np.frombuffer(data[14 : 14 + 18 * 4], dtype="<f4")
        assert np.array_equal(payload, bundle.layers[0].reshape(-1))

    def test_bad_magic(self, bundle):
        data = bytearray(encode_bundle(bundle))
        data[0:4] = b"XXXX"
        with pytest.raises(FormatError):
            decode_bundle(bytes(data))

    def test_bad_version(self, bundle):
        data = bytearray(encode_bundle(bundle))
        data[4:6] = struct.pack("<H", 2)
        with pytest.raises(FormatError):
            decode_bundle(bytes(data))

    def test_truncated_payload(self, bundle):
        with pytest.raises(CorruptionError):
            decode_bundle(encode_bundle(bundle)[:30])

    def test_trailing_garbage(self, bundle):
        with pytest.raises(CorruptionError):
            decode_bundle(encode_bundle(bundle) + b"\x00")

    def test_file_without_trailer_is_accepted(self):
        bundle = make_bundle(name="")
        data = encode_bundle(bundle)
        trailer = 4 + 2 + 8
        again = decode_bundle(data[:-trailer])
        assert again.model_name == ""
        assert again.source_accuracy is None

    def test_non_finite_entry_rejected_on_load(self):
        bundle = make_bundle([(1, 1, 1)])
        data = bytearray(encode_bundle(bundle))
        data[14:18] = struct.pack("<f", math.inf)
        with pytest.raises(InvalidInputError):
            decode_bundle(bytes(data))

    def test_empty_bundle_not_saved(self):
        with pytest.raises(InvalidInputError):
            encode_bundle(WeightBundle(layers=[]))


class TestTableFormat:
    def test_round_trip(self):
        table = make_table([2, 0, 1], [0, 1, 3, 2])
        again = decode_table(encode_table(table))
        for a, b in zip(table.perms, again.perms):
            assert np.array_equal(a, b)
        assert again.inverses[0].tolist() == [1, 2, 0]

    def test_layout(self):
        data = encode_table(make_table([1, 0]))
        assert data[:4] == b"SBSP"
        assert struct.unpack("<HHI", data[4:12]) == (1, 1, 2)
        assert np.frombuffer(data[12:], dtype="<u4").tolist() == [1, 0]

    def test_non_bijective_file_rejected(self):
        data = bytearray(encode_table(make_table([1, 0])))
        data[16:20] = struct.pack("<I", 1)
        with pytest.raises(InvalidInputError):
            decode_table(bytes(data))


class TestCheckpointFormat:
    def test_pe_round_trip(self):
        ckpt = _checkpoint(CoordinateEncoder(kind=EncoderKind.PE, pe=PeConfig(levels=3, base=2.0)))
        again = decode_checkpoint(encode_checkpoint(ckpt))
        assert again.model.widths == ckpt.model.widths
        assert again.encoder == ckpt.encoder
        assert again.layer_stats == ckpt.layer_stats
        for a, b in zip(ckpt.model.weights, again.model.weights):
            assert a.tobytes() == b.tobytes()
        assert again.adam.step == 7
        assert np.all(again.adam.m_weights[0] == 0.25)

    def test_per_layer_rff_round_trip(self):
        maps = [rff_init(3, 5, sigma, seed=2) for sigma in (10.0, 20.0)]
        ckpt = _checkpoint(CoordinateEncoder(kind=EncoderKind.RFF, rff_maps=maps), with_adam=False)
        again = decode_checkpoint(encode_checkpoint(ckpt))
        assert again.adam is None
        assert [m.sigma for m in again.encoder.rff_maps] == [10.0, 20.0]
        assert np.array_equal(again.encoder.rff_maps[1].matrix, maps[1].matrix)

    def test_unknown_encoder_tag(self):
        ckpt = _checkpoint(CoordinateEncoder(kind=EncoderKind.NONE), with_adam=False)
        data = bytearray(encode_checkpoint(ckpt))
        offset = 4 + 3 + 4 * len(ckpt.model.widths)
        data[offset] = 9
        with pytest.raises(FormatError):
            decode_checkpoint(bytes(data))

    def test_truncated(self):
        ckpt = _checkpoint(CoordinateEncoder(kind=EncoderKind.NONE))
        with pytest.raises(CorruptionError):
            decode_checkpoint(encode_checkpoint(ckpt)[:-1])

    def test_table_round_trip(self):
        table = make_table([2, 0, 1], [3, 1, 0, 2])
        ckpt = _checkpoint(CoordinateEncoder(kind=EncoderKind.NONE)).model_copy(update={"table": table})
        data = encode_checkpoint(ckpt)
        assert data[-42:-38] == b"PERM"
        again = decode_checkpoint(data)
        assert [p.tolist() for p in again.table.perms] == [[2, 0, 1], [3, 1, 0, 2]]

    def test_no_table_means_no_trailer(self):
        ckpt = _checkpoint(CoordinateEncoder(kind=EncoderKind.NONE), with_adam=False)
        assert decode_checkpoint(encode_checkpoint(ckpt)).table is None

    def test_unknown_trailer(self):
        ckpt = _checkpoint(CoordinateEncoder(kind=EncoderKind.NONE), with_adam=False)
        with pytest.raises(CorruptionError):
            decode_checkpoint(encode_checkpoint(ckpt) + b"JUNK")

    def test_wrong_width_count(self):
        ckpt = _checkpoint(CoordinateEncoder(kind=EncoderKind.NONE), with_adam=False)
        data = bytearray(encode_checkpoint(ckpt))
        data[6] = 4
        with pytest.raises(FormatError):
            decode_checkpoint(bytes(data))


class TestDatasetFormat:
    def test_round_trip(self):
        dataset = make_blob_dataset(n=6, classes=3, size=4, seed=2)
        again = decode_dataset(encode_dataset(dataset))
        assert again.images.tobytes() == dataset.images.tobytes()
        assert again.labels.tolist() == dataset.labels.tolist()
        assert again.classes == 3

    def test_bad_magic(self):
        data = b"SBSW" + encode_dataset(make_blob_dataset(n=2, size=4))[4:]
        with pytest.raises(FormatError):
            decode_dataset(data)


class TestLocalFileStore:
    def test_module_level_round_trip(self, bundle, tmp_path):
        path = tmp_path / "b.sbsw"
        save_bundle(bundle, path)
        again = load_bundle(path)
        assert all(a.tobytes() == b.tobytes() for a, b in zip(bundle.layers, again.layers))

    def test_same_bundle_saved_twice_gives_identical_files(self, bundle, tmp_path):
        save_bundle(bundle, tmp_path / "a.sbsw")
        save_bundle(bundle, tmp_path / "b.sbsw")
        assert (tmp_path / "a.sbsw").read_bytes() == (tmp_path / "b.sbsw").read_bytes()

    def test_relative_paths_resolve_against_root(self, bundle, tmp_path):
        store = LocalFileStore(root=tmp_path)
        store.save_table(make_table([1, 0]), "t.sbsp")
        assert (tmp_path / "t.sbsp").exists()
        assert store.load_table("t.sbsp").perms[0].tolist() == [1, 0]

    def test_meta_and_manifest_json(self, bundle, tmp_path):
        store = LocalFileStore()
        store.save_meta(bundle_meta(bundle), tmp_path / "m.json")
        assert store.load_meta(tmp_path / "m.json").shapes == bundle.shapes
        manifest = RunManifest(command="permute", argv=["permute"], config_hash="x", version="0", wall_ms=1.0)
        store.save_manifest(manifest, tmp_path / "run.json")
        assert store.load_manifest(tmp_path / "run.json").command == "permute"

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_bundle(tmp_path / "absent.sbsw")

    def test_unwritable_path(self, bundle, tmp_path):
        (tmp_path / "plain-file").write_text("x")
        with pytest.raises(OSError):
            save_bundle(bundle, tmp_path / "plain-file" / "b.sbsw")
