import logging
import os
import tempfile
from pathlib import Path

from kernelinr.models.inr import InrCheckpoint
from kernelinr.models.network import LabeledDataset, NetSpec
from kernelinr.models.report import RunManifest
from kernelinr.models.weights import BundleMeta, PermutationTable, WeightBundle
from kernelinr.storage import codec
from kernelinr.storage.base import ArtifactStore

logger = logging.getLogger(__name__)


class LocalFileStore(ArtifactStore):
    """Artifacts as files; relative paths resolve against `root`."""

    def __init__(self, root: str | Path | None = None):
        self._root = Path(root) if root is not None else None

    def _path(self, path: str | Path) -> Path:
        path = Path(path)
        if self._root is not None and not path.is_absolute():
            return self._root / path
        return path

    def _read(self, path: str | Path) -> bytes:
        resolved = self._path(path)
        data = resolved.read_bytes()
        logger.debug("Read %d bytes from %s", len(data), resolved)
        return data

    def _write(self, path: str | Path, data: bytes) -> None:
        # Write-then-rename so a failed run never leaves a half-written artifact.
        resolved = self._path(path)
        resolved.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=resolved.parent, prefix=f".{resolved.name}.")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, resolved)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        logger.debug("Wrote %d bytes to %s", len(data), resolved)

    # --- WeightBundle ---

    def load_bundle(self, path: str | Path) -> WeightBundle:
        return codec.decode_bundle(self._read(path))

    def save_bundle(self, bundle: WeightBundle, path: str | Path) -> None:
        self._write(path, codec.encode_bundle(bundle))

    # --- PermutationTable ---

    def load_table(self, path: str | Path) -> PermutationTable:
        return codec.decode_table(self._read(path))

    def save_table(self, table: PermutationTable, path: str | Path) -> None:
        self._write(path, codec.encode_table(table))

    # --- InrCheckpoint ---

    def load_checkpoint(self, path: str | Path) -> InrCheckpoint:
        return codec.decode_checkpoint(self._read(path))

    def save_checkpoint(self, checkpoint: InrCheckpoint, path: str | Path) -> None:
        self._write(path, codec.encode_checkpoint(checkpoint))

    # --- LabeledDataset ---

    def load_dataset(self, path: str | Path) -> LabeledDataset:
        return codec.decode_dataset(self._read(path))

    def save_dataset(self, dataset: LabeledDataset, path: str | Path) -> None:
        self._write(path, codec.encode_dataset(dataset))

    # --- JSON artifacts ---

    def load_netspec(self, path: str | Path) -> NetSpec:
        return NetSpec.model_validate_json(self._read(path))

    def save_netspec(self, spec: NetSpec, path: str | Path) -> None:
        self._write(path, spec.model_dump_json(indent=2).encode("utf-8"))

    def load_meta(self, path: str | Path) -> BundleMeta:
        return BundleMeta.model_validate_json(self._read(path))

    def save_meta(self, meta: BundleMeta, path: str | Path) -> None:
        self._write(path, meta.model_dump_json(indent=2).encode("utf-8"))

    def load_manifest(self, path: str | Path) -> RunManifest:
        return RunManifest.model_validate_json(self._read(path))

    def save_manifest(self, manifest: RunManifest, path: str | Path) -> None:
        self._write(path, manifest.model_dump_json(indent=2).encode("utf-8"))


_DEFAULT_STORE = LocalFileStore()


def load_bundle(path: str | Path) -> WeightBundle:
    return _DEFAULT_STORE.load_bundle(path)


def save_bundle(bundle: WeightBundle, path: str | Path) -> None:
    _DEFAULT_STORE.save_bundle(bundle, path)
