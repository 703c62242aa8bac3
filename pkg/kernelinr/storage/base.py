from abc import ABC, abstractmethod
from pathlib import Path

from kernelinr.models.inr import InrCheckpoint
from kernelinr.models.network import LabeledDataset, NetSpec
from kernelinr.models.report import RunManifest
from kernelinr.models.weights import BundleMeta, PermutationTable, WeightBundle


class ArtifactStore(ABC):
    @abstractmethod
    def load_bundle(self, path: str | Path) -> WeightBundle: ...

    @abstractmethod
    def save_bundle(self, bundle: WeightBundle, path: str | Path) -> None: ...

    @abstractmethod
    def load_table(self, path: str | Path) -> PermutationTable: ...

    @abstractmethod
    def save_table(self, table: PermutationTable, path: str | Path) -> None: ...

    @abstractmethod
    def load_checkpoint(self, path: str | Path) -> InrCheckpoint: ...

    @abstractmethod
    def save_checkpoint(self, checkpoint: InrCheckpoint, path: str | Path) -> None: ...

    @abstractmethod
    def load_dataset(self, path: str | Path) -> LabeledDataset: ...

    @abstractmethod
    def save_dataset(self, dataset: LabeledDataset, path: str | Path) -> None: ...

    @abstractmethod
    def load_netspec(self, path: str | Path) -> NetSpec: ...

    @abstractmethod
    def save_netspec(self, spec: NetSpec, path: str | Path) -> None: ...

    @abstractmethod
    def load_meta(self, path: str | Path) -> BundleMeta: ...

    @abstractmethod
    def save_meta(self, meta: BundleMeta, path: str | Path) -> None: ...

    @abstractmethod
    def save_manifest(self, manifest: RunManifest, path: str | Path) -> None: ...

    @abstractmethod
    def load_manifest(self, path: str | Path) -> RunManifest: ...
