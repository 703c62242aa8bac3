from kernelinr.storage.base import ArtifactStore
from kernelinr.storage.local import LocalFileStore, load_bundle, save_bundle
