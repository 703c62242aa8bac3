from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from kernelinr.models.weights import frozen_array


class ConvLayer(BaseModel):
    kind: Literal["conv"] = "conv"
    filters: int = Field(ge=1)
    channels: int = Field(ge=1)
    kernel: int = Field(ge=1)
    stride: int = Field(default=1, ge=1)
    pad: int = Field(default=0, ge=0)
    bundle_layer: int = Field(ge=0)
    bias_blob: int | None = Field(default=None, ge=0)


class ReluLayer(BaseModel):
    kind: Literal["relu"] = "relu"


class AvgPoolLayer(BaseModel):
    """Global average pooling over the spatial axes."""

    kind: Literal["avgpool"] = "avgpool"


class LinearLayer(BaseModel):
    kind: Literal["linear"] = "linear"
    in_features: int = Field(ge=1)
    out_features: int = Field(ge=1)
    weight_blob: int = Field(ge=0)  # f32 LE, row-major (out, in)
    bias_blob: int | None = Field(default=None, ge=0)


NetLayer = Annotated[
    Union[ConvLayer, ReluLayer, AvgPoolLayer, LinearLayer], Field(discriminator="kind")
]


class NetSpec(BaseModel):
    name: str = ""
    layers: list[NetLayer]

    @property
    def conv_layers(self) -> list[ConvLayer]:
        return [layer for layer in self.layers if isinstance(layer, ConvLayer)]

    @property
    def classes(self) -> int | None:
        for layer in reversed(self.layers):
            if isinstance(layer, LinearLayer):
                return layer.out_features
        return None


class LabeledDataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    images: np.ndarray  # (n, C, H, W)
    labels: np.ndarray  # (n,)
    classes: int = Field(ge=1)

    @field_validator("images", mode="before")
    @classmethod
    def _freeze_images(cls, value):
        arr = frozen_array(value, np.float32)
        if arr.ndim != 4 or arr.shape[0] < 1:
            raise ValueError(f"images must be (n>=1, C, H, W), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("images contain non-finite pixels")
        return arr

    @field_validator("labels", mode="before")
    @classmethod
    def _freeze_labels(cls, value):
        return frozen_array(value, np.int64)

    @model_validator(mode="after")
    def _check_labels(self):
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError("labels must have one entry per image")
        if self.labels.min() < 0 or self.labels.max() >= self.classes:
            raise ValueError(f"labels must lie in [0, {self.classes})")
        return self

    @property
    def size(self) -> int:
        return int(self.images.shape[0])
