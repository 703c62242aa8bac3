"""Desk-scale fixtures: a tiny three-conv CNN and a synthetic blob dataset."""

import numpy as np

from kernelinr.engine.cnn import conv2d_forward, evaluate_accuracy
from kernelinr.models.network import AvgPoolLayer, ConvLayer, LabeledDataset, LinearLayer, NetSpec, ReluLayer
from kernelinr.models.weights import WeightBundle

TINY_WIDTH = 8
TINY_CHANNELS = 3
TINY_IMAGE = 8
RIDGE = 1e-3


def make_blob_dataset(
    n: int = 256,
    classes: int = 2,
    channels: int = TINY_CHANNELS,
    size: int = TINY_IMAGE,
    seed: int = 0,
) -> LabeledDataset:
    """Gaussian blobs at random positions; the class decides the blob's colour."""
    rng = np.random.default_rng(seed)
    colours = rng.uniform(0.2, 1.0, (classes, channels))
    labels = rng.permutation(np.arange(n) % classes)
    yy, xx = np.mgrid[0:size, 0:size]
    width = size / 6.0
    images = np.empty((n, channels, size, size), dtype=np.float32)
    for i, label in enumerate(labels):
        cy, cx = rng.uniform(size * 0.25, size * 0.75, 2)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * width**2))
        noise = 0.05 * rng.standard_normal((channels, size, size))
        images[i] = colours[label][:, None, None] * blob + noise
    return LabeledDataset(images=images, labels=labels, classes=classes)


def tiny_netspec(classes: int = 2) -> NetSpec:
    return NetSpec(
        name="tiny",
        layers=[
            ConvLayer(filters=TINY_WIDTH, channels=TINY_CHANNELS, kernel=3, pad=1, bundle_layer=0),
            ReluLayer(),
            ConvLayer(filters=TINY_WIDTH, channels=TINY_WIDTH, kernel=3, pad=1, bundle_layer=1),
            ReluLayer(),
            ConvLayer(filters=TINY_WIDTH, channels=TINY_WIDTH, kernel=3, pad=1, bundle_layer=2),
            ReluLayer(),
            AvgPoolLayer(),
            LinearLayer(in_features=TINY_WIDTH, out_features=classes, weight_blob=0, bias_blob=1),
        ],
    )


def _pooled_features(kernels: list[np.ndarray], dataset: LabeledDataset) -> np.ndarray:
    feats = np.empty((dataset.size, kernels[-1].shape[0]))
    for i, image in enumerate(dataset.images):
        x = image
        for k in kernels:
            x = np.maximum(conv2d_forward(x, k, stride=1, pad=1), 0)
        feats[i] = x.mean(axis=(1, 2))
    return feats


def make_tiny_fixture(seed: int = 0, classes: int = 2, samples: int = 256) -> tuple[NetSpec, WeightBundle, LabeledDataset]:
    """He-initialised conv stack with a ridge-fitted linear head, plus its dataset."""
    rng = np.random.default_rng(seed)
    shapes = [(TINY_WIDTH, TINY_CHANNELS, 3, 3), (TINY_WIDTH, TINY_WIDTH, 3, 3), (TINY_WIDTH, TINY_WIDTH, 3, 3)]
    kernels = [
        (rng.standard_normal(shape) * np.sqrt(2.0 / (shape[1] * 9))).astype(np.float32) for shape in shapes
    ]
    dataset = make_blob_dataset(samples, classes, seed=seed + 1)

    feats = _pooled_features(kernels, dataset)
    design = np.hstack([feats, np.ones((dataset.size, 1))])
    onehot = np.eye(classes)[dataset.labels]
    coef = np.linalg.solve(design.T @ design + RIDGE * np.eye(design.shape[1]), design.T @ onehot)
    weight = coef[:-1].T.astype("<f4")
    bias = coef[-1].astype("<f4")

    bundle = WeightBundle(
        layers=kernels,
        model_name="tiny",
        residuals=[weight.tobytes(), bias.tobytes()],
    )
    spec = tiny_netspec(classes)
    bundle = bundle.model_copy(update={"source_accuracy": evaluate_accuracy(spec, bundle, dataset)})
    return spec, bundle, dataset
