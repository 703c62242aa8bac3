import logging

import numpy as np

from kernelinr.engine.validator import raise_if_invalid, validate_binding
from kernelinr.exceptions import InvalidInputError
from kernelinr.models.network import AvgPoolLayer, ConvLayer, LabeledDataset, LinearLayer, NetSpec, ReluLayer
from kernelinr.models.weights import WeightBundle

logger = logging.getLogger(__name__)


def conv2d_forward(x, kernels, stride: int = 1, pad: int = 0, bias=None) -> np.ndarray:
    """Cross-correlate a C x H x W input with F x C x k x k kernels.

    Each output accumulates channel, then kernel row, then kernel column, so it
    matches a plain nested-loop sum term for term.
    """
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    dtype = np.result_type(x, kernels, np.float32)
    if x.ndim != 3 or kernels.ndim != 4:
        raise InvalidInputError(f"Expected C x H x W input and F x C x k x k kernels, got {x.shape}, {kernels.shape}")
    c_in, h, w = x.shape
    f, c, kh, kw = kernels.shape
    if c != c_in:
        raise InvalidInputError(f"Kernels expect {c} channels, input has {c_in}")
    if stride < 1 or pad < 0:
        raise InvalidInputError(f"Invalid stride {stride} or pad {pad}")
    span_h, span_w = h + 2 * pad - kh, w + 2 * pad - kw
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise InvalidInputError(f"Output size is not an integer for input {x.shape}, kernel {kh}, stride {stride}, pad {pad}")
    out_h, out_w = span_h // stride + 1, span_w // stride + 1

    xpad = np.pad(x.astype(dtype, copy=False), ((0, 0), (pad, pad), (pad, pad)))
    k = kernels.astype(dtype, copy=False)
    out = np.zeros((f, out_h, out_w), dtype=dtype)
    for ci in range(c):
        for u in range(kh):
            for v in range(kw):
                window = xpad[ci, u : u + stride * (out_h - 1) + 1 : stride, v : v + stride * (out_w - 1) + 1 : stride]
                out += k[:, ci, u, v][:, None, None] * window[None]
    if bias is not None:
        out += np.asarray(bias, dtype=dtype)[:, None, None]
    return out


def _blob(bundle: WeightBundle, index: int) -> np.ndarray:
    return np.frombuffer(bundle.residuals[index], dtype="<f4")


def _run(spec: NetSpec, bundle: WeightBundle, image: np.ndarray) -> np.ndarray:
    x = np.asarray(image, dtype=np.float32)
    for layer in spec.layers:
        if isinstance(layer, ConvLayer):
            bias = _blob(bundle, layer.bias_blob) if layer.bias_blob is not None else None
            x = conv2d_forward(x, bundle.layers[layer.bundle_layer], layer.stride, layer.pad, bias)
        elif isinstance(layer, ReluLayer):
            x = np.maximum(x, 0)
        elif isinstance(layer, AvgPoolLayer):
            x = x.mean(axis=(1, 2))
        elif isinstance(layer, LinearLayer):
            weight = _blob(bundle, layer.weight_blob).reshape(layer.out_features, layer.in_features)
            x = weight @ x.reshape(-1)
            if layer.bias_blob is not None:
                x = x + _blob(bundle, layer.bias_blob)
    return x


def forward_net(spec: NetSpec, bundle: WeightBundle, image) -> np.ndarray:
    raise_if_invalid(validate_binding(spec, bundle), "Net spec does not match bundle")
    return _run(spec, bundle, image)


def evaluate_accuracy(spec: NetSpec, bundle: WeightBundle, dataset: LabeledDataset) -> float:
    """Top-1 accuracy; argmax ties go to the lowest class index."""
    raise_if_invalid(validate_binding(spec, bundle), "Net spec does not match bundle")
    if spec.classes != dataset.classes:
        raise InvalidInputError(f"Net predicts {spec.classes} classes, dataset has {dataset.classes}")
    correct = 0
    for image, label in zip(dataset.images, dataset.labels):
        correct += int(np.argmax(_run(spec, bundle, image)) == label)
    accuracy = correct / dataset.size
    logger.debug("Evaluated %d images | accuracy=%.4f", dataset.size, accuracy)
    return accuracy
