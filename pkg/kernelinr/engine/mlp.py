import numpy as np

from kernelinr.exceptions import InvalidInputError, NumericError
from kernelinr.models.inr import AdamState, GradCheckReport, Gradients, InrModel

LAYER_COUNT = 5


def mlp_init(widths: list[int], seed: int = 0, dtype=np.float32) -> InrModel:
    """He-normal weights (std sqrt(2 / fan_in)) and zero biases."""
    widths = [int(w) for w in widths]
    if len(widths) != LAYER_COUNT + 1:
        raise InvalidInputError(f"Expected {LAYER_COUNT + 1} widths, got {len(widths)}")
    if min(widths) < 1:
        raise InvalidInputError(f"All widths must be >= 1, got {widths}")
    if seed < 0:
        raise InvalidInputError(f"Seed must be non-negative, got {seed}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        std = np.sqrt(2.0 / fan_in)
        weights.append((rng.standard_normal((fan_in, fan_out)) * std).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return InrModel(widths=widths, weights=weights, biases=biases, seed=seed)


def _check_input(model: InrModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    if X.shape[1] != model.input_dim:
        raise InvalidInputError(f"Input has {X.shape[1]} columns, model expects {model.input_dim}")
    return X


def forward_cache(model: InrModel, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Activations a_0..a_5 (a_0 = X) and pre-activations z_1..z_5."""
    dtype = model.weights[0].dtype
    acts = [X.astype(dtype, copy=False)]
    pre = []
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ W + b
        pre.append(z)
        acts.append(z if i == last else np.maximum(z, 0))
    return acts, pre


def forward(model: InrModel, X) -> np.ndarray:
    X = _check_input(model, np.asarray(X))
    acts, _ = forward_cache(model, X)
    return acts[-1]


def _backprop(model: InrModel, acts, pre, dY) -> Gradients:
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.weights)
    delta = dY
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = acts[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return Gradients(weights=grad_w, biases=grad_b)


def backward_mse(model: InrModel, X, T) -> tuple[float, Gradients]:
    """Mean squared error over batch and output dims, with parameter gradients."""
    X = _check_input(model, np.asarray(X))
    T = np.atleast_2d(np.asarray(T))
    if T.shape != (X.shape[0], model.output_dim):
        raise InvalidInputError(f"Targets have shape {T.shape}, expected {(X.shape[0], model.output_dim)}")
    acts, pre = forward_cache(model, X)
    Y = acts[-1]
    if not np.all(np.isfinite(Y)):
        raise NumericError("Non-finite MLP output", record={"rows": int(X.shape[0])})
    diff = Y - T.astype(Y.dtype, copy=False)
    loss = float(np.mean(np.square(diff, dtype=np.float64)))
    dY = (2.0 / diff.size) * diff
    return loss, _backprop(model, acts, pre, dY.astype(Y.dtype, copy=False))


def adam_init(model: InrModel, lr: float = 5e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        m_weights=[np.zeros_like(w) for w in model.weights],
        v_weights=[np.zeros_like(w) for w in model.weights],
        m_biases=[np.zeros_like(b) for b in model.biases],
        v_biases=[np.zeros_like(b) for b in model.biases],
    )


def adam_step(model: InrModel, state: AdamState, grads: Gradients, lr: float | None = None) -> None:
    """Bias-corrected Adam update of model parameters in place."""
    pairs = [
        (model.weights, grads.weights, state.m_weights, state.v_weights),
        (model.biases, grads.biases, state.m_biases, state.v_biases),
    ]
    for params, g, m, v in pairs:
        if len(g) != len(params) or any(p.shape != q.shape for p, q in zip(params, g)):
            raise InvalidInputError("Gradient shapes do not match model parameters")
        for moments in (m, v):
            if len(moments) != len(params) or any(p.shape != q.shape for p, q in zip(params, moments)):
                raise InvalidInputError("Optimizer state shapes do not match model parameters")

    state.step += 1
    step_lr = state.lr if lr is None else lr
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for params, g, m, v in pairs:
        for p, gi, mi, vi in zip(params, g, m, v):
            mi *= state.beta1
            mi += (1.0 - state.beta1) * gi
            vi *= state.beta2
            vi += (1.0 - state.beta2) * np.square(gi)
            p -= (step_lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps)).astype(p.dtype, copy=False)


def as_float64(model: InrModel) -> InrModel:
    return InrModel(
        widths=list(model.widths),
        weights=[w.astype(np.float64) for w in model.weights],
        biases=[b.astype(np.float64) for b in model.biases],
        seed=model.seed,
    )


def _sign_pattern(model: InrModel, X: np.ndarray) -> list[np.ndarray]:
    _, pre = forward_cache(model, X)
    return [z > 0 for z in pre[:-1]]


def grad_check(
    model: InrModel,
    X,
    T,
    eps: float = 1e-5,
    samples: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients with central differences on sampled parameters.

    Runs in float64 on a copy. A sample whose +/- eps perturbation flips any
    ReLU's activation is skipped as a kink crossing.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise InvalidInputError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    work = as_float64(model)
    X = _check_input(work, np.asarray(X, dtype=np.float64))
    T = np.asarray(T, dtype=np.float64)
    _, grads = backward_mse(work, X, T)

    slots = []
    for layer in range(len(work.weights)):
        slots += [("weight", layer, k) for k in range(work.weights[layer].size)]
        slots += [("bias", layer, k) for k in range(work.biases[layer].size)]
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(slots), size=min(samples, len(slots)), replace=False)

    report = GradCheckReport(max_rel_error=0.0)
    for pick in picks:
        kind, layer, k = slots[pick]
        param = (work.weights if kind == "weight" else work.biases)[layer].reshape(-1)
        analytic = (grads.weights if kind == "weight" else grads.biases)[layer].reshape(-1)[k]
        original = param[k]

        param[k] = original + eps
        loss_plus, _ = backward_mse(work, X, T)
        signs_plus = _sign_pattern(work, X)
        param[k] = original - eps
        loss_minus, _ = backward_mse(work, X, T)
        signs_minus = _sign_pattern(work, X)
        param[k] = original

        if any(not np.array_equal(a, b) for a, b in zip(signs_plus, signs_minus)):
            report.skipped_kinks += 1
            continue
        numeric = (loss_plus - loss_minus) / (2.0 * eps)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)
        report.checked += 1
        if rel > report.max_rel_error or report.worst_layer is None:
            report.max_rel_error = float(max(rel, report.max_rel_error))
            report.worst_layer = layer
            report.worst_kind = kind
    return report
