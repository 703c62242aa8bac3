"""Spectral-bias analysis: NTK Gram matrices, eigendecomposition, projections, spectra."""

import math

import numpy as np

from kernelinr.engine.mlp import forward_cache, as_float64
from kernelinr.exceptions import InvalidInputError, NumericError
from kernelinr.models.analysis import NtkReport, SpectrumReport
from kernelinr.models.enums import EigSolver, EncoderKind, TargetTag
from kernelinr.models.inr import InrModel

SYMMETRY_TOL = 1e-8
UNIT_NORM_TOL = 1e-6
PHI_TOL = 1e-9
MAX_DFT_SIDE = 64


# ── Kernels ──────────────────────────────────────────────────────────


def _scalar_deltas(model: InrModel, X) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-sample layer inputs and output-gradient signals of a scalar-output model."""
    if model.output_dim != 1:
        raise InvalidInputError(f"NTK analysis needs a scalar-output model, got {model.output_dim} outputs")
    work = as_float64(model)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != work.input_dim:
        raise InvalidInputError(f"Input has {X.shape[1]} columns, model expects {work.input_dim}")
    acts, pre = forward_cache(work, X)
    deltas = [None] * len(work.weights)
    delta = np.ones((X.shape[0], 1))
    for i in range(len(work.weights) - 1, -1, -1):
        deltas[i] = delta
        if i > 0:
            delta = (delta @ work.weights[i].T) * (pre[i - 1] > 0)
    return acts[:-1], deltas


def jacobian(model: InrModel, X) -> np.ndarray:
    """Rows of per-sample parameter gradients, ordered W0, b0, W1, b1, ..."""
    acts, deltas = _scalar_deltas(model, X)
    n = acts[0].shape[0]
    blocks = []
    for a, d in zip(acts, deltas):
        blocks.append(np.einsum("ni,nj->nij", a, d).reshape(n, -1))
        blocks.append(d)
    jac = np.concatenate(blocks, axis=1)
    if not np.all(np.isfinite(jac)):
        raise NumericError("Non-finite parameter gradient")
    return jac


def empirical_ntk(model: InrModel, X) -> np.ndarray:
    """H_ij = <grad f(x_i), grad f(x_j)>, summed layer by layer as (A A^T + 1) * (D D^T)."""
    acts, deltas = _scalar_deltas(model, X)
    H = np.zeros((acts[0].shape[0],) * 2)
    for a, d in zip(acts, deltas):
        H += (a @ a.T + 1.0) * (d @ d.T)
    if not np.all(np.isfinite(H)):
        raise NumericError("Non-finite parameter gradient")
    return 0.5 * (H + H.T)


def _check_unit_rows(U) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    norms = np.linalg.norm(U, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        raise InvalidInputError("Inputs must have unit-norm rows")
    return U


def arccos_ntk(U) -> np.ndarray:
    """(1 / 2 pi) cos(theta) (pi - theta) for unit-norm rows."""
    U = _check_unit_rows(U)
    theta = np.arccos(np.clip(U @ U.T, -1.0, 1.0))
    return np.cos(theta) * (np.pi - theta) / (2.0 * np.pi)


def rff_ntk(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    if np.any(np.abs(phi) > 1.0 + PHI_TOL):
        raise InvalidInputError("RFF cosine entries must lie in [-1, 1]")
    phi = np.clip(phi, -1.0, 1.0)
    return phi * (np.pi - np.arccos(phi)) / (2.0 * np.pi)


def two_layer_ntk(U, width: int, seed: int = 0) -> np.ndarray:
    """Hidden-layer NTK of a width-m two-layer ReLU net with N(0, I) first-layer weights.

    Converges to arccos_ntk as width grows.
    """
    U = _check_unit_rows(U)
    W = np.random.default_rng(seed).standard_normal((width, U.shape[1]))
    active = (U @ W.T > 0).astype(np.float64)
    return (U @ U.T) * (active @ active.T) / width


# ── Eigendecomposition ───────────────────────────────────────────────


def _jacobi(H: np.ndarray, max_sweeps: int) -> tuple[np.ndarray, np.ndarray]:
    A = H.copy()
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(H)
    if scale == 0.0:
        return np.zeros(n), V
    for sweep in range(max_sweeps + 1):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= 1e-12 * scale:
            return np.diag(A).copy(), V
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                vec_p, vec_q = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vec_p - s * vec_q
                V[:, q] = s * vec_p + c * vec_q
    raise NumericError(
        f"Jacobi eigensolver did not converge in {max_sweeps} sweeps",
        record={"n": n, "off_norm": off, "frobenius": float(scale)},
    )


def eig_sym(H, solver: EigSolver = EigSolver.JACOBI, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvector columns of a symmetric matrix."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidInputError(f"Expected a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise NumericError("Matrix contains non-finite entries")
    if np.max(np.abs(H - H.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(H), initial=0.0)):
        raise InvalidInputError("Matrix is not symmetric")
    if solver == EigSolver.LAPACK:
        values, vectors = np.linalg.eigh(0.5 * (H + H.T))
    else:
        values, vectors = _jacobi(H, max_sweeps)
    order = np.argsort(-values, kind="stable")
    return values[order], vectors[:, order]


def project(Q, Y) -> np.ndarray:
    Q = np.asarray(Q, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64).reshape(-1)
    if Q.ndim != 2 or Q.shape[0] != Y.size:
        raise InvalidInputError(f"Cannot project a length-{Y.size} target onto basis of shape {Q.shape}")
    return Q.T @ Y


def residual_curve(eigenvalues, coefficients, eta: float, t_grid) -> np.ndarray:
    """Predicted ||f_t(X) - Y|| under linearized dynamics at each time in t_grid."""
    if eta <= 0:
        raise InvalidInputError(f"eta must be positive, got {eta}")
    lam = np.clip(np.asarray(eigenvalues, dtype=np.float64), 0.0, None)
    c2 = np.square(np.asarray(coefficients, dtype=np.float64))
    t = np.asarray(t_grid, dtype=np.float64)
    return np.sqrt(np.exp(-2.0 * eta * np.outer(t, lam)) @ c2)


def eigenmass_index(eigenvalues, fraction: float = 0.95) -> int:
    """Number of leading eigenvalues holding `fraction` of the total (clipped) mass."""
    lam = np.clip(np.asarray(eigenvalues, dtype=np.float64), 0.0, None)
    total = lam.sum()
    if total == 0.0:
        return 0
    return int(np.searchsorted(np.cumsum(lam) / total, fraction - 1e-12) + 1)


def top_direction_mass(coefficients, fraction: float = 0.1) -> float:
    """Share of squared coefficient mass on the leading `fraction` of eigen-directions."""
    c2 = np.square(np.asarray(coefficients, dtype=np.float64))
    total = c2.sum()
    if total == 0.0:
        return 0.0
    k = max(1, math.ceil(fraction * c2.size))
    return float(c2[:k].sum() / total)


def ntk_report(H, Y, encoder: EncoderKind, target: TargetTag, solver: EigSolver = EigSolver.JACOBI) -> NtkReport:
    values, vectors = eig_sym(H, solver)
    return NtkReport(
        eigenvalues=values,
        eigenvectors=vectors,
        coefficients=project(vectors, Y),
        encoder=encoder,
        target=target,
    )


# ── Spectra ──────────────────────────────────────────────────────────


def dft2_magnitude(matrix, cutoff: float | None = None) -> SpectrumReport:
    """Centered 2-D DFT magnitude; total_energy uses the 1 / n^2 Parseval scaling."""
    M = np.asarray(matrix, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"Expected a square matrix, got shape {M.shape}")
    if M.shape[0] > MAX_DFT_SIDE:
        raise InvalidInputError(f"Matrix side {M.shape[0]} exceeds {MAX_DFT_SIDE}")
    magnitude = np.abs(np.fft.fftshift(np.fft.fft2(M)))
    report = SpectrumReport(
        magnitude=magnitude,
        total_energy=float(np.sum(magnitude**2) / M.size),
    )
    if cutoff is not None:
        report = report.model_copy(
            update={"cutoff": cutoff, "low_freq_fraction": low_freq_energy_fraction(report, cutoff)}
        )
    return report


def low_freq_energy_fraction(spectrum, radial_cutoff: float) -> float:
    """Energy within max(|fx|, |fy|) <= radial_cutoff * Nyquist over total energy."""
    if not 0.0 < radial_cutoff <= 1.0:
        raise InvalidInputError(f"Cutoff must lie in (0, 1], got {radial_cutoff}")
    magnitude = spectrum.magnitude if isinstance(spectrum, SpectrumReport) else np.asarray(spectrum)
    energy = np.square(magnitude.astype(np.float64))
    total = energy.sum()
    if total == 0.0:
        return 1.0
    fy = np.abs(np.fft.fftshift(np.fft.fftfreq(magnitude.shape[0])))
    fx = np.abs(np.fft.fftshift(np.fft.fftfreq(magnitude.shape[1])))
    inside = np.maximum(fy[:, None], fx[None, :]) <= radial_cutoff * 0.5 + 1e-12
    return float(min(1.0, energy[inside].sum() / total))


def sequence_energy_profile(values, bins: int = 8) -> np.ndarray:
    """Share of non-DC spectral energy per frequency band along a sequence's first axis.

    values is (n,) or (n, k); feature columns are transformed independently and summed.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    x = x.reshape(x.shape[0], -1)
    if x.shape[0] < 2 or bins < 1:
        raise InvalidInputError("Need a sequence of length >= 2 and bins >= 1")
    energy = np.square(np.abs(np.fft.rfft(x - x.mean(axis=0), axis=0))).sum(axis=1)[1:]
    total = energy.sum()
    bands = np.array([band.sum() for band in np.array_split(energy, bins)])
    return bands / total if total > 0 else bands
