"""NTK and spectrum studies behind the ntk-report and spectrum commands."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from kernelinr.engine.encoders import normalize_coords, pe_encode, rff_encode, rff_init
from kernelinr.engine.mlp import mlp_init
from kernelinr.engine.ntk import dft2_magnitude, empirical_ntk, ntk_report
from kernelinr.engine.smoothing import order_layer, smooth_matrix
from kernelinr.exceptions import FormatError, InvalidInputError
from kernelinr.models.analysis import NtkReport, OrderingConfig, SpectralRow, SpectrumReport
from kernelinr.models.encoding import PeConfig
from kernelinr.models.enums import EigSolver, EncoderKind, TargetTag
from kernelinr.models.weights import WeightBundle

logger = logging.getLogger(__name__)


class NtkStudySettings(BaseModel):
    hidden: int = Field(default=256, ge=1)
    seed: int = Field(default=0, ge=0)
    pe_levels: int = Field(default=4, ge=1)
    rff_sigma: float = Field(default=10.0, gt=0.0)
    rff_features: int = Field(default=128, ge=1)
    solver: EigSolver = EigSolver.JACOBI


class StudyTarget(BaseModel):
    """Scalar signal on a 2-D grid, before and after ordering-based smoothing."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    coords: np.ndarray  # (n, 2) normalized grid positions
    original: np.ndarray  # (n,)
    smoothed: np.ndarray  # (n,)


def _grid_coords(rows: int, cols: int) -> np.ndarray:
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    return normalize_coords(np.stack([rr.ravel(), cc.ravel()], axis=1), (rows, cols))


def matrix_target(matrix) -> StudyTarget:
    matrix = np.asarray(matrix, dtype=np.float64)
    smoothed, _ = smooth_matrix(matrix)
    return StudyTarget(
        coords=_grid_coords(*matrix.shape),
        original=matrix.reshape(-1),
        smoothed=smoothed.reshape(-1),
    )


def layer_target(bundle: WeightBundle, layer_idx: int, config: OrderingConfig | None = None) -> StudyTarget:
    """Centre taps of a layer's kernels in stored order and in greedy smoothed order."""
    if not 0 <= layer_idx < bundle.layer_count:
        raise InvalidInputError(f"Bundle has no layer {layer_idx}")
    layer = bundle.layers[layer_idx].astype(np.float64)
    f, c, k, _ = layer.shape
    taps = layer[:, :, k // 2, k // 2].reshape(-1)
    order = order_layer(layer, config or OrderingConfig())
    return StudyTarget(coords=_grid_coords(f, c), original=taps, smoothed=taps[order])


def load_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        if path.suffix == ".npy":
            return np.load(path)
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise FormatError(f"Cannot parse matrix file {path}: {exc}") from exc


def encode_study_inputs(coords: np.ndarray, kind: EncoderKind, settings: NtkStudySettings) -> np.ndarray:
    if kind == EncoderKind.PE:
        return pe_encode(coords, PeConfig(levels=settings.pe_levels))
    if kind == EncoderKind.RFF:
        rff_map = rff_init(coords.shape[1], settings.rff_features, settings.rff_sigma, settings.seed)
        return rff_encode(rff_map, coords)
    return coords


def ntk_study(
    target: StudyTarget,
    encoders: list[EncoderKind],
    settings: NtkStudySettings | None = None,
) -> list[NtkReport]:
    """Eigen-spectrum of each encoder's NTK and the projections of both targets onto it."""
    settings = settings or NtkStudySettings()
    reports = []
    for kind in encoders:
        X = encode_study_inputs(target.coords, kind, settings)
        h = settings.hidden
        model = mlp_init([X.shape[1], h, h, h, h, 1], seed=settings.seed, dtype=np.float64)
        H = empirical_ntk(model, X)
        for tag, Y in ((TargetTag.ORIGINAL, target.original), (TargetTag.SMOOTHED, target.smoothed)):
            reports.append(ntk_report(H, Y, kind, tag, settings.solver))
        logger.info("NTK study | encoder=%s | n=%d | lambda_max=%.4g", kind.value, X.shape[0], reports[-1].eigenvalues[0])
    return reports


def spectral_rows(reports: list[NtkReport]) -> list[SpectralRow]:
    return [
        SpectralRow(
            encoder=r.encoder,
            target=r.target,
            index=i,
            eigenvalue=float(lam),
            coefficient=float(abs(coef)),
        )
        for r in reports
        for i, (lam, coef) in enumerate(zip(r.eigenvalues, r.coefficients))
    ]


def write_spectral_csv(rows: list[SpectralRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["encoder", "target", "index", "eigenvalue", "coefficient"])
        for row in rows:
            writer.writerow([row.encoder.value, row.target.value, row.index, repr(row.eigenvalue), repr(row.coefficient)])


def spectrum_study(matrix, cutoff: float) -> dict[TargetTag, SpectrumReport]:
    target = np.asarray(matrix, dtype=np.float64)
    smoothed, _ = smooth_matrix(target)
    return {
        TargetTag.ORIGINAL: dft2_magnitude(target, cutoff),
        TargetTag.SMOOTHED: dft2_magnitude(smoothed, cutoff),
    }


def write_spectrum_csv(spectra: dict[TargetTag, SpectrumReport], path: str | Path) -> None:
    """One row per centred frequency bin: target, ky, kx, magnitude."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "ky", "kx", "magnitude"])
        for tag, report in spectra.items():
            rows, cols = report.magnitude.shape
            for i in range(rows):
                for j in range(cols):
                    writer.writerow([tag.value, i - rows // 2, j - cols // 2, repr(float(report.magnitude[i, j]))])
