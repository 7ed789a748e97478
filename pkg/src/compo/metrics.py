"""Inception Score and Frechet distance over probability/feature matrices.

IS: exp of the mean KL divergence between per-image class distributions and
their split marginal, reported mean +/- population std over contiguous
splits. FID: squared Wasserstein-2 distance between Gaussians fitted to
feature matrices, with an eigendecomposition-based PSD matrix square root.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InsufficientSamples,
    InvalidDistribution,
    InvalidParameter,
    NotSymmetric,
    NumericalError,
)

log = logging.getLogger(__name__)

PROB_ROW_TOL = 1e-5
SYMMETRY_TOL = 1e-8
PSD_EIG_FLOOR = -1e-6
FID_CLAMP_FLOOR = -1e-6
COV_EPS = 1e-6


@dataclass(frozen=True)
class GaussianStats:
    """Mean vector and symmetric covariance fitted to a feature matrix."""

    mean: np.ndarray
    covariance: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _validate_prob_matrix(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise DimensionMismatch(f"expected an n x c matrix, got shape {probs.shape}")
    if np.any(probs < 0):
        row = int(np.argwhere(probs < 0)[0][0])
        raise InvalidDistribution(row, float(probs[row].sum()))
    sums = probs.sum(axis=1)
    bad = np.abs(sums - 1.0) > PROB_ROW_TOL
    if np.any(bad):
        row = int(np.argmax(bad))
        raise InvalidDistribution(row, float(sums[row]))
    return probs


def inception_score(probs: np.ndarray, splits: int = 10) -> tuple[float, float]:
    """Mean and population std of the per-split scores.

    Rows are partitioned into ``splits`` contiguous groups (remainder to the
    last); each split scores exp(mean_i KL(p_i || p_mean)) with 0*log 0 := 0.
    """
    probs = _validate_prob_matrix(probs)
    n = probs.shape[0]
    if splits < 1:
        raise InvalidParameter(f"splits must be >= 1, got {splits}")
    if n < splits:
        raise InsufficientSamples(f"{n} rows cannot fill {splits} splits")
    base = n // splits
    scores = []
    for s in range(splits):
        start = s * base
        end = n if s == splits - 1 else start + base
        part = probs[start:end]
        marginal = part.mean(axis=0)
        # The mean of a constant column is that constant; snap it bitwise so
        # identical rows give a log ratio of exactly zero (uniform input must
        # score exactly 1.0, not 1 + rounding noise).
        constant = np.all(part == part[0], axis=0)
        marginal[constant] = part[0, constant]
        # 0*log 0 := 0: rows with p=0 contribute nothing, and p>0 forces
        # marginal>0 in that column, so the log ratio is finite where used.
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(part > 0, part / marginal, 1.0)
            kl = np.sum(part * np.log(ratio), axis=1)
        scores.append(float(np.exp(kl.mean())))
    scores = np.asarray(scores)
    return float(scores.mean()), float(scores.std())


def fit_gaussian(features: np.ndarray) -> GaussianStats:
    """Column means and unbiased (n-1) covariance, symmetrized."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionMismatch(f"expected an n x d matrix, got shape {features.shape}")
    if not np.all(np.isfinite(features)):
        raise NumericalError("non-finite feature values")
    if features.shape[0] < 2:
        raise InsufficientSamples("need at least 2 rows to estimate covariance")
    mean = features.mean(axis=0)
    cov = np.cov(features, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    cov = (cov + cov.T) / 2.0
    return GaussianStats(mean=mean, covariance=cov)


def sqrtm_psd(a: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues in [-1e-6, 0) are treated as rounding noise and clamped to
    zero; anything more negative means the input is not PSD.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > SYMMETRY_TOL * scale:
        raise NotSymmetric(f"matrix asymmetry exceeds {SYMMETRY_TOL} (relative)")
    try:
        eigvals, eigvecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    if eigvals.min() < PSD_EIG_FLOOR * scale:
        raise NumericalError(
            f"matrix is not PSD: min eigenvalue {eigvals.min():g} below floor"
        )
    root = eigvecs @ np.diag(np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T
    return (root + root.T) / 2.0


def frechet_distance(g1: GaussianStats, g2: GaussianStats) -> float:
    """||mu1-mu2||^2 + Tr S1 + Tr S2 - 2 Tr sqrt(sqrt(S1) S2 sqrt(S1)).

    The symmetric-product form keeps every matrix square root PSD. When the
    product matrix comes out materially non-PSD (near-singular covariances),
    1e-6 is added to both diagonals and the computation retried, with a log
    line recording the stabilization.
    """
    if g1.dim != g2.dim:
        raise DimensionMismatch(f"dimension mismatch: {g1.dim} vs {g2.dim}")
    diff = g1.mean - g2.mean

    def trace_term(c1: np.ndarray, c2: np.ndarray) -> float:
        s = sqrtm_psd(c1)
        product = s @ c2 @ s
        product = (product + product.T) / 2.0
        return float(np.trace(sqrtm_psd(product)))

    def total(c1: np.ndarray, c2: np.ndarray) -> float:
        return (
            float(diff @ diff)
            + float(np.trace(c1))
            + float(np.trace(c2))
            - 2.0 * trace_term(c1, c2)
        )

    try:
        value = total(g1.covariance, g2.covariance)
    except NumericalError:
        log.warning("FID trace term unstable; adding %g to covariance diagonals", COV_EPS)
        eye = COV_EPS * np.eye(g1.dim)
        # All covariance terms use the stabilized matrices so the identity
        # FID(g, g) stays zero instead of drifting negative by 2*d*eps.
        value = total(g1.covariance + eye, g2.covariance + eye)
    if value < FID_CLAMP_FLOOR:
        raise NumericalError(f"FID came out {value:g}, below the numerical floor")
    return max(value, 0.0)


@dataclass(frozen=True)
class MetricsRow:
    """One (model, k) cell of the metrics table."""

    model: str
    k: int
    is_mean: float
    is_std: float
    fid: float


def _per_step_rate(values: list[tuple[int, float]]) -> float | None:
    """Mean per-unit-k geometric change rate, as a fraction (e.g. -0.17)."""
    values = sorted(values)
    if len(values) < 2 or any(v <= 0 for _, v in values):
        return None
    rates = []
    for (k0, v0), (k1, v1) in zip(values, values[1:]):
        rates.append((v1 / v0) ** (1.0 / (k1 - k0)) - 1.0)
    return float(np.mean(rates))


def metrics_table(rows: list[MetricsRow]) -> dict:
    """Arrange per-(model, k) IS/FID cells into a report table.

    Includes per-model trend flags (IS non-increasing in k, FID
    non-decreasing) and the mean per-component geometric change rates; trend
    fields are omitted when a model has a single k.
    """
    if not rows:
        raise InvalidParameter("no metrics rows to tabulate")
    models: dict[str, list[MetricsRow]] = {}
    for row in rows:
        models.setdefault(row.model, []).append(row)
    table = {"models": []}
    for model in sorted(models):
        cells = sorted(models[model], key=lambda r: r.k)
        entry = {
            "model": model,
            "cells": [
                {
                    "k": c.k,
                    "is_mean": c.is_mean,
                    "is_std": c.is_std,
                    "is": f"{c.is_mean:.2f} ± {c.is_std:.2f}",
                    "fid": c.fid,
                    "fid_text": f"{c.fid:.2f}",
                }
                for c in cells
            ],
        }
        if len(cells) > 1:
            is_values = [c.is_mean for c in cells]
            fid_values = [c.fid for c in cells]
            entry["is_decreasing"] = all(b <= a for a, b in zip(is_values, is_values[1:]))
            entry["fid_increasing"] = all(b >= a for a, b in zip(fid_values, fid_values[1:]))
            entry["is_rate_per_component"] = _per_step_rate([(c.k, c.is_mean) for c in cells])
            entry["fid_rate_per_component"] = _per_step_rate([(c.k, c.fid) for c in cells])
        table["models"].append(entry)
    return table


def metrics_table_csv(table: dict) -> str:
    """Render the table as CSV, one row per model, IS/FID columns per k."""
    k_values = sorted({c["k"] for m in table["models"] for c in m["cells"]})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["model"]
    for k in k_values:
        header += [f"is_k{k}", f"fid_k{k}"]
    writer.writerow(header)
    for m in table["models"]:
        by_k = {c["k"]: c for c in m["cells"]}
        row = [m["model"]]
        for k in k_values:
            cell = by_k.get(k)
            row += [cell["is"] if cell else "", cell["fid_text"] if cell else ""]
        writer.writerow(row)
    return buf.getvalue()
