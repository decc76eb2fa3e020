"""Orthonormal temporal bases and spatial coefficients via SVD.

The centered S x T data matrix is factored (after scaling by (S-1)^-1/2)
into K = min(T, S-1) orthonormal temporal basis functions and spatial
coefficients whose per-component variances equal the squared singular
values. Truncating to the leading components compresses the data and
strips noise; `reconstruct` inverts the factorization.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import CenteredDataset
from .errors import ConfigurationError, NumericError, PreconditionError, ShapeError

_CSV_FMT = "%.17g"


@dataclass
class EofBasis:
    """Full-rank decomposition of a centered station-by-time matrix.

    temporal_bases: (K, T), orthonormal rows.
    spatial_coeffs: (S, K), column k holds the coefficients of basis k at the
        source stations; columns are uncorrelated with nonincreasing variance.
    singular_values: (K,), nonincreasing, nonnegative.
    mean_series: (T,) per-time spatial mean removed before decomposition.
    """

    temporal_bases: np.ndarray
    spatial_coeffs: np.ndarray
    singular_values: np.ndarray
    mean_series: np.ndarray

    @property
    def k_total(self) -> int:
        return int(self.singular_values.shape[0])

    @property
    def n_times(self) -> int:
        return int(self.temporal_bases.shape[1])


@dataclass
class TruncatedBasis(EofBasis):
    """The leading k_used components of a full basis."""

    k_used: int = 0
    k_full: int = 0
    variance_captured: float = 1.0


def decompose(cd: CenteredDataset) -> EofBasis:
    """SVD of the scaled centered matrix.

    The factorization treats stations as samples and time indices as
    variables; singular values squared equal the eigenvalues of the
    empirical temporal covariance matrix. The sign of each basis is fixed
    so its largest-magnitude entry is positive (first such entry on ties),
    which makes repeated decompositions bitwise identical.
    """
    z = np.asarray(cd.centered, dtype=float)
    s_count, t_count = z.shape
    if s_count < 2 or t_count < 1:
        raise PreconditionError(f"need S >= 2 and T >= 1, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NumericError("centered data contains non-finite entries")

    scale = np.sqrt(s_count - 1.0)
    u, sv, vt = np.linalg.svd(z / scale, full_matrices=False)
    k = min(t_count, s_count - 1)
    u, sv, vt = u[:, :k].copy(), sv[:k].copy(), vt[:k].copy()

    for comp in range(k):
        row = vt[comp]
        lead = np.argmax(np.abs(row))
        if row[lead] < 0:
            vt[comp] = -row
            u[:, comp] = -u[:, comp]

    coeffs = u * (sv * scale)
    return EofBasis(
        temporal_bases=vt,
        spatial_coeffs=coeffs,
        singular_values=sv,
        mean_series=np.asarray(cd.mean_series, dtype=float).copy(),
    )


def explained_variance(basis: EofBasis) -> np.ndarray:
    """Fraction of variance per component; all zeros for degenerate input."""
    s2 = basis.singular_values ** 2
    total = s2.sum()
    if total == 0.0:
        return np.zeros_like(s2)
    return s2 / total


def truncate(basis: EofBasis, k: int | None = None,
             threshold: float | None = None) -> TruncatedBasis:
    """Keep the leading components, by fixed count or variance threshold.

    With `threshold` t in (0, 1], the smallest k whose cumulative explained
    variance reaches t is selected.
    """
    if (k is None) == (threshold is None):
        raise ConfigurationError("pass exactly one of k / threshold")
    k_full = basis.k_total
    s2 = basis.singular_values ** 2
    cum = np.cumsum(s2)
    total = cum[-1] if k_full else 0.0
    if threshold is not None:
        if not 0.0 < threshold <= 1.0:
            raise ConfigurationError(f"threshold must be in (0, 1], got {threshold}")
        if total == 0.0:
            k_used = k_full
        else:
            k_used = int(np.argmax(cum >= threshold * total)) + 1
    else:
        k_used = int(k)
        if not 1 <= k_used <= k_full:
            raise ConfigurationError(f"k must be in [1, {k_full}], got {k}")
    captured = float(cum[k_used - 1] / total) if total else 0.0
    return TruncatedBasis(
        temporal_bases=basis.temporal_bases[:k_used].copy(),
        spatial_coeffs=basis.spatial_coeffs[:, :k_used].copy(),
        singular_values=basis.singular_values[:k_used].copy(),
        mean_series=basis.mean_series.copy(),
        k_used=k_used,
        k_full=k_full,
        variance_captured=captured,
    )


def reconstruct(coeffs: np.ndarray, basis: EofBasis, add_mean: bool = False) -> np.ndarray:
    """Recompose signals from coefficients: rows x temporal bases (+ mean)."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if coeffs.shape[1] != basis.temporal_bases.shape[0]:
        raise ShapeError(
            f"coeffs have {coeffs.shape[1]} columns, basis has "
            f"{basis.temporal_bases.shape[0]} components"
        )
    out = coeffs @ basis.temporal_bases
    if add_mean:
        out = out + basis.mean_series
    return out


def project(centered_values: np.ndarray, basis: EofBasis) -> np.ndarray:
    """Coefficients of centered rows in the basis (exact for source stations,
    least-squares for any other series on the same time axis)."""
    z = np.atleast_2d(np.asarray(centered_values, dtype=float))
    if z.shape[1] != basis.n_times:
        raise ShapeError(f"expected {basis.n_times} time steps, got {z.shape[1]}")
    return z @ basis.temporal_bases.T


# ---------------------------------------------------------------------------
# Persistence: phi.csv (components x T), alpha.csv (S x components),
# sigma.csv, mean.csv, metadata.json
# ---------------------------------------------------------------------------

def save_basis(basis: EofBasis, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "phi.csv", basis.temporal_bases, fmt=_CSV_FMT, delimiter=",")
    np.savetxt(directory / "alpha.csv", basis.spatial_coeffs, fmt=_CSV_FMT, delimiter=",")
    np.savetxt(directory / "sigma.csv", basis.singular_values, fmt=_CSV_FMT, delimiter=",")
    np.savetxt(directory / "mean.csv", basis.mean_series, fmt=_CSV_FMT, delimiter=",")
    meta = {
        "stations": int(basis.spatial_coeffs.shape[0]),
        "times": basis.n_times,
        "k_total": basis.k_full if isinstance(basis, TruncatedBasis) else basis.k_total,
        "k_used": basis.k_used if isinstance(basis, TruncatedBasis) else basis.k_total,
        "variance_captured": (basis.variance_captured
                              if isinstance(basis, TruncatedBasis) else 1.0),
    }
    with open(directory / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_basis(directory) -> EofBasis:
    directory = Path(directory)
    with open(directory / "metadata.json") as fh:
        meta = json.load(fh)
    phi = np.loadtxt(directory / "phi.csv", delimiter=",", ndmin=2)
    alpha = np.loadtxt(directory / "alpha.csv", delimiter=",", ndmin=2)
    sigma = np.atleast_1d(np.loadtxt(directory / "sigma.csv", delimiter=","))
    mean = np.atleast_1d(np.loadtxt(directory / "mean.csv", delimiter=","))
    if meta["k_used"] == meta["k_total"]:
        return EofBasis(phi, alpha, sigma, mean)
    return TruncatedBasis(
        temporal_bases=phi,
        spatial_coeffs=alpha,
        singular_values=sigma,
        mean_series=mean,
        k_used=int(meta["k_used"]),
        k_full=int(meta["k_total"]),
        variance_captured=float(meta["variance_captured"]),
    )
