"""Principal component analysis on standardized features via cyclic Jacobi."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import ColumnSchema, Dataset, Kind
from .errors import NumericError


def jacobi_eigen(a, tol: float = 1e-10, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps rotate every off-diagonal pair in row order until the largest
    off-diagonal magnitude drops below ``tol * max(1, ||a||_F)``.

    Returns:
        (eigenvalues, eigenvectors): eigenvalues descending; column ``i`` of
        the vector matrix pairs with eigenvalue ``i``, sign fixed so its
        largest-magnitude entry is positive.

    Raises:
        ValueError: ``a`` is not square or not symmetric within 1e-9.
        NumericError: no convergence within ``max_sweeps``.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-9:
        raise ValueError("matrix is not symmetric")
    a = (a + a.T) / 2.0
    n = a.shape[0]
    v = np.eye(n)
    limit = tol * max(1.0, float(np.linalg.norm(a)))

    def off_max():
        if n < 2:
            return 0.0
        return float(np.max(np.abs(a[np.triu_indices(n, 1)])))

    sweeps = 0
    while off_max() >= limit:
        if sweeps == max_sweeps:
            raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps")
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                gap = a[q, q] - a[p, p]
                if abs(gap) * 1e-150 > abs(apq):
                    # tiny rotation; theta**2 would overflow
                    t = apq / gap
                else:
                    theta = gap / (2.0 * apq)
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta == 0.0:
                        t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    v = v[:, order]
    for i in range(n):
        if v[np.argmax(np.abs(v[:, i])), i] < 0:
            v[:, i] = -v[:, i]
    return values, v


@dataclass(frozen=True, eq=False)
class PcaModel:
    feature_names: tuple[str, ...]
    kept: tuple[str, ...]
    means: np.ndarray
    scales: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray
    n_pc: int
    threshold: float

    @property
    def dropped(self) -> tuple[str, ...]:
        return tuple(n for n in self.feature_names if n not in self.kept)

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return explained_variance_ratio(self.eigenvalues)

    def standardize(self, d: Dataset) -> np.ndarray:
        if list(d.feature_names) != list(self.feature_names):
            raise ValueError(f"schema mismatch: PCA fitted on {list(self.feature_names)}, "
                             f"got {d.feature_names}")
        return (d.feature_matrix(self.kept) - self.means) / self.scales

    def project(self, z: np.ndarray, n_components: int | None = None) -> np.ndarray:
        n_components = self.n_pc if n_components is None else n_components
        return z @ self.components[:, :n_components]

    def reconstruct(self, projected: np.ndarray) -> np.ndarray:
        """Standardized rows recovered from their leading-component scores."""
        return projected @ self.components[:, : projected.shape[1]].T


def explained_variance_ratio(eigenvalues) -> np.ndarray:
    values = np.asarray(eigenvalues, dtype=np.float64)
    total = values.sum()
    if total <= 0:
        raise NumericError("covariance spectrum has zero total variance")
    return values / total


def components_for(eigenvalues, threshold: float) -> int:
    """Smallest m whose leading m eigenvalues explain at least ``threshold``."""
    values = np.asarray(eigenvalues, dtype=np.float64)
    cum = np.cumsum(values) / values.sum()
    cum[-1] = 1.0  # the full spectrum explains everything, whatever the rounding
    return int(np.searchsorted(cum, threshold, side="left")) + 1


def fit_pca(d: Dataset, threshold: float = 0.95, tol: float = 1e-10) -> PcaModel:
    """Standardize each feature, eigendecompose the covariance, keep enough
    components to reach ``threshold`` explained variance.

    Zero-variance features are dropped with a warning.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if d.rows < 2:
        raise ValueError("PCA needs at least two rows")
    names = tuple(d.feature_names)
    X = d.feature_matrix()
    means = X.mean(axis=0)
    scales = X.std(axis=0, ddof=1)
    varying = scales > 0
    if not varying.all():
        dropped = [n for n, keep in zip(names, varying) if not keep]
        warnings.warn(f"dropping zero-variance features: {', '.join(dropped)}", stacklevel=2)
    if not varying.any():
        raise ValueError("every feature has zero variance")
    kept = tuple(n for n, keep in zip(names, varying) if keep)
    means = means[varying]
    scales = scales[varying]
    z = (X[:, varying] - means) / scales
    cov = (z.T @ z) / (d.rows - 1)
    values, vectors = jacobi_eigen(cov, tol=tol)
    if values.min() < -1e-9:
        raise NumericError(f"covariance has a negative eigenvalue {values.min():g}")
    values = np.clip(values, 0.0, None)
    return PcaModel(
        feature_names=names,
        kept=kept,
        means=means,
        scales=scales,
        eigenvalues=values,
        components=vectors,
        n_pc=components_for(values, threshold),
        threshold=float(threshold),
    )


def transform_pca(m: PcaModel, d: Dataset) -> Dataset:
    """Project onto the selected components; columns ``pc1..pcN`` plus the label."""
    scores = m.project(m.standardize(d))
    names = [f"pc{i + 1}" for i in range(m.n_pc)]
    schema = [ColumnSchema(n, Kind.NUMERIC) for n in names]
    schema.append(ColumnSchema(d.label_name, Kind.LABEL))
    data = {n: scores[:, i] for i, n in enumerate(names)}
    data[d.label_name] = d.labels
    return Dataset.from_columns(schema, data)
