"""Grid FPCA: Karhunen-Loeve reduction of functional covariates to scores.

Eigenfunctions are normalized so that (1/R) * integral(psi_j * psi_k) equals
the Kronecker delta under trapezoid quadrature; with that convention a
truncated expansion makes the R-weighted score products in the regression
design exact identities rather than approximations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

_EIG_CLAMP = 1e-12


def trapezoid_weights(r_grid: np.ndarray) -> np.ndarray:
    """Trapezoid quadrature weights for an ascending grid."""
    r = np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("grid must hold at least two points")
    w = np.zeros(r.size)
    gaps = np.diff(r)
    w[:-1] += gaps / 2.0
    w[1:] += gaps / 2.0
    return w


@dataclass(frozen=True)
class FpcaModel:
    """Fitted eigensystem of one functional covariate.

    ``eigenfunctions`` is (K_full, G); ``k`` is the active truncation used by
    projection and reconstruction.
    """

    r_grid: np.ndarray
    mean_curve: np.ndarray
    eigenfunctions: np.ndarray
    eigenvalues: np.ndarray
    fve_trace: np.ndarray
    k: int

    @property
    def r_support(self) -> float:
        return float(self.r_grid[-1] - self.r_grid[0])

    @property
    def inner_weights(self) -> np.ndarray:
        """Weights of the (1/R)-normalized trapezoid inner product."""
        return trapezoid_weights(self.r_grid) / self.r_support


@dataclass(frozen=True)
class ScoreSet:
    """Functional principal component scores, shape (N, S, K)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 3:
            raise ValueError("scores must have shape (n_units, S, K)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("scores must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_components(self) -> int:
        return self.values.shape[2]


def fit_fpca(curves: np.ndarray, r_grid: np.ndarray) -> FpcaModel:
    """Eigendecompose the sample covariance of curves sampled on a shared grid.

    The pointwise sample mean is removed, trapezoid weights are folded in
    symmetrically, and eigenvalues below zero from solver noise are clamped.
    Returns all eigenpairs with ``k`` preset to the count of positive
    eigenvalues; callers narrow ``k`` via :func:`select_k_by_fve`.
    """
    x = np.asarray(curves, dtype=float)
    if x.ndim != 2:
        raise ValueError("curves must be an (n_units, G) array")
    n, g = x.shape
    if n < 2:
        raise ValueError("FPCA needs at least two curves")
    r = np.asarray(r_grid, dtype=float)
    if r.size != g:
        raise ValueError("grid mismatch between curves and r_grid")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)

    w = trapezoid_weights(r) / float(r[-1] - r[0])
    sw = np.sqrt(w)
    sym = sw[:, None] * cov * sw[None, :]
    sym = (sym + sym.T) / 2.0
    evals, evecs = np.linalg.eigh(sym)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    evals = np.where(evals < 0.0, 0.0, evals)

    total = float(evals.sum())
    # rounding in the sample mean leaves ~eps**2 mass even for identical curves
    scale = float(np.mean((x * x) @ w))
    if total <= 1e-24 * max(scale, 1.0):
        raise ValueError("degenerate covariance: all curves are identical")

    psi = evecs / sw[:, None]
    for j in range(psi.shape[1]):
        peak = np.argmax(np.abs(psi[:, j]))
        if psi[peak, j] < 0:
            psi[:, j] = -psi[:, j]

    fve = np.cumsum(evals) / total
    k_default = int(np.count_nonzero(evals > 0.0))
    return FpcaModel(
        r_grid=r.copy(),
        mean_curve=mean,
        eigenfunctions=psi.T,
        eigenvalues=evals,
        fve_trace=fve,
        k=k_default,
    )


def select_k_by_fve(model: FpcaModel, threshold: float) -> int:
    """Smallest truncation whose cumulative variance fraction meets threshold."""
    if not (0.0 < threshold <= 1.0):
        raise ValueError("FVE threshold must lie in (0, 1]")
    reached = np.flatnonzero(model.fve_trace >= threshold - _EIG_CLAMP)
    return int(reached[0]) + 1


def with_k(model: FpcaModel, k: int) -> FpcaModel:
    if not (1 <= k <= model.eigenvalues.size):
        raise ValueError(f"k must lie in 1..{model.eigenvalues.size}")
    return replace(model, k=int(k))


def project_scores(model: FpcaModel, curves: np.ndarray) -> np.ndarray:
    """Scores of curves against the leading k eigenfunctions, shape (N, k)."""
    x = np.atleast_2d(np.asarray(curves, dtype=float))
    if x.shape[1] != model.r_grid.size:
        raise ValueError("grid mismatch: curves do not match the fitted grid")
    weighted_psi = model.eigenfunctions[: model.k] * model.inner_weights[None, :]
    return (x - model.mean_curve) @ weighted_psi.T


def reconstruct(model: FpcaModel, scores: np.ndarray, k: int | None = None) -> np.ndarray:
    """Mean curve plus the score-weighted sum of the first k eigenfunctions."""
    if k is None:
        k = model.k
    if k > model.eigenvalues.size:
        raise ValueError("k exceeds the number of fitted components")
    s = np.atleast_2d(np.asarray(scores, dtype=float))
    if k == 0:
        return np.tile(model.mean_curve, (s.shape[0], 1))
    return model.mean_curve + s[:, :k] @ model.eigenfunctions[:k]
