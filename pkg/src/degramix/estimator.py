"""Closed-form EM estimation of the mixed-covariate degradation model.

Treating the per-unit latent vectors as missing data makes every update
closed form: the E-step is Gaussian conditioning per unit, the M-step is a
least-squares solve for the regression coefficients followed by moment
updates for the two variance components.  The convergence trace records the
marginal log-likelihood, which each full iteration provably does not
decrease.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import fpca as fpca_mod
from .data import DegradationDataset, ModelConfig
from .design import DesignMatrices, ZetaLayout, build_design_matrices

_SIGMA_EPS_FLOOR = 1e-16
_SIGMA_GAMMA_EIG_FLOOR = 1e-12  # relative to trace


class NumericalError(RuntimeError):
    """Raised when an update or likelihood evaluation loses finiteness."""


@dataclass(frozen=True)
class Parameters:
    """Estimable parameters: coefficients, noise variance, latent covariance."""

    zeta: np.ndarray
    sigma_eps2: float
    sigma_gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "zeta", np.asarray(self.zeta, dtype=float))
        object.__setattr__(self, "sigma_eps2", float(self.sigma_eps2))
        sg = np.asarray(self.sigma_gamma, dtype=float)
        if sg.ndim != 2 or sg.shape[0] != sg.shape[1]:
            raise ValueError("sigma_gamma must be a square matrix")
        object.__setattr__(self, "sigma_gamma", sg)
        if self.sigma_eps2 <= 0:
            raise ValueError("sigma_eps2 must be positive")

    @property
    def latent_dim(self) -> int:
        return self.sigma_gamma.shape[0]


@dataclass(frozen=True)
class LatentPosterior:
    """Per-unit conditional moments of the latent vector: mu (N, d), v (N, d, d)."""

    mu: np.ndarray
    v: np.ndarray

    @property
    def second_moments(self) -> np.ndarray:
        """E[gamma gamma^T | data] per unit: V_i + mu_i mu_i^T."""
        return self.v + self.mu[:, :, None] * self.mu[:, None, :]


@dataclass(frozen=True)
class FitResult:
    """Fitted model bundle: estimates, posteriors, trace, and fit context."""

    params: Parameters
    posterior: LatentPosterior
    loglik_trace: np.ndarray
    iterations: int
    converged: bool
    config: ModelConfig
    layout: ZetaLayout
    unit_ids: tuple
    r_support: float
    scores: np.ndarray | None
    fpca_models: tuple | None
    elapsed_seconds: float = 0.0

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])

    def unit_index(self, unit_id: str) -> int | None:
        try:
            return self.unit_ids.index(unit_id)
        except ValueError:
            return None


def _floored_sigma_gamma_inv(sigma_gamma: np.ndarray) -> np.ndarray:
    """Invert after flooring eigenvalues at a trace-relative level."""
    sg = (sigma_gamma + sigma_gamma.T) / 2.0
    evals, evecs = np.linalg.eigh(sg)
    floor = _SIGMA_GAMMA_EIG_FLOOR * float(np.trace(sg))
    evals = np.maximum(evals, floor)
    if np.any(evals <= 0.0):
        raise NumericalError("singular sigma_gamma after flooring")
    return (evecs / evals[None, :]) @ evecs.T


def _solve_zeta(dm: DesignMatrices, rhs: np.ndarray, ridge: bool) -> np.ndarray:
    if ridge:
        gram = dm.omega.T @ dm.omega
        jitter = 1e-8 * np.trace(gram) / dm.layout.size
        return np.linalg.solve(gram + jitter * np.eye(dm.layout.size), dm.omega.T @ rhs)
    return np.linalg.lstsq(dm.omega, rhs, rcond=None)[0]


def init_params(dm: DesignMatrices, config: ModelConfig) -> Parameters:
    """OLS start: zeta from least squares, residual variance, 0.1-scaled prior."""
    zeta0 = _solve_zeta(dm, dm.y, config.ridge_jitter)
    resid = dm.y - dm.omega @ zeta0
    sigma0 = float(resid @ resid) / dm.n_obs
    d = dm.layout.latent_dim
    sigma_gamma0 = 0.1 * max(sigma0, _SIGMA_EPS_FLOOR) * np.eye(d)
    return Parameters(zeta0, max(sigma0, _SIGMA_EPS_FLOOR), sigma_gamma0)


def e_step(params: Parameters, dm: DesignMatrices) -> LatentPosterior:
    """Conditional latent moments per unit.

    V_i = (sigma_gamma^-1 + Lambda_i^T Lambda_i / sigma_eps2)^-1 and
    mu_i = V_i Lambda_i^T (y_i - Omega_i zeta) / sigma_eps2.
    """
    n = dm.n_units
    d = params.latent_dim
    sg_inv = _floored_sigma_gamma_inv(params.sigma_gamma)
    mu = np.zeros((n, d))
    v = np.zeros((n, d, d))
    for i in range(n):
        lam = dm.lambda_units[i]
        precision = sg_inv + lam.T @ lam / params.sigma_eps2
        vi = np.linalg.inv(precision)
        vi = (vi + vi.T) / 2.0
        resid = dm.y_units[i] - dm.omega_units[i] @ params.zeta
        mu[i] = vi @ (lam.T @ resid) / params.sigma_eps2
        v[i] = vi
    return LatentPosterior(mu=mu, v=v)


def update_zeta(posterior: LatentPosterior, dm: DesignMatrices, ridge: bool = False) -> np.ndarray:
    """Coefficient update: least squares on the latent-adjusted response."""
    adjusted = dm.y - _stacked_latent_mean(posterior, dm)
    return _solve_zeta(dm, adjusted, ridge)


def _stacked_latent_mean(posterior: LatentPosterior, dm: DesignMatrices) -> np.ndarray:
    parts = [dm.lambda_units[i] @ posterior.mu[i] for i in range(dm.n_units)]
    return np.concatenate(parts)


def update_sigma_gamma(posterior: LatentPosterior, constrain_diagonal: bool = False) -> np.ndarray:
    """Latent covariance update: average posterior second moment over units."""
    sg = posterior.second_moments.mean(axis=0)
    sg = (sg + sg.T) / 2.0
    if constrain_diagonal:
        sg = np.diag(np.diag(sg))
    return sg


def update_sigma_eps(posterior: LatentPosterior, zeta: np.ndarray, dm: DesignMatrices) -> float:
    """Noise variance update from residuals and posterior latent moments."""
    second = posterior.second_moments
    total = 0.0
    for i in range(dm.n_units):
        resid = dm.y_units[i] - dm.omega_units[i] @ zeta
        lam = dm.lambda_units[i]
        total += float(resid @ resid)
        total -= 2.0 * float(resid @ (lam @ posterior.mu[i]))
        total += float(np.trace(lam.T @ lam @ second[i]))
    return max(total / dm.n_obs, _SIGMA_EPS_FLOOR)


def marginal_loglik(params: Parameters, dm: DesignMatrices) -> float:
    """Sum over units of the Gaussian log density with covariance
    Lambda_i Sigma_gamma Lambda_i^T + sigma_eps2 I."""
    total = 0.0
    d = params.latent_dim
    for i in range(dm.n_units):
        resid = dm.y_units[i] - dm.omega_units[i] @ params.zeta
        m = resid.size
        cov = params.sigma_eps2 * np.eye(m)
        if d:
            lam = dm.lambda_units[i]
            cov = cov + lam @ params.sigma_gamma @ lam.T
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"non-PSD marginal covariance for unit {dm.unit_ids[i]}") from exc
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        white = np.linalg.solve(chol, resid)
        total += -0.5 * (m * np.log(2.0 * np.pi) + logdet + float(white @ white))
    return total


def q_value(params: Parameters, posterior: LatentPosterior, dm: DesignMatrices) -> float:
    """Expected complete-data log-likelihood (up to its additive constant).

    The posterior moments must come from the E-step at the previous
    parameter values; ``params`` is the point being evaluated.
    """
    second = posterior.second_moments
    data_term = 0.0
    for i in range(dm.n_units):
        resid = dm.y_units[i] - dm.omega_units[i] @ params.zeta
        lam = dm.lambda_units[i]
        data_term += float(resid @ resid)
        data_term += float(np.trace(lam.T @ lam @ second[i]))
        data_term -= 2.0 * float(resid @ (lam @ posterior.mu[i]))
    q = -0.5 * dm.n_obs * np.log(params.sigma_eps2) - data_term / (2.0 * params.sigma_eps2)
    d = params.latent_dim
    if d:
        sign, logdet = np.linalg.slogdet(params.sigma_gamma)
        if sign <= 0:
            raise NumericalError("sigma_gamma must be positive definite in the Q function")
        sg_inv = np.linalg.inv(params.sigma_gamma)
        q += -0.5 * dm.n_units * logdet
        q += -0.5 * float(np.einsum("ab,nab->", sg_inv, second))
    return float(q)


def _fit_scores(ds: DegradationDataset, config: ModelConfig):
    """FPCA per functional covariate with a truncation shared across covariates."""
    curves_by_s = [np.vstack([u.curves[s] for u in ds.units]) for s in range(ds.n_functional)]
    models = [fpca_mod.fit_fpca(c, ds.r_grid) for c in curves_by_s]
    if config.k is not None:
        k = int(config.k)
    else:
        k = max(fpca_mod.select_k_by_fve(m, config.fve_threshold) for m in models)
    k = min(k, min(m.eigenvalues.size for m in models))
    models = [fpca_mod.with_k(m, k) for m in models]
    scores = np.stack([fpca_mod.project_scores(m, c) for m, c in zip(models, curves_by_s)], axis=1)
    return tuple(models), scores


def fit_em(
    ds: DegradationDataset,
    config: ModelConfig,
    max_iter: int = 500,
    tol: float = 1e-8,
    scores: np.ndarray | None = None,
    init: Parameters | None = None,
) -> FitResult:
    """Fit the model by EM (or by direct least squares when no latent term).

    Per iteration: E-step, then the zeta, sigma_gamma and sigma_eps2 updates
    in that order.  Stops when the relative marginal log-likelihood change
    drops below ``tol`` (``tol=0`` disables early stopping) or at
    ``max_iter``.  Passing ``scores`` skips the internal FPCA.
    """
    start = time.perf_counter()
    if isinstance(scores, fpca_mod.ScoreSet):
        scores = scores.values
    fpca_models = None
    if config.include_functional:
        if ds.n_functional < 1:
            raise ValueError("config includes functional covariates but dataset has none")
        if scores is None:
            fpca_models, scores = _fit_scores(ds, config)
        else:
            scores = np.asarray(scores, dtype=float)
    else:
        scores = None

    dm = build_design_matrices(ds, config, scores=scores)
    common = dict(
        config=config,
        layout=dm.layout,
        unit_ids=dm.unit_ids,
        r_support=ds.r_support,
        scores=scores,
        fpca_models=fpca_models,
    )

    if not config.include_latent:
        zeta = _solve_zeta(dm, dm.y, config.ridge_jitter)
        resid = dm.y - dm.omega @ zeta
        sigma = max(float(resid @ resid) / dm.n_obs, _SIGMA_EPS_FLOOR)
        params = Parameters(zeta, sigma, np.zeros((0, 0)))
        posterior = LatentPosterior(np.zeros((dm.n_units, 0)), np.zeros((dm.n_units, 0, 0)))
        ll = marginal_loglik(params, dm)
        return FitResult(
            params=params,
            posterior=posterior,
            loglik_trace=np.array([ll]),
            iterations=0,
            converged=True,
            elapsed_seconds=time.perf_counter() - start,
            **common,
        )

    params = init if init is not None else init_params(dm, config)
    trace = [marginal_loglik(params, dm)]
    converged = False
    iterations = 0
    for tau in range(1, max_iter + 1):
        posterior = e_step(params, dm)
        zeta = update_zeta(posterior, dm, ridge=config.ridge_jitter)
        sigma_gamma = update_sigma_gamma(posterior, config.constrain_sigma_gamma_diagonal)
        sigma_eps2 = update_sigma_eps(posterior, zeta, dm)
        params = Parameters(zeta, sigma_eps2, sigma_gamma)
        ll = marginal_loglik(params, dm)
        if not np.isfinite(ll):
            raise NumericalError(f"non-finite log-likelihood at iteration {tau}")
        trace.append(ll)
        iterations = tau
        if tol > 0:
            rel = abs(trace[-1] - trace[-2]) / max(abs(trace[-1]), 1e-12)
            if rel < tol:
                converged = True
                break

    posterior = e_step(params, dm)
    return FitResult(
        params=params,
        posterior=posterior,
        loglik_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        elapsed_seconds=time.perf_counter() - start,
        **common,
    )
