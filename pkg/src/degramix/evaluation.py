"""Prediction, goodness-of-fit, information criteria, CV, and effect splits.

Cross-validation folds are drawn over units, not over time: a held-out unit
has no latent posterior, so unit-level folds measure honest generalization.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import BasisFamily, DegradationDataset, ModelConfig, UnitRecord, basis_columns
from .estimator import FitResult, NumericalError, fit_em
from .fpca import project_scores


@dataclass(frozen=True)
class ModelVariant:
    """Named model structure from the comparison family."""

    name: str
    config: ModelConfig
    use_micro_scalar: bool = False


@dataclass(frozen=True)
class Metrics:
    """One comparison-table row; ``error`` is set when the variant failed."""

    model: str
    r2: float = np.nan
    loglik: float = np.nan
    aic: float = np.nan
    bic: float = np.nan
    mse_train: float = np.nan
    mse_test: float = np.nan
    cv_error: float | None = None
    error: str | None = None


def table1_variants(k: int | None = None, fve_threshold: float = 0.95) -> dict:
    """The seven-model comparison family, keyed by name.

    Model 6 swaps the functional microstructure covariate for a user-supplied
    scalar one (plus its products with the other scalars), so its interaction
    lives entirely in the scalar block.
    """
    def cfg(**kw):
        base = dict(k=k, fve_threshold=fve_threshold, center_baseline=True)
        base.update(kw)
        return ModelConfig(**base)

    return {
        "Model1": ModelVariant("Model1", cfg(include_functional=False, include_interaction=False,
                                             include_latent=False)),
        "Model2": ModelVariant("Model2", cfg(include_scalar=False, include_interaction=False,
                                             include_latent=False)),
        "Model3": ModelVariant("Model3", cfg(include_interaction=False, include_latent=False)),
        "Model4": ModelVariant("Model4", cfg(include_latent=False)),
        "Model5": ModelVariant("Model5", cfg(include_latent=False,
                                             basis=BasisFamily("polynomial", 2))),
        "Model6": ModelVariant("Model6", cfg(include_functional=False, include_interaction=False,
                                             include_latent=False), use_micro_scalar=True),
        "Model7": ModelVariant("Model7", cfg()),
    }


def unit_scores(fit: FitResult, unit: UnitRecord) -> np.ndarray | None:
    """Scores of one unit under the fit's basis: stored if trained, else projected."""
    if not fit.config.include_functional:
        return None
    idx = fit.unit_index(unit.unit_id)
    if idx is not None and fit.scores is not None:
        return fit.scores[idx]
    if fit.fpca_models is None:
        raise ValueError(f"missing scores for unit {unit.unit_id}: fit carries no FPCA basis")
    return np.vstack([
        project_scores(m, unit.curves[s])[0] for s, m in enumerate(fit.fpca_models)
    ])


def coefficient_levels(fit: FitResult, unit: UnitRecord, use_latent: bool = True) -> np.ndarray:
    """Fitted per-level coefficients eta_hat for one unit."""
    layout = fit.layout
    parts = layout.split(fit.params.zeta)
    c = unit_scores(fit, unit)
    x = unit.scalars
    eta = parts["nu"].copy()
    eta += parts["beta"] @ x
    if c is not None:
        eta += fit.r_support * np.einsum("lsk,sk->l", parts["b"], c)
        eta += fit.r_support * np.einsum("lpsk,p,sk->l", parts["b_int"], x, c)
    if use_latent and fit.params.latent_dim:
        idx = fit.unit_index(unit.unit_id)
        if idx is None:
            raise ValueError(f"no latent posterior for unit {unit.unit_id}; "
                             "predict with use_latent=False")
        eta = eta + fit.posterior.mu[idx]
    return eta


def predict_unit(fit: FitResult, unit: UnitRecord, times=None, use_latent: bool = True) -> np.ndarray:
    """Predicted responses sum_l eta_hat_l phi_l(t) at the requested times."""
    if times is None:
        times = unit.times
    eta = coefficient_levels(fit, unit, use_latent=use_latent)
    phi = basis_columns(fit.config.basis, np.asarray(times, dtype=float), fit.layout.levels)
    return phi @ eta


def residual_metrics(y, y_hat):
    """(r2, mse) of predictions against observations pooled over everything."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.size < 2:
        raise ValueError("residual metrics need >= 2 paired observations")
    sse = float(np.sum((y - y_hat) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        raise ValueError("zero total sum of squares: constant responses")
    return 1.0 - sse / sst, sse / y.size


def information_criteria(loglik: float, p: int, n: int):
    """(aic, bic) = -2 loglik + p*k with k = 2 and k = ln(n)."""
    if p < 0 or n < 1:
        raise ValueError("p must be nonnegative and n positive")
    aic = -2.0 * loglik + 2.0 * p
    bic = -2.0 * loglik + p * float(np.log(n))
    return aic, bic


def count_parameters(fit: FitResult) -> int:
    """Free parameters: zeta entries + 1 (noise) + free sigma_gamma entries."""
    p = fit.layout.size + 1
    d = fit.params.latent_dim
    if d:
        p += d if fit.config.constrain_sigma_gamma_diagonal else d * (d + 1) // 2
    return p


def temporal_split(ds: DegradationDataset, fraction: float):
    """Per unit, first floor(fraction * m_i) observations train, rest test."""
    if not (0.0 < fraction < 1.0):
        raise ValueError("split fraction must lie in (0, 1)")
    train_units, test_units = [], []
    for u in ds.units:
        n_train = int(np.floor(fraction * u.n_obs))
        if n_train < 1:
            raise ValueError(f"unit {u.unit_id}: empty train split at fraction {fraction}")
        train_units.append(replace(u, times=u.times[:n_train], responses=u.responses[:n_train]))
        if n_train < u.n_obs:
            test_units.append(replace(u, times=u.times[n_train:], responses=u.responses[n_train:]))
    train = DegradationDataset(tuple(train_units), ds.r_grid)
    test = DegradationDataset(tuple(test_units), ds.r_grid) if test_units else None
    return train, test


def kfold_cv(ds: DegradationDataset, config: ModelConfig, k: int, seed: int,
             max_iter: int = 500, tol: float = 1e-8) -> float:
    """Unit-level k-fold CV: total squared error predicting held-out units."""
    n = ds.n_units
    if not (2 <= k <= n):
        raise ValueError("folds must satisfy 2 <= k <= n_units")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    folds = np.array_split(order, k)
    total = 0.0
    for fold in folds:
        if fold.size == 0:
            raise ValueError("empty cross-validation fold")
        held = set(int(i) for i in fold)
        train_units = tuple(u for i, u in enumerate(ds.units) if i not in held)
        fit = fit_em(DegradationDataset(train_units, ds.r_grid), config,
                     max_iter=max_iter, tol=tol)
        for i in sorted(held):
            unit = ds.units[i]
            pred = predict_unit(fit, unit, use_latent=False)
            total += float(np.sum((unit.responses - pred) ** 2))
    return total


def _with_micro_scalar(ds: DegradationDataset, micro: np.ndarray) -> DegradationDataset:
    """Scalar block for the scalar-microstructure variant: [x, micro, x*micro]."""
    micro = np.asarray(micro, dtype=float)
    if micro.shape != (ds.n_units,):
        raise ValueError("micro_scalar must hold one value per unit")
    units = []
    for u, m in zip(ds.units, micro):
        augmented = np.concatenate([u.scalars, [m], u.scalars * m])
        units.append(replace(u, scalars=augmented))
    return DegradationDataset(tuple(units), ds.r_grid)


def fit_and_score(ds: DegradationDataset, config: ModelConfig, split_fraction: float = 0.8,
                  max_iter: int = 500, tol: float = 1e-8, name: str = "model") -> tuple:
    """Split, fit on train, and score one config; returns (Metrics, FitResult)."""
    train, test = temporal_split(ds, split_fraction)
    fit = fit_em(train, config, max_iter=max_iter, tol=tol)

    y_train, yhat_train = [], []
    for u in train.units:
        y_train.append(u.responses)
        yhat_train.append(predict_unit(fit, u, use_latent=True))
    r2, mse_train = residual_metrics(np.concatenate(y_train), np.concatenate(yhat_train))

    mse_test = np.nan
    if test is not None:
        y_test, yhat_test = [], []
        for u in test.units:
            y_test.append(u.responses)
            yhat_test.append(predict_unit(fit, u, use_latent=True))
        y_test = np.concatenate(y_test)
        mse_test = float(np.mean((y_test - np.concatenate(yhat_test)) ** 2))

    ll = fit.loglik
    p = count_parameters(fit)
    aic, bic = information_criteria(ll, p, train.n_units)
    metrics = Metrics(model=name, r2=r2, loglik=ll, aic=aic, bic=bic,
                      mse_train=mse_train, mse_test=mse_test)
    return metrics, fit


def compare_models(ds: DegradationDataset, variants, split_fraction: float = 0.8,
                   micro_scalar: np.ndarray | None = None,
                   max_iter: int = 500, tol: float = 1e-8) -> list:
    """Fit every variant and collect the comparison table.

    A failing variant yields a row with its error message; the others still
    run.  ``micro_scalar`` supplies the per-unit scalar microstructure value
    required by variants flagged ``use_micro_scalar``.
    """
    rows = []
    for variant in variants:
        data = ds
        if variant.use_micro_scalar:
            if micro_scalar is None:
                rows.append(Metrics(model=variant.name,
                                    error="missing scalar microstructure covariate"))
                continue
            data = _with_micro_scalar(ds, micro_scalar)
        try:
            metrics, _ = fit_and_score(data, variant.config, split_fraction,
                                       max_iter=max_iter, tol=tol, name=variant.name)
        except (ValueError, NumericalError) as exc:
            metrics = Metrics(model=variant.name, error=str(exc))
        rows.append(metrics)
    return rows


@dataclass(frozen=True)
class EffectRow:
    """One unit/level split of the fitted coefficient into its components."""

    unit_id: str
    level: int
    population: float
    scalar_effect: float
    marginal_effect: float
    interaction_effect: float
    latent_effect: float

    @property
    def eta(self) -> float:
        return (self.population + self.scalar_effect + self.marginal_effect
                + self.interaction_effect + self.latent_effect)


def effect_decomposition(fit: FitResult, ds: DegradationDataset) -> list:
    """Per unit and level: population, scalar, functional-marginal,
    interaction and latent contributions to the fitted coefficient."""
    layout = fit.layout
    parts = layout.split(fit.params.zeta)
    rows = []
    for u in ds.units:
        idx = fit.unit_index(u.unit_id)
        c = unit_scores(fit, u)
        x = u.scalars
        for li, level in enumerate(layout.levels):
            marginal = 0.0
            interaction = 0.0
            if c is not None:
                marginal = fit.r_support * float(np.sum(parts["b"][li] * c))
                interaction = fit.r_support * float(
                    np.sum(x[:, None, None] * parts["b_int"][li] * c[None])
                )
            latent = float(fit.posterior.mu[idx][li]) if (fit.params.latent_dim and idx is not None) else 0.0
            rows.append(EffectRow(
                unit_id=u.unit_id,
                level=level,
                population=float(parts["nu"][li]),
                scalar_effect=float(parts["beta"][li] @ x),
                marginal_effect=marginal,
                interaction_effect=interaction,
                latent_effect=latent,
            ))
    return rows
