"""Recursive multi-fidelity co-kriging.

Levels are fitted independently from the coarsest up (the nesting of the
designs decouples the estimations), then predictions run the recursion: each
level's surrogate is the evaluated adjustment times the level below plus its
own Gaussian process correction.  Simple mode treats the regression
coefficients and process variances as fixed at their posterior values;
universal mode propagates their posterior uncertainty into the variance.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import DegeneratePosteriorError, MFCokrigError, NestingError, ShapeError
from .gpcore import FittedLevel, LevelData, PriorSpec, fit_level
from .kernels import DEFAULT_NUGGET, cross_correlation

NEST_ATOL = 1e-12
MODES = ("simple", "universal")

# Below this posterior shape the fixed-variance factor Q/(2(a-1)) blows up.
A_WARN_THRESHOLD = 1.5


@dataclass(frozen=True)
class MultiFidelityModel:
    """Fitted levels ordered from coarsest to finest, plus their nesting.

    ``levels[t]`` pairs the t-th level's data with its estimation results;
    ``nest_maps[t]`` locates each point of level t inside level t-1 (``None``
    at the coarsest level).
    """

    levels: tuple
    nest_maps: tuple

    @property
    def nlevels(self) -> int:
        return len(self.levels)

    @property
    def dim(self) -> int:
        return self.levels[0][0].dim

    @property
    def data(self) -> tuple:
        return tuple(ld for ld, _ in self.levels)

    @property
    def fits(self) -> tuple:
        return tuple(fl for _, fl in self.levels)


@dataclass(frozen=True)
class Prediction:
    """Per-level predictions at a batch of query points.

    ``mean`` and ``variance`` have shape (s, m) for s levels and m points;
    ``rho_hat`` has shape (s-1, m) and holds the evaluated adjustment linking
    each level to the one below.
    """

    mode: str
    mean: np.ndarray
    variance: np.ndarray
    rho_hat: np.ndarray

    @property
    def top_mean(self) -> np.ndarray:
        return self.mean[-1]

    @property
    def top_variance(self) -> np.ndarray:
        return self.variance[-1]


def _match_nested(fine: np.ndarray, coarse: np.ndarray, level: int) -> np.ndarray:
    """Index of each fine point inside the coarse design, or a nesting error."""
    idx = np.empty(fine.shape[0], dtype=int)
    for k, x in enumerate(fine):
        hits = np.flatnonzero(np.max(np.abs(coarse - x), axis=1) <= NEST_ATOL)
        if hits.size == 0:
            raise NestingError(
                f"point {k} of level {level} ({x.tolist()}) does not appear "
                f"in the design of level {level - 1}"
            )
        if hits.size > 1:
            raise NestingError(
                f"point {k} of level {level} matches {hits.size} points of "
                f"level {level - 1}; designs must not contain duplicates"
            )
        idx[k] = hits[0]
    if np.unique(idx).size != idx.size:
        raise NestingError(f"nesting map of level {level} is not injective")
    return idx


def fit(
    levels,
    priors=None,
    kernels=None,
    objective: str = "reml",
    bounds=None,
    restarts: int = 10,
    seed: int = 0,
    nugget: float = DEFAULT_NUGGET,
    family: str = "matern52",
) -> MultiFidelityModel:
    """Fit the full multi-level model, coarsest level first.

    Parameters
    ----------
    levels : sequence of LevelData
        Ordered from coarsest to finest.  Every level after the first must
        carry its adjustment basis and lower-level observations, and its
        design must be a subset of the previous one.
    priors : sequence of PriorSpec, optional
        Defaults to non-informative everywhere.
    kernels : sequence of (KernelSpec or None), optional
        Fixed length scales per level; ``None`` entries are estimated.
    objective : str
        ``"reml"`` or ``"loo_cv"``, used wherever length scales are estimated.
    bounds, restarts, seed, nugget, family :
        Forwarded to the per-level search; the seed is advanced by one per
        level so restarts differ across levels but stay reproducible.

    Returns
    -------
    MultiFidelityModel
    """
    levels = list(levels)
    s = len(levels)
    if s < 1:
        raise ShapeError("at least one level is required")
    if priors is None:
        priors = [PriorSpec.noninformative()] * s
    if kernels is None:
        kernels = [None] * s
    if len(priors) != s or len(kernels) != s:
        raise ShapeError(f"expected {s} priors and kernels, got {len(priors)} and {len(kernels)}")
    dim = levels[0].dim
    nest_maps = [None]
    for t in range(1, s):
        ld = levels[t]
        if ld.dim != dim:
            raise ShapeError(f"level {t + 1} has dimension {ld.dim}, expected {dim}")
        if ld.g_basis is None:
            raise ShapeError(f"level {t + 1} needs an adjustment basis and lower-level observations")
        idx = _match_nested(ld.design, levels[t - 1].design, t + 1)
        linked = levels[t - 1].observations[idx]
        if not np.allclose(ld.lower_observations, linked, rtol=1e-9, atol=1e-9):
            raise NestingError(
                f"lower-level observations of level {t + 1} disagree with the "
                f"observations recorded at level {t} (max difference "
                f"{np.max(np.abs(ld.lower_observations - linked)):.3e})"
            )
        nest_maps.append(idx)
    if levels[0].g_basis is not None:
        raise ShapeError("the coarsest level cannot have an adjustment basis")
    fitted = []
    for t, (ld, prior, kern) in enumerate(zip(levels, priors, kernels)):
        try:
            fitted.append(
                fit_level(
                    ld, kernel=kern, prior=prior, objective=objective,
                    bounds=bounds, restarts=restarts, seed=seed + t,
                    nugget=nugget, family=family,
                )
            )
        except MFCokrigError as exc:
            exc.args = (f"level {t + 1}: {exc.args[0]}",) + exc.args[1:]
            raise
    return MultiFidelityModel(
        levels=tuple(zip(levels, fitted)),
        nest_maps=tuple(nest_maps),
    )


def _as_points(model: MultiFidelityModel, x) -> np.ndarray:
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ShapeError(f"query points must have {model.dim} columns, got shape {X.shape}")
    return X


def _predict(model: MultiFidelityModel, X: np.ndarray, mode: str, sigma2) -> Prediction:
    s = model.nlevels
    m = X.shape[0]
    mean = np.empty((s, m))
    variance = np.empty((s, m))
    rho_hat = np.empty((max(s - 1, 0), m))
    mu_prev = None
    var_prev = None
    for t, (ld, fl) in enumerate(model.levels):
        r = cross_correlation(ld.design, X, fl.kernel)
        w = cho_solve((fl.R_factor, True), r)
        fvals = ld.f_basis.evaluate(X)
        q = fl.n_adjust
        beta = fl.trend_mean[q:]
        own_mean = fvals @ beta + r.T @ fl.resid_weights
        one_minus = np.maximum(1.0 - np.einsum("nm,nm->m", r, w), 0.0)
        if t == 0:
            mu = own_mean
            var = sigma2[t] * one_minus
            h = fvals
        else:
            g = ld.g_basis.evaluate(X)
            rho = g @ fl.trend_mean[:q]
            rho_hat[t - 1] = rho
            mu = rho * mu_prev + own_mean
            var = rho**2 * var_prev + sigma2[t] * one_minus
            h = np.hstack([g * mu_prev[:, None], fvals])
        if mode == "universal":
            U = h - w.T @ fl.H
            cov = sigma2[t] * fl.trend_cov_scale
            var = var + np.maximum(np.einsum("ij,jk,ik->i", U, cov, U), 0.0)
        mean[t] = mu
        variance[t] = var
        mu_prev, var_prev = mu, var
    return Prediction(mode=mode, mean=mean, variance=variance, rho_hat=rho_hat)


def _check_sigma2(model: MultiFidelityModel, sigma2) -> np.ndarray:
    if sigma2 is None:
        sigma2 = [fl.sigma2_eml for fl in model.fits]
    sig = np.asarray(sigma2, dtype=float).ravel()
    if sig.size != model.nlevels:
        raise ShapeError(f"expected {model.nlevels} variances, got {sig.size}")
    if np.any(~np.isfinite(sig)) or np.any(sig <= 0.0):
        raise ShapeError(f"per-level variances must be finite and positive, got {sig}")
    return sig


def predict_simple(model: MultiFidelityModel, x, sigma2=None) -> Prediction:
    """Recursive co-kriging with fixed coefficients and variances.

    Parameters
    ----------
    model : MultiFidelityModel
    x : array_like, shape (d,) or (m, d)
        Query point or points.
    sigma2 : sequence of float, optional
        Fixed per-level process variances; defaults to each level's
        marginal-likelihood estimate.

    Returns
    -------
    Prediction
    """
    X = _as_points(model, x)
    return _predict(model, X, "simple", _check_sigma2(model, sigma2))


def predict_universal(model: MultiFidelityModel, x) -> Prediction:
    """Recursive universal co-kriging.

    Uses the posterior mean of each process variance and adds the posterior
    uncertainty of the adjustment and trend coefficients to the variance.
    Requires every level's posterior shape to exceed one.
    """
    X = _as_points(model, x)
    sigma2 = []
    for t, fl in enumerate(model.fits):
        if fl.a <= 1.0:
            raise DegeneratePosteriorError(
                f"level {t + 1} has posterior shape a = {fl.a:g} <= 1; the "
                f"universal variance is undefined. Add runs at this level or "
                f"use simple prediction with a fixed variance."
            )
        if fl.a < A_WARN_THRESHOLD:
            warnings.warn(
                f"level {t + 1} has posterior shape a = {fl.a:g} < "
                f"{A_WARN_THRESHOLD}; universal variances will be unstable",
                stacklevel=2,
            )
        sigma2.append(fl.sigma2_mean)
    return _predict(model, X, "universal", np.asarray(sigma2))


def predict_batch(model: MultiFidelityModel, X, mode: str = "simple", sigma2=None) -> Prediction:
    """Predict at many points in one call.

    Elementwise identical to single-point prediction; provided as the bulk
    entry point for tabulated queries.
    """
    if mode not in MODES:
        raise ShapeError(f"unknown mode {mode!r}, expected one of {MODES}")
    if mode == "universal":
        if sigma2 is not None:
            raise ShapeError("universal mode derives its variances from the posterior")
        return predict_universal(model, X)
    return predict_simple(model, X, sigma2=sigma2)
