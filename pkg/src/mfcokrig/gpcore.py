"""Single-level Gaussian process estimation.

Everything here concerns one fidelity level at a time: assembling the
experience matrix (adjustment columns followed by trend columns), the
conjugate posteriors of the regression coefficients and of the process
variance under a non-informative or an informative prior, the concentrated
restricted likelihood of the length scales, and its numerical optimization.
The multi-level recursion lives in :mod:`mfcokrig.model`.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import cho_solve
from scipy.optimize import minimize

from .basis import BasisSpec
from .errors import (
    DegeneratePosteriorError,
    IllConditionedError,
    InsufficientDataError,
    OptimizationError,
    ShapeError,
    SingularSystemError,
)
from .kernels import DEFAULT_NUGGET, KernelSpec, correlation_matrix

OBJECTIVES = ("reml", "loo_cv")


@dataclass(frozen=True)
class LevelData:
    """Design, observations and bases for one fidelity level.

    Parameters
    ----------
    design : ndarray, shape (n, d)
        Observation sites.
    observations : ndarray, shape (n,)
        Response values at the design.
    f_basis : BasisSpec
        Trend basis of this level.
    g_basis : BasisSpec, optional
        Adjustment basis scaling the level below.  Present exactly when the
        level has a predecessor, together with ``lower_observations``.
    lower_observations : ndarray, shape (n,), optional
        Response of the level below evaluated at this level's design.
    """

    design: np.ndarray
    observations: np.ndarray
    f_basis: BasisSpec
    g_basis: BasisSpec = None
    lower_observations: np.ndarray = None

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.design, dtype=float))
        z = np.asarray(self.observations, dtype=float).ravel()
        if D.shape[0] != z.size:
            raise ShapeError(f"{D.shape[0]} design points but {z.size} observations")
        if not (np.all(np.isfinite(D)) and np.all(np.isfinite(z))):
            raise ShapeError("design and observations must be finite")
        if (self.g_basis is None) != (self.lower_observations is None):
            raise ShapeError("g_basis and lower_observations must be supplied together")
        zl = None
        if self.lower_observations is not None:
            zl = np.asarray(self.lower_observations, dtype=float).ravel()
            if zl.size != z.size:
                raise ShapeError(f"{z.size} observations but {zl.size} lower-level values")
            if not np.all(np.isfinite(zl)):
                raise ShapeError("lower-level observations must be finite")
            zl.flags.writeable = False
        for arr in (D, z):
            arr.flags.writeable = False
        object.__setattr__(self, "design", D)
        object.__setattr__(self, "observations", z)
        object.__setattr__(self, "lower_observations", zl)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def dim(self) -> int:
        return self.design.shape[1]

    @property
    def n_adjust(self) -> int:
        """Number of adjustment columns contributed by the level below."""
        return 0 if self.g_basis is None else self.g_basis.size


@dataclass(frozen=True)
class PriorSpec:
    """Prior on the regression coefficients and the process variance.

    ``mode == "noninformative"`` is the flat/Jeffreys pair.  The informative
    mode takes a Gaussian prior (mean ``b``, covariance ``sigma2 * V``) on the
    coefficients and an inverse-gamma prior (shape ``alpha``, scale ``gamma``)
    on the variance.
    """

    mode: str
    b: np.ndarray = None
    V: np.ndarray = None
    alpha: float = None
    gamma: float = None

    def __post_init__(self):
        if self.mode not in ("noninformative", "informative"):
            raise ShapeError(f"unknown prior mode {self.mode!r}")
        if self.mode == "informative":
            if self.b is None or self.V is None or self.alpha is None or self.gamma is None:
                raise ShapeError("informative prior needs b, V, alpha and gamma")
            b = np.asarray(self.b, dtype=float).ravel()
            V = np.atleast_2d(np.asarray(self.V, dtype=float))
            if V.shape != (b.size, b.size):
                raise ShapeError(f"V has shape {V.shape}, expected ({b.size}, {b.size})")
            try:
                scipy.linalg.cholesky(V, lower=True)
            except scipy.linalg.LinAlgError:
                raise ShapeError("prior covariance V must be symmetric positive definite") from None
            if not (self.alpha > 0.0 and self.gamma > 0.0):
                raise ShapeError("alpha and gamma must be positive")
            b.flags.writeable = False
            object.__setattr__(self, "b", b)
            object.__setattr__(self, "V", V)

    @classmethod
    def noninformative(cls) -> "PriorSpec":
        return cls(mode="noninformative")

    @classmethod
    def informative(cls, b, V, alpha, gamma) -> "PriorSpec":
        return cls(mode="informative", b=b, V=V, alpha=alpha, gamma=gamma)


@dataclass(frozen=True)
class FittedLevel:
    """Estimation results for one level, everything prediction needs.

    ``trend_mean`` stacks the adjustment coefficients (first ``n_adjust``
    entries) and the trend coefficients.  ``trend_cov_scale`` is the posterior
    covariance of those coefficients divided by the process variance.
    ``resid_weights`` caches ``R^{-1} (z - H trend_mean)``.
    """

    kernel: KernelSpec
    applied_nugget: float
    H: np.ndarray
    R: np.ndarray
    R_factor: np.ndarray
    trend_mean: np.ndarray
    trend_cov_scale: np.ndarray
    Q: float
    a: float
    n_adjust: int
    prior: PriorSpec
    resid_weights: np.ndarray

    @property
    def sigma2_eml(self) -> float:
        """Marginal-likelihood point estimate of the process variance."""
        return sigma2_eml(self.Q, self.a)

    @property
    def sigma2_mean(self) -> float:
        """Posterior mean of the process variance; needs shape a > 1."""
        if self.a <= 1.0:
            raise DegeneratePosteriorError(
                f"posterior mean of the variance needs a > 1, got a = {self.a:g}"
            )
        return self.Q / (2.0 * (self.a - 1.0))


def build_experience_matrix(data: LevelData) -> np.ndarray:
    """Regression matrix of a level.

    First levels get their trend columns only.  Higher levels get the
    adjustment columns (the g basis scaled rowwise by the lower-level
    response) followed by the trend columns.
    """
    F = data.f_basis.evaluate(data.design)
    if data.g_basis is None:
        return F
    G = data.g_basis.evaluate(data.design)
    return np.hstack([G * data.lower_observations[:, None], F])


def _diagnose_collinear(A: np.ndarray):
    """Columns of a Gram matrix that QR pivoting ranks as redundant."""
    _, r, piv = scipy.linalg.qr(A, pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * A.shape[0] * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    return sorted(int(j) for j in piv[rank:])


def _coef_system(H, R_factor, z, prior: PriorSpec):
    """Posterior mean and sigma2-free covariance of the coefficients.

    Returns ``(mean, cov_scale)`` where the posterior covariance equals
    ``sigma2 * cov_scale``.  Raises :class:`SingularSystemError` when the
    weighted normal matrix is rank deficient.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    if H.shape[0] != z.size:
        raise ShapeError(f"H has {H.shape[0]} rows but z has {z.size} entries")
    RinvH = cho_solve((R_factor, True), H)
    A = H.T @ RinvH
    rhs = H.T @ cho_solve((R_factor, True), z)
    if prior.mode == "informative":
        Vinv = scipy.linalg.inv(prior.V)
        A = A + Vinv
        rhs = rhs + Vinv @ prior.b
    A = 0.5 * (A + A.T)
    try:
        La = scipy.linalg.cholesky(A, lower=True)
    except scipy.linalg.LinAlgError:
        cols = _diagnose_collinear(A)
        raise SingularSystemError(
            f"experience matrix is rank deficient; columns {cols} are "
            f"collinear with the others"
        ) from None
    cov_scale = cho_solve((La, True), np.eye(A.shape[0]))
    mean = cho_solve((La, True), rhs)
    return mean, cov_scale


def trend_posterior(H, R_factor, z, sigma2, prior: PriorSpec):
    """Gaussian posterior of the stacked adjustment and trend coefficients.

    Parameters
    ----------
    H : ndarray, shape (n, m)
        Experience matrix.
    R_factor : ndarray, shape (n, n)
        Lower Cholesky factor of the data correlation matrix.
    z : ndarray, shape (n,)
        Observations.
    sigma2 : float
        Process variance scaling the posterior covariance.
    prior : PriorSpec

    Returns
    -------
    (mean, cov) : ndarray shapes (m,), (m, m)
    """
    mean, cov_scale = _coef_system(H, R_factor, z, prior)
    return mean, float(sigma2) * cov_scale


def variance_posterior(H, R_factor, z, prior: PriorSpec):
    """Inverse-gamma posterior (Q, a) of the process variance.

    Under the non-informative prior, ``Q`` is the generalized-least-squares
    residual quadratic form and ``2a = n - m`` counts the degrees of freedom
    left by the ``m`` regression columns.  The informative prior adds its
    scale ``gamma`` and a penalty for the distance between the prior mean
    and the GLS solution, with ``a = n/2 + alpha``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    n, m = H.shape
    if n <= m and prior.mode == "noninformative":
        raise InsufficientDataError(
            f"variance estimation needs more observations than regression "
            f"columns, got n = {n} and m = {m}"
        )
    if n < m:
        raise InsufficientDataError(
            f"even an informative prior needs at least as many observations "
            f"as regression columns, got n = {n} and m = {m}"
        )
    lam, _ = _coef_system(H, R_factor, z, PriorSpec.noninformative())
    resid = z - H @ lam
    Qhat = float(resid @ cho_solve((R_factor, True), resid))
    if prior.mode == "noninformative":
        a = 0.5 * (n - m)
        if n == m + 1:
            warnings.warn(
                f"a single degree of freedom is left for the variance "
                f"(n = {n}, m = {m}); estimates will be unstable",
                stacklevel=2,
            )
        return Qhat, a
    RinvH = cho_solve((R_factor, True), H)
    A0 = H.T @ RinvH
    A0 = 0.5 * (A0 + A0.T)
    try:
        La = scipy.linalg.cholesky(A0, lower=True)
    except scipy.linalg.LinAlgError:
        cols = _diagnose_collinear(A0)
        raise SingularSystemError(
            f"experience matrix is rank deficient; columns {cols} are "
            f"collinear with the others"
        ) from None
    M = prior.V + cho_solve((La, True), np.eye(m))
    diff = prior.b - lam
    Q = prior.gamma + float(diff @ scipy.linalg.solve(M, diff, assume_a="pos")) + Qhat
    a = 0.5 * n + prior.alpha
    return Q, a


def sigma2_eml(Q, a) -> float:
    """Variance point estimate Q / (2a)."""
    if a <= 0.0:
        raise DegeneratePosteriorError(f"posterior shape must be positive, got a = {a:g}")
    if Q < 0.0:
        raise DegeneratePosteriorError(f"posterior scale must be nonnegative, got Q = {Q:g}")
    return Q / (2.0 * a)


def concentrated_reml(data: LevelData, kernel: KernelSpec) -> float:
    """Concentrated restricted log-likelihood criterion (lower is better).

    Equals ``log det R + (n - m) log sigma2_eml`` with the trend and variance
    profiled out under the non-informative prior.
    """
    fc = correlation_matrix(data.design, kernel)
    H = build_experience_matrix(data)
    n, m = H.shape
    if n <= m:
        raise InsufficientDataError(
            f"the restricted likelihood needs n > m, got n = {n} and m = {m}"
        )
    Q, a = variance_posterior(H, fc.cholesky, data.observations, PriorSpec.noninformative())
    s2 = max(sigma2_eml(Q, a), np.finfo(float).tiny)
    logdet = 2.0 * float(np.sum(np.log(np.diag(fc.cholesky))))
    return logdet + (n - m) * np.log(s2)


def _loo_sse(data: LevelData, kernel: KernelSpec) -> float:
    """Sum of squared leave-one-out errors, trend re-estimated per fold."""
    # Imported here: crossval builds on this module.
    from .crossval import level_fold_errors

    fc = correlation_matrix(data.design, kernel)
    H = build_experience_matrix(data)
    n, m = H.shape
    if n <= m + 1:
        raise InsufficientDataError(
            f"leave-one-out re-estimation needs n > m + 1, got n = {n} and m = {m}"
        )
    Rinv = cho_solve((fc.cholesky, True), np.eye(n))
    folds = tuple((i,) for i in range(n))
    errors, _, _, _ = level_fold_errors(Rinv, H, data.observations, folds)
    return float(sum(np.sum(e**2) for e in errors))


def default_theta_bounds(design: np.ndarray) -> np.ndarray:
    """Per-dimension search box for the length scales.

    Spans 1e-2 to 1e2 times the input range of each coordinate; degenerate
    coordinates (zero range) fall back to a unit range.
    """
    D = np.atleast_2d(np.asarray(design, dtype=float))
    spans = D.max(axis=0) - D.min(axis=0)
    spans[spans == 0.0] = 1.0
    return np.column_stack([1e-2 * spans, 1e2 * spans])


def optimize_theta(
    data: LevelData,
    objective: str = "reml",
    bounds=None,
    restarts: int = 10,
    seed: int = 0,
    nugget: float = DEFAULT_NUGGET,
    family: str = "matern52",
) -> KernelSpec:
    """Search the length scales by multistart Nelder-Mead in log space.

    Parameters
    ----------
    data : LevelData
    objective : str
        ``"reml"`` for the concentrated restricted likelihood, ``"loo_cv"``
        for the sum of squared leave-one-out errors.
    bounds : ndarray, shape (d, 2), optional
        Box constraints on theta itself; default spans 1e-2 to 1e2 times the
        per-dimension input range.
    restarts : int
        Number of stratified starting points.
    seed : int
        Seed for the starting points; fixed seed means reproducible results.
    nugget, family :
        Forwarded to the candidate kernels.

    Returns
    -------
    KernelSpec
        The best candidate found.
    """
    # Imported here: design builds on nothing, but importing lazily keeps the
    # module import graph acyclic next to crossval's lazy import above.
    from .design import base_design

    if objective not in OBJECTIVES:
        raise OptimizationError(f"unknown objective {objective!r}, expected one of {OBJECTIVES}")
    if restarts < 1:
        raise OptimizationError("restarts must be at least 1")
    d = data.dim
    if bounds is None:
        bounds = default_theta_bounds(data.design)
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    if bounds.shape != (d, 2) or np.any(bounds[:, 0] <= 0.0) or np.any(bounds[:, 0] >= bounds[:, 1]):
        raise OptimizationError(f"bounds must be (d, 2) with 0 < low < high, got {bounds!r}")
    log_bounds = np.log(bounds)
    crit = concentrated_reml if objective == "reml" else _loo_sse

    def fun(log_theta):
        spec = KernelSpec(theta=np.exp(log_theta), family=family, nugget=nugget)
        try:
            return crit(data, spec)
        except (IllConditionedError, DegeneratePosteriorError, SingularSystemError):
            return np.inf

    starts = base_design(restarts, log_bounds, method="lhs", seed=seed)
    best_val, best_x = np.inf, None
    for x0 in starts:
        res = minimize(
            fun,
            x0=x0,
            method="Nelder-Mead",
            bounds=[tuple(row) for row in log_bounds],
            options={"xatol": 1e-4, "fatol": 1e-9, "maxiter": 200 * d},
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_x = res.fun, res.x
    if best_x is None:
        raise OptimizationError(
            f"no usable length scales found in {restarts} restarts; every "
            f"candidate correlation matrix failed to factorize"
        )
    return KernelSpec(theta=np.exp(best_x), family=family, nugget=nugget)


def fit_level(
    data: LevelData,
    kernel: KernelSpec = None,
    prior: PriorSpec = None,
    objective: str = "reml",
    bounds=None,
    restarts: int = 10,
    seed: int = 0,
    nugget: float = DEFAULT_NUGGET,
    family: str = "matern52",
) -> FittedLevel:
    """Estimate one level end to end.

    With ``kernel=None`` the length scales are searched first; otherwise the
    given spec is used as is.  Returns the complete :class:`FittedLevel`.
    """
    if prior is None:
        prior = PriorSpec.noninformative()
    if kernel is None:
        kernel = optimize_theta(
            data, objective=objective, bounds=bounds, restarts=restarts,
            seed=seed, nugget=nugget, family=family,
        )
    if kernel.ndim != data.dim:
        raise ShapeError(f"kernel has {kernel.ndim} length scales for {data.dim}-dimensional data")
    fc = correlation_matrix(data.design, kernel)
    H = build_experience_matrix(data)
    n, m = H.shape
    if n < m + (prior.mode == "noninformative"):
        raise InsufficientDataError(
            f"level with {n} points cannot support {m} regression columns"
        )
    mean, cov_scale = _coef_system(H, fc.cholesky, data.observations, prior)
    Q, a = variance_posterior(H, fc.cholesky, data.observations, prior)
    resid_weights = cho_solve((fc.cholesky, True), data.observations - H @ mean)
    return FittedLevel(
        kernel=kernel,
        applied_nugget=fc.nugget,
        H=H,
        R=fc.matrix,
        R_factor=fc.cholesky,
        trend_mean=mean,
        trend_cov_scale=cov_scale,
        Q=Q,
        a=a,
        n_adjust=data.n_adjust,
        prior=prior,
        resid_weights=resid_weights,
    )
