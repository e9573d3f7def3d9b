"""Cross-validation: closed-form fold errors and a refit oracle.

The fast path never refits a correlation matrix.  Each level's inverse is
computed once; a fold's quantities then come from small systems in the
held-out block of that inverse, including the fold re-estimates of the
regression coefficients and of the process variance.  Folds are defined on
the finest design and, when the removal depth reaches below it, propagate to
the same physical points of the coarser designs through the nesting maps.
Levels beneath the removal depth are treated as exactly known at the held-out
sites (zero error, zero variance), on both paths.

``brute_force_cv`` is the oracle: it refits every affected level from scratch
for every fold and predicts the held-out points with the standard recursion.
It is cubic per fold and exists to validate the fast path and to measure the
speedup.  Hyperparameters stay fixed across folds on both paths.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import cho_solve

from .errors import (
    DegeneratePosteriorError,
    IllConditionedError,
    InsufficientDataError,
    MetricError,
    ShapeError,
    SingularSystemError,
)
from .gpcore import LevelData, build_experience_matrix
from .kernels import cross_correlation
from .model import MultiFidelityModel, _match_nested

MODES = ("simple", "universal")


@dataclass(frozen=True)
class CVRequest:
    """Folds and options of one cross-validation run.

    Parameters
    ----------
    folds : tuple of tuple of int
        Disjoint index groups into the finest design; may cover only part of
        it.  Leave-one-out means singleton folds.
    t_min : int, optional
        Removal depth, 1-based: fold points are removed from levels
        ``t_min..s``.  ``None`` means the finest level only.
    reestimate_trend, reestimate_variance : bool
        Whether the regression coefficients and the process variance are
        re-estimated on each fold's retained data.  When off they stay fixed
        at the full-data posterior values.
    mode : str
        ``"simple"`` or ``"universal"``; universal adds the coefficient
        uncertainty term to the variances (zero when the trend is not
        re-estimated, since a known trend carries no uncertainty).
    rho_from_fold : bool
        Whether the adjustment factor in the error and variance recursions
        uses the fold re-estimate (default) or the full-data estimate.  Only
        the default agrees with the refit oracle; the alternative exists for
        numerical comparison.
    """

    folds: tuple
    t_min: int = None
    reestimate_trend: bool = True
    reestimate_variance: bool = True
    mode: str = "simple"
    rho_from_fold: bool = True

    def __post_init__(self):
        folds = tuple(tuple(int(i) for i in fold) for fold in self.folds)
        seen = set()
        for fold in folds:
            if not fold:
                raise ShapeError("folds must be nonempty")
            if len(set(fold)) != len(fold) or seen.intersection(fold):
                raise ShapeError("fold indices must be disjoint")
            seen.update(fold)
        if any(i < 0 for i in seen):
            raise ShapeError("fold indices must be nonnegative")
        if self.mode not in MODES:
            raise ShapeError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.t_min is not None and self.t_min < 1:
            raise ShapeError(f"t_min must be at least 1, got {self.t_min}")
        object.__setattr__(self, "folds", folds)

    @classmethod
    def loo(cls, n: int, **kwargs) -> "CVRequest":
        """Leave-one-out over n points."""
        return cls(folds=tuple((i,) for i in range(n)), **kwargs)

    @classmethod
    def kfold(cls, n: int, k: int, seed: int = 0, **kwargs) -> "CVRequest":
        """A shuffled k-fold partition of n points."""
        if not 2 <= k <= n:
            raise ShapeError(f"k must lie in [2, {n}], got {k}")
        perm = np.random.default_rng(seed).permutation(n)
        return cls(folds=tuple(tuple(int(i) for i in part) for part in np.array_split(perm, k)), **kwargs)


@dataclass(frozen=True)
class CVReport:
    """Per-fold results at the finest level.

    ``errors`` are real values minus predictions, ``variances`` the matching
    predictive variances; ``lambdas`` and ``sigma2s`` record the coefficient
    vector and process variance actually used for each fold (the re-estimates
    when re-estimation is on, the fixed values otherwise).
    """

    folds: tuple
    errors: tuple
    variances: tuple
    lambdas: tuple
    sigma2s: tuple
    t_min: int
    mode: str

    def all_errors(self) -> np.ndarray:
        if not self.errors:
            return np.empty(0)
        return np.concatenate(self.errors)

    def all_variances(self) -> np.ndarray:
        if not self.variances:
            return np.empty(0)
        return np.concatenate(self.variances)


def loo_rmse(report: CVReport) -> float:
    """Root mean squared cross-validation error over all held-out points."""
    errs = report.all_errors()
    if errs.size == 0:
        raise MetricError("cannot aggregate an empty cross-validation report")
    return float(np.sqrt(np.mean(errs**2)))


def _resolve_depth(req: CVRequest, s: int, n_top: int) -> int:
    t_min = s if req.t_min is None else req.t_min
    if not 1 <= t_min <= s:
        raise ShapeError(f"t_min must lie in [1, {s}], got {t_min}")
    for fold in req.folds:
        if any(i >= n_top for i in fold):
            raise ShapeError(f"fold index out of range for {n_top} points: {max(fold)}")
    return t_min


def _fold_levels(nest_maps, fold, i_min: int):
    """Indices of the fold's points at every affected level (0-based keys)."""
    s = len(nest_maps)
    xi = {s - 1: np.asarray(fold, dtype=int)}
    for i in range(s - 1, i_min, -1):
        xi[i - 1] = nest_maps[i][xi[i]]
    return xi


def _gls(H, R_factor, z):
    RinvH = cho_solve((R_factor, True), H)
    A = H.T @ RinvH
    A = 0.5 * (A + A.T)
    try:
        La = scipy.linalg.cholesky(A, lower=True)
    except scipy.linalg.LinAlgError:
        raise SingularSystemError("regression system is rank deficient") from None
    lam = cho_solve((La, True), H.T @ cho_solve((R_factor, True), z))
    cov_scale = cho_solve((La, True), np.eye(A.shape[0]))
    return lam, cov_scale


class _LevelWork:
    """Per-level constants of the fast path, computed once per run."""

    def __init__(self, Rinv, H, z):
        self.Rinv = Rinv
        self.H = H
        self.z = np.asarray(z, dtype=float)
        self.B = Rinv @ H               # R^{-1} H
        self.c = Rinv @ self.z          # R^{-1} z
        self.Mfull = H.T @ self.B       # H' R^{-1} H
        self.Mz = H.T @ self.c          # H' R^{-1} z
        self.n, self.m = H.shape


def _fold_core(w: _LevelWork, xi, lam_fixed, reestimate_trend, need_sigma2, need_U):
    """All single-level closed-form quantities of one fold.

    The held-out block of the inverse gives everything: with
    ``S = [R^{-1}]_{xi,xi}`` and any coefficient vector ``lam``, the held-out
    errors are ``S^{-1} [R^{-1}(z - H lam)]_{xi}``, the correlation part of
    the fold variances is ``diag(S^{-1})``, the fold re-estimate of ``lam``
    solves the retained-data normal equations assembled from blocks of the
    inverse, and the rows of ``U = S^{-1} [R^{-1} H]_{xi}`` are the
    trend-uncertainty vectors of the held-out points.
    """
    S = w.Rinv[np.ix_(xi, xi)]
    Ls = scipy.linalg.cholesky(S, lower=True)
    H_xi = w.H[xi]
    z_xi = w.z[xi]
    B_xi = w.B[xi]
    c_xi = w.c[xi]

    out = {"diag_Sinv": np.diag(cho_solve((Ls, True), np.eye(xi.size)))}

    if reestimate_trend or need_U:
        # Retained-data normal matrix H_train' K H_train from inverse blocks.
        G = B_xi - S @ H_xi         # [R^{-1}]_{xi,train} H_train
        A_cv = w.Mfull - B_xi.T @ H_xi - H_xi.T @ B_xi + H_xi.T @ S @ H_xi \
            - G.T @ cho_solve((Ls, True), G)
        A_cv = 0.5 * (A_cv + A_cv.T)
        try:
            out["A_factor"] = scipy.linalg.cholesky(A_cv, lower=True)
        except scipy.linalg.LinAlgError:
            raise SingularSystemError(
                "fold regression system is rank deficient on the retained data"
            ) from None
    if reestimate_trend:
        gz = c_xi - S @ z_xi        # [R^{-1}]_{xi,train} z_train
        rhs = w.Mz - B_xi.T @ z_xi - H_xi.T @ c_xi + H_xi.T @ S @ z_xi \
            - G.T @ cho_solve((Ls, True), gz)
        lam = cho_solve((out["A_factor"], True), rhs)
    else:
        lam = np.asarray(lam_fixed, dtype=float)
    out["lam"] = lam

    Rinv_d = w.c - w.B @ lam        # R^{-1} (z - H lam)
    rd = Rinv_d[xi]
    out["eps_own"] = cho_solve((Ls, True), rd)

    if need_sigma2:
        # (z - H lam)_train' K (z - H lam)_train via inverse blocks.
        d = w.z - w.H @ lam
        d_xi = d[xi]
        wd = rd - S @ d_xi          # [R^{-1}]_{xi,train} d_train
        quad = float(d @ Rinv_d) - 2.0 * float(d_xi @ rd) + float(d_xi @ S @ d_xi) \
            - float(wd @ cho_solve((Ls, True), wd))
        out["quad"] = quad
    if need_U:
        out["U"] = cho_solve((Ls, True), B_xi)
    return out


def level_fold_errors(Rinv, H, z, folds):
    """Closed-form fold quantities at a single level, trend re-estimated.

    Works directly on the precomputed inverse correlation matrix.  For each
    fold returns the held-out errors, the diagonal of the inverse held-out
    block (the correlation part of the fold variances, nugget included), the
    fold coefficient estimate, and the fold variance estimate.

    Parameters
    ----------
    Rinv : ndarray, shape (n, n)
    H : ndarray, shape (n, m)
    z : ndarray, shape (n,)
    folds : iterable of index tuples

    Returns
    -------
    (errors, block_diags, lambdas, sigma2s) : lists, one entry per fold
    """
    w = _LevelWork(np.asarray(Rinv, dtype=float), np.atleast_2d(np.asarray(H, dtype=float)), z)
    errors, block_diags, lambdas, sigma2s = [], [], [], []
    for fold in folds:
        xi = np.asarray(fold, dtype=int)
        if w.n - xi.size <= w.m:
            raise InsufficientDataError(
                f"a fold of {xi.size} points leaves {w.n - xi.size} "
                f"observations for {w.m} regression columns"
            )
        out = _fold_core(w, xi, lam_fixed=None, reestimate_trend=True,
                         need_sigma2=True, need_U=False)
        errors.append(out["eps_own"])
        block_diags.append(out["diag_Sinv"])
        lambdas.append(out["lam"])
        sigma2s.append(out["quad"] / (w.n - w.m - xi.size))
    return errors, block_diags, lambdas, sigma2s


def _fixed_values(fl, reestimate_variance):
    """Full-data values used when re-estimation is off."""
    lam = fl.trend_mean
    sigma2 = None
    if not reestimate_variance:
        if fl.a <= 1.0:
            raise DegeneratePosteriorError(
                f"fixed-variance cross-validation needs posterior shape a > 1, got a = {fl.a:g}"
            )
        sigma2 = fl.sigma2_mean
    return lam, sigma2


def fast_cv(model: MultiFidelityModel, req: CVRequest) -> CVReport:
    """Closed-form cross-validation of a fitted model.

    One inverse per affected level is computed once and reused across folds;
    each fold then costs small solves in its held-out block.  Matches
    :func:`brute_force_cv` on every error and variance.

    Parameters
    ----------
    model : MultiFidelityModel
    req : CVRequest

    Returns
    -------
    CVReport
    """
    s = model.nlevels
    n_top = model.data[-1].n
    t_min = _resolve_depth(req, s, n_top)
    i_min = t_min - 1

    # Degeneracy is checked for every fold and level before any solve.
    for i in range(i_min, s):
        n, m = model.fits[i].H.shape
        for fold in req.folds:
            if n - len(fold) <= m:
                raise InsufficientDataError(
                    f"level {i + 1}: a fold of {len(fold)} points leaves "
                    f"{n - len(fold)} observations for {m} regression columns"
                )

    work, fixed = [], []
    for i in range(i_min, s):
        ld, fl = model.levels[i]
        Rinv = cho_solve((fl.R_factor, True), np.eye(ld.n))
        work.append(_LevelWork(Rinv, fl.H, ld.observations))
        fixed.append(_fixed_values(fl, req.reestimate_variance))

    need_U = req.mode == "universal" and req.reestimate_trend
    errors, variances, lambdas, sigma2s = [], [], [], []
    for fold in req.folds:
        xi_map = _fold_levels(model.nest_maps, fold, i_min)
        eps_prev = 0.0
        var_prev = 0.0
        lam_top = sigma2_top = None
        for i in range(i_min, s):
            w = work[i - i_min]
            lam_fixed, sigma2_fixed = fixed[i - i_min]
            ld, fl = model.levels[i]
            xi = xi_map[i]
            out = _fold_core(
                w, xi,
                lam_fixed=lam_fixed,
                reestimate_trend=req.reestimate_trend,
                need_sigma2=req.reestimate_variance,
                need_U=need_U,
            )
            lam = out["lam"]
            sigma2 = out["quad"] / (w.n - w.m - xi.size) if req.reestimate_variance else sigma2_fixed
            q = fl.n_adjust
            if q:
                X_test = ld.design[xi]
                g_test = ld.g_basis.evaluate(X_test)
                lam_rho = lam if req.rho_from_fold else lam_fixed
                rho = g_test @ lam_rho[:q]
            else:
                rho = 0.0
            eps = rho * eps_prev + out["eps_own"]
            var = rho**2 * var_prev + sigma2 * np.maximum(out["diag_Sinv"] - fl.applied_nugget, 0.0)
            if need_U:
                U = out["U"].copy()
                if q and i > i_min:
                    # The held-out rows of H carry observed lower-level
                    # values; the retained-data model only knows its own
                    # prediction of them, which differs by the lower-level
                    # fold error.
                    U[:, :q] -= g_test * np.atleast_1d(eps_prev)[:, None]
                cov_scale = cho_solve((out["A_factor"], True), np.eye(w.m))
                var = var + sigma2 * np.maximum(np.einsum("ij,jk,ik->i", U, cov_scale, U), 0.0)
            eps_prev, var_prev = eps, var
            lam_top, sigma2_top = lam, sigma2
        errors.append(np.asarray(eps_prev))
        variances.append(np.asarray(var_prev))
        lambdas.append(np.asarray(lam_top))
        sigma2s.append(float(sigma2_top))
    return CVReport(
        folds=req.folds, errors=tuple(errors), variances=tuple(variances),
        lambdas=tuple(lambdas), sigma2s=tuple(sigma2s), t_min=t_min, mode=req.mode,
    )


def brute_force_cv(levels, req: CVRequest, kernels) -> CVReport:
    """Refit oracle: rebuild every affected level for every fold.

    For each fold, the fold's points are removed from levels ``t_min..s``,
    the trend and variance are re-estimated from scratch on the retained data
    (or frozen at the full-data generalized-least-squares values when the
    request says so), and the held-out points are predicted with the standard
    recursion.  Levels below ``t_min`` enter as exactly known at the held-out
    sites.  The per-level nuggets come unchanged from ``kernels``; pass the
    inflation the fitted model actually applied.

    Assumes the non-informative fit throughout, matching the closed-form
    re-estimation formulas.

    Parameters
    ----------
    levels : sequence of LevelData
    req : CVRequest
    kernels : sequence of KernelSpec
        Fixed hyperparameters per level; never re-estimated inside folds.

    Returns
    -------
    CVReport
    """
    levels = list(levels)
    s = len(levels)
    if len(kernels) != s:
        raise ShapeError(f"expected {s} kernel specs, got {len(kernels)}")
    n_top = levels[-1].n
    t_min = _resolve_depth(req, s, n_top)
    i_min = t_min - 1
    nest_maps = [None]
    for i in range(1, s):
        nest_maps.append(_match_nested(levels[i].design, levels[i - 1].design, i + 1))

    def data_factor(D, spec):
        R = cross_correlation(D, D, spec)
        R = 0.5 * (R + R.T) + spec.nugget * np.eye(D.shape[0])
        try:
            return scipy.linalg.cholesky(R, lower=True)
        except scipy.linalg.LinAlgError:
            raise IllConditionedError(
                f"correlation matrix of {D.shape[0]} points is not factorizable "
                f"at nugget {spec.nugget:g}", nugget=spec.nugget,
            ) from None

    # Degeneracy pre-check for every fold and level, before any solve.
    experience = {}
    for i in range(i_min, s):
        H = build_experience_matrix(levels[i])
        experience[i] = H
        n, m = H.shape
        if n <= m:
            raise InsufficientDataError(
                f"level {i + 1}: {n} points cannot support {m} regression columns"
            )
        for fold in req.folds:
            if n - len(fold) <= m:
                raise InsufficientDataError(
                    f"level {i + 1}: a fold of {len(fold)} points leaves "
                    f"{n - len(fold)} observations for {m} regression columns"
                )

    # Full-data fits per affected level, for the frozen-parameter cases.
    full = []
    for i in range(i_min, s):
        ld = levels[i]
        L = data_factor(ld.design, kernels[i])
        H = experience[i]
        n, m = H.shape
        lam, _ = _gls(H, L, ld.observations)
        resid = ld.observations - H @ lam
        Qhat = float(resid @ cho_solve((L, True), resid))
        a = 0.5 * (n - m)
        sigma2_fixed = None
        if not req.reestimate_variance:
            if a <= 1.0:
                raise DegeneratePosteriorError(
                    f"level {i + 1}: fixed-variance cross-validation needs a > 1, got a = {a:g}"
                )
            sigma2_fixed = Qhat / (2.0 * (a - 1.0))
        full.append({"lam": lam, "sigma2_fixed": sigma2_fixed})

    errors, variances, lambdas, sigma2s = [], [], [], []
    for fold in req.folds:
        xi_map = _fold_levels(tuple(nest_maps), fold, i_min)
        mu_prev = None
        var_prev = 0.0
        eps = var = lam_top = sigma2_top = None
        for i in range(i_min, s):
            ld = levels[i]
            xi = xi_map[i]
            keep = np.setdiff1d(np.arange(ld.n), xi)
            X_test = ld.design[xi]
            train = LevelData(
                design=ld.design[keep],
                observations=ld.observations[keep],
                f_basis=ld.f_basis,
                g_basis=ld.g_basis,
                lower_observations=None if ld.lower_observations is None
                else ld.lower_observations[keep],
            )
            L = data_factor(train.design, kernels[i])
            H_train = build_experience_matrix(train)
            n_tr, m = H_train.shape
            if req.reestimate_trend:
                lam, cov_scale = _gls(H_train, L, train.observations)
            else:
                lam = full[i - i_min]["lam"]
                cov_scale = None
            resid = train.observations - H_train @ lam
            if req.reestimate_variance:
                sigma2 = float(resid @ cho_solve((L, True), resid)) / (ld.n - m - xi.size)
            else:
                sigma2 = full[i - i_min]["sigma2_fixed"]
            if i == i_min:
                mu_prev_here = None if i == 0 else ld.lower_observations[xi]
                var_prev = 0.0
            else:
                mu_prev_here = mu_prev
            r = cross_correlation(train.design, X_test, kernels[i])
            w = cho_solve((L, True), r)
            alpha = cho_solve((L, True), resid)
            f_test = ld.f_basis.evaluate(X_test)
            q = 0 if ld.g_basis is None else ld.g_basis.size
            if q:
                g_test = ld.g_basis.evaluate(X_test)
                rho = g_test @ lam[:q]
                mu = rho * mu_prev_here + f_test @ lam[q:] + r.T @ alpha
                h_test = np.hstack([g_test * mu_prev_here[:, None], f_test])
            else:
                rho = 0.0
                mu = f_test @ lam + r.T @ alpha
                h_test = f_test
            one_minus = np.maximum(1.0 - np.einsum("nm,nm->m", r, w), 0.0)
            var = rho**2 * var_prev + sigma2 * one_minus
            if req.mode == "universal" and req.reestimate_trend:
                U = h_test - w.T @ H_train
                cov = sigma2 * cov_scale
                var = var + np.maximum(np.einsum("ij,jk,ik->i", U, cov, U), 0.0)
            eps = ld.observations[xi] - mu
            mu_prev, var_prev = mu, var
            lam_top, sigma2_top = lam, sigma2
        errors.append(np.asarray(eps))
        variances.append(np.asarray(var))
        lambdas.append(np.asarray(lam_top))
        sigma2s.append(float(sigma2_top))
    return CVReport(
        folds=req.folds, errors=tuple(errors), variances=tuple(variances),
        lambdas=tuple(lambdas), sigma2s=tuple(sigma2s), t_min=t_min, mode=req.mode,
    )
