"""Joint-covariance reference formulation.

The multi-level model admits an equivalent single-process description: stack
every level's observations into one vector, assemble the full covariance
matrix across levels, and krige in one shot.  That formulation is cubic in
the total number of points, so it is never the production path; it exists to
cross-check the recursive implementation (the two must agree to machine
precision at shared parameters) and to measure the cost gap.  Solves happen
per prediction call on the raw covariance matrix, reflecting the cost model
the comparison is about.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import IllConditionedError, ShapeError
from .kernels import KernelSpec, cross_correlation
from .model import NEST_ATOL, MultiFidelityModel

# The reference path tolerates a larger inflation than production before
# giving up; it must stay factorizable at sizes the recursion handles easily.
JOINT_NUGGET_CEILING = 1e-4


@dataclass(frozen=True)
class JointParams:
    """Fixed parameters for the joint formulation (nothing is estimated).

    ``beta`` holds each level's trend coefficients, ``beta_rho`` the
    adjustment coefficients of each level transition, ``sigma2`` the process
    variances, ``kernels`` the per-level correlation specs and ``nuggets``
    the diagonal inflation actually applied to each level's data block.
    """

    beta: tuple
    beta_rho: tuple
    sigma2: tuple
    kernels: tuple
    nuggets: tuple

    @classmethod
    def from_model(cls, model: MultiFidelityModel, sigma2=None) -> "JointParams":
        """Extract the recursive model's posterior means as fixed parameters."""
        beta, beta_rho = [], []
        for ld, fl in model.levels:
            q = fl.n_adjust
            beta.append(np.array(fl.trend_mean[q:]))
            if q:
                beta_rho.append(np.array(fl.trend_mean[:q]))
        if sigma2 is None:
            sigma2 = [fl.sigma2_eml for fl in model.fits]
        return cls(
            beta=tuple(beta),
            beta_rho=tuple(beta_rho),
            sigma2=tuple(float(v) for v in sigma2),
            kernels=tuple(fl.kernel for fl in model.fits),
            nuggets=tuple(fl.applied_nugget for fl in model.fits),
        )


@dataclass(frozen=True)
class JointModel:
    """Assembled joint system: covariance, stacked trend matrix, parameters.

    ``V`` is the full data covariance (with each level's nugget wherever two
    data points coincide), ``H_joint`` the stacked trend matrix, ``z`` the
    stacked observations.  Designs and bases are kept so query vectors can be
    assembled on demand.
    """

    V: np.ndarray
    H_joint: np.ndarray
    beta_all: np.ndarray
    z: np.ndarray
    designs: tuple
    f_bases: tuple
    g_bases: tuple
    params: JointParams

    @property
    def nlevels(self) -> int:
        return len(self.designs)


def _coincidence(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """1.0 where a row of A and a row of B are the same point, else 0.0."""
    same = np.all(np.abs(A[:, None, :] - B[None, :, :]) <= NEST_ATOL, axis=-1)
    return same.astype(float)


def _rho_values(g_bases, beta_rho, X) -> list:
    """Evaluated adjustment of each level transition at the points X."""
    return [g.evaluate(X) @ br for g, br in zip(g_bases, beta_rho)]


def _chain(rhos: list, j: int, t: int, m: int) -> np.ndarray:
    """Product of the evaluated adjustments linking level j up to level t."""
    out = np.ones(m)
    for i in range(j, t):
        out = out * rhos[i]
    return out


def build_joint(levels, params: JointParams) -> JointModel:
    """Assemble the joint covariance and trend system at fixed parameters.

    Parameters
    ----------
    levels : sequence of LevelData
        Ordered coarsest to finest, designs nested.
    params : JointParams

    Returns
    -------
    JointModel

    Raises
    ------
    IllConditionedError
        If the assembled covariance cannot be factorized even after extra
        diagonal inflation up to the reference ceiling.
    """
    levels = list(levels)
    s = len(levels)
    if not (len(params.beta) == len(params.sigma2) == len(params.kernels) == s):
        raise ShapeError(f"parameters cover {len(params.sigma2)} levels, data has {s}")
    if len(params.beta_rho) != max(s - 1, 0):
        raise ShapeError(f"expected {s - 1} adjustment coefficient sets, got {len(params.beta_rho)}")
    designs = tuple(ld.design for ld in levels)
    f_bases = tuple(ld.f_basis for ld in levels)
    g_bases = tuple(ld.g_basis for ld in levels[1:])
    sizes = [d.shape[0] for d in designs]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    N = offsets[-1]
    rho_at = [_rho_values(g_bases, params.beta_rho, D) for D in designs]

    V = np.empty((N, N))
    for t in range(s):
        for t2 in range(t + 1):
            block = np.zeros((sizes[t], sizes[t2]))
            for j in range(t2 + 1):
                r = cross_correlation(designs[t], designs[t2], params.kernels[j])
                r = r + params.nuggets[j] * _coincidence(designs[t], designs[t2])
                left = _chain(rho_at[t], j, t, sizes[t])
                right = _chain(rho_at[t2], j, t2, sizes[t2])
                block += params.sigma2[j] * np.outer(left, right) * r
            V[offsets[t]:offsets[t + 1], offsets[t2]:offsets[t2 + 1]] = block
            if t2 != t:
                V[offsets[t2]:offsets[t2 + 1], offsets[t]:offsets[t + 1]] = block.T

    p_sizes = [f.size for f in f_bases]
    p_offsets = np.concatenate([[0], np.cumsum(p_sizes)])
    H = np.zeros((N, p_offsets[-1]))
    for t in range(s):
        for j in range(t + 1):
            Fj = f_bases[j].evaluate(designs[t])
            H[offsets[t]:offsets[t + 1], p_offsets[j]:p_offsets[j + 1]] = (
                _chain(rho_at[t], j, t, sizes[t])[:, None] * Fj
            )
    beta_all = np.concatenate([np.asarray(b, dtype=float).ravel() for b in params.beta])
    if beta_all.size != p_offsets[-1]:
        raise ShapeError(f"stacked trend coefficients have size {beta_all.size}, expected {p_offsets[-1]}")
    z = np.concatenate([ld.observations for ld in levels])

    # Factorizability check only; predictions solve against V directly.
    jitter = 0.0
    scale = float(np.mean(np.diag(V)))
    while True:
        try:
            scipy.linalg.cholesky(V + jitter * scale * np.eye(N), lower=True)
            break
        except scipy.linalg.LinAlgError:
            nxt = 1e-10 if jitter == 0.0 else jitter * 10.0
            if nxt > JOINT_NUGGET_CEILING:
                raise IllConditionedError(
                    f"joint covariance of {N} points is not factorizable "
                    f"(last inflation tried: {jitter:g})",
                    nugget=jitter,
                ) from None
            jitter = nxt
    if jitter > 0.0:
        V = V + jitter * scale * np.eye(N)

    return JointModel(
        V=V, H_joint=H, beta_all=beta_all, z=z,
        designs=designs, f_bases=f_bases, g_bases=g_bases, params=params,
    )


def _query_vectors(jm: JointModel, x: np.ndarray):
    """Trend vector, data cross-covariance and prior variance at one point."""
    s = jm.nlevels
    X = x[None, :]
    rho_x = _rho_values(jm.g_bases, jm.params.beta_rho, X)
    rho_x = [r[0] for r in rho_x]

    def chain_x(j, t):
        out = 1.0
        for i in range(j, t):
            out *= rho_x[i]
        return out

    h = np.concatenate([chain_x(j, s - 1) * jm.f_bases[j].evaluate(X)[0] for j in range(s)])
    t_parts = []
    for t2, D in enumerate(jm.designs):
        rho_D = _rho_values(jm.g_bases, jm.params.beta_rho, D)
        part = np.zeros(D.shape[0])
        for j in range(t2 + 1):
            r = cross_correlation(X, D, jm.params.kernels[j])[0]
            part += (
                jm.params.sigma2[j]
                * chain_x(j, s - 1)
                * _chain(rho_D, j, t2, D.shape[0])
                * r
            )
        t_parts.append(part)
    t_vec = np.concatenate(t_parts)
    v2 = sum(jm.params.sigma2[j] * chain_x(j, s - 1) ** 2 for j in range(s))
    return h, t_vec, v2


def joint_predict(jm: JointModel, x):
    """Kriging mean and variance of the finest level at one point.

    Solves against the full covariance on every call; this is the reference
    cost model, not a production predictor.
    """
    x = np.asarray(x, dtype=float).ravel()
    d = jm.designs[0].shape[1]
    if x.size != d:
        raise ShapeError(f"query point has {x.size} coordinates, expected {d}")
    h, t_vec, v2 = _query_vectors(jm, x)
    resid = jm.z - jm.H_joint @ jm.beta_all
    mean = float(h @ jm.beta_all + t_vec @ np.linalg.solve(jm.V, resid))
    variance = float(v2 - t_vec @ np.linalg.solve(jm.V, t_vec))
    return mean, variance


@dataclass(frozen=True)
class TimingReport:
    """Wall times and agreement figures for the two formulations."""

    sizes: tuple
    dim: int
    seed: int
    n_query: int
    recursive_fit_s: float
    recursive_predict_s: float
    joint_build_s: float
    joint_predict_s: float
    max_mean_diff: float
    max_var_diff: float

    @property
    def recursive_total_s(self) -> float:
        return self.recursive_fit_s + self.recursive_predict_s

    @property
    def joint_total_s(self) -> float:
        return self.joint_build_s + self.joint_predict_s

    @property
    def speedup(self) -> float:
        return self.joint_total_s / self.recursive_total_s


def _synthetic_levels(sizes, d, seed):
    """Deterministic nested data for the timing comparison."""
    # Imported here to keep this module loadable without the design module
    # in the dependency-sensitive import order of the tests.
    from .basis import BasisSpec
    from .design import DesignRequest, nest
    from .gpcore import LevelData

    bounds = np.column_stack([np.zeros(d), np.ones(d)])
    designs = nest(DesignRequest(sizes=tuple(reversed(sizes)), bounds=bounds, method="lhs", seed=seed))

    def response(level, X):
        base = np.sin(3.0 * X.sum(axis=1)) + 0.5 * np.cos(5.0 * X[:, 0])
        return (0.8**level) * base + 0.1 * level * X.sum(axis=1)

    levels = []
    for t, D in enumerate(designs):
        if t == 0:
            levels.append(LevelData(D, response(0, D), f_basis=BasisSpec.constant()))
        else:
            levels.append(
                LevelData(
                    D, response(t, D), f_basis=BasisSpec.constant(),
                    g_basis=BasisSpec.constant(),
                    lower_observations=response(t - 1, D),
                )
            )
    return levels


def timed_fit_predict(sizes, d: int, seed: int = 0, n_query: int = 25) -> TimingReport:
    """Time both formulations on the same synthetic instance.

    Parameters
    ----------
    sizes : tuple of int
        Per-level point counts, coarsest first.
    d : int
        Input dimension.
    seed : int
    n_query : int
        Number of prediction points.

    Returns
    -------
    TimingReport
        Deterministic in content for fixed seed; only the times vary.
    """
    from .design import base_design
    from .model import fit, predict_simple

    levels = _synthetic_levels(sizes, d, seed)
    theta = np.full(d, 0.4)
    kernels = [KernelSpec(theta=theta) for _ in sizes]
    bounds = np.column_stack([np.zeros(d), np.ones(d)])
    X = base_design(n_query, bounds, method="lhs", seed=seed + 1000)

    t0 = time.perf_counter()
    model = fit(levels, kernels=kernels)
    t1 = time.perf_counter()
    pred = predict_simple(model, X)
    t2 = time.perf_counter()

    params = JointParams.from_model(model)
    t3 = time.perf_counter()
    jm = build_joint(levels, params)
    t4 = time.perf_counter()
    jmean = np.empty(n_query)
    jvar = np.empty(n_query)
    for i in range(n_query):
        jmean[i], jvar[i] = joint_predict(jm, X[i])
    t5 = time.perf_counter()

    return TimingReport(
        sizes=tuple(int(n) for n in sizes),
        dim=d,
        seed=seed,
        n_query=n_query,
        recursive_fit_s=t1 - t0,
        recursive_predict_s=t2 - t1,
        joint_build_s=t4 - t3,
        joint_predict_s=t5 - t4,
        max_mean_diff=float(np.max(np.abs(pred.top_mean - jmean))),
        max_var_diff=float(np.max(np.abs(pred.top_variance - jvar))),
    )
