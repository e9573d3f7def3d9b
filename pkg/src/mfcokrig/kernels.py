"""Stationary correlation kernels, tensorized over input dimensions.

A kernel here is a product of one-dimensional correlation functions, one per
input coordinate, each with its own length scale.  Correlation matrices over a
design carry a small diagonal inflation (the nugget) so that Cholesky
factorization stays reliable; cross-correlation vectors between a query point
and the design do not.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import IllConditionedError, InvalidHyperparameterError, ShapeError

FAMILIES = ("matern52", "sqexp")

# Diagonal inflation ladder: start at the requested nugget, multiply by 10 on
# each failed factorization, give up above this ceiling.
NUGGET_CEILING = 1e-6
DEFAULT_NUGGET = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    """Tensorized stationary kernel: family, per-dimension length scales, nugget.

    Parameters
    ----------
    theta : ndarray, shape (d,)
        Positive correlation lengths, one per input dimension.
    family : str
        One of ``"matern52"`` or ``"sqexp"``.
    nugget : float
        Relative diagonal inflation applied to data-data correlation matrices.
        Must lie in [0, 1e-6].  Zero disables inflation (and the escalation
        ladder), so duplicated design points become a hard error.
    """

    theta: np.ndarray
    family: str = "matern52"
    nugget: float = DEFAULT_NUGGET

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if th.ndim != 1 or th.size == 0:
            raise ShapeError("theta must be a 1-d array with one entry per input dimension")
        if not np.all(np.isfinite(th)) or np.any(th <= 0.0):
            raise InvalidHyperparameterError(f"length scales must be finite and positive, got {th}")
        if self.family not in FAMILIES:
            raise InvalidHyperparameterError(f"unknown kernel family {self.family!r}, expected one of {FAMILIES}")
        if not (0.0 <= self.nugget <= NUGGET_CEILING):
            raise InvalidHyperparameterError(f"nugget must lie in [0, {NUGGET_CEILING}], got {self.nugget}")
        th.flags.writeable = False
        object.__setattr__(self, "theta", th)

    @property
    def ndim(self) -> int:
        return self.theta.size


def matern52_1d(h, theta):
    """Matern correlation with smoothness 5/2 for scalar distances.

    Parameters
    ----------
    h : array_like
        Distances (any sign; only the magnitude matters).
    theta : float
        Positive correlation length.

    Returns
    -------
    ndarray or float
        ``(1 + a + a**2/3) * exp(-a)`` with ``a = sqrt(5)|h|/theta``.
    """
    if not np.isfinite(theta) or theta <= 0.0:
        raise InvalidHyperparameterError(f"length scale must be finite and positive, got {theta}")
    a = np.sqrt(5.0) * np.abs(np.asarray(h, dtype=float)) / theta
    out = (1.0 + a + a * a / 3.0) * np.exp(-a)
    return out if out.ndim else float(out)


def sqexp_1d(h, theta):
    """Squared-exponential correlation, ``exp(-h**2 / (2 theta**2))``."""
    if not np.isfinite(theta) or theta <= 0.0:
        raise InvalidHyperparameterError(f"length scale must be finite and positive, got {theta}")
    u = np.asarray(h, dtype=float) / theta
    out = np.exp(-0.5 * u * u)
    return out if out.ndim else float(out)


_FAMILY_1D = {"matern52": matern52_1d, "sqexp": sqexp_1d}


def cross_correlation(X, X2, spec: KernelSpec) -> np.ndarray:
    """Correlation between two point sets, without any nugget.

    Parameters
    ----------
    X : ndarray, shape (n, d)
    X2 : ndarray, shape (m, d)
    spec : KernelSpec

    Returns
    -------
    ndarray, shape (n, m)
        Product over dimensions of the one-dimensional correlations.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    d = spec.ndim
    if X.shape[1] != d or X2.shape[1] != d:
        raise ShapeError(f"points have {X.shape[1]} and {X2.shape[1]} columns, kernel expects {d}")
    r1d = _FAMILY_1D[spec.family]
    out = np.ones((X.shape[0], X2.shape[0]))
    for j in range(d):
        out *= r1d(X[:, j, None] - X2[None, :, j], spec.theta[j])
    return out


def correlation(x, x2, spec: KernelSpec) -> float:
    """Correlation between two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape or x.ndim != 1:
        raise ShapeError(f"points must be 1-d with equal length, got shapes {x.shape} and {x2.shape}")
    return float(cross_correlation(x[None, :], x2[None, :], spec)[0, 0])


@dataclass(frozen=True)
class FactoredCorrelation:
    """Correlation matrix over a design together with its Cholesky factor.

    ``matrix`` includes ``nugget`` on the diagonal; ``cholesky`` is lower
    triangular with ``matrix == cholesky @ cholesky.T``.  ``nugget`` is the
    inflation actually applied, which may exceed the requested one if the
    escalation ladder had to climb.
    """

    matrix: np.ndarray
    cholesky: np.ndarray
    nugget: float


def correlation_matrix(D, spec: KernelSpec) -> FactoredCorrelation:
    """Build and factorize the data-data correlation matrix of a design.

    Starts from ``spec.nugget`` on the diagonal.  If factorization fails the
    nugget is multiplied by 10 and the attempt repeated, up to 1e-6; after
    that an :class:`IllConditionedError` reports the last nugget tried.  A
    zero nugget disables escalation entirely.

    Parameters
    ----------
    D : ndarray, shape (n, d)
        Design points.
    spec : KernelSpec

    Returns
    -------
    FactoredCorrelation
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    R0 = cross_correlation(D, D, spec)
    R0 = 0.5 * (R0 + R0.T)
    n = R0.shape[0]
    nugget = spec.nugget
    while True:
        R = R0 + nugget * np.eye(n)
        try:
            L = scipy.linalg.cholesky(R, lower=True)
            return FactoredCorrelation(matrix=R, cholesky=L, nugget=nugget)
        except scipy.linalg.LinAlgError:
            if nugget == 0.0 or nugget >= NUGGET_CEILING:
                raise IllConditionedError(
                    f"correlation matrix of {n} points is not factorizable "
                    f"(last nugget tried: {nugget:g}); the design may contain "
                    f"duplicated or near-duplicated points",
                    nugget=nugget,
                ) from None
            nugget = min(nugget * 10.0, NUGGET_CEILING)
