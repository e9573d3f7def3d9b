"""Space-filling base designs and nested multi-level designs.

The nesting algorithm keeps the finest design exactly as drawn, then grows
each coarser level around it: draw a fresh base design of the coarser size,
delete the candidate nearest to each fine point (one deletion per point,
without replacement), and take the union of the survivors with the fine
design.  Every finer design is therefore a coordinate-exact subset of every
coarser one.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DesignError

METHODS = ("random", "lhs", "maximin_lhs")
MAXIMIN_RESTARTS = 20


@dataclass(frozen=True)
class DesignRequest:
    """Sizes, box bounds, base method and seed for a nested design.

    ``sizes`` runs from the finest level to the coarsest, so it must be
    nondecreasing; ``bounds`` is one (low, high) interval per dimension.
    """

    sizes: tuple
    bounds: np.ndarray
    method: str = "maximin_lhs"
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        if not sizes or any(n < 1 for n in sizes):
            raise DesignError(f"sizes must be positive integers, got {sizes}")
        for fine, coarse in zip(sizes, sizes[1:]):
            if fine > coarse:
                raise DesignError(
                    f"sizes must not decrease toward the coarsest level, got {sizes}"
                )
        bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if bounds.ndim != 2 or bounds.shape[1] != 2:
            raise DesignError(f"bounds must have shape (d, 2), got {bounds.shape}")
        if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 0] >= bounds[:, 1]):
            raise DesignError("every bounds row must be a nonempty finite interval")
        if self.method not in METHODS:
            raise DesignError(f"unknown method {self.method!r}, expected one of {METHODS}")
        bounds.flags.writeable = False
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "bounds", bounds)

    @property
    def nlevels(self) -> int:
        return len(self.sizes)


def _lhs_unit(n: int, d: int, rng) -> np.ndarray:
    """Latin hypercube on the unit cube: one point per axis stratum."""
    u = (rng.permuted(np.tile(np.arange(n), (d, 1)), axis=1).T + rng.random((n, d))) / n
    return u


def base_design(n: int, bounds, method: str = "maximin_lhs", seed: int = 0) -> np.ndarray:
    """Draw a space-filling design inside a box.

    Parameters
    ----------
    n : int
        Number of points, at least 1.
    bounds : ndarray, shape (d, 2)
        Per-dimension (low, high) intervals.
    method : str
        ``"random"`` for uniform sampling, ``"lhs"`` for a Latin hypercube,
        ``"maximin_lhs"`` for the best of several hypercubes by minimum
        pairwise distance.
    seed : int

    Returns
    -------
    ndarray, shape (n, d)
    """
    if n < 1:
        raise DesignError(f"a design needs at least one point, got n = {n}")
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    d = bounds.shape[0]
    rng = np.random.default_rng(seed)
    if method == "random":
        unit = rng.random((n, d))
    elif method == "lhs":
        unit = _lhs_unit(n, d, rng)
    elif method == "maximin_lhs":
        best, best_dist = None, -np.inf
        for _ in range(MAXIMIN_RESTARTS):
            cand = _lhs_unit(n, d, rng)
            dist = _min_pairwise(cand)
            if dist > best_dist:
                best, best_dist = cand, dist
        unit = best
    else:
        raise DesignError(f"unknown method {method!r}, expected one of {METHODS}")
    return bounds[:, 0] + unit * (bounds[:, 1] - bounds[:, 0])


def _min_pairwise(X: np.ndarray) -> float:
    if X.shape[0] < 2:
        return np.inf
    diff = X[:, None, :] - X[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    iu = np.triu_indices(X.shape[0], k=1)
    return float(np.min(d2[iu]))


def nest(req: DesignRequest):
    """Generate nested designs, coarsest first.

    The finest design is exactly ``base_design(n_s, bounds, method, seed)``.
    Each coarser level draws a fresh candidate design of its own full size
    (seed advanced by one per level), deletes the candidate nearest to each
    point of the finer design (normalized Euclidean distance, lowest index on
    ties, finer points visited in index order), and appends the finer design
    to the survivors.

    Returns
    -------
    list of ndarray
        ``[D_1, ..., D_s]`` ordered coarsest to finest, so ``designs[t]`` is
        a coordinate-exact subset of ``designs[t-1]``.
    """
    bounds = req.bounds
    span = bounds[:, 1] - bounds[:, 0]
    finer = base_design(req.sizes[0], bounds, req.method, req.seed)
    designs = [finer]
    for k, n_coarse in enumerate(req.sizes[1:], start=1):
        if n_coarse < finer.shape[0]:
            raise DesignError(
                f"coarser level must have at least as many points as the finer "
                f"one, got {n_coarse} < {finer.shape[0]}"
            )
        candidates = base_design(n_coarse, bounds, req.method, req.seed + k)
        alive = np.ones(n_coarse, dtype=bool)
        unit_cand = (candidates - bounds[:, 0]) / span
        for x in finer:
            ux = (x - bounds[:, 0]) / span
            d2 = np.sum((unit_cand - ux) ** 2, axis=1)
            d2[~alive] = np.inf
            alive[int(np.argmin(d2))] = False
        coarse = np.vstack([candidates[alive], finer])
        designs.append(coarse)
        finer = coarse
    designs.reverse()
    return designs
