"""Shared instance builders for the test suite.

Instances are deterministic in the seed: nested designs from the design
module, responses from small random trigonometric sums linked level to level
by an affine adjustment factor, so every instance has genuine multi-fidelity
structure with O(1) response scale.
"""

import numpy as np

from mfcokrig import BasisSpec, KernelSpec, LevelData
from mfcokrig.design import DesignRequest, nest

UNIT = lambda d: np.column_stack([np.zeros(d), np.ones(d)])  # noqa: E731


def _trig_sum(rng, d, n_terms=3, amplitude=1.0):
    """A smooth random function as a closure over rng draws."""
    w = rng.normal(size=n_terms) * amplitude / np.sqrt(n_terms)
    freq = rng.uniform(1.0, 4.0, size=(n_terms, d))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_terms)

    def f(X):
        X = np.atleast_2d(X)
        return sum(w[k] * np.sin(X @ freq[k] + phase[k]) for k in range(n_terms))

    return f


def make_responses(seed, s, d):
    """Per-level response functions [f_1, ..., f_s], coarsest first."""
    rng = np.random.default_rng(seed)
    base = _trig_sum(rng, d)
    funcs = [base]
    for _ in range(1, s):
        a = rng.uniform(0.7, 1.3)
        b = rng.uniform(-0.3, 0.3)
        delta = _trig_sum(rng, d, amplitude=0.3)
        prev = funcs[-1]

        def f(X, a=a, b=b, delta=delta, prev=prev):
            X = np.atleast_2d(X)
            return (a + b * X[:, 0]) * prev(X) + delta(X)

        funcs.append(f)
    return funcs


def make_levels(seed, s=2, d=1, sizes=(24, 12, 8), f_terms=None, g_terms=None,
                method="lhs"):
    """Nested LevelData instances, coarsest first.

    ``f_terms`` / ``g_terms`` are per-level term tuples; defaults alternate a
    constant and a constant-plus-linear basis so both shapes stay exercised.
    """
    if s > len(sizes):
        raise ValueError("not enough sizes for the requested level count")
    sizes = sizes[:s]
    designs = nest(DesignRequest(sizes=tuple(reversed(sizes)), bounds=UNIT(d),
                                 method=method, seed=seed))
    funcs = make_responses(seed, s, d)
    if f_terms is None:
        f_terms = [("1",) if t % 2 == 0 else ("1", "x0") for t in range(s)]
    if g_terms is None:
        g_terms = [("1",) if t % 2 == 1 else ("1", "x0") for t in range(1, s)]
    levels = []
    for t, D in enumerate(designs):
        if t == 0:
            levels.append(LevelData(D, funcs[0](D), f_basis=BasisSpec(tuple(f_terms[0]))))
        else:
            levels.append(LevelData(
                D, funcs[t](D), f_basis=BasisSpec(tuple(f_terms[t])),
                g_basis=BasisSpec(tuple(g_terms[t - 1])),
                lower_observations=funcs[t - 1](D),
            ))
    return levels


def fixed_kernels(s, d, theta=0.5, nugget=1e-10, family="matern52"):
    return [KernelSpec(theta=np.full(d, theta), family=family, nugget=nugget)
            for _ in range(s)]
