"""Trend bases: ordered collections of regression functions.

Terms are plain strings so that a basis serializes trivially: ``"1"`` is the
constant function and ``"x<j>"`` is the j-th input coordinate (0-based).
"""

import re
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, ShapeError

_TERM_RE = re.compile(r"^(1|x(\d+))$")


@dataclass(frozen=True)
class BasisSpec:
    """An ordered, duplicate-free tuple of regression terms.

    Each term is ``"1"`` (constant) or ``"x<j>"`` (coordinate ``j``, 0-based),
    e.g. ``BasisSpec(("1", "x0"))`` for a constant-plus-first-coordinate trend.
    """

    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise DataFormatError("a basis needs at least one term")
        if len(set(terms)) != len(terms):
            raise DataFormatError(f"duplicate basis terms in {terms}")
        for t in terms:
            if not isinstance(t, str) or _TERM_RE.match(t) is None:
                raise DataFormatError(f"unknown basis term {t!r}; expected '1' or 'x<j>'")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def constant(cls) -> "BasisSpec":
        return cls(("1",))

    @classmethod
    def constant_linear(cls, *dims) -> "BasisSpec":
        """Constant term followed by the listed coordinates (default: x0)."""
        if not dims:
            dims = (0,)
        return cls(("1",) + tuple(f"x{int(j)}" for j in dims))

    @property
    def size(self) -> int:
        return len(self.terms)

    def max_dim(self) -> int:
        """Largest coordinate index referenced, or -1 for a constant basis."""
        dims = [int(m.group(2)) for m in map(_TERM_RE.match, self.terms) if m.group(2) is not None]
        return max(dims, default=-1)

    def evaluate(self, X) -> np.ndarray:
        """Evaluate every term at the given points.

        Parameters
        ----------
        X : ndarray, shape (n, d)

        Returns
        -------
        ndarray, shape (n, size)
            Column ``k`` holds term ``k`` evaluated at each row of ``X``.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.max_dim() >= X.shape[1]:
            raise ShapeError(
                f"basis {self.terms} references coordinate x{self.max_dim()} "
                f"but points have only {X.shape[1]} columns"
            )
        cols = []
        for t in self.terms:
            if t == "1":
                cols.append(np.ones(X.shape[0]))
            else:
                cols.append(X[:, int(t[1:])].copy())
        return np.column_stack(cols)
