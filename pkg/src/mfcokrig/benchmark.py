"""Paired accuracy study: two-level co-kriging against single-level kriging.

The study holds the coarse budget fixed, sweeps the fine budget, and repeats
over independent nested designs so the two methods see identical data at
every repeat.  Accuracy is the root mean squared error of the top-level
predictive mean over a common test set.
"""

from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec
from .design import DesignRequest, base_design, nest
from .errors import DesignError
from .gpcore import LevelData
from .metrics import EvalSet, rmse
from .model import fit, predict_batch

UNIT_INTERVAL = np.array([[0.0, 1.0]])
UNIT_SQUARE = np.array([[0.0, 1.0], [0.0, 1.0]])


def forrester_high(X):
    """Industry-standard one-dimensional test curve."""
    x = np.asarray(X, dtype=float).reshape(-1)
    return (6.0 * x - 2.0) ** 2 * np.sin(12.0 * x - 4.0)


def forrester_low(X):
    """Cheap companion: scaled high-fidelity curve plus a linear shift."""
    x = np.asarray(X, dtype=float).reshape(-1)
    return 0.5 * forrester_high(x) + 10.0 * (x - 0.5) - 5.0


def forrester2d_high(X):
    """Two-dimensional extension: the test curve plus a cosine ridge."""
    X = np.asarray(X, dtype=float)
    return forrester_high(X[:, 0]) + 10.0 * np.cos(2.0 * np.pi * X[:, 1])


def forrester2d_low(X):
    X = np.asarray(X, dtype=float)
    return (0.5 * forrester2d_high(X)
            + 10.0 * (X[:, 0] - 0.5) + 5.0 * (X[:, 1] - 0.5) - 5.0)


PROBLEMS = {
    "forrester": (forrester_low, forrester_high, UNIT_INTERVAL),
    "forrester2d": (forrester2d_low, forrester2d_high, UNIT_SQUARE),
}


@dataclass(frozen=True)
class BenchmarkResult:
    """Per-repeat accuracy for both methods.

    ``rmse_cokriging`` and ``rmse_kriging`` have shape
    (len(n2_values), repeats); row j, column r is the paired run with the
    fine budget ``n2_values[j]`` on repeat r's designs.
    """

    problem: str
    n1: int
    n2_values: tuple
    repeats: int
    seed: int
    rmse_cokriging: np.ndarray
    rmse_kriging: np.ndarray

    def win_fractions(self) -> np.ndarray:
        """Share of repeats where co-kriging beats kriging, per fine budget."""
        return np.mean(self.rmse_cokriging < self.rmse_kriging, axis=1)

    def summary(self):
        """Build the (header, rows) table behind the exported report."""
        header = ["n2", "cokriging_mean", "cokriging_q05", "cokriging_q95",
                  "kriging_mean", "kriging_q05", "kriging_q95", "win_fraction"]
        wins = self.win_fractions()
        rows = []
        for j, n2 in enumerate(self.n2_values):
            co = self.rmse_cokriging[j]
            kr = self.rmse_kriging[j]
            rows.append([
                float(n2),
                co.mean(), np.quantile(co, 0.05), np.quantile(co, 0.95),
                kr.mean(), np.quantile(kr, 0.05), np.quantile(kr, 0.95),
                wins[j],
            ])
        return header, rows


def _design_seed(seed, repeat, size_index) -> int:
    # One independent stream per (study seed, repeat, budget) cell.
    return int(np.random.SeedSequence((seed, repeat, size_index)).generate_state(1)[0])


def run_benchmark(problem="forrester", n1=25, n2_values=(5, 10, 15, 20, 25),
                  repeats=100, seed=0, n_test=200, restarts=3) -> BenchmarkResult:
    """Run the paired study.

    Parameters
    ----------
    problem : str
        Key into PROBLEMS.
    n1 : int
        Coarse-level budget, held fixed.
    n2_values : sequence of int
        Fine-level budgets to sweep; each must be <= n1.
    repeats : int
        Independent design draws per budget.
    seed : int
        Master seed; every repeat derives its own design stream.
    n_test : int
        Test-set size for the RMSE.
    restarts : int
        Length-scale search restarts per level fit.

    Returns
    -------
    BenchmarkResult
    """
    if problem not in PROBLEMS:
        raise DesignError(f"unknown problem {problem!r}; choose from {sorted(PROBLEMS)}")
    low, high, bounds = PROBLEMS[problem]
    d = bounds.shape[0]
    n2_values = tuple(int(v) for v in n2_values)
    if any(v < 2 for v in n2_values) or any(v > n1 for v in n2_values):
        raise DesignError("each fine budget must satisfy 2 <= n2 <= n1")

    if d == 1:
        X_test = np.linspace(bounds[0, 0], bounds[0, 1], n_test)[:, None]
    else:
        X_test = base_design(n_test, bounds, method="lhs", seed=seed + 999983)
    z_test = high(X_test)

    f_fine = BasisSpec.constant_linear(*range(d))
    rmse_co = np.empty((len(n2_values), repeats))
    rmse_kr = np.empty((len(n2_values), repeats))
    for j, n2 in enumerate(n2_values):
        for r in range(repeats):
            req = DesignRequest(sizes=(n2, n1), bounds=bounds,
                                method="maximin_lhs", seed=_design_seed(seed, r, j))
            D1, D2 = nest(req)
            z1, z2 = low(D1), high(D2)
            coarse = LevelData(design=D1, observations=z1, f_basis=BasisSpec.constant())
            fine = LevelData(design=D2, observations=z2, f_basis=f_fine,
                             g_basis=BasisSpec.constant(),
                             lower_observations=low(D2))
            co_model = fit([coarse, fine], restarts=restarts, seed=seed)
            co_pred = predict_batch(co_model, X_test, mode="simple")
            rmse_co[j, r] = rmse(EvalSet(
                truth=z_test, pred_mean=co_pred.top_mean, pred_var=co_pred.top_variance))

            single = LevelData(design=D2, observations=z2, f_basis=f_fine)
            kr_model = fit([single], restarts=restarts, seed=seed)
            kr_pred = predict_batch(kr_model, X_test, mode="simple")
            rmse_kr[j, r] = rmse(EvalSet(
                truth=z_test, pred_mean=kr_pred.top_mean, pred_var=kr_pred.top_variance))

    return BenchmarkResult(
        problem=problem, n1=n1, n2_values=n2_values, repeats=repeats, seed=seed,
        rmse_cokriging=rmse_co, rmse_kriging=rmse_kr,
    )
