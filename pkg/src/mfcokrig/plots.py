"""Figure rendering for the command line report paths.

Everything here draws to a file via the Agg backend; nothing opens a window.
Each helper takes plain arrays so it stays usable from library code too.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_design_figure(designs, path):
    """Scatter the nested designs, one marker size per level.

    For one input dimension the levels are spread on separate rows; for two
    or more the first two coordinates are shown.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    sizes = np.linspace(90, 25, num=len(designs))
    for t, D in enumerate(designs):
        D = np.asarray(D, dtype=float)
        if D.shape[1] == 1:
            ax.scatter(D[:, 0], np.full(D.shape[0], t + 1), s=sizes[t],
                       label=f"level {t + 1} (n={D.shape[0]})")
            ax.set_yticks(range(1, len(designs) + 1))
            ax.set_ylabel("level")
        else:
            ax.scatter(D[:, 0], D[:, 1], s=sizes[t],
                       label=f"level {t + 1} (n={D.shape[0]})")
            ax.set_ylabel("x2")
    ax.set_xlabel("x1")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)


def save_prediction_figure(X, mean, variance, path):
    """Plot the predictive mean with a two-standard-deviation band.

    Only meaningful for one input dimension; higher dimensions fall back to
    mean versus point index.
    """
    X = np.asarray(X, dtype=float)
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    fig, ax = plt.subplots(figsize=(6, 4))
    if X.shape[1] == 1:
        order = np.argsort(X[:, 0])
        x = X[order, 0]
        ax.plot(x, mean[order], lw=1.5, label="mean")
        ax.fill_between(x, mean[order] - 2 * sd[order], mean[order] + 2 * sd[order],
                        alpha=0.25, label="mean +/- 2 sd")
        ax.set_xlabel("x1")
    else:
        idx = np.arange(mean.size)
        ax.errorbar(idx, mean, yerr=2 * sd, fmt="o", ms=3, lw=0.8, label="mean +/- 2 sd")
        ax.set_xlabel("point index")
    ax.set_ylabel("prediction")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)


def save_cv_figure(errors, variances, path):
    """Cross-validation residuals with two-standard-deviation whiskers."""
    errors = np.asarray(errors, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(variances, dtype=float), 0.0))
    idx = np.arange(errors.size)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(idx, errors, yerr=2 * sd, fmt="o", ms=3, lw=0.8)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("held-out point")
    ax.set_ylabel("prediction error")
    _save(fig, path)


def save_eval_figure(truth, pred_mean, path):
    """Truth against prediction with the identity line."""
    truth = np.asarray(truth, dtype=float)
    pred_mean = np.asarray(pred_mean, dtype=float)
    lo = min(truth.min(), pred_mean.min())
    hi = max(truth.max(), pred_mean.max())
    pad = 0.05 * (hi - lo or 1.0)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], "k-", lw=0.8)
    ax.scatter(truth, pred_mean, s=18, alpha=0.8)
    ax.set_xlabel("truth")
    ax.set_ylabel("predicted mean")
    ax.set_aspect("equal")
    _save(fig, path)


def save_benchmark_figure(n2_values, co_stats, kr_stats, path):
    """Accuracy against top-level design size for both methods.

    ``co_stats`` and ``kr_stats`` are (mean, q05, q95) triples of arrays
    aligned with ``n2_values``.
    """
    n2 = np.asarray(n2_values)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (mid, lo, hi) in (("co-kriging", co_stats), ("kriging", kr_stats)):
        ax.plot(n2, mid, marker="o", label=label)
        ax.fill_between(n2, lo, hi, alpha=0.2)
    ax.set_yscale("log")
    ax.set_xlabel("top-level design size")
    ax.set_ylabel("test RMSE")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)
