"""Versioned model persistence.

A fitted multi-fidelity model is stored as structured JSON: raw training
data, basis term strings, kernel hyperparameters and the fitted trend /
variance posteriors.  Matrices that are cheap to rebuild (correlation
factorizations, residual weights) are recomputed at load so the archive
stays small and the loaded model is numerically identical to the saved one.
"""

import json

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .basis import BasisSpec
from .dataio import atomic_write_text
from .errors import DataFormatError, IllConditionedError
from .gpcore import FittedLevel, LevelData, PriorSpec, build_experience_matrix
from .kernels import KernelSpec, cross_correlation
from .model import MultiFidelityModel, _match_nested

FORMAT_NAME = "mfcokrig-model"
FORMAT_VERSION = 1


def _prior_to_json(prior: PriorSpec):
    if prior.mode == "noninformative":
        return {"mode": "noninformative"}
    return {
        "mode": "informative",
        "b": prior.b.tolist(),
        "V": prior.V.tolist(),
        "alpha": prior.alpha,
        "gamma": prior.gamma,
    }


def _prior_from_json(obj):
    if obj["mode"] == "noninformative":
        return PriorSpec.noninformative()
    return PriorSpec.informative(
        b=np.asarray(obj["b"], dtype=float),
        V=np.asarray(obj["V"], dtype=float),
        alpha=float(obj["alpha"]),
        gamma=float(obj["gamma"]),
    )


def save_model(model: MultiFidelityModel, path, provenance=None):
    """Serialize a fitted model to ``path``.

    Parameters
    ----------
    model : MultiFidelityModel
    path : str
    provenance : dict, optional
        Free-form reproducibility notes (seed, objective, ...) stored
        verbatim under the ``provenance`` key.
    """
    levels = []
    for data, fit in model.levels:
        levels.append({
            "design": data.design.tolist(),
            "observations": data.observations.tolist(),
            "f_basis": list(data.f_basis.terms),
            "g_basis": list(data.g_basis.terms) if data.g_basis is not None else None,
            "lower_observations": (
                data.lower_observations.tolist()
                if data.lower_observations is not None else None
            ),
            "kernel": {
                "family": fit.kernel.family,
                "theta": fit.kernel.theta.tolist(),
                "nugget": fit.kernel.nugget,
            },
            "applied_nugget": fit.applied_nugget,
            "trend_mean": fit.trend_mean.tolist(),
            "trend_cov_scale": fit.trend_cov_scale.tolist(),
            "Q": fit.Q,
            "a": fit.a,
            "prior": _prior_to_json(fit.prior),
        })
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "provenance": dict(provenance or {}),
        "levels": levels,
    }
    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def load_model(path) -> MultiFidelityModel:
    """Rebuild a fitted model from an archive written by save_model."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise DataFormatError(f"{path}: not a {FORMAT_NAME} archive")
    if doc.get("version") != FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: unsupported archive version {doc.get('version')!r}"
        )
    pairs = []
    try:
        for entry in doc["levels"]:
            data = LevelData(
                design=np.asarray(entry["design"], dtype=float),
                observations=np.asarray(entry["observations"], dtype=float),
                f_basis=BasisSpec(tuple(entry["f_basis"])),
                g_basis=(
                    BasisSpec(tuple(entry["g_basis"]))
                    if entry["g_basis"] is not None else None
                ),
                lower_observations=(
                    np.asarray(entry["lower_observations"], dtype=float)
                    if entry["lower_observations"] is not None else None
                ),
            )
            kernel = KernelSpec(
                theta=np.asarray(entry["kernel"]["theta"], dtype=float),
                family=entry["kernel"]["family"],
                nugget=float(entry["kernel"]["nugget"]),
            )
            applied = float(entry["applied_nugget"])
            # Rebuild with the nugget that was actually applied at fit time;
            # no escalation here, the archive records a factorizable state.
            R = cross_correlation(data.design, data.design, kernel)
            R = 0.5 * (R + R.T) + applied * np.eye(data.n)
            try:
                L = cholesky(R, lower=True)
            except np.linalg.LinAlgError:
                raise IllConditionedError(
                    f"{path}: stored correlation matrix is no longer factorizable",
                    nugget=applied,
                ) from None
            H = build_experience_matrix(data)
            trend_mean = np.asarray(entry["trend_mean"], dtype=float)
            fit = FittedLevel(
                kernel=kernel,
                applied_nugget=applied,
                H=H,
                R=R,
                R_factor=L,
                trend_mean=trend_mean,
                trend_cov_scale=np.asarray(entry["trend_cov_scale"], dtype=float),
                Q=float(entry["Q"]),
                a=float(entry["a"]),
                n_adjust=data.n_adjust,
                prior=_prior_from_json(entry["prior"]),
                resid_weights=cho_solve((L, True), data.observations - H @ trend_mean),
            )
            pairs.append((data, fit))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: malformed archive: {exc}") from None

    nest_maps = [None]
    for t in range(1, len(pairs)):
        nest_maps.append(_match_nested(pairs[t][0].design, pairs[t - 1][0].design, t))
    return MultiFidelityModel(levels=tuple(pairs), nest_maps=tuple(nest_maps))
