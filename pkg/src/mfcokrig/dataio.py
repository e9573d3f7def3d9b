"""Delimited text ingestion and export, plus the run configuration.

All numeric text is decimal with 17 significant digits, which round-trips
float64 exactly.  Files are written atomically (temp file in the target
directory, then rename).  Parse failures always name the offending line.
"""

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec
from .errors import DataFormatError
from .gpcore import LevelData, PriorSpec
from .kernels import DEFAULT_NUGGET, FAMILIES, KernelSpec

LOWER_COLUMN = "z_lower"


def format_float(v) -> str:
    return f"{float(v):.17g}"


def atomic_write_text(path, text: str):
    """Write a file so readers never observe a partial state."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        mask = os.umask(0)
        os.umask(mask)
        os.chmod(tmp, 0o666 & ~mask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(path, header, rows):
    """Write a comma-delimited table; numeric cells get 17 significant digits."""
    lines = [",".join(header)]
    for row in rows:
        cells = [cell if isinstance(cell, str) else format_float(cell) for cell in row]
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_table(path):
    """Strictly parse a comma-delimited numeric table.

    Returns
    -------
    (header, values) : (list of str, ndarray of shape (n, ncols))

    Raises
    ------
    DataFormatError
        Naming the line for any malformed row, inconsistent column count or
        non-finite value.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataFormatError(f"{path}: empty file") from None
            header = [h.strip() for h in header]
            if any(not h for h in header):
                raise DataFormatError(f"{path}: line 1: empty column name in header")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataFormatError(
                        f"{path}: line {lineno}: expected {len(header)} columns, got {len(row)}"
                    )
                vals = []
                for name, cell in zip(header, row):
                    try:
                        v = float(cell)
                    except ValueError:
                        raise DataFormatError(
                            f"{path}: line {lineno}: column {name!r} has non-numeric value {cell!r}"
                        ) from None
                    if not math.isfinite(v):
                        raise DataFormatError(
                            f"{path}: line {lineno}: column {name!r} has non-finite value {cell!r}"
                        )
                    vals.append(v)
                rows.append(vals)
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc.strerror or exc}") from None
    values = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
    return header, values


def ingest_level_csv(path, f_basis: BasisSpec = None, g_basis: BasisSpec = None) -> LevelData:
    """Read one level's design and observations.

    The header names the input columns first, then the output column; levels
    above the first also carry the lower-level output in a trailing column
    named ``z_lower``.  Bases default to constant.

    Parameters
    ----------
    path : str
    f_basis, g_basis : BasisSpec, optional

    Returns
    -------
    LevelData
    """
    header, values = read_table(path)
    has_lower = header[-1] == LOWER_COLUMN
    if LOWER_COLUMN in header[:-1]:
        raise DataFormatError(f"{path}: line 1: {LOWER_COLUMN!r} must be the last column")
    n_aux = 2 if has_lower else 1
    d = len(header) - n_aux
    if d < 1:
        raise DataFormatError(f"{path}: line 1: no input columns before the output column")
    if values.shape[0] == 0:
        raise DataFormatError(f"{path}: no data rows")
    design = values[:, :d]
    z = values[:, d]
    if f_basis is None:
        f_basis = BasisSpec.constant()
    if has_lower and g_basis is None:
        g_basis = BasisSpec.constant()
    if not has_lower and g_basis is not None:
        raise DataFormatError(
            f"{path}: an adjustment basis was given but the file has no {LOWER_COLUMN!r} column"
        )
    return LevelData(
        design=design,
        observations=z,
        f_basis=f_basis,
        g_basis=g_basis if has_lower else None,
        lower_observations=values[:, d + 1] if has_lower else None,
    )


def export_level_csv(path, data: LevelData):
    """Write a level back out in the ingestion format."""
    d = data.dim
    header = [f"x{j + 1}" for j in range(d)] + ["z"]
    cols = [data.design, data.observations[:, None]]
    if data.lower_observations is not None:
        header.append(LOWER_COLUMN)
        cols.append(data.lower_observations[:, None])
    write_table(path, header, np.hstack(cols))


def read_points_csv(path) -> np.ndarray:
    """Read query points: every column is an input coordinate."""
    _, values = read_table(path)
    if values.shape[0] == 0:
        raise DataFormatError(f"{path}: no data rows")
    return values


def _parse_basis(obj, where):
    if obj is None:
        return None
    if not isinstance(obj, (list, tuple)) or not all(isinstance(t, str) for t in obj):
        raise DataFormatError(f"{where}: a basis must be a list of term strings")
    try:
        return BasisSpec(tuple(obj))
    except Exception as exc:
        raise DataFormatError(f"{where}: {exc}") from None


_CONFIG_KEYS = {
    "levels", "f_basis", "g_basis", "prior", "theta", "objective",
    "bounds", "restarts", "seed", "nugget", "family", "mode",
}


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of a fit configuration file.

    ``levels`` lists the per-level CSV paths, coarsest first.  ``theta`` is
    either the string ``"auto"`` or one length-scale vector per level.
    ``mode`` is the default prediction mode recorded for downstream use.
    """

    levels: tuple
    f_basis: tuple
    g_basis: tuple
    prior: tuple
    theta: object
    objective: str
    bounds: object
    restarts: int
    seed: int
    nugget: float
    family: str
    mode: str

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        """Parse and validate a configuration file; unknown keys are errors."""
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise DataFormatError(f"{path}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise DataFormatError(f"{path}: the configuration must be a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise DataFormatError(f"{path}: unknown configuration keys: {sorted(unknown)}")
        if "levels" not in raw or not isinstance(raw["levels"], list) or not raw["levels"]:
            raise DataFormatError(f"{path}: 'levels' must be a nonempty list of file paths")
        levels = tuple(str(p) for p in raw["levels"])
        s = len(levels)

        f_raw = raw.get("f_basis")
        if f_raw is None:
            f_basis = tuple(BasisSpec.constant() for _ in range(s))
        else:
            if not isinstance(f_raw, list) or len(f_raw) != s:
                raise DataFormatError(f"{path}: 'f_basis' must list one basis per level")
            f_basis = tuple(_parse_basis(b, f"{path}: f_basis[{i}]") for i, b in enumerate(f_raw))
        g_raw = raw.get("g_basis")
        if g_raw is None:
            g_basis = tuple(BasisSpec.constant() for _ in range(s - 1))
        else:
            if not isinstance(g_raw, list) or len(g_raw) != s - 1:
                raise DataFormatError(
                    f"{path}: 'g_basis' must list one basis per level above the first"
                )
            g_basis = tuple(_parse_basis(b, f"{path}: g_basis[{i}]") for i, b in enumerate(g_raw))

        prior_raw = raw.get("prior", {"mode": "noninformative"})
        if not isinstance(prior_raw, dict) or "mode" not in prior_raw:
            raise DataFormatError(f"{path}: 'prior' must be an object with a 'mode' key")
        if prior_raw["mode"] == "noninformative":
            if set(prior_raw) - {"mode"}:
                raise DataFormatError(f"{path}: non-informative prior takes no further keys")
            prior = tuple(PriorSpec.noninformative() for _ in range(s))
        elif prior_raw["mode"] == "informative":
            per_level = prior_raw.get("levels")
            if not isinstance(per_level, list) or len(per_level) != s:
                raise DataFormatError(
                    f"{path}: informative prior needs 'levels' with one entry per level"
                )
            prior = []
            for i, entry in enumerate(per_level):
                try:
                    prior.append(PriorSpec.informative(
                        b=np.asarray(entry["b"], dtype=float),
                        V=np.asarray(entry["V"], dtype=float),
                        alpha=float(entry["alpha"]),
                        gamma=float(entry["gamma"]),
                    ))
                except (KeyError, TypeError, ValueError) as exc:
                    raise DataFormatError(f"{path}: prior.levels[{i}]: {exc}") from None
            prior = tuple(prior)
        else:
            raise DataFormatError(f"{path}: unknown prior mode {prior_raw['mode']!r}")

        theta = raw.get("theta", "auto")
        if theta != "auto":
            if not isinstance(theta, list) or len(theta) != s:
                raise DataFormatError(
                    f"{path}: 'theta' must be \"auto\" or one length-scale vector per level"
                )
            theta = tuple(tuple(float(v) for v in vec) for vec in theta)

        bounds = raw.get("bounds")
        if bounds is not None:
            try:
                bounds = np.asarray(bounds, dtype=float)
            except (TypeError, ValueError):
                raise DataFormatError(f"{path}: 'bounds' must be numeric (d, 2)") from None
            if bounds.ndim != 2 or bounds.shape[1] != 2:
                raise DataFormatError(f"{path}: 'bounds' must have shape (d, 2)")

        objective = raw.get("objective", "reml")
        if objective not in ("reml", "loo_cv"):
            raise DataFormatError(f"{path}: unknown objective {objective!r}")
        family = raw.get("family", "matern52")
        if family not in FAMILIES:
            raise DataFormatError(f"{path}: unknown kernel family {family!r}")
        mode = raw.get("mode", "simple")
        if mode not in ("simple", "universal"):
            raise DataFormatError(f"{path}: unknown prediction mode {mode!r}")
        try:
            restarts = int(raw.get("restarts", 10))
            seed = int(raw.get("seed", 0))
            nugget = float(raw.get("nugget", DEFAULT_NUGGET))
        except (TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: {exc}") from None

        return cls(
            levels=levels, f_basis=f_basis, g_basis=g_basis, prior=prior,
            theta=theta, objective=objective, bounds=bounds, restarts=restarts,
            seed=seed, nugget=nugget, family=family, mode=mode,
        )

    def load_levels(self):
        """Ingest every level file with the configured bases."""
        out = []
        for i, path in enumerate(self.levels):
            out.append(ingest_level_csv(
                path,
                f_basis=self.f_basis[i],
                g_basis=self.g_basis[i - 1] if i > 0 else None,
            ))
        return out

    def kernel_specs(self):
        """Fixed KernelSpecs per level, or Nones when theta is searched."""
        if self.theta == "auto":
            return [None] * len(self.levels)
        return [
            KernelSpec(theta=np.asarray(vec, dtype=float), family=self.family, nugget=self.nugget)
            for vec in self.theta
        ]
