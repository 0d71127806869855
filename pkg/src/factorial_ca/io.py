"""File formats: populations, observed-data tables, design matrices, study configs.

Populations (every potential outcome known) and observed tables (one
outcome per unit) use incompatible headers so one can't be read as the other.
"""

from __future__ import annotations

import csv
import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .design import ModelMatrix, k_from_arms
from .errors import InvalidArgumentError
from .montecarlo import NormalitySettings, PopulationRecipe, StudyConfig
from .population import Population
from .randomization import MIN_ARM_SIZE, Assignment

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class FormatError(InvalidArgumentError):
    """A file does not follow the expected schema."""


class ConfigError(InvalidArgumentError):
    """A study config could not be parsed or validated."""


# -- JSON ------------------------------------------------------------------


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return format(v, ".17g") if math.isfinite(v) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Path):
        return json.dumps(str(obj))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON with every float written to 17 significant digits."""
    return _encode(obj, indent, 0)


# -- design ----------------------------------------------------------------

MEAN_LABEL = "I"


def design_header(m: ModelMatrix) -> list[str]:
    return [MEAN_LABEL, *m.effect_labels]


def design_csv(m: ModelMatrix) -> str:
    rows = [",".join(design_header(m))]
    rows += [",".join(str(int(v)) for v in row) for row in m.matrix]
    return "\n".join(rows) + "\n"


def design_dict(m: ModelMatrix) -> dict:
    return {
        "k": m.k,
        "j": m.j,
        "labels": list(m.effect_labels),
        "columns": {label: [int(v) for v in m.matrix[:, l]] for l, label in enumerate(design_header(m))},
        "treatment_combinations": [[int(v) for v in row] for row in m.main_effects],
    }


def parse_design_csv(text: str) -> tuple[list[str], np.ndarray]:
    reader = csv.reader(text.splitlines())
    header = next(reader)
    return header, np.array([[int(v) for v in row] for row in reader], dtype=np.int8)


# -- populations -----------------------------------------------------------

_Y = re.compile(r"y_(\d+)$")
_X = re.compile(r"x_(\d+)$")
OBSERVED_MARKERS = {"arm", "y_obs", "unit"}


def _numbered(names: list[str], pattern: re.Pattern, prefix: str, where: str) -> int:
    nums = [int(pattern.match(n).group(1)) for n in names]
    if nums != list(range(1, len(nums) + 1)):
        raise FormatError(f"{where}: {prefix} columns must be {prefix}_1..{prefix}_{len(nums)} in order, got {names}")
    return len(nums)


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise FormatError(f"{path}: empty file, header row required")
    return [h.strip() for h in rows[0]], rows[1:]


def _floats(rows: list[list[str]], width: int, path: Path) -> np.ndarray:
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows, start=2):
        if len(row) != width:
            raise FormatError(f"{path} line {i}: expected {width} fields, got {len(row)}")
        try:
            out[i - 2] = [float(v) for v in row]
        except ValueError as err:
            raise FormatError(f"{path} line {i}: {err}") from None
    return out


def _check_arms(j: int, k: int | None, path) -> None:
    if k is not None and j != 2**k:
        raise FormatError(
            f"{path}: missing counterfactual columns: K={k} needs y_1..y_{2**k}, found {j} outcome column(s)"
        )
    k_from_arms(j)


def read_population(path, k: int | None = None) -> Population:
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        if "y" not in data or any(key in data for key in ("arm", "y_obs")):
            raise FormatError(
                f"{path}: not a population file; full potential outcomes 'y' (N x J) are required"
            )
        y = np.asarray(data["y"], dtype=float)
        x = np.asarray(data.get("x") or np.empty((len(y), 0)), dtype=float)
        if "K" in data:
            k = data["K"] if k is None else k
        if "p" in data and (x.ndim != 2 or x.shape[1] != data["p"]):
            raise FormatError(f"{path}: declared p={data['p']} but x has shape {x.shape}")
        _check_arms(y.shape[1] if y.ndim == 2 else 1, k, path)
        return Population(y, x)

    header, rows = _read_csv(path)
    if OBSERVED_MARKERS & set(header):
        raise FormatError(
            f"{path}: this is an observed-data table (unit, arm, y_obs); "
            "this command needs the full potential-outcome table with columns y_1..y_J"
        )
    ys = [h for h in header if _Y.match(h)]
    xs = [h for h in header if _X.match(h)]
    if header != ys + xs:
        raise FormatError(f"{path}: header must be y_1..y_J then x_1..x_p, got {header}")
    if not ys:
        raise FormatError(f"{path}: no outcome columns y_1..y_J")
    j = _numbered(ys, _Y, "y", str(path))
    _numbered(xs, _X, "x", str(path))
    _check_arms(j, k, path)
    values = _floats(rows, len(header), path)
    return Population(values[:, :j], values[:, j:])


def population_csv(pop: Population) -> str:
    header = [f"y_{j + 1}" for j in range(pop.j)] + [f"x_{k + 1}" for k in range(pop.p)]
    lines = [",".join(header)]
    lines += [",".join(format(v, ".17g") for v in row) for row in np.hstack([pop.y, pop.x])]
    return "\n".join(lines) + "\n"


def population_dict(pop: Population) -> dict:
    return {
        "K": k_from_arms(pop.j),
        "p": pop.p,
        "y": pop.y.tolist(),
        "x": pop.x.tolist(),
        "meta": pop.meta,
    }


# -- observed tables -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObservedTable:
    """One observed outcome per unit; counterfactual cells are absent by construction."""

    unit: tuple[str, ...]
    arm: np.ndarray  # 0-based
    y_obs: np.ndarray
    x: np.ndarray
    k: int

    @property
    def j(self) -> int:
        return 2**self.k

    def assignment(self) -> Assignment:
        return Assignment(arm=self.arm, counts=tuple(np.bincount(self.arm, minlength=self.j)))


def read_observed(path, k: int) -> ObservedTable:
    path = Path(path)
    header, rows = _read_csv(path)
    if any(_Y.match(h) for h in header):
        raise FormatError(
            f"{path}: this is a full potential-outcome table (y_1..y_J); "
            "estimation takes an observed-data table with columns unit,arm,y_obs,x_1..x_p"
        )
    if header[:3] != ["unit", "arm", "y_obs"]:
        raise FormatError(f"{path}: header must start with unit,arm,y_obs, got {header[:3]}")
    xs = header[3:]
    if any(not _X.match(h) for h in xs):
        raise FormatError(f"{path}: covariate columns must be named x_1..x_p, got {xs}")
    p = _numbered(xs, _X, "x", str(path))
    j = 2**k
    units, arms, y, x = [], [], [], []
    for line, row in enumerate(rows, start=2):
        if len(row) != 3 + p:
            raise FormatError(f"{path} line {line}: expected {3 + p} fields, got {len(row)}")
        try:
            arm = int(row[1])
            vals = [float(v) for v in row[2:]]
        except ValueError as err:
            raise FormatError(f"{path} line {line}: {err}") from None
        if not 1 <= arm <= j:
            raise FormatError(f"{path} line {line}: arm {arm} outside 1..{j} for K={k}")
        units.append(row[0].strip())
        arms.append(arm - 1)
        y.append(vals[0])
        x.append(vals[1:])
    dupes = sorted(u for u, c in Counter(units).items() if c > 1)
    if dupes:
        raise FormatError(f"{path}: duplicate unit ids {dupes[:5]}")
    counts = np.bincount(np.asarray(arms, dtype=np.intp), minlength=j)
    for a, c in enumerate(counts):
        if c < MIN_ARM_SIZE:
            raise FormatError(f"{path}: arm {a + 1} has {c} unit(s); at least {MIN_ARM_SIZE} required")
    y_arr = np.asarray(y)
    x_arr = np.asarray(x, dtype=float).reshape(len(y), p)
    if not (np.isfinite(y_arr).all() and np.isfinite(x_arr).all()):
        raise FormatError(f"{path}: non-finite values")
    return ObservedTable(
        unit=tuple(units), arm=np.asarray(arms, dtype=np.intp), y_obs=y_arr, x=x_arr, k=k
    )


# -- study configs ---------------------------------------------------------

_CONFIG_FIELDS = {"population", "counts", "replicates", "seed", "effects", "mode", "normality", "workers"}
_RECIPE_FIELDS = {"n", "k", "p", "seed", "coef", "noise", "offset", "covariates"}


def _tupled(v):
    if isinstance(v, list):
        return tuple(_tupled(e) for e in v)
    return v


def load_config_data(path) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path} line {err.lineno} column {err.colno}: {err.msg}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None


def config_from_dict(
    data: dict,
    base_dir: Path | None = None,
    seed: int | None = None,
    default_seed: int | None = None,
) -> StudyConfig:
    """Build a StudyConfig; every validation error names the offending field.

    Seed precedence: ``seed`` argument, then the config's ``seed``, then
    ``default_seed``, then 0.
    """
    if not isinstance(data, dict):
        raise ConfigError("config must be a table/object at the top level")
    unknown = set(data) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown field(s) {sorted(unknown)}")

    def field_error(name: str, msg) -> ConfigError:
        return ConfigError(f"field '{name}': {msg}")

    src = data.get("population")
    if not isinstance(src, dict) or len(src) != 1 or not {"recipe", "file"} >= set(src):
        raise field_error("population", "must be {recipe: {...}} or {file: path}")
    recipe = population = None
    if "recipe" in src:
        r = src["recipe"]
        if not isinstance(r, dict):
            raise field_error("population.recipe", "must be a table/object")
        bad = set(r) - _RECIPE_FIELDS
        if bad:
            raise field_error("population.recipe", f"unknown key(s) {sorted(bad)}")
        for key in ("n", "k", "p"):
            if not isinstance(r.get(key), int):
                raise field_error(f"population.recipe.{key}", "required integer")
        try:
            recipe = PopulationRecipe(**{k: _tupled(v) for k, v in r.items()})
        except (InvalidArgumentError, TypeError) as err:
            raise field_error("population.recipe", err) from None
    else:
        file = Path(src["file"])
        if base_dir is not None and not file.is_absolute():
            file = base_dir / file
        population = read_population(file)

    counts = data.get("counts")
    if not isinstance(counts, list) or not all(isinstance(c, int) for c in counts):
        raise field_error("counts", "must be a list of integers")
    replicates = data.get("replicates", 1000)
    if not isinstance(replicates, int):
        raise field_error("replicates", "must be an integer")
    if seed is None:
        seed = data.get("seed", 0 if default_seed is None else default_seed)
    if not isinstance(seed, int):
        raise field_error("seed", "must be an integer")
    effects = data.get("effects")
    if effects is not None and (not isinstance(effects, list) or not all(isinstance(e, int) for e in effects)):
        raise field_error("effects", "must be a list of effect indices")
    norm = data.get("normality", {})
    try:
        normality = NormalitySettings(**norm)
    except TypeError as err:
        raise field_error("normality", err) from None

    kwargs = dict(
        counts=tuple(counts),
        replicates=replicates,
        seed=seed,
        recipe=recipe,
        population=population,
        effects=tuple(effects) if effects else None,
        mode=data.get("mode", "auto"),
        normality=normality,
        workers=data.get("workers", 1),
    )
    try:
        return StudyConfig(**kwargs)
    except InvalidArgumentError as err:
        msg = str(err)
        name = next((f for f in ("replicates", "mode", "workers") if f in msg), "config")
        raise field_error(name, msg) from None


def load_config(path, seed: int | None = None, default_seed: int | None = None) -> StudyConfig:
    path = Path(path)
    return config_from_dict(
        load_config_data(path), base_dir=path.parent, seed=seed, default_seed=default_seed
    )
