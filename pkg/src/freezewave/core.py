"""Shared data model: grids, sampled fields, run configuration, time series.

Everything here is a plain value type. Fields store their samples as an
array of shape ``(node_count, m)``; 2D grids are ordered lexicographically
with the first coordinate running fastest.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import numpy as np


class DimensionError(ValueError):
    """Raised when grids or component counts do not match."""


class ConfigError(ValueError):
    """Raised for invalid or unreadable run configurations."""


class MalformedFileError(ValueError):
    """Raised when a persisted field or time series cannot be parsed."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[x_minus, x_plus]``.

    With ``periodic=True`` the right endpoint is excluded and the spacing is
    ``(x_plus - x_minus) / n`` (the layout used by FFT-based solvers).
    """

    x_minus: float
    x_plus: float
    n: int
    periodic: bool = False

    def __post_init__(self):
        if not self.x_minus < self.x_plus:
            raise ValueError("Grid1D requires x_minus < x_plus")
        if self.n < 3:
            raise ValueError("Grid1D requires at least 3 nodes")

    @property
    def h(self) -> float:
        if self.periodic:
            return (self.x_plus - self.x_minus) / self.n
        return (self.x_plus - self.x_minus) / (self.n - 1)

    @property
    def node_count(self) -> int:
        return self.n

    @property
    def dim(self) -> int:
        return 1

    @property
    def length(self) -> float:
        return self.x_plus - self.x_minus

    def nodes(self) -> np.ndarray:
        return self.x_minus + self.h * np.arange(self.n)

    def weights(self) -> np.ndarray:
        """Composite trapezoid weights (uniform weights when periodic)."""
        w = np.full(self.n, self.h)
        if not self.periodic:
            w[0] *= 0.5
            w[-1] *= 0.5
        return w

    @classmethod
    def from_spacing(cls, x_minus: float, x_plus: float, h: float) -> "Grid1D":
        n = int(round((x_plus - x_minus) / h)) + 1
        return cls(x_minus, x_plus, n)

    def to_dict(self) -> dict:
        return {"kind": "grid1d", "x_minus": self.x_minus, "x_plus": self.x_plus,
                "n": self.n, "periodic": self.periodic}


@dataclass(frozen=True)
class Grid2D:
    """Uniform square grid on ``[-half_width, half_width]^2``."""

    half_width: float
    n_per_axis: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("Grid2D requires half_width > 0")
        if self.n_per_axis < 3:
            raise ValueError("Grid2D requires at least 3 nodes per axis")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n_per_axis - 1)

    @property
    def node_count(self) -> int:
        return self.n_per_axis ** 2

    @property
    def dim(self) -> int:
        return 2

    def axis(self) -> np.ndarray:
        return -self.half_width + self.h * np.arange(self.n_per_axis)

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(n_per_axis**2, 2)``, x1 fastest."""
        x = self.axis()
        x1, x2 = np.meshgrid(x, x, indexing="xy")
        return np.column_stack([x1.ravel(), x2.ravel()])

    def weights(self) -> np.ndarray:
        w1 = np.full(self.n_per_axis, self.h)
        w1[0] *= 0.5
        w1[-1] *= 0.5
        return np.outer(w1, w1).ravel()

    def to_dict(self) -> dict:
        return {"kind": "grid2d", "half_width": self.half_width,
                "n_per_axis": self.n_per_axis}


Grid = Union[Grid1D, Grid2D]


def grid_from_dict(d: Mapping[str, Any]) -> Grid:
    kind = d.get("kind")
    if kind == "grid1d":
        return Grid1D(float(d["x_minus"]), float(d["x_plus"]), int(d["n"]),
                      bool(d.get("periodic", False)))
    if kind == "grid2d":
        return Grid2D(float(d["half_width"]), int(d["n_per_axis"]))
    raise MalformedFileError(f"unknown grid kind {kind!r}")


@dataclass
class Field:
    """Vector-valued samples on a grid; ``values`` has shape ``(nodes, m)``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != self.grid.node_count:
            raise DimensionError(
                f"values of shape {vals.shape} do not fit {self.grid.node_count} nodes")
        if not np.all(np.isfinite(vals)):
            raise ValueError("Field values must be finite")
        self.values = vals

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Field":
        return cls(grid, np.asarray(func(grid.nodes())))

    def to_dict(self) -> dict:
        flat = self.values.ravel()  # row-major: node-major, component fastest
        d = {"grid": self.grid.to_dict(), "m": self.m}
        if self.is_complex:
            d["complex"] = True
            d["values"] = np.column_stack([flat.real, flat.imag]).ravel().tolist()
        else:
            d["values"] = flat.tolist()
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Field":
        try:
            grid = grid_from_dict(d["grid"])
            m = int(d["m"])
            vals = np.asarray(d["values"], dtype=float)
            if d.get("complex", False):
                vals = vals[0::2] + 1j * vals[1::2]
            return cls(grid, vals.reshape(grid.node_count, m))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFileError(f"malformed field: {exc}") from exc


def _check_pair(f: Field, g: Field) -> None:
    if f.grid != g.grid:
        raise DimensionError("fields live on different grids")
    if f.m != g.m:
        raise DimensionError(f"component mismatch: {f.m} vs {g.m}")


def l2_inner(f: Field, g: Field) -> float:
    """Trapezoid approximation of the L2 pairing of two real fields."""
    _check_pair(f, g)
    w = f.grid.weights()
    return float(np.sum(w[:, None] * f.values * g.values))


def save_field(f: Field, path) -> None:
    Path(path).write_text(json.dumps(f.to_dict()))


def load_field(path) -> Field:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path}: {exc}") from exc
    return Field.from_dict(data)


@dataclass
class TimeSeries:
    """Rows of ``(t, mu..., residual, newton_iters[, extras...])``."""

    mu_names: Sequence[str] = ("mu_1",)
    extra_names: Sequence[str] = ()
    rows: list = field(default_factory=list)

    @property
    def header(self) -> list:
        return ["t", *self.mu_names, "residual", "newton_iters", *self.extra_names]

    def append(self, t, mu, residual, newton_iters, *extras) -> None:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if len(mu) != len(self.mu_names):
            raise DimensionError("mu length does not match mu_names")
        if self.rows and not t > self.rows[-1][0]:
            raise ValueError("time series times must be strictly increasing")
        if not math.isfinite(residual):
            raise ValueError("residual must be finite")
        self.rows.append((float(t), *map(float, mu), float(residual),
                          int(newton_iters), *map(float, extras)))

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        idx = self.header.index(name)
        return np.array([r[idx] for r in self.rows])

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    def mu(self) -> np.ndarray:
        k = len(self.mu_names)
        return np.array([r[1:1 + k] for r in self.rows]).reshape(-1, k)


def _fmt(x) -> str:
    return str(x) if isinstance(x, int) else repr(float(x))


def save_timeseries(ts: TimeSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ts.header)
        for row in ts.rows:
            writer.writerow([_fmt(x) for x in row])


def load_timeseries(path) -> TimeSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedFileError(f"{path}: empty file") from None
        if len(header) < 4 or header[0] != "t" or "residual" not in header:
            raise MalformedFileError(f"{path}: unexpected header {header}")
        ir = header.index("residual")
        if header[ir + 1] != "newton_iters":
            raise MalformedFileError(f"{path}: newton_iters must follow residual")
        ts = TimeSeries(tuple(header[1:ir]), tuple(header[ir + 2:]))
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise MalformedFileError(f"{path}:{lineno}: wrong column count")
            try:
                vals = [float(x) for x in row]
                vals[ir + 1] = int(row[ir + 1])
            except ValueError as exc:
                raise MalformedFileError(f"{path}:{lineno}: {exc}") from exc
            ts.rows.append(tuple(vals))
    return ts


# --- run configuration -----------------------------------------------------

_CONFIG_FIELDS = ("problem", "dt", "t_end", "phase_condition", "template",
                  "newton_tol", "steady_tol", "output_dir", "snapshot_stride", "seed")


@dataclass
class RunConfig:
    """Flat run configuration.

    Grid keys (``x_minus``, ``x_plus``, ``h``/``n``, ``half_width``,
    ``n_per_axis``) live in ``grid``; every key that is neither a grid key
    nor one of the named fields lands in ``params``.
    """

    problem: str
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    dt: float = 0.1
    t_end: float = 1.0
    phase_condition: str = "fixed"
    template: str = "initial"
    newton_tol: float = 1e-10
    steady_tol: float = 1e-8
    output_dir: str = "out"
    snapshot_stride: int = 0
    seed: int = 0

    GRID_KEYS = ("x_minus", "x_plus", "h", "n", "half_width", "n_per_axis")

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if not (self.newton_tol > 0 and self.steady_tol > 0):
            raise ConfigError("tolerances must be positive")
        if self.phase_condition not in ("fixed", "orthogonal"):
            raise ConfigError(f"unknown phase condition {self.phase_condition!r}")

    def to_flat(self) -> dict:
        flat = {"problem": self.problem}
        for name in _CONFIG_FIELDS[1:]:
            flat[name] = getattr(self, name)
        flat.update(self.grid)
        flat.update(self.params)
        return flat

    @classmethod
    def from_flat(cls, flat: Mapping[str, Any]) -> "RunConfig":
        flat = dict(flat)
        if "problem" not in flat:
            raise ConfigError("config is missing 'problem'")
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for name in _CONFIG_FIELDS:
            if name in flat:
                val = flat.pop(name)
                if types[name] in ("float",):
                    val = float(val)
                elif types[name] in ("int",):
                    val = int(val)
                kwargs[name] = val
        grid = {k: flat.pop(k) for k in cls.GRID_KEYS if k in flat}
        try:
            return cls(params=flat, grid=grid, **kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def get(self, key: str, default=None):
        return self.params.get(key, default)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        flat = self.to_flat()
        flat.update(overrides)
        return RunConfig.from_flat(flat)

    def grid1d(self, periodic: bool = False) -> Grid1D:
        g = self.grid
        try:
            x_minus, x_plus = float(g["x_minus"]), float(g["x_plus"])
        except KeyError as exc:
            raise ConfigError(f"grid key {exc} missing") from exc
        if "n" in g:
            return Grid1D(x_minus, x_plus, int(g["n"]), periodic)
        if "h" in g:
            return Grid1D.from_spacing(x_minus, x_plus, float(g["h"]))
        raise ConfigError("grid needs 'n' or 'h'")

    def grid2d(self) -> Grid2D:
        g = self.grid
        return Grid2D(float(g.get("half_width", 20.0)), int(g.get("n_per_axis", 81)))


def parse_value(text: str):
    """Parse an override value: JSON literal when possible, else string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path) -> RunConfig:
    """Read a flat JSON (``.json``) or TOML (anything else) config file."""
    return RunConfig.from_flat(read_config_mapping(path))


def read_config_mapping(path) -> dict:
    """Parse a config file into a plain dict without validating it."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix == ".json":
            flat = json.loads(text)
        else:
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            flat = tomllib.loads(text)
    except Exception as exc:
        raise ConfigError(f"{path}: cannot parse config: {exc}") from exc
    if not isinstance(flat, dict):
        raise ConfigError(f"{path}: config must be a flat mapping")
    return flat


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_flat(), indent=1, sort_keys=True))
