"""Explicit finite-difference heat solver with a moving Gaussian laser source.

A 2-D rectangular plate (out-of-plane thickness ``depth``) is heated by a
Gaussian spot that travels along a horizontal scan line at constant speed.
The bottom row of cells is held at ambient temperature; the other three edges
lose heat through a convective film.  Per time step the solver records the
field maximum temperature and the cumulative volume of cells that have ever
reached the melt threshold, which are the two quantities the surrogates learn.

Unit system: mm, ms, mJ, K.  One W equals one mJ/ms, so laser power in watts
and thermal conductivity in W/(mm K) need no conversion; specific heat is
stored in mJ/(kg K).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

QOI_NAMES = ("bead_volume", "max_temp")

# laser process variables: (lower, upper) operating range, by field name
PARAMETER_BOUNDS = {
    "power": (250.0, 400.0),      # W
    "speed": (0.004, 0.020),      # mm/ms
    "radius": (0.25, 0.40),       # mm
    "efficiency": (0.3, 0.4),     # -
    "scaling": (1.0, 2.0),        # -
}

NOMINAL_PARAMETERS = {
    "power": 300.0,
    "speed": 0.01058,
    "radius": 0.3,
    "efficiency": 0.36,
    "scaling": 1.6,
}

PARAMETER_UNITS = {
    "power": "W",
    "speed": "mm/ms",
    "radius": "mm",
    "efficiency": "-",
    "scaling": "-",
}


class SimulationDivergedError(ArithmeticError):
    """The temperature field became non-finite (unstable time step)."""


class UnstableTimeStepError(ValueError):
    """The configured time step exceeds the explicit-scheme stability bound."""


@dataclass(frozen=True)
class ProcessParameters:
    """The five controlled laser variables."""

    power: float        # P, W
    speed: float        # v, scan speed, mm/ms
    radius: float       # r, effective beam radius, mm
    efficiency: float   # eta, absorbed fraction
    scaling: float      # alpha, equipment scaling factor

    def __post_init__(self):
        for name in PARAMETER_BOUNDS:
            if getattr(self, name) <= 0:
                raise ValueError(f"process parameter {name!r} must be positive")

    def as_array(self) -> np.ndarray:
        """Values in the fixed column order (power, speed, radius, efficiency, scaling)."""
        return np.array([self.power, self.speed, self.radius, self.efficiency, self.scaling])

    @classmethod
    def from_array(cls, values) -> "ProcessParameters":
        p, v, r, eta, alpha = (float(x) for x in values)
        return cls(power=p, speed=v, radius=r, efficiency=eta, scaling=alpha)

    @classmethod
    def nominal(cls) -> "ProcessParameters":
        return cls(**NOMINAL_PARAMETERS)


@dataclass(frozen=True)
class MaterialProperties:
    """Constant material and boundary data for the plate."""

    density: float        # rho, kg/mm^3
    specific_heat: float  # c, mJ/(kg K)
    conductivity: float   # k, W/(mm K)
    convection: float     # h, film coefficient, W/(mm^2 K)
    ambient_temp: float   # K, initial, bottom-boundary, and far-field temperature
    melt_temp: float      # K, melting threshold

    def __post_init__(self):
        if self.density <= 0 or self.specific_heat <= 0 or self.conductivity <= 0:
            raise ValueError("density, specific heat, and conductivity must be positive")
        if self.convection < 0:
            raise ValueError("convection coefficient must be >= 0")
        if not self.melt_temp > self.ambient_temp:
            raise ValueError("melt temperature must exceed ambient temperature")

    @property
    def volumetric_heat(self) -> float:
        """rho * c, mJ/(mm^3 K)."""
        return self.density * self.specific_heat

    @property
    def diffusivity(self) -> float:
        """k / (rho c), mm^2/ms."""
        return self.conductivity / self.volumetric_heat


@dataclass(frozen=True)
class SimGrid:
    """Uniform cell-centered grid and time discretization."""

    nx: int             # cells along the scan direction
    ny: int             # cells across, index 0 is the bottom (fixed-temperature) row
    dx: float           # cell spacing, mm (square cells)
    dt: float           # time step, ms
    n_steps: int
    depth: float        # out-of-plane thickness converting cell area to volume, mm
    scan_offset: float  # y coordinate of the scan line, mm

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError("grid needs at least 8x8 cells")
        if self.dx <= 0 or self.dt <= 0 or self.depth <= 0:
            raise ValueError("dx, dt, and depth must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dx * self.depth

    def x_coords(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    def y_coords(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.dx

    def check_stability(self, props: MaterialProperties) -> None:
        limit = cfl_max_dt(props, self.dx)
        if self.dt > limit:
            raise UnstableTimeStepError(
                f"dt={self.dt} exceeds the explicit stability bound dx^2/(4D)={limit:.6g}"
            )


@dataclass
class SimulationRecord:
    """Per-step melt-pool series and scalar outputs of one run."""

    params: ProcessParameters
    series_temp: np.ndarray    # field maximum temperature per step, K
    series_volume: np.ndarray  # cumulative melted volume per step, mm^3
    max_temp: float
    bead_volume: float
    melted: bool


def source_at(pos, t: float, params: ProcessParameters, scan_y: float) -> np.ndarray:
    """Volumetric heating (W/mm^3) of the Gaussian spot at position(s) ``pos``.

    The spot center is (speed * t, scan_y); the peak value is
    2*scaling*efficiency*power / (pi r^3) and falls off as exp(-2 d^2 / r^2).
    """
    pos = np.asarray(pos, dtype=np.float64)
    cx = params.speed * t
    dx_ = pos[..., 0] - cx
    dy_ = pos[..., 1] - scan_y
    r = params.radius
    peak = 2.0 * params.scaling * params.efficiency * params.power / (math.pi * r**3)
    return peak * np.exp(-2.0 * (dx_ * dx_ + dy_ * dy_) / (r * r))


def cfl_max_dt(props: MaterialProperties, dx: float) -> float:
    """Largest stable explicit time step dx^2 / (4 D) for the five-point stencil."""
    return dx * dx / (4.0 * props.diffusivity)


def _source_field(t: float, params: ProcessParameters, grid: SimGrid) -> np.ndarray:
    x = grid.x_coords()[:, None]
    y = grid.y_coords()[None, :]
    cx = params.speed * t
    r = params.radius
    peak = 2.0 * params.scaling * params.efficiency * params.power / (math.pi * r**3)
    return peak * np.exp(-2.0 * ((x - cx) ** 2 + (y - grid.scan_offset) ** 2) / (r * r))


def step(
    temps: np.ndarray,
    t: float,
    params: ProcessParameters,
    props: MaterialProperties,
    grid: SimGrid,
    bottom_boundary: str = "dirichlet",
) -> np.ndarray:
    """One explicit Euler update of the (nx, ny) temperature field.

    Five-point Laplacian; the source is evaluated at time ``t``.  Side and top
    edges use convective ghost cells; the bottom row is re-clamped to ambient
    unless ``bottom_boundary="insulated"`` (used by conservation tests).
    """
    nx, ny = grid.nx, grid.ny
    if temps.shape != (nx, ny):
        raise ValueError(f"field shape {temps.shape} does not match grid ({nx}, {ny})")
    k, rho_c, h = props.conductivity, props.volumetric_heat, props.convection
    ambient = props.ambient_temp

    padded = np.empty((nx + 2, ny + 2), dtype=np.float64)
    padded[1:-1, 1:-1] = temps
    film = h * grid.dx / k
    padded[0, 1:-1] = temps[0, :] - film * (temps[0, :] - ambient)      # left edge
    padded[-1, 1:-1] = temps[-1, :] - film * (temps[-1, :] - ambient)   # right edge
    padded[1:-1, -1] = temps[:, -1] - film * (temps[:, -1] - ambient)   # top edge
    padded[1:-1, 0] = temps[:, 0]                                       # bottom ghost: mirror

    lap = (
        padded[2:, 1:-1]
        + padded[:-2, 1:-1]
        + padded[1:-1, 2:]
        + padded[1:-1, :-2]
        - 4.0 * temps
    ) / (grid.dx * grid.dx)

    heat = _source_field(t, params, grid)
    out = temps + grid.dt * (k * lap + heat) / rho_c
    if bottom_boundary == "dirichlet":
        out[:, 0] = ambient
    elif bottom_boundary != "insulated":
        raise ValueError(f"unknown bottom boundary {bottom_boundary!r}")
    if not np.all(np.isfinite(out)):
        raise SimulationDivergedError(f"temperature field became non-finite at t={t}")
    return out


def update_melt_mask(
    ever_melted: np.ndarray, temps: np.ndarray, melt_temp: float, cell_volume: float
) -> tuple[np.ndarray, float]:
    """Mark cells at or above the melt threshold; return (mask, cumulative volume mm^3)."""
    if ever_melted.shape != temps.shape:
        raise ValueError("melt mask shape does not match field shape")
    mask = ever_melted | (temps >= melt_temp)
    return mask, float(np.count_nonzero(mask)) * cell_volume


def run(
    params: ProcessParameters,
    props: MaterialProperties,
    grid: SimGrid,
    bottom_boundary: str = "dirichlet",
) -> SimulationRecord:
    """Integrate ``grid.n_steps`` steps from a uniform ambient field."""
    grid.check_stability(props)
    temps = np.full((grid.nx, grid.ny), props.ambient_temp, dtype=np.float64)
    mask = np.zeros((grid.nx, grid.ny), dtype=bool)
    series_temp = np.empty(grid.n_steps, dtype=np.float64)
    series_volume = np.empty(grid.n_steps, dtype=np.float64)
    for i in range(grid.n_steps):
        temps = step(temps, i * grid.dt, params, props, grid, bottom_boundary)
        series_temp[i] = temps.max()
        mask, series_volume[i] = update_melt_mask(mask, temps, props.melt_temp, grid.cell_volume)
    max_temp = float(series_temp.max())
    return SimulationRecord(
        params=params,
        series_temp=series_temp,
        series_volume=series_volume,
        max_temp=max_temp,
        bead_volume=float(series_volume[-1]),
        melted=bool(max_temp >= props.melt_temp),
    )


# ---------------------------------------------------------------------------
# configuration file
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "rho",
    "c",
    "k",
    "h",
    "T_ambient",
    "T_melt",
    "nx",
    "ny",
    "dx",
    "dt",
    "n_steps",
    "depth",
    "scan_offset",
}


def config_from_dict(raw: dict) -> tuple[MaterialProperties, SimGrid]:
    """Build (properties, grid) from a config dict; the time step is validated."""
    missing = _CONFIG_KEYS - raw.keys()
    if missing:
        raise ValueError(f"thermal config is missing keys: {sorted(missing)}")
    unknown = raw.keys() - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"thermal config has unknown keys: {sorted(unknown)}")
    props = MaterialProperties(
        density=float(raw["rho"]),
        specific_heat=float(raw["c"]),
        conductivity=float(raw["k"]),
        convection=float(raw["h"]),
        ambient_temp=float(raw["T_ambient"]),
        melt_temp=float(raw["T_melt"]),
    )
    grid = SimGrid(
        nx=int(raw["nx"]),
        ny=int(raw["ny"]),
        dx=float(raw["dx"]),
        dt=float(raw["dt"]),
        n_steps=int(raw["n_steps"]),
        depth=float(raw["depth"]),
        scan_offset=float(raw["scan_offset"]),
    )
    grid.check_stability(props)
    return props, grid


def config_to_dict(props: MaterialProperties, grid: SimGrid) -> dict:
    return {
        "rho": props.density,
        "c": props.specific_heat,
        "k": props.conductivity,
        "h": props.convection,
        "T_ambient": props.ambient_temp,
        "T_melt": props.melt_temp,
        "nx": grid.nx,
        "ny": grid.ny,
        "dx": grid.dx,
        "dt": grid.dt,
        "n_steps": grid.n_steps,
        "depth": grid.depth,
        "scan_offset": grid.scan_offset,
    }


def load_config(path) -> tuple[MaterialProperties, SimGrid]:
    """Read a JSON thermal config file (see README for the key schema)."""
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def default_config() -> tuple[MaterialProperties, SimGrid]:
    """The packaged reference material/grid configuration."""
    raw = json.loads(resources.files("amrom").joinpath("data/reference_config.json").read_text())
    return config_from_dict(raw)


def config_hash(props: MaterialProperties, grid: SimGrid) -> str:
    """Stable hash of a thermal configuration, used for dataset provenance."""
    canonical = json.dumps(config_to_dict(props, grid), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
