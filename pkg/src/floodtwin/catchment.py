"""Synthetic valley catchment: grid geometry, friction zoning, floodplain
zones, gauge stations and boundary forcing.

The layout is a tilted valley with a meandering channel split into six
friction segments, dyked floodplains carrying five disjoint zones, and three
gauge stations (upstream / middle / downstream). Friction is a per-cell
Strickler coefficient looked up from the control vector by segment id
(0 = floodplain, 1..6 = river segments).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, MissingForcingError

FLOODPLAIN_SEGMENT = 0
N_RIVER_SEGMENTS = 6
N_ZONES = 5


# --------------------------------------------------------------------------- #
# Types                                                                        #
# --------------------------------------------------------------------------- #


@dataclass
class Grid:
    """Regular structured grid with bed elevation and friction zoning."""

    ncols: int
    nrows: int
    cell_size: float
    bed_elevation: np.ndarray   # (nrows, ncols) m above datum
    channel_mask: np.ndarray    # (nrows, ncols) bool
    segment_id: np.ndarray      # (nrows, ncols) int, 0 floodplain, 1..6 river

    def __post_init__(self):
        if self.ncols < 2 or self.nrows < 2:
            raise ValueError("grid needs at least 2x2 cells")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.bed_elevation.shape != self.shape:
            raise ValueError("bed_elevation shape mismatch")
        if not np.all(np.isfinite(self.bed_elevation)):
            raise ValueError("bed_elevation must be finite everywhere")
        seg = self.segment_id
        if np.any(seg[self.channel_mask] < 1) or np.any(seg[self.channel_mask] > N_RIVER_SEGMENTS):
            raise ValueError("channel cells must carry segment_id in 1..6")
        if np.any(seg[~self.channel_mask] != FLOODPLAIN_SEGMENT):
            raise ValueError("non-channel cells must carry segment_id 0")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def n_cells(self) -> int:
        return self.nrows * self.ncols

    @property
    def cell_area(self) -> float:
        return self.cell_size * self.cell_size


@dataclass
class FloodplainZone:
    """One floodplain subdomain over which WSR and the state correction act."""

    zone_id: int                # 1..5
    cell_mask: np.ndarray       # (nrows, ncols) bool, non-channel cells only
    area: float                 # m^2

    @property
    def n_cells(self) -> int:
        return int(self.cell_mask.sum())


@dataclass(frozen=True)
class GaugeStation:
    """In-situ water-level station on a channel cell."""

    name: str
    cell_index: int             # flat index into the grid
    obs_period: float = 900.0   # s


@dataclass
class Hydrograph:
    """Piecewise-linear inflow discharge forcing Q(t)."""

    times: np.ndarray           # s, strictly increasing
    discharge: np.ndarray       # m^3/s, >= 0
    _cumvol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.discharge = np.asarray(self.discharge, dtype=np.float64)
        if self.times.ndim != 1 or self.times.shape != self.discharge.shape:
            raise ValueError("times and discharge must be 1D arrays of equal length")
        if len(self.times) < 2:
            raise ValueError("hydrograph needs at least two knots")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("hydrograph times must be strictly increasing")
        if np.any(self.discharge < 0) or not np.all(np.isfinite(self.discharge)):
            raise ValueError("hydrograph discharge must be finite and non-negative")
        # cumulative volume at the knots; exact trapezoids between knots
        seg = 0.5 * (self.discharge[1:] + self.discharge[:-1]) * np.diff(self.times)
        self._cumvol = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def _check_span(self, t: float) -> None:
        if t < self.t_start or t > self.t_end:
            raise MissingForcingError(
                f"t={t:.1f} s outside hydrograph span "
                f"[{self.t_start:.1f}, {self.t_end:.1f}] s")

    def rate(self, t: float) -> float:
        """Discharge at time t by linear interpolation between knots."""
        self._check_span(t)
        return float(np.interp(t, self.times, self.discharge))

    def cumulative_volume(self, t: float) -> float:
        """Exact integral of Q from the first knot to t (m^3)."""
        self._check_span(t)
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(k, len(self.times) - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        q0, q1 = self.discharge[k], self.discharge[k + 1]
        qt = q0 + (q1 - q0) * (t - t0) / (t1 - t0)
        return float(self._cumvol[k] + 0.5 * (q0 + qt) * (t - t0))

    def volume(self, t0: float, t1: float) -> float:
        """Exact integral of Q over [t0, t1] (m^3)."""
        if t1 < t0:
            raise ValueError("t1 must be >= t0")
        return self.cumulative_volume(t1) - self.cumulative_volume(t0)


@dataclass(frozen=True)
class RatingCurve:
    """Stage-discharge law Q = a * max(0, eta - eta0)^b at the outlet."""

    a: float
    eta0: float
    b: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("rating curve needs a > 0 and b > 0")


@dataclass
class BoundaryConfig:
    """Upstream hydrograph inflow and downstream rating-curve outflow."""

    inflow_hydrograph: Hydrograph
    rating_curve: RatingCurve
    upstream_cells: np.ndarray      # flat indices, whole upstream interface
    downstream_cells: np.ndarray    # flat indices, channel outlet cells

    def __post_init__(self):
        self.upstream_cells = np.asarray(self.upstream_cells, dtype=np.int64)
        self.downstream_cells = np.asarray(self.downstream_cells, dtype=np.int64)
        if len(self.upstream_cells) == 0 or len(self.downstream_cells) == 0:
            raise ValueError("boundary cell lists must be non-empty")


@dataclass
class ControlVector:
    """The augmented filter unknowns: 7 Strickler coefficients (index 0 =
    floodplain, 1..6 = river segments), the inflow multiplier, and 5 zonal
    water-level corrections (m)."""

    ks: np.ndarray
    mu: float
    dh: np.ndarray

    def __post_init__(self):
        self.ks = np.asarray(self.ks, dtype=np.float64)
        self.dh = np.asarray(self.dh, dtype=np.float64)
        self.mu = float(self.mu)
        if self.ks.shape != (N_RIVER_SEGMENTS + 1,):
            raise ValueError(f"ks must have {N_RIVER_SEGMENTS + 1} entries")
        if self.dh.shape != (N_ZONES,):
            raise ValueError(f"dh must have {N_ZONES} entries")
        if np.any(self.ks <= 0) or not np.all(np.isfinite(self.ks)):
            raise ValueError("all Strickler coefficients must be finite and > 0")
        if self.mu <= 0 or not np.isfinite(self.mu):
            raise ValueError("inflow multiplier must be finite and > 0")
        if not np.all(np.isfinite(self.dh)):
            raise ValueError("dh must be finite")

    def copy(self) -> "ControlVector":
        return ControlVector(self.ks.copy(), self.mu, self.dh.copy())


class Catchment(NamedTuple):
    grid: Grid
    zones: list[FloodplainZone]
    gauges: list[GaugeStation]
    boundary: BoundaryConfig


# --------------------------------------------------------------------------- #
# Synthetic catchment construction                                            #
# --------------------------------------------------------------------------- #


@dataclass
class CatchmentSpec:
    """Parameters of the synthetic valley. Defaults give a 100x60 grid at
    50 m resolution whose flood peak overtops the dykes into all five zones."""

    ncols: int = 100
    nrows: int = 60
    cell_size: float = 50.0
    valley_slope: float = 5.0e-4        # bed drop per metre along the valley
    cross_slope: float = 4.0e-4         # floodplain tilt back towards the channel
    channel_depth: float = 2.5          # m below local floodplain level
    channel_width_cells: int = 3        # odd number of rows
    meander_amplitude_cells: float = 6.0
    meander_wavelength_cells: float = 80.0
    dyke_height: float = 0.6            # m above local floodplain level
    zone_start_frac: float = 0.15       # zones start downstream of the first meander
    zone_end_frac: float = 0.95
    base_flow: float = 300.0            # m^3/s, default steady forcing
    rating_strickler: float = 40.0      # used to shape the outlet rating curve

    def __post_init__(self):
        if self.ncols < 20 or self.nrows < 20:
            raise ConfigError("catchment grid must be at least 20x20 cells")
        if self.channel_width_cells % 2 != 1 or self.channel_width_cells < 1:
            raise ConfigError("channel_width_cells must be a positive odd number")
        if self.cell_size <= 0 or self.channel_depth <= 0:
            raise ConfigError("cell_size and channel_depth must be positive")
        if self.dyke_height < 0:
            raise ConfigError("dyke_height must be >= 0")
        if not 0.0 <= self.zone_start_frac < self.zone_end_frac <= 1.0:
            raise ConfigError("zone fractions must satisfy 0 <= start < end <= 1")


def channel_centerline(spec: CatchmentSpec) -> np.ndarray:
    """Row index of the channel centerline for every column (float array)."""
    x = np.arange(spec.ncols, dtype=np.float64)
    mid = (spec.nrows - 1) / 2.0
    return mid + spec.meander_amplitude_cells * np.sin(
        2.0 * np.pi * x / spec.meander_wavelength_cells)


def build_synthetic_catchment(spec: CatchmentSpec,
                              hydrograph: Hydrograph | None = None) -> Catchment:
    """Construct the synthetic valley: grid, five floodplain zones, three
    gauges, and boundary configuration.

    The valley tilts down along increasing column index; the channel meanders
    about the mid row and is carved ``channel_depth`` below the local
    floodplain, which is protected by one-cell dyke bands on both banks.
    """
    nrows, ncols, dx = spec.nrows, spec.ncols, spec.cell_size
    rows = np.arange(nrows, dtype=np.float64)[:, None]
    cols = np.arange(ncols, dtype=np.float64)[None, :]

    center = channel_centerline(spec)[None, :]
    dist = np.abs(rows - center)                       # rows from the centerline
    # cells whose centers fall inside the physical channel width; the meander
    # keeps consecutive cross-sections overlapping so conveyance never pinches
    half_w = spec.channel_width_cells / 2.0

    # valley floor: along-valley tilt plus a gentle tilt back toward the channel
    floor = (ncols - 1 - cols) * dx * spec.valley_slope \
        + dist * dx * spec.cross_slope
    floor = np.broadcast_to(floor, (nrows, ncols)).copy()

    channel = dist <= half_w + 1e-9
    dyke = (dist > half_w + 1e-9) & (dist <= half_w + 1.0 + 1e-9)

    bed = floor.copy()
    bed[channel] -= spec.channel_depth
    bed[dyke] += spec.dyke_height

    segment = np.zeros((nrows, ncols), dtype=np.int64)
    seg_of_col = np.minimum(
        (cols.ravel() * N_RIVER_SEGMENTS / ncols).astype(np.int64),
        N_RIVER_SEGMENTS - 1) + 1
    segment[channel] = np.broadcast_to(seg_of_col[None, :], (nrows, ncols))[channel]

    grid = Grid(ncols=ncols, nrows=nrows, cell_size=dx,
                bed_elevation=bed, channel_mask=channel, segment_id=segment)

    # five disjoint zones: equal column spans of the dyked floodplain
    x0 = int(round(spec.zone_start_frac * ncols))
    x1 = int(round(spec.zone_end_frac * ncols))
    edges = np.linspace(x0, x1, N_ZONES + 1).astype(int)
    floodplain = ~channel & ~dyke
    zones = []
    for k in range(N_ZONES):
        mask = np.zeros((nrows, ncols), dtype=bool)
        mask[:, edges[k]:edges[k + 1]] = True
        mask &= floodplain
        if not mask.any():
            raise ConfigError(f"floodplain zone {k + 1} is empty; grid too small")
        zones.append(FloodplainZone(zone_id=k + 1, cell_mask=mask,
                                    area=float(mask.sum()) * grid.cell_area))

    # gauges on channel-centerline cells near the inflow, mid-domain, outlet
    gauges = []
    for name, frac in (("upstream", 0.05), ("middle", 0.50), ("downstream", 0.95)):
        col = min(int(round(frac * (ncols - 1))), ncols - 1)
        row = int(round(channel_centerline(spec)[col]))
        gauges.append(GaugeStation(name=name, cell_index=row * ncols + col))

    # inflow over the whole upstream interface (river bed and floodplain cells
    # alike), which over-floods the first meander until water settles back
    upstream = np.arange(nrows, dtype=np.int64) * ncols
    down_rows = np.where(channel[:, ncols - 1])[0].astype(np.int64)
    downstream = down_rows * ncols + (ncols - 1)

    outlet_bed = float(bed[down_rows, ncols - 1].min())
    rating = RatingCurve(
        a=spec.rating_strickler * spec.channel_width_cells * dx * np.sqrt(spec.valley_slope),
        eta0=outlet_bed,
        b=5.0 / 3.0)

    if hydrograph is None:
        hydrograph = Hydrograph(
            times=np.array([0.0, 86400.0 * 30]),
            discharge=np.array([spec.base_flow, spec.base_flow]))

    boundary = BoundaryConfig(inflow_hydrograph=hydrograph, rating_curve=rating,
                              upstream_cells=upstream, downstream_cells=downstream)
    return Catchment(grid=grid, zones=zones, gauges=gauges, boundary=boundary)


# --------------------------------------------------------------------------- #
# Operations                                                                   #
# --------------------------------------------------------------------------- #


def materialize_friction(grid: Grid, cv: ControlVector) -> np.ndarray:
    """Per-cell Strickler field: ks[segment_id] (floodplain cells get ks[0])."""
    return cv.ks[grid.segment_id]


def rating_curve_discharge(eta: float | np.ndarray, rc: RatingCurve):
    """Outflow discharge for free-surface elevation eta, clamped at zero
    below the curve datum."""
    head = np.maximum(0.0, np.asarray(eta, dtype=np.float64) - rc.eta0)
    q = rc.a * head ** rc.b
    if np.ndim(eta) == 0:
        return float(q)
    return q


def interpolate_hydrograph(t: float, hydrograph: Hydrograph) -> float:
    """Discharge at time t; raises MissingForcingError outside the span."""
    return hydrograph.rate(t)
