"""Observations: gauge water levels, flood-extent rasters, the wet-surface
ratio (WSR) operator, twin-experiment synthesis, and the ensemble observation
operator.

WSR of a floodplain zone is the fraction of its cells that are wet, where a
cell counts as wet when its depth reaches the 5 cm threshold (distinct from
the solver's numerical drying threshold).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .asciigrid import read_ascii_grid, write_ascii_grid
from .catchment import FloodplainZone, GaugeStation
from .solver import WindowResult

WET_THRESHOLD = 0.05   # m

EXTENT_DRY = 0.0
EXTENT_WET = 1.0
EXTENT_INVALID = -9999.0


# --------------------------------------------------------------------------- #
# Types                                                                        #
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class GaugeObservation:
    time: float
    station: str
    eta_obs: float      # free-surface elevation, m
    sigma: float        # error std-dev, m

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("gauge observation sigma must be > 0")


@dataclass(frozen=True)
class WsrObservation:
    time: float
    zone_id: int
    wsr: float
    sigma: float

    def __post_init__(self):
        if not 0.0 <= self.wsr <= 1.0:
            raise ValueError("wsr must lie in [0, 1]")
        if self.sigma <= 0:
            raise ValueError("wsr observation sigma must be > 0")
        if not 1 <= self.zone_id <= 5:
            raise ValueError("zone_id must be in 1..5")


@dataclass
class FloodExtentMap:
    """Binary wet/dry raster with a validity mask (invalid = unobserved)."""

    time: float
    wet_mask: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self):
        if self.wet_mask.shape != self.valid_mask.shape:
            raise ValueError("wet_mask and valid_mask shapes differ")
        if np.any(self.wet_mask & ~self.valid_mask):
            raise ValueError("wet cells must be valid")


# --------------------------------------------------------------------------- #
# WSR operators                                                                #
# --------------------------------------------------------------------------- #


def wsr_of_depth(h: np.ndarray, zone: FloodplainZone,
                 wet_threshold: float = WET_THRESHOLD) -> float:
    """Fraction of zone cells with depth at or above the wet threshold."""
    n = zone.n_cells
    if n == 0:
        raise ValueError(f"zone {zone.zone_id} is empty")
    wet = int(np.count_nonzero(h[zone.cell_mask] >= wet_threshold))
    return wet / n


def wsr_of_extent(extent: FloodExtentMap, zone: FloodplainZone) -> float:
    """Wet fraction of the observed (valid) part of the zone."""
    valid = extent.valid_mask & zone.cell_mask
    n_valid = int(np.count_nonzero(valid))
    if n_valid == 0:
        raise ValueError(f"zone {zone.zone_id} has no valid observed cells")
    wet = int(np.count_nonzero(extent.wet_mask & valid))
    return wet / n_valid


def depth_to_extent(h: np.ndarray, time: float,
                    wet_threshold: float = WET_THRESHOLD,
                    valid_mask: np.ndarray | None = None) -> FloodExtentMap:
    """Threshold a depth field into a flood-extent map."""
    if valid_mask is None:
        valid_mask = np.ones(h.shape, dtype=bool)
    return FloodExtentMap(time=time, wet_mask=(h >= wet_threshold) & valid_mask,
                          valid_mask=valid_mask.copy())


# --------------------------------------------------------------------------- #
# Twin-experiment synthesis                                                    #
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class NoiseSpec:
    sigma_wl: float = 0.05      # m, gauge water-level error
    sigma_wsr: float = 0.05     # dimensionless WSR error

    def __post_init__(self):
        if self.sigma_wl < 0 or self.sigma_wsr < 0:
            raise ValueError("noise std-devs must be >= 0")


def synthesize_observations(truth: WindowResult,
                            stations: list[GaugeStation],
                            zones: list[FloodplainZone],
                            overpass_times: list[float],
                            noise: NoiseSpec,
                            seed: int,
                            wet_threshold: float = WET_THRESHOLD,
                            ) -> tuple[list[GaugeObservation], list[WsrObservation],
                                       list[FloodExtentMap]]:
    """Build the synthetic observing system from a truth trajectory: noisy
    gauge levels at each station's cadence, flood-extent maps thresholded from
    the truth depth at the overpass times, and noisy WSR values computed from
    those maps. Deterministic per seed."""
    gauge_obs: list[GaugeObservation] = []
    sigma_wl = max(noise.sigma_wl, 1e-12)
    sigma_wsr = max(noise.sigma_wsr, 1e-12)
    for st in stations:
        series = truth.gauge_records.get(st.name)
        if series is None:
            raise ValueError(f"truth trajectory has no gauge record for {st.name!r}")
        rng = np.random.default_rng([seed, 1, _station_tag(st.name)])
        eps = rng.normal(0.0, noise.sigma_wl, size=len(series.times)) if noise.sigma_wl > 0 \
            else np.zeros(len(series.times))
        for t, eta, e in zip(series.times, series.eta, eps):
            gauge_obs.append(GaugeObservation(time=float(t), station=st.name,
                                              eta_obs=float(eta + e), sigma=sigma_wl))

    extents: list[FloodExtentMap] = []
    wsr_obs: list[WsrObservation] = []
    for k, t in enumerate(overpass_times):
        t = float(t)
        if t not in truth.snapshots:
            raise ValueError(f"truth trajectory has no depth snapshot at t={t}")
        extent = depth_to_extent(truth.snapshots[t], time=t, wet_threshold=wet_threshold)
        extents.append(extent)
        rng = np.random.default_rng([seed, 2, k])
        eps = rng.normal(0.0, noise.sigma_wsr, size=len(zones)) if noise.sigma_wsr > 0 \
            else np.zeros(len(zones))
        for zone, e in zip(zones, eps):
            value = float(np.clip(wsr_of_extent(extent, zone) + e, 0.0, 1.0))
            wsr_obs.append(WsrObservation(time=t, zone_id=zone.zone_id,
                                          wsr=value, sigma=sigma_wsr))
    return gauge_obs, wsr_obs, extents


def _station_tag(name: str) -> int:
    # stable small integer per station name for seeding
    return sum(ord(ch) * (31 ** k) for k, ch in enumerate(name)) % (2 ** 31)


# --------------------------------------------------------------------------- #
# Observation operator for the analysis                                        #
# --------------------------------------------------------------------------- #


def predict_observations(member: WindowResult,
                         zones: list[FloodplainZone],
                         batch: list,
                         wet_threshold: float = WET_THRESHOLD) -> np.ndarray:
    """Map a member's recorded diagnostics onto an observation batch.

    Gauge entries pick the recorded free-surface elevation at (station, time);
    WSR entries apply wsr_of_depth to the depth snapshot at the observation
    time. Output ordering matches the batch exactly.
    """
    zone_by_id = {z.zone_id: z for z in zones}
    out = np.empty(len(batch))
    for k, obs in enumerate(batch):
        if isinstance(obs, GaugeObservation):
            series = member.gauge_records.get(obs.station)
            if series is None:
                raise ValueError(f"no recorded series for station {obs.station!r}")
            idx = np.searchsorted(series.times, obs.time)
            if idx >= len(series.times) or series.times[idx] != obs.time:
                raise ValueError(
                    f"no recorded gauge diagnostic at (station={obs.station!r}, "
                    f"t={obs.time})")
            out[k] = series.eta[idx]
        elif isinstance(obs, WsrObservation):
            if obs.time not in member.snapshots:
                raise ValueError(
                    f"no recorded depth snapshot for WSR observation at "
                    f"(zone={obs.zone_id}, t={obs.time})")
            out[k] = wsr_of_depth(member.snapshots[obs.time], zone_by_id[obs.zone_id],
                                  wet_threshold)
        else:
            raise TypeError(f"unsupported observation type {type(obs).__name__}")
    return out


# --------------------------------------------------------------------------- #
# File formats                                                                 #
# --------------------------------------------------------------------------- #


def write_gauge_obs_csv(path: str | os.PathLike, obs: list[GaugeObservation]) -> None:
    with open(path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["time_s", "station", "eta_m", "sigma_m"])
        for o in obs:
            w.writerow([repr(o.time), o.station, repr(o.eta_obs), repr(o.sigma)])


def read_gauge_obs_csv(path: str | os.PathLike) -> list[GaugeObservation]:
    out = []
    with open(path, newline="", encoding="ascii") as f:
        for row in csv.DictReader(f):
            out.append(GaugeObservation(time=float(row["time_s"]), station=row["station"],
                                        eta_obs=float(row["eta_m"]), sigma=float(row["sigma_m"])))
    return out


def write_wsr_obs_csv(path: str | os.PathLike, obs: list[WsrObservation]) -> None:
    with open(path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["time_s", "zone", "wsr", "sigma"])
        for o in obs:
            w.writerow([repr(o.time), o.zone_id, repr(o.wsr), repr(o.sigma)])


def read_wsr_obs_csv(path: str | os.PathLike) -> list[WsrObservation]:
    out = []
    with open(path, newline="", encoding="ascii") as f:
        for row in csv.DictReader(f):
            out.append(WsrObservation(time=float(row["time_s"]), zone_id=int(row["zone"]),
                                      wsr=float(row["wsr"]), sigma=float(row["sigma"])))
    return out


def write_extent_map(path: str | os.PathLike, extent: FloodExtentMap,
                     cell_size: float) -> None:
    """Extent raster with values {0 dry, 1 wet, -9999 invalid}."""
    values = np.where(extent.wet_mask, EXTENT_WET, EXTENT_DRY)
    values = np.where(extent.valid_mask, values, np.nan)
    write_ascii_grid(path, values, cell_size)


def read_extent_map(path: str | os.PathLike, time: float) -> FloodExtentMap:
    values, _ = read_ascii_grid(path)
    valid = np.isfinite(values)
    wet = valid & (values == EXTENT_WET)
    return FloodExtentMap(time=time, wet_mask=wet, valid_mask=valid)
