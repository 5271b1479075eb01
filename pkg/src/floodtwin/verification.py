"""Verification in observation and map space: water-level RMSE, contingency
maps against flood-extent observations, CSI and Cohen's kappa, and zonal WSR
misfit series.

CSI and kappa return None for the degenerate cases in which they are
mathematically undefined (nothing wet anywhere, or chance agreement equal to
one); callers must treat None as "undefined", never as a score.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .asciigrid import write_ascii_grid
from .catchment import FloodplainZone
from .observations import FloodExtentMap, WsrObservation, WET_THRESHOLD, wsr_of_depth

CAT_CORRECT_NEGATIVE = 0
CAT_HIT = 1
CAT_MISS = 2
CAT_FALSE_ALARM = 3
CAT_INVALID = -9999


@dataclass(frozen=True)
class ContingencyCounts:
    tp: int     # hit: wet in both
    fn: int     # miss: dry simulated, wet observed
    fp: int     # false alarm: wet simulated, dry observed
    tn: int     # correct negative

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise ValueError("contingency counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


def rmse(sim: np.ndarray, obs: np.ndarray) -> float:
    """Root-mean-square difference of two aligned series."""
    sim = np.asarray(sim, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if sim.shape != obs.shape:
        raise ValueError(f"series lengths differ: {sim.shape} vs {obs.shape}")
    if sim.size == 0:
        raise ValueError("cannot compute RMSE of empty series")
    return float(np.sqrt(np.mean((sim - obs) ** 2)))


def contingency(sim_wet: np.ndarray, obs: FloodExtentMap
                ) -> tuple[np.ndarray, ContingencyCounts]:
    """Per-cell comparison of a simulated wet mask against an observed extent.

    Invalid (unobserved) cells are excluded from the counts and coded -9999 in
    the returned category map.
    """
    if sim_wet.shape != obs.wet_mask.shape:
        raise ValueError(f"grid mismatch: {sim_wet.shape} vs {obs.wet_mask.shape}")
    valid = obs.valid_mask
    cat = np.full(sim_wet.shape, CAT_INVALID, dtype=np.int64)
    cat[valid & sim_wet & obs.wet_mask] = CAT_HIT
    cat[valid & ~sim_wet & obs.wet_mask] = CAT_MISS
    cat[valid & sim_wet & ~obs.wet_mask] = CAT_FALSE_ALARM
    cat[valid & ~sim_wet & ~obs.wet_mask] = CAT_CORRECT_NEGATIVE
    counts = ContingencyCounts(
        tp=int(np.count_nonzero(cat == CAT_HIT)),
        fn=int(np.count_nonzero(cat == CAT_MISS)),
        fp=int(np.count_nonzero(cat == CAT_FALSE_ALARM)),
        tn=int(np.count_nonzero(cat == CAT_CORRECT_NEGATIVE)))
    return cat, counts


def csi(c: ContingencyCounts) -> float | None:
    """Critical success index tp / (tp + fn + fp); None when nothing is wet
    in either mask (undefined)."""
    denom = c.tp + c.fn + c.fp
    if denom == 0:
        return None
    return c.tp / denom


def kappa(c: ContingencyCounts) -> float | None:
    """Cohen's kappa over the wet/dry classes; None when chance agreement
    p_e equals 1 (single class on both sides)."""
    total = c.total
    if total == 0:
        raise ValueError("kappa needs at least one valid cell")
    p_o = (c.tp + c.tn) / total
    p_e = ((c.tp + c.fp) * (c.tp + c.fn) + (c.fn + c.tn) * (c.fp + c.tn)) / total ** 2
    if p_e == 1.0:
        return None
    return (p_o - p_e) / (1.0 - p_e)


def wsr_misfit_series(snapshots: dict[float, np.ndarray],
                      obs: list[WsrObservation],
                      zones: list[FloodplainZone],
                      wet_threshold: float = WET_THRESHOLD,
                      ) -> dict[int, list[tuple[float, float]]]:
    """Observed-minus-simulated WSR per zone over the overpass times.

    Positive misfit means the simulation is drier than observed. Returns
    {zone_id: [(time, misfit), ...]} ordered by time.
    """
    zone_by_id = {z.zone_id: z for z in zones}
    out: dict[int, list[tuple[float, float]]] = {z.zone_id: [] for z in zones}
    for o in sorted(obs, key=lambda o: (o.time, o.zone_id)):
        if o.time not in snapshots:
            raise ValueError(f"no depth snapshot at t={o.time} for WSR misfit")
        sim = wsr_of_depth(snapshots[o.time], zone_by_id[o.zone_id], wet_threshold)
        out[o.zone_id].append((o.time, o.wsr - sim))
    return out


# --------------------------------------------------------------------------- #
# File formats                                                                 #
# --------------------------------------------------------------------------- #


def write_contingency_map(path: str | os.PathLike, cat: np.ndarray,
                          cell_size: float) -> None:
    """Category raster {0 correct_negative, 1 hit, 2 miss, 3 false_alarm,
    -9999 invalid}."""
    values = np.where(cat == CAT_INVALID, np.nan, cat.astype(np.float64))
    write_ascii_grid(path, values, cell_size)


def write_scores_csv(path: str | os.PathLike,
                     rows: list[tuple[float, float | None, float | None,
                                      ContingencyCounts]]) -> None:
    """Sidecar scores: one row (time_s, csi, kappa, tp, fn, fp, tn) per map;
    undefined scores are written as empty fields."""
    with open(path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["time_s", "csi", "kappa", "tp", "fn", "fp", "tn"])
        for t, c_val, k_val, counts in rows:
            w.writerow([repr(float(t)),
                        "" if c_val is None else repr(float(c_val)),
                        "" if k_val is None else repr(float(k_val)),
                        counts.tp, counts.fn, counts.fp, counts.tn])
