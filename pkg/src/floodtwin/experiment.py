"""Twin-experiment pipeline stages: truth generation, observation synthesis,
free-run / assimilation experiments, and verification report emission.

Every stage reads its inputs from the artifact tree under the configured
output directory and writes its own subdirectory, so stages are restartable
and the whole tree is a pure function of (config, seeds).
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .asciigrid import read_ascii_grid, write_ascii_grid
from .catchment import (Catchment, ControlVector, Hydrograph,
                        build_synthetic_catchment)
from .config import ExperimentConfig, config_as_dict, mode_controls
from .enkf import (Ensemble, Member, ModelContext, ObservationStore,
                   append_diagnostics_csv, draw_prior_ensemble,
                   write_ensemble_checkpoint)
from .enkf import run_cycle as enkf_run_cycle
from .errors import ConfigError, MissingArtifactError
from .observations import (FloodExtentMap, read_extent_map, read_gauge_obs_csv,
                           read_wsr_obs_csv, synthesize_observations,
                           write_extent_map, write_gauge_obs_csv,
                           write_wsr_obs_csv, WET_THRESHOLD)
from .solver import (GaugeSeries, ModelState, WindowResult, channel_base_state,
                     read_gauge_series_csv, run_window, write_gauge_series_csv)
from .verification import (contingency, csi, kappa, rmse, write_contingency_map,
                           write_scores_csv, wsr_misfit_series)

TRUTH_DIR = "truth"
OBS_DIR = "obs"
RUNS_DIR = "runs"
VERIFY_DIR = "verify"


def _snap_name(t: float) -> str:
    return f"snapshot_t{int(round(t))}.asc"


def _extent_name(t: float) -> str:
    return f"extent_t{int(round(t))}.asc"


def _write_manifest(directory: str, payload: dict) -> None:
    with open(os.path.join(directory, "manifest.json"), "w", encoding="ascii") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def _read_manifest(directory: str) -> dict:
    path = os.path.join(directory, "manifest.json")
    if not os.path.exists(path):
        raise MissingArtifactError(f"missing manifest: {path}")
    with open(path, encoding="ascii") as f:
        return json.load(f)


def _require(paths: list[str]) -> None:
    absent = [p for p in paths if not os.path.exists(p)]
    if absent:
        raise MissingArtifactError("missing artifacts:\n  " + "\n  ".join(absent))


def _config_echo(config: ExperimentConfig) -> dict:
    """Config view for manifests: the experiment identity only, without the
    environmental settings (output location, process count)."""
    echo = config_as_dict(config)
    echo["run"].pop("outdir", None)
    echo["run"].pop("workers", None)
    return echo


# --------------------------------------------------------------------------- #
# Shared setup                                                                 #
# --------------------------------------------------------------------------- #


def build_catchment(config: ExperimentConfig) -> Catchment:
    cat = build_synthetic_catchment(config.catchment, config.event.build_hydrograph())
    gauges = [dataclasses.replace(g, obs_period=config.observation.gauge_period_s)
              for g in cat.gauges]
    return Catchment(grid=cat.grid, zones=cat.zones, gauges=gauges,
                     boundary=cat.boundary)


def spin_up_state(config: ExperimentConfig, cat: Catchment) -> ModelState:
    """Steady base-flow spin-up from the bankfull initial guess; returns the
    shared initial state at t = 0 with a cleared mass ledger."""
    spec = config.catchment
    state = channel_base_state(cat.grid, spec.valley_slope, config.event.base_flow,
                               float(config.prior.ks_mean[3]), spec.channel_width_cells)
    spin_s = config.event.spinup_h * 3600.0
    if spin_s > 0:
        const = Hydrograph(times=np.array([0.0, spin_s]),
                           discharge=np.full(2, config.event.base_flow))
        bc = dataclasses.replace(cat.boundary, inflow_hydrograph=const)
        res = run_window(state, config.prior.mean_control(), cat.grid, bc,
                         config.solver, 0.0, spin_s)
        state = res.state
    return ModelState(h=state.h, u=state.u, v=state.v, t=0.0)


def leakage_field(config: ExperimentConfig, cat: Catchment) -> np.ndarray | None:
    """Per-cell leakage rate (m/s) over the truth's leakage zones, or None."""
    if config.truth.leak_rate <= 0 or not config.truth.leak_zones:
        return None
    field = np.zeros(cat.grid.shape)
    for z in cat.zones:
        if z.zone_id in config.truth.leak_zones:
            field[z.cell_mask] = config.truth.leak_rate
    return field


# --------------------------------------------------------------------------- #
# truth                                                                        #
# --------------------------------------------------------------------------- #


def cmd_truth(config: ExperimentConfig) -> str:
    """Run the designated-truth trajectory and write its artifacts."""
    cat = build_catchment(config)
    out = os.path.join(config.run.outdir, TRUTH_DIR)
    os.makedirs(out, exist_ok=True)

    initial = spin_up_state(config, cat)
    overpasses = config.observation.overpass_times(config.event)
    truth_cv = config.truth.truth_control(config.prior)
    res = run_window(initial, truth_cv, cat.grid, cat.boundary, config.solver,
                     0.0, config.event.duration_s, gauges=cat.gauges,
                     snapshot_times=overpasses,
                     leakage=leakage_field(config, cat))

    write_ascii_grid(os.path.join(out, "bed_elevation.asc"),
                     cat.grid.bed_elevation, cat.grid.cell_size)
    zone_map = np.zeros(cat.grid.shape)
    for z in cat.zones:
        zone_map[z.cell_mask] = z.zone_id
    zone_map[cat.grid.channel_mask] = -1.0       # channel marked distinctly
    write_ascii_grid(os.path.join(out, "zones.asc"), zone_map, cat.grid.cell_size)
    for name, arr in (("h", initial.h), ("u", initial.u), ("v", initial.v)):
        write_ascii_grid(os.path.join(out, f"initial_{name}.asc"), arr,
                         cat.grid.cell_size)
    for g in cat.gauges:
        write_gauge_series_csv(os.path.join(out, f"gauge_{g.name}.csv"),
                               res.gauge_records[g.name])
    for t in overpasses:
        write_ascii_grid(os.path.join(out, _snap_name(t)), res.snapshots[t],
                         cat.grid.cell_size)
    _write_manifest(out, {
        "stage": "truth",
        "config": _config_echo(config),
        "overpass_times_s": [float(t) for t in overpasses],
        "stations": [g.name for g in cat.gauges],
        "mass_ledger_m3": {
            "inflow": res.state.inflow_volume, "outflow": res.state.outflow_volume,
            "clipped": res.state.clipped_volume, "leaked": res.state.leaked_volume},
    })
    return out


def load_truth(config: ExperimentConfig) -> tuple[WindowResult, ModelState, dict]:
    """Reload the truth trajectory artifacts (gauge series, depth snapshots,
    initial state)."""
    out = os.path.join(config.run.outdir, TRUTH_DIR)
    manifest = _read_manifest(out)
    stations = manifest["stations"]
    overpasses = manifest["overpass_times_s"]
    _require([os.path.join(out, f"gauge_{s}.csv") for s in stations]
             + [os.path.join(out, _snap_name(t)) for t in overpasses]
             + [os.path.join(out, f"initial_{n}.asc") for n in ("h", "u", "v")])
    gauge_records = {s: read_gauge_series_csv(os.path.join(out, f"gauge_{s}.csv"))
                     for s in stations}
    snapshots = {float(t): read_ascii_grid(os.path.join(out, _snap_name(t)))[0]
                 for t in overpasses}
    fields = {n: read_ascii_grid(os.path.join(out, f"initial_{n}.asc"))[0]
              for n in ("h", "u", "v")}
    initial = ModelState(t=0.0, **fields)
    return (WindowResult(state=None, gauge_records=gauge_records, snapshots=snapshots),
            initial, manifest)


# --------------------------------------------------------------------------- #
# synthesize                                                                   #
# --------------------------------------------------------------------------- #


def cmd_synthesize(config: ExperimentConfig) -> str:
    """Generate the synthetic observing system from the truth artifacts."""
    cat = build_catchment(config)
    truth, _, manifest = load_truth(config)
    overpasses = manifest["overpass_times_s"]
    out = os.path.join(config.run.outdir, OBS_DIR)
    os.makedirs(out, exist_ok=True)

    gauge_obs, wsr_obs, extents = synthesize_observations(
        truth, cat.gauges, cat.zones, overpasses,
        noise=config.observation.noise(), seed=config.run.obs_seed)
    write_gauge_obs_csv(os.path.join(out, "gauge_obs.csv"), gauge_obs)
    write_wsr_obs_csv(os.path.join(out, "wsr_obs.csv"), wsr_obs)
    for extent in extents:
        write_extent_map(os.path.join(out, _extent_name(extent.time)), extent,
                         cat.grid.cell_size)
    _write_manifest(out, {
        "stage": "obs",
        "n_gauge_obs": len(gauge_obs),
        "n_wsr_obs": len(wsr_obs),
        "overpass_times_s": [float(t) for t in overpasses],
        "obs_seed": config.run.obs_seed,
    })
    return out


def load_observations(config: ExperimentConfig
                      ) -> tuple[ObservationStore, dict[float, FloodExtentMap]]:
    out = os.path.join(config.run.outdir, OBS_DIR)
    manifest = _read_manifest(out)
    overpasses = manifest["overpass_times_s"]
    _require([os.path.join(out, "gauge_obs.csv"), os.path.join(out, "wsr_obs.csv")]
             + [os.path.join(out, _extent_name(t)) for t in overpasses])
    store = ObservationStore(
        gauge_obs=read_gauge_obs_csv(os.path.join(out, "gauge_obs.csv")),
        wsr_obs=read_wsr_obs_csv(os.path.join(out, "wsr_obs.csv")))
    extents = {float(t): read_extent_map(os.path.join(out, _extent_name(t)), float(t))
               for t in overpasses}
    return store, extents


# --------------------------------------------------------------------------- #
# run                                                                          #
# --------------------------------------------------------------------------- #


@dataclass
class RunArtifacts:
    directory: str
    gauge_mean: dict[str, GaugeSeries]
    snapshots: dict[float, np.ndarray]
    coverage_end: float


def cmd_run(config: ExperimentConfig) -> str:
    """Run the configured experiment (free run or cycled assimilation)."""
    cat = build_catchment(config)
    mode = config.run.mode
    out = os.path.join(config.run.outdir, RUNS_DIR, mode)
    os.makedirs(out, exist_ok=True)
    _, initial, truth_manifest = load_truth(config)
    overpasses = [float(t) for t in truth_manifest["overpass_times_s"]]
    duration = config.event.duration_s

    diag_path = os.path.join(out, "control_diagnostics.csv")
    if os.path.exists(diag_path):
        os.remove(diag_path)

    if mode == "fr":
        res = run_window(initial, config.prior.mean_control(), cat.grid,
                         cat.boundary, config.solver, 0.0, duration,
                         gauges=cat.gauges, snapshot_times=overpasses)
        gauge_mean = res.gauge_records
        snapshots = res.snapshots
        coverage_end = duration
        window_starts: list[float] = []
    else:
        if config.run.members < 2:
            raise ConfigError("assimilation modes need at least 2 members")
        store, _ = load_observations(config)
        cycle = config.cycle.cycle_config(mode)
        ctx = ModelContext(grid=cat.grid, boundary=cat.boundary, gauges=cat.gauges,
                           zones=cat.zones, solver=config.solver)
        controls = draw_prior_ensemble(config.prior, config.run.members,
                                       config.run.seed)
        ensemble = Ensemble(
            members=[Member(control=cv, state=initial.copy()) for cv in controls],
            window_index=0, rng_seed=config.run.seed)

        window_starts = []
        t0 = 0.0
        while t0 + cycle.window_length <= duration + 1e-6:
            window_starts.append(t0)
            t0 += cycle.window_slide
        if not window_starts:
            raise ConfigError(
                "event shorter than one assimilation window; nothing to run")

        workers = config.run.workers or (os.cpu_count() or 1)
        executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
        gauge_mean = {}
        snapshots = {}
        try:
            for t0 in window_starts:
                t1 = t0 + cycle.window_length
                snaps_in_window = [t for t in overpasses if t0 <= t <= t1]
                ensemble, diag, outputs = enkf_run_cycle(
                    ensemble, cycle, t0, store, ctx, config.prior,
                    snapshot_times=snaps_in_window, executor=executor)
                append_diagnostics_csv(diag_path, diag)
                for name, series in outputs.gauge_mean.items():
                    _splice_series(gauge_mean, name, series)
                snapshots.update(outputs.snapshot_mean)
        finally:
            if executor is not None:
                executor.shutdown()
        coverage_end = window_starts[-1] + cycle.window_length
        if config.run.write_checkpoint:
            write_ensemble_checkpoint(os.path.join(out, "checkpoint"), ensemble,
                                      cat.grid)

    for name, series in gauge_mean.items():
        write_gauge_series_csv(os.path.join(out, f"gauge_mean_{name}.csv"), series)
    for t, fld in snapshots.items():
        write_ascii_grid(os.path.join(out, _snap_name(t)), fld, cat.grid.cell_size)
    _write_manifest(out, {
        "stage": "run",
        "mode": mode,
        "members": 1 if mode == "fr" else config.run.members,
        "seed": config.run.seed,
        "coverage_end_s": coverage_end,
        "window_starts_s": window_starts,
        "snapshot_times_s": sorted(float(t) for t in snapshots),
        "stations": [g.name for g in cat.gauges],
    })
    return out


def _splice_series(acc: dict[str, GaugeSeries], name: str, new: GaugeSeries) -> None:
    """Overlapping windows are simulated twice; the later (analyzed) pass
    wins, so later windows overwrite the overlap region."""
    if name not in acc:
        acc[name] = GaugeSeries(station=new.station, times=new.times.copy(),
                                eta=new.eta.copy())
        return
    old = acc[name]
    keep = old.times < new.times[0]
    acc[name] = GaugeSeries(station=name,
                            times=np.concatenate([old.times[keep], new.times]),
                            eta=np.concatenate([old.eta[keep], new.eta]))


def load_run(config: ExperimentConfig, mode: str) -> RunArtifacts:
    out = os.path.join(config.run.outdir, RUNS_DIR, mode)
    manifest = _read_manifest(out)
    stations = manifest["stations"]
    snap_times = manifest["snapshot_times_s"]
    _require([os.path.join(out, f"gauge_mean_{s}.csv") for s in stations]
             + [os.path.join(out, _snap_name(t)) for t in snap_times])
    gauge_mean = {s: read_gauge_series_csv(os.path.join(out, f"gauge_mean_{s}.csv"))
                  for s in stations}
    snapshots = {float(t): read_ascii_grid(os.path.join(out, _snap_name(t)))[0]
                 for t in snap_times}
    return RunArtifacts(directory=out, gauge_mean=gauge_mean, snapshots=snapshots,
                        coverage_end=float(manifest["coverage_end_s"]))


# --------------------------------------------------------------------------- #
# verify                                                                       #
# --------------------------------------------------------------------------- #


def cmd_verify(config: ExperimentConfig) -> str:
    """Emit the verification report for the configured mode: gauge RMSE table,
    zonal WSR misfit series, contingency maps with CSI/kappa scores (whole
    domain and floodplain zones), and the control-space series."""
    import csv as _csv

    cat = build_catchment(config)
    mode = config.run.mode
    truth, _, _ = load_truth(config)
    store, extents = load_observations(config)
    run_art = load_run(config, mode)
    out = os.path.join(config.run.outdir, VERIFY_DIR, mode)
    os.makedirs(out, exist_ok=True)

    # (b) gauge RMSE against the truth trajectory and against the noisy obs
    with open(os.path.join(out, "rmse.csv"), "w", newline="", encoding="ascii") as f:
        w = _csv.writer(f)
        w.writerow(["station", "rmse_vs_truth_m", "rmse_vs_obs_m", "n_times"])
        for name in sorted(run_art.gauge_mean):
            sim = run_art.gauge_mean[name]
            tru = truth.gauge_records[name]
            common, si, ti = np.intersect1d(sim.times, tru.times,
                                            return_indices=True)
            r_truth = rmse(sim.eta[si], tru.eta[ti]) if len(common) else float("nan")
            obs_t = np.array([o.time for o in store.gauge_obs if o.station == name])
            obs_eta = np.array([o.eta_obs for o in store.gauge_obs if o.station == name])
            common_o, so, oo = np.intersect1d(sim.times, obs_t, return_indices=True)
            r_obs = rmse(sim.eta[so], obs_eta[oo]) if len(common_o) else float("nan")
            w.writerow([name, repr(float(r_truth)), repr(float(r_obs)), len(common)])

    # (c) zonal WSR misfit series at the overpass times the run covers
    avail = set(run_art.snapshots)
    wsr_obs_avail = [o for o in store.wsr_obs if o.time in avail]
    misfits = wsr_misfit_series(run_art.snapshots, wsr_obs_avail, cat.zones)
    with open(os.path.join(out, "wsr_misfit.csv"), "w", newline="",
              encoding="ascii") as f:
        w = _csv.writer(f)
        w.writerow(["zone", "time_s", "misfit"])
        for zone_id in sorted(misfits):
            for t, m in misfits[zone_id]:
                w.writerow([zone_id, repr(float(t)), repr(float(m))])

    # (d) contingency maps and CSI/kappa, whole domain and zones-only
    zone_union = np.zeros(cat.grid.shape, dtype=bool)
    for z in cat.zones:
        zone_union |= z.cell_mask
    rows_all, rows_zones = [], []
    for t in sorted(avail & set(extents)):
        sim_wet = run_art.snapshots[t] >= WET_THRESHOLD
        obs_map = extents[t]
        cat_map, counts = contingency(sim_wet, obs_map)
        write_contingency_map(os.path.join(out, f"contingency_t{int(round(t))}.asc"),
                              cat_map, cat.grid.cell_size)
        rows_all.append((t, csi(counts), kappa(counts), counts))
        zoned = FloodExtentMap(time=t, wet_mask=obs_map.wet_mask & zone_union,
                               valid_mask=obs_map.valid_mask & zone_union)
        _, counts_z = contingency(sim_wet & zone_union, zoned)
        rows_zones.append((t, csi(counts_z), kappa(counts_z), counts_z))
    write_scores_csv(os.path.join(out, "scores.csv"), rows_all)
    write_scores_csv(os.path.join(out, "scores_zones.csv"), rows_zones)

    # (a) control-space series (per-cycle prior/posterior stats)
    diag_src = os.path.join(run_art.directory, "control_diagnostics.csv")
    if os.path.exists(diag_src):
        with open(diag_src, encoding="ascii") as fin, \
                open(os.path.join(out, "control_series.csv"), "w",
                     encoding="ascii") as fout:
            fout.write(fin.read())

    _write_manifest(out, {
        "stage": "verify",
        "mode": mode,
        "scored_times_s": sorted(float(t) for t in (avail & set(extents))),
    })
    return out
