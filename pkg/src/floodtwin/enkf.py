"""Stochastic (perturbed-observation) ensemble Kalman filter over the
augmented control vector, with overlapping-window cycling.

Per cycle: every member propagates over the full window with its own controls
(its zonal depth correction applied to the window-start state), all in-window
observations are stacked into one analysis that updates the active controls,
the analyzed corrections are applied to the pristine window-start states, the
window is re-run with analyzed controls, and the state at window start plus
the slide interval becomes the next cycle's start. Member propagation is a
pure per-member function, safe to run in a process pool; all random draws are
seeded by (seed, window_index, member_index) so scheduling cannot change
results.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from .asciigrid import read_ascii_grid, write_ascii_grid
from .catchment import (BoundaryConfig, ControlVector, FloodplainZone, GaugeStation,
                        Grid, N_RIVER_SEGMENTS, N_ZONES)
from .errors import MemberDivergenceError, SolverDivergenceError
from .observations import (GaugeObservation, WsrObservation, predict_observations)
from .solver import GaugeSeries, ModelState, SolverConfig, WindowResult, run_window

KS_LABELS = tuple(f"ks{i}" for i in range(N_RIVER_SEGMENTS + 1))
MU_LABEL = "mu"
DH_LABELS = tuple(f"dh{k}" for k in range(1, N_ZONES + 1))
ALL_LABELS = KS_LABELS + (MU_LABEL,) + DH_LABELS


# --------------------------------------------------------------------------- #
# Prior                                                                        #
# --------------------------------------------------------------------------- #


@dataclass
class PriorSpec:
    """Gaussian prior of the uncertain inputs; defaults are the calibrated
    values and spreads of the reference model."""

    ks_mean: np.ndarray = field(
        default_factory=lambda: np.array([17.0, 45.0, 38.0, 38.0, 40.0, 40.0, 40.0]))
    ks_std: np.ndarray = field(
        default_factory=lambda: np.array([0.85, 2.25, 1.9, 1.9, 2.0, 2.0, 2.0]))
    mu_mean: float = 1.0
    mu_std: float = 0.06
    dh_mean: float = 0.0
    dh_std: float = 0.25
    ks_min: float = 1.0
    mu_min: float = 0.1

    def __post_init__(self):
        self.ks_mean = np.asarray(self.ks_mean, dtype=np.float64)
        self.ks_std = np.asarray(self.ks_std, dtype=np.float64)
        if self.ks_mean.shape != (N_RIVER_SEGMENTS + 1,) or self.ks_std.shape != self.ks_mean.shape:
            raise ValueError("ks prior needs 7 means and 7 std-devs")
        if np.any(self.ks_std < 0) or self.mu_std < 0 or self.dh_std < 0:
            raise ValueError("prior std-devs must be >= 0")

    def mean_control(self) -> ControlVector:
        return ControlVector(ks=self.ks_mean.copy(), mu=self.mu_mean,
                             dh=np.full(N_ZONES, self.dh_mean))


def draw_prior_ensemble(spec: PriorSpec, n: int, seed: int) -> list[ControlVector]:
    """Independent Gaussian draws per variable, clipped to the parameter
    bounds; deterministic per seed."""
    if n < 2:
        raise ValueError("ensemble needs at least 2 members")
    rng = np.random.default_rng([int(seed), 0])
    ks = rng.normal(spec.ks_mean, spec.ks_std, size=(n, N_RIVER_SEGMENTS + 1))
    mu = rng.normal(spec.mu_mean, spec.mu_std, size=n)
    dh = rng.normal(spec.dh_mean, spec.dh_std, size=(n, N_ZONES))
    ks = np.maximum(ks, spec.ks_min)
    mu = np.maximum(mu, spec.mu_min)
    return [ControlVector(ks=ks[i], mu=float(mu[i]), dh=dh[i]) for i in range(n)]


# --------------------------------------------------------------------------- #
# Control flattening                                                           #
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ActiveControls:
    ks: bool = True
    mu: bool = True
    dh: bool = False

    def labels(self) -> list[str]:
        out: list[str] = []
        if self.ks:
            out.extend(KS_LABELS)
        if self.mu:
            out.append(MU_LABEL)
        if self.dh:
            out.extend(DH_LABELS)
        return out

    @property
    def size(self) -> int:
        return len(self.labels())


def flatten_controls(cv: ControlVector, active: ActiveControls) -> np.ndarray:
    parts = []
    if active.ks:
        parts.append(cv.ks)
    if active.mu:
        parts.append([cv.mu])
    if active.dh:
        parts.append(cv.dh)
    if not parts:
        return np.empty(0)
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def unflatten_controls(template: ControlVector, active: ActiveControls,
                       x: np.ndarray) -> ControlVector:
    out = template.copy()
    k = 0
    if active.ks:
        out.ks = x[k:k + N_RIVER_SEGMENTS + 1].copy()
        k += N_RIVER_SEGMENTS + 1
    if active.mu:
        out.mu = float(x[k])
        k += 1
    if active.dh:
        out.dh = x[k:k + N_ZONES].copy()
        k += N_ZONES
    return out


def _bounds_for(active: ActiveControls, spec: PriorSpec) -> np.ndarray:
    lower = []
    if active.ks:
        lower.extend([spec.ks_min] * (N_RIVER_SEGMENTS + 1))
    if active.mu:
        lower.append(spec.mu_min)
    if active.dh:
        lower.extend([-np.inf] * N_ZONES)
    return np.array(lower)


# --------------------------------------------------------------------------- #
# State correction                                                             #
# --------------------------------------------------------------------------- #


def apply_state_correction(state: ModelState, dh: np.ndarray,
                           zones: list[FloodplainZone]) -> ModelState:
    """Shift the depth of currently wet cells in each zone by dh[zone],
    clamped at zero; dried cells get their velocities zeroed; dry cells are
    never wetted by a positive correction."""
    dh = np.asarray(dh, dtype=np.float64)
    if dh.shape != (len(zones),):
        raise ValueError(f"dh needs one entry per zone ({len(zones)})")
    out = state.copy()
    for zone, delta in zip(zones, dh):
        if delta == 0.0:
            continue
        wet = zone.cell_mask & (out.h > 0.0)
        out.h[wet] = np.maximum(0.0, out.h[wet] + delta)
        dried = wet & (out.h == 0.0)
        out.u[dried] = 0.0
        out.v[dried] = 0.0
    return out


# --------------------------------------------------------------------------- #
# Analysis                                                                     #
# --------------------------------------------------------------------------- #


def analysis(prior_controls: list[ControlVector],
             predicted_obs: np.ndarray,
             obs: np.ndarray,
             obs_sigma: np.ndarray,
             active: ActiveControls,
             prior_spec: PriorSpec,
             seed: int = 0,
             inflation: float = 1.0,
             perturbations: np.ndarray | None = None) -> list[ControlVector]:
    """Stochastic EnKF update of the active control components.

    Ensemble covariances give the gain K = C_xy (C_yy + R)^-1; each member
    assimilates the observations perturbed with its own noise draw
    (``perturbations`` row, or N(0, R) draws seeded per member position).
    Bounds are re-applied and posterior anomalies are scaled by the inflation
    factor about the posterior mean. Inactive components pass through.
    """
    n = len(prior_controls)
    if n < 2:
        raise ValueError("analysis needs at least 2 members")
    predicted_obs = np.asarray(predicted_obs, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    obs_sigma = np.asarray(obs_sigma, dtype=np.float64)
    m = obs.shape[0]
    if m < 1:
        raise ValueError("analysis needs at least one observation")
    if predicted_obs.shape != (n, m):
        raise ValueError(f"predicted_obs must be (n={n}, m={m}), got {predicted_obs.shape}")
    if obs_sigma.shape != (m,) or np.any(obs_sigma <= 0):
        raise ValueError("obs_sigma must be m positive values")
    if inflation < 1.0:
        raise ValueError("inflation must be >= 1")

    x = np.stack([flatten_controls(cv, active) for cv in prior_controls])
    if x.shape[1] == 0:
        return [cv.copy() for cv in prior_controls]

    xa = x - x.mean(axis=0)
    ya = predicted_obs - predicted_obs.mean(axis=0)
    c_xy = xa.T @ ya / (n - 1)
    c_yy = ya.T @ ya / (n - 1)
    a = c_yy + np.diag(obs_sigma ** 2)
    gain = np.linalg.solve(a, c_xy.T).T          # (p, m)

    if perturbations is None:
        perturbations = np.stack([
            np.random.default_rng([int(seed), i]).normal(0.0, obs_sigma)
            for i in range(n)])
    perturbations = np.asarray(perturbations, dtype=np.float64)
    if perturbations.shape != (n, m):
        raise ValueError(f"perturbations must be (n={n}, m={m})")

    innov = obs[None, :] + perturbations - predicted_obs
    x_post = x + innov @ gain.T

    lower = _bounds_for(active, prior_spec)
    x_post = np.maximum(x_post, lower)
    if inflation != 1.0:
        mean_post = x_post.mean(axis=0)
        x_post = mean_post + inflation * (x_post - mean_post)
        x_post = np.maximum(x_post, lower)

    return [unflatten_controls(cv, active, x_post[i])
            for i, cv in enumerate(prior_controls)]


# --------------------------------------------------------------------------- #
# Cycling                                                                      #
# --------------------------------------------------------------------------- #


@dataclass
class Member:
    control: ControlVector
    state: ModelState


@dataclass
class Ensemble:
    members: list[Member]
    window_index: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("ensemble needs at least 2 members")
        shape = self.members[0].state.h.shape
        if any(m.state.h.shape != shape for m in self.members):
            raise ValueError("all member states must share grid dimensions")

    @property
    def n(self) -> int:
        return len(self.members)

    def controls(self) -> list[ControlVector]:
        return [m.control for m in self.members]


@dataclass(frozen=True)
class CycleConfig:
    window_length: float = 64800.0     # 18 h
    window_slide: float = 43200.0      # 12 h -> 6 h overlap
    active: ActiveControls = ActiveControls(ks=True, mu=True, dh=False)
    inflation: float = 1.0
    use_gauge_obs: bool = True
    use_wsr_obs: bool = False
    gauge_stride: int = 1              # assimilate every k-th gauge cadence time

    def __post_init__(self):
        if not 0.0 < self.window_slide <= self.window_length:
            raise ValueError("need 0 < window_slide <= window_length")
        if self.inflation < 1.0:
            raise ValueError("inflation must be >= 1")
        if self.gauge_stride < 1:
            raise ValueError("gauge_stride must be >= 1")


@dataclass
class ObservationStore:
    gauge_obs: list[GaugeObservation] = field(default_factory=list)
    wsr_obs: list[WsrObservation] = field(default_factory=list)

    def batch_for_window(self, t0: float, t1: float, cfg: CycleConfig,
                         gauge_period: float = 900.0) -> list:
        """Deterministically ordered in-window batch: gauge observations by
        (time, station), optionally thinned, then WSR observations by
        (time, zone)."""
        batch: list = []
        if cfg.use_gauge_obs:
            for o in sorted(self.gauge_obs, key=lambda o: (o.time, o.station)):
                if t0 <= o.time <= t1:
                    k = int(round(o.time / gauge_period))
                    if k % cfg.gauge_stride == 0:
                        batch.append(o)
        if cfg.use_wsr_obs:
            batch.extend(o for o in sorted(self.wsr_obs, key=lambda o: (o.time, o.zone_id))
                         if t0 <= o.time <= t1)
        return batch


@dataclass
class ModelContext:
    """Everything a member needs to propagate: immutable, shared read-only."""

    grid: Grid
    boundary: BoundaryConfig
    gauges: list[GaugeStation]
    zones: list[FloodplainZone]
    solver: SolverConfig


@dataclass
class CycleDiagnostics:
    window_index: int
    t0: float
    n_gauge_obs: int
    n_wsr_obs: int
    analysis_skipped: bool
    prior_mean: dict[str, float]
    prior_std: dict[str, float]
    post_mean: dict[str, float]
    post_std: dict[str, float]
    innovation_mean: float = float("nan")
    innovation_rms: float = float("nan")


@dataclass
class CycleOutputs:
    """Ensemble-mean diagnostics of the analyzed window runs."""

    gauge_mean: dict[str, GaugeSeries]
    snapshot_mean: dict[float, np.ndarray]


def _propagate_member(args) -> tuple[WindowResult, ModelState]:
    """Run one member over [t0, t1] split at the carry time; returns the
    merged window result and the state at the carry time. Pure function of
    its arguments (safe for process pools)."""
    (state, control, ctx, t0, t_carry, t1, snapshot_times) = args
    res_a = run_window(state, control, ctx.grid, ctx.boundary, ctx.solver,
                       t0, t_carry, gauges=ctx.gauges,
                       snapshot_times=[t for t in snapshot_times if t0 <= t <= t_carry])
    carry_state = res_a.state
    if t1 > t_carry:
        res_b = run_window(carry_state, control, ctx.grid, ctx.boundary, ctx.solver,
                           t_carry, t1, gauges=ctx.gauges,
                           snapshot_times=[t for t in snapshot_times if t_carry < t <= t1])
        merged = _merge_results(res_a, res_b)
    else:
        merged = res_a
    return merged, carry_state


def _run_members(mapper, tasks, window_index: int):
    it = iter(mapper(_propagate_member, tasks))
    results = []
    for i in range(len(tasks)):
        try:
            results.append(next(it))
        except SolverDivergenceError as exc:
            raise MemberDivergenceError(exc, member=i, window_index=window_index) from exc
    return results


def _merge_results(a: WindowResult, b: WindowResult) -> WindowResult:
    gauge_records = {}
    for name, sa in a.gauge_records.items():
        sb = b.gauge_records[name]
        keep = sb.times > sa.times[-1] if len(sa.times) and len(sb.times) else \
            np.ones(len(sb.times), dtype=bool)
        gauge_records[name] = GaugeSeries(
            station=name,
            times=np.concatenate([sa.times, sb.times[keep]]),
            eta=np.concatenate([sa.eta, sb.eta[keep]]))
    snapshots = dict(a.snapshots)
    snapshots.update(b.snapshots)
    return WindowResult(state=b.state, gauge_records=gauge_records, snapshots=snapshots)


def _control_stats(controls: list[ControlVector]) -> tuple[dict[str, float], dict[str, float]]:
    mat = np.stack([np.concatenate([cv.ks, [cv.mu], cv.dh]) for cv in controls])
    mean = mat.mean(axis=0)
    std = mat.std(axis=0, ddof=1)
    return (dict(zip(ALL_LABELS, mean.tolist())), dict(zip(ALL_LABELS, std.tolist())))


def run_cycle(ensemble: Ensemble, cycle: CycleConfig, t0: float,
              obs_store: ObservationStore, ctx: ModelContext,
              prior_spec: PriorSpec,
              snapshot_times: list[float] | None = None,
              executor: Executor | None = None,
              ) -> tuple[Ensemble, CycleDiagnostics, CycleOutputs]:
    """One assimilation cycle over [t0, t0 + window_length].

    Returns the advanced ensemble (states at t0 + window_slide, window index
    incremented), per-cycle diagnostics, and ensemble-mean analyzed outputs.
    With no observations in the window the analysis is skipped and members
    propagate freely (flagged in the diagnostics).
    """
    t1 = t0 + cycle.window_length
    t_carry = t0 + cycle.window_slide
    snapshot_times = sorted(set(float(t) for t in (snapshot_times or [])))

    gauge_period = ctx.gauges[0].obs_period if ctx.gauges else 900.0
    batch = obs_store.batch_for_window(t0, t1, cycle, gauge_period)
    n_gauge = sum(isinstance(o, GaugeObservation) for o in batch)
    n_wsr = len(batch) - n_gauge
    wsr_times = sorted({o.time for o in batch if isinstance(o, WsrObservation)})
    record_snaps = sorted(set(snapshot_times) | set(wsr_times))

    # fresh zero-mean draws of the zonal correction at each cycle start: the
    # correction represents this window's missing physics, not a static
    # parameter, so its prior does not carry over
    if cycle.active.dh:
        members = []
        for i, mem in enumerate(ensemble.members):
            rng = np.random.default_rng([ensemble.rng_seed, ensemble.window_index, i, 3])
            cv = mem.control.copy()
            cv.dh = rng.normal(prior_spec.dh_mean, prior_spec.dh_std, size=N_ZONES)
            members.append(Member(control=cv, state=mem.state))
    else:
        members = ensemble.members

    def start_state(mem: Member, dh: np.ndarray) -> ModelState:
        if cycle.active.dh:
            return apply_state_correction(mem.state, dh, ctx.zones)
        return mem.state

    mapper = executor.map if executor is not None else map

    # (1) prior propagation over the full window
    tasks = [(start_state(mem, mem.control.dh), mem.control, ctx,
              t0, t_carry, t1, record_snaps) for mem in members]
    prior_runs = _run_members(mapper, tasks, ensemble.window_index)

    diag_kwargs: dict = {}
    if len(batch) == 0:
        analyzed_controls = [mem.control for mem in members]
        analyzed_runs = prior_runs
        skipped = True
    else:
        skipped = False
        predicted = np.stack([predict_observations(res, ctx.zones, batch)
                              for res, _ in prior_runs])
        obs_vec = np.array([o.eta_obs if isinstance(o, GaugeObservation) else o.wsr
                            for o in batch])
        sigma_vec = np.array([o.sigma for o in batch])
        perturbations = np.stack([
            np.random.default_rng([ensemble.rng_seed, ensemble.window_index, i])
            .normal(0.0, sigma_vec)
            for i in range(ensemble.n)])
        analyzed_controls = analysis(
            [mem.control for mem in members], predicted, obs_vec, sigma_vec,
            active=cycle.active, prior_spec=prior_spec,
            inflation=cycle.inflation, perturbations=perturbations)
        d = obs_vec - predicted.mean(axis=0)
        diag_kwargs = dict(innovation_mean=float(d.mean()),
                           innovation_rms=float(np.sqrt(np.mean(d ** 2))))

        # (3)+(4) analyzed corrections applied to the pristine window-start
        # states, then the window is re-run with analyzed controls
        tasks = [(start_state(mem, cv.dh), cv, ctx, t0, t_carry, t1, record_snaps)
                 for mem, cv in zip(members, analyzed_controls)]
        analyzed_runs = _run_members(mapper, tasks, ensemble.window_index)

    prior_mean, prior_std = _control_stats([mem.control for mem in members])
    post_mean, post_std = _control_stats(analyzed_controls)
    diagnostics = CycleDiagnostics(
        window_index=ensemble.window_index, t0=t0,
        n_gauge_obs=n_gauge, n_wsr_obs=n_wsr, analysis_skipped=skipped,
        prior_mean=prior_mean, prior_std=prior_std,
        post_mean=post_mean, post_std=post_std, **diag_kwargs)

    # (5) the state at t0 + window_slide seeds the next cycle
    new_members = [Member(control=cv, state=carry)
                   for cv, (_, carry) in zip(analyzed_controls, analyzed_runs)]
    new_ensemble = Ensemble(members=new_members,
                            window_index=ensemble.window_index + 1,
                            rng_seed=ensemble.rng_seed)

    outputs = _mean_outputs([res for res, _ in analyzed_runs])
    return new_ensemble, diagnostics, outputs


def _mean_outputs(runs: list[WindowResult]) -> CycleOutputs:
    gauge_mean: dict[str, GaugeSeries] = {}
    first = runs[0]
    for name, series in first.gauge_records.items():
        eta = np.mean([r.gauge_records[name].eta for r in runs], axis=0)
        gauge_mean[name] = GaugeSeries(station=name, times=series.times.copy(), eta=eta)
    snapshot_mean = {t: np.mean([r.snapshots[t] for r in runs], axis=0)
                     for t in first.snapshots}
    return CycleOutputs(gauge_mean=gauge_mean, snapshot_mean=snapshot_mean)


# --------------------------------------------------------------------------- #
# Diagnostics CSV and ensemble checkpoints                                     #
# --------------------------------------------------------------------------- #


def append_diagnostics_csv(path: str | os.PathLike, diag: CycleDiagnostics) -> None:
    """One row per control variable per cycle."""
    new = not os.path.exists(path)
    with open(path, "a", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        if new:
            w.writerow(["window_index", "variable", "prior_mean", "prior_std",
                        "post_mean", "post_std"])
        for label in ALL_LABELS:
            w.writerow([diag.window_index, label,
                        repr(diag.prior_mean[label]), repr(diag.prior_std[label]),
                        repr(diag.post_mean[label]), repr(diag.post_std[label])])


def write_ensemble_checkpoint(directory: str | os.PathLike, ensemble: Ensemble,
                              grid: Grid) -> None:
    """Text bundle: controls CSV, per-member state grids, and a meta file."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "controls.csv"), "w", newline="",
              encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["member"] + list(ALL_LABELS))
        for i, mem in enumerate(ensemble.members):
            vec = np.concatenate([mem.control.ks, [mem.control.mu], mem.control.dh])
            w.writerow([i] + [repr(float(v)) for v in vec])
    for i, mem in enumerate(ensemble.members):
        for name, arr in (("h", mem.state.h), ("u", mem.state.u), ("v", mem.state.v)):
            write_ascii_grid(os.path.join(directory, f"member_{i:03d}_{name}.asc"),
                             arr, grid.cell_size)
    meta = {"n_members": ensemble.n, "window_index": ensemble.window_index,
            "rng_seed": ensemble.rng_seed,
            "t": [mem.state.t for mem in ensemble.members]}
    with open(os.path.join(directory, "meta.json"), "w", encoding="ascii") as f:
        json.dump(meta, f, indent=1, sort_keys=True)


def read_ensemble_checkpoint(directory: str | os.PathLike) -> Ensemble:
    with open(os.path.join(directory, "meta.json"), encoding="ascii") as f:
        meta = json.load(f)
    members = []
    with open(os.path.join(directory, "controls.csv"), newline="", encoding="ascii") as f:
        rows = list(csv.DictReader(f))
    for i in range(meta["n_members"]):
        row = rows[i]
        cv = ControlVector(
            ks=np.array([float(row[l]) for l in KS_LABELS]),
            mu=float(row[MU_LABEL]),
            dh=np.array([float(row[l]) for l in DH_LABELS]))
        fields = {}
        for name in ("h", "u", "v"):
            arr, _ = read_ascii_grid(os.path.join(directory, f"member_{i:03d}_{name}.asc"))
            fields[name] = arr
        state = ModelState(t=meta["t"][i], **fields)
        members.append(Member(control=cv, state=state))
    return Ensemble(members=members, window_index=meta["window_index"],
                    rng_seed=meta["rng_seed"])
