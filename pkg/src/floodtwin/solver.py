"""2D shallow-water forward model.

First-order finite volume on the structured grid: Rusanov interface fluxes
with hydrostatic reconstruction of the bed-slope term (well-balanced for a
lake at rest, mass-conservative on closed domains), a pointwise semi-implicit
Strickler friction update, upstream hydrograph inflow distributed over the
whole upstream interface, and a rating-curve outflow at the channel outlet.
Depths below the drying threshold are clipped to zero with the clipped volume
tracked, so the mass ledger stays exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .catchment import BoundaryConfig, ControlVector, GaugeStation, Grid, materialize_friction
from .errors import SolverDivergenceError

_EMPTY_CELLS = np.empty(0, dtype=np.int64)
_EMPTY_FIELD = np.empty((0, 0), dtype=np.float64)


# --------------------------------------------------------------------------- #
# State                                                                        #
# --------------------------------------------------------------------------- #


@dataclass
class ModelState:
    """Water depth and depth-averaged velocities at one time instant, plus the
    cumulative mass ledger (m^3) for conservation accounting."""

    h: np.ndarray
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0
    clipped_volume: float = 0.0
    inflow_volume: float = 0.0
    outflow_volume: float = 0.0
    leaked_volume: float = 0.0

    def copy(self) -> "ModelState":
        return ModelState(self.h.copy(), self.u.copy(), self.v.copy(), self.t,
                          self.clipped_volume, self.inflow_volume,
                          self.outflow_volume, self.leaked_volume)

    def volume(self, cell_area: float) -> float:
        """Total water volume on the grid (m^3)."""
        return float(self.h.sum()) * cell_area

    def validate(self, drying_threshold: float) -> None:
        if np.any(self.h < 0):
            raise ValueError("negative depth")
        if not (np.all(np.isfinite(self.h)) and np.all(np.isfinite(self.u))
                and np.all(np.isfinite(self.v))):
            raise ValueError("non-finite state")
        below = self.h < drying_threshold
        if np.any(self.u[below] != 0.0) or np.any(self.v[below] != 0.0):
            raise ValueError("nonzero velocity on dry cells")


@dataclass(frozen=True)
class SolverConfig:
    cfl_number: float = 0.5
    drying_threshold: float = 1.0e-3   # m; numerical, distinct from the 5 cm wet threshold
    gravity: float = 9.81
    max_dt: float = 60.0

    def __post_init__(self):
        if not 0.0 < self.cfl_number <= 1.0:
            raise ValueError("cfl_number must be in (0, 1]")
        if self.drying_threshold <= 0:
            raise ValueError("drying_threshold must be positive")


def still_water_state(grid: Grid, surface_elevation: float) -> ModelState:
    """State at rest with free surface at the given elevation (dry where the
    bed is higher)."""
    h = np.maximum(0.0, surface_elevation - grid.bed_elevation)
    return ModelState(h=h, u=np.zeros(grid.shape), v=np.zeros(grid.shape))


def channel_base_state(grid: Grid, spec_valley_slope: float, discharge: float,
                       ks_channel: float, channel_width_cells: int) -> ModelState:
    """Initial condition: channel filled to the Manning normal depth for the
    given discharge and flowing along the valley; floodplain dry."""
    width_m = channel_width_cells * grid.cell_size
    hn = (discharge / (ks_channel * width_m * np.sqrt(spec_valley_slope))) ** 0.6
    h = np.where(grid.channel_mask, hn, 0.0)
    u = np.where(grid.channel_mask, discharge / (width_m * hn), 0.0)
    return ModelState(h=h, u=u, v=np.zeros(grid.shape))


# --------------------------------------------------------------------------- #
# Strickler friction                                                           #
# --------------------------------------------------------------------------- #


def strickler_friction_slope(u, v, h, ks):
    """Friction slope components S_f = |V| (u, v) / (Ks^2 h^(4/3))."""
    speed = np.hypot(u, v)
    denom = ks * ks * np.asarray(h, dtype=np.float64) ** (4.0 / 3.0)
    return u * speed / denom, v * speed / denom


def friction_substep(u, v, h, ks, dt, g=9.81):
    """Analytic semi-implicit friction update; never reverses a velocity
    component's sign and never increases its magnitude."""
    speed = np.hypot(u, v)
    factor = 1.0 + dt * g * speed / (ks * ks * np.asarray(h, dtype=np.float64) ** (4.0 / 3.0))
    return u / factor, v / factor


# --------------------------------------------------------------------------- #
# Compiled kernels                                                             #
# --------------------------------------------------------------------------- #


@njit(cache=True)
def _stable_dt_kernel(h, u, v, cell_size, g, dry_tol):  # pragma: no cover - compiled
    nrows, ncols = h.shape
    best = np.inf
    for j in range(nrows):
        for i in range(ncols):
            hij = h[j, i]
            if hij > dry_tol:
                speed = np.sqrt(u[j, i] * u[j, i] + v[j, i] * v[j, i])
                dt = cell_size / (speed + np.sqrt(g * hij))
                if dt < best:
                    best = dt
    return best


@njit(cache=True)
def _step_kernel(h, u, v, z, ks, dx, g, dt, dry_tol,
                 up_cells, v_in, down_cells, ra, re0, rb, leak,
                 h2, qx, qy):  # pragma: no cover - compiled
    """One finite-volume update in place on (h, u, v).

    Returns (bad_row, bad_col, clipped_m3, outflow_m3, leaked_m3); bad indices
    are -1 when every value stayed finite.
    """
    nrows, ncols = h.shape
    area = dx * dx
    c = dt / dx
    half_g = 0.5 * g

    for j in range(nrows):
        for i in range(ncols):
            h2[j, i] = h[j, i]
            qx[j, i] = h[j, i] * u[j, i]
            qy[j, i] = h[j, i] * v[j, i]

    # x-direction interface fluxes (walls at the domain edge: no flux)
    for j in range(nrows):
        for i in range(1, ncols):
            hl = h[j, i - 1]
            hr = h[j, i]
            if hl <= 0.0 and hr <= 0.0:
                continue
            zl = z[j, i - 1]
            zr = z[j, i]
            zf = zl if zl > zr else zr
            hls = hl + zl - zf
            if hls < 0.0:
                hls = 0.0
            hrs = hr + zr - zf
            if hrs < 0.0:
                hrs = 0.0
            ul = u[j, i - 1]
            vl = v[j, i - 1]
            ur = u[j, i]
            vr = v[j, i]
            al = abs(ul) + np.sqrt(g * hls)
            ar = abs(ur) + np.sqrt(g * hrs)
            a = al if al > ar else ar
            f0 = 0.5 * (hls * ul + hrs * ur) - 0.5 * a * (hrs - hls)
            f1 = 0.5 * (hls * ul * ul + half_g * hls * hls
                        + hrs * ur * ur + half_g * hrs * hrs) \
                - 0.5 * a * (hrs * ur - hls * ul)
            f2 = 0.5 * (hls * ul * vl + hrs * ur * vr) - 0.5 * a * (hrs * vr - hls * vl)
            # hydrostatic-reconstruction pressure corrections per side
            h2[j, i - 1] -= c * f0
            qx[j, i - 1] -= c * (f1 + half_g * (hl * hl - hls * hls))
            qy[j, i - 1] -= c * f2
            h2[j, i] += c * f0
            qx[j, i] += c * (f1 + half_g * (hr * hr - hrs * hrs))
            qy[j, i] += c * f2

    # y-direction interface fluxes
    for j in range(1, nrows):
        for i in range(ncols):
            hl = h[j - 1, i]
            hr = h[j, i]
            if hl <= 0.0 and hr <= 0.0:
                continue
            zl = z[j - 1, i]
            zr = z[j, i]
            zf = zl if zl > zr else zr
            hls = hl + zl - zf
            if hls < 0.0:
                hls = 0.0
            hrs = hr + zr - zf
            if hrs < 0.0:
                hrs = 0.0
            ul = u[j - 1, i]
            vl = v[j - 1, i]
            ur = u[j, i]
            vr = v[j, i]
            al = abs(vl) + np.sqrt(g * hls)
            ar = abs(vr) + np.sqrt(g * hrs)
            a = al if al > ar else ar
            g0 = 0.5 * (hls * vl + hrs * vr) - 0.5 * a * (hrs - hls)
            g1 = 0.5 * (hls * ul * vl + hrs * ur * vr) - 0.5 * a * (hrs * ur - hls * ul)
            g2 = 0.5 * (hls * vl * vl + half_g * hls * hls
                        + hrs * vr * vr + half_g * hrs * hrs) \
                - 0.5 * a * (hrs * vr - hls * vl)
            h2[j - 1, i] -= c * g0
            qx[j - 1, i] -= c * g1
            qy[j - 1, i] -= c * (g2 + half_g * (hl * hl - hls * hls))
            h2[j, i] += c * g0
            qx[j, i] += c * g1
            qy[j, i] += c * (g2 + half_g * (hr * hr - hrs * hrs))

    # closed-wall pressure on the domain edges (reflective boundary)
    for j in range(nrows):
        qx[j, 0] += c * half_g * h[j, 0] * h[j, 0]
        qx[j, ncols - 1] -= c * half_g * h[j, ncols - 1] * h[j, ncols - 1]
    for i in range(ncols):
        qy[0, i] += c * half_g * h[0, i] * h[0, i]
        qy[nrows - 1, i] -= c * half_g * h[nrows - 1, i] * h[nrows - 1, i]

    # cell update + semi-implicit Strickler friction
    for j in range(nrows):
        for i in range(ncols):
            hn = h2[j, i]
            if hn > dry_tol:
                un = qx[j, i] / hn
                vn = qy[j, i] / hn
                speed = np.sqrt(un * un + vn * vn)
                if speed > 0.0:
                    ksij = ks[j, i]
                    h43 = hn * np.cbrt(hn)
                    fac = 1.0 + dt * g * speed / (ksij * ksij * h43)
                    un /= fac
                    vn /= fac
                h[j, i] = hn
                u[j, i] = un
                v[j, i] = vn
            else:
                h[j, i] = hn
                u[j, i] = 0.0
                v[j, i] = 0.0

    # upstream inflow over the whole interface, split by local conveyance
    # (uniform on a cold dry start, concentrating back into the river bed as
    # the channel establishes); momentum injected with velocity Q / A_wet
    n_up = up_cells.shape[0]
    if n_up > 0 and v_in > 0.0:
        a_wet = 0.0
        w_sum = 0.0
        for k in range(n_up):
            cell = up_cells[k]
            hk = h[cell // ncols, cell % ncols]
            a_wet += hk * dx
            if hk < 0.05:
                hk = 0.05
            w_sum += hk ** (5.0 / 3.0)
        a_min = n_up * dx * 0.05
        if a_wet < a_min:
            a_wet = a_min
        u_in = (v_in / dt) / a_wet
        for k in range(n_up):
            jj = up_cells[k] // ncols
            ii = up_cells[k] % ncols
            h_old = h[jj, ii]
            hk = h_old if h_old >= 0.05 else 0.05
            dh_in = v_in * hk ** (5.0 / 3.0) / (w_sum * area)
            h_new = h_old + dh_in
            u[jj, ii] = (h_old * u[jj, ii] + dh_in * u_in) / h_new
            v[jj, ii] = (h_old * v[jj, ii]) / h_new
            h[jj, ii] = h_new

    # downstream rating-curve outflow, removed proportionally to local depth
    out_vol = 0.0
    n_down = down_cells.shape[0]
    if n_down > 0:
        eta_sum = 0.0
        h_sum = 0.0
        n_wet = 0
        for k in range(n_down):
            jj = down_cells[k] // ncols
            ii = down_cells[k] % ncols
            if h[jj, ii] > dry_tol:
                eta_sum += z[jj, ii] + h[jj, ii]
                n_wet += 1
            h_sum += h[jj, ii]
        if n_wet > 0:
            head = eta_sum / n_wet - re0
            if head > 0.0:
                q_out = ra * head ** rb
                out_vol = q_out * dt
                avail = h_sum * area
                if out_vol > 0.5 * avail:
                    out_vol = 0.5 * avail
                factor = 1.0 - out_vol / (h_sum * area)
                for k in range(n_down):
                    jj = down_cells[k] // ncols
                    ii = down_cells[k] % ncols
                    h[jj, ii] *= factor

    # floodplain leakage sink (truth-run structural error), tracked
    leak_vol = 0.0
    if leak.shape[0] == nrows:
        for j in range(nrows):
            for i in range(ncols):
                r = leak[j, i]
                if r > 0.0 and h[j, i] > 0.0:
                    rem = r * dt
                    if rem > h[j, i]:
                        rem = h[j, i]
                    h[j, i] -= rem
                    leak_vol += rem * area

    # drying clip (tracked) and finiteness check
    clipped = 0.0
    bad_row = -1
    bad_col = -1
    for j in range(nrows):
        for i in range(ncols):
            hn = h[j, i]
            if bad_row < 0 and not (np.isfinite(hn) and np.isfinite(u[j, i])
                                    and np.isfinite(v[j, i])):
                bad_row = j
                bad_col = i
            if hn < dry_tol:
                if hn != 0.0:
                    clipped += hn * area
                    h[j, i] = 0.0
                u[j, i] = 0.0
                v[j, i] = 0.0

    return bad_row, bad_col, clipped, out_vol, leak_vol


# --------------------------------------------------------------------------- #
# Public stepping API                                                          #
# --------------------------------------------------------------------------- #


def compute_stable_dt(state: ModelState, grid: Grid, cfg: SolverConfig) -> float:
    """CFL-limited time step: cfl * min over wet cells of
    cell_size / (|velocity| + sqrt(g h)), capped at max_dt."""
    raw = _stable_dt_kernel(state.h, state.u, state.v, grid.cell_size,
                            cfg.gravity, cfg.drying_threshold)
    return float(min(cfg.cfl_number * raw, cfg.max_dt))


def step(state: ModelState, grid: Grid, friction_field: np.ndarray,
         bc: BoundaryConfig | None, cfg: SolverConfig, dt: float,
         inflow_scale: float = 1.0, leakage: np.ndarray | None = None) -> ModelState:
    """Advance one time step of length dt; returns a new state.

    With bc=None the domain is closed (walls on all sides). The inflow volume
    for the step is the exact integral of the hydrograph over [t, t+dt] times
    inflow_scale.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = state.copy()
    v_in = 0.0
    if bc is not None:
        v_in = inflow_scale * bc.inflow_hydrograph.volume(state.t, state.t + dt)
        up, down = bc.upstream_cells, bc.downstream_cells
        rc = bc.rating_curve
        ra, re0, rb = rc.a, rc.eta0, rc.b
    else:
        up = down = _EMPTY_CELLS
        ra = re0 = rb = 0.0
    leak = leakage if leakage is not None else _EMPTY_FIELD
    scratch = (np.empty(grid.shape), np.empty(grid.shape), np.empty(grid.shape))
    bad_row, bad_col, clipped, out_vol, leak_vol = _step_kernel(
        out.h, out.u, out.v, grid.bed_elevation, friction_field,
        grid.cell_size, cfg.gravity, dt, cfg.drying_threshold,
        up, v_in, down, ra, re0, rb, leak, *scratch)
    if bad_row >= 0:
        raise SolverDivergenceError(bad_row, bad_col, state.t + dt)
    out.t = state.t + dt
    out.clipped_volume += clipped
    out.inflow_volume += v_in
    out.outflow_volume += out_vol
    out.leaked_volume += leak_vol
    return out


# --------------------------------------------------------------------------- #
# Window integration with recording                                            #
# --------------------------------------------------------------------------- #


@dataclass
class GaugeSeries:
    """Free-surface elevation recorded at one station."""

    station: str
    times: np.ndarray
    eta: np.ndarray


@dataclass
class WindowResult:
    state: ModelState | None
    gauge_records: dict[str, GaugeSeries] = field(default_factory=dict)
    snapshots: dict[float, np.ndarray] = field(default_factory=dict)


def write_gauge_series_csv(path, series: GaugeSeries) -> None:
    """Gauge series as CSV rows (time_s, station, eta_m)."""
    with open(path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["time_s", "station", "eta_m"])
        for t, eta in zip(series.times, series.eta):
            w.writerow([repr(float(t)), series.station, repr(float(eta))])


def read_gauge_series_csv(path) -> GaugeSeries:
    times, eta, station = [], [], ""
    with open(path, newline="", encoding="ascii") as f:
        for row in csv.DictReader(f):
            times.append(float(row["time_s"]))
            eta.append(float(row["eta_m"]))
            station = row["station"]
    return GaugeSeries(station=station, times=np.array(times), eta=np.array(eta))


def gauge_record_times(t0: float, t1: float, period: float) -> np.ndarray:
    """Multiples of the observation period inside [t0, t1]."""
    k0 = int(np.ceil(t0 / period - 1e-9))
    k1 = int(np.floor(t1 / period + 1e-9))
    return np.arange(k0, k1 + 1, dtype=np.float64) * period


def run_window(state: ModelState, cv: ControlVector, grid: Grid,
               bc: BoundaryConfig | None, cfg: SolverConfig,
               t0: float, t1: float,
               gauges: tuple[GaugeStation, ...] | list[GaugeStation] = (),
               snapshot_times: tuple[float, ...] | list[float] = (),
               leakage: np.ndarray | None = None) -> WindowResult:
    """Integrate from t0 to t1 with adaptive time steps, friction materialized
    from cv.ks and the hydrograph scaled by cv.mu, recording gauge elevations
    at each station's cadence and full depth fields at the requested times."""
    if t1 <= t0:
        raise ValueError("window must satisfy t1 > t0")
    if abs(state.t - t0) > 1e-9:
        raise ValueError(f"state is at t={state.t}, window starts at t0={t0}")

    friction = np.ascontiguousarray(materialize_friction(grid, cv))
    bed_flat = grid.bed_elevation.ravel()

    gauge_times = {g.name: gauge_record_times(t0, t1, g.obs_period) for g in gauges}
    events = {float(t1)}
    events.update(float(t) for ts in gauge_times.values() for t in ts)
    for t in snapshot_times:
        if not t0 <= t <= t1:
            raise ValueError(f"snapshot time {t} outside window [{t0}, {t1}]")
        events.add(float(t))
    event_list = sorted(t for t in events if t >= t0)

    recorded_eta: dict[str, list[float]] = {g.name: [] for g in gauges}
    snapshots: dict[float, np.ndarray] = {}
    snap_set = {float(t) for t in snapshot_times}

    def record(t: float, st: ModelState) -> None:
        for g in gauges:
            times = gauge_times[g.name]
            # times are sorted; membership by position keeps this O(1) amortized
            if len(recorded_eta[g.name]) < len(times) and times[len(recorded_eta[g.name])] == t:
                recorded_eta[g.name].append(float(bed_flat[g.cell_index] + st.h.ravel()[g.cell_index]))
        if t in snap_set:
            snapshots[t] = st.h.copy()

    st = state.copy()
    record(st.t, st)
    for target in event_list:
        if target <= st.t:
            continue
        while st.t < target:
            dt = min(compute_stable_dt(st, grid, cfg), target - st.t)
            hit = st.t + dt >= target - 1e-9
            st = step(st, grid, friction, bc, cfg, dt,
                      inflow_scale=cv.mu, leakage=leakage)
            if hit:
                st.t = target
        record(st.t, st)

    gauge_records = {
        g.name: GaugeSeries(station=g.name, times=gauge_times[g.name],
                            eta=np.array(recorded_eta[g.name]))
        for g in gauges}
    return WindowResult(state=st, gauge_records=gauge_records, snapshots=snapshots)
