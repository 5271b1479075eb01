import numpy as np
import pytest

from floodtwin.config import (EventSpec, ExperimentConfig, config_as_dict,
                              dump_config, load_config, mode_controls)
from floodtwin.enkf import ActiveControls
from floodtwin.errors import ConfigError


def test_defaults_match_reference_values():
    cfg = ExperimentConfig()
    assert np.array_equal(cfg.prior.ks_mean, [17, 45, 38, 38, 40, 40, 40])
    assert np.array_equal(cfg.prior.ks_std, [0.85, 2.25, 1.9, 1.9, 2.0, 2.0, 2.0])
    assert cfg.prior.mu_mean == 1.0 and cfg.prior.mu_std == 0.06
    assert cfg.prior.dh_mean == 0.0 and cfg.prior.dh_std == 0.25
    assert cfg.run.members == 75
    assert cfg.cycle.window_h == 18.0 and cfg.cycle.slide_h == 12.0
    assert cfg.catchment.ncols == 100 and cfg.catchment.nrows == 60
    assert cfg.truth.mu_true == 1.1
    assert len(cfg.observation.overpass_times(cfg.event)) == 11


def test_mode_controls_mapping_is_fixed():
    assert mode_controls("fr") == (ActiveControls(ks=False, mu=False, dh=False), False)
    assert mode_controls("ida") == (ActiveControls(ks=True, mu=True, dh=False), False)
    assert mode_controls("iwda") == (ActiveControls(ks=True, mu=True, dh=False), True)
    assert mode_controls("ihda") == (ActiveControls(ks=True, mu=True, dh=True), True)


def test_load_config_file_and_overrides(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[catchment]\nncols = 48\n\n[run]\nmembers = 12\nmode = iwda\n")
    cfg = load_config(path, overrides={"run": {"seed": "77"}})
    assert cfg.catchment.ncols == 48
    assert cfg.run.members == 12 and cfg.run.mode == "iwda" and cfg.run.seed == 77
    assert cfg.catchment.nrows == 60      # untouched default


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/exp.ini")


def test_load_config_rejects_unknown_section(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown config section"):
        load_config(path)


def test_load_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[run]\nbogus = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(path)


def test_load_config_rejects_bad_values(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[run]\nmembers = lots\n")
    with pytest.raises(ConfigError, match="bad value"):
        load_config(path)
    path.write_text("[run]\nmode = nonsense\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("[catchment]\nncols = 5\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_dump_config_round_trips(tmp_path):
    cfg = load_config(None, overrides={"run": {"members": "9", "mode": "ihda"},
                                       "event": {"duration_h": "48"}})
    text = dump_config(cfg)
    path = tmp_path / "dumped.ini"
    path.write_text(text)
    back = load_config(path)
    assert config_as_dict(back) == config_as_dict(cfg)


def test_event_double_peak_shape():
    ev = EventSpec(duration_h=48.0, base_flow=300.0,
                   peak1_flow=1500.0, peak1_time_h=12.0, peak1_width=0.25,
                   peak2_flow=1000.0, peak2_time_h=30.0, peak2_width=0.25)
    hyd = ev.build_hydrograph()
    assert hyd.t_start == 0.0 and hyd.t_end == 48 * 3600.0
    q1 = ev.discharge_at(12.0 * 3600.0)
    q2 = ev.discharge_at(30.0 * 3600.0)
    assert q1 == pytest.approx(300.0 + 1500.0, rel=0.05)
    assert q2 == pytest.approx(300.0 + 1000.0, rel=0.05)
    # a dip between the peaks and base flow at the start
    dip = ev.discharge_at(21.0 * 3600.0)
    assert dip < 0.6 * q1 and dip < 0.9 * q2
    assert ev.discharge_at(0.0) == 300.0


def test_event_pulse_peaks_at_nominal_time():
    ev = EventSpec(duration_h=40.0, base_flow=0.0, peak1_flow=100.0,
                   peak1_time_h=10.0, peak1_width=0.2, peak2_flow=0.0)
    t = np.linspace(1.0, 40 * 3600.0, 20000)
    q = ev.discharge_at(t)
    t_peak = t[np.argmax(q)]
    assert t_peak == pytest.approx(10.0 * 3600.0, rel=0.01)
