import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodtwin.catchment import FloodplainZone
from floodtwin.observations import (FloodExtentMap, GaugeObservation, NoiseSpec,
                                    WsrObservation, depth_to_extent,
                                    predict_observations, read_extent_map,
                                    read_gauge_obs_csv, read_wsr_obs_csv,
                                    synthesize_observations, write_extent_map,
                                    write_gauge_obs_csv, write_wsr_obs_csv,
                                    wsr_of_depth, wsr_of_extent)
from floodtwin.solver import GaugeSeries, WindowResult


def make_zone(mask):
    mask = np.asarray(mask, dtype=bool)
    return FloodplainZone(zone_id=1, cell_mask=mask, area=float(mask.sum()))


def grid_zone(n=10):
    return make_zone(np.ones((n, n), dtype=bool))


# --------------------------------------------------------------------------- #
# wsr_of_depth                                                                 #
# --------------------------------------------------------------------------- #


def test_wsr_all_wet():
    zone = grid_zone()
    h = np.full((10, 10), 0.10)
    assert wsr_of_depth(h, zone, 0.05) == 1.0


def test_wsr_all_dry():
    zone = grid_zone()
    assert wsr_of_depth(np.zeros((10, 10)), zone, 0.05) == 0.0


def test_wsr_brute_force_count():
    zone = grid_zone()
    h = np.zeros((10, 10))
    h.ravel()[:30] = 0.06
    expected = sum(1 for v in h.ravel() if v >= 0.05) / 100
    assert wsr_of_depth(h, zone, 0.05) == expected == 0.30


def test_wsr_threshold_is_inclusive():
    zone = make_zone(np.ones((2, 2), dtype=bool))
    h = np.full((2, 2), 0.05)
    assert wsr_of_depth(h, zone, 0.05) == 1.0


def test_wsr_empty_zone_errors():
    zone = make_zone(np.zeros((3, 3), dtype=bool))
    with pytest.raises(ValueError, match="empty"):
        wsr_of_depth(np.zeros((3, 3)), zone)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 16 - 1), st.integers(0, 2 ** 16 - 1))
def test_wsr_bounded_and_monotone(bits, extra_bits):
    h = (np.array([(bits >> k) & 1 for k in range(16)], dtype=np.float64)
         .reshape(4, 4) * 0.2)
    zone = make_zone(np.ones((4, 4), dtype=bool))
    w = wsr_of_depth(h, zone, 0.05)
    assert 0.0 <= w <= 1.0
    # adding water anywhere never decreases the ratio
    add = (np.array([(extra_bits >> k) & 1 for k in range(16)], dtype=np.float64)
           .reshape(4, 4) * 0.3)
    assert wsr_of_depth(h + add, zone, 0.05) >= w


# --------------------------------------------------------------------------- #
# wsr_of_extent                                                                #
# --------------------------------------------------------------------------- #


def test_extent_wsr_all_wet():
    zone = grid_zone(4)
    wet = np.ones((4, 4), dtype=bool)
    ext = FloodExtentMap(time=0.0, wet_mask=wet, valid_mask=wet.copy())
    assert wsr_of_extent(ext, zone) == 1.0


def test_extent_wsr_normalizes_by_valid_count():
    zone = grid_zone(4)
    valid = np.zeros((4, 4), dtype=bool)
    valid[:2] = True
    ext = FloodExtentMap(time=0.0, wet_mask=valid.copy(), valid_mask=valid)
    assert wsr_of_extent(ext, zone) == 1.0


def test_extent_wsr_brute_force():
    zone = make_zone(np.ones((5, 8), dtype=bool))
    valid = np.ones((5, 8), dtype=bool)
    wet = np.zeros((5, 8), dtype=bool)
    wet.ravel()[:12] = True
    ext = FloodExtentMap(time=0.0, wet_mask=wet, valid_mask=valid)
    count = sum(1 for w, v in zip(wet.ravel(), valid.ravel()) if w and v)
    assert wsr_of_extent(ext, zone) == count / 40 == 0.30


def test_extent_wsr_fully_invalid_zone_errors():
    zone = grid_zone(3)
    ext = FloodExtentMap(time=0.0, wet_mask=np.zeros((3, 3), dtype=bool),
                         valid_mask=np.zeros((3, 3), dtype=bool))
    with pytest.raises(ValueError, match="valid"):
        wsr_of_extent(ext, zone)


def test_threshold_consistency_between_operators():
    rng = np.random.default_rng(5)
    h = rng.uniform(0.0, 0.12, size=(12, 12))
    zone = make_zone(rng.uniform(size=(12, 12)) < 0.6)
    ext = depth_to_extent(h, time=0.0, wet_threshold=0.05)
    assert wsr_of_extent(ext, zone) == wsr_of_depth(h, zone, 0.05)


def test_extent_map_invariant_wet_implies_valid():
    wet = np.ones((2, 2), dtype=bool)
    with pytest.raises(ValueError, match="valid"):
        FloodExtentMap(time=0.0, wet_mask=wet, valid_mask=np.zeros((2, 2), dtype=bool))


# --------------------------------------------------------------------------- #
# synthesize_observations                                                      #
# --------------------------------------------------------------------------- #


def make_truth(n=6, n_times=5, seed=0):
    rng = np.random.default_rng(seed)
    times = np.arange(n_times) * 900.0
    gauges = {"upstream": GaugeSeries("upstream", times, rng.normal(10, 1, n_times)),
              "middle": GaugeSeries("middle", times, rng.normal(8, 1, n_times))}
    snaps = {1800.0: rng.uniform(0, 0.2, (n, n)), 3600.0: rng.uniform(0, 0.2, (n, n))}
    return WindowResult(state=None, gauge_records=gauges, snapshots=snaps)


def make_stations():
    from floodtwin.catchment import GaugeStation
    return [GaugeStation("upstream", 0), GaugeStation("middle", 1)]


def test_synthesize_noiseless_equals_truth():
    truth = make_truth()
    zones = [make_zone(np.ones((6, 6), dtype=bool))]
    g, w, ext = synthesize_observations(truth, make_stations(), zones,
                                        [1800.0, 3600.0],
                                        NoiseSpec(sigma_wl=0.0, sigma_wsr=0.0),
                                        seed=1)
    for o in g:
        series = truth.gauge_records[o.station]
        k = list(series.times).index(o.time)
        assert o.eta_obs == series.eta[k]
    for o in w:
        assert o.wsr == wsr_of_extent(ext[[1800.0, 3600.0].index(o.time)], zones[0])
        assert o.sigma > 0        # stated sigma stays positive even when noiseless


def test_synthesize_deterministic_per_seed():
    truth = make_truth()
    zones = [make_zone(np.ones((6, 6), dtype=bool))]
    a = synthesize_observations(truth, make_stations(), zones, [1800.0],
                                NoiseSpec(), seed=7)
    b = synthesize_observations(truth, make_stations(), zones, [1800.0],
                                NoiseSpec(), seed=7)
    assert [o.eta_obs for o in a[0]] == [o.eta_obs for o in b[0]]
    assert [o.wsr for o in a[1]] == [o.wsr for o in b[1]]
    c = synthesize_observations(truth, make_stations(), zones, [1800.0],
                                NoiseSpec(), seed=8)
    assert [o.eta_obs for o in a[0]] != [o.eta_obs for o in c[0]]


def test_synthesize_noise_sample_statistics():
    # 10^5 gauge draws: sample std within 2% of sigma
    n_times = 100_000
    times = np.arange(n_times) * 900.0
    eta = np.full(n_times, 5.0)
    truth = WindowResult(state=None,
                         gauge_records={"upstream": GaugeSeries("upstream", times, eta)},
                         snapshots={})
    from floodtwin.catchment import GaugeStation
    g, _, _ = synthesize_observations(truth, [GaugeStation("upstream", 0)], [],
                                      [], NoiseSpec(sigma_wl=0.05), seed=3)
    errors = np.array([o.eta_obs for o in g]) - 5.0
    assert abs(errors.std() - 0.05) / 0.05 < 0.02
    assert abs(errors.mean()) < 0.001


def test_synthesize_missing_snapshot_errors():
    truth = make_truth()
    zones = [make_zone(np.ones((6, 6), dtype=bool))]
    with pytest.raises(ValueError, match="snapshot"):
        synthesize_observations(truth, make_stations(), zones, [999.0],
                                NoiseSpec(), seed=1)


def test_synthesize_wsr_clipped_to_unit_interval():
    truth = make_truth()
    zones = [make_zone(np.ones((6, 6), dtype=bool))]
    _, w, _ = synthesize_observations(truth, make_stations(), zones,
                                      [1800.0, 3600.0],
                                      NoiseSpec(sigma_wl=0.0, sigma_wsr=5.0),
                                      seed=2)
    assert all(0.0 <= o.wsr <= 1.0 for o in w)


# --------------------------------------------------------------------------- #
# predict_observations                                                         #
# --------------------------------------------------------------------------- #


def test_predict_empty_batch():
    member = make_truth()
    assert predict_observations(member, [], []).shape == (0,)


def test_predict_matches_truth_when_member_is_truth():
    truth = make_truth()
    zones = [make_zone(np.ones((6, 6), dtype=bool))]
    g, w, _ = synthesize_observations(truth, make_stations(), zones,
                                      [1800.0, 3600.0],
                                      NoiseSpec(sigma_wl=0.0, sigma_wsr=0.0),
                                      seed=1)
    batch = list(g) + list(w)
    predicted = predict_observations(truth, zones, batch)
    target = np.array([o.eta_obs if isinstance(o, GaugeObservation) else o.wsr
                       for o in batch])
    assert np.array_equal(predicted, target)


def test_predict_single_wsr_equals_direct_operator():
    member = make_truth()
    zones = [make_zone(np.ones((6, 6), dtype=bool))]
    obs = WsrObservation(time=1800.0, zone_id=1, wsr=0.5, sigma=0.05)
    predicted = predict_observations(member, zones, [obs])
    assert predicted[0] == wsr_of_depth(member.snapshots[1800.0], zones[0])


def test_predict_preserves_batch_order():
    member = make_truth()
    zones = [make_zone(np.ones((6, 6), dtype=bool))]
    g1 = GaugeObservation(time=900.0, station="middle", eta_obs=0.0, sigma=0.1)
    w1 = WsrObservation(time=3600.0, zone_id=1, wsr=0.5, sigma=0.05)
    g2 = GaugeObservation(time=0.0, station="upstream", eta_obs=0.0, sigma=0.1)
    predicted = predict_observations(member, zones, [g1, w1, g2])
    assert predicted[0] == member.gauge_records["middle"].eta[1]
    assert predicted[2] == member.gauge_records["upstream"].eta[0]


def test_predict_missing_diagnostic_names_observation():
    member = make_truth()
    zones = [make_zone(np.ones((6, 6), dtype=bool))]
    with pytest.raises(ValueError, match="station='middle'.*t=12345"):
        predict_observations(member, zones,
                             [GaugeObservation(12345.0, "middle", 0.0, 0.1)])
    with pytest.raises(ValueError, match="zone=1.*t=7777"):
        predict_observations(member, zones,
                             [WsrObservation(7777.0, 1, 0.5, 0.05)])


# --------------------------------------------------------------------------- #
# file formats                                                                 #
# --------------------------------------------------------------------------- #


def test_gauge_obs_csv_round_trip(tmp_path):
    obs = [GaugeObservation(900.0 * k, "upstream", 5.0 + 0.1 * k, 0.05)
           for k in range(5)]
    path = tmp_path / "gauge_obs.csv"
    write_gauge_obs_csv(path, obs)
    assert read_gauge_obs_csv(path) == obs
    header = path.read_text().splitlines()[0]
    assert header == "time_s,station,eta_m,sigma_m"


def test_wsr_obs_csv_round_trip(tmp_path):
    obs = [WsrObservation(3600.0, z, 0.25 * z / 5, 0.05) for z in range(1, 6)]
    path = tmp_path / "wsr_obs.csv"
    write_wsr_obs_csv(path, obs)
    assert read_wsr_obs_csv(path) == obs
    assert path.read_text().splitlines()[0] == "time_s,zone,wsr,sigma"


def test_extent_map_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    valid = rng.uniform(size=(7, 5)) < 0.8
    wet = valid & (rng.uniform(size=(7, 5)) < 0.5)
    ext = FloodExtentMap(time=1800.0, wet_mask=wet, valid_mask=valid)
    path = tmp_path / "extent.asc"
    write_extent_map(path, ext, cell_size=50.0)
    back = read_extent_map(path, time=1800.0)
    assert np.array_equal(back.wet_mask, wet)
    assert np.array_equal(back.valid_mask, valid)
