import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodtwin.catchment import FloodplainZone
from floodtwin.observations import FloodExtentMap, WsrObservation, wsr_of_depth
from floodtwin.verification import (CAT_CORRECT_NEGATIVE, CAT_FALSE_ALARM,
                                    CAT_HIT, CAT_INVALID, CAT_MISS,
                                    ContingencyCounts, contingency, csi, kappa,
                                    rmse, wsr_misfit_series)


def brute_force_counts(sim, obs_wet, valid):
    """Independent per-cell tally."""
    tp = fn = fp = tn = 0
    for s, o, v in zip(sim.ravel(), obs_wet.ravel(), valid.ravel()):
        if not v:
            continue
        if s and o:
            tp += 1
        elif (not s) and o:
            fn += 1
        elif s and not o:
            fp += 1
        else:
            tn += 1
    return ContingencyCounts(tp=tp, fn=fn, fp=fp, tn=tn)


# --------------------------------------------------------------------------- #
# rmse                                                                         #
# --------------------------------------------------------------------------- #


def test_rmse_identical_series_is_zero():
    x = np.array([1.0, 2.0, 3.0])
    assert rmse(x, x) == 0.0


def test_rmse_constant_offset():
    x = np.zeros(10)
    assert rmse(x + 0.1, x) == pytest.approx(0.1, rel=1e-12)


def test_rmse_hand_value():
    assert rmse(np.array([1.0, 2.0, 3.0]), np.array([1.0, 1.0, 3.0])) == \
        pytest.approx(np.sqrt(1.0 / 3.0), rel=1e-12)


def test_rmse_errors():
    with pytest.raises(ValueError):
        rmse(np.array([]), np.array([]))
    with pytest.raises(ValueError):
        rmse(np.array([1.0]), np.array([1.0, 2.0]))


# --------------------------------------------------------------------------- #
# contingency                                                                  #
# --------------------------------------------------------------------------- #


def test_contingency_perfect_agreement():
    rng = np.random.default_rng(0)
    wet = rng.uniform(size=(6, 6)) < 0.4
    ext = FloodExtentMap(time=0.0, wet_mask=wet,
                         valid_mask=np.ones((6, 6), dtype=bool))
    _, counts = contingency(wet, ext)
    assert counts.fp == 0 and counts.fn == 0
    assert counts.tp == int(wet.sum())


def test_contingency_all_wet_vs_all_dry():
    sim = np.ones((2, 2), dtype=bool)
    ext = FloodExtentMap(time=0.0, wet_mask=np.zeros((2, 2), dtype=bool),
                         valid_mask=np.ones((2, 2), dtype=bool))
    _, counts = contingency(sim, ext)
    assert counts.fp == 4 and counts.tp == counts.fn == counts.tn == 0


def test_contingency_matches_brute_force_tally():
    rng = np.random.default_rng(42)
    for _ in range(50):
        sim = rng.uniform(size=(4, 4)) < 0.5
        obs_wet = rng.uniform(size=(4, 4)) < 0.5
        valid = rng.uniform(size=(4, 4)) < 0.85
        obs_wet &= valid
        ext = FloodExtentMap(time=0.0, wet_mask=obs_wet, valid_mask=valid)
        cat, counts = contingency(sim, ext)
        assert counts == brute_force_counts(sim, obs_wet, valid)
        assert counts.total == int(valid.sum())
        assert np.all((cat == CAT_INVALID) == ~valid)


def test_contingency_category_codes():
    sim = np.array([[True, False], [True, False]])
    obs_wet = np.array([[True, True], [False, False]])
    ext = FloodExtentMap(time=0.0, wet_mask=obs_wet,
                         valid_mask=np.ones((2, 2), dtype=bool))
    cat, _ = contingency(sim, ext)
    assert cat[0, 0] == CAT_HIT
    assert cat[0, 1] == CAT_MISS
    assert cat[1, 0] == CAT_FALSE_ALARM
    assert cat[1, 1] == CAT_CORRECT_NEGATIVE


def test_contingency_grid_mismatch():
    ext = FloodExtentMap(time=0.0, wet_mask=np.zeros((2, 2), dtype=bool),
                         valid_mask=np.ones((2, 2), dtype=bool))
    with pytest.raises(ValueError, match="mismatch"):
        contingency(np.zeros((3, 3), dtype=bool), ext)


# --------------------------------------------------------------------------- #
# csi / kappa                                                                  #
# --------------------------------------------------------------------------- #


def test_csi_perfect():
    assert csi(ContingencyCounts(tp=5, fn=0, fp=0, tn=10)) == 1.0


def test_csi_hand_value():
    assert csi(ContingencyCounts(tp=9, fn=3, fp=6, tn=0)) == 0.5


def test_csi_no_overlap():
    assert csi(ContingencyCounts(tp=0, fn=4, fp=3, tn=2)) == 0.0


def test_csi_undefined_when_nothing_wet():
    assert csi(ContingencyCounts(tp=0, fn=0, fp=0, tn=9)) is None


def test_kappa_perfect_agreement():
    assert kappa(ContingencyCounts(tp=4, fn=0, fp=0, tn=12)) == pytest.approx(1.0)


def test_kappa_zero_case_exact():
    # simulated all wet, observed wet on exactly half: p_o = p_e = 1/2
    counts = ContingencyCounts(tp=8, fn=0, fp=8, tn=0)
    assert kappa(counts) == 0.0


def test_kappa_undefined_when_chance_agreement_is_one():
    assert kappa(ContingencyCounts(tp=9, fn=0, fp=0, tn=0)) is None
    assert kappa(ContingencyCounts(tp=0, fn=0, fp=0, tn=9)) is None


def test_kappa_independent_masks_near_zero():
    rng = np.random.default_rng(11)
    n = 400
    sim = rng.uniform(size=(n, n)) < 0.3
    obs = rng.uniform(size=(n, n)) < 0.5
    ext = FloodExtentMap(time=0.0, wet_mask=obs,
                         valid_mask=np.ones((n, n), dtype=bool))
    _, counts = contingency(sim, ext)
    k = kappa(counts)
    assert abs(k) < 0.01      # Monte-Carlo: chance-level agreement


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 40), st.integers(0, 40), st.integers(0, 40),
       st.integers(0, 40))
def test_score_ranges(tp, fn, fp, tn):
    c = ContingencyCounts(tp=tp, fn=fn, fp=fp, tn=tn)
    if tp + fn + fp > 0:
        assert 0.0 <= csi(c) <= 1.0
    if c.total > 0:
        k = kappa(c)
        if k is not None:
            assert -1.0 <= k <= 1.0 + 1e-12
        if fp == 0 and fn == 0 and tp > 0 and tn > 0:
            assert k == pytest.approx(1.0)


def test_scores_invariant_under_cell_relabeling():
    rng = np.random.default_rng(3)
    sim = rng.uniform(size=(5, 5)) < 0.5
    obs = rng.uniform(size=(5, 5)) < 0.5
    ext = FloodExtentMap(time=0.0, wet_mask=obs,
                         valid_mask=np.ones((5, 5), dtype=bool))
    _, c1 = contingency(sim, ext)
    perm = rng.permutation(25)
    sim_p = sim.ravel()[perm].reshape(5, 5)
    obs_p = obs.ravel()[perm].reshape(5, 5)
    ext_p = FloodExtentMap(time=0.0, wet_mask=obs_p,
                           valid_mask=np.ones((5, 5), dtype=bool))
    _, c2 = contingency(sim_p, ext_p)
    assert csi(c1) == csi(c2) and kappa(c1) == kappa(c2)


# --------------------------------------------------------------------------- #
# wsr_misfit_series                                                            #
# --------------------------------------------------------------------------- #


def make_zones():
    m1 = np.zeros((6, 6), dtype=bool)
    m1[:3] = True
    m2 = ~m1
    return [FloodplainZone(1, m1, float(m1.sum())),
            FloodplainZone(2, m2, float(m2.sum()))]


def test_misfit_zero_for_perfect_sim():
    zones = make_zones()
    snaps = {3600.0: np.full((6, 6), 0.2)}
    obs = [WsrObservation(3600.0, z.zone_id,
                          wsr_of_depth(snaps[3600.0], z), 0.05) for z in zones]
    misfits = wsr_misfit_series(snaps, obs, zones)
    assert all(m == 0.0 for series in misfits.values() for _, m in series)


def test_misfit_positive_when_sim_drier():
    zones = make_zones()
    snaps = {3600.0: np.zeros((6, 6))}
    obs = [WsrObservation(3600.0, 1, 0.4, 0.05), WsrObservation(3600.0, 2, 0.7, 0.05)]
    misfits = wsr_misfit_series(snaps, obs, zones)
    assert misfits[1][0][1] == 0.4 and misfits[2][0][1] == 0.7


def test_misfit_equals_direct_subtraction():
    zones = make_zones()
    rng = np.random.default_rng(9)
    h = rng.uniform(0, 0.1, (6, 6))
    snaps = {900.0: h}
    obs = [WsrObservation(900.0, 1, 0.55, 0.05)]
    misfits = wsr_misfit_series(snaps, obs, zones)
    assert misfits[1] == [(900.0, 0.55 - wsr_of_depth(h, zones[0]))]


def test_misfit_missing_snapshot_errors():
    zones = make_zones()
    with pytest.raises(ValueError, match="snapshot"):
        wsr_misfit_series({}, [WsrObservation(900.0, 1, 0.5, 0.05)], zones)
