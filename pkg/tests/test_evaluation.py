import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gbtrack.core import GroundBounceSurface
from gbtrack.evaluation import (
    Alarm,
    PrescreenConfig,
    bias_variance,
    prescreen,
    roc,
    score_map,
    windowed_auc,
)
from gbtrack.simulator import Mine, SimConfig, simulate


def surf(a):
    return GroundBounceSurface(np.asarray(a, dtype=np.float64), 415)


# ------------------------------------------------------------ bias / variance


def test_identity_and_offset():
    t = surf(np.random.default_rng(0).integers(50, 90, (4, 30)))
    e = bias_variance(t, t)
    assert (e.bias, e.variance, e.rmse, e.n_cells) == (0, 0, 0, 120)
    e = bias_variance(surf(t.gb + 2), t)
    assert e.bias == 2 and e.variance == 0 and e.rmse == 2


def test_known_values_population_variance():
    truth = surf(np.zeros((1, 4)) + 50)
    est = surf([[50, 52, 50, 52]])
    e = bias_variance(est, truth)
    assert e.bias == 1 and e.variance == 1  # population, not n-1
    assert bias_variance(est, truth, start_scan=2).n_cells == 2


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        bias_variance(surf(np.zeros((2, 5))), surf(np.zeros((3, 5))))
    with pytest.raises(ValueError):
        bias_variance(surf(np.zeros((2, 5))), surf(np.zeros((2, 5))), start_scan=5)


# ------------------------------------------------------------ prescreener


@pytest.fixture(scope="module")
def mine_volume():
    cfg = SimConfig(seed=3, noise_sigma=0.05, n_scans=400, surface_sigma=0.5, mines=[Mine(10, 200)])
    v, truth, _ = simulate(cfg)
    return v, truth


def test_gb_only_scores_stay_at_noise_level():
    v, truth, _ = simulate(SimConfig(seed=3, noise_sigma=0.05, n_scans=400, surface_sigma=0.5))
    s = score_map(v, truth)
    assert 0.8 < np.median(s) < 1.2
    assert s.max() < 2.0
    alarms = prescreen(v, truth)
    assert not [a for a in alarms if a.score > 2.0]


def test_mine_is_top_alarm(mine_volume):
    v, truth = mine_volume
    top = prescreen(v, truth)[0]
    assert max(abs(top.ch - 10), abs(top.dt - 200)) <= 2


def test_alarms_sorted_and_local_maxima(mine_volume):
    v, truth = mine_volume
    alarms = prescreen(v, truth)
    scores = [a.score for a in alarms]
    assert scores == sorted(scores, reverse=True)
    s = score_map(v, truth)
    assert all(a.score >= np.percentile(s, 90) for a in alarms)
    for a in alarms[:20]:
        nb = s[max(a.ch - 1, 0):a.ch + 2, max(a.dt - 1, 0):a.dt + 2]
        assert a.score == nb.max()


def test_wrong_surface_hurts_prescreening(mine_volume):
    v, truth = mine_volume
    good = score_map(v, truth)
    bg = np.zeros(good.shape, bool)
    bg[:, 170:231] = True
    bg[7:14, 190:211] = False

    # too deep: the window misses the mine
    deep = truth.gb.copy()
    deep[:, 170:231] += 30
    assert score_map(v, surf(deep))[10, 200] < good[10, 200]

    # too shallow: the GB itself leaks into the window
    shallow = truth.gb.copy()
    shallow[:, 170:231] -= 30
    bad = score_map(v, surf(shallow))
    assert np.median(bad[bg]) > 2 * np.median(good[bg])
    contrast = lambda s: s[7:14, 190:211].max() / np.median(s[bg])
    assert contrast(bad) < contrast(good)
    top = prescreen(v, surf(shallow))[0]
    assert max(abs(top.ch - 10), abs(top.dt - 200)) > 2


def test_prescreen_shape_check(mine_volume):
    v, _ = mine_volume
    with pytest.raises(ValueError):
        score_map(v, surf(np.zeros((3, 3))))


def test_prescreen_config_validation():
    for kw in ({"depth_window": 0}, {"guard": 60}, {"percentile": 101}, {"noise_window": -1},
               {"neighbourhood": 0}):
        with pytest.raises(ValueError):
            PrescreenConfig(**kw)


# ------------------------------------------------------------ ROC


def test_perfect_detector():
    mines = [(2, 10), (5, 50), (8, 90)]
    alarms = [Alarm(c, d, 10.0 + i) for i, (c, d) in enumerate(mines)]
    alarms += [Alarm(0, 200 + 10 * i, 1.0 - 0.01 * i) for i in range(20)]
    r = roc(alarms, mines, halo=0, area_m2=100.0)
    assert r.auc_window == pytest.approx(0.02)
    assert np.all(r.pd[r.far > 0] == 1.0)
    assert r.pd[r.far == 0].tolist() == [1 / 3, 2 / 3, 1.0]


def test_alarms_equal_truth_single_point():
    mines = [(3, 40), (7, 80)]
    r = roc([Alarm(c, d, 1.0) for c, d in mines], mines, halo=0)
    assert r.points.tolist() == [[0.0, 1.0]]
    assert r.auc_window == pytest.approx(0.02)


def test_no_mines_is_degenerate():
    r = roc([Alarm(0, 0, 1.0), Alarm(1, 1, 0.5)], [], area_m2=10)
    assert r.degenerate and np.all(r.pd == 0) and r.auc_window == 0
    assert r.far.tolist() == [0.1, 0.2]


def test_one_detection_per_mine_and_repeat_alarms_ignored():
    mines = [(5, 50)]
    alarms = [Alarm(5, 50, 3.0), Alarm(5, 52, 2.0), Alarm(0, 300, 1.0)]
    r = roc(alarms, mines, halo=3, area_m2=1.0)
    assert r.n_false_alarms == 1
    assert r.points.tolist() == [[0, 1], [0, 1], [1, 1]]


def test_nearest_free_mine_is_credited():
    mines = [(5, 50), (5, 54)]
    r = roc([Alarm(5, 53, 2.0), Alarm(5, 49, 1.0)], mines, halo=5)
    assert r.pd.tolist() == [0.5, 1.0] and r.n_false_alarms == 0


def test_tied_scores_form_one_point():
    r = roc([Alarm(0, 0, 1.0), Alarm(0, 10, 1.0), Alarm(0, 20, 0.5)], [(9, 9)], halo=0)
    assert r.far.tolist() == [2, 3]
    assert r.thresholds.tolist() == [1.0, 0.5]


def test_roc_validation():
    with pytest.raises(ValueError):
        roc([], [(0, 0)], area_m2=0)
    with pytest.raises(ValueError):
        roc([], [(0, 0)], halo=-1)


def test_windowed_auc_hand_values():
    # implicit start at (0, 0), rises linearly to pd 1 at far 0.01, flat after
    assert windowed_auc(np.array([[0.01, 1.0]])) == pytest.approx(0.015)
    # points past the window are cut by interpolation at 0.02
    pts = np.array([[0.0, 0.0], [0.04, 1.0]])
    assert windowed_auc(pts) == pytest.approx(0.5 * 0.02 * 0.5)
    # vertical step exactly at the window edge keeps the higher pd
    assert windowed_auc(np.array([[0.0, 0.5], [0.02, 0.5], [0.02, 1.0]])) == pytest.approx(0.01)
    assert windowed_auc(np.empty((0, 2))) == 0.0


# ------------------------------------------------------------ properties


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 30)),
              elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 30)),
              elements=st.floats(-1e3, 1e3)))
@settings(max_examples=200)
def test_rmse_identity(a, b):
    if a.shape != b.shape:
        b = np.resize(b, a.shape)
    e = bias_variance(a, b)  # plain arrays: values may leave any depth range
    assert e.variance >= 0
    assert e.rmse**2 == pytest.approx(e.variance + e.bias**2, rel=1e-9, abs=1e-9)
