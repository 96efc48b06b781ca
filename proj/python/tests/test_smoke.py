import math

import numpy as np
import pytest

import sparse_da

TINY = """
[experiment]
name = tiny
filters = kf; letkf; mc
ne = 6
truths = 1
workers = 1
[grid]
nx = 12
ny = 8
dx = 0.3
dy = 0.3
[advdiff]
bump_x = 1.8
bump_y = 1.2
[observations]
sites = 0 0; 5 3; 9 6
interval = 4
count = 2
[diagnostics]
diq_points = 0 0; 1.5 0.9
"""


def test_presets_listed():
    names = sparse_da.preset_names()
    assert {"advdiff-verify", "swe-drift", "swe-rankhist"} <= set(names)
    assert "ne = 50" in sparse_da.render_preset("advdiff-verify")


def test_metrics():
    assert sparse_da.rmse(np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(5.0)
    assert sparse_da.fcd(np.eye(2), np.zeros((2, 2))) == pytest.approx(math.sqrt(2))
    assert sparse_da.crps(np.array([[0.0, 2.0]]), np.array([1.0]), 1) == pytest.approx(0.5)
    assert sparse_da.gaspari_cohn(0.0, 1.0) == 1.0
    assert sparse_da.gaspari_cohn(2.0, 1.0) == 0.0
    rng = np.random.default_rng(1)
    assert sparse_da.d_iq(0.0, 1.0, list(rng.normal(size=20000))) < 1e-3


def test_rank_histogram_flat():
    rng = np.random.default_rng(2)
    counts, p = sparse_da.rank_histogram(rng.normal(size=(5000, 9)), rng.normal(size=5000))
    assert len(counts) == 10
    assert sum(counts) == 5000
    assert p > 0.001


def test_run_is_reproducible():
    a = sparse_da.run("advdiff-verify", TINY)
    b = sparse_da.run("advdiff-verify", TINY)
    assert not a["errors"]
    assert a["config_hash"] == b["config_hash"]
    names = {m["name"] for m in a["metrics"]}
    assert {"letkf.rmse", "mc.rmse", "kf.coverage"} <= names
    va = [m["values"] for m in a["metrics"]]
    vb = [m["values"] for m in b["metrics"]]
    assert va == vb


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        sparse_da.run("no-such-preset")
    with pytest.raises(ValueError):
        sparse_da.run("advdiff-verify", "[experiment]\nbogus = 1\n")
