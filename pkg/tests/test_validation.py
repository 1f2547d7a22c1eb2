import csv

import numpy as np
import pytest

from osmosis_adi.grid_image import Image, rrmse
from osmosis_adi.linalg import OracleCapError
from osmosis_adi.operators import canonical_drift
from osmosis_adi.steppers import SchemeConfig, StepSizeError, fe_bound
from osmosis_adi.operators import assemble
from osmosis_adi.validation import (
    BENCH_COLUMNS,
    adi_step_times,
    bench_grid,
    conservation_audit,
    expected_order,
    fit_slope,
    order_study,
    parse_scheme,
    synthetic_pair,
)


@pytest.fixture
def pair(rng):
    return Image(rng.uniform(0.1, 1.0, (6, 7))), canonical_drift(rng.uniform(0.1, 1.0, (6, 7)))


def test_parse_scheme():
    assert parse_scheme("PR") == ("pr", None)
    assert parse_scheme("douglas") == ("douglas", 0.5)
    assert parse_scheme("douglas:1") == ("douglas", 1.0)
    assert parse_scheme("be") == ("be", 1.0)
    with pytest.raises(ValueError):
        parse_scheme("rk4")
    assert expected_order("douglas", 0.5) == 2 and expected_order("be", 1.0) == 1


def test_fit_slope():
    taus = [0.1, 0.2, 0.4]
    assert fit_slope(taus, [t**2 for t in taus]) == pytest.approx(2.0)
    assert fit_slope([0.1], [1e-3]) is None
    # saturated points are dropped
    assert fit_slope(taus + [0.05], [1e-2, 4e-2, 1.6e-1, 1e-13]) == pytest.approx(2.0)
    assert fit_slope(taus, [1e-13] * 3) is None


def test_synthetic_pair_deterministic():
    f1, v1 = synthetic_pair(8, 6, seed=3)
    f2, v2 = synthetic_pair(8, 6, seed=3)
    np.testing.assert_array_equal(v1.data, v2.data)
    assert v1.data.min() > 0 and f1.vector().std() == 0
    assert f1.vector().mean() != v1.vector().mean()


@pytest.mark.parametrize("tau", [0.1, 1.0, 10.0, 100.0])
def test_audit_pr(pair, tau):
    f, d = pair
    rep = conservation_audit(f, d, SchemeConfig("pr", tau=tau, T=50 * tau))
    assert rep.max_mean_drift < 1e-12
    assert rep.steps == 50


def test_audit_fe_rejected(pair):
    f, d = pair
    bound = fe_bound(*assemble(d))
    with pytest.raises(StepSizeError):
        conservation_audit(f, d, SchemeConfig("fe", tau=1.5 * bound, T=10))
    rep = conservation_audit(f, d, SchemeConfig("fe", tau=0.9 * bound, T=100 * bound))
    assert rep.first_negative_step is None and rep.min_value > 0


def test_audit_douglas_monitors_positivity(pair):
    f, d = pair
    rep = conservation_audit(f, d, SchemeConfig("douglas", tau=100, T=5000, theta=0.5))
    assert rep.max_mean_drift < 1e-11
    assert rep.first_negative_step is None or rep.first_negative_step >= 1
    assert np.isfinite(rep.min_value)


def test_order_study_small():
    f, v = synthetic_pair(10, 8)
    res = order_study(f, v, [0.05, 0.1, 0.2], T=2.0,
                      schemes=["pr", "douglas:0.5", "douglas:1", "be"])
    assert res.slopes[("pr", None)] == pytest.approx(2.0, abs=0.15)
    assert res.slopes[("douglas", 0.5)] == pytest.approx(2.0, abs=0.15)
    assert res.slopes[("douglas", 1.0)] == pytest.approx(1.0, abs=0.15)
    assert res.slopes[("be", 1.0)] == pytest.approx(1.0, abs=0.15)
    errs = res.errors("douglas", 1.0)
    # first order: roughly 10x per decade, i.e. 2x per doubling
    assert errs[1] / errs[0] == pytest.approx(2.0, rel=0.1)


def test_order_study_single_tau_and_cap(tmp_path):
    f, v = synthetic_pair(6, 5)
    res = order_study(f, v, [0.1], T=1.0, schemes=["pr"])
    assert res.slopes[("pr", None)] is None and len(res.rows) == 1
    out = tmp_path / "o.csv"
    res.write_csv(out)
    text = out.read_text()
    assert "absent" in text and text.startswith("scheme,theta,tau,rrmse,time_s")
    with pytest.raises(OracleCapError):
        order_study(f, v, [0.1], T=1.0, schemes=["pr"], cap=10)


def test_order_study_files(tmp_path):
    f, v = synthetic_pair(6, 5)
    res = order_study(f, v, [0.1, 1.0, 10.0], T=10.0, schemes=["douglas:1"])
    res.write_csv(tmp_path / "o.csv")
    res.write_loglog(tmp_path / "o.dat")
    rows = list(csv.reader(open(tmp_path / "o.csv")))
    assert [r[2] for r in rows[1:4]] == ["0.1", "1.0", "10.0"]
    assert len(open(tmp_path / "o.dat").read().splitlines()) == 3


def test_bench_grid_schema_and_agreement(tmp_path):
    f, v = synthetic_pair(10, 9)
    table = bench_grid(f, v, [0.1], T=200.0)
    assert all(r["status"] == "ok" for r in table.rows)
    assert len(table.rows) == 7  # bicgstab x2, lu x2, douglas x2, pr
    states = list(table.states.values())
    assert len(states) == 7
    for i in range(7):
        for j in range(i):
            assert rrmse(states[i], states[j]) < 1e-4
    out = tmp_path / "b.csv"
    table.write_csv(out)
    rows = list(csv.DictReader(open(out)))
    assert tuple(rows[0].keys()) == BENCH_COLUMNS
    assert table.lookup("pr", None, 0.1)["p"] == 2
    assert table.lookup("douglas", 1.0, 0.1)["p"] == 1


def test_bench_cell_failure_is_recorded():
    f, v = synthetic_pair(6, 5)
    table = bench_grid(f, v, [1.0], T=2.0, methods=["bicgstab", "pr"], thetas=[1.0], maxiter=1,
                       tol=1e-14)
    status = {r["method"]: r["status"] for r in table.rows}
    assert status["bicgstab"].startswith("error:") and status["pr"] == "ok"


def test_bench_parallel_matches_serial():
    f, v = synthetic_pair(8, 7)
    a = bench_grid(f, v, [0.5, 1.0], T=3.0, methods=["douglas", "pr"])
    b = bench_grid(f, v, [0.5, 1.0], T=3.0, methods=["douglas", "pr"], workers=3)
    assert [r["rrmse"] for r in a.rows] == [r["rrmse"] for r in b.rows]


def test_adi_step_times_shape():
    ns, ts, slope = adi_step_times([8, 16], repeat=1)
    assert ns == [64, 256] and all(t > 0 for t in ts) and np.isfinite(slope)
