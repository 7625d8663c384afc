import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compassqec.analysis import (
    CurvePoint,
    FitError,
    MemoryCurve,
    PointOutcomes,
    curves_to_csv,
    fit_abort,
    fit_logical,
    improvement,
    per_round,
    per_round_sigma,
    survival,
    sweep_cutoff,
    synthetic_curve,
    tradeoff_to_csv,
)


@settings(max_examples=60, deadline=None)
@given(eps=st.floats(1e-6, 0.2), ab=st.floats(0.0, 0.1))
def test_fit_recovers_exact_rates(eps, ab):
    cv = synthetic_curve(eps, ab, [2, 4, 6, 8, 10])
    fl = fit_logical(cv, bootstrap=0)
    fa = fit_abort(cv, bootstrap=0)
    assert abs(fl.rate - eps) <= 1e-12 * max(1, eps) + 1e-14
    assert abs(fa.rate - ab) <= 1e-12
    assert fl.ci is None


def test_survival_limits():
    assert survival(0.0) == 1.0 and survival(0.5) == 0.0
    assert fit_logical(synthetic_curve(0.0, 0.0, [1, 2, 3]), bootstrap=0).rate == 0.0


def test_fit_excludes_saturated_points():
    pts = [CurvePoint(2, 100, 100, 10), CurvePoint(4, 100, 100, 20), CurvePoint(6, 100, 100, 50)]
    r = fit_logical(MemoryCurve.single("Z", pts), bootstrap=0)
    assert r.used == [2, 4] and r.excluded == [6]
    pts[1] = CurvePoint(4, 100, 100, 60)
    with pytest.raises(FitError):
        fit_logical(MemoryCurve.single("Z", pts), bootstrap=0)
    with pytest.raises(FitError):
        fit_abort(MemoryCurve.single("Z", [CurvePoint(2, 10, 5, 0)]), bootstrap=0)


def test_curve_validation():
    with pytest.raises(ValueError):
        CurvePoint(2, 10, 11, 0)
    with pytest.raises(ValueError):
        MemoryCurve.single("Z", [CurvePoint(4, 10, 10, 0), CurvePoint(2, 10, 10, 0)])
    with pytest.raises(ValueError):
        MemoryCurve("Z", {"0": [CurvePoint(2, 1, 1, 0)], "1": [CurvePoint(3, 1, 1, 0)]})


def test_states_are_averaged():
    a = [CurvePoint(t, 1000, 1000, f) for t, f in [(2, 40), (4, 80)]]
    b = [CurvePoint(t, 1000, 1000, f) for t, f in [(2, 60), (4, 100)]]
    cv = MemoryCurve("Z", {"0": a, "1": b})
    assert cv.p_L.tolist() == pytest.approx([0.05, 0.09])


def test_weighted_fit_agrees_on_exact_data():
    cv = synthetic_curve(0.01, 0.02, [2, 4, 8])
    assert fit_logical(cv, weighted=True, bootstrap=0).rate == pytest.approx(0.01, rel=1e-12)
    assert fit_abort(cv, weighted=True, bootstrap=0).rate == pytest.approx(0.02, rel=1e-12)


def test_bootstrap_interval_covers(rng):
    hits = 0
    for k in range(20):
        eps = 0.01
        pts = []
        for T in (2, 4, 6):
            pl = (1 - (1 - 2 * eps) ** T) / 2
            pts.append(CurvePoint(T, 4000, 4000, int(rng.binomial(4000, pl))))
        r = fit_logical(MemoryCurve.single("Z", pts), bootstrap=300, seed=k)
        hits += r.ci[0] <= eps <= r.ci[1]
    assert hits >= 15


def test_per_round_single_point():
    assert per_round(0.0, 5) == 0.0
    assert per_round((1 - 0.98 ** 3) / 2, 3) == pytest.approx(0.01)
    assert per_round(0.6, 3) == 0.5
    with pytest.raises(ValueError):
        per_round(0.1, 0)
    # delta-method sigma vs finite difference
    s = per_round_sigma(0.05, 1e4, 4)
    h = 1e-7
    deriv = (per_round(0.05 + h, 4) - per_round(0.05 - h, 4)) / (2 * h)
    assert s == pytest.approx(deriv * math.sqrt(0.05 * 0.95 / 1e4), rel=1e-5)


def _points(rng, Ts, n=4000, leak=0.02, flip=0.03):
    pts = []
    for T in Ts:
        score = np.where(rng.random(n) < 1 - (1 - leak) ** T, rng.uniform(0.3, 1.0, n), rng.uniform(0, 0.2, n))
        wrong = rng.random(n) < np.where(score > 0.25, 0.3, 1 - (1 - flip) ** T)
        pts.append(PointOutcomes(T, score, wrong))
    return pts


def test_sweep_no_cutoff_row_matches_direct_fit(rng):
    pts = {"0": _points(rng, [2, 4, 6])}
    sw = sweep_cutoff(pts, [0.5, 1.0, 0.25], bootstrap=0)
    assert [r.cutoff for r in sw.rows] == [None, 1.0, 0.5, 0.25]
    cv = MemoryCurve.single("Z", [CurvePoint(p.T, len(p.wrong), len(p.wrong), int(p.wrong.sum())) for p in pts["0"]])
    direct = fit_logical(cv, bootstrap=0).rate
    assert sw.rows[0].eps_L == pytest.approx(direct, rel=1e-12)
    # a cutoff of 1 never aborts
    assert sw.rows[1].eps_L == pytest.approx(direct, rel=1e-12)
    assert sw.rows[1].eps_abort == 0.0
    assert sw.rows[sw.row(0.5)].headline


def test_sweep_abort_rate_monotone(rng):
    pts = {"0": _points(rng, [2, 4, 6]), "1": _points(rng, [2, 4, 6])}
    sw = sweep_cutoff(pts, np.linspace(0.25, 1.0, 12), bootstrap=20, seed=3)
    ab = [r.eps_abort for r in sw.rows[1:]]
    assert all(b >= a - 1e-15 for a, b in zip(ab, ab[1:]))
    assert sw.rows[-1].eps_L < sw.rows[0].eps_L
    assert sw.boot_eps_L.shape == (20, 13)
    assert np.isfinite(sw.step_sigma(0, 5))


def test_sweep_validation(rng):
    pts = {"0": _points(rng, [2, 4])}
    with pytest.raises(ValueError):
        sweep_cutoff(pts, [0.0], bootstrap=0)
    with pytest.raises(ValueError):
        sweep_cutoff({"0": pts["0"][::-1]}, [0.5], bootstrap=0)
    with pytest.raises(ValueError):
        PointOutcomes(2, [0.1, 0.2], [True])


def test_undefined_row_when_everything_aborts():
    pts = {"0": [PointOutcomes(T, np.full(10, 0.9), np.zeros(10)) for T in (2, 4)]}
    sw = sweep_cutoff(pts, [0.5], bootstrap=0)
    assert not sw.rows[1].defined and sw.rows[1].eps_L is None


def test_improvement():
    assert improvement(0.02, 0.015) == pytest.approx(25.0)
    assert math.isnan(improvement(0.0, 0.1))


def test_csv_outputs():
    cv = synthetic_curve(0.01, 0.0, [2, 4], shots=100)
    text = curves_to_csv({"hard": cv}, {"seed": 1})
    lines = text.splitlines()
    assert lines[0] == "# seed: 1"
    assert lines[1] == "name,basis,state,T,shots,accepted,failures"
    assert lines[2].startswith("hard,Z,0,2,100,100,")
    rng = np.random.default_rng(0)
    sw = sweep_cutoff({"0": _points(rng, [2, 4], n=500)}, [0.5], bootstrap=10)
    t = tradeoff_to_csv(sw.rows).splitlines()
    assert t[0].startswith("cutoff,eps_L,eps_abort")
    assert t[1].startswith("none,") and t[2].startswith("0.5,") and t[2].endswith(",1,1")
