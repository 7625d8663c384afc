"""End-to-end acceptance checks, one test per criterion.

The Monte-Carlo ones are slow (minutes each); every seed is fixed so a
rerun reproduces the same numbers.
"""


import numpy as np
import pytest
from scipy.sparse.csgraph import dijkstra
from scipy.stats import binom, norm

from compassqec.analysis import (
    CurvePoint,
    MemoryCurve,
    PointOutcomes,
    fit_abort,
    fit_logical,
    per_round,
    per_round_sigma,
    sweep_cutoff,
    synthetic_curve,
)
from compassqec.circuit import M, build_memory_circuit
from compassqec.decoder import (
    Decoder,
    InfeasibleSyndrome,
    MatchingGraph,
    SoftConfig,
    data_measurements,
    decode_batch,
    exhaustive_min_weight,
    failure_rate,
    joint_table,
    measurement_posteriors,
    ml_oracle,
)
from compassqec.detectors import Detector, DetectorErrorModel, Mechanism, compile_dem, discover_detectors, sample_dem
from compassqec.gmm import GaussianMixture, GMMSet, assignment_error, fit, reweight, synthetic_truth
from compassqec.noise import (
    LeakageParams,
    from_snapshot,
    inhomogeneous_model,
    snapshot_from_model,
    uniform_model,
    with_readout_error,
)
from compassqec.sampler import generate_calibration, sample

from conftest import memory, patch_and_schedule

STATES = {"Z": ("0", "1"), "X": ("+", "-")}


# 1 -------------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["dynamic-compass", "heavy-hex"])
@pytest.mark.parametrize("d", [1, 3, 5])
def test_c1_noiseless_determinism(kind, d):
    quiet = uniform_model(0.0)
    for basis, states in STATES.items():
        for state in states:
            for T in (0, 1, 2, 4, 6):
                prog, ds = memory(kind, d, basis, state, T)
                b = sample(prog, quiet, None, 1000, 17 + T)
                det, _ = ds.evaluate(b.hard)
                assert det.sum() == 0, (kind, d, basis, state, T)
                want = 1 if state in ("1", "-") else 0
                for obs in prog.observables:
                    parity = np.bitwise_xor.reduce(b.hard[:, list(obs)], axis=1)
                    assert (parity == want).all(), (kind, d, basis, state, T)


# 2 -------------------------------------------------------------------------


def _exceedances(a, b, n, k=3.0):
    """Two-sample z scores for firing frequencies a, b estimated from n shots each."""
    s = np.sqrt((a * (1 - a) + b * (1 - b)) / n)
    z = np.where(s > 0, np.abs(a - b) / np.where(s > 0, s, 1.0), np.where(a == b, 0.0, np.inf))
    return z


def test_c2_dem_matches_circuit_sampling():
    prog, ds = memory("dynamic-compass", 3, "Z", "0", 3)
    nm = uniform_model(2e-3)
    n = 100_000
    dem = compile_dem(prog, nm, ds, warn=False)
    det_c, obs_c = ds.evaluate(sample(prog, nm, None, n, 21).hard)
    det_d, obs_d = sample_dem(dem, n, seed=22)
    xc = np.hstack([det_c, obs_c]).astype(np.float64)
    xd = np.hstack([det_d, obs_d]).astype(np.float64)
    iu = np.triu_indices(xc.shape[1], 1)
    marg = _exceedances(xc.mean(0), xd.mean(0), n)
    pair = _exceedances((xc.T @ xc / n)[iu], (xd.T @ xd / n)[iu], n)
    z = np.concatenate([marg, pair])
    # each comparison uses a 3 sigma band; across N comparisons the count
    # outside it must be what chance gives, and no single one may be extreme
    N = len(z)
    rate = 2 * norm.sf(3.0)
    assert (z > 3.0).sum() <= binom.ppf(0.999, N, rate), np.sort(z)[-10:]
    assert z.max() <= norm.isf(0.001 / (2 * N))


# 3 -------------------------------------------------------------------------


def test_c3_matching_weight_is_exact():
    rng = np.random.default_rng(3)
    graphs = []
    for kind, d, basis, T, p in [
        ("dynamic-compass", 3, "Z", 3, 2e-3), ("dynamic-compass", 3, "X", 2, 2e-3),
        ("dynamic-compass", 5, "Z", 2, 1e-3), ("heavy-hex", 3, "X", 3, 2e-3),
    ]:
        prog, ds = memory(kind, d, basis, STATES[basis][0], T)
        g = MatchingGraph.from_dem(compile_dem(prog, uniform_model(p), ds, warn=False))
        graphs.append((g, Decoder(g)))
    done = 0
    for k in range(10_000):
        g, dec = graphs[k % len(graphs)]
        w = g.base_weights
        if k % 2:
            w = g.weights(np.minimum(g.table.p * rng.uniform(0.2, 3.0, len(g.table.p)), 0.5))
        ev = np.sort(rng.choice(g.num_detectors, size=int(rng.integers(1, 13)), replace=False))
        dist = dijkstra(g.csgraph(w), directed=False, indices=np.append(ev, g.boundary))
        D = dist[: len(ev)][:, ev]
        b = dist[-1][ev]
        ref = exhaustive_min_weight(D, b)
        if not np.isfinite(ref):
            with pytest.raises(InfeasibleSyndrome):
                dec.decode(ev, w)
            continue
        got = dec.decode(ev, w).weight
        assert got == pytest.approx(ref, rel=1e-9, abs=1e-12), (k, ev)
        done += 1
    assert done > 9_000


# 4 -------------------------------------------------------------------------


def _toy_dem(rng):
    nd = int(rng.integers(2, 9))
    nobs = int(rng.integers(1, 3))
    mechs = []
    for _ in range(int(rng.integers(1, 21))):
        k = int(rng.integers(1, 3))
        dets = tuple(sorted(rng.choice(nd, size=k, replace=False).tolist()))
        obs = tuple(o for o in range(nobs) if rng.random() < 0.3)
        mechs.append(Mechanism(float(rng.uniform(1e-3, 0.4)), dets, obs, ""))
    return DetectorErrorModel(mechs, [Detector(i, (i,), 0, "") for i in range(nd)], nobs)


def test_c4_matching_never_beats_maximum_likelihood():
    rng = np.random.default_rng(4)
    for k in range(1000):
        dem = _toy_dem(rng)
        table = joint_table(dem)
        dec = Decoder(MatchingGraph.from_dem(dem, readout_slots=False))
        f_mwpm = failure_rate(table, lambda ev: dec.decode(ev).prediction)
        f_ml = failure_rate(table, lambda ev: ml_oracle(dem, ev, table))
        assert f_mwpm >= f_ml - 1e-12, (k, f_mwpm, f_ml)


# 5 -------------------------------------------------------------------------


@pytest.mark.parametrize("basis", ["Z", "X"])
def test_c5_suppression_below_threshold(basis):
    n = 100_000
    nm = uniform_model(5e-4)
    eps, sig = {}, {}
    for d in (3, 5):
        T = 2 * d
        prog, ds = memory("dynamic-compass", d, basis, STATES[basis][0], T)
        g = MatchingGraph.from_dem(compile_dem(prog, nm, ds, warn=False))
        det, obs = ds.evaluate(sample(prog, nm, None, n, 50 + d).hard)
        pl = decode_batch(g, det, obs).logical_error_rate
        eps[d], sig[d] = per_round(pl, T), per_round_sigma(pl, n, T)
    assert eps[3] - eps[5] > 2 * np.hypot(sig[3], sig[5]), (eps, sig)


# 6 -------------------------------------------------------------------------


@pytest.mark.parametrize("sep", [5.0, 6.0, 8.0])
def test_c6_gmm_recovery(sep):
    qubits = list(range(20))
    truth = synthetic_truth(qubits, ("long",), separation=sep, jitter=0.0, seed=int(sep))
    cal = generate_calibration(qubits, "long", truth, 4000, 6)
    rng = np.random.default_rng(int(sep))
    for q, (iq, lab) in cal.items():
        t = truth[(q, "long")]
        g = fit(iq, lab)
        assert np.abs(g.means - t.means).max() < 0.02 * sep
        # calibration prepares every state equally often
        assert np.abs(g.weights - 1 / 3).max() < 0.01
        lab01 = rng.integers(0, 2, 20_000)
        r = reweight(g, t.sample(lab01, rng), tol=1e-6)
        assert r.weights[2] < 1e-3
        assert r.meta["reweight_iterations"] <= 50


# 7 -------------------------------------------------------------------------


def test_c7_soft_data_beats_hard_under_heteroscedastic_readout():
    n, d, T, p = 100_000, 5, 10, 5e-4
    prog, ds = memory("dynamic-compass", d, "Z", "0", T)
    truth = synthetic_truth(prog.qubits, seed=3)
    final = sorted((ins.qubits[0], ins.pulse) for ins in prog.layers[-1] if ins.op == M)
    rng = np.random.default_rng(5)
    noisy = set(rng.choice(len(final), len(final) // 2, replace=False).tolist())
    mix = dict(truth.mixtures)
    for i in noisy:
        g = mix[final[i]]
        mix[final[i]] = GaussianMixture(g.weights, g.means, 10 * g.variances, g.qubit, g.pulse, g.meta)
    truth = GMMSet(mix, "heteroscedastic")

    fitted = {}
    for pulse in ("long", "short"):
        qs = sorted({q for (q, pl) in mix if pl == pulse})
        for q, (iq, lab) in generate_calibration(qs, pulse, truth, 4000, 7).items():
            fitted[(q, pulse)] = fit(iq, lab, qubit=q, pulse=pulse)
    fitted = GMMSet(fitted, "fitted")
    rates = {}
    for k, g in fitted.items():
        rates[k] = float(0.5 * (assignment_error(g, 0, 100_000, 1)[1] + assignment_error(g, 1, 100_000, 2)[0]))

    nm = uniform_model(p)
    graph = MatchingGraph.from_dem(compile_dem(prog, with_readout_error(nm, prog, rates), ds, warn=False))
    b = sample(prog, nm, truth, n, 11)
    det, obs = ds.evaluate(b.hard)
    post = measurement_posteriors(prog, fitted, b.iq)
    dm = data_measurements(prog)
    hard = decode_batch(graph, det, obs, config=SoftConfig("hard"), posteriors=post, data_mask=dm)
    soft = decode_batch(graph, det, obs, config=SoftConfig("soft-data"), posteriors=post, data_mask=dm)
    ph, ps = hard.logical_error_rate, soft.logical_error_rate
    eh, es = per_round(ph, T), per_round(ps, T)
    sigma = np.hypot(per_round_sigma(ph, n, T), per_round_sigma(ps, n, T))
    assert eh - es > 2 * sigma, (eh, es, sigma)


# 8 -------------------------------------------------------------------------


def _flag_probabilities(g: GaussianMixture, cut: float, h: float = 0.02, span: float = 9.0) -> np.ndarray:
    """P(p2 > cut | true level) for levels 0, 1, 2, by quadrature on a fine grid."""
    sd = float(np.sqrt(g.variances.max()))
    lo = g.means.min(0) - span * sd
    hi = g.means.max(0) + span * sd
    step = h * sd
    xs = np.arange(lo[0], hi[0], step)
    ys = np.arange(lo[1], hi[1], step)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], 1)
    sel = g.posterior(pts)[:, 2] > cut
    return np.exp(g.component_logpdf(pts[sel])).sum(0) * step * step


def test_c8_leakage_postselection():
    d, p, leak, cut = 3, 5e-4, 5e-3, 0.5
    Ts = [2, 4, 6, 8]
    n, chunk = 300_000, 16_384
    patch, sched = patch_and_schedule("dynamic-compass", d)
    truth = synthetic_truth(patch.qubits, geometry="equilateral", seed=3)
    nm = uniform_model(p).with_leakage(LeakageParams(per_measurement=leak))
    ro = {(q, pl): leak / 2 for q in patch.qubits for pl in ("long", "short")}
    flags = {k: _flag_probabilities(g, cut) for k, g in truth.items()}

    points, log_acc = {}, []
    for state in ("0", "1"):
        for T in Ts:
            prog = build_memory_circuit(patch, sched, "Z", state, T)
            ds = discover_detectors(prog)
            dec = Decoder(MatchingGraph.from_dem(compile_dem(prog, with_readout_error(uniform_model(p), prog, ro), ds, warn=False)))
            score, wrong = [], []
            for c0 in range(0, n, chunk):
                b = sample(prog, nm, truth, min(chunk, n - c0), 100 + T + 10 * int(state), start_block=c0 // 4096)
                det, obs = ds.evaluate(b.hard)
                score.append(measurement_posteriors(prog, truth, b.iq)[:, :, 2].max(1))
                r = decode_batch(dec.graph, det, obs, decoder=dec)
                wrong.append((r.predicted != r.true).any(1))
            points.setdefault(state, []).append(PointOutcomes(T, np.concatenate(score), np.concatenate(wrong)))
            if state == "0":
                # a measurement is flagged if it leaked and lands in the |2> region,
                # or did not leak and its computational blob tails past the cutoff
                la = 0.0
                for ins in prog.measurements():
                    f0, f1, f2 = flags[(ins.qubits[0], ins.pulse)]
                    la += np.log1p(-(leak * f2 + (1 - leak) * (f0 + f1) / 2))
                log_acc.append(la)
    expected_abort = 1 - np.exp(np.polyfit(Ts, log_acc, 1)[0])

    cuts = [0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 0.99]
    sw = sweep_cutoff(points, cuts, bootstrap=1000, seed=8)
    head = sw.row(cut)
    rows = sw.rows

    gain = rows[0].eps_L - rows[head].eps_L
    assert gain > 2 * sw.step_sigma(0, head), (gain, sw.step_sigma(0, head))

    ab = sw.boot_eps_abort[:, head]
    ab_sigma = np.std(ab[np.isfinite(ab)], ddof=1)
    assert abs(rows[head].eps_abort - expected_abort) < 3 * ab_sigma, (rows[head].eps_abort, expected_abort, ab_sigma)

    # tighter cutoffs abort more and never cost logical error beyond noise
    for i in range(1, len(rows) - 1):
        assert rows[i + 1].eps_abort > rows[i].eps_abort
    for i in range(len(rows) - 1):
        assert rows[i + 1].eps_L - rows[i].eps_L < 2 * sw.step_sigma(i, i + 1), i


# 9 -------------------------------------------------------------------------


def test_c9_fit_correctness():
    cv = synthetic_curve(0.02, 0.03, [1, 2, 4, 6, 8, 10, 12])
    fl = fit_logical(cv, bootstrap=0)
    fa = fit_abort(cv, bootstrap=0)
    assert abs(fl.rate - 0.02) <= 1e-12 * 0.02
    assert abs(fa.rate - 0.03) <= 1e-12 * 0.03

    rng = np.random.default_rng(9)
    Ts, shots, eps, ab = [2, 4, 6, 8], 5000, 0.02, 0.03
    cover_l = cover_a = 0
    for k in range(100):
        pts = []
        for T in Ts:
            acc = int(rng.binomial(shots, (1 - ab) ** T))
            pts.append(CurvePoint(T, shots, acc, int(rng.binomial(acc, (1 - (1 - 2 * eps) ** T) / 2))))
        cv = MemoryCurve.single("Z", pts)
        lo, hi = fit_logical(cv, bootstrap=400, seed=k).ci
        cover_l += lo <= eps <= hi
        lo, hi = fit_abort(cv, bootstrap=400, seed=k).ci
        cover_a += lo <= ab <= hi
    assert cover_l >= 90 and cover_a >= 90, (cover_l, cover_a)


# 10 ------------------------------------------------------------------------


@pytest.mark.parametrize("basis", ["Z", "X"])
def test_c10_baseline_mismatch_ordering(basis):
    n, T = 100_000, 6
    prog, ds = memory("dynamic-compass", 3, basis, STATES[basis][0], T)
    true = inhomogeneous_model(prog, 1e-3, seed=1)
    snap = snapshot_from_model(true, prog)
    det, obs = ds.evaluate(sample(prog, true, None, n, 10).hard)
    wrong = {}
    for name, model in (("characterised", true), ("per-qubit", from_snapshot(snap, "per-qubit")),
                        ("global", from_snapshot(snap, "global"))):
        r = decode_batch(MatchingGraph.from_dem(compile_dem(prog, model, ds, warn=False)), det, obs)
        wrong[name] = (r.predicted != r.true).any(1).astype(np.int64)
    # the three decoders see the same shots, so compare paired differences;
    # no step of the ordering may be reversed beyond 2 sigma; in Z memory the
    # gaps are wide enough that each step must also be resolved at 2 sigma
    for better, worse in (("characterised", "per-qubit"), ("per-qubit", "global")):
        diff = wrong[worse] - wrong[better]
        z = diff.mean() / (diff.std(ddof=1) / np.sqrt(n))
        info = (basis, better, worse, z, {k: v.mean() for k, v in wrong.items()})
        assert z > -2, info
        if basis == "Z":
            assert z > 2, info
