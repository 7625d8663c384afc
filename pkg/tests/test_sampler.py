import json
import re

import numpy as np
import pytest
from scipy.stats import norm, poisson

from compassqec.circuit import LONG, M, PREP_Z, SHORT, CircuitProgram, Instruction
from compassqec.gmm import synthetic_truth
from compassqec.noise import LeakageParams, MeasurementNoise, NoiseModel, load_characterised, uniform_model
from compassqec.sampler import BLOCK, ShotBatch, generate_calibration, sample

from conftest import memory, patch_and_schedule


def _one_measurement(pulse=LONG):
    return CircuitProgram(((Instruction(PREP_Z, (0,)),), (Instruction(M, (0,), 0, pulse),)))


@pytest.mark.parametrize("kind", ["dynamic-compass", "heavy-hex"])
@pytest.mark.parametrize("basis,state", [("Z", "1"), ("X", "+")])
def test_noiseless_shots_are_quiet(kind, basis, state):
    prog, ds = memory(kind, 3, basis, state, 3)
    # blobs far enough apart that IQ classification never errs
    truth = synthetic_truth(prog.qubits, separation=40.0, leak_offset=40.0, seed=1)
    b = sample(prog, uniform_model(0.0), truth, 200, 3)
    det, obs = ds.evaluate(b.hard)
    assert not det.any() and not obs.any() and not b.obs_flips.any()
    assert set(np.unique(b.truth)) <= {0, 1}


def test_injected_data_error_flips_two_z_detectors():
    patch, _ = patch_and_schedule("dynamic-compass", 5)
    prog, ds = memory("dynamic-compass", 5, "Z", "0", 3)
    q = 90
    assert q in patch.data_qubits
    layer = prog.measurement_layers()[1] + 2  # first gate layer of round two
    model = load_characterised(json.dumps([{"layer": layer, "op": "IDLE", "qubits": [q], "channel": {"X": 1.0}}]))
    det, obs = ds.evaluate(sample(prog, model, None, 8, 0).hard)
    assert (det == det[0]).all() and not obs.any()
    fired = [ds.detectors[i] for i in np.nonzero(det[0])[0]]
    assert len(fired) == 2
    # stabiliser-propagation oracle: the Z stabilisers whose support holds q
    holding = []
    for group in patch.z_stabilizers:
        support = set()
        for cid in group:
            support ^= set(patch.check(cid).data)
        if q in support:
            holding.append(set(group))
    assert len(holding) == 2
    hit = []
    for d in fired:
        zs = set(re.findall(r"Z\d+", d.check))
        assert zs, d.check
        hit.append(next(k for k, g in enumerate(holding) if zs & g))
        assert d.t == 1
    assert sorted(hit) == [0, 1]


def test_reproducible_and_block_split():
    prog, _ = memory()
    truth = synthetic_truth(prog.qubits, seed=2)
    nm = uniform_model(2e-3).with_leakage(LeakageParams(per_measurement=0.01))
    a = sample(prog, nm, truth, BLOCK + 50, 9)
    b = sample(prog, nm, truth, BLOCK + 50, 9)
    assert np.array_equal(a.hard, b.hard) and np.array_equal(a.truth, b.truth)
    assert np.array_equal(a.iq, b.iq)
    tail = sample(prog, nm, truth, 50, 9, start_block=1)
    assert np.array_equal(a.hard[BLOCK:], tail.hard)
    c = sample(prog, nm, truth, 100, 10)
    assert not np.array_equal(a.hard[:100], c.hard)


def test_shapes_and_metadata():
    prog, _ = memory()
    b = sample(prog, uniform_model(1e-3), synthetic_truth(prog.qubits, seed=1), 37, 1)
    assert b.hard.shape == b.truth.shape == (37, prog.num_measurements)
    assert b.iq.shape == (37, prog.num_measurements, 2)
    assert b.program_digest == prog.digest()
    assert b.obs_flips.shape == (37, 1)


def test_bad_shot_count():
    with pytest.raises(ValueError):
        sample(_one_measurement(), uniform_model(0.0), None, 0, 1)


def test_marginal_flip_rate():
    p, q, n = 0.03, 0.05, 1_000_000
    model = NoiseModel("global", {}, {("any",): MeasurementNoise(pre=p, classical=q)})
    b = sample(_one_measurement(), model, None, n, 123)
    want = p * (1 - q) + q * (1 - p)
    got = b.hard[:, 0].mean()
    assert abs(got - want) < 4 * np.sqrt(want * (1 - want) / n)
    # truth reflects only the pre-flip
    t = b.truth[:, 0].mean()
    assert abs(t - p) < 4 * np.sqrt(p * (1 - p) / n)


def test_no_leakage_no_level_two():
    prog, _ = memory("dynamic-compass", 3, "Z", "0", 2)
    b = sample(prog, uniform_model(5e-3), None, 1_000_000 // prog.num_measurements + 1, 4)
    assert b.truth.size >= 1_000_000
    assert not (b.truth == 2).any()


def test_leakage_monotone():
    prog = _one_measurement(SHORT)
    fracs = []
    for lk in (0.0, 0.005, 0.02):
        nm = uniform_model(0.0).with_leakage(LeakageParams(per_measurement=lk))
        fracs.append((sample(prog, nm, None, 100_000, 5).truth == 2).mean())
    assert fracs[0] == 0.0
    assert fracs[0] <= fracs[1] <= fracs[2]
    assert fracs[2] == pytest.approx(0.02, rel=0.1)


def test_leaked_readout_is_random_and_reset_clears():
    prog, _ = memory("dynamic-compass", 3, "Z", "0", 2)
    lk = 0.05
    nm = uniform_model(0.0).with_leakage(LeakageParams(per_measurement=lk))
    b = sample(prog, nm, None, 20_000, 6)
    leaked = b.truth == 2
    assert leaked.mean() == pytest.approx(lk, rel=0.05)
    assert b.hard[leaked].mean() == pytest.approx(0.5, abs=0.02)
    # resets after every measurement layer make leaks independent across rounds
    first = prog.measurement_layers()[0]
    m0 = [i.meas for i in prog.layers[first]]
    m1 = [i.meas for i in prog.layers[prog.measurement_layers()[2]]]
    shared = [(a, b_) for a, b_ in zip(m0, m1)]
    x = leaked[:, [a for a, _ in shared]].ravel()
    y = leaked[:, [b_ for _, b_ in shared]].ravel()
    assert y[x].mean() == pytest.approx(lk, abs=0.02)


def test_calibration_dataset():
    truth = synthetic_truth([3, 4], seed=0)
    cal = generate_calibration([3, 4], "long", truth, 4000, 1)
    for q in (3, 4):
        iq, labels = cal[q]
        assert iq.shape == (12000, 2)
        assert list(labels[:4000]) == [0] * 4000
        assert list(labels[4000:8000]) == [1] * 4000 and list(labels[8000:]) == [2] * 4000
    with pytest.raises(ValueError):
        generate_calibration([3], "long", truth, 0, 1)


def test_calibration_with_coincident_means_succeeds():
    truth = synthetic_truth([0], separation=0.0, leak_offset=0.0, jitter=0.0, seed=0)
    iq, labels = generate_calibration([0], "short", truth, 100, 1)[0]
    assert iq.shape == (300, 2) and np.isfinite(iq).all()


def test_ten_sigma_separation_classifies_cleanly():
    truth = synthetic_truth([0], separation=10.0, jitter=0.0, geometry="equilateral", seed=0)
    g = truth[(0, "long")]
    dist = np.sqrt(((g.means[:, None] - g.means[None]) ** 2).sum(-1))
    assert dist[~np.eye(3, dtype=bool)] == pytest.approx(10.0)
    # a point crosses a bisector only by a 5 sigma excursion towards a neighbour
    bound = 2 * norm.sf(5.0)
    assert bound < 1e-6
    iq, labels = generate_calibration([0], "long", truth, 400_000, 2)[0]
    d2 = ((iq[:, None, :] - g.means[None]) ** 2).sum(-1)
    errors = int((d2.argmin(1) != labels).sum())
    assert errors <= poisson.ppf(0.999, bound * len(labels))


def test_shot_file_round_trip(tmp_path):
    prog, _ = memory()
    b = sample(prog, uniform_model(1e-3), synthetic_truth(prog.qubits, seed=1), 25, 1)
    path = tmp_path / "b.shots"
    b.save(str(path))
    back = ShotBatch.load(str(path))
    assert np.array_equal(back.hard, b.hard) and np.array_equal(back.truth, b.truth)
    assert np.array_equal(back.iq, b.iq) and back.seed == b.seed
    assert back.program_digest == b.program_digest
    assert b.to_csv().count("\n") >= 25
    both = ShotBatch.concat([b.select(np.arange(10)), b.select(np.arange(10, 25))])
    assert np.array_equal(both.hard, b.hard)
