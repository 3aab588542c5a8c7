import numpy as np
import pytest
from sklearn.base import clone

from emcdma.channel import LinkParams, make_layout, realize_channel, transmit
from emcdma.ira import encode
from emcdma.receiver import IterativeReceiver, ReceiverMode, rake_combine, run_frame
from emcdma.scenarios import ScenarioConfig
from emcdma.simulate import generate_frame
from emcdma.waveform import qpsk_map, spread


def noiseless_frame(code, rng):
    msg = rng.integers(0, 2, code.K, dtype=np.uint8)
    layout = make_layout(code.N // 2, 40, 40, 1e-5)
    params = LinkParams(Es=1.0, N0=1e-12, g=31, users=1, f_d=200.0)
    real = realize_channel(params, layout, int(rng.integers(2**31)))
    chips = spread(qpsk_map(encode(msg, code)), real.p_R, real.p_I)
    return msg, transmit(chips, real, int(rng.integers(2**31))), real


def test_perfect_csi_noiseless_exits_first_iteration(code_2000, rng):
    msg, rx, real = noiseless_frame(code_2000, rng)
    bits, diag = run_frame(rx, real, code_2000, ReceiverMode("perfect"))
    np.testing.assert_array_equal(bits, msg)
    assert diag.rx_iters == 1 and diag.parity == [True]


@pytest.mark.parametrize("est", ["blind_I", "blind_II"])
def test_blind_noiseless_decodes(code_2000, rng, est):
    msg, rx, real = noiseless_frame(code_2000, rng)
    bits, diag = run_frame(rx, real, code_2000, ReceiverMode(est))
    np.testing.assert_array_equal(bits, msg)
    assert diag.parity[-1]


def test_mode_validation():
    for kw in (dict(estimation="oracle"), dict(adaptivity="half"), dict(phase="maybe"), dict(fingers=0)):
        with pytest.raises(ValueError):
            ReceiverMode(**kw)


def test_frame_length_mismatch(code_2000, code_2200, rng):
    _, rx, real = noiseless_frame(code_2000, rng)
    with pytest.raises(ValueError):
        run_frame(rx, real, code_2200, ReceiverMode("perfect"))


def test_too_many_fingers(code_2000, rng):
    _, rx, real = noiseless_frame(code_2000, rng)
    with pytest.raises(ValueError, match="fingers"):
        run_frame(rx, real, code_2000, ReceiverMode("perfect", fingers=3))


# --- Rake ----------------------------------------------------------------------------

def test_rake_single_finger_is_scaled_matched_filter(rng):
    y = rng.normal(size=10) + 1j * rng.normal(size=10)
    C, I0 = 0.5 + 0.5j, 0.2
    u, Ceff, eff = rake_combine([y], [(C, I0)])
    np.testing.assert_allclose(u, np.conj(C) / I0 * y)
    np.testing.assert_allclose(eff, abs(C) ** 2 / I0)


def test_rake_noiseless_identical_fingers_triple(rng):
    x = qpsk_map(rng.integers(0, 2, 20, dtype=np.uint8))
    C, I0 = 0.7 * np.exp(0.2j), 0.1
    u1, _, e1 = rake_combine([C * x], [(C, I0)])
    u3, _, e3 = rake_combine([C * x] * 3, [(C, I0)] * 3)
    np.testing.assert_allclose(u3, 3 * u1)
    np.testing.assert_allclose(e3, 3 * e1)


def test_rake_output_snr_is_sum_of_finger_snrs():
    rng = np.random.default_rng(3)
    n = 200_000
    x = qpsk_map(rng.integers(0, 2, 2 * n, dtype=np.uint8))
    Cs = [1.0, 0.6j, 0.4 - 0.2j]
    I0s = [0.5, 0.3, 0.8]
    ys = [C * x + np.sqrt(I0 / 2) * (rng.normal(size=n) + 1j * rng.normal(size=n)) for C, I0 in zip(Cs, I0s)]
    u, _, eff = rake_combine(ys, list(zip(Cs, I0s)))
    snr = np.abs(eff) ** 2 / np.var(u - eff * x)
    expected = sum(abs(C) ** 2 / I0 for C, I0 in zip(Cs, I0s))
    assert snr == pytest.approx(expected, rel=0.03)


def test_rake_requires_matching_lists():
    with pytest.raises(ValueError):
        rake_combine([], [])
    with pytest.raises(ValueError):
        rake_combine([np.ones(2)], [])


# --- receiver behaviour on simulated frames -------------------------------------------

def _cfg(**kw):
    base = dict(case="C", estimation="blind_I", trials=1, ebno_db=(8.0,), seed=5)
    base.update(kw)
    return ScenarioConfig(**base)


def test_partial_equals_full_with_true_noise_level():
    # one user: the partially adaptive receiver pins I0 at N0, which is the truth,
    # so with perfect CSI it matches the full receiver that starts at the truth
    cfg = _cfg(case="perfect", estimation="perfect")
    msg, rx, real, code = generate_frame(cfg, 6.0, 0)
    assert np.allclose(real.I0_blocks, real.N0)
    full, _ = run_frame(rx, real, code, ReceiverMode("perfect", "full"))
    part, _ = run_frame(rx, real, code, ReceiverMode("perfect", "partial"))
    np.testing.assert_array_equal(full, part)


def test_early_exit_does_not_change_decoded_frame():
    cfg = _cfg()
    for trial in range(3):
        msg, rx, real, code = generate_frame(cfg, 9.0, trial)
        a, da = run_frame(rx, real, code, cfg.mode, early_exit=True)
        b, db = run_frame(rx, real, code, cfg.mode, early_exit=False)
        assert db.rx_iters == 9
        if da.parity[-1]:
            # a valid codeword stays put under further iterations
            np.testing.assert_array_equal(a, b)


def test_paired_perfect_csi_no_worse_than_estimated():
    errs = {"perfect": 0, "blind_I": 0}
    for est, case in (("perfect", "perfect"), ("blind_I", "C")):
        cfg = _cfg(case=case, estimation=est)
        for trial in range(15):
            msg, rx, real, code = generate_frame(cfg, 6.0, trial)
            bits, _ = run_frame(rx, real, code, cfg.mode)
            errs[est] += int(np.count_nonzero(bits != msg))
    assert errs["perfect"] <= errs["blind_I"]


def test_diagnostics_trace_record():
    cfg = _cfg(estimation="blind_II")
    msg, rx, real, code = generate_frame(cfg, 5.0, 1)
    _, diag = run_frame(rx, real, code, cfg.mode, trace=True, early_exit=False)
    assert len(diag.em_iters) == diag.rx_iters - 1 == len(diag.C_traj)
    assert all(1 <= i <= 10 for i in diag.em_iters)
    rec = diag.to_record()
    assert isinstance(rec["C_traj"][0][0], list) and len(rec["parity"]) == diag.rx_iters


def test_rake_receiver_runs():
    cfg = _cfg(g=127, fingers=3, estimation="blind_II", ebno_db=(10.0,))
    msg, rx, real, code = generate_frame(cfg, 10.0, 0)
    assert len(rx) == 3
    bits, diag = run_frame(rx, real, code, cfg.mode)
    assert np.mean(bits != msg) < 0.05


def test_estimator_interface(code_2000):
    r = IterativeReceiver(estimation="perfect", j_max=5)
    assert clone(r).get_params()["j_max"] == 5
    cfg = _cfg(case="perfect", estimation="perfect")
    msg, rx, real, code = generate_frame(cfg, 12.0, 0)
    bits = r.fit(code).predict(rx, real)
    assert bits.shape == msg.shape and r.diagnostics_.rx_iters <= 5
    with pytest.raises(TypeError):
        IterativeReceiver().fit("not a code")


def test_unknown_phase_mode_runs():
    cfg = _cfg(case="pace", estimation="pace", phase="unknown", ebno_db=(12.0,))
    msg, rx, real, code = generate_frame(cfg, 12.0, 0)
    bits, _ = run_frame(rx, real, code, cfg.mode)
    assert np.mean(bits != msg) < 0.05
