import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ultratongue.dataio import AudioTrack, ParallelUtterance, UltrasoundRecording
from ultratongue.errors import CorruptionError, FormatError, InputError, SizeError
from ultratongue.features import (
    MfccConfig, compute_delta, compute_mfcc, dct_matrix, decode_matrix, delta_sequence, encode_matrix,
    extract_utterance_features, hz_to_mel, mel_energies, mel_filterbank, mel_to_hz, mfcc_batch,
    read_matrix, utterance_feature_matrix, write_features_csv, write_matrix,
)

CFG = MfccConfig()


def silent_utterance(n_frames=12):
    n = int(n_frames / 82 * 22050) + 300
    rec = UltrasoundRecording(np.zeros((n_frames, 2, 2), np.uint8), 82.0, "sil")
    return ParallelUtterance(rec, AudioTrack(np.zeros(n), 22050, "sil"))


def test_window_is_265_samples():
    assert CFG.window_samples == 265
    assert CFG.feature_dim == 50


def test_mel_scale_round_trip():
    f = np.linspace(0, 11025, 50)
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)
    assert hz_to_mel(1000.0) == pytest.approx(1000.0, abs=0.5)


def test_dct_matrix_is_orthonormal_dct_ii():
    d = dct_matrix(26, 26)
    np.testing.assert_allclose(d @ d.T, np.eye(26), atol=1e-12)
    x = np.random.default_rng(0).normal(size=26)
    direct = [sum(x[n] * np.cos(np.pi * k * (2 * n + 1) / 52) for n in range(26)) for k in range(26)]
    direct = np.array(direct) * np.sqrt(2 / 26)
    direct[0] /= np.sqrt(2)
    np.testing.assert_allclose(d @ x, direct, atol=1e-12)


def test_zero_window_gives_pure_dc():
    c = compute_mfcc(np.zeros(265))
    assert c.shape == (25,)
    assert c[0] == pytest.approx(np.sqrt(26) * np.log(1e-10), rel=1e-12)
    np.testing.assert_allclose(c[1:], 0.0, atol=1e-9)


def brute_force_filter_energies(window, cfg):
    """Triangles evaluated filter by filter, bin by bin."""
    x = np.asarray(window, float)
    y = np.concatenate([[x[0]], x[1:] - cfg.preemphasis * x[:-1]])
    n = len(y)
    y = y * (0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / (n - 1)))
    spec = np.abs(np.fft.rfft(y, cfg.fft_size)) ** 2
    mels = np.linspace(hz_to_mel(0), hz_to_mel(cfg.sample_rate / 2), cfg.n_mels + 2)
    edges = [float(mel_to_hz(m)) for m in mels]
    energies, centers = [], []
    for m in range(cfg.n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        wts = []
        for k in range(len(spec)):
            f = k * cfg.sample_rate / cfg.fft_size
            if lo < f <= mid:
                wts.append((f - lo) / (mid - lo))
            elif mid < f < hi:
                wts.append((hi - f) / (hi - mid))
            else:
                wts.append(0.0)
        wts = np.array(wts)
        energies.append(float(wts @ spec / wts.sum()))
        centers.append(mid)
    return np.array(energies), np.array(centers)


def test_1khz_sine_peaks_in_nearest_filter():
    t = np.arange(265) / 22050
    window = np.sin(2 * np.pi * 1000 * t)
    oracle, centers = brute_force_filter_energies(window, CFG)
    got = mel_energies(window, CFG)[0]
    np.testing.assert_allclose(got, oracle, rtol=1e-10)
    assert np.argmax(got) == np.argmin(np.abs(centers - 1000))


def test_filterbank_rows_sum_to_one():
    w, centers = mel_filterbank(CFG)
    assert w.shape == (26, 257)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diff(centers) > 0)


def test_wrong_window_length_and_nan():
    with pytest.raises(SizeError):
        compute_mfcc(np.zeros(264))
    bad = np.zeros(265)
    bad[3] = np.nan
    with pytest.raises(InputError):
        compute_mfcc(bad)


def test_batch_equals_single():
    rng = np.random.default_rng(1)
    w = rng.uniform(-0.5, 0.5, (6, 265))
    batch = mfcc_batch(w)
    for i in range(6):
        np.testing.assert_allclose(batch[i], compute_mfcc(w[i]), atol=1e-12)


def test_delta_of_constant_is_zero():
    seq = np.tile(np.arange(25.0), (9, 1))
    np.testing.assert_array_equal(delta_sequence(seq), 0.0)


def test_delta_of_ramp_recovers_slope():
    v = np.random.default_rng(2).normal(size=25)
    seq = np.arange(10)[:, None] * v[None]
    for t in range(2, 8):
        np.testing.assert_allclose(compute_delta(seq, t), v, atol=1e-12)


def test_delta_matches_regression_formula():
    rng = np.random.default_rng(3)
    seq = rng.normal(size=(7, 25))
    for t in range(7):
        num = sum(n * (seq[min(t + n, 6)] - seq[max(t - n, 0)]) for n in (1, 2))
        np.testing.assert_allclose(compute_delta(seq, t), num / 10.0, atol=1e-12)


def test_features_per_frame():
    rng = np.random.default_rng(4)
    n_frames = 15
    n = int(n_frames / 82 * 22050) + 300
    rec = UltrasoundRecording(np.zeros((n_frames, 2, 2), np.uint8), 82.0, "a")
    u = ParallelUtterance(rec, AudioTrack(np.round(rng.uniform(-0.3, 0.3, n) * 32768) / 32768, 22050, "a"))
    vecs = extract_utterance_features(u)
    assert len(vecs) == n_frames
    assert all(v.values.shape == (50,) for v in vecs)
    np.testing.assert_array_equal(np.stack([v.values for v in vecs]), utterance_feature_matrix(u))


def test_silence_gives_identical_vectors_and_zero_deltas():
    m = utterance_feature_matrix(silent_utterance())
    expected = compute_mfcc(np.zeros(265))
    for row in m[1:-1]:
        np.testing.assert_allclose(row[:25], expected, atol=1e-12)
        np.testing.assert_allclose(row[25:], 0.0, atol=1e-12)


def test_wrong_sample_rate():
    rec = UltrasoundRecording(np.zeros((2, 2, 2), np.uint8), 82.0, "a")
    u = ParallelUtterance(rec, AudioTrack(np.zeros(16000), 16000, "a"))
    with pytest.raises(InputError):
        utterance_feature_matrix(u)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_matrix_codec_round_trip(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(rng.integers(0, 20), rng.integers(1, 60))) * 10.0 ** rng.integers(-5, 5)
    back = decode_matrix(encode_matrix(m))
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, m)


def test_matrix_file_errors(tmp_path):
    m = np.arange(12.0).reshape(3, 4)
    write_matrix(tmp_path / "m.feat", m)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.feat"), m)
    data = (tmp_path / "m.feat").read_bytes()
    with pytest.raises(CorruptionError):
        decode_matrix(data[:-8])
    with pytest.raises(FormatError):
        decode_matrix(b"NOPE" + data[4:])


def test_features_csv(tmp_path):
    m = np.arange(100.0).reshape(2, 50)
    write_features_csv(tmp_path / "f.csv", m)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert len(lines) == 3
    header = lines[0].split(",")
    assert len(header) == 51 and header[1] == "mfcc0" and header[26] == "delta0"


@pytest.mark.parametrize("k", [0.1, 0.5, 3.0])
def test_gain_only_moves_c0(k):
    rng = np.random.default_rng(5)
    w = rng.uniform(-0.3, 0.3, 265)
    base, scaled = compute_mfcc(w), compute_mfcc(k * w)
    assert scaled[0] - base[0] == pytest.approx(np.sqrt(26) * 2 * np.log(k), abs=1e-9)
    np.testing.assert_allclose(scaled[1:], base[1:], atol=1e-9)


def test_delta_of_reversed_sequence():
    seq = np.random.default_rng(6).normal(size=(12, 25))
    fwd, rev = delta_sequence(seq), delta_sequence(seq[::-1])
    np.testing.assert_allclose(rev[::-1][2:-2], -fwd[2:-2], atol=1e-12)


def test_features_predict_the_latent_linearly():
    from ultratongue.synthetic import corpus_plan, generate_latent, generate_utterance

    xs, gs = [], []
    for _, s, n in corpus_plan(2, 16, (60, 80)):
        xs.append(utterance_feature_matrix(generate_utterance(s, n)))
        gs.append(generate_latent(s, n).values)
    design = [np.hstack([x, np.ones((len(x), 1))]) for x in xs]
    a_tr, g_tr = np.vstack(design[:12]), np.concatenate(gs[:12])
    a_te, g_te = np.vstack(design[12:]), np.concatenate(gs[12:])
    coef = np.linalg.lstsq(a_tr, g_tr, rcond=None)[0]
    resid = g_te - a_te @ coef
    assert 1 - resid.var() / g_te.var() >= 0.8
