import numpy as np
import pytest
from oracles import cw_ssim_direct, ssim_direct

from ultratongue.eigentongue import fit_basis, project_many, reconstruct_many
from ultratongue.errors import ContractError, SizeError, ValidationError
from ultratongue.imaging import RAW255, UNIT, Frame
from ultratongue.metrics import (
    METRICS, PAIRINGS, CwSsimParams, SsimParams, aggregate, all_metrics, cw_ssim, cw_ssim_batch,
    cw_ssim_from_coefficients, format_table, mse, mse_batch, read_frame_csv, ssim, ssim_batch,
    utterance_curves, write_frame_csv, write_summary_csv,
)
from ultratongue.pyramid import decompose, subband_filters
from ultratongue.synthetic import generate_latent, latent_frames
from ultratongue.imaging import resize_stack


def rand_frame(seed, shape=(64, 64)):
    return Frame(np.random.default_rng(seed).uniform(0, 255, shape))


def test_mse_cases():
    f = rand_frame(0)
    assert mse(f, f) == 0.0
    a = np.full((64, 64), 10.0)
    assert mse(Frame(a), Frame(a + 1)) == 1.0
    g = rand_frame(1)
    direct = sum((f.pixels[i, j] - g.pixels[i, j]) ** 2 for i in range(64) for j in range(64)) / 4096
    assert mse(f, g) == pytest.approx(direct, abs=1e-9)


def test_mismatched_inputs_are_contract_errors():
    with pytest.raises(ContractError):
        mse(Frame(np.zeros((4, 4))), Frame(np.zeros((4, 5))))
    with pytest.raises(ContractError):
        mse(Frame(np.zeros((4, 4))), Frame(np.zeros((4, 4)), UNIT))


def test_ssim_matches_windowed_oracle():
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = rng.uniform(0, 255, (16, 16))
        y = np.clip(x + rng.normal(0, 40, x.shape), 0, 255)
        assert ssim(Frame(x), Frame(y)) == pytest.approx(ssim_direct(x, y), abs=1e-9)


def test_ssim_general_exponent_path_agrees_with_simplified_form():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 255, (20, 20))
    y = np.clip(x + rng.normal(0, 30, x.shape), 0, 255)
    near_one = SsimParams(alpha=1.0, beta=1.0, gamma=1.0 + 1e-13)
    assert ssim(Frame(x), Frame(y), near_one) == pytest.approx(ssim(Frame(x), Frame(y)), abs=1e-9)


def test_ssim_black_vs_white():
    p = SsimParams()
    expected = p.c1 / (255.0 ** 2 + p.c1)
    assert expected == pytest.approx(1.0e-4, rel=0.01)
    got = ssim(Frame(np.zeros((16, 16))), Frame(np.full((16, 16), 255.0)))
    assert got == pytest.approx(expected, rel=1e-12)


def test_ssim_window_larger_than_frame():
    with pytest.raises(SizeError):
        ssim(Frame(np.zeros((10, 10))), Frame(np.zeros((10, 10))))


def test_bad_params():
    with pytest.raises(ValidationError):
        SsimParams(alpha=0)
    with pytest.raises(ValidationError):
        CwSsimParams(k=0)


def test_cw_ssim_toy_subband():
    rng = np.random.default_rng(4)
    cx = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    cy = cx * np.exp(0.3j) + 0.2 * (rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))
    got = cw_ssim_from_coefficients(cx, cy, 7, 0.01)
    assert isinstance(got, float)
    assert got == pytest.approx(cw_ssim_direct(cx, cy, 7, 0.01), abs=1e-9)
    # a global phase rotation leaves the index unchanged
    assert cw_ssim_from_coefficients(cx, cx * np.exp(1.1j)) == pytest.approx(1.0, abs=1e-12)


def test_cw_ssim_averages_subbands_and_frames():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(2, 3, 9, 9)) + 1j * rng.normal(size=(2, 3, 9, 9))
    b = a + rng.normal(size=a.shape)
    got = cw_ssim_from_coefficients(a, b)
    assert got.shape == (2,)
    for n in range(2):
        expected = np.mean([cw_ssim_direct(a[n, s], b[n, s]) for s in range(3)])
        assert got[n] == pytest.approx(expected, abs=1e-12)


def test_identities_on_random_frames():
    rng = np.random.default_rng(6)
    x = rng.uniform(0, 255, (10, 64, 64))
    m = all_metrics(x, x)
    np.testing.assert_array_equal(m[:, 0], 0.0)
    np.testing.assert_allclose(m[:, 1], 1.0, atol=1e-9)
    np.testing.assert_allclose(m[:, 2], 1.0, atol=1e-6)


def test_cw_ssim_too_small():
    with pytest.raises(SizeError):
        cw_ssim(Frame(np.zeros((12, 12))), Frame(np.zeros((12, 12))))


def ridge_frames(n, seed):
    g = generate_latent(seed, n).values
    raw = latent_frames(g, np.random.default_rng(seed), noise=0.6)
    return resize_stack(raw, 64, 64)


def test_small_shift_hurts_cw_ssim_less_than_ssim():
    frames = ridge_frames(6, 7)
    for axis in (1, 2):
        shifted = np.roll(frames, 2, axis=axis)
        s = ssim_batch(frames, shifted)
        c = cw_ssim_batch(frames, shifted)
        assert np.all(1 - c < 1 - s)


def test_batch_equals_single_frame_calls():
    x, y = ridge_frames(3, 8), ridge_frames(3, 9)
    m = all_metrics(x, y)
    for i in range(3):
        fx, fy = Frame(x[i]), Frame(y[i])
        np.testing.assert_allclose(m[i], [mse(fx, fy), ssim(fx, fy), cw_ssim(fx, fy)], atol=1e-12)
    # (N, 4096) rows are accepted as well
    np.testing.assert_array_equal(all_metrics(x.reshape(3, -1), y.reshape(3, -1)), m)


def test_pyramid_filters_are_analytic_and_translation_equivariant():
    filt = subband_filters((32, 32), 2, 4)
    assert filt.shape == (8, 32, 32)
    assert np.all(filt[:, 0, 0] == 0)  # no DC response
    fy = np.fft.fftfreq(32)[:, None]
    fx = np.fft.fftfreq(32)[None, :]
    for k in range(4):
        theta = np.pi * k / 4
        opposite = (fx * np.cos(theta) + fy * np.sin(theta)) < -1e-12
        assert np.all(filt[k][opposite] == 0)
    img = np.random.default_rng(10).uniform(0, 255, (32, 32))
    np.testing.assert_allclose(decompose(np.roll(img, 3, axis=1)), np.roll(decompose(img), 3, axis=-1), atol=1e-9)
    with pytest.raises(SizeError):
        decompose(np.zeros((15, 15)), 2)


@pytest.fixture(scope="module")
def small_basis():
    rng = np.random.default_rng(11)
    x = ridge_frames(80, 12).reshape(80, -1)
    return fit_basis(x + rng.normal(0, 1, x.shape), 10), x


def test_curves_perfect_pca_prediction(small_basis):
    basis, x = small_basis
    orig = x[:5]
    pca = reconstruct_many(project_many(orig, basis), basis)
    curves = utterance_curves(orig, pca, basis)
    assert set(curves) == set(PAIRINGS)
    np.testing.assert_allclose(curves["PCA_rec"], [[0.0, 1.0, 1.0]] * 5, atol=1e-9)
    np.testing.assert_allclose(curves["O_rec"], curves["O_PCA"], atol=1e-12)


def test_o_pca_independent_of_prediction_and_beats_mean_image(small_basis):
    basis, x = small_basis
    orig = x[:8]
    a = utterance_curves(orig, np.clip(orig[::-1], 0, 255), basis)
    mean_pred = np.repeat(np.clip(basis.mean, 0, 255)[None], 8, axis=0)
    b = utterance_curves(orig, mean_pred, basis)
    np.testing.assert_array_equal(a["O_PCA"], b["O_PCA"])
    assert b["O_PCA"][:, 1].mean() >= b["O_rec"][:, 1].mean()
    with pytest.raises(ContractError):
        utterance_curves(orig, orig[:3], basis)


def test_aggregate_statistics():
    rows = np.array([[1.0, 0.70, 0.5], [3.0, 0.74, 0.7]])
    rep = aggregate(rows, "sys")
    s = rep.summary()
    assert s["ssim"][0] == pytest.approx(0.72) and s["ssim"][1] == pytest.approx(0.02)
    assert set(s) == set(METRICS) and all(len(v) == 2 for v in s.values())
    single = aggregate({"u": rows[:1]})
    np.testing.assert_array_equal(single.std, 0.0)
    with pytest.raises(ContractError):
        aggregate({})


def test_table_layout():
    rep = aggregate({"a": np.array([[100.0, 0.7, 0.8]]), "b": np.array([[120.0, 0.74, 0.82]])}, "x")
    text = format_table([("2 x 1000 units", "128 ETs", rep), ("5 x 5000 units", "128 ETs", rep)])
    lines = text.splitlines()
    assert len(lines) == 5
    assert [c.strip() for c in lines[0].split("|")] == ["Hidden Layers", "UTI features", "MSE", "MSE", "SSIM",
                                                         "SSIM", "CW-SSIM", "CW-SSIM"]
    assert [c.strip() for c in lines[1].split("|")][2:] == ["Mean", "Std.dev."] * 3
    assert [c.strip() for c in lines[3].split("|")] == ["2 x 1000 units", "128 ETs", "110.00", "10.00",
                                                        "0.7200", "0.0200", "0.8100", "0.0100"]


def test_csv_round_trip_and_summary_consistency(tmp_path):
    rng = np.random.default_rng(13)
    curves = {uid: {p: rng.uniform(0, 1, (n, 3)) for p in PAIRINGS} for uid, n in (("u1", 4), ("u2", 7))}
    write_frame_csv(tmp_path / "f.csv", curves)
    back = read_frame_csv(tmp_path / "f.csv")
    for uid in curves:
        for p in PAIRINGS:
            np.testing.assert_array_equal(back[uid][p], curves[uid][p])
    rep = aggregate({u: c["O_rec"] for u, c in back.items()}, "s")
    write_summary_csv(tmp_path / "s.csv", [("h", "f", rep)])
    text = (tmp_path / "s.csv").read_text().splitlines()
    assert len(text) == 4
    mean_ssim = float(text[2].split(",")[5])
    assert mean_ssim == np.concatenate([curves["u1"]["O_rec"][:, 1], curves["u2"]["O_rec"][:, 1]]).mean()


def test_symmetry_and_bounds():
    rng = np.random.default_rng(14)
    for _ in range(5):
        a = rng.uniform(0, 255, (1, 32, 32))
        b = np.clip(a + rng.normal(0, 60, a.shape), 0, 255)
        assert mse_batch(a, b)[0] == mse_batch(b, a)[0]
        s_ab, s_ba = ssim_batch(a, b)[0], ssim_batch(b, a)[0]
        assert s_ab == pytest.approx(s_ba, abs=1e-12) and abs(s_ab) <= 1 + 1e-9
        assert cw_ssim_batch(a, b)[0] == pytest.approx(cw_ssim_batch(b, a)[0], abs=1e-12)
