import numpy as np
import pytest

from analysis.csv_utils import read_matrix, read_rows
from analysis.entropy import entropy_histogram, entropy_stats, local_entropy
from analysis.features import analyze, export_features
from analysis.spectra import dct2, fft_log_magnitude, high_freq_ratio, spectra, spectra_from_arrays
from analysis.texture import kde, silverman_bandwidth, texture_kde, texture_kde_from_values, texture_richness
from detector.s2f_net import build_model
from training.train_loop import predict_records


def _checkerboard(size, low=0, high=255):
    rows, cols = np.indices((size, size))
    return np.where((rows + cols) % 2, high, low)


def test_dct_of_constant_image_is_dc_only():
    coefficients = dct2(np.full((6, 8), 3.0))
    assert coefficients[0, 0] == pytest.approx(3.0 * 48)
    coefficients[0, 0] = 0
    np.testing.assert_allclose(coefficients, 0.0, atol=1e-10)


def test_dct_matches_direct_sum():
    rng = np.random.default_rng(0)
    x = rng.random((4, 5))
    m, n = np.arange(4)[:, None], np.arange(5)[None, :]
    for k in range(4):
        for l in range(5):
            expected = np.sum(x * np.cos(np.pi * (2 * m + 1) * k / 8) * np.cos(np.pi * (2 * n + 1) * l / 10))
            assert dct2(x)[k, l] == pytest.approx(expected, abs=1e-10)


def test_fft_log_magnitude_is_point_symmetric_about_center():
    magnitude = fft_log_magnitude(np.random.default_rng(1).random((8, 8)))
    for u in range(-3, 4):
        for v in range(-3, 4):
            assert magnitude[4 + u, 4 + v] == pytest.approx(magnitude[4 - u, 4 - v], abs=1e-12)


def test_high_freq_ratio_extremes():
    assert high_freq_ratio(np.full((8, 8), 5.0)) == pytest.approx(0.0, abs=1e-12)
    assert high_freq_ratio(np.zeros((8, 8))) == 0.0
    assert high_freq_ratio(_checkerboard(8, -1, 1).astype(float)) == pytest.approx(1.0)


def test_spectra_crop_to_common_size():
    report = spectra_from_arrays([np.zeros((10, 12)), np.ones((8, 16))], ['a', 'b'])
    assert report.fft_log_magnitude.shape == (8, 12)
    assert report.count == 2
    with pytest.raises(ValueError):
        spectra_from_arrays([], [])


def test_spectra_of_directory(tmp_path, image_dir):
    report = spectra(image_dir, workers=2)
    assert report.count == 2
    assert report.summaries[0].path.endswith('a_noise.png')
    assert report.summaries[1].high_freq_ratio == pytest.approx(0.0, abs=1e-12)
    assert report.summaries[0].high_freq_ratio > 0.0
    report.write(tmp_path / 'out')
    assert read_matrix(tmp_path / 'out' / 'dct_magnitude.csv').shape == (64, 64)
    assert len(read_rows(tmp_path / 'out' / 'spectra_summary.csv')) == 2


def test_local_entropy_constant_and_checkerboard():
    np.testing.assert_array_equal(local_entropy(np.full((12, 12), 40), window=9), 0.0)
    board = local_entropy(_checkerboard(20), window=9)
    # 41 of one level and 40 of the other
    p = 41 / 81
    expected = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    np.testing.assert_allclose(board[4:-4, 4:-4], expected, rtol=1e-12)
    assert expected == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(ValueError):
        local_entropy(np.zeros((4, 4)), window=4)
    with pytest.raises(ValueError):
        local_entropy(np.full((4, 4), 300), window=3)


def test_local_entropy_matches_brute_force():
    rng = np.random.default_rng(2)
    gray = rng.integers(0, 6, (7, 9))
    result = local_entropy(gray, window=3)
    padded = np.pad(gray, 1, mode='edge')
    for i in range(7):
        for j in range(9):
            _, counts = np.unique(padded[i:i + 3, j:j + 3], return_counts=True)
            p = counts / 9
            assert result[i, j] == pytest.approx(-np.sum(p * np.log2(p)), abs=1e-12)


def test_entropy_histogram_density_integrates_to_one(tmp_path, image_dir):
    stats = entropy_stats(image_dir, window=5, bins=16, workers=2)
    assert stats.images == 2
    assert stats.pixels == 2 * 64 * 64
    assert sum(stats.counts) == stats.pixels
    widths = np.diff(stats.edges)
    assert np.sum(np.asarray(stats.density) * widths) == pytest.approx(1.0)
    assert stats.edges[-1] == pytest.approx(np.log2(25))
    assert len(read_rows(stats.write(tmp_path / 'entropy_hist.csv'))) == 16
    assert entropy_histogram([np.zeros((2, 2))], window=3, bins=4).counts == [4, 0, 0, 0]


def test_kde_integrates_to_one_and_matches_direct_sum():
    values = np.array([1.0, 2.0, 2.5, 7.0])
    result = texture_kde_from_values(values, ['a', 'b', 'c', 'd'])
    density, grid = np.asarray(result.density), np.asarray(result.grid)
    assert np.sum(np.diff(grid) * (density[1:] + density[:-1]) / 2) == pytest.approx(1.0, abs=1e-3)
    h = result.bandwidth
    assert h == pytest.approx(1.06 * values.std(ddof=1) * 4 ** -0.2)
    x = 3.0
    direct = np.mean(np.exp(-0.5 * ((x - values) / h) ** 2) / np.sqrt(2 * np.pi)) / h
    assert kde(values, [x], h)[0] == pytest.approx(direct)


def test_bandwidth_floor():
    assert silverman_bandwidth([0.0]) == 1e-3
    assert silverman_bandwidth([5000.0, 5000.0]) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        silverman_bandwidth([])


def test_texture_richness_and_directory_kde(tmp_path, image_dir, constant_image, noise_image, tiny_run_config):
    assert texture_richness(constant_image, tiny_run_config.smash) == 0.0
    assert texture_richness(noise_image, tiny_run_config.smash) > 0.0
    result = texture_kde(image_dir, tiny_run_config)
    assert result.values[1] == 0.0
    assert len(result.grid) == 512
    result.write(tmp_path)
    assert [row['path'].endswith('.png') for row in read_rows(tmp_path / 'texture_values.csv')] == [True, True]


def test_analyze_agrees_with_batch_prediction(toy_manifest, tiny_run_config):
    model = build_model(tiny_run_config.model_config())
    record = toy_manifest.records[1]
    result = analyze(record.path, model, tiny_run_config)
    outputs = predict_records(model, [record], tiny_run_config)
    assert result.prob_fake == pytest.approx(float(outputs.probs[0]), rel=1e-6)
    assert result.label == ('fake' if result.prob_fake >= 0.5 else 'real')
    assert len(result.energy_high) == 8
    assert len(result.energy_low) == 8


def test_export_features_writes_one_row_per_record(tmp_path, toy_manifest, tiny_run_config):
    model = build_model(tiny_run_config.model_config())
    path = export_features(toy_manifest, model, tiny_run_config, tmp_path / 'features.csv')
    rows = read_rows(path)
    assert len(rows) == 12
    assert len(rows[0]) == 34
    assert list(rows[0])[-2:] == ['label', 'source']
    assert {row['label'] for row in rows} == {'real', 'fake'}
