import numpy as np
import pytest

from freqblend.dct import dct2
from freqblend.spectrum import (
    AggregateFrequencyMap,
    accumulate_frequency,
    azimuthal_profile,
    default_bins,
    difference_heatmap,
    difference_profile,
    log_profile,
    radial_bin_grid,
)


def test_accumulate_constant_image_is_dc_only():
    agg = accumulate_frequency([np.full((8, 8, 3), 3.0)])
    assert agg.count == 1
    assert agg.values[0, 0] > 0
    rest = agg.values.copy()
    rest[0, 0] = 0.0
    assert np.abs(rest).max() < 1e-12


def test_accumulate_mean_idempotent_and_inversion():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 255, size=(12, 12, 3))
    one = accumulate_frequency([x])
    two = accumulate_frequency([x, x])
    assert np.allclose(one.values, two.values, atol=1e-12)
    # inverted image flips AC coefficient signs only, magnitudes match on AC
    inv = -x + 255.0
    pair = accumulate_frequency([x, inv])
    mag_x = np.abs(dct2(x)).mean(axis=2)
    assert np.allclose(pair.values[1:, :], mag_x[1:, :], atol=1e-9)
    assert np.allclose(pair.values[:, 1:], mag_x[:, 1:], atol=1e-9)


def test_accumulate_rejects_bad_input():
    with pytest.raises(ValueError):
        accumulate_frequency([])
    with pytest.raises(ValueError):
        accumulate_frequency([np.zeros((4, 4, 3)), np.zeros((5, 4, 3))])


def test_profile_of_constant_map_is_flat():
    agg = AggregateFrequencyMap(values=np.full((20, 20), 2.5), count=1)
    prof = azimuthal_profile(agg, 5)
    assert prof.n_bins == 5
    assert np.allclose(prof.values, 2.5)


def test_profile_dc_only_map():
    values = np.zeros((16, 16))
    values[0, 0] = 4.0
    prof = azimuthal_profile(AggregateFrequencyMap(values, 1), 4)
    assert prof.values[0] > 0
    assert np.all(prof.values[1:] == 0.0)


def test_profile_3x3_brute_force_oracle():
    rng = np.random.default_rng(1)
    values = rng.uniform(size=(3, 3))
    n_bins = 2
    prof = azimuthal_profile(AggregateFrequencyMap(values, 1), n_bins)
    r_max = np.hypot(2, 2)
    edges = np.linspace(0.0, r_max, n_bins + 1)
    sums = np.zeros(n_bins)
    counts = np.zeros(n_bins)
    for i in range(3):
        for j in range(3):
            r = np.hypot(i, j)
            for k in range(n_bins):
                if (edges[k] <= r < edges[k + 1]) or (k == n_bins - 1 and r <= edges[-1]):
                    sums[k] += values[i, j]
                    counts[k] += 1
                    break
    assert np.allclose(prof.values, sums / counts, atol=1e-12)


def test_bins_partition_all_positions():
    for h, w, n in ((16, 16, 4), (31, 17, 7), (64, 64, 16)):
        _, counts, _ = radial_bin_grid(h, w, n)
        assert counts.sum() == h * w


def test_empty_bin_triggers_reduction_with_warning():
    # tiny grid with many bins leaves annuli empty
    agg = AggregateFrequencyMap(values=np.ones((3, 3)), count=1)
    with pytest.warns(UserWarning, match="reduced bin count"):
        prof = azimuthal_profile(agg, 8)
    assert prof.reduced_from == 8
    assert prof.n_bins < 8
    assert np.allclose(prof.values, 1.0)


def test_log_profile_values():
    prof = azimuthal_profile(AggregateFrequencyMap(np.ones((8, 8)), 1), 3)
    prof.values = np.array([0.0, 1.0, 3.0])
    lp = log_profile(prof)
    assert np.allclose(lp.values, [0.0, 1.0, 2.0])


def test_difference_profile():
    base = azimuthal_profile(AggregateFrequencyMap(np.ones((8, 8)), 1), 4)
    other = azimuthal_profile(AggregateFrequencyMap(np.ones((8, 8)), 1), 4)
    assert np.all(difference_profile(base, other) == 0.0)
    other.values = base.values.copy()
    other.values[3] += 1.0
    d = difference_profile(base, other)
    assert d[3] == 1.0 and np.all(d[:3] == 0.0)
    dlog = difference_profile(base, other, log_scale=True)
    assert dlog[3] == pytest.approx(1.0)  # log2(1+1)
    other.values[3] = base.values[3] - 3.0
    assert difference_profile(base, other, log_scale=True)[3] == pytest.approx(-2.0)
    bad = azimuthal_profile(AggregateFrequencyMap(np.ones((8, 8)), 1), 5)
    with pytest.raises(ValueError):
        difference_profile(base, bad)


def test_difference_heatmap_antisymmetric():
    rng = np.random.default_rng(2)
    a = AggregateFrequencyMap(rng.uniform(size=(6, 6)), 1)
    b = AggregateFrequencyMap(rng.uniform(size=(6, 6)), 1)
    assert np.allclose(difference_heatmap(a, b), -difference_heatmap(b, a), atol=1e-15)
    zero = AggregateFrequencyMap(np.zeros((6, 6)), 1)
    assert np.allclose(difference_heatmap(a, zero), a.values)
    assert np.all(difference_heatmap(a, a) == 0.0)
    with pytest.raises(ValueError):
        difference_heatmap(a, AggregateFrequencyMap(np.zeros((5, 6)), 1))


def test_default_bins_scaling():
    assert default_bins(400, 400) == 100
    assert default_bins(64, 64) == 16
    assert default_bins(2, 2) == 2
