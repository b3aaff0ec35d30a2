import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqblend.bands import (
    DistributionTriple,
    make_prior_masks,
    normalize_triple,
    parse_components,
    select_component,
)
from freqblend.dct import dct2, idct2


def _brute_force_bands(h, w, t1, t2):
    """Independent scalar-loop enumeration of the band inequalities."""
    sem = np.zeros((h, w))
    stc = np.zeros((h, w))
    noi = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            s = i / (h - 1) + j / (w - 1)
            if s <= t1:
                sem[i, j] = 1.0
            elif s <= t2:
                stc[i, j] = 1.0
            else:
                noi[i, j] = 1.0
    return sem, stc, noi


def test_17x17_named_positions():
    m = make_prior_masks(17, 17, 1 / 16, 1 / 2)
    assert m.m_sem[0, 0] == 1.0                      # origin, u+v = 0
    assert m.m_noi[16, 16] == 1.0                    # far corner, u+v = 2
    assert m.m_sem[0, 1] == 1.0 and m.m_str[0, 1] == 0.0   # u+v = 1/16, inclusive


def test_matches_brute_force_enumeration():
    for h, w, t1, t2 in ((17, 17, 1 / 16, 1 / 2), (40, 25, 0.1, 0.7), (400, 400, 1 / 16, 1 / 2)):
        m = make_prior_masks(h, w, t1, t2)
        sem, stc, noi = _brute_force_bands(h, w, t1, t2)
        assert np.array_equal(m.m_sem, sem)
        assert np.array_equal(m.m_str, stc)
        assert np.array_equal(m.m_noi, noi)


@settings(max_examples=40, deadline=None)
@given(
    h=st.integers(min_value=2, max_value=64),
    w=st.integers(min_value=2, max_value=64),
    t1=st.floats(min_value=0.01, max_value=0.9),
    gap=st.floats(min_value=0.01, max_value=1.0),
)
def test_partition_and_ordering_property(h, w, t1, gap):
    t2 = min(t1 + gap, 1.99)
    m = make_prior_masks(h, w, t1, t2)
    total = m.m_sem + m.m_str + m.m_noi
    assert np.array_equal(total, np.ones((h, w)))
    u = np.arange(h) / (h - 1)
    v = np.arange(w) / (w - 1)
    s = u[:, None] + v[None, :]
    if m.m_sem.any() and m.m_noi.any():
        assert s[m.m_sem == 1].max() < s[m.m_noi == 1].min()


def test_rejects_degenerate_grid_and_thresholds():
    with pytest.raises(ValueError):
        make_prior_masks(1, 8)
    with pytest.raises(ValueError):
        make_prior_masks(8, 1)
    with pytest.raises(ValueError):
        make_prior_masks(8, 8, 0.5, 0.5)
    with pytest.raises(ValueError):
        make_prior_masks(8, 8, 0.0, 0.5)


def test_select_component_basics():
    rng = np.random.default_rng(0)
    freq = rng.normal(size=(6, 5, 3))
    assert np.array_equal(select_component(freq, np.ones((6, 5))), freq)
    assert np.all(select_component(freq, np.zeros((6, 5))) == 0.0)
    single = np.zeros((6, 5, 3))
    single[3, 4, 0] = 2.0
    pmap = np.zeros((6, 5))
    pmap[3, 4] = 0.25
    out = select_component(single, pmap)
    assert out[3, 4, 0] == 0.5
    out[3, 4, 0] = 0.0
    assert np.all(out == 0.0)
    with pytest.raises(ValueError):
        select_component(freq, np.ones((5, 6)))


def test_select_component_is_bilinear():
    rng = np.random.default_rng(1)
    f1, f2 = rng.normal(size=(2, 4, 4, 3))
    m1, m2 = rng.uniform(size=(2, 4, 4))
    lhs = select_component(2.0 * f1 + f2, m1)
    rhs = 2.0 * select_component(f1, m1) + select_component(f2, m1)
    assert np.allclose(lhs, rhs, atol=1e-12)
    lhs = select_component(f1, 3.0 * m1 - m2)
    rhs = 3.0 * select_component(f1, m1) - select_component(f1, m2)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_parse_components_prior_partition_reassembles():
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 255, size=(32, 32, 3))
    triple = make_prior_masks(32, 32).as_triple()
    parts = parse_components(x, triple)
    total = sum(img for _, img in parts.values())
    assert np.abs(total - x).max() < 1e-9
    freq_total = sum(f for f, _ in parts.values())
    assert np.allclose(freq_total, dct2(x), atol=1e-12)


def test_parse_components_degenerate_triple():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 255, size=(16, 16, 3))
    ones = np.ones((16, 16))
    zeros = np.zeros((16, 16))
    parts = parse_components(x, DistributionTriple(ones, zeros, zeros))
    assert np.abs(parts["sem"][1] - x).max() < 1e-9
    assert np.all(parts["str"][1] == 0.0)
    assert np.all(parts["noi"][1] == 0.0)


def test_constant_image_energy_stays_semantic():
    x = np.full((16, 16, 3), 7.0)
    triple = make_prior_masks(16, 16).as_triple()
    parts = parse_components(x, triple)
    # DC-only spectrum confirmed via the transform itself
    c = dct2(x)
    assert np.abs(c[1:, :, :]).max() < 1e-12 and np.abs(c[:, 1:, :]).max() < 1e-12
    assert np.abs(parts["str"][1]).max() < 1e-12
    assert np.abs(parts["noi"][1]).max() < 1e-12


def test_normalize_triple():
    h = w = 4
    t = DistributionTriple(np.full((h, w), 0.5), np.full((h, w), 0.5), np.full((h, w), 0.5))
    n = normalize_triple(t)
    assert np.allclose(n.p_sem, 1 / 3) and np.allclose(n.p_noi, 1 / 3)
    already = DistributionTriple(np.full((h, w), 0.2), np.full((h, w), 0.2), np.full((h, w), 0.6))
    n2 = normalize_triple(already)
    assert np.allclose(n2.p_sem, 0.2) and np.allclose(n2.p_noi, 0.6)
    bad = DistributionTriple(np.zeros((h, w)), np.zeros((h, w)), np.zeros((h, w)))
    with pytest.raises(ValueError, match=r"\(0, 0\)"):
        normalize_triple(bad)


def test_normalized_triple_reassembly_is_exact():
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 255, size=(16, 16, 3))
    t = normalize_triple(DistributionTriple(*rng.uniform(0.1, 1.0, size=(3, 16, 16))))
    freq = dct2(x)
    total = sum(select_component(freq, m) for m in t.maps().values())
    assert np.allclose(total, freq, atol=1e-12)
    rendered = sum(idct2(select_component(freq, m)) for m in t.maps().values())
    assert np.abs(rendered - x).max() < 1e-9
