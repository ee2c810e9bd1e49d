import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ioi_attack import spectral
from ioi_attack.image_core import Image

from oracles import brute_dft2


def fixtures(size):
    rng = np.random.default_rng(size)
    yield rng.random((size, size, 3))
    yield rng.random((size, size, 1))
    yield np.full((size, size, 1), 0.3)
    imp = np.zeros((size, size, 1))
    imp[1, 2, 0] = 1.0
    yield imp
    yield (np.indices((size, size)).sum(axis=0) % 2)[:, :, None].astype(float)


@pytest.mark.parametrize("size", [4, 8])
def test_fft_matches_brute_force_dft(size):
    for arr in fixtures(size):
        spec = spectral.fft2(Image(arr)).coeffs
        for c in range(arr.shape[2]):
            assert np.abs(spec[:, :, c] - brute_dft2(arr[:, :, c])).max() < 1e-9


@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12), st.sampled_from([1, 3])),
              elements=st.floats(0, 1)))
def test_round_trip(a):
    back = spectral.ifft2(spectral.fft2(Image(a)))
    assert np.abs(back.data - a).max() < 1e-9


def test_retained_count_rounds_half_up():
    assert spectral.retained_count(0.07, 8, 8) == 4      # 4.48
    assert spectral.retained_count(0.5, 3, 3) == 5       # 4.5
    assert spectral.retained_count(0.01, 8, 8) == 1      # 0.64


@pytest.mark.parametrize("f", [0.0, 1.0, -0.1, 1.5])
def test_select_topf_rejects_out_of_range(f):
    with pytest.raises(ValueError):
        spectral.select_topf(spectral.fft2(Image(np.zeros((4, 4)))), f)


def test_topk_mask_breaks_ties_by_row_major_index():
    m = spectral.topk_mask(np.array([[1.0, 2.0], [2.0, 2.0]]), 2)
    assert m.tolist() == [[False, True], [True, False]]


def test_dc_is_retained_for_bright_images(rng):
    img = Image(0.5 + 0.1 * rng.random((8, 8, 3)))
    idx = spectral.select_topf(spectral.fft2(img), 0.01)
    assert idx.mask[0, 0].all()
    assert idx.mask.sum(axis=(0, 1)).tolist() == [1, 1, 1]


def test_split_is_exact_partition(rng):
    img = Image(rng.random((9, 7, 3)))
    spec = spectral.fft2(img)
    lf, hf = spectral.split_lf_hf(spec, spectral.select_topf(spec, 0.2))
    assert np.array_equal(lf.coeffs + hf.coeffs, spec.coeffs)
    recon = spectral.ifft2(lf).data + spectral.ifft2(hf).data
    assert np.abs(recon - img.data).max() < 1e-12


def test_mae_star_is_zero_on_identical_images(rng):
    img = Image(rng.random((5, 6, 3)))
    assert spectral.mae_star(img, img) == 0.0


@given(arrays(np.float64, (5, 6, 1), elements=st.floats(0, 1)),
       arrays(np.float64, (5, 6, 1), elements=st.floats(0, 1)),
       arrays(np.float64, (5, 6, 1), elements=st.floats(0, 1)))
def test_mae_star_triangle_inequality(a, b, c):
    ab = spectral.mae_star(Image(a), Image(b))
    bc = spectral.mae_star(Image(b), Image(c))
    ac = spectral.mae_star(Image(a), Image(c))
    assert ac <= ab + bc + 1e-12


def test_mae_star_of_impulse(rng):
    # an impulse of height a has |FFT| = a everywhere, so MAE* = a
    d = np.zeros((6, 5, 1))
    d[2, 3, 0] = 0.25
    assert spectral.mae_star(Image(d), Image(np.zeros((6, 5, 1)))) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("h, w", [(6, 8), (7, 9), (8, 5), (5, 6)])
def test_half_spectrum_helpers_match_full_spectrum(rng, h, w):
    x = rng.random((h, w))
    full = np.fft.fft2(x)
    half = np.fft.rfft2(x)
    mag = spectral.full_magnitude_from_half(half, w)
    assert np.abs(mag - np.abs(full)).max() < 1e-12
    assert np.sum(np.abs(half) * spectral.half_weights(w)) == pytest.approx(np.abs(full).sum(), rel=1e-12)
    keep = spectral.topk_mask(spectral.hermitian_magnitude(full[:, :, None])[:, :, 0], 5)
    sym = spectral.symmetric_half_mask(keep)
    # masking the half spectrum with the symmetrized mask gives the real part of the full route
    ref = np.fft.ifft2(full * (~keep)).real
    got = np.fft.irfft2(half * (1.0 - sym), s=(h, w))
    assert np.abs(ref - got).max() < 1e-12
