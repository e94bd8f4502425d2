import math

import numpy as np
import pytest

from core.channel import (
    ChannelMatrix,
    DomainTag,
    clamp_db,
    cosine_similarity,
    dft_matrix,
    nmse,
    stack_real,
    steering_vector,
    to_angular,
    to_spatial,
    top_fraction_energy,
    unstack_complex,
)
from core.errors import DomainError, ShapeError, UndefinedMetricError


def _h(rng, n_ue=4, n_bs=16):
    return ChannelMatrix.spatial(rng.standard_normal((n_ue, n_bs)) + 1j * rng.standard_normal((n_ue, n_bs)))


@pytest.mark.parametrize("n", [1, 2, 4, 16, 64])
def test_dft_is_unitary(n):
    f = dft_matrix(n)
    assert np.max(np.abs(f.conj().T @ f - np.eye(n))) < 1e-12


def test_dft_entries_and_sign():
    f = dft_matrix(4)
    assert f[1, 1] == pytest.approx(np.exp(1j * 2 * np.pi / 4) / 2)
    assert np.allclose(f[:, 0], 0.5)


def test_dft_rejects_bad_size():
    with pytest.raises(ShapeError):
        dft_matrix(0)


def test_angular_round_trip(rng):
    for _ in range(10):
        h = _h(rng)
        back = to_spatial(to_angular(h))
        assert back.domain == DomainTag.SPATIAL
        assert np.max(np.abs(back.entries - h.entries)) < 1e-10


def test_angular_of_grid_steering_is_one_hot():
    n_ue, n_bs = 4, 16
    # on-grid angles: sin(theta) = 2k/N
    a_ue = steering_vector(n_ue, math.asin(2 * 1 / n_ue))
    a_bs = steering_vector(n_bs, math.asin(2 * 3 / n_bs))
    h = ChannelMatrix.spatial(np.outer(a_ue, a_bs.conj()))
    mag = np.abs(to_angular(h).entries)
    assert mag[1, 3] == pytest.approx(1.0, abs=1e-12)
    assert np.sum(mag > 1e-9) == 1


def test_transform_domain_checks(rng):
    h = _h(rng)
    with pytest.raises(DomainError):
        to_spatial(h)
    with pytest.raises(DomainError):
        to_angular(to_angular(h))


def test_frobenius_preserved(rng):
    h = _h(rng)
    assert to_angular(h).frobenius() == pytest.approx(h.frobenius(), rel=1e-12)


def test_stack_unstack_exact(rng):
    h = to_angular(_h(rng))
    t = stack_real(h)
    assert t.shape == (2, 4, 16)
    assert np.array_equal(unstack_complex(t).entries, h.entries)


def test_unstack_rejects_bad_shape():
    with pytest.raises(ShapeError):
        unstack_complex(np.zeros((3, 2, 2)))


def test_channel_is_read_only(rng):
    h = _h(rng)
    with pytest.raises(ValueError):
        h.entries[0, 0] = 1.0


def test_nmse_values(rng):
    h = _h(rng)
    assert nmse(h, h).db == float("-inf")
    zero = ChannelMatrix.spatial(np.zeros(h.shape))
    assert nmse(h, zero).linear == pytest.approx(1.0)
    assert nmse(h, zero).db == pytest.approx(0.0, abs=1e-12)
    half = ChannelMatrix.spatial(h.entries * 0.5)
    assert nmse(h, half).db == pytest.approx(10 * math.log10(0.25))


def test_nmse_zero_reference_undefined(rng):
    zero = ChannelMatrix.spatial(np.zeros((4, 16)))
    with pytest.raises(UndefinedMetricError):
        nmse(zero, _h(rng))


def test_nmse_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        nmse(_h(rng), _h(rng, 2, 16))


def test_cosine_similarity_scale_invariant_and_bounded(rng):
    h = _h(rng)
    rank1 = ChannelMatrix.spatial(np.outer(steering_vector(4, 0.3), steering_vector(16, -0.2).conj()))
    assert cosine_similarity(rank1, rank1) == pytest.approx(1.0)
    est = _h(rng)
    c1 = cosine_similarity(h, est)
    c2 = cosine_similarity(h, ChannelMatrix.spatial(3.0 * est.entries))
    assert c1 == pytest.approx(c2)
    assert 0.0 <= c1 <= 1.0


def test_cosine_similarity_of_two_orthogonal_components():
    a = np.zeros((2, 2), dtype=complex)
    a[0, 0] = a[1, 1] = 1.0
    h = ChannelMatrix.spatial(a)
    assert cosine_similarity(h, h) == pytest.approx(1 / math.sqrt(2))


def test_cosine_similarity_zero_estimate(rng):
    with pytest.raises(UndefinedMetricError):
        cosine_similarity(_h(rng), ChannelMatrix.spatial(np.zeros((4, 16))))


def test_steering_vector_unit_norm():
    for theta in (-1.2, 0.0, 0.7):
        assert np.linalg.norm(steering_vector(16, theta)) == pytest.approx(1.0)


def test_top_fraction_energy():
    a = np.zeros((4, 16), dtype=complex)
    a[0, 0] = 3.0
    a[1, 1] = 1.0
    h = ChannelMatrix.angular(a)
    # 5 % of 64 bins rounds up to 4 bins, which hold everything
    assert top_fraction_energy(h, 0.05) == pytest.approx(1.0)
    assert top_fraction_energy(h, 1 / 64) == pytest.approx(0.9)
    assert top_fraction_energy(ChannelMatrix.angular(np.zeros((2, 2))), 0.5) == 0.0
    with pytest.raises(DomainError):
        top_fraction_energy(h, 0.0)


def test_clamp_db():
    assert clamp_db(float("-inf")) == -100.0
    assert clamp_db(-3.0) == -3.0
