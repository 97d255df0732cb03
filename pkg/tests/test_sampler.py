import numpy as np
import pytest

from src.toeplitz_testing.errors import InvalidParameterError, NotPositiveDefiniteError
from src.toeplitz_testing.estimator import lag_functionals
from src.toeplitz_testing.model import ToeplitzSpec
from src.toeplitz_testing.sampler import (
    MaSpec,
    RngStream,
    as_generator,
    ma_autocovariance,
    ma_coefficients,
    ma_covariance_spec,
    ma_signal_level,
    sample_gaussian,
    sample_ma_process,
    sample_null,
)


def _brute_force_autocovariance(phi, p, h):
    coefficients = ma_coefficients(MaSpec(phi=phi, p=p))
    if h >= coefficients.size:
        return 0.0
    return float(np.dot(coefficients[: coefficients.size - h], coefficients[h:]))


def test_same_stream_gives_identical_draws():
    first = sample_null(5, 8, RngStream(7, 3))
    second = sample_null(5, 8, RngStream(7, 3))
    np.testing.assert_array_equal(first.data, second.data)


def test_distinct_streams_differ():
    first = sample_null(5, 8, RngStream(7, 3))
    assert not np.array_equal(first.data, sample_null(5, 8, RngStream(7, 4)).data)
    assert not np.array_equal(first.data, sample_null(5, 8, RngStream(7, 3, (1,))).data)


def test_spawned_streams_nest_under_parent():
    parent = RngStream(11, 2, (5,))
    assert parent.spawn(4) == RngStream(11, 4, (5, 2))


def test_stream_rejects_negative_identifiers():
    with pytest.raises(InvalidParameterError):
        RngStream(-1)
    with pytest.raises(InvalidParameterError):
        as_generator(42)


def test_identity_spec_returns_raw_noise():
    samples = sample_gaussian(ToeplitzSpec.identity(6), 4, RngStream(3))
    np.testing.assert_array_equal(samples.data, RngStream(3).generator().standard_normal((4, 6)))


def test_gaussian_samples_have_requested_covariance():
    spec = ToeplitzSpec.from_lags(12, {1: 0.4, 3: -0.2})
    stats = lag_functionals(sample_gaussian(spec, 20000, RngStream(1)), 4)
    np.testing.assert_allclose(stats.xi, [0.4, 0.0, -0.2, 0.0], atol=0.02)


def test_null_functional_has_zero_mean():
    stream = RngStream(5)
    xi = np.array([lag_functionals(sample_null(1, 4, stream.spawn(r)), 1).xi[0] for r in range(20000)])
    se = xi.std(ddof=1) / np.sqrt(xi.size)
    assert abs(xi.mean()) <= 4 * se


def test_indefinite_spec_cannot_be_sampled():
    with pytest.raises(NotPositiveDefiniteError):
        sample_gaussian(ToeplitzSpec([1.0, 1.0, 0.0]), 3, RngStream(0))


def test_ma_autocovariance_examples():
    spec = MaSpec(phi=0.5, p=16)
    assert ma_autocovariance(spec, 0) == pytest.approx(1.332031, abs=1e-6)
    assert ma_autocovariance(spec, 2) == pytest.approx(0.664063, abs=1e-6)
    assert ma_autocovariance(spec, 1) == 0.0
    assert ma_autocovariance(spec, 8) == pytest.approx(0.0625)
    assert ma_autocovariance(spec, 10) == 0.0


@pytest.mark.parametrize("phi", [-0.7, -0.2, 0.0, 0.3, 0.6, 0.95])
@pytest.mark.parametrize("p", [4, 7, 8, 16, 33])
def test_ma_autocovariance_matches_brute_force(phi, p):
    spec = MaSpec(phi=phi, p=p)
    for h in range(p):
        assert abs(ma_autocovariance(spec, h) - _brute_force_autocovariance(phi, p, h)) <= 1e-12


def test_ma_covariance_spec_is_correlation_form():
    spec = ma_covariance_spec(MaSpec(phi=0.5, p=16))
    assert spec.sigma0 == 1.0
    assert spec.diagonals[2] == pytest.approx(0.498534, abs=1e-6)
    assert spec.support() == (2, 4, 6, 8)
    assert ma_signal_level(MaSpec(phi=0.5, p=16)) == pytest.approx(0.0625 / 1.33203125)


def test_ma_with_zero_coefficient_is_white_noise():
    assert ma_covariance_spec(MaSpec(phi=0.0, p=12)) == ToeplitzSpec.identity(12)
    assert ma_signal_level(MaSpec(phi=0.0, p=12)) == 0.0


def test_short_ma_windows_keep_lag_two():
    # q = floor(7/4) = 1 still correlates lag 2
    assert ma_covariance_spec(MaSpec(phi=0.5, p=7)).support() == (2,)


def test_ma_process_with_zero_coefficient_is_standard_noise():
    samples = sample_ma_process(MaSpec(phi=0.0, p=12), 5, RngStream(9))
    noise = RngStream(9).generator().standard_normal((5, 12 + 2 * 3))
    np.testing.assert_array_equal(samples.data, noise[:, 6:])


def test_ma_process_matches_closed_form_covariance():
    spec = MaSpec(phi=0.5, p=16)
    stats = lag_functionals(sample_ma_process(spec, 20000, RngStream(2)), 4)
    assert stats.xi0 == pytest.approx(1.0, abs=0.03)
    np.testing.assert_allclose(stats.xi, ma_covariance_spec(spec).diagonals[1:5], atol=0.03)


def test_ma_process_unnormalized_scale():
    spec = MaSpec(phi=0.5, p=16)
    raw = sample_ma_process(spec, 3, RngStream(4), normalized=False)
    scaled = sample_ma_process(spec, 3, RngStream(4))
    np.testing.assert_allclose(raw.data / np.sqrt(ma_autocovariance(spec, 0)), scaled.data)


def test_ma_spec_validation():
    with pytest.raises(InvalidParameterError):
        MaSpec(phi=1.0, p=8)
    with pytest.raises(InvalidParameterError):
        ma_autocovariance(MaSpec(phi=0.2, p=8), -1)


def test_gaussian_and_ma_windows_share_lag_functionals():
    spec = MaSpec(phi=0.5, p=16)
    covariance = ma_covariance_spec(spec)
    via_cholesky = lag_functionals(sample_gaussian(covariance, 20000, RngStream(6)), 6)
    via_filter = lag_functionals(sample_ma_process(spec, 20000, RngStream(7)), 6)
    assert via_cholesky.xi0 == pytest.approx(via_filter.xi0, abs=0.03)
    np.testing.assert_allclose(via_cholesky.xi, via_filter.xi, atol=0.03)
    np.testing.assert_allclose(via_filter.xi, covariance.diagonals[1:7], atol=0.03)
