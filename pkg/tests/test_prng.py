import numpy as np
import pytest
from scipy import stats

from rkde.errors import ConfigError
from rkde.prng import PortableRng, cholesky_factor, covariance_matrix


def test_same_seed_same_stream():
    a, b = PortableRng(42), PortableRng(42)
    np.testing.assert_array_equal(a.uniform(100), b.uniform(100))
    np.testing.assert_array_equal(a.standard_normal(11), b.standard_normal(11))
    np.testing.assert_array_equal(a.gamma(0.7, 2.0, 20), b.gamma(0.7, 2.0, 20))


def test_different_seeds_differ():
    assert not np.array_equal(PortableRng(1).uniform(10), PortableRng(2).uniform(10))


def test_uniform_is_top_53_bits():
    raw = np.random.PCG64(7).random_raw(5)
    expected = [(int(r) >> 11) / 2.0 ** 53 for r in raw]
    assert PortableRng(7).uniform(5).tolist() == expected


def test_uniform_range():
    u = PortableRng(3).uniform(10_000)
    assert u.min() >= 0.0 and u.max() < 1.0


def test_normal_moments():
    z = PortableRng(0).standard_normal(100_000)
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.02


def test_normal_ks():
    assert stats.kstest(PortableRng(5).standard_normal(20_000), "norm").pvalue > 1e-3


@pytest.mark.parametrize("shape,scale", [(2.0, 1.5), (0.5, 1.0), (7.0, 0.3)])
def test_gamma_distribution(shape, scale):
    g = PortableRng(9).gamma(shape, scale, 20_000)
    assert g.min() > 0
    assert g.mean() == pytest.approx(shape * scale, rel=0.03)
    assert g.var() == pytest.approx(shape * scale ** 2, rel=0.08)
    assert stats.kstest(g, stats.gamma(shape, scale=scale).cdf).pvalue > 1e-3


@pytest.mark.parametrize("shape,scale", [(0.0, 1.0), (1.0, -1.0), (float("inf"), 1.0)])
def test_gamma_bad_parameters(shape, scale):
    with pytest.raises(ConfigError):
        PortableRng(0).gamma(shape, scale, 1)


def test_negative_seed():
    with pytest.raises(ConfigError):
        PortableRng(-1)


def test_multivariate_normal_covariance():
    cov = np.array([[2.0, 0.6], [0.6, 0.5]])
    x = PortableRng(4).multivariate_normal([1.0, -2.0], cov, 50_000)
    assert x.shape == (50_000, 2)
    np.testing.assert_allclose(x.mean(axis=0), [1.0, -2.0], atol=0.03)
    np.testing.assert_allclose(np.cov(x.T), cov, atol=0.04)


class TestCovariance:
    def test_scalar(self):
        np.testing.assert_array_equal(covariance_matrix(2.0, 3), 2.0 * np.eye(3))

    def test_diagonal(self):
        np.testing.assert_array_equal(covariance_matrix([1.0, 4.0], 2), np.diag([1.0, 4.0]))

    def test_full(self):
        m = [[1.0, 0.2], [0.2, 1.0]]
        np.testing.assert_array_equal(covariance_matrix(m, 2), m)

    @pytest.mark.parametrize("bad", [[1.0, 2.0, 3.0], [[1.0, 0.5], [0.0, 1.0]], [[np.nan, 0], [0, 1]]])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            covariance_matrix(bad, 2)

    def test_not_positive_definite(self):
        with pytest.raises(ConfigError):
            cholesky_factor([[1.0, 2.0], [2.0, 1.0]], 2)
