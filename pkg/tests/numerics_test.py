import numpy as np
import pytest
from pydantic import ValidationError

from batting_shrinkage.errors import DomainError, NumericError
from batting_shrinkage.tools.numerics import (
    QuadratureGrid,
    chisq_cdf,
    integrate_2d,
    ks_test,
    normal_cdf,
    normal_quantile,
)


def test_normal_cdf_symmetry():
    assert normal_cdf(0.0) == 0.5
    z = np.linspace(-6, 6, 25)
    assert normal_cdf(-z) == pytest.approx(1.0 - normal_cdf(z), abs=1e-15)


def test_normal_quantile_values():
    assert normal_quantile(0.975) == pytest.approx(1.95996398, abs=1e-7)
    assert normal_quantile(0.99988922) == pytest.approx(3.693073, abs=1e-5)


def test_quantile_round_trip():
    z = np.linspace(-6, 6, 49)
    assert normal_quantile(normal_cdf(z)) == pytest.approx(z, abs=1e-8)


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1])
def test_quantile_domain(u):
    with pytest.raises(DomainError):
        normal_quantile(u)


def test_chisq_cdf():
    assert chisq_cdf(0.0, 4) == 0.0
    assert chisq_cdf(3.841459, 1) == pytest.approx(0.95, abs=1e-6)
    x = np.array([0.5, 2.0, 7.3, 20.0])
    assert chisq_cdf(x, 2) == pytest.approx(1.0 - np.exp(-x / 2), abs=1e-12)


def test_chisq_cdf_monotone():
    values = chisq_cdf(np.linspace(0, 40, 200), 5)
    assert np.all(np.diff(values) >= 0)
    assert 0.0 <= values.min() and values.max() <= 1.0


def test_ks_at_null_quantiles():
    n = 50
    sample = normal_quantile((np.arange(1, n + 1) - 0.5) / n)
    d, _ = ks_test(sample, "std_normal", "two")
    assert d == pytest.approx(0.5 / n, abs=1e-12)
    d_plus, p = ks_test(sample, "std_normal", "one_upper")
    assert d_plus == pytest.approx(0.5 / n, abs=1e-12)
    assert p == pytest.approx(np.exp(-0.5 / n))


def test_ks_constant_sample():
    d, p = ks_test(np.zeros(30), "std_normal")
    assert d == pytest.approx(0.5)
    assert p < 1e-5


def test_ks_uniform_null():
    d, _ = ks_test([0.25, 0.75], "uniform01")
    assert d == pytest.approx(0.25)


def test_ks_empty_sample():
    with pytest.raises(DomainError):
        ks_test([], "std_normal")


def test_ks_p_values_uniform_under_null():
    rng = np.random.default_rng(11)
    p = [ks_test(rng.standard_normal(500)).p_value for _ in range(1000)]
    assert ks_test(p, "uniform01").p_value > 0.01


def test_unit_square_area():
    grid = QuadratureGrid.gauss_legendre(8, 8)
    assert integrate_2d(lambda a, b: np.ones_like(a), grid) == pytest.approx(1.0, abs=1e-14)


def test_separable_gaussian_times_polynomial():
    grid = QuadratureGrid.gauss_legendre(64, 16, (-8.0, 8.0), (0.0, 1.0))
    value = integrate_2d(lambda a, b: np.exp(-0.5 * a**2) * b**2, grid)
    assert value == pytest.approx(np.sqrt(2 * np.pi) / 3, rel=1e-10)


def test_vector_integrand():
    grid = QuadratureGrid.gauss_legendre(10, 10)
    values = integrate_2d(lambda a, b: np.stack([a, b * a]), grid)
    assert values == pytest.approx([0.5, 0.25], abs=1e-14)


def test_non_finite_integrand():
    grid = QuadratureGrid.gauss_legendre(4, 4)
    with pytest.raises(NumericError, match="non-finite"):
        integrate_2d(lambda a, b: np.log(a - 0.5), grid)


def test_refined_grid_keeps_intervals():
    grid = QuadratureGrid.gauss_legendre(5, 7, (-2.0, 2.0), (0.1, 0.9))
    finer = grid.refined()
    assert finer.shape == (10, 14)
    assert finer.a_range == (-2.0, 2.0) and finer.b_range == (0.1, 0.9)
    assert finer.a_weights.sum() == pytest.approx(4.0)


def test_grid_rejects_bad_weights():
    with pytest.raises(ValidationError):
        QuadratureGrid(
            a_nodes=np.array([0.0, 1.0]),
            a_weights=np.array([1.0, -1.0]),
            b_nodes=np.array([0.5]),
            b_weights=np.array([1.0]),
            a_range=(0.0, 1.0),
            b_range=(0.0, 1.0),
        )
