import numpy as np
import pytest

from batting_shrinkage.errors import DomainError
from batting_shrinkage.tools.transform import (
    TransformConfig,
    TransformedSample,
    diagnostic_curves,
    exact_bias,
    exact_var_ratio,
    inverse,
    stabilize,
)

CLASSICAL = TransformConfig(c=0.0)
MEAN_MATCHING = TransformConfig(c=0.25)
ANSCOMBE = TransformConfig(c=0.375)


def test_stabilize_known_value():
    assert stabilize(12, 45, MEAN_MATCHING) == pytest.approx(0.5455338, abs=1e-6)


def test_stabilize_is_vectorized():
    x = stabilize(np.array([0, 5, 10]), np.array([10, 10, 10]))
    assert x.shape == (3,)
    assert np.all(np.diff(x) > 0)
    assert x[0] > 0 and x[-1] < np.pi / 2


@pytest.mark.parametrize("cfg", [CLASSICAL, MEAN_MATCHING, ANSCOMBE])
@pytest.mark.parametrize("n", [1, 10, 445])
def test_stabilize_strictly_increasing_in_hits(cfg, n):
    x = stabilize(np.arange(n + 1), np.full(n + 1, n), cfg)
    assert np.all(np.diff(x) > 0)


@pytest.mark.parametrize("h, n", [(0, 7), (3, 7), (7, 7), (84, 305)])
def test_classical_transform_round_trips(h, n):
    assert inverse(stabilize(h, n, CLASSICAL)) == pytest.approx(h / n, abs=1e-12)


def test_stabilize_domain():
    with pytest.raises(DomainError):
        stabilize(1, 0)
    with pytest.raises(DomainError):
        stabilize(11, 10)
    with pytest.raises(DomainError):
        inverse(2.0)


@pytest.mark.parametrize("cfg", [CLASSICAL, MEAN_MATCHING, ANSCOMBE])
@pytest.mark.parametrize("n", [5, 12, 40])
def test_bias_vanishes_at_one_half(cfg, n):
    assert exact_bias(n, 0.5, cfg) == pytest.approx(0.0, abs=1e-12)


def test_bias_curves_order_at_n12():
    b0 = exact_bias(12, 0.3, CLASSICAL)
    b1 = exact_bias(12, 0.3, MEAN_MATCHING)
    b3 = exact_bias(12, 0.3, ANSCOMBE)
    assert b3 > b1 > b0
    assert (b0, b1, b3) == pytest.approx((-0.0113608, -0.0006834, 0.0038272), abs=1e-6)


def test_bias_at_low_p_n10():
    assert exact_bias(10, 0.1, CLASSICAL) == pytest.approx(-0.0356, abs=5e-4)
    assert exact_bias(10, 0.1, MEAN_MATCHING) == pytest.approx(0.0029, abs=5e-4)
    assert exact_bias(10, 0.1, ANSCOMBE) == pytest.approx(0.0145, abs=5e-4)


@pytest.mark.parametrize("p", [0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9])
def test_mean_matching_has_the_smallest_bias_at_n10(p):
    b1 = abs(exact_bias(10, p, MEAN_MATCHING))
    assert b1 < abs(exact_bias(10, p, CLASSICAL))
    assert b1 < abs(exact_bias(10, p, ANSCOMBE))


def test_mean_matching_bias_is_second_order():
    scaled = [abs(exact_bias(n, 0.3, MEAN_MATCHING)) * n**2 for n in (20, 40, 80)]
    assert scaled == pytest.approx([0.0883, 0.0755, 0.0713], abs=1e-3)
    classical = [abs(exact_bias(n, 0.3, CLASSICAL)) * n for n in (20, 40, 80)]
    assert max(classical) / min(classical) < 1.2


def test_variance_ratio_tends_to_one():
    ratios = [exact_var_ratio(n, 0.3, MEAN_MATCHING) for n in (12, 48, 192)]
    assert ratios == pytest.approx([1.0229, 1.00275, 1.00054], abs=2e-4)
    assert ratios[0] > ratios[1] > ratios[2] > 1.0


def test_variance_ratio_near_one_in_the_middle_at_n12():
    for p in np.arange(0.15, 0.851, 0.05):
        assert 0.99 <= exact_var_ratio(12, float(p), MEAN_MATCHING) <= 1.035


def test_variance_ratio_ordering_at_low_p():
    assert exact_var_ratio(12, 0.2, CLASSICAL) == pytest.approx(1.434, abs=2e-3)
    assert exact_var_ratio(12, 0.2, MEAN_MATCHING) == pytest.approx(1.027, abs=2e-3)
    assert exact_var_ratio(12, 0.2, ANSCOMBE) == pytest.approx(0.980, abs=2e-3)


def test_exact_moments_domain():
    with pytest.raises(DomainError):
        exact_bias(0, 0.3)
    with pytest.raises(DomainError):
        exact_var_ratio(12, 1.0)


def test_diagnostic_curves_grid():
    frame = diagnostic_curves([0.0, 0.25, 0.375], [12])
    assert list(frame.columns) == ["c", "N", "p", "bias", "var_ratio"]
    assert len(frame) == 3 * 37
    row = frame[(frame["c"] == 0.25) & (np.isclose(frame["p"], 0.3))]
    assert row["bias"].iloc[0] == pytest.approx(-0.0006834, abs=1e-6)


def test_transformed_sample_from_counts():
    sample = TransformedSample.from_counts(["a", "b"], [3, 30], [10, 100])
    assert sample.size == 2
    assert sample.sigma2 == pytest.approx([1 / 40, 1 / 400])
    frame = sample.to_frame()
    assert list(frame.index) == ["a", "b"]
    shifted = sample.shifted(0.1)
    assert shifted.x == pytest.approx(sample.x + 0.1)


def test_transformed_sample_rejects_mismatched_arrays():
    with pytest.raises(ValueError):
        TransformedSample(player_ids=["a"], x=np.array([0.5, 0.6]), n=np.array([10.0, 10.0]))
