from __future__ import annotations
import logging
from typing import Callable, Literal, NamedTuple, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.special import gammainc
from scipy.stats import kstwobign, norm

from ..errors import DomainError, NumericError

"""
Special functions, the Kolmogorov-Smirnov test and 2-D product quadrature.
"""

logger = logging.getLogger(__name__)

Real = Union[float, np.ndarray]
NullDistribution = Literal["std_normal", "uniform01"]
Sidedness = Literal["two", "one_upper"]


# Distribution functions
def normal_cdf(z: Real) -> Real:
    out = norm.cdf(z)
    return float(out) if np.ndim(out) == 0 else out


def normal_quantile(u: Real) -> Real:
    arr = np.asarray(u, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0) or not np.all(np.isfinite(arr)):
        raise DomainError("normal_quantile needs 0 < u < 1")
    out = norm.ppf(arr)
    return float(out) if out.ndim == 0 else out


def chisq_cdf(x: Real, df: int) -> Real:
    """Regularized lower incomplete gamma P(df/2, x/2)."""
    if df < 1:
        raise DomainError(f"chi-square degrees of freedom must be >= 1, got {df}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DomainError("chisq_cdf needs x >= 0")
    out = gammainc(df / 2.0, arr / 2.0)
    return float(out) if out.ndim == 0 else out


# Kolmogorov-Smirnov
class KsResult(NamedTuple):
    statistic: float
    p_value: float


def ks_test(sample, null: NullDistribution = "std_normal", sided: Sidedness = "two") -> KsResult:
    """
    One-sample KS test against a fully specified null.

    ``two`` uses D = sup|F_n - F0| with the asymptotic Kolmogorov tail at sqrt(n) D;
    ``one_upper`` uses D+ = sup(F_n - F0) with the tail exp(-2 n D+^2).
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n == 0:
        raise DomainError("ks_test needs a nonempty sample")
    if null == "std_normal":
        f0 = norm.cdf(x)
    elif null == "uniform01":
        f0 = np.clip(x, 0.0, 1.0)
    else:
        raise DomainError(f"unknown null distribution '{null}'")

    i = np.arange(1, n + 1)
    d_plus = float(np.max(i / n - f0))
    if sided == "one_upper":
        d_plus = max(d_plus, 0.0)
        return KsResult(d_plus, float(min(1.0, np.exp(-2.0 * n * d_plus**2))))
    if sided != "two":
        raise DomainError(f"unknown sidedness '{sided}'")
    d_minus = float(np.max(f0 - (i - 1) / n))
    d = max(d_plus, d_minus)
    return KsResult(d, float(kstwobign.sf(np.sqrt(n) * d)))


# Quadrature
class QuadratureGrid(BaseModel):
    """Product Gauss-Legendre rule: nodes and weights on two axes."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    a_nodes: np.ndarray
    a_weights: np.ndarray
    b_nodes: np.ndarray
    b_weights: np.ndarray
    a_range: Tuple[float, float]
    b_range: Tuple[float, float]

    @model_validator(mode="after")
    def well_formed(self) -> "QuadratureGrid":
        for nodes, weights in ((self.a_nodes, self.a_weights), (self.b_nodes, self.b_weights)):
            if nodes.shape != weights.shape or nodes.ndim != 1 or nodes.size == 0:
                raise ValueError("each axis needs matching 1-D node and weight arrays")
            if np.any(weights <= 0):
                raise ValueError("quadrature weights must be positive")
            if np.any(np.diff(nodes) <= 0):
                raise ValueError("quadrature nodes must be strictly increasing")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return self.a_nodes.size, self.b_nodes.size

    @staticmethod
    def _axis(n: int, lo: float, hi: float) -> Tuple[np.ndarray, np.ndarray]:
        if n < 1:
            raise DomainError("quadrature needs at least one node per axis")
        if not hi > lo:
            raise DomainError(f"empty quadrature interval [{lo}, {hi}]")
        t, w = leggauss(n)
        half = 0.5 * (hi - lo)
        return lo + half * (t + 1.0), half * w

    @classmethod
    def gauss_legendre(
        cls,
        n_a: int,
        n_b: int,
        a_range: Tuple[float, float] = (0.0, 1.0),
        b_range: Tuple[float, float] = (0.0, 1.0),
    ) -> "QuadratureGrid":
        a_nodes, a_weights = cls._axis(n_a, *a_range)
        b_nodes, b_weights = cls._axis(n_b, *b_range)
        return cls(
            a_nodes=a_nodes,
            a_weights=a_weights,
            b_nodes=b_nodes,
            b_weights=b_weights,
            a_range=(float(a_range[0]), float(a_range[1])),
            b_range=(float(b_range[0]), float(b_range[1])),
        )

    def refined(self) -> "QuadratureGrid":
        """Same intervals, twice the nodes per axis."""
        return self.gauss_legendre(2 * self.shape[0], 2 * self.shape[1], self.a_range, self.b_range)


def integrate_2d(f: Callable[[np.ndarray, np.ndarray], np.ndarray], grid: QuadratureGrid) -> Real:
    """
    Product-rule integral of ``f(a, b)`` over the grid.

    ``f`` is called once on the (n_a, n_b) mesh and may return extra leading axes
    (a vector of integrands); the result then has those leading axes.
    """
    a, b = np.meshgrid(grid.a_nodes, grid.b_nodes, indexing="ij")
    values = np.asarray(f(a, b), dtype=float)
    if values.shape[-2:] != a.shape:
        raise NumericError(f"integrand returned shape {values.shape}, expected (..., {a.shape[0]}, {a.shape[1]})")
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise NumericError(f"non-finite integrand at node index {tuple(int(i) for i in bad)}")
    weights = np.outer(grid.a_weights, grid.b_weights)
    out = np.tensordot(values, weights, axes=([-2, -1], [0, 1]))
    return float(out) if np.ndim(out) == 0 else out
