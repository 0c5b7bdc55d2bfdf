from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Literal, Optional, Type

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, PositiveInt
from scipy.optimize import brentq, minimize_scalar

from ..errors import DomainError, NumericError
from .numerics import QuadratureGrid, integrate_2d
from .transform import HALF_PI, TransformedSample

"""
Predictors of the latent transformed means from one heteroscedastic sample:
naive, group means, parametric EB (moments and likelihood), nonparametric EB,
the harmonic-prior Bayes rule and positive-part James-Stein.
"""

logger = logging.getLogger(__name__)


# Result types
class HyperEstimate(BaseModel):
    """Fitted prior centre and spread of the latent abilities."""

    model_config = ConfigDict(frozen=True)

    mu: float
    tau2: float = Field(..., ge=0.0)
    method: Literal["MM", "ML"]
    iterations: int
    converged: bool


class EstimateVector(BaseModel):
    """One delta per estimation-set player, on the transformed scale."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    estimator: str
    player_ids: List[str]
    delta: np.ndarray
    config: Dict[str, Any] = Field(default_factory=dict)
    hyper: Optional[HyperEstimate] = None
    clamped: int = 0
    fallbacks: int = 0

    @classmethod
    def build(
        cls,
        estimator: str,
        sample: TransformedSample,
        delta: np.ndarray,
        config: Optional[Dict[str, Any]] = None,
        **extra: Any,
    ) -> "EstimateVector":
        """Clamp to [0, pi/2] and count how many entries moved."""
        delta = np.broadcast_to(np.asarray(delta, dtype=float), (sample.size,)).copy()
        if not np.all(np.isfinite(delta)):
            raise NumericError(f"{estimator}: non-finite prediction")
        clipped = np.clip(delta, 0.0, HALF_PI)
        clamped = int(np.count_nonzero(clipped != delta))
        if clamped:
            logger.warning("%s: clamped %d predictions into [0, pi/2]", estimator, clamped)
        return cls(
            estimator=estimator,
            player_ids=list(sample.player_ids),
            delta=clipped,
            config=dict(config or {}),
            clamped=clamped,
            **extra,
        )

    @property
    def delta_prop(self) -> np.ndarray:
        return np.sin(self.delta) ** 2

    def as_series(self) -> pd.Series:
        return pd.Series(self.delta, index=pd.Index(self.player_ids, name="player_id"), name=self.estimator)

    def to_frame(self) -> pd.DataFrame:
        """Rows ``player_id,estimator,delta,delta_prop``."""
        return pd.DataFrame(
            {
                "player_id": self.player_ids,
                "estimator": self.estimator,
                "delta": self.delta,
                "delta_prop": self.delta_prop,
            }
        )


def _require(sample: TransformedSample, minimum: int, what: str) -> None:
    if sample.size < minimum:
        raise DomainError(f"{what} needs at least {minimum} players, got {sample.size}")


def _weighted_mean(x: np.ndarray, w: np.ndarray) -> float:
    return float(np.dot(w, x) / w.sum())


# Simple predictors
def naive(sample: TransformedSample) -> EstimateVector:
    _require(sample, 1, "naive")
    return EstimateVector.build("naive", sample, sample.x)


def grand_mean(sample: TransformedSample) -> EstimateVector:
    _require(sample, 1, "mean")
    return EstimateVector.build("mean", sample, np.full(sample.size, float(sample.x.mean())))


def weighted_mean(sample: TransformedSample) -> EstimateVector:
    """Every delta equals the 1/sigma^2-weighted mean."""
    _require(sample, 1, "weighted_mean")
    return EstimateVector.build("weighted_mean", sample, np.full(sample.size, _weighted_mean(sample.x, 1.0 / sample.sigma2)))


# Parametric empirical Bayes
def _moment_tau2(x: np.ndarray, sigma2: np.ndarray, mu: float) -> float:
    P = x.size
    return max(0.0, float(np.sum((x - mu) ** 2) - (P - 1) / P * sigma2.sum())) / (P - 1)


def fit_mm(sample: TransformedSample, tolerance: float = 1e-10, max_iter: int = 500) -> HyperEstimate:
    """
    Method-of-moments hyperparameters.

    Seeded by plugging the unweighted mean into the tau^2 equation, then alternates the
    precision-weighted mean and the moment equation until both move less than ``tolerance``.
    """
    _require(sample, 2, "fit_mm")
    x, s2 = sample.x, sample.sigma2
    mu = float(x.mean())
    tau2 = _moment_tau2(x, s2, mu)
    for iteration in range(1, max_iter + 1):
        new_mu = _weighted_mean(x, 1.0 / (tau2 + s2))
        new_tau2 = _moment_tau2(x, s2, new_mu)
        done = abs(new_mu - mu) < tolerance and abs(new_tau2 - tau2) < tolerance
        mu, tau2 = new_mu, new_tau2
        if done:
            return HyperEstimate(mu=mu, tau2=tau2, method="MM", iterations=iteration, converged=True)
    logger.warning("fit_mm did not converge in %d iterations (mu=%.6g, tau2=%.6g)", max_iter, mu, tau2)
    return HyperEstimate(mu=mu, tau2=tau2, method="MM", iterations=max_iter, converged=False)


def _ml_tau2(x: np.ndarray, s2: np.ndarray, mu: float) -> float:
    d2 = (x - mu) ** 2

    def score(t: float) -> float:
        v = t + s2
        return float(np.sum(d2 / v**2) - np.sum(1.0 / v))

    if score(0.0) <= 0.0:
        return 0.0
    hi = max(float(d2.mean()), float(s2.max()))
    while score(hi) > 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise NumericError("fit_ml could not bracket the variance score root")
    return float(brentq(score, 0.0, hi, xtol=1e-15, rtol=1e-13))


def fit_ml(sample: TransformedSample, tolerance: float = 1e-10, max_iter: int = 500) -> HyperEstimate:
    """
    Marginal maximum likelihood hyperparameters.

    Alternates the weighted mean at fixed tau^2 with a bracketed root solve of the
    tau^2 score equation at fixed mu; tau^2 = 0 when the score is nonpositive at 0.
    """
    _require(sample, 2, "fit_ml")
    x, s2 = sample.x, sample.sigma2
    tau2 = _moment_tau2(x, s2, float(x.mean()))
    mu = _weighted_mean(x, 1.0 / (tau2 + s2))
    for iteration in range(1, max_iter + 1):
        new_tau2 = _ml_tau2(x, s2, mu)
        new_mu = _weighted_mean(x, 1.0 / (new_tau2 + s2))
        done = abs(new_mu - mu) < tolerance and abs(new_tau2 - tau2) < tolerance
        mu, tau2 = new_mu, new_tau2
        if done:
            return HyperEstimate(mu=mu, tau2=tau2, method="ML", iterations=iteration, converged=True)
    logger.warning("fit_ml did not converge in %d iterations (mu=%.6g, tau2=%.6g)", max_iter, mu, tau2)
    return HyperEstimate(mu=mu, tau2=tau2, method="ML", iterations=max_iter, converged=False)


def shrink_linear(sample: TransformedSample, hyper: HyperEstimate, name: Optional[str] = None) -> EstimateVector:
    """delta_i = mu + tau^2 / (tau^2 + sigma_i^2) (X_i - mu)."""
    factor = hyper.tau2 / (hyper.tau2 + sample.sigma2)
    delta = hyper.mu + factor * (sample.x - hyper.mu)
    label = name or f"eb_{hyper.method.lower()}"
    return EstimateVector.build(
        label, sample, delta, {"mu": hyper.mu, "tau2": hyper.tau2, "iterations": hyper.iterations}, hyper=hyper
    )


# Nonparametric empirical Bayes
class NpebConfig(BaseModel):
    h: float = Field(..., gt=0.0, description="Bandwidth constant; kernel bandwidth^2 is h sigma_i^2")

    @classmethod
    def for_size(
        cls, P: int, h: Optional[float] = None, h_large: float = 0.25, h_small: float = 0.30, large_p: int = 200
    ) -> "NpebConfig":
        if h is not None:
            return cls(h=h)
        return cls(h=h_large if P > large_p else h_small)


def npeb(sample: TransformedSample, cfg: Optional[NpebConfig] = None) -> EstimateVector:
    """
    Tweedie's formula on a heteroscedastic kernel estimate of the marginal density.

    For player i the kernel sum runs over k with (1+h) sigma_i^2 > sigma_k^2 (k = i included),
    with bandwidth b_ik = sqrt((1+h) max(sigma_k^2, sigma_i^2) - sigma_k^2). The derivative
    is taken term-wise, and the weights are accumulated after subtracting the largest log term.
    """
    _require(sample, 2, "npeb")
    cfg = cfg or NpebConfig.for_size(sample.size)
    h = cfg.h
    x, s2 = sample.x, sample.sigma2

    si = s2[:, None]
    sk = s2[None, :]
    admitted = (1.0 + h) * si - sk > 0.0
    b = np.sqrt((1.0 + h) * np.maximum(sk, si) - sk)
    z = (x[:, None] - x[None, :]) / b
    log_w = np.where(admitted, -0.5 * z**2 - np.log(b), -np.inf)
    log_w -= log_w.max(axis=1, keepdims=True)
    w = np.exp(log_w)
    total = w.sum(axis=1)
    slope = np.sum(w * (-z / b), axis=1)

    ok = np.isfinite(slope) & np.isfinite(total) & (total > 0.0)
    delta = np.where(ok, x + s2 * np.divide(slope, total, out=np.zeros_like(slope), where=ok), x)
    fallbacks = int(np.count_nonzero(~ok))
    if fallbacks:
        logger.warning("npeb: degenerate kernel density for %d players; kept X", fallbacks)
    return EstimateVector.build("npeb", sample, delta, {"h": h}, fallbacks=fallbacks)


# Harmonic-prior Bayes
class HbConfig(BaseModel):
    nodes_mu: PositiveInt = 64
    nodes_omega: PositiveInt = 64
    span_sd: float = Field(8.0, gt=0.0, description="Half-width of the mu axis in posterior sd")
    drop: float = Field(40.0, gt=0.0, description="Log-density drop that bounds the omega axis")
    check_refinement: bool = True
    refinement_tol: float = Field(1e-6, gt=0.0)
    block: PositiveInt = Field(64, description="Players integrated per vectorized block")
    workers: PositiveInt = 1


class _HbPosterior:
    """Posterior of (mu, gamma) under flat priors, in coordinates (u, t = log omega).

    omega = s0 / (gamma + s0) with s0 = min sigma_i^2, and mu = mu_hat(gamma) + u / sqrt(sum w)
    with w_j = 1 / (gamma + sigma_j^2); the u-profile is then exactly standard normal.
    Near omega = 0 the omega-density goes like omega^((P - 5) / 2), singular at P = 4;
    in t it decays like exp((P - 3) t / 2) and is smooth for every P >= 4.
    """

    def __init__(self, sample: TransformedSample):
        self.x = sample.x
        self.s2 = sample.sigma2
        self.s0 = float(self.s2.min())

    def gamma(self, omega: np.ndarray) -> np.ndarray:
        return self.s0 * (1.0 - omega) / omega

    def centre(self, omega: np.ndarray):
        """mu_hat, posterior sd of mu given gamma, and the log marginal density of t = log omega."""
        omega = np.asarray(omega, dtype=float)
        g = self.gamma(omega)[..., None]
        v = g + self.s2
        w = 1.0 / v
        S = w.sum(axis=-1)
        mu_hat = np.sum(w * self.x, axis=-1) / S
        q = np.sum(w * (self.x - mu_hat[..., None]) ** 2, axis=-1)
        log_f = (
            -0.5 * np.sum(np.log(v), axis=-1)
            - 0.5 * np.log(S)
            - 0.5 * q
            + np.log(self.s0)
            - np.log(omega)
        )
        return mu_hat, 1.0 / np.sqrt(S), log_f

    def log_omega_range(self, drop: float) -> tuple[float, float, float]:
        """Interval of t = log omega where the log marginal is within ``drop`` of its maximum, plus the mode."""
        t = np.linspace(np.log(1e-14), 0.0, 4001)
        _, _, log_f = self.centre(np.exp(t))
        top = int(np.argmax(log_f))
        lo_i, hi_i = max(top - 1, 0), min(top + 1, t.size - 1)
        polished = minimize_scalar(
            lambda s: -float(self.centre(np.exp(np.array([s])))[2][0]),
            bounds=(t[lo_i], t[hi_i]),
            method="bounded",
            options={"xatol": 1e-10},
        )
        mode = float(polished.x)
        peak = max(float(log_f[top]), -float(polished.fun))
        inside = np.flatnonzero(log_f >= peak - drop)
        lo = float(t[max(inside[0] - 1, 0)])
        hi = float(t[min(inside[-1] + 1, t.size - 1)])
        return lo, hi, mode


def hb_grid(sample: TransformedSample, cfg: HbConfig = HbConfig()) -> QuadratureGrid:
    """(u, log omega) product grid: u on +-span_sd, log omega on the data-driven support."""
    lo, hi, mode = _HbPosterior(sample).log_omega_range(cfg.drop)
    logger.debug("harmonic: omega support [%.3g, %.3g], mode %.6g", np.exp(lo), np.exp(hi), np.exp(mode))
    return QuadratureGrid.gauss_legendre(cfg.nodes_mu, cfg.nodes_omega, (-cfg.span_sd, cfg.span_sd), (lo, hi))


def _hb_delta(post: _HbPosterior, grid: QuadratureGrid, block: int, workers: int) -> np.ndarray:
    omega = np.exp(grid.b_nodes)
    mu_hat, sd, log_f = post.centre(omega)
    log_f = log_f - log_f.max()
    base = np.exp(log_f)[None, :] * np.exp(-0.5 * grid.a_nodes**2)[:, None]
    mu = mu_hat[None, :] + sd[None, :] * grid.a_nodes[:, None]
    gamma = post.gamma(omega)

    mass = integrate_2d(lambda a, b: base, grid)
    mean_mu = integrate_2d(lambda a, b: base * mu, grid) / mass

    def one_block(start: int) -> np.ndarray:
        s2 = post.s2[start:start + block]
        x = post.x[start:start + block]
        shrink = (gamma[None, :] / (gamma[None, :] + s2[:, None]))[:, None, :]  # (k, 1, n_omega)
        e_b = integrate_2d(lambda a, b: base[None] * shrink, grid) / mass
        e_bmu = integrate_2d(lambda a, b: base[None] * shrink * mu[None], grid) / mass
        return mean_mu + x * np.atleast_1d(e_b) - np.atleast_1d(e_bmu)

    starts = list(range(0, post.x.size, block))
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one_block, starts))
    else:
        parts = [one_block(s) for s in starts]
    return np.concatenate(parts)


def harmonic_bayes(
    sample: TransformedSample,
    cfg: HbConfig = HbConfig(),
    grid: Optional[QuadratureGrid] = None,
) -> EstimateVector:
    """
    Formal Bayes rule under a flat prior on mu and on gamma = tau^2.

    delta_i = E[mu + gamma/(gamma + sigma_i^2) (X_i - mu) | X], each a ratio of 2-D
    Gauss-Legendre quadratures; with ``check_refinement`` the result is recomputed on
    twice the nodes and a relative change above ``refinement_tol`` is a NumericError.
    """
    _require(sample, 4, "harmonic_bayes")
    post = _HbPosterior(sample)
    grid = grid or hb_grid(sample, cfg)
    delta = _hb_delta(post, grid, cfg.block, cfg.workers)
    omega_lo, omega_hi = np.exp(grid.b_range)
    echo = {"nodes_mu": grid.shape[0], "nodes_omega": grid.shape[1], "omega_lo": float(omega_lo), "omega_hi": float(omega_hi)}
    if cfg.check_refinement:
        finer = _hb_delta(post, grid.refined(), cfg.block, cfg.workers)
        change = float(np.max(np.abs(finer - delta)) / max(float(np.max(np.abs(finer))), 1e-300))
        echo["refinement_change"] = change
        if not change < cfg.refinement_tol:
            raise NumericError(
                f"harmonic_bayes: refinement {grid.shape} -> {grid.refined().shape} changed the "
                f"predictions by {change:.3g} (tolerance {cfg.refinement_tol:.3g}); "
                f"omega support [{omega_lo:.3g}, {omega_hi:.3g}]"
            )
    return EstimateVector.build("harmonic", sample, delta, echo)


# James-Stein
def james_stein(sample: TransformedSample) -> EstimateVector:
    """Positive-part James-Stein toward the precision-weighted mean."""
    _require(sample, 4, "james_stein")
    x, s2 = sample.x, sample.sigma2
    centre = _weighted_mean(x, 1.0 / s2)
    spread = float(np.sum((x - centre) ** 2 / s2))
    factor = max(0.0, 1.0 - (sample.size - 3) / spread) if spread > 0 else 0.0
    return EstimateVector.build("james_stein", sample, centre + factor * (x - centre), {"mu": centre, "factor": factor})


# Descriptive summary
class FirstPeriodSummary(BaseModel):
    cohort: str
    players: int
    x_bar: float
    n_bar: float
    r_squared: float


def first_period_summary(sample: TransformedSample, cohort: str = "all") -> FirstPeriodSummary:
    """Mean X, mean N and the R^2 of X regressed on N."""
    _require(sample, 1, "first_period_summary")
    if sample.size > 1 and np.ptp(sample.x) > 0 and np.ptp(sample.n) > 0:
        r2 = float(np.corrcoef(sample.n, sample.x)[0, 1] ** 2)
    else:
        r2 = 0.0
    return FirstPeriodSummary(
        cohort=cohort,
        players=sample.size,
        x_bar=float(sample.x.mean()),
        n_bar=float(sample.n.mean()),
        r_squared=r2,
    )


# Estimator objects
class Estimator(BaseModel):
    """A named predictor with its parameters; ``run`` maps a sample to an EstimateVector."""

    name: str
    label: str = ""
    description: str = ""

    def run(self, sample: TransformedSample, log: bool = True) -> EstimateVector:
        if log:
            logger.info("Fitting %s on %d players", self.name, sample.size)
        return self._run(sample)

    def _run(self, sample: TransformedSample) -> EstimateVector:
        raise NotImplementedError


class NaiveEstimator(Estimator):
    name: str = "naive"

    def _run(self, sample: TransformedSample) -> EstimateVector:
        return naive(sample)


class GroupMeanEstimator(Estimator):
    name: str = "mean"

    def _run(self, sample: TransformedSample) -> EstimateVector:
        return grand_mean(sample)


class WeightedMeanEstimator(Estimator):
    name: str = "weighted_mean"

    def _run(self, sample: TransformedSample) -> EstimateVector:
        return weighted_mean(sample)


class MomentsEstimator(Estimator):
    name: str = "eb_mm"
    tolerance: float = 1e-10
    max_iter: PositiveInt = 500

    def _run(self, sample: TransformedSample) -> EstimateVector:
        return shrink_linear(sample, fit_mm(sample, self.tolerance, self.max_iter), self.name)


class LikelihoodEstimator(Estimator):
    name: str = "eb_ml"
    tolerance: float = 1e-10
    max_iter: PositiveInt = 500

    def _run(self, sample: TransformedSample) -> EstimateVector:
        return shrink_linear(sample, fit_ml(sample, self.tolerance, self.max_iter), self.name)


class NpebEstimator(Estimator):
    name: str = "npeb"
    h: Optional[float] = Field(None, gt=0.0)
    h_large: float = 0.25
    h_small: float = 0.30
    large_p: int = 200

    def _run(self, sample: TransformedSample) -> EstimateVector:
        cfg = NpebConfig.for_size(sample.size, self.h, self.h_large, self.h_small, self.large_p)
        return npeb(sample, cfg)


class HarmonicEstimator(Estimator):
    name: str = "harmonic"
    nodes_mu: PositiveInt = 64
    nodes_omega: PositiveInt = 64
    span_sd: float = 8.0
    check_refinement: bool = True
    refinement_tol: float = 1e-6
    workers: PositiveInt = 1

    def _run(self, sample: TransformedSample) -> EstimateVector:
        cfg = HbConfig(
            nodes_mu=self.nodes_mu,
            nodes_omega=self.nodes_omega,
            span_sd=self.span_sd,
            check_refinement=self.check_refinement,
            refinement_tol=self.refinement_tol,
            workers=self.workers,
        )
        return harmonic_bayes(sample, cfg)


class JamesSteinEstimator(Estimator):
    name: str = "james_stein"

    def _run(self, sample: TransformedSample) -> EstimateVector:
        return james_stein(sample)


ESTIMATOR_TYPES: Dict[str, Type[Estimator]] = {
    "naive": NaiveEstimator,
    "mean": GroupMeanEstimator,
    "weighted_mean": WeightedMeanEstimator,
    "eb_mm": MomentsEstimator,
    "eb_ml": LikelihoodEstimator,
    "npeb": NpebEstimator,
    "harmonic": HarmonicEstimator,
    "james_stein": JamesSteinEstimator,
}
