from __future__ import annotations
import logging
from typing import Iterable, List, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import gammaln

from ..errors import DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, int, np.ndarray, pd.Series]

HALF_PI = np.pi / 2
ANSCOMBE_C = 0.375


class TransformConfig(BaseModel):
    """Offset constant c in arcsin sqrt((H + c) / (N + 2c))."""

    model_config = ConfigDict(frozen=True)

    c: float = Field(0.25, ge=0.0, le=0.5, description="0 (classical), 1/4 (mean matching), 3/8 (Anscombe)")


DEFAULT_TRANSFORM = TransformConfig()


def stabilize(H: ArrayLike, N: ArrayLike, cfg: TransformConfig = DEFAULT_TRANSFORM) -> ArrayLike:
    """Arcsine transform of binomial counts, in radians."""
    h = np.asarray(H, dtype=float)
    n = np.asarray(N, dtype=float)
    if np.any(n < 1):
        raise DomainError("stabilize needs N >= 1")
    if np.any(h < 0) or np.any(h > n):
        raise DomainError("stabilize needs 0 <= H <= N")
    x = np.arcsin(np.sqrt((h + cfg.c) / (n + 2 * cfg.c)))
    return float(x) if x.ndim == 0 else x


def inverse(x: ArrayLike) -> ArrayLike:
    """sin^2 x: back to the proportion scale."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(arr > HALF_PI) or not np.all(np.isfinite(arr)):
        raise DomainError("inverse needs 0 <= x <= pi/2")
    p = np.sin(arr) ** 2
    return float(p) if p.ndim == 0 else p


def _binomial_pmf(N: int, p: float) -> np.ndarray:
    h = np.arange(N + 1)
    log_pmf = gammaln(N + 1) - gammaln(h + 1) - gammaln(N - h + 1) + h * np.log(p) + (N - h) * np.log1p(-p)
    return np.exp(log_pmf)


def _check_np(N: int, p: float) -> None:
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")


def _moments(N: int, p: float, cfg: TransformConfig) -> tuple[float, float]:
    _check_np(N, p)
    pmf = _binomial_pmf(N, p)
    y = np.arcsin(np.sqrt((np.arange(N + 1) + cfg.c) / (N + 2 * cfg.c)))
    mean = float(np.dot(pmf, y))
    var = float(np.dot(pmf, (y - mean) ** 2))
    return mean, var


def exact_bias(N: int, p: float, cfg: TransformConfig = DEFAULT_TRANSFORM) -> float:
    """sin^2(E_p Y) - p with E_p Y summed exactly over the binomial support."""
    mean, _ = _moments(N, p, cfg)
    return float(np.sin(mean) ** 2 - p)


def nominal_variance(N: int, cfg: TransformConfig = DEFAULT_TRANSFORM) -> float:
    # Anscombe's offset has its own normalizer; every other c uses 1/(4N).
    if np.isclose(cfg.c, ANSCOMBE_C):
        return 1.0 / (4 * N + 2)
    return 1.0 / (4 * N)


def exact_var_ratio(N: int, p: float, cfg: TransformConfig = DEFAULT_TRANSFORM) -> float:
    """Exact Var_p(Y) divided by its nominal asymptotic value."""
    _, var = _moments(N, p, cfg)
    return var / nominal_variance(N, cfg)


def diagnostic_curves(
    cs: Iterable[float],
    Ns: Iterable[int],
    ps: Sequence[float] | None = None,
) -> pd.DataFrame:
    """Bias and variance-ratio grid over (c, N, p); columns c,N,p,bias,var_ratio."""
    grid_p = list(ps) if ps else [round(v, 3) for v in np.arange(0.05, 0.951, 0.025)]
    rows = []
    for c in cs:
        cfg = TransformConfig(c=c)
        for N in Ns:
            for p in grid_p:
                mean, var = _moments(int(N), float(p), cfg)
                rows.append(
                    {
                        "c": c,
                        "N": int(N),
                        "p": float(p),
                        "bias": float(np.sin(mean) ** 2 - p),
                        "var_ratio": var / nominal_variance(int(N), cfg),
                    }
                )
    return pd.DataFrame(rows, columns=["c", "N", "p", "bias", "var_ratio"])


class TransformedSample(BaseModel):
    """Stabilized observations X_i with known variances sigma2_i = 1/(4 N_i)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    player_ids: List[str]
    x: np.ndarray
    n: np.ndarray

    @model_validator(mode="after")
    def consistent(self) -> "TransformedSample":
        size = len(self.player_ids)
        if self.x.shape != (size,) or self.n.shape != (size,):
            raise ValueError("player_ids, x and n must have the same length")
        if np.any(self.n < 1):
            raise ValueError("every N must be >= 1")
        if np.any(self.x < 0) or np.any(self.x > HALF_PI):
            raise ValueError("x must lie in [0, pi/2]")
        return self

    @property
    def sigma2(self) -> np.ndarray:
        return 1.0 / (4.0 * self.n)

    @property
    def size(self) -> int:
        return len(self.player_ids)

    def __len__(self) -> int:
        return self.size

    @classmethod
    def from_counts(
        cls,
        player_ids: Sequence[str],
        H: ArrayLike,
        N: ArrayLike,
        cfg: TransformConfig = DEFAULT_TRANSFORM,
    ) -> "TransformedSample":
        n = np.asarray(N, dtype=float)
        x = np.atleast_1d(np.asarray(stabilize(H, n, cfg), dtype=float))
        return cls(player_ids=[str(p) for p in player_ids], x=x, n=np.atleast_1d(n))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, cfg: TransformConfig = DEFAULT_TRANSFORM) -> "TransformedSample":
        """From a frame indexed by player_id with columns N and H."""
        return cls.from_counts(list(frame.index), frame["H"].to_numpy(), frame["N"].to_numpy(), cfg)

    def shifted(self, delta: float) -> "TransformedSample":
        """Same sample with every X moved by ``delta`` (range check skipped via construct)."""
        return TransformedSample.model_construct(player_ids=self.player_ids, x=self.x + delta, n=self.n)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"X": self.x, "sigma2": self.sigma2, "N": self.n},
            index=pd.Index(self.player_ids, name="player_id"),
        )
