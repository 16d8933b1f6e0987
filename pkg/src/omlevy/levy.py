"""
Asymmetric alpha-stable jump measures with bounded variation.

The jump measure is

    nu(dxi) = c1 |xi|^(-1-alpha) 1{xi > 0} dxi + c2 |xi|^(-1-alpha) 1{xi < 0} dxi

with ``c1 = k_alpha (1 + beta) / 2`` and ``c2 = k_alpha (1 - beta) / 2``.  Only
``0 < alpha < 1`` is supported, where the small jumps are absolutely summable
and the mean of the jumps below one,

    Lambda = int_{|xi| < 1} xi nu(dxi) = alpha beta / (Gamma(2 - alpha) cos(pi alpha / 2)),

is finite.

Random streams
--------------
Every simulated path ``k`` of a run with master seed ``s`` draws from its own
Philox4x64 stream (see :func:`path_rng`).  The key is the first two 64-bit
words of ``numpy.random.SeedSequence(s)`` and the 256-bit counter starts at
``(0, 0, 0, k)``, so streams never overlap and the output of path ``k`` does
not depend on how many other paths are simulated or in which order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "AlphaStableMeasure",
    "JumpTrain",
    "k_alpha",
    "small_jump_mean",
    "tail_mass",
    "truncated_small_mean",
    "sample_jumps",
    "path_rng",
    "DEFAULT_DELTA",
]

DEFAULT_DELTA = 1e-3


def k_alpha(alpha: float) -> float:
    """Normalisation constant of the stable jump density.

    Parameters
    ----------
    alpha : float
        Stability index in ``(0, 1]``.

    Returns
    -------
    float
        ``alpha (1 - alpha) / (Gamma(2 - alpha) cos(pi alpha / 2))`` for
        ``alpha < 1`` and ``2 / pi`` at ``alpha = 1``.
    """
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return 2.0 / math.pi
    return alpha * (1.0 - alpha) / (math.gamma(2.0 - alpha) * math.cos(math.pi * alpha / 2.0))


@dataclass(frozen=True)
class AlphaStableMeasure:
    """Jump measure ``nu_{alpha, beta}`` and its derived constants.

    Attributes
    ----------
    alpha : float
        Stability index, ``0 < alpha < 1``.
    beta : float
        Skewness, ``-1 <= beta <= 1``.  ``beta = 1`` gives only positive jumps.
    k_alpha, c1, c2 : float
        Total and one-sided densities of the measure.
    lambda_mean : float
        Mean of the jumps smaller than one in absolute value.
    """

    alpha: float
    beta: float
    k_alpha: float = field(init=False)
    c1: float = field(init=False)
    c2: float = field(init=False)
    lambda_mean: float = field(init=False)

    def __post_init__(self):
        alpha, beta = float(self.alpha), float(self.beta)
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1) for bounded variation, got {alpha}")
        if not -1.0 <= beta <= 1.0:
            raise ValueError(f"beta must lie in [-1, 1], got {beta}")
        k = k_alpha(alpha)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "k_alpha", k)
        object.__setattr__(self, "c1", k * (1.0 + beta) / 2.0)
        object.__setattr__(self, "c2", k * (1.0 - beta) / 2.0)
        lam = alpha * beta / (math.gamma(2.0 - alpha) * math.cos(math.pi * alpha / 2.0))
        object.__setattr__(self, "lambda_mean", lam)

    @property
    def positive_fraction(self) -> float:
        """Probability that a jump is positive, ``c1 / (c1 + c2)``."""
        return self.c1 / (self.c1 + self.c2)


def small_jump_mean(measure: AlphaStableMeasure) -> float:
    """Return ``Lambda_{alpha,beta}``, the mean of jumps with ``|xi| < 1``."""
    a, b = measure.alpha, measure.beta
    return a * b / (math.gamma(2.0 - a) * math.cos(math.pi * a / 2.0))


def tail_mass(measure: AlphaStableMeasure, delta: float) -> float:
    """Poisson rate of jumps with ``|xi| >= delta``: ``k_alpha delta^-alpha / alpha``."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return (measure.c1 + measure.c2) * delta ** (-measure.alpha) / measure.alpha


def truncated_small_mean(measure: AlphaStableMeasure, delta: float) -> float:
    """Mean rate ``m_delta`` of the jumps with ``|xi| < delta``.

    Equal to ``(c1 - c2) delta^(1-alpha) / (1 - alpha)``; it reaches
    ``lambda_mean`` at ``delta = 1``.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    a = measure.alpha
    return (measure.c1 - measure.c2) * delta ** (1.0 - a) / (1.0 - a)


@dataclass(frozen=True)
class JumpTrain:
    """Jumps of size at least ``delta`` on ``[0, T]``.

    ``compensator_drift`` is the rate ``m_delta`` standing in for the omitted
    jumps below ``delta``.
    """

    times: np.ndarray
    sizes: np.ndarray
    delta: float
    compensator_drift: float

    def __len__(self):
        return len(self.times)


def sample_jumps(
    measure: AlphaStableMeasure,
    T: float,
    delta: float,
    rng: np.random.Generator,
) -> JumpTrain:
    """Draw the jumps of size ``|xi| >= delta`` on ``[0, T]``.

    The count is Poisson with mean ``T * tail_mass(delta)``, times are uniform,
    a jump is positive with probability ``(1 + beta) / 2`` and its magnitude
    is ``delta * U^(-1/alpha)`` with ``U`` uniform on ``(0, 1)``.

    Draw order from ``rng``: count, times, signs, magnitudes.
    """
    if not T > 0:
        raise ValueError(f"horizon T must be positive, got {T}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    count = rng.poisson(T * tail_mass(measure, delta))
    times = np.sort(rng.uniform(0.0, T, size=count))
    signs = np.where(rng.random(count) < measure.positive_fraction, 1.0, -1.0)
    # 1 - U lies in (0, 1], which keeps the power finite
    u = 1.0 - rng.random(count)
    sizes = signs * delta * u ** (-1.0 / measure.alpha)
    return JumpTrain(times, sizes, float(delta), truncated_small_mean(measure, delta))


@lru_cache(maxsize=64)
def _philox_key(master_seed: int) -> tuple:
    return tuple(np.random.SeedSequence(master_seed).generate_state(2, np.uint64))


def path_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent, reproducible generator for path ``index`` of a run."""
    if int(master_seed) < 0 or int(index) < 0:
        raise ValueError("seeds and path indices must be non-negative")
    key = np.array(_philox_key(int(master_seed)), dtype=np.uint64)
    counter = np.array([0, 0, 0, int(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
