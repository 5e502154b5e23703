"""Event-duration distributions for service and switch-over processes.

Three families are supported: exponential, gamma (shape/scale) and a
deterministic point mass.  All times are in the same abstract unit as the
arrival rates.  Every distribution exposes the handful of functionals the
model builders need: density, CDF, quantile, mean, variance, and the two
discounting moments E[exp(-b*t)] and E[t*exp(-b*t)].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special


class DurationDist:
    """Base class for event-duration distributions."""

    kind = "base"

    def mean(self) -> float:
        raise NotImplementedError

    def var(self) -> float:
        raise NotImplementedError

    def pdf(self, t):
        raise NotImplementedError

    def cdf(self, t):
        raise NotImplementedError

    def quantile(self, p: float) -> float:
        raise NotImplementedError

    def discount_factor(self, beta: float) -> float:
        """E[exp(-beta * t)] for t drawn from this distribution."""
        raise NotImplementedError

    def discounted_mean(self, beta: float) -> float:
        """E[t * exp(-beta * t)] for t drawn from this distribution."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> float:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_json(doc: dict) -> "DurationDist":
        kind = doc.get("kind")
        if kind == "exponential":
            return Exponential(rate=doc["rate"])
        if kind == "gamma":
            return Gamma(shape=doc["shape"], scale=doc["scale"])
        if kind == "deterministic":
            return Deterministic(value=doc["value"])
        raise ValueError(f"unknown duration kind: {kind!r}")


@dataclass(frozen=True)
class Exponential(DurationDist):
    rate: float
    kind = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"exponential rate must be > 0, got {self.rate}")

    def mean(self):
        return 1.0 / self.rate

    def var(self):
        return 1.0 / self.rate**2

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, self.rate * np.exp(-self.rate * t), 0.0)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, 1.0 - np.exp(-self.rate * t), 0.0)

    def quantile(self, p):
        if not 0 < p < 1:
            raise ValueError("quantile requires 0 < p < 1")
        return -math.log1p(-p) / self.rate

    def discount_factor(self, beta):
        return self.rate / (self.rate + beta)

    def discounted_mean(self, beta):
        return self.rate / (self.rate + beta) ** 2

    def sample(self, rng):
        return rng.exponential(1.0 / self.rate)

    def to_json(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Gamma(DurationDist):
    shape: float
    scale: float
    kind = "gamma"

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"gamma shape/scale must be > 0, got {self.shape}, {self.scale}")

    def mean(self):
        return self.shape * self.scale

    def var(self):
        return self.shape * self.scale**2

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        x = t[pos] / self.scale
        logp = (
            (self.shape - 1.0) * np.log(x)
            - x
            - special.gammaln(self.shape)
            - math.log(self.scale)
        )
        out[pos] = np.exp(logp)
        if self.shape == 1.0:
            out = np.where(t == 0, 1.0 / self.scale, out)
        return out

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, special.gammainc(self.shape, np.maximum(t, 0.0) / self.scale), 0.0)

    def quantile(self, p):
        # Bracketed root-find on the regularised incomplete gamma function.
        if not 0 < p < 1:
            raise ValueError("quantile requires 0 < p < 1")
        hi = self.mean() + 10.0 * math.sqrt(self.var())
        while special.gammainc(self.shape, hi / self.scale) < p:
            hi *= 2.0
        return optimize.brentq(
            lambda t: special.gammainc(self.shape, t / self.scale) - p,
            0.0,
            hi,
            xtol=1e-10,
            rtol=8.9e-16,
        )

    def discount_factor(self, beta):
        return (1.0 + beta * self.scale) ** (-self.shape)

    def discounted_mean(self, beta):
        return self.shape * self.scale * (1.0 + beta * self.scale) ** (-(self.shape + 1.0))

    def sample(self, rng):
        return rng.gamma(self.shape, self.scale)

    def to_json(self):
        return {"kind": "gamma", "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class Deterministic(DurationDist):
    value: float
    kind = "deterministic"

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"deterministic duration must be >= 0, got {self.value}")

    def mean(self):
        return self.value

    def var(self):
        return 0.0

    def pdf(self, t):
        raise ValueError("point mass has no density; integrate by point evaluation instead")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= self.value).astype(float)

    def quantile(self, p):
        if not 0 < p < 1:
            raise ValueError("quantile requires 0 < p < 1")
        return self.value

    def discount_factor(self, beta):
        return math.exp(-beta * self.value)

    def discounted_mean(self, beta):
        return self.value * math.exp(-beta * self.value)

    def sample(self, rng):
        return self.value

    def to_json(self):
        return {"kind": "deterministic", "value": self.value}
