"""Serotonergic patience model.

The probability of continuing to search for a waypoint falls off as a
sigmoid of the likelihood of having reached it by time ``t``. That
likelihood is a Normal CDF in elapsed time, scaled (or, by default,
re-centred) by the prior reward probability that stands in for the
serotonin level.

Two readings of the sigmoid are provided:

``LITERAL``
    ``1 / (1 + exp(beta * q * Phi((t - mu) / sigma)))``. Taken at face value
    this makes a larger prior *less* patient.
``FIGURE`` (default)
    ``1 / (1 + exp(beta * (Phi((t - mu) / sigma) - q)))``. Half-wait point
    at ``mu + sigma * Phi^-1(q)``, so raising ``q`` shifts the curve right.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np

EXP_CLAMP = 700.0
LOW_SEROTONIN_Q = 0.50
HIGH_SEROTONIN_Q = 0.95


class Variant(str, enum.Enum):
    FIGURE = "figure"
    LITERAL = "literal"


class Decision(str, enum.Enum):
    WAIT = "wait"
    SKIP = "skip"


@dataclass(frozen=True)
class PatienceParams:
    prior_q: float = LOW_SEROTONIN_Q
    beta: float = 50.0
    mu: float = 40.0
    sigma: float = 20.0
    variant: Variant = Variant.FIGURE

    def __post_init__(self) -> None:
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 <= self.prior_q <= 1.0:
            raise ValueError(f"prior_q must lie in [0, 1], got {self.prior_q}")
        if not (math.isfinite(self.beta) and math.isfinite(self.mu)):
            raise ValueError("beta and mu must be finite")
        object.__setattr__(self, "variant", Variant(self.variant))

    @classmethod
    def low(cls, variant: Variant | str = Variant.FIGURE) -> PatienceParams:
        return cls(prior_q=LOW_SEROTONIN_Q, variant=Variant(variant))

    @classmethod
    def high(cls, variant: Variant | str = Variant.FIGURE) -> PatienceParams:
        return cls(prior_q=HIGH_SEROTONIN_Q, variant=Variant(variant))

    @classmethod
    def for_condition(cls, condition: str, variant: Variant | str = Variant.FIGURE) -> PatienceParams:
        if condition == "low":
            return cls.low(variant)
        if condition == "high":
            return cls.high(variant)
        raise ValueError(f"unknown serotonin condition {condition!r}")


def normal_cdf(x: float) -> float:
    """Standard normal CDF. ``erfc`` keeps full relative precision in the lower tail."""
    if not math.isfinite(x):
        raise ValueError(f"non-finite argument {x!r}")
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_ppf(p: float, tol: float = 1e-13) -> float:
    """Inverse standard normal CDF by bisection on :func:`normal_cdf`."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    lo, hi = -40.0, 40.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def likelihood_5ht(t: float, params: PatienceParams) -> float:
    """Prior-scaled likelihood of having reached the waypoint by time ``t``."""
    if t < 0.0:
        raise ValueError(f"elapsed time must be non-negative, got {t}")
    return params.prior_q * normal_cdf((t - params.mu) / params.sigma)


def _logistic_complement(exponent: float) -> float:
    exponent = min(EXP_CLAMP, max(-EXP_CLAMP, exponent))
    return 1.0 / (1.0 + math.exp(exponent))


def p_wait(t: float, params: PatienceParams) -> float:
    """Probability of continuing the search after ``t`` seconds."""
    if t < 0.0:
        raise ValueError(f"elapsed time must be non-negative, got {t}")
    if params.variant is Variant.LITERAL:
        return _logistic_complement(params.beta * likelihood_5ht(t, params))
    z = normal_cdf((t - params.mu) / params.sigma)
    return _logistic_complement(params.beta * (z - params.prior_q))


def half_wait_time(params: PatienceParams) -> float:
    """Time at which ``p_wait`` crosses 0.5 under the default variant."""
    if params.variant is not Variant.FIGURE:
        raise ValueError("closed-form half-wait time only exists for the figure variant")
    return params.mu + params.sigma * normal_ppf(params.prior_q)


def crossing_time(params: PatienceParams, level: float, t_max: float = 1e4, tol: float = 1e-9) -> float:
    """Time at which ``p_wait`` falls to ``level``, by bisection (p_wait is decreasing)."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    lo, hi = 0.0, t_max
    if p_wait(lo, params) <= level:
        return 0.0
    if p_wait(hi, params) > level:
        raise ValueError(f"p_wait never reaches {level} before t={t_max}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if p_wait(mid, params) > level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def decide_wait(t: float, params: PatienceParams, u: float) -> Decision:
    """Skip when the uniform draw ``u`` exceeds ``p_wait(t)``."""
    return Decision.SKIP if u > p_wait(t, params) else Decision.WAIT


@dataclass(frozen=True)
class SkipTimeDistribution:
    times: np.ndarray
    masses: np.ndarray
    survival: float

    @property
    def skip_probability(self) -> float:
        return float(self.masses.sum())

    @property
    def mean_skip_time(self) -> float:
        """Mean skip time conditioned on a skip happening before the horizon."""
        total = self.masses.sum()
        if total == 0.0:
            return math.nan
        return float(np.dot(self.times, self.masses) / total)


def skip_time_distribution(
    params: PatienceParams,
    tick: float = 1.0,
    horizon: float = 3600.0,
    p_wait_fn=None,
) -> SkipTimeDistribution:
    """Exact distribution of the first skip when checks fire at ``tick, 2*tick, ...``.

    ``p_wait_fn`` overrides the wait curve (used for degenerate test laws).
    """
    if tick <= 0.0:
        raise ValueError("tick must be positive")
    n = int(round(horizon / tick))
    if n < 1 or abs(n * tick - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon must be a positive multiple of tick")
    fn = p_wait_fn or (lambda t: p_wait(t, params))
    times = tick * np.arange(1, n + 1, dtype=float)
    masses = np.empty(n)
    alive = 1.0
    for k, t in enumerate(times):
        pw = fn(float(t))
        masses[k] = alive * (1.0 - pw)
        alive *= pw
    return SkipTimeDistribution(times=times, masses=masses, survival=alive)


@dataclass(frozen=True)
class WaitCurve:
    params: PatienceParams
    samples: tuple[tuple[float, float], ...]


def wait_curve(params: PatienceParams, t_max: float = 120.0, step: float = 1.0) -> WaitCurve:
    if step <= 0.0:
        raise ValueError("step must be positive")
    n = int(math.floor(t_max / step + 1e-9))
    samples = tuple((k * step, p_wait(k * step, params)) for k in range(n + 1))
    return WaitCurve(params=params, samples=samples)


def curves_csv(low: WaitCurve, high: WaitCurve) -> str:
    """``t,p_wait_low,p_wait_high`` table for two curves sampled on the same grid."""
    if [t for t, _ in low.samples] != [t for t, _ in high.samples]:
        raise ValueError("curves must share a time grid")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "p_wait_low", "p_wait_high"])
    for (t, lo), (_, hi) in zip(low.samples, high.samples):
        w.writerow([f"{t:.6f}", f"{lo:.12e}", f"{hi:.12e}"])
    return buf.getvalue()


def read_curves_csv(text: str) -> list[tuple[float, float, float]]:
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != ["t", "p_wait_low", "p_wait_high"]:
        raise ValueError(f"unexpected header {rows[0]}")
    return [(float(a), float(b), float(c)) for a, b, c in rows[1:]]


def monte_carlo_skip_times(
    params: PatienceParams,
    runs: int,
    rng: np.random.Generator,
    tick: float = 1.0,
    horizon: float = 600.0,
    chunk: int = 10_000,
) -> np.ndarray:
    """Simulate the per-tick skip rule against an unreachable waypoint.

    Each run draws one uniform per tick and skips at the first tick where the
    draw exceeds ``p_wait``. Runs that survive to ``horizon`` come back as NaN.
    """
    n = int(round(horizon / tick))
    times = tick * np.arange(1, n + 1, dtype=float)
    pw = np.array([p_wait(float(t), params) for t in times])
    out = np.empty(runs)
    for start in range(0, runs, chunk):
        m = min(chunk, runs - start)
        u = rng.random((m, n))
        skip = u > pw
        first = skip.argmax(axis=1)
        any_skip = skip[np.arange(m), first]
        out[start : start + m] = np.where(any_skip, times[first], np.nan)
    return out
