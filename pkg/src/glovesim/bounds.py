"""Concentration-bound calculators and their Monte Carlo validators.

Trial ``t`` of every validator draws from its own counter-based stream
``(seed, t)``, so results do not depend on how trials are split across
workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .detect import hoeffding_epsilon
from .verify import weissman_budget

# keeps per-call memory bounded for the (trials x K) count matrices
_CHUNK = 2048


@dataclass(frozen=True)
class SyntheticResponse:
    support: tuple[tuple[str, float], ...]
    seed: int = 0

    def __post_init__(self):
        support = tuple((str(k), float(p)) for k, p in self.support)
        object.__setattr__(self, "support", support)
        if not support:
            raise ValueError("support must be nonempty")
        if len({k for k, _ in support}) != len(support):
            raise ValueError("outcome labels must be distinct")
        if any(not p > 0 for _, p in support):
            raise ValueError("probabilities must be strictly positive")
        if abs(sum(p for _, p in support) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")

    @classmethod
    def of(cls, probs: Mapping[str, float] | Sequence[float], seed: int = 0) -> SyntheticResponse:
        if isinstance(probs, Mapping):
            return cls(tuple(probs.items()), seed)
        return cls(tuple((f"o{i}", p) for i, p in enumerate(probs)), seed)

    @property
    def labels(self) -> list[str]:
        return [k for k, _ in self.support]

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.support])

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    @property
    def K(self) -> int:
        return len(self.support)


def sample(resp: SyntheticResponse, n: int, stream: int = 0) -> list[str]:
    if n < 1:
        raise ValueError("n must be >= 1")
    labels = resp.labels
    return [labels[i] for i in kernels.draw_labels(resp.cdf, n, resp.seed, stream)]


def l1_distance(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    keys = set(p) | set(q)
    return math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in sorted(keys))


def _chunks(trials: int, jobs: int):
    size = min(_CHUNK, max(1, math.ceil(trials / max(jobs, 1))))
    return [(t, min(t + size, trials)) for t in range(0, trials, size)]


def _map_chunks(fn, trials: int, jobs: int):
    spans = _chunks(trials, jobs)
    if jobs <= 1 or len(spans) == 1:
        return [fn(a, b) for a, b in spans]
    # compiled kernels release the GIL, so threads give real parallelism
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda ab: fn(*ab), spans))


def mc_false_alarm_rate(resp: SyntheticResponse, n: int, delta: float, trials: int = 10_000,
                        epsilon: float | None = None, jobs: int = 1) -> dict[str, float]:
    """Per-outcome fraction of trials whose empirical mass deviates by more than the bound.

    ``epsilon`` overrides the Hoeffding threshold (for adversarial checks).
    """
    if trials < 1000:
        raise ValueError("use at least 1000 trials")
    eps = hoeffding_epsilon(n, delta) if epsilon is None else float(epsilon)
    cdf, q = resp.cdf, resp.probs
    parts = _map_chunks(lambda a, b: kernels.exceedance_counts(cdf, q, n, eps, resp.seed, a, b), trials, jobs)
    total = np.sum(parts, axis=0)
    return {label: int(c) / trials for label, c in zip(resp.labels, total)}


def mc_l1_coverage(resp: SyntheticResponse, alpha: int, epsilon: float, trials: int = 5_000,
                   jobs: int = 1) -> float:
    """Fraction of trials where the L1 error of an ``alpha``-sample estimate exceeds ``epsilon``."""
    if trials < 1000:
        raise ValueError("use at least 1000 trials")
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    cdf, q = resp.cdf, resp.probs
    fails = _map_chunks(lambda a, b: kernels.l1_failures(cdf, q, alpha, epsilon, resp.seed, a, b), trials, jobs)
    return sum(fails) / trials


def binomial_margin(p: float, trials: int, sigmas: float = 3.0) -> float:
    return sigmas * math.sqrt(p * (1 - p) / trials)


# -- validation grids ------------------------------------------------------

DETECTION_QS = ((0.5, 0.5), (0.7, 0.2, 0.1), (0.4, 0.3, 0.2, 0.1))
DETECTION_NS = (20, 50, 200)
COVERAGE_POINTS = ((2, 0.1, 0.05), (4, 0.2, 0.1))


@dataclass(frozen=True)
class ValidationResult:
    bound: str
    point: dict
    observed: float
    limit: float

    @property
    def passed(self) -> bool:
        return self.observed <= self.limit

    def line(self) -> str:
        pt = " ".join(f"{k}={v}" for k, v in self.point.items())
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.bound} {pt} observed={self.observed:.5f} limit={self.limit:.5f}"


def validate_detection(qs=DETECTION_QS, ns=DETECTION_NS, delta: float = 0.05, trials: int = 10_000,
                       seed: int = 0, epsilon: float | None = None, jobs: int = 1) -> list[ValidationResult]:
    limit = delta + binomial_margin(delta, trials)
    out = []
    for q in qs:
        resp = SyntheticResponse.of(q, seed)
        for n in ns:
            rates = mc_false_alarm_rate(resp, n, delta, trials, epsilon=epsilon, jobs=jobs)
            point = {"Q": list(q), "n": n, "delta": delta}
            if epsilon is not None:
                point["epsilon"] = epsilon
            out.append(ValidationResult("detection", point, max(rates.values()), limit))
    return out


def uniform_q(K: int) -> tuple[float, ...]:
    return tuple([1.0 / K] * K)


def validate_coverage(points=COVERAGE_POINTS, trials: int = 5_000, seed: int = 0,
                      alpha: int | None = None, jobs: int = 1) -> list[ValidationResult]:
    """Check L1 coverage at the budget for each (K, epsilon, delta).

    The uniform distribution is used as the hardest case among K-outcome
    responses for L1 estimation.
    """
    out = []
    for K, eps, delta in points:
        a = alpha if alpha is not None else weissman_budget(K, eps, delta)
        resp = SyntheticResponse.of(uniform_q(K), seed)
        rate = mc_l1_coverage(resp, a, eps, trials, jobs=jobs)
        out.append(ValidationResult("coverage", {"K": K, "epsilon": eps, "delta": delta, "alpha": a},
                                    rate, delta))
    return out
