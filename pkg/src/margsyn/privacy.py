"""Privacy accounting and noise calibration.

All accounting happens in zero-concentrated DP: a mechanism adding Gaussian
noise with scale sigma to a sensitivity-Delta query satisfies rho-zCDP with
rho = Delta^2 / (2 sigma^2), and rho composes additively. The conversion to
an (epsilon, delta) guarantee uses the tight closed form

    epsilon = rho + 2 * sqrt(rho * ln(1 / delta))

whose inverse in sqrt(rho) is taken by the quadratic formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_SPLITS = {"one_way": 0.1, "select": 0.1, "publish": 0.8}


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def dp_to_zcdp(epsilon: float, delta: float) -> float:
    """Largest rho whose zCDP guarantee implies (epsilon, delta)-DP."""
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    _check_delta(delta)
    log_term = math.log(1.0 / delta)
    return (math.sqrt(log_term + epsilon) - math.sqrt(log_term)) ** 2


def zcdp_to_dp(rho: float, delta: float) -> float:
    """Epsilon implied at the given delta by a rho-zCDP guarantee."""
    if rho < 0.0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    _check_delta(delta)
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


def gaussian_sigma(sensitivity: float, rho: float) -> float:
    """Noise scale for one sensitivity-bounded query under a rho budget."""
    if sensitivity <= 0.0:
        raise ValueError(f"sensitivity must be positive, got {sensitivity}")
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    return sensitivity / math.sqrt(2.0 * rho)


def sigma_for_m_tasks(
    epsilon: float, delta: float, m: int, sensitivity: float
) -> float:
    """Per-task noise scale for m equal queries under one (eps, delta) budget.

    Closed form of splitting the converted rho evenly: with
    L = 2 m Delta^2 ln(1/delta),

        sigma = (sqrt(L) + sqrt(L + 2 m eps Delta^2)) / (2 eps)
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    _check_delta(delta)
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    if sensitivity <= 0.0:
        raise ValueError(f"sensitivity must be positive, got {sensitivity}")
    log_part = 2.0 * m * sensitivity * sensitivity * math.log(1.0 / delta)
    extra = 2.0 * m * epsilon * sensitivity * sensitivity
    return (math.sqrt(log_part) + math.sqrt(log_part + extra)) / (2.0 * epsilon)


def noise_error(cells: float, rho: float) -> float:
    """Expected L1 mass the Gaussian mechanism adds to a counts vector.

    Each of the ``cells`` entries gains |N(0, sigma^2)| with mean
    sigma * sqrt(2/pi); at unit sensitivity that totals
    cells * sqrt(1 / (pi * rho)).
    """
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    return cells * math.sqrt(1.0 / (math.pi * rho))


def allocate_budget(costs: Sequence[float], rho: float) -> list[float]:
    """Split rho across tasks to minimize the summed noise error.

    Task i's error is costs[i] / sqrt(rho_i) up to a shared constant; the
    minimizer weights each share by costs[i]^(2/3). The final share absorbs
    float rounding so the list sums to rho exactly.
    """
    if not costs:
        raise ValueError("costs must be non-empty")
    if any(c <= 0.0 for c in costs):
        raise ValueError("every cost must be positive")
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    weights = [c ** (2.0 / 3.0) for c in costs]
    scale = rho / sum(weights)
    shares = [w * scale for w in weights]
    shares[-1] = rho - sum(shares[:-1])
    return shares


def add_noise(counts: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Return counts plus iid Gaussian noise of the given scale."""
    if sigma < 0.0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    counts = np.asarray(counts, dtype=np.float64)
    if sigma == 0.0:
        return counts.copy()
    return counts + rng.normal(0.0, sigma, size=counts.shape)


@dataclass(frozen=True)
class PrivacyBudget:
    """Total zCDP budget with its named stage fractions.

    The fractions must sum to one and ``rho_total`` must be the exact
    conversion of (epsilon, delta), so a budget object is always safe to
    spend stage by stage.
    """

    epsilon: float
    delta: float
    rho_total: float
    splits: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_SPLITS))

    def __post_init__(self):
        if any(f <= 0.0 for f in self.splits.values()):
            raise ValueError(f"split fractions must be positive, got {self.splits}")
        total = sum(self.splits.values())
        if not math.isclose(total, 1.0, rel_tol=1e-9):
            raise ValueError(f"split fractions must sum to 1, got {total}")
        expected = dp_to_zcdp(self.epsilon, self.delta)
        if not math.isclose(self.rho_total, expected, rel_tol=1e-9):
            raise ValueError(
                f"rho_total {self.rho_total} does not match the "
                f"(epsilon, delta) conversion {expected}"
            )

    @classmethod
    def from_dp(
        cls, epsilon: float, delta: float, splits: dict[str, float] | None = None
    ) -> PrivacyBudget:
        rho = dp_to_zcdp(epsilon, delta)
        return cls(epsilon, delta, rho, dict(splits or DEFAULT_SPLITS))

    def share(self, stage: str) -> float:
        """The rho amount assigned to one named stage."""
        return self.splits[stage] * self.rho_total
