"""Discount curves, their fast-decay regularization, and Bernoulli entropy.

Two discount families are supported: an explicit nonincreasing weight
sequence, and the present-bias family

    delta(0) = 1,   delta(k) = K * beta**k   (k >= 1),

which keeps a geometric tail while allowing an amplified first step
(K > 1 models increasing impatience; K*beta < 1 is required so the curve
stays below one).  The regularized curve multiplies any base curve by
(1/(1+lam))**(k**2), which decays super-geometrically and makes every
entropy-augmented series summable regardless of the base.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

LN2 = math.log(2.0)

# Tail summation of the super-geometric series stops once a term drops below
# this fraction of the leading term; the remainder is dominated by that term.
_TERM_CUTOFF = 1e-15


@dataclass(frozen=True)
class DiscountSpec:
    """A nonincreasing discount curve with delta(0) = 1.

    ``kind`` is either ``"general-sequence"`` (weights stored explicitly,
    zero beyond the stored length) or ``"quasi-hyperbolic"`` (K, beta form).
    """

    kind: str
    weights: tuple = ()
    k_amp: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind == "quasi-hyperbolic":
            if not (0.0 < self.beta < 1.0):
                raise ValueError("beta must lie in (0, 1)")
            if self.k_amp <= 0.0:
                raise ValueError("K must be positive")
            if self.k_amp * self.beta >= 1.0:
                raise ValueError(
                    "quasi-hyperbolic discount requires K*beta < 1 "
                    f"(got K*beta = {self.k_amp * self.beta:g})"
                )
        elif self.kind == "general-sequence":
            w = np.asarray(self.weights, dtype=float)
            if w.size == 0 or w[0] != 1.0:
                raise ValueError("general sequence must start with delta(0) = 1")
            if np.any(w < 0.0) or np.any(w > 1.0):
                raise ValueError("discount weights must lie in [0, 1]")
            if np.any(np.diff(w) > 0.0):
                raise ValueError("discount weights must be nonincreasing")
        else:
            raise ValueError(f"unknown discount kind {self.kind!r}")

    @classmethod
    def quasi_hyperbolic(cls, k_amp: float, beta: float) -> "DiscountSpec":
        return cls(kind="quasi-hyperbolic", k_amp=float(k_amp), beta=float(beta))

    @classmethod
    def from_weights(cls, weights) -> "DiscountSpec":
        return cls(kind="general-sequence", weights=tuple(float(w) for w in weights))

    def weight(self, k: int) -> float:
        """delta(k); the general sequence extends by zero beyond its length."""
        if k < 0:
            raise ValueError("k must be nonnegative")
        if self.kind == "quasi-hyperbolic":
            return 1.0 if k == 0 else self.k_amp * self.beta**k
        return float(self.weights[k]) if k < len(self.weights) else 0.0

    def weight_array(self, k_max: int, shift: int = 0) -> np.ndarray:
        """Vector of delta(shift), ..., delta(shift + k_max)."""
        ks = np.arange(shift, shift + k_max + 1)
        if self.kind == "quasi-hyperbolic":
            out = self.k_amp * self.beta ** ks.astype(float)
            out[ks == 0] = 1.0
            return out
        w = np.asarray(self.weights, dtype=float)
        out = np.zeros(ks.size)
        inside = ks < w.size
        out[inside] = w[ks[inside]]
        return out


@dataclass(frozen=True)
class RegularizedDiscount:
    """Base curve damped by (1/(1+lam))**(k**2)."""

    base: DiscountSpec
    lam: float

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("regularization parameter lam must be positive")
        if self.lam > 1.0:
            warnings.warn(
                "regularization lam > 1 is outside the validated range (0, 1]; "
                "operator bounds are only certified for lam <= 1",
                stacklevel=2,
            )

    def weight(self, k: int) -> float:
        return self.base.weight(k) * (1.0 / (1.0 + self.lam)) ** (k * k)

    def weight_array(self, k_max: int, shift: int = 0) -> np.ndarray:
        ks = np.arange(shift, shift + k_max + 1, dtype=float)
        damp = np.exp(-(ks**2) * math.log1p(self.lam))
        return self.base.weight_array(k_max, shift) * damp


def shannon_entropy(phi):
    """Entropy -phi*ln(phi) - (1-phi)*ln(1-phi), with 0*ln(0) = 0.

    Accepts scalars or arrays in [0, 1]; values outside raise.
    """
    p = np.asarray(phi, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("stopping probability must lie in [0, 1]")
    ent = -(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p))
    return float(ent) if np.isscalar(phi) or ent.ndim == 0 else ent


def lambda_tail_mass(lam: float, tol: float) -> tuple[float, float]:
    """lam * sum_k (1/(1+lam))**(k**2) and its closed-form upper bound.

    The bound (1+lam)*ln(1+sqrt(lam)) + sqrt(lam) certifies that the
    entropy bonus collected under the regularized curve vanishes as
    lam -> 0.  Summation stops once a term falls below ``tol``.
    """
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    q = 1.0 / (1.0 + lam)
    total = 0.0
    k = 0
    while True:
        term = q ** (k * k)
        if term < tol and k > 0:
            break
        total += term
        k += 1
        if k > 10_000_000:  # unreachable for any sane lam/tol
            break
    mass = lam * total
    bound = (1.0 + lam) * math.log1p(math.sqrt(lam)) + math.sqrt(lam)
    return mass, bound


def truncation_horizon(discount, reward_bound: float, tol: float,
                       entropy_weight: float | None = None) -> int:
    """Smallest k_max with sum_{k > k_max} w(k)*(reward_bound + ew*ln2) < tol.

    ``discount`` may be a RegularizedDiscount (entropy_weight defaults to its
    lam) or a plain DiscountSpec (entropy_weight defaults to 0; the
    quasi-hyperbolic tail is geometric and the general sequence is finite,
    so the tail is certifiable either way).
    """
    if reward_bound < 0.0:
        raise ValueError("reward_bound must be nonnegative")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if entropy_weight is None:
        entropy_weight = discount.lam if isinstance(discount, RegularizedDiscount) else 0.0
    per_step = reward_bound + entropy_weight * LN2
    if per_step == 0.0 or math.isinf(tol):
        return 0

    terms = [per_step * discount.weight(0)]
    k = 1
    while True:
        t = per_step * discount.weight(k)
        if t < _TERM_CUTOFF * max(terms[0], per_step):
            break
        terms.append(t)
        k += 1
        if k > 1_000_000:
            raise RuntimeError("discount tail does not decay; cannot truncate")
    # suffix[m] = sum of terms with index > m
    suffix = np.concatenate([np.cumsum(terms[::-1])[::-1][1:], [0.0]])
    below = np.nonzero(suffix < tol)[0]
    return int(below[0])
