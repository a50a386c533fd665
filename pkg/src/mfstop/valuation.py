"""Policy evaluation for randomized stopping via the survival-product form.

A randomized stationary stopping rule phi induces, on the *unstopped* chain
mu_{k+1} = T0(mu_k, Z_k), the value

    sum_k w(k) * E[ (r(mu_k) phi(mu_k) + ew * H(phi(mu_k))) * S_k ],
    S_k = prod_{j<k} (1 - phi(mu_j)),

where H is the Bernoulli entropy, ew >= 0 its weight, and w is either the
plain discount (shift "none", the policy's own value) or the discount
advanced by one step (shift "one-step", the value seen by the next self).
Entropy is accrued only while the system is alive, matching the one-step
deviation algebra r(mu)*psi + ew*H(psi) + (1-psi)*f_phi(mu).

Three evaluation routes are provided:

* ``backward_values`` - deterministic dynamic programming over the state
  grid (quadrature expectation matrix applied per step); the workhorse for
  operators and verification reports.
* ``survival_value`` - pointwise hybrid: exact tensorized quadrature for
  the first few steps, seeded Monte Carlo for the remainder.
* ``simulated_value`` - an independent check that embeds the stopping
  randomization into the chain as Bernoulli draws instead of reweighting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discount import (
    DiscountSpec,
    RegularizedDiscount,
    shannon_entropy,
    truncation_horizon,
)
from .model import ModelSpec, as_coord, one_step_expectation, ValueGrid


def as_policy_fn(policy):
    """Normalize a policy argument: callable, grid function, or constant."""
    if callable(policy):
        return policy
    level = float(policy)
    if not (0.0 <= level <= 1.0):
        raise ValueError("constant policy must lie in [0, 1]")
    return lambda x: np.full_like(np.asarray(x, dtype=float), level)


def default_horizon(model: ModelSpec, discount, entropy_weight: float = 0.0,
                    tol: float = 1e-8) -> int:
    """Horizon making the discarded tail provably below ``tol``."""
    return truncation_horizon(discount, model.reward_bound, tol,
                              entropy_weight=entropy_weight)


@dataclass
class ValuationRequest:
    """One policy-evaluation problem.

    ``head`` optionally overrides the stopping probability at step 0 (the
    one-step deviation); ``entropy_weight`` of 0 is the plain value.
    """

    model: ModelSpec
    discount: DiscountSpec | RegularizedDiscount
    policy: object
    start: float
    entropy_weight: float = 0.0
    horizon: int | None = None
    shift: str = "none"
    head: float | None = None
    quad_depth: int = 3
    mc_paths: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.shift not in ("none", "one-step"):
            raise ValueError("shift must be 'none' or 'one-step'")
        if self.entropy_weight < 0.0:
            raise ValueError("entropy_weight must be nonnegative")
        as_policy_fn(self.policy)  # reject malformed policies early
        if self.horizon is None:
            self.horizon = default_horizon(self.model, self.discount,
                                           self.entropy_weight)
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.head is not None and not (0.0 <= self.head <= 1.0):
            raise ValueError("head stopping probability must lie in [0, 1]")


def _weights(discount, horizon: int, shift: str) -> np.ndarray:
    return discount.weight_array(horizon, shift=1 if shift == "one-step" else 0)


def _gain(model, phi_vals, coords, entropy_weight):
    g = np.asarray(model.reward(coords), dtype=float) * phi_vals
    if entropy_weight > 0.0:
        g = g + entropy_weight * shannon_entropy(phi_vals)
    return g


# ---------------------------------------------------------------------------
# grid evaluation (deterministic)
# ---------------------------------------------------------------------------

def backward_values(model: ModelSpec, discount, policy, entropy_weight: float = 0.0,
                    horizon: int | None = None, shift: str = "none") -> np.ndarray:
    """Survival-weighted value at every grid node by backward recursion.

    With w(m) the (possibly shifted) discount weights, B satisfies
    B_m = w(m) g + (1 - phi) * E0[B_{m+1} o T0] and B_0 is the value; this
    telescopes exactly to the survival-product series truncated at the
    horizon, for arbitrary (non-geometric) weight sequences.
    """
    if horizon is None:
        horizon = default_horizon(model, discount, entropy_weight)
    pol = as_policy_fn(policy)
    phi = np.asarray(pol(model.grid), dtype=float)
    g = _gain(model, phi, model.grid, entropy_weight)
    w = _weights(discount, horizon, shift)
    q = one_step_expectation(model)
    values = w[horizon] * g
    cont = 1.0 - phi
    for m in range(horizon - 1, -1, -1):
        values = w[m] * g + cont * (q @ values)
    return values


def auxiliary_value_grid(model: ModelSpec, discount, policy,
                         entropy_weight: float = 0.0,
                         horizon: int | None = None) -> ValueGrid:
    """One-step-shifted value (the quantity the next self evaluates)."""
    vals = backward_values(model, discount, policy, entropy_weight,
                           horizon, shift="one-step")
    return ValueGrid(model.grid, vals)


def continuation_value(model: ModelSpec, discount, policy, entropy_weight: float,
                       mu, horizon: int | None = None, method: str = "grid",
                       mc_paths: int = 10_000, seed: int = 0):
    """f_phi(mu) = E0[ J~(T0(mu, Z)) ]: expected shifted value after one move.

    ``method='grid'`` interpolates the backward-recursion values (fast,
    deterministic); ``method='pointwise'`` literally composes the noise
    expectation with the pointwise hybrid evaluator.
    """
    plan = model.noise_plan
    if method == "grid":
        aux = auxiliary_value_grid(model, discount, policy, entropy_weight, horizon)
        mus = np.atleast_1d(np.asarray(mu, dtype=float))
        if plan.kind == "quadrature":
            z, w = plan.nodes, plan.weights
        else:
            rng = np.random.default_rng(plan.seed)
            z = model.noise_sampler(rng, plan.samples)
            w = np.full(z.size, 1.0 / z.size)
        out = aux(model.transition(mus[:, None], z[None, :])) @ w
        return float(out[0]) if np.isscalar(mu) or np.ndim(mu) == 0 else out
    if method != "pointwise":
        raise ValueError("method must be 'grid' or 'pointwise'")
    if plan.kind != "quadrature":
        raise ValueError("pointwise continuation needs a quadrature plan")
    mu0 = as_coord(mu)
    vals = [
        survival_value(ValuationRequest(
            model=model, discount=discount, policy=policy,
            start=float(model.transition(mu0, z)), entropy_weight=entropy_weight,
            horizon=horizon, shift="one-step", mc_paths=mc_paths, seed=seed + i,
        ))
        for i, z in enumerate(plan.nodes)
    ]
    return float(np.dot(plan.weights, vals))


def deviation_value(model: ModelSpec, discount, policy, psi: float,
                    entropy_weight: float, mu, horizon: int | None = None) -> float:
    """Value of stopping with probability psi now, then following the policy.

    Exact first-step decomposition: r(mu)*psi + ew*H(psi) + (1-psi)*f_phi(mu);
    affine in psi when ew = 0, strictly concave otherwise.
    """
    if not (0.0 <= psi <= 1.0):
        raise ValueError("psi must lie in [0, 1]")
    mu0 = as_coord(mu)
    r = float(model.reward(mu0))
    f = continuation_value(model, discount, policy, entropy_weight, mu0, horizon)
    out = r * psi + (1.0 - psi) * f
    if entropy_weight > 0.0:
        out += entropy_weight * shannon_entropy(psi)
    return out


# ---------------------------------------------------------------------------
# pointwise hybrid evaluation
# ---------------------------------------------------------------------------

def survival_value(req: ValuationRequest, with_stderr: bool = False):
    """Survival-product value at one starting state.

    Steps up to ``quad_depth`` are integrated by tensorized quadrature over
    the common-noise nodes (exact for the plan); deeper steps are estimated
    from ``mc_paths`` seeded Monte Carlo paths of the unstopped chain, drawn
    up front so the fixed-order reduction is schedule-independent.
    """
    model, pol = req.model, as_policy_fn(req.policy)
    w = _weights(req.discount, req.horizon, req.shift)
    depth = min(req.quad_depth, req.horizon)

    phi0 = req.head if req.head is not None else float(pol(np.asarray(req.start)))
    total = w[0] * float(_gain(model, np.asarray(phi0), np.asarray(req.start),
                               req.entropy_weight))
    plan = model.noise_plan
    if plan.kind == "quadrature":
        z_nodes, z_weights = plan.nodes, plan.weights
    else:
        rng0 = np.random.default_rng(plan.seed)
        z_nodes = model.noise_sampler(rng0, plan.samples)
        z_weights = np.full(z_nodes.size, 1.0 / z_nodes.size)

    states = np.array([req.start])
    qw = np.array([1.0])
    surv = np.array([1.0])
    phi_prev = np.array([phi0])
    for k in range(1, depth + 1):
        surv = np.repeat(surv * (1.0 - phi_prev), z_nodes.size)
        states = model.transition(states[:, None], z_nodes[None, :]).ravel()
        qw = (qw[:, None] * z_weights[None, :]).ravel()
        phi_prev = pol(states)
        g = _gain(model, phi_prev, states, req.entropy_weight)
        total += w[k] * float(np.dot(qw, surv * g))

    stderr = 0.0
    if req.horizon > depth:
        tail, stderr = _mc_tail(req, pol, w, depth)
        total += tail
    return (total, stderr) if with_stderr else total


def _mc_tail(req, pol, w, depth):
    """Monte Carlo estimate of the survival series beyond the quadrature depth."""
    model = req.model
    rng = np.random.Generator(np.random.Philox(key=req.seed))
    n = req.mc_paths
    mu = np.full(n, float(req.start))
    surv = np.ones(n)
    phi_prev = np.full(n, req.head if req.head is not None
                       else float(pol(np.asarray(req.start))))
    acc = np.zeros(n)
    for k in range(1, req.horizon + 1):
        surv = surv * (1.0 - phi_prev)
        if not np.any(surv > 1e-300):
            break
        mu = model.transition(mu, model.noise_sampler(rng, n))
        phi_prev = pol(mu)
        if k > depth:
            acc += w[k] * surv * _gain(model, phi_prev, mu, req.entropy_weight)
    return float(np.mean(acc)), float(np.std(acc, ddof=1) / math.sqrt(n))


def simulated_value(req: ValuationRequest, paths: int = 20_000):
    """Direct simulator: stopping realized as Bernoulli draws in the chain.

    Returns (estimate, stderr).  Each path absorbs once its stop draw fires;
    per-step contributions use the analytic stop probability, so this shares
    the survival evaluator's target but none of its reweighting.
    """
    model, pol = req.model, as_policy_fn(req.policy)
    w = _weights(req.discount, req.horizon, req.shift)
    rng = np.random.Generator(np.random.Philox(key=req.seed + (1 << 32)))
    mu = np.full(paths, float(req.start))
    alive = np.ones(paths, dtype=bool)
    acc = np.zeros(paths)
    for k in range(req.horizon + 1):
        if not alive.any():
            break
        if k == 0 and req.head is not None:
            phi = np.full(paths, req.head)
        else:
            phi = pol(mu)
        acc[alive] += w[k] * _gain(model, phi[alive], mu[alive], req.entropy_weight)
        stop_draw = rng.random(paths) < phi
        alive &= ~stop_draw
        mu = np.where(alive, model.transition(mu, model.noise_sampler(rng, paths)), mu)
    return float(np.mean(acc)), float(np.std(acc, ddof=1) / math.sqrt(paths))
