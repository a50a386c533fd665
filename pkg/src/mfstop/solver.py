"""Fixed-point machinery for entropy-regularized stopping equilibria.

The policy map is the composition of two operators on the state grid: the
shifted policy value v = J~ (``auxiliary_operator``), and the Gibbs response
phi(mu) = sigmoid((r(mu) - E0[v(T0(mu, Z))]) / lam) that maximizes the
one-step deviation objective r*psi + ew*H(psi) + (1-psi)*f.  Equilibria are
fixed points of the composition; they are found by damped Picard iteration
(existence holds without contraction, so non-convergence is a reported
outcome, never silently accepted).

Verification reports quantify how close an arbitrary policy is to
equilibrium: the exact inner supremum of the regularized deviation (via the
Gibbs maximizer), the entropy-free deviation gap (endpoints suffice by
affinity), and the three-region stop/continue/indifferent classification
with two-threshold detection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .discount import shannon_entropy
from .model import ModelSpec, PolicyGrid, ValueGrid, one_step_expectation
from .valuation import backward_values, default_horizon


class NumericalError(RuntimeError):
    """Raised when iteration produces non-finite values; carries the iterate."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


@dataclass(frozen=True)
class SolverConfig:
    lam: float
    damping: float = 0.5
    max_iter: int = 500
    residual_tol: float = 1e-6

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("lambda must be positive")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")
        if self.residual_tol <= 0.0:
            raise ValueError("residual_tol must be positive")


@dataclass
class EquilibriumResult:
    policy: PolicyGrid
    aux_value: ValueGrid
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)  # rows (iter, residual, sup_policy_change)


def gibbs_policy(lam: float, reward_at_mu, continuation_at_mu):
    """Stopping probability sigmoid((r - c)/lam), overflow-safe.

    Evaluated through the numerically stable logistic, so arguments with
    |r - c|/lam up to 1e4 saturate cleanly instead of overflowing.
    """
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    r = np.asarray(reward_at_mu, dtype=float)
    c = np.asarray(continuation_at_mu, dtype=float)
    out = expit((r - c) / lam)
    return float(out) if out.ndim == 0 else out


def auxiliary_operator(model: ModelSpec, discount, lam: float, phi) -> ValueGrid:
    """Shifted entropy-augmented value of the policy at every grid node."""
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    vals = backward_values(model, discount, phi, entropy_weight=lam, shift="one-step")
    return ValueGrid(model.grid, vals)


def _continuation_nodes(model: ModelSpec, discount, entropy_weight: float,
                        phi, horizon=None) -> np.ndarray:
    """f_phi at every node: one-step expectation of the shifted value."""
    vals = backward_values(model, discount, phi, entropy_weight=entropy_weight,
                           horizon=horizon, shift="one-step")
    return one_step_expectation(model) @ vals


def solve_fixed_point(model: ModelSpec, discount, cfg: SolverConfig,
                      init: PolicyGrid | None = None) -> EquilibriumResult:
    """Damped Picard iteration phi <- (1-w) phi + w Gibbs(continuation(phi)).

    Returns the best iterate seen with its sup-norm residual; ``converged``
    reports whether the residual dropped below the tolerance within the
    iteration budget.
    """
    grid = model.grid
    rewards = model.reward_values()
    horizon = default_horizon(model, discount, cfg.lam)
    phi = np.full(grid.size, 0.5) if init is None else np.asarray(init(grid), dtype=float)

    best_phi, best_res, history = phi, np.inf, []
    iterations = 0
    for it in range(cfg.max_iter + 1):
        cont = _continuation_nodes(model, discount, cfg.lam, PolicyGrid(grid, phi),
                                   horizon=horizon)
        target = gibbs_policy(cfg.lam, rewards, cont)
        if not (np.all(np.isfinite(cont)) and np.all(np.isfinite(target))):
            raise NumericalError("non-finite iterate in fixed-point solve",
                                 iterate=phi.copy())
        residual = float(np.max(np.abs(phi - target)))
        if residual < best_res:
            best_phi, best_res = phi, residual
        new_phi = (1.0 - cfg.damping) * phi + cfg.damping * target
        history.append((it, residual, float(np.max(np.abs(new_phi - phi)))))
        if residual <= cfg.residual_tol or it == cfg.max_iter:
            iterations = it
            break
        phi = new_phi

    policy = PolicyGrid(grid, best_phi)
    aux = auxiliary_operator(model, discount, cfg.lam, policy)
    return EquilibriumResult(
        policy=policy,
        aux_value=aux,
        residual=best_res,
        iterations=iterations,
        converged=best_res <= cfg.residual_tol,
        history=history,
    )


def solve_with_continuation(model: ModelSpec, discount, cfg: SolverConfig,
                            schedule=(0.2, 0.1, 0.05, 0.02, 0.01)) -> EquilibriumResult:
    """Warm-started solve along a decreasing lambda schedule ending at cfg.lam.

    The Gibbs response sharpens like 1/lam, so cold starts stall at small
    lam; each solve seeds the next.  Per-stage iteration counts are appended
    to the final result's history as ("continuation", lam, iterations).
    """
    lams = sorted({lam for lam in schedule if lam > cfg.lam}, reverse=True)
    init = None
    stages = []
    for lam in lams + [cfg.lam]:
        res = solve_fixed_point(model, discount,
                                SolverConfig(lam=lam, damping=cfg.damping,
                                             max_iter=cfg.max_iter,
                                             residual_tol=cfg.residual_tol),
                                init=init)
        stages.append(("continuation", lam, res.iterations))
        init = res.policy
    res.history.extend(stages)
    return res


# ---------------------------------------------------------------------------
# equilibrium quality reports
# ---------------------------------------------------------------------------

def regularized_equilibrium_gap(model: ModelSpec, discount, lam: float, phi) -> float:
    """Worst one-step improvement available against the policy, entropy on.

    The deviation objective is strictly concave in psi with maximizer given
    by the Gibbs response, so the inner supremum is exact.
    """
    grid = model.grid
    rewards = model.reward_values()
    phi_vals = np.asarray(_as_callable(phi)(grid), dtype=float)
    cont = _continuation_nodes(model, discount, lam, PolicyGrid(grid, phi_vals))
    psi_star = gibbs_policy(lam, rewards, cont)
    best = _deviation_objective(rewards, cont, psi_star, lam)
    actual = _deviation_objective(rewards, cont, phi_vals, lam)
    return float(np.max(best - actual))


def epsilon_gap_unregularized(model: ModelSpec, discount, phi) -> float:
    """Worst one-step improvement with entropy off and the plain discount.

    The deviation value is affine in psi, so only the endpoints psi = 0, 1
    can attain the supremum.
    """
    grid = model.grid
    rewards = model.reward_values()
    phi_vals = np.asarray(_as_callable(phi)(grid), dtype=float)
    cont = _continuation_nodes(model, discount, 0.0, PolicyGrid(grid, phi_vals))
    value = rewards * phi_vals + (1.0 - phi_vals) * cont
    return float(np.max(np.maximum(rewards, cont) - value))


@dataclass
class RelaxedReport:
    """Three-region classification of r - f_phi with detected thresholds."""

    grid: np.ndarray
    classification: np.ndarray      # +1 stop-required, -1 continue-required, 0 indifferent
    violations: np.ndarray          # node indices violating the required action
    margin: np.ndarray              # r - f_phi at the nodes
    lower_threshold: float | None   # end of the leading sure-stop block
    upper_threshold: float | None   # start of the trailing sure-continue block

    @property
    def violation_count(self) -> int:
        return int(self.violations.size)


def relaxed_equilibrium_report(model: ModelSpec, discount, phi, band: float,
                               policy_tol: float = 1e-6) -> RelaxedReport:
    """Check the stop/continue fixed-point conditions within a dead band.

    Nodes where r - f_phi exceeds the band demand phi = 1; below the
    negative band they demand phi = 0; inside the band the equilibrium
    conditions impose nothing.  Thresholds are read off the policy shape:
    the leading contiguous block of sure stops and the first sure-continue
    node after it.
    """
    if band <= 0.0:
        raise ValueError("band must be positive")
    grid = model.grid
    rewards = model.reward_values()
    phi_vals = np.asarray(_as_callable(phi)(grid), dtype=float)
    cont = _continuation_nodes(model, discount, 0.0, PolicyGrid(grid, phi_vals))
    margin = rewards - cont
    classification = np.zeros(grid.size, dtype=int)
    classification[margin > band] = 1
    classification[margin < -band] = -1
    bad = ((classification == 1) & (phi_vals < 1.0 - policy_tol)) | \
          ((classification == -1) & (phi_vals > policy_tol))

    sure_stop = phi_vals >= 1.0 - policy_tol
    lower = None
    if sure_stop[0]:
        lead = np.argmin(sure_stop) - 1 if not sure_stop.all() else grid.size - 1
        lower = float(grid[lead])
    upper = None
    start = 0 if lower is None else int(np.searchsorted(grid, lower, side="right"))
    after = np.nonzero(phi_vals[start:] <= policy_tol)[0]
    if after.size:
        upper = float(grid[start + after[0]])

    return RelaxedReport(
        grid=grid,
        classification=classification,
        violations=np.nonzero(bad)[0],
        margin=margin,
        lower_threshold=lower,
        upper_threshold=upper,
    )


def _deviation_objective(rewards, cont, psi, lam):
    return rewards * psi + lam * shannon_entropy(psi) + (1.0 - psi) * cont


def _as_callable(phi):
    from .valuation import as_policy_fn
    return as_policy_fn(phi)
