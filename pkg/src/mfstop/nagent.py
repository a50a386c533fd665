"""Finite-population counterpart of the mean-field stopping problem.

N agents share a two-point individual state space (a transient state A and
an absorbing state B).  Each step, every agent still at A moves to B unless
its idiosyncratic uniform falls below the common draw Z0, so conditionally
on Z0 the count of A-agents is binomial; a single planner-side uniform U
stops the whole population at once with the policy probability evaluated at
the empirical A-mass.  Per-agent rewards are the indicator of having
reached B, so the population-average reward at empirical mass m is
(1 - m) * phi(m), matching the mean-field reward 1 - mu.

Large-scale value estimation aggregates agents into per-path counts (the
conditional-binomial structure makes this exact, not an approximation);
``step_population`` keeps the explicit per-agent dynamics with per-agent
idiosyncratic substreams for structural tests such as exchangeability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discount import DiscountSpec
from .rd_example import RdParams
from .valuation import as_policy_fn

STATE_A = 0
STATE_B = 1
STATE_STOPPED = 2

# spawn-key tags for the independent stream families
_INIT, _IDIO, _COMMON, _DEVICE, _GROWTH = 0, 1, 2, 3, 4


def _stream(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass
class RngPlan:
    """Independent stream families: initial draws, per-agent idiosyncratic
    noise, common noise, and the planner's stopping device.

    ``assignment`` maps agent slots to idiosyncratic substreams; permuting
    it must leave the law of the empirical-measure path unchanged.
    """

    seed: int
    n_agents: int
    assignment: np.ndarray | None = None
    _idio: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.assignment is None:
            self.assignment = np.arange(self.n_agents)
        self.assignment = np.asarray(self.assignment)
        if sorted(self.assignment.tolist()) != list(range(self.n_agents)):
            raise ValueError("assignment must be a permutation of the agent slots")
        self._idio = [_stream(self.seed, _IDIO, int(s)) for s in self.assignment]
        self.init = _stream(self.seed, _INIT)
        self.common = _stream(self.seed, _COMMON)
        self.device = _stream(self.seed, _DEVICE)

    def idio_uniform(self) -> np.ndarray:
        return np.array([g.random() for g in self._idio])


@dataclass
class Population:
    states: np.ndarray
    stopped: bool = False

    @property
    def size(self) -> int:
        return int(self.states.size)


def draw_population(n_agents: int, nu0: float, rng: RngPlan) -> Population:
    """I.i.d. initial states with mass nu0 on the transient state."""
    states = np.where(rng.init.random(n_agents) < nu0, STATE_A, STATE_B)
    return Population(states=states.astype(np.int8))


def empirical_mass(pop: Population) -> float:
    """Fraction of agents in the transient state (the lifted coordinate)."""
    return float(np.mean(pop.states == STATE_A))


def advance_states(states: np.ndarray, z_common: float, z_idio: np.ndarray) -> np.ndarray:
    """One idiosyncratic move: A survives iff its draw is below the common one."""
    survive = (states == STATE_A) & (z_idio <= z_common)
    return np.where(survive, STATE_A, np.where(states == STATE_A, STATE_B, states)).astype(np.int8)


def step_population(pop: Population, phi, rng: RngPlan, k: int = 0) -> Population:
    """Synchronized-stopping transition for the whole population.

    The planner draws one uniform; at or below the policy value at the
    empirical mass, every agent absorbs into the stopped state.  Otherwise
    each transient agent survives independently with the common probability.
    """
    if pop.stopped:
        raise ValueError("population already stopped")
    mu_hat = empirical_mass(pop)
    stop_prob = float(as_policy_fn(phi)(np.asarray(mu_hat)))
    if rng.device.random() <= stop_prob:
        return Population(states=np.full(pop.size, STATE_STOPPED, dtype=np.int8),
                          stopped=True)
    z0 = rng.common.random()
    return Population(states=advance_states(pop.states, z0, rng.idio_uniform()))


# ---------------------------------------------------------------------------
# value estimation (count-aggregated, exact for this model)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float


def _discount_of(params: RdParams) -> DiscountSpec:
    return DiscountSpec.quasi_hyperbolic(params.k_amp, params.beta)


def _average_value_paths(n_agents: int, policy, params: RdParams, nu0: float,
                         horizon: int, paths: int, seed: int,
                         head: float | None) -> np.ndarray:
    """Per-path discounted population-average rewards.

    Streams are keyed by family (and by step for the growth draws), so runs
    with different step-0 overrides share initial counts, common noise, and
    stop-device draws: common random numbers across deviation arms.
    """
    pol = as_policy_fn(policy)
    w = _discount_of(params).weight_array(horizon)
    counts = _stream(seed, _INIT).binomial(n_agents, nu0, size=paths)
    z0 = _stream(seed, _COMMON).random((horizon, paths))
    device = _stream(seed, _DEVICE).random((horizon + 1, paths))

    alive = np.ones(paths, dtype=bool)
    acc = np.zeros(paths)
    for k in range(horizon + 1):
        mu_hat = counts / n_agents
        phi_k = np.full(paths, head) if (k == 0 and head is not None) else pol(mu_hat)
        acc[alive] += w[k] * ((1.0 - mu_hat) * phi_k)[alive]
        if k == horizon:
            break
        alive &= ~(device[k] <= phi_k)
        if not alive.any():
            break
        grown = _stream(seed, _GROWTH, k).binomial(counts, z0[k])
        counts = np.where(alive, grown, counts)
    return acc


def n_agent_average_value(n_agents: int, policy, params: RdParams, nu0: float,
                          horizon: int = 60, paths: int = 10_000, seed: int = 0,
                          head: float | None = None) -> McEstimate:
    """Monte Carlo population-average value (estimate and standard error)."""
    if paths < 1:
        raise ValueError("paths must be >= 1")
    vals = _average_value_paths(n_agents, policy, params, nu0, horizon, paths, seed, head)
    se = float(np.std(vals, ddof=1) / math.sqrt(paths)) if paths > 1 else 0.0
    return McEstimate(value=float(np.mean(vals)), stderr=se)


@dataclass(frozen=True)
class DeviationGap:
    gap: float
    stderr: float                 # standard error of the selected difference
    base_value: float
    stop_deviation: float         # average value when forcing a step-0 stop
    continue_deviation: float     # average value when forcing a step-0 continue


def n_agent_epsilon_gap(n_agents: int, policy, nu0: float, params: RdParams,
                        horizon: int = 60, paths: int = 100_000,
                        seed: int = 0) -> DeviationGap:
    """Best step-0 deviation gain against the policy, at finite N.

    The step-0 stop event is a single common Bernoulli, so the deviation
    value is affine in the override probability and the endpoints {0, 1}
    attain the supremum.  All three arms share random streams; the gap's
    standard error comes from the per-path differences of the selected arm.
    """
    base = _average_value_paths(n_agents, policy, params, nu0, horizon, paths, seed, None)
    stop = _average_value_paths(n_agents, policy, params, nu0, horizon, paths, seed, 1.0)
    cont = _average_value_paths(n_agents, policy, params, nu0, horizon, paths, seed, 0.0)
    diffs = {1.0: stop - base, 0.0: cont - base}
    best = max(diffs, key=lambda psi: float(np.mean(diffs[psi])))
    chosen = diffs[best]
    return DeviationGap(
        gap=float(np.mean(chosen)),
        stderr=float(np.std(chosen, ddof=1) / math.sqrt(paths)),
        base_value=float(np.mean(base)),
        stop_deviation=float(np.mean(stop)),
        continue_deviation=float(np.mean(cont)),
    )


# ---------------------------------------------------------------------------
# empirical-measure convergence rate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateEstimate:
    ns: tuple
    estimates: tuple              # mean 1-Wasserstein distance per N
    stderrs: tuple
    slope: float                  # fitted log-log decay exponent
    slope_stderr: float


def estimate_empirical_rate(p: float, ns, samples: int = 4000,
                            seed: int = 0) -> RateEstimate:
    """Mean distance between empirical and true two-point distributions.

    For a two-point space with unit ground distance the per-sample distance
    is |empirical frequency - p|, so each N needs only binomial draws.  The
    decay exponent is fitted by least squares on the log-log points.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must lie in [0, 1]")
    ns = tuple(int(n) for n in ns)
    if any(n < 1 for n in ns) or list(ns) != sorted(ns):
        raise ValueError("ns must be increasing positive integers")
    rng = _stream(seed, 7)
    estimates, stderrs = [], []
    for n in ns:
        dist = np.abs(rng.binomial(n, p, size=samples) / n - p)
        estimates.append(float(np.mean(dist)))
        stderrs.append(float(np.std(dist, ddof=1) / math.sqrt(samples)))
    if len(ns) >= 2:
        x = np.log(np.asarray(ns, dtype=float))
        y = np.log(np.maximum(estimates, 1e-300))
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        dof = max(len(ns) - 2, 1)
        sxx = float(np.sum((x - x.mean()) ** 2))
        slope_se = math.sqrt(float(np.sum(resid**2)) / dof / sxx) if sxx > 0 else 0.0
    else:
        slope, slope_se = math.nan, math.nan
    return RateEstimate(ns=ns, estimates=tuple(estimates), stderrs=tuple(stderrs),
                        slope=float(slope), slope_stderr=slope_se)
