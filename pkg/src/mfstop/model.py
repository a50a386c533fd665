"""Mean-field stopping MDP: distribution grid, transition, reward, noise.

For a two-point individual state space the population distribution is
identified with the mass on the first state, so the live-state set is the
interval [0, 1] discretized on a uniform grid.  The chain has one absorbing
extra state (the stopped state) that yields zero reward; stopping is an
action, never an effect of the transition map itself.

The common-noise expectation E0[f(T0(mu, Z))] is evaluated either by
Gauss-Legendre quadrature (deterministic, the default for smooth noise) or
by a seeded Monte Carlo plan.  ``one_step_expectation`` assembles the same
quadrature-plus-interpolation rule as a sparse matrix acting on node values,
which is what the iterative solvers apply many times.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import sparse


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeanFieldState:
    """Live distribution state (1-D coordinate) or the absorbing stop state."""

    coord: float | None

    @property
    def stopped(self) -> bool:
        return self.coord is None


STOPPED = MeanFieldState(None)


def live(coord: float) -> MeanFieldState:
    return MeanFieldState(float(coord))


def as_coord(state) -> float:
    """Accept a MeanFieldState or a bare live coordinate."""
    if isinstance(state, MeanFieldState):
        if state.stopped:
            raise ValueError("operation requires a live state")
        return state.coord
    return float(state)


# ---------------------------------------------------------------------------
# grid functions (piecewise-linear policies and values)
# ---------------------------------------------------------------------------

class GridFunction:
    """Piecewise-linear interpolant on strictly increasing nodes.

    Out-of-hull queries are clamped to the nearest endpoint; each clamped
    query increments ``clamp_count`` so silent extrapolation is detectable.
    """

    __slots__ = ("nodes", "values", "clamp_count")

    def __init__(self, nodes, values):
        nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape:
            raise ValueError("nodes and values must be 1-D arrays of equal length")
        if nodes.size < 2 or np.any(np.diff(nodes) <= 0.0):
            raise ValueError("nodes must be strictly increasing with >= 2 entries")
        self.nodes = nodes
        self.values = values
        self.clamp_count = 0

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        n_out = int(np.count_nonzero((arr < self.nodes[0]) | (arr > self.nodes[-1])))
        if n_out:
            self.clamp_count += n_out
        out = np.interp(arr, self.nodes, self.values)
        return float(out) if arr.ndim == 0 else out

    def sup_diff(self, other: "GridFunction") -> float:
        if other.nodes.shape == self.nodes.shape and np.array_equal(other.nodes, self.nodes):
            return float(np.max(np.abs(self.values - other.values)))
        return float(np.max(np.abs(self(other.nodes) - other.values)))


class ValueGrid(GridFunction):
    pass


class PolicyGrid(GridFunction):
    """Grid function constrained to [0, 1] at the nodes (hence everywhere)."""

    def __init__(self, nodes, values):
        super().__init__(nodes, values)
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("policy values must lie in [0, 1]")


def constant_policy(nodes, value: float) -> PolicyGrid:
    return PolicyGrid(nodes, np.full(len(nodes), float(value)))


# ---------------------------------------------------------------------------
# noise plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NoisePlan:
    """Common-noise integration rule: quadrature nodes/weights or seeded MC."""

    kind: str                      # "quadrature" | "monte-carlo"
    nodes: np.ndarray | None = None
    weights: np.ndarray | None = None
    samples: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind == "quadrature":
            if self.nodes is None or self.weights is None:
                raise ValueError("quadrature plan needs nodes and weights")
            w = np.asarray(self.weights, float)
            if np.any(w <= 0.0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("quadrature weights must be positive and sum to 1")
        elif self.kind == "monte-carlo":
            if self.samples < 1:
                raise ValueError("monte-carlo plan needs samples >= 1")
        else:
            raise ValueError(f"unknown noise plan kind {self.kind!r}")


def gauss_legendre_01(n: int) -> NoisePlan:
    """n-node Gauss-Legendre rule mapped to [0, 1] with unit total weight."""
    x, w = np.polynomial.legendre.leggauss(n)
    return NoisePlan(kind="quadrature", nodes=(x + 1.0) / 2.0, weights=w / 2.0)


def monte_carlo_plan(samples: int, seed: int = 0) -> NoisePlan:
    return NoisePlan(kind="monte-carlo", samples=samples, seed=seed)


# ---------------------------------------------------------------------------
# model spec
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Mean-field stopping model on a 1-D distribution grid.

    ``transition(mu, z)`` is the live-to-live map (vectorized over numpy
    broadcasting); stopping happens only through the action.  ``reward``
    maps live coordinates to bounded rewards, |reward| <= reward_bound.
    ``noise_sampler(rng, size)`` draws common-noise variates matching the
    distribution the quadrature plan integrates against.
    """

    transition: Callable
    reward: Callable
    noise_plan: NoisePlan
    noise_sampler: Callable
    reward_bound: float
    grid: np.ndarray
    noise_support: tuple = (0.0, 1.0)
    name: str = "custom"

    def reward_values(self) -> np.ndarray:
        return np.asarray(self.reward(self.grid), dtype=float)


def rd_model(grid_points: int = 2001, quad_nodes: int = 64,
             noise_plan: NoisePlan | None = None) -> ModelSpec:
    """Two-state benchmark: T0(mu, z) = mu*z with z ~ U[0,1], r(mu) = 1 - mu.

    The mass on the still-developing state shrinks by an independent uniform
    factor each step; reward is the completed fraction.
    """
    plan = noise_plan if noise_plan is not None else gauss_legendre_01(quad_nodes)
    return ModelSpec(
        transition=lambda mu, z: mu * z,
        reward=lambda mu: 1.0 - mu,
        noise_plan=plan,
        noise_sampler=lambda rng, size: rng.random(size),
        reward_bound=1.0,
        grid=np.linspace(0.0, 1.0, grid_points),
        noise_support=(0.0, 1.0),
        name="rd",
    )


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------

def transition_state(model: ModelSpec, state, action: int, z: float) -> MeanFieldState:
    """One transition: action 1 stops, action 0 moves by T0; stopped stays."""
    if isinstance(state, MeanFieldState) and state.stopped:
        return STOPPED
    if action not in (0, 1):
        raise ValueError("action must be 0 (continue) or 1 (stop)")
    if action == 1:
        return STOPPED
    lo, hi = model.noise_support
    if not (lo <= z <= hi):
        raise ValueError(f"noise draw {z} outside support [{lo}, {hi}]")
    return live(model.transition(as_coord(state), z))


def reward_of(model: ModelSpec, state) -> float:
    if isinstance(state, MeanFieldState) and state.stopped:
        return 0.0
    return float(model.reward(as_coord(state)))


def expect_over_noise(model: ModelSpec, f, state) -> float:
    """E0[f(T0(mu, Z))] under the model's noise plan.

    ``f`` may be a GridFunction or any vectorized callable.  Quadrature
    plans are deterministic; Monte Carlo plans are deterministic given
    (seed, sample count) because the generator is re-seeded per call.
    """
    mu = as_coord(state)
    plan = model.noise_plan
    if plan.kind == "quadrature":
        vals = f(model.transition(mu, plan.nodes))
        return float(np.dot(plan.weights, vals))
    rng = np.random.default_rng(plan.seed)
    z = model.noise_sampler(rng, plan.samples)
    return float(np.mean(f(model.transition(mu, z))))


@lru_cache(maxsize=8)
def one_step_expectation(model: ModelSpec) -> sparse.csr_matrix:
    """Sparse matrix Q with (Q v)[i] = E0[v_interp(T0(grid[i], Z))].

    Rows combine the noise rule with the two-point interpolation stencil of
    each transited point, clamped to the grid hull.  Applying Q to node
    values reproduces ``expect_over_noise`` with a GridFunction argument.
    """
    plan = model.noise_plan
    if plan.kind == "quadrature":
        z, w = plan.nodes, plan.weights
    else:
        rng = np.random.default_rng(plan.seed)
        z = model.noise_sampler(rng, plan.samples)
        w = np.full(plan.samples, 1.0 / plan.samples)
    grid = model.grid
    n, m = grid.size, z.size
    dest = np.clip(model.transition(grid[:, None], z[None, :]), grid[0], grid[-1])
    hi = np.clip(np.searchsorted(grid, dest, side="right"), 1, n - 1)
    lo = hi - 1
    t = (dest - grid[lo]) / (grid[hi] - grid[lo])
    rows = np.repeat(np.arange(n), m)
    wmat = np.broadcast_to(w, (n, m))
    mat = sparse.coo_matrix(
        (
            np.concatenate([(wmat * (1.0 - t)).ravel(), (wmat * t).ravel()]),
            (np.concatenate([rows, rows]), np.concatenate([lo.ravel(), hi.ravel()])),
        ),
        shape=(n, n),
    )
    return mat.tocsr()


def w1_two_state(mu, mu_prime):
    """1-Wasserstein distance between two-point distributions, d(A,B) = 1."""
    return np.abs(np.asarray(mu, float) - np.asarray(mu_prime, float))


# ---------------------------------------------------------------------------
# JSON model configs
# ---------------------------------------------------------------------------

_ALLOWED_KEYS = {"grid_points", "noise", "example", "reward", "transition", "reward_bound"}


def load_model_config(source):
    """Build a model from a JSON config (path, JSON text, or dict).

    Fields: grid_points, noise {type, nodes|samples, seed}, example
    {rd | etf | custom-table}.  The etf choice returns the market parameter
    block instead of a 1-D model.  custom-table supplies the reward as a
    node/value table and the transition as either {"kind": "scale"}
    (multiplicative noise) or {"kind": "mix", "table": {...}, "epsilon": e}
    (deterministic map blended with uniform noise).
    """
    if isinstance(source, dict):
        cfg = source
    else:
        text = None
        try:
            with open(source) as fh:
                text = fh.read()
        except (OSError, TypeError):
            text = source
        cfg = json.loads(text)
    unknown = set(cfg) - _ALLOWED_KEYS
    if unknown:
        raise ValueError(f"unknown model config keys: {sorted(unknown)}")

    example = cfg.get("example", "rd")
    if example == "etf":
        from .etf_rl import EtfParams
        return EtfParams()

    grid_points = int(cfg.get("grid_points", 2001))
    noise_cfg = cfg.get("noise", {"type": "quadrature", "nodes": 64})
    if noise_cfg.get("type", "quadrature") == "quadrature":
        plan = gauss_legendre_01(int(noise_cfg.get("nodes", 64)))
    else:
        plan = monte_carlo_plan(int(noise_cfg.get("samples", 10_000)),
                                seed=int(noise_cfg.get("seed", 0)))

    if example == "rd":
        return rd_model(grid_points=grid_points, noise_plan=plan)
    if example != "custom-table":
        raise ValueError(f"unknown example {example!r}")

    reward_tab = cfg["reward"]
    reward_fn = GridFunction(reward_tab["nodes"], reward_tab["values"])
    trans_cfg = cfg.get("transition", {"kind": "scale"})
    if trans_cfg["kind"] == "scale":
        transition = lambda mu, z: mu * z
    elif trans_cfg["kind"] == "mix":
        base = GridFunction(trans_cfg["table"]["nodes"], trans_cfg["table"]["values"])
        eps = float(trans_cfg["epsilon"])
        if not (0.0 < eps <= 1.0):
            raise ValueError("mix transition needs epsilon in (0, 1]")
        transition = lambda mu, z: (1.0 - eps) * base(mu) + eps * z
    else:
        raise ValueError(f"unknown transition kind {trans_cfg['kind']!r}")

    bound = float(cfg.get("reward_bound", np.max(np.abs(reward_fn.values))))
    return ModelSpec(
        transition=transition,
        reward=reward_fn,
        noise_plan=plan,
        noise_sampler=lambda rng, size: rng.random(size),
        reward_bound=bound,
        grid=np.linspace(0.0, 1.0, grid_points),
        noise_support=(0.0, 1.0),
        name="custom-table",
    )
