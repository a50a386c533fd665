"""Model-free equilibrium search for an index-put exercise problem.

Market model: the aggregate return follows the linear common-noise
recursion r_{t+1} = a + b r_t + (c + d r_t) eps_{t+1} with Student-t shocks,
and the index level compounds it, P_{t+1} = P_t (1 + r_{t+1}).  The put
payoff (strike - P)_+ plus an entropy bonus on the stopping probability is
evaluated under the present-bias discount (1, K*beta, K*beta^2, ...).

Function approximation uses two bilinearly interpolated tables on a fixed
(price, return) grid: F estimates the shifted policy value (what waiting is
worth) and G the one-step conditional expectation that defines F's
bootstrap target.  Policy evaluation alternates two squared losses per
time step over a sampled batch,

    TD:  |F(s_k) - beta * G(s_k)|^2,
    CE:  |G(s_k) - (1 - phi(s_{k+1})) F(s_{k+1}) - Reward_{k+1}|^2,

with gradients flowing to the four interpolation stencil weights of each
queried state.  Policy iteration re-derives the stopping probability from
the frozen value table through the Gibbs response
phi = sigmoid((R - K*F)/lam) and repeats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .discount import shannon_entropy


class TrainingError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or {}


@dataclass(frozen=True)
class EtfParams:
    """Market, contract, and learning parameters (defaults are the
    experiment settings: modest positive drift, strong return persistence,
    heavy-tailed daily shocks, strike-at-par put)."""

    a_bar: float = 1.07 ** (1.0 / 252.0) - 1.0
    b_bar: float = 0.5
    c_bar: float = 0.006
    d_bar: float = 0.006
    strike: float = 100.0
    beta: float = 0.7
    k_amp: float = 1.01
    lam: float = 0.1
    noise_df: int = 10
    price_nodes: int = 101
    ret_nodes: int = 41
    ret_span: float = 0.1

    def __post_init__(self):
        if self.k_amp * self.beta >= 1.0:
            raise ValueError("K*beta must be below 1")
        if self.lam <= 0.0:
            raise ValueError("lambda must be positive")
        if self.noise_df < 3:
            raise ValueError("noise_df must be >= 3 for finite variance")

    @property
    def price_cap(self) -> float:
        return 2.0 * self.strike

    def price_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.price_cap, self.price_nodes)

    def ret_grid(self) -> np.ndarray:
        return np.linspace(-self.ret_span, self.ret_span, self.ret_nodes)

    def reward(self, price):
        return np.maximum(self.strike - np.asarray(price, dtype=float), 0.0)


@dataclass(frozen=True)
class EtfState:
    """A clamped (price, return) pair."""

    price: float
    ret: float

    def __post_init__(self):
        object.__setattr__(self, "price", float(max(self.price, 0.0)))
        object.__setattr__(self, "ret", float(np.clip(self.ret, -1.0, 1.0)))


# ---------------------------------------------------------------------------
# bilinear tables
# ---------------------------------------------------------------------------

class BilinearTable:
    """Values on a rectangular grid with bilinear interpolation.

    Queries are clamped to the grid hull; ``stencil`` exposes the four
    corner indices and weights so training can scatter gradients onto
    exactly the entries a query touched.
    """

    __slots__ = ("x", "y", "values")

    def __init__(self, x, y, values=None):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if np.any(np.diff(self.x) <= 0) or np.any(np.diff(self.y) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        if values is None:
            values = np.zeros((self.x.size, self.y.size))
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.x.size, self.y.size):
            raise ValueError("values shape must match the grid")

    def stencil(self, px, py):
        px = np.clip(np.asarray(px, dtype=float), self.x[0], self.x[-1])
        py = np.clip(np.asarray(py, dtype=float), self.y[0], self.y[-1])
        i = np.clip(np.searchsorted(self.x, px, side="right") - 1, 0, self.x.size - 2)
        j = np.clip(np.searchsorted(self.y, py, side="right") - 1, 0, self.y.size - 2)
        tx = (px - self.x[i]) / (self.x[i + 1] - self.x[i])
        ty = (py - self.y[j]) / (self.y[j + 1] - self.y[j])
        return i, j, tx, ty

    def lookup(self, px, py):
        i, j, tx, ty = self.stencil(px, py)
        v = self.values
        return ((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i + 1, j]
                + (1 - tx) * ty * v[i, j + 1] + tx * ty * v[i + 1, j + 1])

    def scatter_add(self, stencil, amounts):
        i, j, tx, ty = stencil
        np.add.at(self.values, (i, j), amounts * (1 - tx) * (1 - ty))
        np.add.at(self.values, (i + 1, j), amounts * tx * (1 - ty))
        np.add.at(self.values, (i, j + 1), amounts * (1 - tx) * ty)
        np.add.at(self.values, (i + 1, j + 1), amounts * tx * ty)

    def copy(self) -> "BilinearTable":
        return BilinearTable(self.x, self.y, self.values.copy())


@dataclass
class ApproximatorTables:
    f: BilinearTable   # shifted-value estimate
    g: BilinearTable   # conditional-expectation surrogate


def zero_tables(params: EtfParams) -> ApproximatorTables:
    return ApproximatorTables(
        f=BilinearTable(params.price_grid(), params.ret_grid()),
        g=BilinearTable(params.price_grid(), params.ret_grid()),
    )


# ---------------------------------------------------------------------------
# market simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarketPaths:
    prices: np.ndarray    # (paths, T+1)
    rets: np.ndarray      # (paths, T+1)
    sq_rets: np.ndarray   # diagnostic average-squared-return recursion


def simulate_market(params: EtfParams, horizon: int, paths: int, seed: int = 0,
                    p0: float | None = None, r0: float = 0.0) -> MarketPaths:
    """Sample return/price paths; returns are clamped to [-1, 1] and prices
    to [0, 2*strike].  The squared-return column tracks the same shock
    through the degenerate-heterogeneity second-moment recursion; it feeds
    nothing back and is reported for diagnostics only."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=seed))
    p0 = params.strike if p0 is None else p0
    prices = np.empty((paths, horizon + 1))
    rets = np.empty((paths, horizon + 1))
    sq = np.empty((paths, horizon + 1))
    prices[:, 0] = p0
    rets[:, 0] = r0
    sq[:, 0] = r0 * r0
    for t in range(horizon):
        eps = rng.standard_t(params.noise_df, size=paths)
        drift = params.a_bar + params.b_bar * rets[:, t]
        vol = params.c_bar + params.d_bar * rets[:, t]
        r_new = np.clip(drift + vol * eps, -1.0, 1.0)
        rets[:, t + 1] = r_new
        prices[:, t + 1] = np.clip(prices[:, t] * (1.0 + r_new), 0.0, params.price_cap)
        sq[:, t + 1] = drift**2 + vol**2 * eps**2 + 2.0 * drift * vol * eps
    return MarketPaths(prices=prices, rets=rets, sq_rets=sq)


# ---------------------------------------------------------------------------
# TD policy evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalTrace:
    td_losses: np.ndarray
    ce_losses: np.ndarray


class _Adam:
    """Adaptive moment steps on a whole table (entries never touched by a
    gradient stay exactly at their initialization)."""

    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def step(self, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return -self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _scatter(target, stencil, amounts):
    i, j, tx, ty = stencil
    np.add.at(target, (i, j), amounts * (1 - tx) * (1 - ty))
    np.add.at(target, (i + 1, j), amounts * tx * (1 - ty))
    np.add.at(target, (i, j + 1), amounts * (1 - tx) * ty)
    np.add.at(target, (i + 1, j + 1), amounts * tx * ty)


def td_evaluate_policy(params: EtfParams, policy, tables: ApproximatorTables,
                       batch: int = 200, t_max: int = 500, lr: float = 1e-3,
                       seed: int = 0) -> EvalTrace:
    """One evaluation sweep: sample a batch, then one joint adaptive-moment
    gradient step on TD + CE per time step, updating both tables in place.

    ``policy`` maps (price, ret) arrays to stopping probabilities and stays
    fixed for the whole sweep.  Raises TrainingError if a loss goes
    non-finite, attaching the partial loss trace.
    """
    market = simulate_market(params, t_max - 1, batch, seed=seed)
    phi = np.clip(policy(market.prices, market.rets), 0.0, 1.0)
    rewards = params.reward(market.prices) * phi + params.lam * shannon_entropy(phi)

    f, g = tables.f, tables.g
    f_opt = _Adam(f.values.shape, lr)
    g_opt = _Adam(g.values.shape, lr)
    f_grad = np.zeros_like(f.values)
    g_grad = np.zeros_like(g.values)
    sten = [f.stencil(market.prices[:, k], market.rets[:, k]) for k in range(t_max - 1)]
    td_losses = np.empty(t_max - 1)
    ce_losses = np.empty(t_max - 1)
    for k in range(t_max - 1):
        s_now = sten[k]
        f_now = f.lookup(market.prices[:, k], market.rets[:, k])
        g_now = g.lookup(market.prices[:, k], market.rets[:, k])
        f_next = f.lookup(market.prices[:, k + 1], market.rets[:, k + 1])
        td_res = f_now - params.beta * g_now
        ce_res = g_now - (1.0 - phi[:, k + 1]) * f_next - rewards[:, k + 1]
        td_losses[k] = float(np.mean(td_res**2))
        ce_losses[k] = float(np.mean(ce_res**2))
        if not (np.isfinite(td_losses[k]) and np.isfinite(ce_losses[k])):
            raise TrainingError(
                f"non-finite loss at step {k}",
                trace={"td": td_losses[:k], "ce": ce_losses[:k]},
            )
        # semi-gradient: the bootstrap term F(s_{k+1}) inside the CE target is
        # frozen, otherwise rare successors inherit their predecessors'
        # average continuation and the value surface biases upward there
        scale = 2.0 / batch
        f_grad.fill(0.0)
        g_grad.fill(0.0)
        _scatter(f_grad, s_now, scale * td_res)
        _scatter(g_grad, s_now, scale * (td_res * (-params.beta) + ce_res))
        f.values += f_opt.step(f_grad)
        g.values += g_opt.step(g_grad)
    return EvalTrace(td_losses=td_losses, ce_losses=ce_losses)


def evaluate_losses(params: EtfParams, policy, tables: ApproximatorTables,
                    batch: int = 200, t_max: int = 500,
                    seed: int = 0) -> tuple[float, float]:
    """Mean TD and CE losses on a fresh batch, with no updates."""
    market = simulate_market(params, t_max - 1, batch, seed=seed)
    phi = np.clip(policy(market.prices, market.rets), 0.0, 1.0)
    rewards = params.reward(market.prices) * phi + params.lam * shannon_entropy(phi)
    f_all = tables.f.lookup(market.prices, market.rets)
    g_all = tables.g.lookup(market.prices, market.rets)
    td = f_all[:, :-1] - params.beta * g_all[:, :-1]
    ce = g_all[:, :-1] - (1.0 - phi[:, 1:]) * f_all[:, 1:] - rewards[:, 1:]
    return float(np.mean(td**2)), float(np.mean(ce**2))


# ---------------------------------------------------------------------------
# policy iteration
# ---------------------------------------------------------------------------

@dataclass
class PolicyIterationResult:
    policy: np.ndarray            # stopping probabilities at the grid nodes
    value_table: BilinearTable    # averaged value surface defining the policy
    tables: ApproximatorTables    # live training tables
    policy_changes: list          # sup-norm node change per outer iteration
    td_losses: list               # held-out TD loss after each outer iteration
    ce_losses: list
    last_trace: EvalTrace | None  # inner trace of the final evaluation sweep


def gibbs_from_value(params: EtfParams, f_table: BilinearTable):
    """Stopping rule induced by a frozen value table: sigmoid((R - K F)/lam)."""
    def policy(p, r):
        reward = params.reward(p)
        return expit((reward - params.k_amp * f_table.lookup(p, r)) / params.lam)
    return policy


def policy_grid_values(params: EtfParams, f_table: BilinearTable) -> np.ndarray:
    pg, rg = params.price_grid(), params.ret_grid()
    return gibbs_from_value(params, f_table)(pg[:, None], rg[None, :])


def policy_iteration(params: EtfParams, outer_iters: int = 100, batch: int = 200,
                     t_max: int = 500, lr: float = 1e-3, seed: int = 0,
                     avg_weight: float = 0.1,
                     eval_batch: int | None = None) -> PolicyIterationResult:
    """Alternate evaluation sweeps with the Gibbs policy update.

    The value table starts at zero (so the induced initial policy is
    sigmoid(R/lam)); the conditional-expectation table is warm-started at
    the instantaneous payoff, a value-scale initialization that makes the
    bootstrap-consistency loss start at beta^2 E[R^2] and decay as training
    converges.  Each outer iteration evaluates the frozen policy, folds the
    sweep's value table into an exponential average with weight
    ``avg_weight``, and refreshes the policy from the average: constant-
    stepsize adaptive training keeps a noise floor on the raw sweep
    outputs, so the averaged iterate (Ruppert-Polyak style) is what defines
    the policy and what the sup-norm stationarity diagnostics track.
    Held-out losses are estimated on ``eval_batch`` paths (default five
    batches' worth) so the recorded trace is not hostage to a few
    heavy-tailed evaluation paths.
    """
    if outer_iters < 1:
        raise ValueError("outer_iters must be >= 1")
    if not (0.0 < avg_weight <= 1.0):
        raise ValueError("avg_weight must lie in (0, 1]")
    eval_batch = 5 * batch if eval_batch is None else eval_batch
    tables = zero_tables(params)
    tables.g.values[:, :] = params.reward(params.price_grid())[:, None]
    f_bar = BilinearTable(tables.f.x, tables.f.y)
    phi_nodes = policy_grid_values(params, f_bar)
    changes, td_post, ce_post = [], [], []
    trace = None
    eval_seed = seed + 1_000_003  # held-out batch, shared across iterations
    for l in range(outer_iters):
        frozen = gibbs_from_value(params, f_bar.copy())
        trace = td_evaluate_policy(params, frozen, tables, batch=batch,
                                   t_max=t_max, lr=lr, seed=seed + l)
        f_bar.values = (1.0 - avg_weight) * f_bar.values + avg_weight * tables.f.values
        new_nodes = policy_grid_values(params, f_bar)
        changes.append(float(np.max(np.abs(new_nodes - phi_nodes))))
        td_l, ce_l = evaluate_losses(params, frozen, tables, batch=eval_batch,
                                     t_max=t_max, seed=eval_seed)
        td_post.append(td_l)
        ce_post.append(ce_l)
        phi_nodes = new_nodes
    return PolicyIterationResult(policy=phi_nodes, value_table=f_bar, tables=tables,
                                 policy_changes=changes, td_losses=td_post,
                                 ce_losses=ce_post, last_trace=trace)


# ---------------------------------------------------------------------------
# region report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionReport:
    stop_count: int
    hold_count: int
    mixed_count: int
    stop_mask: np.ndarray
    hold_mask: np.ndarray
    hold_price_ranges: list   # per return node: (ret, lowest, highest hold price)


def policy_region_report(params: EtfParams, policy_values: np.ndarray,
                         lo: float = 0.05, hi: float = 0.95) -> RegionReport:
    """Classify grid cells by stopping probability and trace the hold band."""
    phi = np.asarray(policy_values, dtype=float)
    stop = phi >= hi
    hold = phi <= lo
    pg, rg = params.price_grid(), params.ret_grid()
    ranges = []
    for j, r in enumerate(rg):
        idx = np.nonzero(hold[:, j])[0]
        if idx.size:
            ranges.append((float(r), float(pg[idx[0]]), float(pg[idx[-1]])))
    return RegionReport(
        stop_count=int(stop.sum()),
        hold_count=int(hold.sum()),
        mixed_count=int(phi.size - stop.sum() - hold.sum()),
        stop_mask=stop,
        hold_mask=hold,
        hold_price_ranges=ranges,
    )
