"""Tiger belief-MDP: listen or open one of two doors, belief over tiger-left.

The hidden state is which door hides the tiger. Listening costs -1 and
yields a roar on the true side with accuracy p_obs; opening pays +10 or
-100 and resets the problem (new uniform tiger, belief back to 0.5), so
episodes are infinite and evaluation truncates at a fixed depth.

The observable state handed to policies is the scalar belief b = P(left).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LISTEN, OPEN_LEFT, OPEN_RIGHT = 0, 1, 2
ACTION_NAMES = ("listen", "open-left", "open-right")
HEAR_LEFT, HEAR_RIGHT = 0, 1

R_LISTEN = -1.0
R_TIGER = -100.0
R_FREE = 10.0


@dataclass
class TigerConfig:
    p_obs: float = 1.0
    gamma: float = 0.9
    rollout_depth: int = 150

    kind = "tiger"
    input_dim = 1
    n_actions = 3

    def __post_init__(self):
        if not 0.5 <= self.p_obs <= 1.0:
            raise ValueError(f"observation accuracy must lie in [0.5, 1], got {self.p_obs}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("discount must lie in (0, 1)")

    def shifted(self, p_obs):
        return TigerConfig(p_obs=p_obs, gamma=self.gamma, rollout_depth=self.rollout_depth)

    def label(self):
        return f"tiger:p{self.p_obs:g}"


def belief_update(b, observation, p_obs):
    """Bayes posterior for P(tiger left) after a roar observation."""
    like_left = p_obs if observation == HEAR_LEFT else 1.0 - p_obs
    like_right = 1.0 - like_left
    num = like_left * b
    return num / (num + like_right * (1.0 - b))


def _belief_update_batch(b, hear_left, p_obs):
    like_left = np.where(hear_left, p_obs, 1.0 - p_obs)
    num = like_left * b
    return num / (num + (1.0 - like_left) * (1.0 - b))


class TigerEnv:
    """Single-instance environment for training loops."""

    def __init__(self, config, rng):
        self.config = config
        self.rng = np.random.default_rng(rng)
        self.kind = config.kind
        self.input_dim = config.input_dim
        self.n_actions = config.n_actions
        self.tiger_left = False
        self.belief = 0.5

    def _obs(self):
        return np.array([self.belief])

    def reset(self):
        self.tiger_left = bool(self.rng.random() < 0.5)
        self.belief = 0.5
        return self._obs()

    def step(self, action):
        p = self.config.p_obs
        if action == LISTEN:
            roar_left = self.rng.random() < (p if self.tiger_left else 1.0 - p)
            obs = HEAR_LEFT if roar_left else HEAR_RIGHT
            self.belief = belief_update(self.belief, obs, p)
            reward = R_LISTEN
        elif action in (OPEN_LEFT, OPEN_RIGHT):
            tiger_behind = self.tiger_left if action == OPEN_LEFT else not self.tiger_left
            reward = R_TIGER if tiger_behind else R_FREE
            self.tiger_left = bool(self.rng.random() < 0.5)
            self.belief = 0.5
        else:
            raise ValueError(f"unknown action {action}")
        return self._obs(), reward, False


def rollout_returns(action_fn, config, n_mc, depth=None, rng=None):
    """Discounted returns of `action_fn` over n_mc truncated episodes.

    `action_fn` maps a (B, 1) belief batch to (B,) action ids. All episodes
    advance in lockstep; random draws have a fixed shape every step, so the
    stream is independent of the policy's branching.
    """
    rng = np.random.default_rng(rng)
    depth = config.rollout_depth if depth is None else int(depth)
    p = config.p_obs
    tiger_left = rng.random(n_mc) < 0.5
    belief = np.full(n_mc, 0.5)
    returns = np.zeros(n_mc)
    disc = 1.0
    for _ in range(depth):
        a = np.asarray(action_fn(belief[:, None])).reshape(-1)
        if a.shape != (n_mc,):
            raise ValueError(f"policy returned {a.shape}, expected ({n_mc},)")
        open_hits = np.where(a == OPEN_LEFT, tiger_left, ~tiger_left)
        reward = np.where(a == LISTEN, R_LISTEN, np.where(open_hits, R_TIGER, R_FREE))
        returns += disc * reward
        u_obs = rng.random(n_mc)
        hear_left = u_obs < np.where(tiger_left, p, 1.0 - p)
        updated = _belief_update_batch(belief, hear_left, p)
        fresh_tiger = rng.random(n_mc) < 0.5
        listened = a == LISTEN
        belief = np.where(listened, updated, 0.5)
        tiger_left = np.where(listened, tiger_left, fresh_tiger)
        disc *= config.gamma
    return returns


# -- closed-form oracles -------------------------------------------------------


def oracle_uninformative(gamma=0.9, horizon=None):
    """Optimal return and Q-values when observations carry no information.

    Listening forever is optimal; opening from b=0.5 is an expected -45
    followed by the optimal continuation. `horizon=None` takes the infinite
    limit.
    """
    if horizon is None:
        r_star = -1.0 / (1.0 - gamma)
        q_open = -45.0 - gamma / (1.0 - gamma)
    else:
        h = int(horizon)
        r_star = -(1.0 - gamma ** (h + 1)) / (1.0 - gamma)
        q_open = -45.0 - gamma * (1.0 - gamma ** h) / (1.0 - gamma)
    return r_star, {"L": r_star, "OL": q_open, "OR": q_open}


def oracle_perfect(gamma=0.9):
    """Optimal return and the 9-entry Q-table under perfect observations.

    One listen pins the tiger; alternating listen/open gives
    r* = (10 g - 1) / (1 - g^2). Beliefs: bS=0.5, bL=1.0, bR=0.0.
    """
    r = (10.0 * gamma - 1.0) / (1.0 - gamma * gamma)
    table = {
        "bS": {"L": r, "OL": -45.0 + gamma * r, "OR": -45.0 + gamma * r},
        "bL": {"L": r, "OL": -100.0 + gamma * r, "OR": 10.0 + gamma * r},
        "bR": {"L": r, "OL": 10.0 + gamma * r, "OR": -100.0 + gamma * r},
    }
    return r, table


@dataclass
class PolicyTable:
    """Belief-grid value iteration result."""

    grid: np.ndarray
    values: np.ndarray
    q: np.ndarray          # (grid_n, 3)
    actions: np.ndarray    # greedy per grid point, ties to lowest index
    threshold_low: float   # open-left at or below
    threshold_high: float  # open-right at or above
    p_obs: float
    gamma: float

    def action_at(self, b):
        """Greedy oracle action at arbitrary beliefs via nearest grid point."""
        b = np.asarray(b, dtype=np.float64)
        idx = np.clip(np.rint(b * (len(self.grid) - 1)).astype(int), 0, len(self.grid) - 1)
        return self.actions[idx]


def oracle_policy(gamma, p_obs, grid_n=1001, tol=1e-9, max_iter=5000):
    """Value iteration over a belief grid; the optimal reference policy.

    Listening maps beliefs through the Bayes update with the observation
    marginal as weights; opening collects the expected door reward and
    continues from the reset belief 0.5.
    """
    if grid_n < 101:
        raise ValueError("grid too coarse for threshold extraction")
    grid = np.linspace(0.0, 1.0, grid_n)
    p_hear_left = p_obs * grid + (1.0 - p_obs) * (1.0 - grid)
    with np.errstate(invalid="ignore", divide="ignore"):
        b_after_left = np.where(p_hear_left > 0.0,
                                p_obs * grid / np.maximum(p_hear_left, 1e-300), grid)
        b_after_right = np.where(1.0 - p_hear_left > 0.0,
                                 (1.0 - p_obs) * grid / np.maximum(1.0 - p_hear_left, 1e-300),
                                 grid)
    r_open_left = R_TIGER * grid + R_FREE * (1.0 - grid)
    r_open_right = R_FREE * grid + R_TIGER * (1.0 - grid)
    v = np.zeros(grid_n)
    for _ in range(max_iter):
        v_reset = np.interp(0.5, grid, v)
        q_listen = R_LISTEN + gamma * (
            p_hear_left * np.interp(b_after_left, grid, v)
            + (1.0 - p_hear_left) * np.interp(b_after_right, grid, v))
        q_ol = r_open_left + gamma * v_reset
        q_or = r_open_right + gamma * v_reset
        q = np.stack([q_listen, q_ol, q_or], axis=1)
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) < tol:
            v = v_new
            break
        v = v_new
    else:
        raise RuntimeError(f"value iteration did not converge in {max_iter} sweeps")
    actions = np.argmax(q, axis=1)
    left_zone = grid[actions == OPEN_LEFT]
    right_zone = grid[actions == OPEN_RIGHT]
    threshold_low = float(left_zone.max()) if len(left_zone) else float("nan")
    threshold_high = float(right_zone.min()) if len(right_zone) else float("nan")
    return PolicyTable(grid, v, q, actions, threshold_low, threshold_high, p_obs, gamma)


def reachable_beliefs(p_obs, max_listens=150):
    """Beliefs reachable from 0.5 by listening.

    Contradictory roars cancel exactly (likelihood ratios multiply), so after
    at most `max_listens` observations the set is a log-odds ladder
    {sigma(m * log(p/(1-p))) : |m| <= max_listens}.
    """
    if p_obs >= 1.0:
        return np.array([0.0, 0.5, 1.0])
    if p_obs <= 0.5:
        return np.array([0.5])
    step = np.log(p_obs / (1.0 - p_obs))
    m = np.arange(-max_listens, max_listens + 1)
    return 1.0 / (1.0 + np.exp(-m * step))
