"""Field-vision rock sampling on an n x n grid with k rocks.

The agent starts on the west edge and is paid for exiting east and for
sampling good rocks. Every action is followed by a passive observation of
all rocks at once, each with an accuracy that decays with distance, and the
per-rock beliefs are updated by Bayes' rule. Sampling a good rock turns it
bad (one collection per rock).

Exiting means stepping east off the last column: from column n-1, the move
east pays the exit reward and ends the episode. Walking into the other
three walls is an illegal move and is penalized without moving.

Policies see an encoded vector: (x, y, belief) per rock then the agent
(x, y), positions normalized by the grid width.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MOVE_NORTH, MOVE_SOUTH, MOVE_EAST, MOVE_WEST, COLLECT = 0, 1, 2, 3, 4
ACTION_NAMES = ("move-north", "move-south", "move-east", "move-west", "collect")

R_EXIT = 10.0
R_GOOD = 10.0
R_BAD = -10.0
R_ILLEGAL = -10.0


@dataclass
class ObsFn:
    """Distance-dependent observation accuracy, p(d) in [0.5, 1]."""

    kind: str              # "default" | "heaviside" | "const"
    c: float | None = None
    d0: float | None = None

    def __post_init__(self):
        if self.kind not in ("default", "heaviside", "const"):
            raise ValueError(f"unknown observation function '{self.kind}'")
        if self.kind == "const":
            if self.c is None or not 0.5 <= self.c <= 1.0:
                raise ValueError("constant accuracy must lie in [0.5, 1]")
        elif self.d0 is None or self.d0 <= 0.0:
            raise ValueError("distance scale d0 must be positive")

    def accuracy(self, d):
        d = np.asarray(d, dtype=np.float64)
        if self.kind == "default":
            return 0.5 + np.exp2(-1.0 - d / self.d0)
        if self.kind == "heaviside":
            return np.where(d <= self.d0, 1.0, 0.5)
        return np.full_like(d, self.c)

    def label(self):
        if self.kind == "const":
            return f"const{self.c:g}"
        return self.kind


def default_obs(n=4):
    """Exponential decay with the scale tied to the grid diagonal."""
    return ObsFn("default", d0=(n - 1) * np.sqrt(2.0) / 4.0)


def heaviside_obs():
    return ObsFn("heaviside", d0=1.0)


def const_obs(c):
    return ObsFn("const", c=c)


CROSS_EVAL_OBS = ("default", "heaviside", "const0.5", "const0.6", "const0.7",
                  "const0.8", "const0.9", "const1")


def obs_fn_by_label(label, n=4):
    if label == "default":
        return default_obs(n)
    if label == "heaviside":
        return heaviside_obs()
    if label.startswith("const"):
        return const_obs(float(label[len("const"):]))
    raise ValueError(f"unknown observation label '{label}'")


@dataclass
class FvrsConfig:
    n: int = 4
    k: int = 4
    gamma: float = 0.9
    obs_fn: ObsFn = field(default_factory=default_obs)

    kind = "fvrs"

    def __post_init__(self):
        if self.n < 2 or self.k < 1 or self.k > self.n * self.n:
            raise ValueError(f"invalid grid ({self.n}, {self.k})")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("discount must lie in (0, 1)")

    @property
    def input_dim(self):
        return 3 * self.k + 2

    @property
    def n_actions(self):
        return 5

    @property
    def rollout_depth(self):
        return self.n * self.n * self.k

    def shifted(self, obs_label):
        return FvrsConfig(n=self.n, k=self.k, gamma=self.gamma,
                          obs_fn=obs_fn_by_label(obs_label, self.n))

    def label(self):
        return f"fvrs:{self.obs_fn.label()}"


def belief_update_rock(b, observed_good, p):
    """Bayes posterior for one rock being good."""
    like = p if observed_good else 1.0 - p
    num = like * b
    den = num + (1.0 - like) * (1.0 - b)
    # zero-probability observation (perfect sensor contradicting a certain
    # belief): keep the absorbing belief rather than divide by zero
    return b if den == 0.0 else num / den


def encode(cols, rows, beliefs, agent_col, agent_row, n):
    """Policy input: (x, y, belief) per rock, then the agent position."""
    scale = 1.0 / (n - 1)
    k = beliefs.shape[-1]
    if np.ndim(agent_col) == 0:
        out = np.empty(3 * k + 2)
        out[0:3 * k:3] = cols * scale
        out[1:3 * k:3] = rows * scale
        out[2:3 * k:3] = beliefs
        out[-2] = agent_col * scale
        out[-1] = agent_row * scale
        return out
    batch = len(np.asarray(agent_col))
    out = np.empty((batch, 3 * k + 2))
    out[:, 0:3 * k:3] = cols * scale
    out[:, 1:3 * k:3] = rows * scale
    out[:, 2:3 * k:3] = beliefs
    out[:, -2] = np.asarray(agent_col) * scale
    out[:, -1] = np.asarray(agent_row) * scale
    return out


def default_audit_context(n=4, k=4):
    """Canonical encoding for audits: one fixed pseudo-random rock layout,
    agent at the west-center start, all beliefs 0.5."""
    rng = np.random.default_rng(20240 + n * 100 + k)
    cells = rng.choice(n * n, size=k, replace=False)
    return encode(cells % n, cells // n, np.full(k, 0.5), 0, n // 2, n)


class FvrsEnv:
    """Single-instance environment for training loops."""

    def __init__(self, config, rng):
        self.config = config
        self.rng = np.random.default_rng(rng)
        self.kind = config.kind
        self.input_dim = config.input_dim
        self.n_actions = config.n_actions
        n, k = config.n, config.k
        self.agent_col = 0
        self.agent_row = 0
        self.rock_cols = np.zeros(k, dtype=int)
        self.rock_rows = np.zeros(k, dtype=int)
        self.good = np.zeros(k, dtype=bool)
        self.beliefs = np.full(k, 0.5)
        self.sampled = np.zeros(k, dtype=bool)
        self.done = True

    def _obs(self):
        return encode(self.rock_cols, self.rock_rows, self.beliefs,
                      self.agent_col, self.agent_row, self.config.n)

    def reset(self):
        n, k = self.config.n, self.config.k
        cells = self.rng.choice(n * n, size=k, replace=False)
        self.rock_cols = cells % n
        self.rock_rows = cells // n
        self.good = self.rng.random(k) < 0.5
        self.beliefs = np.full(k, 0.5)
        self.sampled = np.zeros(k, dtype=bool)
        self.agent_col = 0
        self.agent_row = int(self.rng.integers(n))
        self.done = False
        return self._obs()

    def step(self, action):
        if self.done:
            raise RuntimeError("episode is over; call reset()")
        n = self.config.n
        reward = 0.0
        sampled_rock = None
        if action == MOVE_NORTH:
            if self.agent_row < n - 1:
                self.agent_row += 1
            else:
                reward = R_ILLEGAL
        elif action == MOVE_SOUTH:
            if self.agent_row > 0:
                self.agent_row -= 1
            else:
                reward = R_ILLEGAL
        elif action == MOVE_WEST:
            if self.agent_col > 0:
                self.agent_col -= 1
            else:
                reward = R_ILLEGAL
        elif action == MOVE_EAST:
            if self.agent_col == n - 1:
                self.done = True
                return self._obs(), R_EXIT, True
            self.agent_col += 1
        elif action == COLLECT:
            here = (self.rock_cols == self.agent_col) & (self.rock_rows == self.agent_row)
            if here.any():
                sampled_rock = int(np.argmax(here))
                reward = R_GOOD if self.good[sampled_rock] else R_BAD
        else:
            raise ValueError(f"unknown action {action}")
        self._observe_rocks()
        if sampled_rock is not None:
            # the collection outcome reveals the rock, which is now depleted
            self.good[sampled_rock] = False
            self.beliefs[sampled_rock] = 0.0
            self.sampled[sampled_rock] = True
        return self._obs(), reward, False

    def _observe_rocks(self):
        d = np.hypot(self.rock_cols - self.agent_col, self.rock_rows - self.agent_row)
        p = self.config.obs_fn.accuracy(d)
        u = self.rng.random(self.config.k)
        observed_good = u < np.where(self.good, p, 1.0 - p)
        like = np.where(observed_good, p, 1.0 - p)
        num = like * self.beliefs
        self.beliefs = num / (num + (1.0 - like) * (1.0 - self.beliefs))


def rollout_returns(action_fn, config, n_mc, depth=None, rng=None):
    """Discounted returns of `action_fn` over n_mc episodes, run in lockstep.

    `action_fn` maps a (B, 3k+2) encoded batch to (B,) action ids. Random
    draws keep a fixed shape every step regardless of which episodes have
    finished, so the stream only depends on the seed.
    """
    rng = np.random.default_rng(rng)
    n, k = config.n, config.k
    depth = config.rollout_depth if depth is None else int(depth)
    cells = np.stack([rng.choice(n * n, size=k, replace=False) for _ in range(n_mc)])
    rock_cols = cells % n
    rock_rows = cells // n
    good = rng.random((n_mc, k)) < 0.5
    beliefs = np.full((n_mc, k), 0.5)
    agent_col = np.zeros(n_mc, dtype=int)
    agent_row = rng.integers(n, size=n_mc)
    active = np.ones(n_mc, dtype=bool)
    returns = np.zeros(n_mc)
    disc = 1.0
    for _ in range(depth):
        x = encode(rock_cols, rock_rows, beliefs, agent_col, agent_row, n)
        a = np.asarray(action_fn(x)).reshape(-1)
        if a.shape != (n_mc,):
            raise ValueError(f"policy returned {a.shape}, expected ({n_mc},)")
        reward = np.zeros(n_mc)

        north = active & (a == MOVE_NORTH)
        ok = north & (agent_row < n - 1)
        agent_row[ok] += 1
        reward[north & ~ok] = R_ILLEGAL
        south = active & (a == MOVE_SOUTH)
        ok = south & (agent_row > 0)
        agent_row[ok] -= 1
        reward[south & ~ok] = R_ILLEGAL
        west = active & (a == MOVE_WEST)
        ok = west & (agent_col > 0)
        agent_col[ok] -= 1
        reward[west & ~ok] = R_ILLEGAL
        east = active & (a == MOVE_EAST)
        exiting = east & (agent_col == n - 1)
        agent_col[east & ~exiting] += 1
        reward[exiting] = R_EXIT

        collect = active & (a == COLLECT)
        here = (rock_cols == agent_col[:, None]) & (rock_rows == agent_row[:, None])
        hit = collect[:, None] & here
        hit_rows = hit.any(axis=1)
        reward[hit_rows] = np.where((good & hit).any(axis=1)[hit_rows], R_GOOD, R_BAD)

        returns += disc * np.where(active, reward, 0.0)
        active = active & ~exiting

        d = np.hypot(rock_cols - agent_col[:, None], rock_rows - agent_row[:, None])
        p = config.obs_fn.accuracy(d)
        u = rng.random((n_mc, k))
        observed_good = u < np.where(good, p, 1.0 - p)
        like = np.where(observed_good, p, 1.0 - p)
        upd = active[:, None]
        num = like * beliefs
        beliefs = np.where(upd, num / (num + (1.0 - like) * (1.0 - beliefs)), beliefs)
        good = good & ~hit
        beliefs = np.where(hit, 0.0, beliefs)

        disc *= config.gamma
        if not active.any():
            break
    return returns


def always_east_policy(x):
    return np.full(len(x), MOVE_EAST)


def convenience_policy(x):
    """Move east; collect first when co-located with a believed-good rock."""
    k = (x.shape[1] - 2) // 3
    agent = x[:, -2:]
    action = np.full(len(x), MOVE_EAST)
    for j in range(k):
        on_rock = (np.abs(x[:, 3 * j] - agent[:, 0]) < 1e-12) & \
                  (np.abs(x[:, 3 * j + 1] - agent[:, 1]) < 1e-12)
        believed_good = x[:, 3 * j + 2] > 0.5
        action[on_rock & believed_good] = COLLECT
    return action


def oracle_ignore_rocks(gamma=0.9, n=4):
    """Closed-form value of the rocks-blind eastward policy.

    r* is the return from the west edge; the action table averages the
    return over a uniform agent column, with wall bumps contributing the
    illegal-move penalty at rate 1/n.
    """
    r_star = gamma ** (n - 1) * R_EXIT
    q_me = (1.0 - gamma ** n) / (1.0 - gamma) * R_EXIT / n
    q_ns = gamma * q_me + R_ILLEGAL / n
    q_mw = gamma * gamma * q_me + R_ILLEGAL / n
    q_c = gamma * q_me
    return r_star, {"ME": q_me, "MN": q_ns, "MS": q_ns, "MW": q_mw, "C": q_c}


def convenience_returns(config, n_mc, rng):
    """Raw MC returns of the convenience-collection baseline."""
    return rollout_returns(convenience_policy, config, n_mc, rng=rng)


def baseline_convenience(config, n_mc, rng):
    """Boxplot statistics of the convenience-collection baseline."""
    from ..evaluation import summarize_distribution

    return summarize_distribution(convenience_returns(config, n_mc, rng))
