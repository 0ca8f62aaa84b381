"""Estimator-style wrapper: configure, fit on an environment, predict actions."""

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

import numpy as np

from .envs.fvrs import FvrsConfig, obs_fn_by_label
from .envs.tiger import TigerConfig
from .evaluation import mc_return
from .networks import greedy_action, q_values
from .training import fvrs_train_config, tiger_train_config, train

_TUNABLE = ("lr", "buffer_size", "epochs_per_rollout", "lrs_factor",
            "lrs_patience", "epsilon_steps", "final_epsilon", "c", "n_c",
            "n_psd", "max_epochs", "max_frames")


class ConvexQAgent(BaseEstimator):
    """Dueling Q-learning agent with optional convexity enforcement.

    fit() trains on the configured environment; predict() maps encoded
    belief states (rows) to greedy action ids. Hyperparameters left at None
    fall back to the per-environment tuned defaults.
    """

    def __init__(self, env="tiger", method="none", seed=0, p_obs=1.0,
                 obs_fn="default", lr=None, buffer_size=None,
                 epochs_per_rollout=None, lrs_factor=None, lrs_patience=None,
                 epsilon_steps=None, final_epsilon=None, c=None, n_c=None,
                 n_psd=None, max_epochs=None, max_frames=None):
        self.env = env
        self.method = method
        self.seed = seed
        self.p_obs = p_obs
        self.obs_fn = obs_fn
        self.lr = lr
        self.buffer_size = buffer_size
        self.epochs_per_rollout = epochs_per_rollout
        self.lrs_factor = lrs_factor
        self.lrs_patience = lrs_patience
        self.epsilon_steps = epsilon_steps
        self.final_epsilon = final_epsilon
        self.c = c
        self.n_c = n_c
        self.n_psd = n_psd
        self.max_epochs = max_epochs
        self.max_frames = max_frames

    def _env_config(self):
        if self.env == "tiger":
            return TigerConfig(p_obs=self.p_obs)
        if self.env == "fvrs":
            return FvrsConfig(obs_fn=obs_fn_by_label(self.obs_fn, 4))
        raise ValueError(f"unknown environment {self.env!r}")

    def _train_config(self):
        overrides = {k: getattr(self, k) for k in _TUNABLE
                     if getattr(self, k) is not None}
        make = tiger_train_config if self.env == "tiger" else fvrs_train_config
        return make(**overrides)

    def fit(self, X=None, y=None):
        """Train on the configured environment; X and y are ignored."""
        env_config = self._env_config()
        config = self._train_config()
        self.net_, self.log_ = train(env_config, config, self.method, self.seed)
        self.env_config_ = env_config
        self.train_config_ = config
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise NotFittedError("call fit() before using the agent")

    def predict(self, X):
        """Greedy action ids for a batch of encoded belief states."""
        self._check_fitted()
        return np.asarray(greedy_action(self.net_, np.asarray(X, dtype=np.float64)))

    def decision_function(self, X):
        """Q-values, one column per action."""
        self._check_fitted()
        return q_values(self.net_, np.asarray(X, dtype=np.float64))

    def score(self, X=None, y=None, n_mc=1_000, rng=0):
        """Mean Monte-Carlo return on the training environment."""
        self._check_fitted()
        return mc_return(self.net_, self.env_config_, n_mc, rng=rng).mean
