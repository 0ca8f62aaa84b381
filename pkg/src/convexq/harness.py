"""Hyperparameter search, multi-seed evaluation, and result persistence."""

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .convexity import grad_penalty, hess_penalty_1d, hess_penalty_nd, point_penalty, sample_beliefs
from .envs.fvrs import CROSS_EVAL_OBS, FvrsConfig, obs_fn_by_label
from .envs.tiger import TigerConfig, oracle_policy
from .evaluation import cross_evaluate, is_optimal_tiger, mc_return, summarize_distribution
from .training import Trainer, TrainConfig, TrainingDiverged, fvrs_train_config, tiger_train_config

# disjoint tags keep the config, evaluation, and calibration streams apart
_CONFIG_STREAM, _EVAL_STREAM, _CALIBRATE_STREAM = 1, 2, 3

RESULT_COLUMNS = ("run_id", "method", "train_env", "eval_env", "seed", "n_mc",
                  "mean", "std", "se", "median", "q1", "q3", "wlow", "whigh", "max")


# -- search space ------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSpec:
    kind: str        # "uniform" | "log_uniform" | "int_uniform"
    low: float
    high: float

    def sample(self, rng):
        if self.kind == "uniform":
            return float(rng.uniform(self.low, self.high))
        if self.kind == "log_uniform":
            return float(np.exp(rng.uniform(np.log(self.low), np.log(self.high))))
        if self.kind == "int_uniform":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        raise ValueError(f"unknown distribution {self.kind!r}")


def search_space(env_kind):
    """Per-parameter sampling distributions, with environment-specific bounds."""
    if env_kind == "tiger":
        lr = ParamSpec("log_uniform", np.exp(-4.0), np.exp(-1.0))
        buffer = ParamSpec("int_uniform", 1, 100_000)
        patience = ParamSpec("int_uniform", 1, 10_000)
        eps_steps = ParamSpec("int_uniform", 1, 10_000)
    elif env_kind == "fvrs":
        lr = ParamSpec("log_uniform", np.exp(-7.0), np.exp(-3.0))
        buffer = ParamSpec("int_uniform", 1, 1_000_000)
        patience = ParamSpec("int_uniform", 1, 50_000)
        eps_steps = ParamSpec("int_uniform", 1, 100_000)
    else:
        raise ValueError(f"unknown environment kind: {env_kind!r}")
    return {
        "lr": lr,
        "buffer_size": buffer,
        "epochs_per_rollout": ParamSpec("int_uniform", 1, 25),
        "lrs_factor": ParamSpec("uniform", 0.8, 1.0),
        "lrs_patience": patience,
        "epsilon_steps": eps_steps,
        "final_epsilon": ParamSpec("uniform", 0.001, 0.5),
    }


def sample_config(space, rng, env_kind, **fixed):
    """Draw one searched configuration; `fixed` overrides sampled keys."""
    draws = {name: spec.sample(rng) for name, spec in space.items()}
    draws.update(fixed)
    make = tiger_train_config if env_kind == "tiger" else fvrs_train_config
    return make(**draws)


# -- campaign -------------------------------------------------------------------------


@dataclass
class Campaign:
    """Everything needed to reproduce a search or evaluation run set."""

    env: str = "tiger"
    methods: tuple = ("none",)
    runs_per_method: int = 2
    seed: int = 0
    n_mc: int = 1_000
    p_obs: float = 1.0            # tiger training accuracy
    obs_label: str = "default"    # fvrs training observation function
    shifts: tuple = None          # None = environment default shift list
    c: dict = field(default_factory=dict)   # per-method penalty weights
    n_c: int = 20
    n_psd: int = 8
    overrides: dict = field(default_factory=dict)  # fixed config overrides

    def __post_init__(self):
        if self.runs_per_method < 1:
            raise ValueError("runs_per_method must be at least 1")
        if self.env not in ("tiger", "fvrs"):
            raise ValueError(f"unknown environment {self.env!r}")
        self.methods = tuple(self.methods)
        if self.shifts is not None:
            self.shifts = tuple(self.shifts)

    def env_config(self):
        if self.env == "tiger":
            return TigerConfig(p_obs=self.p_obs)
        return FvrsConfig(obs_fn=obs_fn_by_label(self.obs_label, 4))

    def to_manifest(self, path):
        data = asdict(self)
        data["methods"] = list(self.methods)
        if self.shifts is not None:
            data["shifts"] = list(self.shifts)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_manifest(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        return cls(**data)


@dataclass
class RunResult:
    run_id: int
    method: str
    seed: int
    config: TrainConfig
    net: object = None
    summary: object = None       # EvalSummary of the final policy
    error: str = None

    @property
    def failed(self):
        return self.error is not None


def _run_seed(campaign_seed, run_id):
    """Stable per-run seed, independent of scheduling order."""
    return int(np.random.SeedSequence((campaign_seed, run_id)).generate_state(1)[0])


def _execute_run(campaign, run_id, method, config):
    env_config = campaign.env_config()
    seed = _run_seed(campaign.seed, run_id)
    try:
        net, _ = Trainer(env_config, config, method, seed).run()
        summary = mc_return(net, env_config, campaign.n_mc, rng=seed)
        return RunResult(run_id, method, seed, config, net=net, summary=summary)
    except TrainingDiverged as err:
        return RunResult(run_id, method, seed, config, error=str(err))


def _planned_runs(campaign, space):
    """The (run_id, method, config) list; configs drawn per-run, order-free."""
    plan = []
    run_id = 0
    for method in campaign.methods:
        for _ in range(campaign.runs_per_method):
            rng = np.random.default_rng(
                np.random.SeedSequence((campaign.seed, _CONFIG_STREAM, run_id)))
            fixed = dict(campaign.overrides)
            fixed.update(n_c=campaign.n_c, n_psd=campaign.n_psd)
            if method in campaign.c:
                fixed["c"] = campaign.c[method]
            cfg = sample_config(space, rng, campaign.env, **fixed)
            plan.append((run_id, method, cfg))
            run_id += 1
    return plan


def run_search(campaign, space=None, jobs=1):
    """Random search: train every planned run and evaluate its final policy.

    Individual failures are recorded on their RunResult; the rest of the
    campaign continues. Results come back sorted by run id regardless of
    worker scheduling.
    """
    space = space or search_space(campaign.env)
    plan = [(campaign, rid, m, cfg) for rid, m, cfg in _planned_runs(campaign, space)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_execute_run_args, plan))
    else:
        results = [_execute_run(*args) for args in plan]
    return sorted(results, key=lambda r: r.run_id)


def _execute_run_args(args):
    return _execute_run(*args)


def best_config(results):
    """The successful run with the highest mean return; ties pick the lower id."""
    ok = [r for r in results if not r.failed]
    if not ok:
        raise ValueError("no successful runs")
    return max(ok, key=lambda r: (r.summary.mean, -r.run_id))


def evaluate_best(best, campaign, n_seeds):
    """Retrain the winning config under fresh seeds and cross-evaluate each.

    Returns (results, rows): per-seed RunResults and flat result-CSV rows,
    one row per (seed, eval environment). Evaluation seeds are drawn from a
    separate stream, so they never collide with search seeds.
    """
    env_config = campaign.env_config()
    train_env = env_config.label()
    results, rows = [], []
    for i in range(n_seeds):
        seed = int(np.random.SeedSequence(
            (campaign.seed, _EVAL_STREAM, i)).generate_state(1)[0])
        try:
            net, _ = Trainer(env_config, best.config, best.method, seed).run()
        except TrainingDiverged as err:
            results.append(RunResult(i, best.method, seed, best.config,
                                     error=str(err)))
            continue
        crossed = cross_evaluate(net, env_config, campaign.n_mc, seed,
                                 shifts=campaign.shifts)
        base_label = train_env if train_env in crossed else next(iter(crossed))
        results.append(RunResult(i, best.method, seed, best.config, net=net,
                                 summary=crossed[base_label]))
        for label, summary in crossed.items():
            rows.append(result_row(i, best.method, train_env, label, seed,
                                   campaign.n_mc, summary))
    return results, rows


def robustness_report(results):
    """Boxplot statistics of per-run mean returns, grouped by method."""
    out = {}
    for method in sorted({r.method for r in results}):
        means = [r.summary.mean for r in results
                 if r.method == method and not r.failed]
        if means:
            out[method] = summarize_distribution(means)
    return out


def robustness_from_rows(rows):
    """Boxplots over stored result rows, grouped by (method, eval env)."""
    groups = {}
    for row in rows:
        groups.setdefault((row["method"], row["eval_env"]), []).append(row["mean"])
    return {key: summarize_distribution(means)
            for key, means in sorted(groups.items())}


def filter_optimal_tiger(results, table=None, p_obs=1.0):
    """Search results whose final greedy policy is optimal on reachable beliefs."""
    if table is None:
        gamma = next(r.config.gamma for r in results if not r.failed)
        table = oracle_policy(gamma, p_obs)
    keep = []
    for r in results:
        if r.failed:
            continue
        flag, _ = is_optimal_tiger(r.net, table)
        if flag:
            keep.append(r)
    return keep


# -- penalty weight calibration ----------------------------------------------------------


def calibrate_c(env_config, seed=0, pilot_epochs=None, n_eval=50, **overrides):
    """Penalty weights that balance the TD loss against each convexity loss.

    Trains a short pilot without any penalty, then sets c so that the pilot's
    mean TD loss and mean convexity loss would contribute equally. Training
    overrides are forwarded to the pilot so the ratio is measured under the
    same configuration the weights will be used with.
    """
    make = tiger_train_config if env_config.kind == "tiger" else fvrs_train_config
    if pilot_epochs is None:
        pilot_epochs = 500 if env_config.kind == "tiger" else 5_000
    cfg = make(max_epochs=pilot_epochs, **overrides)
    trainer = Trainer(env_config, cfg, "none", seed)
    trainer.run()
    window = trainer.log.rows[-min(100, len(trainer.log)):]
    mean_td = float(np.mean([r.td_loss for r in window]))

    rng = np.random.default_rng(np.random.SeedSequence((seed, _CALIBRATE_STREAM)))
    states = trainer.buffer.states[:len(trainer.buffer)]
    kind = env_config.kind
    sums = {"point": 0.0, "grad": 0.0, "hess": 0.0}
    smooth = trainer.net.activation != "lrelu"
    for _ in range(n_eval):
        flat = sample_beliefs(kind, cfg.n_c, rng,
                              states=None if kind == "tiger" else states)
        sums["point"] += float(point_penalty(trainer.net, flat).value)
        sums["grad"] += float(grad_penalty(trainer.net, flat).value)
        if smooth:
            psd = sample_beliefs(kind, cfg.n_c, rng, n_psd=cfg.n_psd,
                                 states=None if kind == "tiger" else states)
            pen = hess_penalty_1d if kind == "tiger" else hess_penalty_nd
            sums["hess"] += float(pen(trainer.net, psd).value)
    out = {}
    for name, total in sums.items():
        if name == "hess" and not smooth:
            continue
        mean_pen = total / n_eval
        out[name] = mean_td / mean_pen if mean_pen > 0.0 else 1.0
    return out


# -- result persistence ------------------------------------------------------------------


def result_row(run_id, method, train_env, eval_env, seed, n_mc, summary):
    return {
        "run_id": run_id, "method": method, "train_env": train_env,
        "eval_env": eval_env, "seed": seed, "n_mc": n_mc,
        "mean": summary.mean, "std": summary.std, "se": summary.se,
        "median": summary.median, "q1": summary.q1, "q3": summary.q3,
        "wlow": summary.whisker_low, "whigh": summary.whisker_high,
        "max": summary.max,
    }


def search_rows(campaign, results):
    """Result-CSV rows for a finished search (eval env == train env)."""
    label = campaign.env_config().label()
    return [result_row(r.run_id, r.method, label, label, r.seed,
                       campaign.n_mc, r.summary)
            for r in results if not r.failed]


def write_results(rows, path):
    """Result CSV, sorted by (run id, eval env); floats keep full precision."""
    rows = sorted(rows, key=lambda r: (r["run_id"], r["eval_env"]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([r["run_id"], r["method"], r["train_env"], r["eval_env"],
                        r["seed"], r["n_mc"]]
                       + [repr(float(r[k])) for k in RESULT_COLUMNS[6:]])


def read_results(path):
    """Rows back from a result CSV, numeric fields restored."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for k in ("run_id", "seed", "n_mc"):
                row[k] = int(row[k])
            for k in RESULT_COLUMNS[6:]:
                row[k] = float(row[k])
            out.append(row)
    return out
