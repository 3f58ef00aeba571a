"""Experiment configuration, trial orchestration, baselines and data exporters."""

from __future__ import annotations

import ast
import csv
import io
import math
import os
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .driver import LsbConfig, run_lsb
from .envs import ENV_NAMES, make_env
from .learners import ActorCriticLearner, UcbRpsLearner
from .mdp import EnvModel, default_horizon, derive_seed, rollout, substream
from .partition import Grid, GridPartition
from .policy_eval import BinaryGridFeatures, LstdEvaluator, NnEvaluator
from .skills import ActionFeatures, PolynomialFeatures, SkillPolicy, SkillSet, dump_skill_set, load_skill_set

RUNLOG_SCHEMA = "lsb-runlog 1"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# ------------------------------------------------------------------ config

def parse_config_text(text: str) -> dict:
    """``key = value`` lines with dotted keys; values are Python literals or bare strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or any(not part.isidentifier() for part in key.split(".")):
            raise ConfigError(f"line {lineno}", f"malformed key {key!r}")
        if key in out:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        try:
            out[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            out[key] = value
    return out


@dataclass
class ExperimentConfig:
    env_name: str = "puddle_world"
    gamma: float | None = None
    dims: tuple = (2, 2)
    features: str = "action"
    iterations: int = 3
    epsilon: float | None = None
    order: str = "index"
    evaluation: str = "per_update"
    evaluator: str = "lstd"
    eval_episodes: int = 200
    eval_cells: int = 10
    eval_start: str = "uniform"
    eval_horizon: int | None = None
    nn_points: int = 1000
    nn_rollouts: int = 1
    learner: str = "actor_critic"
    alpha: float = 0.1
    beta_ratio: float = 0.2
    learner_steps: int = 20000     # per iteration, split evenly across skills
    max_steps: int = 200
    critic_cells: int = 4
    per_action: bool = False
    reward_scale: float = 1.0
    warm_start: bool = False
    candidates: int = 20
    rollouts: int = 400            # per iteration, split evenly across skills
    exploration_c: float = math.sqrt(2.0)
    sigma: float = 1.0
    score_episodes: int = 200
    score_horizon: int | None = None
    trials: int = 1
    seed: int = 0
    out: str | None = None

    KEYS = {
        "env.name": "env_name", "env.gamma": "gamma",
        "partition.dims": "dims", "skills.features": "features",
        "lsb.iterations": "iterations", "lsb.epsilon": "epsilon", "lsb.order": "order",
        "lsb.evaluation": "evaluation",
        "evaluator.name": "evaluator", "evaluator.episodes": "eval_episodes",
        "evaluator.cells": "eval_cells", "evaluator.start": "eval_start",
        "evaluator.horizon": "eval_horizon", "evaluator.points": "nn_points",
        "evaluator.rollouts": "nn_rollouts",
        "learner.name": "learner", "learner.alpha": "alpha", "learner.beta_ratio": "beta_ratio",
        "learner.steps": "learner_steps", "learner.max_steps": "max_steps",
        "learner.critic_cells": "critic_cells", "learner.per_action": "per_action",
        "learner.reward_scale": "reward_scale", "learner.warm_start": "warm_start",
        "learner.candidates": "candidates", "learner.rollouts": "rollouts",
        "learner.exploration_c": "exploration_c", "learner.sigma": "sigma",
        "score.episodes": "score_episodes", "score.horizon": "score_horizon",
        "experiment.trials": "trials", "experiment.seed": "seed", "experiment.out": "out",
    }

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        cfg = cls()
        for key, value in mapping.items():
            if key not in cls.KEYS:
                raise ConfigError(key, "unknown key")
            setattr(cfg, cls.KEYS[key], value)
        cfg.validate()
        return cfg

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_mapping(parse_config_text(text))

    def to_text(self) -> str:
        lines = []
        for key, attr in self.KEYS.items():
            value = getattr(self, attr)
            if value is not None:
                lines.append(f"{key} = {value!r}" if not isinstance(value, str) else f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "ExperimentConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        cfg = ExperimentConfig(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        key_of = {attr: key for key, attr in self.KEYS.items()}

        def need(attr, ok, msg):
            if not ok:
                raise ConfigError(key_of[attr], msg)

        need("env_name", self.env_name in ENV_NAMES, f"unknown environment {self.env_name!r}")
        need("gamma", self.gamma is None or (isinstance(self.gamma, (int, float)) and 0 <= self.gamma < 1),
             "must lie in [0, 1)")
        if isinstance(self.dims, int):
            self.dims = (self.dims,)
        need("dims", isinstance(self.dims, (tuple, list)) and all(isinstance(d, int) and d >= 1 for d in self.dims),
             "must be a tuple of positive integers")
        self.dims = tuple(self.dims)
        need("features", self.features in ("action", "polynomial"), "must be action or polynomial")
        need("iterations", isinstance(self.iterations, int) and self.iterations >= 1, "must be an integer >= 1")
        need("order", self.order in ("index", "goal_first"), "must be index or goal_first")
        need("evaluation", self.evaluation in ("per_update", "per_sweep"), "must be per_update or per_sweep")
        need("evaluator", self.evaluator in ("lstd", "nn"), "must be lstd or nn")
        need("eval_episodes", isinstance(self.eval_episodes, int) and self.eval_episodes >= 1, "must be >= 1")
        need("eval_start", self.eval_start in ("uniform", "env"), "must be uniform or env")
        need("nn_points", isinstance(self.nn_points, int) and self.nn_points >= 1, "must be >= 1")
        need("nn_rollouts", isinstance(self.nn_rollouts, int) and self.nn_rollouts >= 1, "must be >= 1")
        need("learner", self.learner in ("actor_critic", "ucb_rps"), "must be actor_critic or ucb_rps")
        need("alpha", isinstance(self.alpha, (int, float)) and self.alpha > 0, "must be positive")
        need("beta_ratio", isinstance(self.beta_ratio, (int, float)) and 0 < self.beta_ratio < 1,
             "must lie in (0, 1) so that beta < alpha")
        need("learner_steps", isinstance(self.learner_steps, int) and self.learner_steps >= 1, "must be >= 1")
        need("reward_scale", isinstance(self.reward_scale, (int, float)) and self.reward_scale > 0,
             "must be positive")
        need("max_steps", isinstance(self.max_steps, int) and self.max_steps >= 1, "must be >= 1")
        need("critic_cells", isinstance(self.critic_cells, int) and self.critic_cells >= 1, "must be >= 1")
        need("sigma", isinstance(self.sigma, (int, float)) and self.sigma > 0, "must be positive")
        need("exploration_c", isinstance(self.exploration_c, (int, float)) and self.exploration_c >= 0,
             "must be non-negative")
        need("candidates", isinstance(self.candidates, int) and self.candidates >= 2, "must be >= 2")
        need("rollouts", isinstance(self.rollouts, int) and self.rollouts >= 1, "must be >= 1")
        need("score_episodes", isinstance(self.score_episodes, int) and self.score_episodes >= 2, "must be >= 2")
        need("trials", isinstance(self.trials, int) and self.trials >= 1, "must be an integer >= 1")
        need("seed", isinstance(self.seed, int), "must be an integer")

    # builders
    def make_env(self) -> EnvModel:
        return make_env(self.env_name, self.gamma)

    def make_partition(self, env: EnvModel) -> GridPartition:
        if len(self.dims) != env.state_dim:
            raise ConfigError("partition.dims", f"needs {env.state_dim} entries for {self.env_name}")
        return GridPartition(env.bounds, self.dims)

    def make_features(self, env: EnvModel):
        if self.features == "action":
            return ActionFeatures(env.action_count)
        return PolynomialFeatures(env.bounds, env.action_count)

    def make_evaluator(self, env: EnvModel):
        if self.evaluator == "lstd":
            cells = self.eval_cells
            cells = [cells] * env.state_dim if isinstance(cells, int) else list(cells)
            if len(cells) != env.state_dim:
                raise ConfigError("evaluator.cells", f"needs {env.state_dim} entries")
            return LstdEvaluator(BinaryGridFeatures(env.bounds, cells), self.eval_episodes,
                                 self.eval_horizon, self.eval_start)
        return NnEvaluator(self.nn_points, self.nn_rollouts, self.eval_horizon)

    def make_learner(self, m: int):
        if self.learner == "actor_critic":
            per_skill = max(1, self.learner_steps // m)
            return ActorCriticLearner(episodes=per_skill, max_steps=self.max_steps, alpha=self.alpha,
                                      beta_ratio=self.beta_ratio, step_budget=per_skill,
                                      critic_cells=self.critic_cells, per_action=self.per_action,
                                      reward_scale=self.reward_scale, warm_start=bool(self.warm_start))
        per_skill = max(self.candidates + 1, self.rollouts // m)
        return UcbRpsLearner(self.candidates, per_skill, self.max_steps, self.exploration_c, self.sigma)


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from None
    return ExperimentConfig.from_text(text)


# ------------------------------------------------------------- scoring

def score_policy(env: EnvModel, policy, n_episodes: int, seed: int, horizon: int | None = None):
    """Mean and standard error of the discounted return from the start distribution.

    Episode k draws its start state and dynamics noise from substream
    (seed, k), so every policy is scored on the same start states.
    """
    horizon = horizon or default_horizon(env.gamma)
    returns = np.empty(n_episodes)
    for k in range(n_episodes):
        rng = substream(seed, k)
        s0 = env.initial_state(rng)
        returns[k], _ = rollout(env, policy, s0, horizon, rng, record=False)
    return float(returns.mean()), float(returns.std(ddof=1) / math.sqrt(n_episodes))


def start_states(env: EnvModel, n: int, seed: int) -> list:
    return [env.initial_state(substream(seed, k)) for k in range(n)]


# ---------------------------------------------------------- experiments

@dataclass
class TrialResult:
    trial: int
    rows: list            # (iteration, skill, mean_return, stderr, eval_error_proxy)
    initial: tuple        # (mean_return, stderr) of the initial skill set
    timing: list          # (iteration, skill, wall_ms)
    skill_set: SkillSet
    order: tuple


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return int(np.prod(self.config.dims))

    def iteration_returns(self) -> np.ndarray:
        """(trials, K + 1) returns after each full sweep; column 0 is the initial policy."""
        K, m = self.config.iterations, self.m
        out = np.empty((len(self.trials), K + 1))
        for t, tr in enumerate(self.trials):
            out[t, 0] = tr.initial[0]
            for k in range(1, K + 1):
                out[t, k] = tr.rows[k * m - 1][2]
        return out

    def summary(self) -> list:
        """(iteration, mean, stderr, n) across trials."""
        R = self.iteration_returns()
        n = R.shape[0]
        se = R.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(R.shape[1])
        return [(k, float(R[:, k].mean()), float(se[k]), n) for k in range(R.shape[1])]


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialResult:
    env = cfg.make_env()
    partition = cfg.make_partition(env)
    features = cfg.make_features(env)
    seed = derive_seed(cfg.seed, trial)
    score_seed = derive_seed(cfg.seed, trial, 1)
    starts = start_states(env, cfg.score_episodes, score_seed)
    lsb_cfg = LsbConfig(cfg.iterations, cfg.make_evaluator(env), cfg.make_learner(partition.m),
                        cfg.order, cfg.evaluation, cfg.epsilon)

    def score(skill_set):
        return score_policy(env, SkillPolicy(partition, skill_set), cfg.score_episodes, score_seed,
                            cfg.score_horizon)

    proxies = []

    def on_update(record, value_fn):
        v_hat = float(np.mean([value_fn(s) for s in starts]))
        proxies.append(abs(v_hat - record.pre_return[0]))

    result = run_lsb(env, partition, lsb_cfg, seed, features=features, score_fn=score, on_update=on_update)
    initial = result.log[0].pre_return
    rows = [(u.iteration, u.skill, u.post_return[0], u.post_return[1], proxies[j])
            for j, u in enumerate(result.log)]
    timing = [(u.iteration, u.skill, u.wall_ms) for u in result.log]
    return TrialResult(trial, rows, initial, timing, result.skill_set, result.order)


def run_experiment(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None,
                   progress: Callable[[str], None] | None = None) -> ExperimentResult:
    """Run ``cfg.trials`` seeded trials; write outputs when ``out_dir`` (or ``cfg.out``) is set."""
    res = ExperimentResult(cfg)
    for t in range(cfg.trials):
        t0 = time.perf_counter()
        res.trials.append(run_trial(cfg, t))
        if progress:
            final = res.trials[-1].rows[-1][2]
            progress(f"trial {t}: final return {final:.4f} ({time.perf_counter() - t0:.1f}s)")
    out_dir = out_dir or cfg.out
    if out_dir:
        write_outputs(res, out_dir)
    return res


def _fmt(x: float) -> str:
    return repr(float(x))


def format_runlog(res: ExperimentResult) -> str:
    buf = io.StringIO()
    buf.write(f"# {RUNLOG_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "iteration", "skill_index", "mean_return", "stderr", "eval_error_proxy"])
    for tr in res.trials:
        for it, i, mean, se, proxy in tr.rows:
            w.writerow([tr.trial, it, i, _fmt(mean), _fmt(se), _fmt(proxy)])
    return buf.getvalue()


def format_summary(res: ExperimentResult) -> str:
    buf = io.StringIO()
    buf.write(f"# {RUNLOG_SCHEMA} summary\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "mean_return", "stderr", "trials"])
    for k, mean, se, n in res.summary():
        w.writerow([k, _fmt(mean), _fmt(se), n])
    return buf.getvalue()


def write_outputs(res: ExperimentResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "runlog.csv").write_text(format_runlog(res))
    (out / "summary.csv").write_text(format_summary(res))
    (out / "config.txt").write_text(res.config.to_text())
    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "iteration", "skill_index", "wall_ms"])
        for tr in res.trials:
            for it, i, ms in tr.timing:
                w.writerow([tr.trial, it, i, f"{ms:.3f}"])
    for tr in res.trials:
        (out / f"skills_{tr.trial}.txt").write_text(dump_skill_set(tr.skill_set))
    return out


def load_run(run_dir) -> tuple[ExperimentConfig, EnvModel, GridPartition, dict]:
    """Config, env, partition and {trial: skill set} of a finished run."""
    run = Path(run_dir)
    cfg = load_config(run / "config.txt")
    env = cfg.make_env()
    partition = cfg.make_partition(env)
    features = cfg.make_features(env)
    skills = {}
    for p in sorted(run.glob("skills_*.txt")):
        skills[int(p.stem.split("_")[1])] = load_skill_set(p.read_text(), features)
    if not skills:
        raise FileNotFoundError(f"no skills_*.txt files in {run}")
    return cfg, env, partition, skills


# --------------------------------------------------------------- baselines

@dataclass
class FineQResult:
    grid: Grid
    Q: np.ndarray

    @property
    def V(self) -> np.ndarray:
        return self.Q.max(axis=1)

    def value_table(self) -> np.ndarray:
        return self.V.reshape(self.grid.dims)

    def action(self, s) -> int:
        return int(self.Q[self.grid.index(s)].argmax())

    def __call__(self, s) -> np.ndarray:
        out = np.zeros(self.Q.shape[1])
        out[self.action(s)] = 1.0
        return out

    def sample(self, s, rng) -> int:
        return self.action(s)

    def value(self, s) -> float:
        return float(self.V[self.grid.index(s)])


def baseline_fine_q(env: EnvModel, cells_per_dim, episodes: int, seed: int, epsilon: float = 0.1,
                    alpha: float = 0.1, max_steps: int | None = None, q_init: float = 1.0,
                    start: str = "uniform", hold: bool = True) -> FineQResult:
    """Tabular Q-learning on a fine grid discretization of ``env``.

    Step size is max(alpha, 1 / visits); exploration is epsilon-greedy with
    optimistic initial values. Episodes start uniformly over valid states
    unless ``start="env"``. With ``hold`` an action is repeated until the
    state leaves its grid cell and the update discounts by gamma^t over the
    t held steps; on fine grids most raw steps stay inside one cell, and
    without this the optimistic values barely decay.
    """
    cells = [cells_per_dim] * env.state_dim if isinstance(cells_per_dim, int) else list(cells_per_dim)
    if len(cells) != env.state_dim or min(cells) < 10:
        raise ValueError("cells_per_dim must be >= 10 in every dimension")
    grid = BinaryGridFeatures(env.bounds, cells)
    A = env.action_count
    Q = np.full((grid.size, A), float(q_init))
    N = np.zeros((grid.size, A), dtype=np.int64)
    gamma = env.gamma
    max_steps = max_steps or default_horizon(gamma)
    for ep in range(episodes):
        rng = substream(seed, ep)
        s = env.sample_state(rng) if start == "uniform" else env.initial_state(rng)
        k = grid.index(s)
        used = 0
        while used < max_steps:
            if rng.random() < epsilon:
                a = int(rng.integers(A))
            else:
                a = int(Q[k].argmax())
            ret, disc = 0.0, 1.0
            while True:
                s, r, done = env.step(s, a, rng)
                used += 1
                ret += disc * r
                disc *= gamma
                k2 = grid.index(s)
                if done or not hold or k2 != k or used >= max_steps:
                    break
            N[k, a] += 1
            step = max(alpha, 1.0 / N[k, a])
            target = ret if done else ret + disc * Q[k2].max()
            Q[k, a] += step * (target - Q[k, a])
            if done:
                break
            k = k2
    return FineQResult(grid, Q)


# ---------------------------------------------------------------- exporters

def value_grid(value_fn: Callable, bounds, resolution, fixed_dims: dict | None = None,
               plot_dims: Sequence[int] = (0, 1)) -> np.ndarray:
    """V at cell centers of a ``resolution`` grid over two plotted dims; row per y, column per x."""
    bounds = np.asarray(bounds, dtype=float)
    res = (resolution, resolution) if isinstance(resolution, int) else tuple(resolution)
    if min(res) < 2:
        raise ValueError("resolution must be >= 2 per plotted dim")
    fixed = dict(fixed_dims or {})
    dx, dy = plot_dims
    xs = bounds[dx, 0] + (np.arange(res[0]) + 0.5) * (bounds[dx, 1] - bounds[dx, 0]) / res[0]
    ys = bounds[dy, 0] + (np.arange(res[1]) + 0.5) * (bounds[dy, 1] - bounds[dy, 0]) / res[1]
    D = len(bounds)
    out = np.empty((res[1], res[0]))
    for r, y in enumerate(ys):
        for c, x in enumerate(xs):
            s = [float(fixed.get(d, 0.0)) for d in range(D)]
            s[dx], s[dy] = float(x), float(y)
            out[r, c] = value_fn(tuple(s))
    return out


def export_value_heatmap(value_fn: Callable, bounds, resolution, fixed_dims: dict | None = None,
                         path=None, plot_dims: Sequence[int] = (0, 1)) -> np.ndarray:
    """Whitespace-delimited value matrix with a header describing the grid."""
    M = value_grid(value_fn, bounds, resolution, fixed_dims, plot_dims)
    if path is not None:
        bounds = np.asarray(bounds, dtype=float)
        header = (f"lsb heatmap rows={M.shape[0]} cols={M.shape[1]} "
                  f"x_dim={plot_dims[0]} x_bounds={bounds[plot_dims[0]].tolist()} "
                  f"y_dim={plot_dims[1]} y_bounds={bounds[plot_dims[1]].tolist()} "
                  f"fixed={dict(sorted((fixed_dims or {}).items()))} cell_centers")
        np.savetxt(path, M, fmt="%.10g", header=header)
    return M


def read_heatmap(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)


@dataclass
class Quiver:
    rows: list            # (x, y, dx, dy) per class
    angles: np.ndarray    # pairwise angular distance in degrees; nan for zero-length arrows


def export_skill_quiver(partition, skill_set: SkillSet, samples_per_class: int, seed: int,
                        action_vectors, path=None, zero_tol: float = 1e-9) -> Quiver:
    """Average sampled unit action direction of each skill at its class center."""
    if len(partition.dims) != 2:
        raise ValueError("quiver requires 2D")
    if samples_per_class < 1:
        raise ValueError("samples_per_class must be >= 1")
    vecs = np.asarray(action_vectors, dtype=float)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    units = np.divide(vecs, norms, out=np.zeros_like(vecs), where=norms > 0)
    rows = []
    for i in range(partition.m):
        c = partition.center(i)
        rng = substream(seed, i)
        skill = skill_set[i]
        acts = [skill.sample(c, rng) for _ in range(samples_per_class)]
        d = units[acts].mean(axis=0)
        rows.append((c[0], c[1], float(d[0]), float(d[1])))
    angles = angular_distances(rows, zero_tol)
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "dx", "dy"])
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    return Quiver(rows, angles)


def angular_distances(rows, zero_tol: float = 1e-9) -> np.ndarray:
    n = len(rows)
    ang = np.array([math.atan2(dy, dx) if math.hypot(dx, dy) > zero_tol else np.nan for _, _, dx, dy in rows])
    out = np.full((n, n), np.nan)
    for a in range(n):
        for b in range(n):
            if not (np.isnan(ang[a]) or np.isnan(ang[b])):
                d = abs(ang[a] - ang[b]) % (2 * math.pi)
                out[a, b] = math.degrees(min(d, 2 * math.pi - d))
    return out


def count_direction_groups(angles: np.ndarray, tol_deg: float = 30.0) -> int:
    """Greedy clustering: an arrow joins the first group whose founder is within ``tol_deg``.

    Zero-length arrows form one extra group if present.
    """
    n = angles.shape[0]
    founders = []
    zero = False
    for a in range(n):
        if np.isnan(angles[a, a]):
            zero = True
            continue
        if not any(angles[a, f] <= tol_deg for f in founders):
            founders.append(a)
    return len(founders) + int(zero)


# --------------------------------------------------------------- benchmarks

BENCH_SUITES = ("pw", "mc", "maze", "pinball")

_PW = dict(env_name="puddle_world", features="action", iterations=2, evaluator="lstd", eval_cells=10,
           eval_episodes=100, learner="actor_critic", learner_steps=20000, reward_scale=50.0,
           critic_cells=4, score_episodes=300, trials=10)
_MC = dict(env_name="mountain_car", dims=(2, 2), features="action", iterations=3, order="goal_first",
           evaluator="lstd", eval_cells=10, eval_episodes=100, learner="actor_critic", learner_steps=40000,
           reward_scale=50.0, critic_cells=8, score_episodes=100, trials=10)
_PINBALL = dict(features="polynomial", iterations=2, order="goal_first", evaluator="nn", nn_points=1000,
                learner="ucb_rps", candidates=30, rollouts=3000, sigma=3.0, score_episodes=100, trials=5)


def bench_configs(suite: str, trials: int | None = None) -> list[tuple[str, ExperimentConfig]]:
    """Labelled configurations of one benchmark suite; the ``mono`` arm uses one class."""
    if suite == "pw":
        arms = [("lsb_2x2", dict(_PW, dims=(2, 2))), ("mono", dict(_PW, dims=(1, 1))),
                ("lsb_3x3", dict(_PW, dims=(3, 3))), ("lsb_4x4", dict(_PW, dims=(4, 4)))]
    elif suite == "mc":
        arms = [("lsb_goal_first", _MC), ("lsb_index", dict(_MC, order="index")),
                ("mono", dict(_MC, dims=(1, 1)))]
    elif suite == "maze":
        arms = [("lsb", dict(_PINBALL, env_name="pinball_maze", dims=(4, 1, 1, 1))),
                ("mono", dict(_PINBALL, env_name="pinball_maze", dims=(1, 1, 1, 1)))]
    elif suite == "pinball":
        arms = [("lsb", dict(_PINBALL, env_name="pinball_world", dims=(4, 3, 1, 1))),
                ("mono", dict(_PINBALL, env_name="pinball_world", dims=(1, 1, 1, 1)))]
    else:
        raise ConfigError("suite", f"unknown suite {suite!r}; choose from {', '.join(BENCH_SUITES)}")
    out = []
    for label, kw in arms:
        cfg = ExperimentConfig(**kw)
        if trials is not None:
            cfg = cfg.replace(trials=trials)
        cfg.validate()
        out.append((label, cfg))
    return out


def pooled_se(se_a: float, se_b: float) -> float:
    return math.sqrt(se_a * se_a + se_b * se_b)


def fine_q_reference(cfg: ExperimentConfig, cells_per_dim: int = 25, episodes: int = 3000,
                     seed: int | None = None) -> tuple[float, float]:
    """Return of the fine-grid Q-learning policy, scored on trial 0's start states."""
    env = cfg.make_env()
    seed = cfg.seed if seed is None else seed
    q = baseline_fine_q(env, cells_per_dim, episodes, derive_seed(seed, 7))
    return score_policy(env, q, cfg.score_episodes, derive_seed(cfg.seed, 0, 1), cfg.score_horizon)


@dataclass
class BenchReport:
    suite: str
    results: dict                    # label -> ExperimentResult
    reference: tuple | None = None   # (mean, stderr) of the fine-grid baseline, if computed

    def final(self, label: str) -> tuple[float, float]:
        _, mean, se, _ = self.results[label].summary()[-1]
        return mean, se

    def z_vs_mono(self, label: str) -> float:
        (m1, s1), (m0, s0) = self.final(label), self.final("mono")
        se = pooled_se(s1, s0)
        if se > 0:
            return (m1 - m0) / se
        return 0.0 if m1 == m0 else math.copysign(math.inf, m1 - m0)

    def lines(self) -> list[str]:
        out = []
        for label, res in self.results.items():
            curve = " ".join(f"{mean:.4f}+-{se:.4f}" for _, mean, se, _ in res.summary())
            extra = f"  z_vs_mono={self.z_vs_mono(label):+.2f}" if label != "mono" and "mono" in self.results else ""
            out.append(f"{self.suite:7s} {label:15s} {curve}{extra}")
        if self.reference is not None:
            out.append(f"{self.suite:7s} {'fine_q':15s} {self.reference[0]:.4f}+-{self.reference[1]:.4f}")
        return out


def run_bench(suite: str, out_dir=None, trials: int | None = None, reference: bool = True,
              progress: Callable[[str], None] | None = None) -> BenchReport:
    """Run every arm of ``suite``; outputs go to ``out_dir/<label>/`` when given."""
    report = BenchReport(suite, {})
    for label, cfg in bench_configs(suite, trials):
        if progress:
            progress(f"{suite}/{label}: {cfg.trials} trials")
        sub = Path(out_dir) / label if out_dir else None
        report.results[label] = run_experiment(cfg, sub, progress)
    if reference and suite == "pw":
        report.reference = fine_q_reference(bench_configs(suite, trials)[0][1])
    if out_dir:
        Path(out_dir, "bench.txt").write_text("\n".join(report.lines()) + "\n")
    return report
