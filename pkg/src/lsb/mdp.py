"""Generative MDP interface, traces, discounted returns and Monte Carlo values."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

State = Any


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    Streams only depend on the key tuple, so a batch of rollouts gives the
    same numbers whether it runs serially or is split across workers.
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(seed: int, *keys: int) -> int:
    """Integer seed for the child stream ``(seed, *keys)``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def default_horizon(gamma: float, tol: float = 1e-4) -> int:
    """Smallest H with gamma**H / (1 - gamma) < tol."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if gamma == 0.0:
        return 1
    h = math.log(tol * (1.0 - gamma)) / math.log(gamma)
    return max(1, int(math.floor(h)) + 1)


def sample_index(probs: Sequence[float], u: float) -> int:
    acc = 0.0
    last = len(probs) - 1
    for a in range(last):
        acc += probs[a]
        if u < acc:
            return a
    return last


class EnvModel:
    """A generative MDP with finite actions and rewards in [0, 1].

    Subclasses set ``state_dim``, ``action_count``, ``gamma`` and ``bounds``
    (an array of shape ``(state_dim, 2)``) and implement :meth:`step` and
    :meth:`initial_state`.
    """

    name = "env"
    state_dim: int = 1
    action_count: int = 1
    gamma: float = 0.99
    bounds: np.ndarray

    def step(self, state: State, action: int, rng: np.random.Generator) -> tuple[State, float, bool]:
        raise NotImplementedError

    def initial_state(self, rng: np.random.Generator) -> State:
        raise NotImplementedError

    def is_start_valid(self, state: State) -> bool:
        """Whether ``state`` is a legal non-terminal state to start from."""
        return True

    def sample_state(self, rng: np.random.Generator) -> State:
        """Uniform sample over the valid part of the state box."""
        low, high = self.bounds[:, 0], self.bounds[:, 1]
        for _ in range(10000):
            s = tuple(float(v) for v in low + (high - low) * rng.random(self.state_dim))
            if self.is_start_valid(s):
                return s
        raise RuntimeError(f"could not sample a valid state in {self.name}")

    def clamp(self, state: State) -> State:
        return tuple(min(max(float(v), lo), hi) for v, (lo, hi) in zip(state, self.bounds))


@dataclass
class Trace:
    steps: list = field(default_factory=list)  # (state, action, reward, next_state, done)
    seed: int | None = None

    @property
    def rewards(self) -> list[float]:
        return [step[2] for step in self.steps]

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class ValueGapReport:
    sup_gap: float
    argmax_state: Any


def discounted_return(trace: Trace | Sequence[float], gamma: float) -> float:
    """Sum of gamma**(t-1) * r_t over the trace."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    rewards = trace.rewards if isinstance(trace, Trace) else list(trace)
    if not rewards:
        raise ValueError("empty trace")
    total = 0.0
    disc = 1.0
    for r in rewards:
        total += disc * r
        disc *= gamma
    return total


def as_policy(policy) -> Callable:
    """Return a ``(state, rng) -> action`` sampler for ``policy``.

    ``policy`` is either an object with a ``sample`` method or a callable
    mapping a state to an action distribution.
    """
    if hasattr(policy, "sample"):
        return policy.sample

    def sample(state, rng):
        return sample_index(policy(state), rng.random())

    return sample


def rollout(
    env: EnvModel,
    policy,
    s0: State,
    horizon: int,
    rng: np.random.Generator,
    record: bool = True,
) -> tuple[float, Trace | None]:
    """Run ``policy`` from ``s0`` for at most ``horizon`` steps.

    Returns the discounted return and, when ``record`` is set, the trace.
    """
    sample = as_policy(policy)
    gamma = env.gamma
    steps = [] if record else None
    total = 0.0
    disc = 1.0
    s = s0
    for _ in range(horizon):
        a = sample(s, rng)
        s_next, r, done = env.step(s, a, rng)
        total += disc * r
        disc *= gamma
        if record:
            steps.append((s, a, r, s_next, done))
        if done:
            break
        s = s_next
    return total, (Trace(steps) if record else None)


def monte_carlo_estimate(
    env: EnvModel,
    policy,
    s0: State,
    horizon: int,
    n_rollouts: int,
    seed: int,
) -> tuple[float, float]:
    """Mean discounted return over ``n_rollouts`` rollouts and its standard error."""
    if horizon < 1 or n_rollouts < 1:
        raise ValueError("horizon and n_rollouts must be >= 1")
    returns = np.empty(n_rollouts)
    for k in range(n_rollouts):
        returns[k], _ = rollout(env, policy, s0, horizon, substream(seed, k), record=False)
    stderr = float(returns.std(ddof=1) / math.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return float(returns.mean()), stderr


def monte_carlo_value(
    env: EnvModel,
    policy,
    s0: State,
    horizon: int,
    n_rollouts: int,
    seed: int,
) -> float:
    """Mean discounted return of ``policy`` from ``s0``; rollout k uses substream (seed, k)."""
    return monte_carlo_estimate(env, policy, s0, horizon, n_rollouts, seed)[0]


def sup_gap(v_star: Mapping | Sequence[float], v: Mapping | Sequence[float]) -> ValueGapReport:
    """max_s (v_star(s) - v(s)) and the state attaining it."""
    if isinstance(v_star, Mapping) or isinstance(v, Mapping):
        if not (isinstance(v_star, Mapping) and isinstance(v, Mapping)) or set(v_star) != set(v):
            raise ValueError("value functions are defined on different states")
        keys = list(v_star)
        diffs = [v_star[k] - v[k] for k in keys]
    else:
        a = np.asarray(v_star, dtype=float)
        b = np.asarray(v, dtype=float)
        if a.shape != b.shape:
            raise ValueError("value functions are defined on different states")
        keys = list(range(a.size))
        diffs = list(a.ravel() - b.ravel())
    if not keys:
        raise ValueError("value functions are defined on different states")
    k = int(np.argmax(diffs))
    return ValueGapReport(sup_gap=float(diffs[k]), argmax_state=keys[k])


class TabularEnv(EnvModel):
    """Sampling view of a finite MDP given by ``P[s, a, s']`` and ``R[s, a]``.

    States are integers. Entering a state listed in ``terminal`` ends the
    episode; such states should be absorbing with zero reward so that the
    exact and sampled semantics agree.
    """

    name = "tabular"

    def __init__(self, P, R, gamma, terminal=(), start=None):
        self.P = np.asarray(P, dtype=float)
        self.R = np.asarray(R, dtype=float)
        n, A, n2 = self.P.shape
        if n != n2 or self.R.shape != (n, A):
            raise ValueError("P must be (n, A, n) and R must be (n, A)")
        if not 0.0 <= gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        self.n_states = n
        self.action_count = A
        self.state_dim = 1
        self.gamma = float(gamma)
        self.bounds = np.array([[0.0, float(n)]])
        self.terminal = frozenset(int(t) for t in terminal)
        self._cum = np.cumsum(self.P, axis=2).tolist()
        self._R = self.R.tolist()
        if start is None:
            start = [s for s in range(n) if s not in self.terminal]
        self.start = list(start)

    def step(self, state, action, rng):
        row = self._cum[state][action]
        u = rng.random() * row[-1]
        nxt = 0
        last = len(row) - 1
        while nxt < last and u >= row[nxt]:
            nxt += 1
        return nxt, self._R[state][action], nxt in self.terminal

    def initial_state(self, rng):
        return self.start[int(rng.integers(len(self.start)))]

    def is_start_valid(self, state):
        return 0 <= state < self.n_states and state not in self.terminal

    def sample_state(self, rng):
        return self.initial_state(rng)

    def clamp(self, state):
        return min(max(int(state), 0), self.n_states - 1)
