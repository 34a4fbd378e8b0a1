"""Tabular Q-learning over discretized link states.

The table maps 19,683 ternary link states to 72 action values.  Training is
plain epsilon-greedy with exponentially decaying epsilon and the standard
value update; evaluation replaces the uniform exploration draw by a draw
among the ten highest-valued actions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linkstate import N_TERNARY_STATES

QTABLE_MAGIC = b"UWBQ"


@dataclass(frozen=True)
class EpsilonSchedule:
    """eps(step) = eps_min + (eps_max - eps_min) * exp(-decay * step)."""

    eps_min: float = 0.01
    eps_max: float = 1.0
    decay: float = 3.91e-5

    def __post_init__(self):
        if not 0.0 <= self.eps_min <= self.eps_max <= 1.0:
            raise ValueError("need 0 <= eps_min <= eps_max <= 1")
        if self.decay <= 0:
            raise ValueError("decay must be > 0")

    def value(self, step: int) -> float:
        if step < 0:
            raise ValueError("step must be >= 0")
        return self.eps_min + (self.eps_max - self.eps_min) * np.exp(-self.decay * step)


def epsilon(step: int, schedule: EpsilonSchedule) -> float:
    return schedule.value(step)


@dataclass(frozen=True)
class QTrainConfig:
    steps: int = 500_000
    alpha: float = 0.8
    gamma: float = 0.5
    link_switch_period: int = 100
    seed: int = 0
    schedule: EpsilonSchedule = field(default_factory=EpsilonSchedule)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")


class QTable:
    """Dense action-value table with visit counts, zero-initialized."""

    def __init__(self, n_states: int = N_TERNARY_STATES, n_actions: int = 72):
        self.values = np.zeros((n_states, n_actions), dtype=np.float32)
        self.visit_counts = np.zeros((n_states, n_actions), dtype=np.int64)

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    @property
    def n_actions(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "QTable":
        out = QTable(self.n_states, self.n_actions)
        out.values[...] = self.values
        out.visit_counts[...] = self.visit_counts
        return out

    def save(self, path) -> None:
        """16-byte header (magic, rows, cols, reserved) + float32 row-major values."""
        rows, cols = self.values.shape
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sIII", QTABLE_MAGIC, rows, cols, 0))
            fh.write(np.ascontiguousarray(self.values, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "QTable":
        data = Path(path).read_bytes()
        magic, rows, cols, _ = struct.unpack("<4sIII", data[:16])
        if magic != QTABLE_MAGIC:
            raise ValueError(f"not a Q-table file: bad magic {magic!r}")
        values = np.frombuffer(data[16:], dtype="<f4")
        if values.size != rows * cols:
            raise ValueError(f"expected {rows * cols} values, found {values.size}")
        table = cls(rows, cols)
        table.values[...] = values.reshape(rows, cols)
        return table


def bellman_update(
    table: QTable, s: int, a: int, r: float, s_next: int, alpha: float, gamma: float
) -> float:
    """Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)); returns the new value."""
    q = table.values
    target = r + gamma * float(q[s_next].max())
    q[s, a] += alpha * (target - q[s, a])
    table.visit_counts[s, a] += 1
    return float(q[s, a])


def select_train(row: np.ndarray, eps: float, rng) -> int:
    """Epsilon-greedy: uniform over all actions with prob eps, else argmax."""
    if rng.random() < eps:
        return int(rng.integers(len(row)))
    return int(np.argmax(row))


def select_eval(row: np.ndarray, eps: float, rng, top_k: int = 10) -> int:
    """Evaluation policy: argmax with prob 1-eps, else uniform among the top_k values."""
    if rng.random() < eps:
        k = min(top_k, len(row))
        top = np.argpartition(row, -k)[-k:]
        return int(top[rng.integers(k)])
    return int(np.argmax(row))


def train_q(env, config: QTrainConfig, state_to_index, table: QTable | None = None) -> QTable:
    """Run the tabular training loop against a replay environment.

    `state_to_index` maps the environment's observation vector to a table
    row.  The environment only needs step(action) -> outcome with .state and
    .reward, switch_random_link(rng), and n_actions.
    """
    rng = np.random.default_rng(config.seed)
    if table is None:
        table = QTable(n_actions=env.n_actions)
    r_max = 0.0
    env.switch_random_link(rng)
    action = int(rng.integers(env.n_actions))
    out = env.step(action)
    s = state_to_index(out.state)
    for step in range(config.steps):
        if config.link_switch_period and step and step % config.link_switch_period == 0:
            env.switch_random_link(rng)
        eps = config.schedule.value(step)
        action = select_train(table.values[s], eps, rng)
        out = env.step(action)
        s_next = state_to_index(out.state)
        r_max = max(r_max, out.reward)
        new_q = bellman_update(table, s, action, out.reward, s_next, config.alpha, config.gamma)
        bound = r_max / (1.0 - config.gamma)
        if not (np.isfinite(new_q) and -1e-6 <= new_q <= bound + 1e-6):
            raise AssertionError(f"Q-value {new_q} escaped [0, {bound}] at step {step}")
        s = s_next
    return table
