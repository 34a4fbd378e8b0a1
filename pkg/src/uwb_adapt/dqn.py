"""Deep Q-learning with stochastic prioritized replay.

Experiences carry a TD-error priority; sampling probability follows
p^zeta / sum(p^zeta) and the induced bias is compensated by importance
weights ((1/N) * (1/Prob))^beta.  Targets are built by nudging the current
Q row at the taken action by alpha * delta * w and fitting the main network
on the result; a periodically synchronized target network supplies the
bootstrap values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .nn import Adam, Mlp, fit_batch
from .qlearn import EpsilonSchedule


@dataclass(frozen=True)
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray


class PrioritizedReplay:
    """Ring buffer of experiences with priority-proportional sampling.

    Priorities never fall below the floor, so every stored transition keeps
    a nonzero chance of being replayed.
    """

    def __init__(
        self,
        capacity: int = 50_000,
        zeta: float = 0.6,
        beta: float = 0.4,
        priority_floor: float = 1e-3,
        state_size: int = 14,
    ):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if priority_floor <= 0:
            raise ValueError("priority floor must be > 0")
        self.capacity = capacity
        self.zeta = zeta
        self.beta = beta
        self.priority_floor = priority_floor
        self.states = np.zeros((capacity, state_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_size))
        self.priorities = np.zeros(capacity)
        self.size = 0
        self._cursor = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, action, reward, next_state, priority: float | None = None) -> None:
        """Insert one experience; with no priority given, use the current maximum."""
        if priority is None:
            priority = self.priorities[: self.size].max() if self.size else self.priority_floor
        i = self._cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.priorities[i] = max(float(priority), self.priority_floor)
        self._cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sampling_probabilities(self) -> np.ndarray:
        p = self.priorities[: self.size] ** self.zeta
        return p / p.sum()

    def sample(self, batch_size: int, rng) -> np.ndarray:
        """Indices of a with-replacement draw following the sampling probabilities."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty memory")
        if batch_size > self.size:
            raise ValueError(f"batch size {batch_size} exceeds memory size {self.size}")
        return rng.choice(self.size, size=batch_size, p=self.sampling_probabilities())

    def get(self, indices: np.ndarray):
        return (
            self.states[indices],
            self.actions[indices],
            self.rewards[indices],
            self.next_states[indices],
        )

    def update_priorities(self, indices: np.ndarray, priorities: np.ndarray) -> None:
        self.priorities[indices] = np.maximum(priorities, self.priority_floor)


def td_priority(r: float, gamma: float, max_future_q: float, q_sa: float, floor: float = 1e-3) -> float:
    """|r + gamma * max_a Q_target(s') - Q(s,a)| plus the positive floor."""
    return abs(r + gamma * max_future_q - q_sa) + floor


def priority_from_nets(
    r: float,
    gamma: float,
    main_net: Mlp,
    target_net: Mlp,
    state: np.ndarray,
    action: int,
    next_state: np.ndarray,
    floor: float = 1e-3,
) -> float:
    q_sa = float(main_net.forward(state)[action])
    max_future = float(target_net.forward(next_state).max())
    return td_priority(r, gamma, max_future, q_sa, floor)


def importance_weight(prob: float, n: int, beta: float) -> float:
    """w = (1/N * 1/Prob)^beta."""
    if not 0.0 < prob <= 1.0:
        raise ValueError(f"prob must be in (0, 1], got {prob}")
    if n < 1:
        raise ValueError("memory size must be >= 1")
    return float((1.0 / (n * prob)) ** beta)


def build_targets(
    states: np.ndarray,
    actions: np.ndarray,
    rewards: np.ndarray,
    next_states: np.ndarray,
    probs: np.ndarray,
    main_net: Mlp,
    target_net: Mlp,
    alpha: float,
    gamma: float,
    memory_size: int,
    beta: float,
    priority_floor: float = 1e-3,
    signed_td: bool = True,
):
    """Training rows for one sampled batch, plus refreshed priorities.

    Each target row is the main network's current output with the taken
    action's entry moved by alpha * delta * w.  With signed_td the move
    follows the sign of the TD error; otherwise the magnitude |delta| is
    used verbatim, which can only push values upward.
    """
    current = np.atleast_2d(main_net.forward(states))
    future = np.atleast_2d(target_net.forward(next_states))
    rows = np.arange(len(actions))
    deltas = rewards + gamma * future.max(axis=1) - current[rows, actions]
    weights = (1.0 / (memory_size * probs)) ** beta
    targets = current.copy()
    step = deltas if signed_td else np.abs(deltas)
    targets[rows, actions] += alpha * step * weights
    new_priorities = np.abs(deltas) + priority_floor
    return targets, new_priorities, deltas


@dataclass(frozen=True)
class DqnTrainConfig:
    steps: int = 200_000
    alpha: float = 0.8
    gamma: float = 0.5
    main_update_period: int = 5
    target_update_period: int = 25
    batch_size: int = 10
    schedule: EpsilonSchedule = field(default_factory=lambda: EpsilonSchedule(decay=1.96e-5))
    link_switch_period: int = 100
    replay_capacity: int = 50_000
    zeta: float = 0.6
    beta: float = 0.4
    priority_floor: float = 1e-3
    signed_td: bool = True
    insert_with_max_priority: bool = False
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.main_update_period <= self.target_update_period:
            raise ValueError("need target_update_period >= main_update_period >= 1")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch size cannot exceed replay capacity")

    def to_json(self) -> str:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "schedule"}
        doc["schedule"] = {
            "eps_min": self.schedule.eps_min,
            "eps_max": self.schedule.eps_max,
            "decay": self.schedule.decay,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DqnTrainConfig":
        doc = json.loads(text)
        sched = EpsilonSchedule(**doc.pop("schedule"))
        return cls(schedule=sched, **doc)


# Update-rate/learning profiles of the two evaluation scenarios.
PROFILES = {
    "static": dict(
        main_update_period=5, target_update_period=25, alpha=0.7, gamma=0.7, batch_size=10
    ),
    "dynamic": dict(
        main_update_period=20, target_update_period=100, alpha=0.55, gamma=0.55, batch_size=256
    ),
}


def profile_config(name: str, base: DqnTrainConfig | None = None, **overrides) -> DqnTrainConfig:
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}, have {sorted(PROFILES)}")
    base = base if base is not None else DqnTrainConfig()
    params = dict(PROFILES[name])
    params.update(overrides)
    return replace(base, **params)


def greedy_action(net: Mlp, state: np.ndarray) -> int:
    """argmax of the Q row; ties resolve to the lowest action index."""
    return int(np.argmax(net.forward(state)))


def eval_action(net: Mlp, state: np.ndarray, eps: float, rng, top_k: int = 10) -> int:
    """Evaluation policy: argmax with prob 1-eps, else uniform among the top_k."""
    row = net.forward(state)
    if rng.random() < eps:
        k = min(top_k, len(row))
        top = np.argpartition(row, -k)[-k:]
        return int(top[rng.integers(k)])
    return int(np.argmax(row))


def train_dqn(
    env,
    config: DqnTrainConfig,
    net: Mlp | None = None,
) -> tuple[Mlp, Mlp, PrioritizedReplay]:
    """Run the deep Q-learning loop; returns (main net, target net, memory)."""
    rng = np.random.default_rng(config.seed)
    state_size = getattr(env, "state_size", 14)
    if net is None:
        net = Mlp((state_size, 128, 256, 512, 256, 128, env.n_actions), seed=config.seed)
    target = net.clone()
    memory = PrioritizedReplay(
        capacity=config.replay_capacity,
        zeta=config.zeta,
        beta=config.beta,
        priority_floor=config.priority_floor,
        state_size=net.layer_sizes[0],
    )
    optimizer = Adam(net.parameters(), lr=config.learning_rate)
    env.switch_random_link(rng)
    action = int(rng.integers(env.n_actions))
    out = env.step(action)
    s = out.state
    for step in range(config.steps):
        if config.link_switch_period and step and step % config.link_switch_period == 0:
            env.switch_random_link(rng)
        eps = config.schedule.value(step)
        if rng.random() < eps:
            action = int(rng.integers(env.n_actions))
        else:
            action = greedy_action(net, s)
        out = env.step(action)
        if config.insert_with_max_priority:
            p = None
        else:
            p = priority_from_nets(
                out.reward, config.gamma, net, target, s, action, out.state,
                config.priority_floor,
            )
        memory.add(s, action, out.reward, out.state, p)
        if (step + 1) % config.main_update_period == 0 and len(memory) >= config.batch_size:
            idx = memory.sample(config.batch_size, rng)
            probs = memory.sampling_probabilities()[idx]
            batch_s, batch_a, batch_r, batch_s2 = memory.get(idx)
            targets, new_p, _ = build_targets(
                batch_s, batch_a, batch_r, batch_s2, probs, net, target,
                config.alpha, config.gamma, len(memory), config.beta,
                config.priority_floor, config.signed_td,
            )
            memory.update_priorities(idx, new_p)
            fit_batch(net, batch_s, targets, optimizer)
        if (step + 1) % config.target_update_period == 0:
            target = net.clone()
        s = out.state
    return net, target, memory


def save_dqn(stem, net: Mlp, config: DqnTrainConfig) -> None:
    """Checkpoint plus a JSON sidecar of the training configuration."""
    net.save(stem)
    Path(str(stem) + ".config.json").write_text(config.to_json() + "\n")


def load_dqn(stem) -> tuple[Mlp, DqnTrainConfig]:
    net = Mlp.load(stem)
    config = DqnTrainConfig.from_json(Path(str(stem) + ".config.json").read_text())
    return net, config
