"""Baselines and the two evaluation protocols.

Static protocol: every policy starts each link at a random setting
(iteration 0) and re-selects once per iteration; a link counts as optimal at
an iteration when the expected reward of the currently selected setting is
within 5% of the link's best achievable reward.  Measurements use the exact
per-combination PRR, which is what makes exhaustive search certain after 72
iterations.

Dynamic protocol: a scheduled walk switches the active link every few
seconds while the policy keeps adapting online; PRR, per-range energy and
ranging error are recorded per decision block and averaged.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import platform
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import DatasetStore, LinkKey
from .dqn import (
    DqnTrainConfig,
    PrioritizedReplay,
    build_targets,
    eval_action,
    priority_from_nets,
)
from .energy import EnergyModel
from .env import ReplayEnvironment
from .linkstate import FeatureScaler, TernaryDiscretizer
from .nn import Adam, Mlp, fit_batch
from .phy import PhySetting
from .qlearn import QTable, bellman_update, select_eval


def is_optimal(r_selected: float, r_best: float) -> int:
    """1 when the selected reward is within 5% of the best possible one."""
    if r_best <= 0:
        raise ValueError("r_best must be > 0")
    return int(r_selected >= 0.95 * r_best)


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


class Policy:
    """A setting-selection strategy with optional online learning."""

    name = "policy"

    def fork(self) -> "Policy":
        """Independent copy for one evaluation run."""
        raise NotImplementedError

    def start_link(self, env: ReplayEnvironment, link: LinkKey, rng) -> None:
        pass

    def initial_action(self, rng) -> int | None:
        """Action for iteration 0; None lets the harness draw uniformly."""
        return None

    def select(self, state: np.ndarray, rng) -> int:
        raise NotImplementedError

    def observe(self, state, action: int, reward: float, next_state) -> None:
        pass

    def selection(self, last_action: int) -> int:
        """The setting the policy commits to after its last step.

        For learning agents that is the setting currently configured; an
        exhaustive search mid-sweep commits to the best it has measured.
        """
        return last_action


class FixedSettingPolicy(Policy):
    def __init__(self, action: int, name: str | None = None):
        self.action = action
        self.name = name or f"fixed-{action}"

    def fork(self):
        return FixedSettingPolicy(self.action, self.name)

    def initial_action(self, rng):
        return self.action

    def select(self, state, rng):
        return self.action


class OraclePolicy(Policy):
    """Upper bound: always replays the link's known-best setting."""

    name = "oracle"

    def __init__(self):
        self._best = 0

    def fork(self):
        return OraclePolicy()

    def start_link(self, env, link, rng):
        _, self._best = env.best_reward(link)

    def initial_action(self, rng):
        return self._best

    def select(self, state, rng):
        return self._best


class LinearSearchPolicy(Policy):
    """Tries every setting once, then repeats the best-measured one."""

    name = "linear-search"

    def __init__(self, n_actions: int = 72):
        self.n_actions = n_actions
        self._order: np.ndarray | None = None
        self._measured: dict[int, float] = {}

    def fork(self):
        return LinearSearchPolicy(self.n_actions)

    def start_link(self, env, link, rng):
        self._order = rng.permutation(self.n_actions)
        self._measured = {}

    def select(self, state, rng):
        if self._order is None:
            self._order = rng.permutation(self.n_actions)
        for a in self._order:
            if int(a) not in self._measured:
                return int(a)
        return max(self._measured, key=self._measured.get)

    def observe(self, state, action, reward, next_state):
        self._measured[action] = reward

    def selection(self, last_action):
        if not self._measured:
            return last_action
        return max(self._measured, key=self._measured.get)


class QTablePolicy(Policy):
    """Frozen-or-learning tabular policy with top-10 evaluation exploration."""

    def __init__(
        self,
        table: QTable,
        discretizer: TernaryDiscretizer,
        eps: float = 0.1,
        alpha: float = 0.8,
        gamma: float = 0.5,
        online: bool = True,
        name: str = "q-learning",
    ):
        self.table = table
        self.discretizer = discretizer
        self.eps = eps
        self.alpha = alpha
        self.gamma = gamma
        self.online = online
        self.name = name

    def fork(self):
        return QTablePolicy(
            self.table.copy(), self.discretizer, self.eps, self.alpha, self.gamma,
            self.online, self.name,
        )

    def _index(self, state) -> int:
        return self.discretizer.index(state[:9])

    def select(self, state, rng):
        return select_eval(self.table.values[self._index(state)], self.eps, rng)

    def observe(self, state, action, reward, next_state):
        if self.online:
            bellman_update(
                self.table, self._index(state), action, reward,
                self._index(next_state), self.alpha, self.gamma,
            )


class DqnPolicy(Policy):
    """Network policy that keeps training online through its replay memory."""

    def __init__(
        self,
        net: Mlp,
        config: DqnTrainConfig | None = None,
        eps: float = 0.1,
        online: bool = True,
        name: str = "deep-q-learning",
    ):
        self.config = config if config is not None else DqnTrainConfig()
        self.net = net
        self.target = net.clone()
        self.eps = eps
        self.online = online
        self.name = name
        self.memory = PrioritizedReplay(
            capacity=self.config.replay_capacity,
            zeta=self.config.zeta,
            beta=self.config.beta,
            priority_floor=self.config.priority_floor,
            state_size=net.layer_sizes[0],
        )
        self.optimizer = Adam(self.net.parameters(), lr=self.config.learning_rate)
        self._step = 0
        self._rng = np.random.default_rng(0)

    def fork(self):
        return DqnPolicy(self.net.clone(), self.config, self.eps, self.online, self.name)

    def select(self, state, rng):
        return eval_action(self.net, state, self.eps, rng)

    def observe(self, state, action, reward, next_state):
        if not self.online:
            return
        cfg = self.config
        p = priority_from_nets(
            reward, cfg.gamma, self.net, self.target, state, action, next_state,
            cfg.priority_floor,
        )
        self.memory.add(state, action, reward, next_state, p)
        self._step += 1
        if self._step % cfg.main_update_period == 0 and len(self.memory) >= cfg.batch_size:
            idx = self.memory.sample(cfg.batch_size, self._rng)
            probs = self.memory.sampling_probabilities()[idx]
            s, a, r, s2 = self.memory.get(idx)
            targets, new_p, _ = build_targets(
                s, a, r, s2, probs, self.net, self.target, cfg.alpha, cfg.gamma,
                len(self.memory), cfg.beta, cfg.priority_floor, cfg.signed_td,
            )
            self.memory.update_priorities(idx, new_p)
            fit_batch(self.net, s, targets, self.optimizer)
        if self._step % cfg.target_update_period == 0:
            self.target = self.net.clone()


# ---------------------------------------------------------------------------
# Static protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StaticEvalResult:
    iterations: np.ndarray
    curves: dict[str, np.ndarray]
    ci_lo: dict[str, np.ndarray]
    ci_hi: dict[str, np.ndarray]
    per_rep: dict[str, np.ndarray]  # (repetitions, iterations)
    best_rewards: dict[LinkKey, float]

    def at(self, policy: str, iteration: int) -> float:
        return float(self.curves[policy][iteration])


def _run_static_once(policy, store, link, scaler, energy_model, block_size, seed, max_iterations):
    env = ReplayEnvironment(store, scaler, energy_model, block_size, seed=seed)
    env.switch_link(link)
    rng = np.random.default_rng(seed + 1)
    p = policy.fork()
    p.start_link(env, link, rng)
    r_best, _ = env.best_reward(link)
    hits = np.zeros(max_iterations + 1)
    a = p.initial_action(rng)
    if a is None:
        a = int(rng.integers(env.n_actions))
    out = env.expected_step(a)
    hits[0] = is_optimal(env.expected_reward(link, a), r_best)
    state = out.state
    for it in range(1, max_iterations + 1):
        a = p.select(state, rng)
        out = env.expected_step(a)
        p.observe(state, a, out.reward, out.state)
        committed = p.selection(a)
        hits[it] = is_optimal(env.expected_reward(link, committed), r_best)
        state = out.state
    return hits


def static_eval(
    policies: dict[str, Policy],
    store: DatasetStore,
    repetitions: int = 3,
    seed: int = 0,
    max_iterations: int = 72,
    block_size: int = 10,
    scaler: FeatureScaler | None = None,
    energy_model: EnergyModel | None = None,
    links: tuple[LinkKey, ...] | None = None,
    n_jobs: int = 1,
) -> StaticEvalResult:
    """Fraction-optimal-vs-iterations curves, averaged over links and repetitions."""
    if scaler is None:
        scaler = FeatureScaler.fit(store.all_feature_rows())
    if energy_model is None:
        energy_model = EnergyModel(store.space)
    links = links if links is not None else store.links
    probe = ReplayEnvironment(store, scaler, energy_model, block_size, seed=seed)
    best_rewards = {link: probe.best_reward(link)[0] for link in links}
    tasks = []
    for pi, (name, policy) in enumerate(policies.items()):
        for rep in range(repetitions):
            for li, link in enumerate(links):
                task_seed = int(np.random.SeedSequence([seed, pi, rep, li]).generate_state(1)[0])
                tasks.append((name, rep, li, policy, link, task_seed))

    def run(task):
        name, rep, li, policy, link, task_seed = task
        return name, rep, _run_static_once(
            policy, store, link, scaler, energy_model, block_size, task_seed, max_iterations
        )

    if n_jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    per_rep = {
        name: np.zeros((repetitions, max_iterations + 1)) for name in policies
    }
    for name, rep, hits in results:
        per_rep[name][rep] += hits
    for name in per_rep:
        per_rep[name] /= len(links)
    curves, ci_lo, ci_hi = {}, {}, {}
    for name, mat in per_rep.items():
        mean = mat.mean(axis=0)
        if repetitions > 1:
            half = 1.96 * mat.std(axis=0, ddof=1) / np.sqrt(repetitions)
        else:
            half = np.zeros_like(mean)
        curves[name] = mean
        ci_lo[name] = np.clip(mean - half, 0.0, 1.0)
        ci_hi[name] = np.clip(mean + half, 0.0, 1.0)
    return StaticEvalResult(
        iterations=np.arange(max_iterations + 1),
        curves=curves,
        ci_lo=ci_lo,
        ci_hi=ci_hi,
        per_rep=per_rep,
        best_rewards=best_rewards,
    )


def linear_search(env: ReplayEnvironment, link: LinkKey, exact: bool = False):
    """Try all settings once on a link; return (best setting, reward trace)."""
    env.switch_link(link)
    trace = []
    for action in range(env.n_actions):
        out = env.expected_step(action) if exact else env.step(action)
        trace.append((action, out.reward))
    best_action = max(trace, key=lambda ar: ar[1])[0]
    return env.space[best_action], trace


# ---------------------------------------------------------------------------
# Dynamic protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSchedule:
    """Ordered (link, duration) segments walked at a fixed ranging rate."""

    segments: tuple[tuple[LinkKey, float], ...]
    ranging_rate_hz: float = 50.0

    def __post_init__(self):
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        if any(d <= 0 for _, d in self.segments):
            raise ValueError("segment durations must be > 0")
        if self.ranging_rate_hz <= 0:
            raise ValueError("ranging rate must be > 0")

    def attempts_per_segment(self) -> list[int]:
        return [int(round(d * self.ranging_rate_hz)) for _, d in self.segments]

    def total_steps(self, block_size: int) -> int:
        return sum(a // block_size for a in self.attempts_per_segment())

    def validate_links(self, store: DatasetStore) -> None:
        for link, _ in self.segments:
            if not store.has_link(link):
                raise KeyError(f"schedule link {link} not in dataset")

    def to_json(self) -> str:
        doc = {
            "ranging_rate_hz": self.ranging_rate_hz,
            "segments": [
                {"tag": t, "anchor": a, "duration_s": d} for (t, a), d in self.segments
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSchedule":
        doc = json.loads(text)
        segments = tuple(
            ((seg["tag"], seg["anchor"]), float(seg["duration_s"]))
            for seg in doc["segments"]
        )
        return cls(segments, float(doc.get("ranging_rate_hz", 50.0)))


# Walk over the 8 scheduled links ordered easiest to hardest; the two hardest
# appear early and late, mirroring the abrupt changes of the office walk.
DEFAULT_WALK = (0, 7, 1, 3, 2, 4, 5, 6, 2, 5, 3, 1, 0)


def required_energy(store: DatasetStore, energy_model: EnergyModel, link: LinkKey,
                    prr_threshold: float = 0.9) -> float:
    """Cheapest per-range energy that keeps the link above the PRR threshold."""
    prr_row = store.prr_row(link)
    ok = prr_row >= prr_threshold
    if not ok.any():
        return float(energy_model.e_max)
    return float(energy_model.energy_wus[ok].min())


def default_dynamic_schedule(
    store: DatasetStore,
    energy_model: EnergyModel | None = None,
    n_links: int = 8,
    segment_s: float = 5.0,
    ranging_rate_hz: float = 50.0,
    walk: tuple[int, ...] = DEFAULT_WALK,
) -> ScenarioSchedule:
    """13-segment walk over links spanning the easy-to-hard range of the store."""
    em = energy_model if energy_model is not None else EnergyModel(store.space)
    ranked = sorted(store.links, key=lambda lk: required_energy(store, em, lk))
    if len(ranked) < n_links:
        raise ValueError(f"store has {len(ranked)} links, need {n_links}")
    picks = [ranked[int(round(i * (len(ranked) - 1) / (n_links - 1)))] for i in range(n_links)]
    segments = tuple((picks[i], segment_s) for i in walk)
    return ScenarioSchedule(segments, ranging_rate_hz)


@dataclass(frozen=True)
class DynamicEvalResult:
    t_s: np.ndarray
    prr: np.ndarray
    energy_wus: np.ndarray
    error_mm: np.ndarray  # NaN where a block had no receptions
    actions: np.ndarray
    avg_prr_pct: float
    avg_energy_wus: float
    avg_error_mm: float

    def averages(self) -> dict[str, float]:
        return {
            "avg_prr_pct": self.avg_prr_pct,
            "avg_energy_wus": self.avg_energy_wus,
            "avg_error_mm": self.avg_error_mm,
        }


def dynamic_eval(
    policy: Policy,
    schedule: ScenarioSchedule,
    env: ReplayEnvironment,
    seed: int = 0,
) -> DynamicEvalResult:
    """Walk the schedule with one policy, recording per-block metrics."""
    schedule.validate_links(env.store)
    rng = np.random.default_rng(seed)
    p = policy.fork()
    t_s, prrs, energies, errors, actions = [], [], [], [], []
    state = None
    step = 0
    for (link, _), attempts in zip(schedule.segments, schedule.attempts_per_segment()):
        env.switch_link(link)
        for _ in range(attempts // env.block_size):
            if state is None:
                a = p.initial_action(rng)
                if a is None:
                    a = int(rng.integers(env.n_actions))
            else:
                a = p.select(state, rng)
            out = env.step(a)
            if state is not None:
                p.observe(state, a, out.reward, out.state)
            t_s.append(step * env.block_size / schedule.ranging_rate_hz)
            prrs.append(out.prr_block)
            energies.append(out.energy_wus)
            errors.append(np.nan if out.mean_range_error_mm is None else out.mean_range_error_mm)
            actions.append(a)
            state = out.state
            step += 1
    prr_arr = np.array(prrs)
    energy_arr = np.array(energies)
    error_arr = np.array(errors)
    with np.errstate(invalid="ignore"):
        avg_error = float(np.nanmean(error_arr)) if np.any(np.isfinite(error_arr)) else float("nan")
    return DynamicEvalResult(
        t_s=np.array(t_s),
        prr=prr_arr,
        energy_wus=energy_arr,
        error_mm=error_arr,
        actions=np.array(actions),
        avg_prr_pct=float(prr_arr.mean() * 100.0),
        avg_energy_wus=float(energy_arr.mean()),
        avg_error_mm=avg_error,
    )


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------


def timing_report(policy: Policy, env: ReplayEnvironment, n_decisions: int, seed: int = 0) -> dict:
    """Wall-clock means of decision and online-update latency, in ms."""
    if n_decisions < 1:
        raise ValueError("n_decisions must be >= 1")
    rng = np.random.default_rng(seed)
    p = policy.fork()
    env.switch_random_link(rng)
    out = env.step(int(rng.integers(env.n_actions)))
    state = out.state
    decision_s = 0.0
    update_s = 0.0
    for _ in range(n_decisions):
        t0 = time.perf_counter()
        a = p.select(state, rng)
        decision_s += time.perf_counter() - t0
        out = env.step(a)
        t0 = time.perf_counter()
        p.observe(state, a, out.reward, out.state)
        update_s += time.perf_counter() - t0
        state = out.state
    return {
        "policy": p.name,
        "n_decisions": n_decisions,
        "mean_decision_ms": decision_s / n_decisions * 1e3,
        "mean_train_step_ms": update_s / n_decisions * 1e3,
        "hardware": platform.processor() or platform.machine(),
        "platform": platform.platform(),
    }


# ---------------------------------------------------------------------------
# Result serialization
# ---------------------------------------------------------------------------


def write_static_curve_csv(result: StaticEvalResult, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["iteration", "policy", "fraction_optimal", "ci_lo", "ci_hi"])
    for name in result.curves:
        for it in result.iterations:
            writer.writerow(
                [
                    int(it),
                    name,
                    f"{result.curves[name][it]:.6f}",
                    f"{result.ci_lo[name][it]:.6f}",
                    f"{result.ci_hi[name][it]:.6f}",
                ]
            )


def write_dynamic_series_csv(results: dict[str, DynamicEvalResult], space, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(
        ["t_s", "policy", "prr", "energy_wus", "error_mm",
         "channel", "psr", "prf", "rate", "gain"]
    )
    for name, res in results.items():
        for i in range(len(res.t_s)):
            s: PhySetting = space[int(res.actions[i])]
            err = res.error_mm[i]
            writer.writerow(
                [
                    f"{res.t_s[i]:.3f}",
                    name,
                    f"{res.prr[i]:.4f}",
                    f"{res.energy_wus[i]:.4f}",
                    "" if np.isnan(err) else f"{err:.2f}",
                    s.channel,
                    s.psr,
                    s.prf_mhz,
                    s.data_rate_kbps,
                    f"{s.tx_gain_db:g}",
                ]
            )


def summary_dict(results: dict[str, DynamicEvalResult]) -> dict:
    return {name: res.averages() for name, res in results.items()}
