"""Replay environment over a ranging dataset, with reward and objective.

One agent step configures a setting and runs a block of range attempts on
the current link; the attempts are Bernoulli draws of the stored empirical
PRR and the observed diagnostics are resampled from the recorded pool of
that (link, setting) combination.  The reward couples reliability with the
normalised per-range energy so that a dead link earns nothing no matter how
cheap the setting is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import DatasetStore, LinkKey
from .energy import EnergyModel
from .linkstate import FeatureScaler, build_state, sentinel_state
from .phy import PhySetting


def reward(prr: float, e_norm: float) -> float:
    """R = PRR + PRR * (1 - normalised energy), in [0, 2]."""
    if not 0.0 <= prr <= 1.0:
        raise ValueError(f"prr must be in [0, 1], got {prr}")
    if not 0.0 <= e_norm <= 1.0:
        raise ValueError(f"e_norm must be in [0, 1], got {e_norm}")
    return prr + prr * (1.0 - e_norm)


def objective_g(prr: float, e_norm: float) -> float:
    """G = PRR + (1 - normalised energy); rewards cheap settings even when dead."""
    if not 0.0 <= prr <= 1.0:
        raise ValueError(f"prr must be in [0, 1], got {prr}")
    if not 0.0 <= e_norm <= 1.0:
        raise ValueError(f"e_norm must be in [0, 1], got {e_norm}")
    return prr + (1.0 - e_norm)


@dataclass(frozen=True)
class StepOutcome:
    """Result of one agent step: observation, reward and bookkeeping metrics."""

    state: np.ndarray
    reward: float
    prr_block: float
    energy_wus: float
    mean_range_error_mm: float | None


class ReplayEnvironment:
    """Trace-driven environment replaying one link at a time.

    The store is shared read-only; each environment owns its RNG stream.
    """

    def __init__(
        self,
        store: DatasetStore,
        scaler: FeatureScaler | None = None,
        energy_model: EnergyModel | None = None,
        block_size: int = 10,
        seed: int = 0,
    ):
        if block_size < 1:
            raise ValueError("block_size must be >= 1")
        if not store.links:
            raise ValueError("store holds no links")
        self.store = store
        self.space = store.space
        self.energy_model = energy_model if energy_model is not None else EnergyModel(self.space)
        self.scaler = scaler if scaler is not None else FeatureScaler.fit(store.all_feature_rows())
        self.block_size = block_size
        self.rng = np.random.default_rng(seed)
        self.n_actions = len(self.space)
        self.links = store.links
        self.current_link: LinkKey = self.links[0]

    def switch_link(self, link: LinkKey) -> None:
        if not self.store.has_link(link):
            raise KeyError(f"unknown link {link}")
        self.current_link = link

    def switch_random_link(self, rng=None) -> LinkKey:
        rng = rng if rng is not None else self.rng
        self.current_link = self.links[int(rng.integers(len(self.links)))]
        return self.current_link

    def _outcome(self, action: int, prr_block: float, sample_errors: int) -> StepOutcome:
        setting = self.space[action]
        stats = self.store.stats_for(self.current_link, setting)
        e_norm = float(self.energy_model.normalized[action])
        if prr_block > 0.0 and stats.received > 0:
            row = stats.feature_rows[int(self.rng.integers(stats.received))]
            state = build_state(row, prr_block, setting, self.scaler)
            if sample_errors > 0:
                picks = self.rng.integers(len(stats.errors_mm), size=sample_errors)
                mean_err = float(stats.errors_mm[picks].mean())
            else:
                mean_err = stats.mean_abs_range_error_mm
        else:
            state = sentinel_state(setting)
            mean_err = None
            prr_block = 0.0
        return StepOutcome(
            state=state,
            reward=reward(prr_block, e_norm),
            prr_block=prr_block,
            energy_wus=float(self.energy_model.energy_wus[action]),
            mean_range_error_mm=mean_err,
        )

    def step(self, action: int) -> StepOutcome:
        """Simulate one block of attempts at the given action on the current link."""
        setting = self.space[action]
        prr = self.store.prr(self.current_link, setting)
        receptions = int(self.rng.binomial(self.block_size, prr)) if prr > 0 else 0
        return self._outcome(action, receptions / self.block_size, receptions)

    def expected_step(self, action: int) -> StepOutcome:
        """Like step, but with the exact stored PRR instead of a sampled block.

        Diagnostics are still resampled; the PRR slot of the state and the
        reward use the exact value.  This is the measurement mode of the
        static protocol, where trying a setting means evaluating it against
        the full trace.
        """
        setting = self.space[action]
        prr = self.store.prr(self.current_link, setting)
        return self._outcome(action, prr, 0)

    def expected_reward(self, link: LinkKey, action: int) -> float:
        prr = self.store.prr(link, self.space[action])
        return reward(prr, float(self.energy_model.normalized[action]))

    def expected_rewards(self, link: LinkKey) -> np.ndarray:
        """Expected reward of every action on a link (the static-eval oracle)."""
        prr_row = self.store.prr_row(link)
        return prr_row + prr_row * (1.0 - self.energy_model.normalized)

    def best_reward(self, link: LinkKey) -> tuple[float, int]:
        rewards = self.expected_rewards(link)
        best = int(np.argmax(rewards))
        return float(rewards[best]), best
