"""Shared fixtures: tiny hand-built stores, a toy MDP, and trained agents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from uwb_adapt.dataset import DatasetStore, RangeRecord, SynthConfig, generate_synthetic
from uwb_adapt.env import ReplayEnvironment
from uwb_adapt.linkstate import FeatureScaler, RawDiagnostics, TernaryDiscretizer
from uwb_adapt.phy import enumerate_actions
from uwb_adapt.qlearn import EpsilonSchedule, QTrainConfig, train_q
from uwb_adapt.dqn import DqnTrainConfig, train_dqn

SPACE = enumerate_actions()

# Reduced-scale experiment setup shared by the protocol tests: a seeded
# synthetic office, a coarse measurement block for training, and epsilon
# decays rescaled to the shorter step budgets.
SYNTH_CONFIG = SynthConfig(n_nodes=8, attempts_per_combination=50, seed=1)
TRAIN_BLOCK = 25
Q_TRAIN = QTrainConfig(steps=200_000, schedule=EpsilonSchedule(decay=9.775e-5), seed=0)
DQN_TRAIN = DqnTrainConfig(steps=20_000, schedule=EpsilonSchedule(decay=1.96e-4), seed=0)


def make_diag(**overrides) -> RawDiagnostics:
    base = dict(
        f1=900.0,
        f2=2100.0,
        f3=1400.0,
        cir_power=9000.0,
        noise_std=60.0,
        rx_pacc=996,
        fp_index=741.0,
        lde_threshold=95.0,
        pp_amp=2500.0,
        pp_index=748.0,
    )
    base.update(overrides)
    return RawDiagnostics(**base)


def make_store(link_prr: dict, attempts: int = 20, seed: int = 0) -> DatasetStore:
    """Store with exact per-(link, setting-index) PRR values.

    link_prr: {(tag, anchor): {action_index: prr}}; reception counts are
    round(prr * attempts), so stored PRR matches the requested one exactly
    when prr * attempts is integral.
    """
    rng = np.random.default_rng(seed)
    records = []
    for (tag, anchor), per_action in link_prr.items():
        for action, prr in per_action.items():
            setting = SPACE[action]
            n_rx = int(round(prr * attempts))
            for seq in range(attempts):
                received = seq < n_rx
                diag = None
                est = None
                if received:
                    diag = make_diag(
                        f2=2100.0 + float(rng.normal(0, 50)),
                        cir_power=9000.0 + float(rng.normal(0, 200)),
                    )
                    est = 10.0 + float(rng.normal(0, 0.05))
                records.append(
                    RangeRecord(
                        seq=seq,
                        tag_id=tag,
                        anchor_id=anchor,
                        setting=setting,
                        received=received,
                        diagnostics=diag,
                        est_range_m=est,
                        true_dist_m=10.0,
                    )
                )
    return DatasetStore.from_records(records, attempts)


# ---------------------------------------------------------------------------
# Deterministic 3-state/2-action MDP with a value-iteration oracle
# ---------------------------------------------------------------------------

MDP_REWARDS = np.array([[0.2, 1.0], [0.5, 0.1], [1.5, 0.3]])
MDP_NEXT = np.array([[1, 0], [2, 1], [0, 2]])


@dataclass
class MdpOutcome:
    state: np.ndarray
    reward: float


class MdpEnv:
    """Deterministic chain: action 0 advances, action 1 stays."""

    n_actions = 2
    state_size = 3

    def __init__(self, seed: int = 0):
        self.s = 0

    def step(self, action: int) -> MdpOutcome:
        r = float(MDP_REWARDS[self.s, action])
        self.s = int(MDP_NEXT[self.s, action])
        return MdpOutcome(state=np.eye(3)[self.s], reward=r)

    def switch_random_link(self, rng=None) -> None:
        pass


def value_iteration(gamma: float, tol: float = 1e-12) -> np.ndarray:
    q = np.zeros((3, 2))
    while True:
        v = q.max(axis=1)
        q_new = MDP_REWARDS + gamma * v[MDP_NEXT]
        if np.abs(q_new - q).max() < tol:
            return q_new
        q = q_new


# ---------------------------------------------------------------------------
# Session-scoped trained artifacts for the protocol and acceptance tests
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def synth_store() -> DatasetStore:
    return generate_synthetic(SYNTH_CONFIG)


@pytest.fixture(scope="session")
def synth_preprocess(synth_store):
    scaler = FeatureScaler.fit(synth_store.all_feature_rows())
    disc = TernaryDiscretizer.fit(
        synth_store.all_feature_rows(), synth_store.all_prr_values()
    )
    return scaler, disc


@pytest.fixture(scope="session")
def trained_qtable(synth_store, synth_preprocess):
    scaler, disc = synth_preprocess
    env = ReplayEnvironment(synth_store, scaler, block_size=TRAIN_BLOCK, seed=0)
    return train_q(env, Q_TRAIN, lambda s: disc.index(s[:9]))


@pytest.fixture(scope="session")
def trained_dqn(synth_store, synth_preprocess):
    scaler, _ = synth_preprocess
    env = ReplayEnvironment(synth_store, scaler, block_size=TRAIN_BLOCK, seed=1)
    net, target, memory = train_dqn(env, DQN_TRAIN)
    return net
