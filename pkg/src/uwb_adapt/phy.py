"""Configurable IEEE 802.15.4 UWB PHY settings and their enumerated action space.

A setting is the tuple {channel, preamble symbol repetitions, pulse repetition
frequency, data rate, transmit power gain} as supported by the DW1000 radio.
The enumeration order is lexicographic over (channel, psr, prf, rate, gain)
and is frozen: agents index Q-table columns and network outputs by it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

CHANNELS = (3, 5, 7)
PSRS = (128, 1024, 4096)
PRFS_MHZ = (16, 64)
DATA_RATES_KBPS = (110, 6800)
TX_GAINS_DB = (0.0, 10.5)


@dataclass(frozen=True, order=True)
class PhySetting:
    """One configurable UWB PHY tuple."""

    channel: int
    psr: int
    prf_mhz: int
    data_rate_kbps: int
    tx_gain_db: float

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"channel {self.channel} not in {CHANNELS}")
        if self.psr not in PSRS:
            raise ValueError(f"psr {self.psr} not in {PSRS}")
        if self.prf_mhz not in PRFS_MHZ:
            raise ValueError(f"prf {self.prf_mhz} not in {PRFS_MHZ}")
        if self.data_rate_kbps not in DATA_RATES_KBPS:
            raise ValueError(f"data rate {self.data_rate_kbps} not in {DATA_RATES_KBPS}")
        if self.tx_gain_db not in TX_GAINS_DB:
            raise ValueError(f"tx gain {self.tx_gain_db} not in {TX_GAINS_DB}")

    def as_tuple(self) -> tuple:
        return (self.channel, self.psr, self.prf_mhz, self.data_rate_kbps, self.tx_gain_db)


class ActionSpace:
    """The 72 PHY settings in a fixed order with a setting <-> index bijection."""

    def __init__(self, settings: tuple[PhySetting, ...]):
        if len(set(settings)) != len(settings):
            raise ValueError("duplicate settings in action space")
        self.settings = settings
        self._index = {s: i for i, s in enumerate(settings)}

    def __len__(self) -> int:
        return len(self.settings)

    def __iter__(self):
        return iter(self.settings)

    def __getitem__(self, idx: int) -> PhySetting:
        return self.settings[idx]

    def index_of(self, setting: PhySetting) -> int:
        return self._index[setting]

    def __contains__(self, setting: PhySetting) -> bool:
        return setting in self._index


def enumerate_actions() -> ActionSpace:
    """All 3*3*2*2*2 = 72 settings, lexicographic over (channel, psr, prf, rate, gain)."""
    settings = tuple(
        PhySetting(c, psr, prf, dr, g)
        for c, psr, prf, dr, g in itertools.product(
            CHANNELS, PSRS, PRFS_MHZ, DATA_RATES_KBPS, TX_GAINS_DB
        )
    )
    return ActionSpace(settings)


def encode_setting(s: PhySetting) -> tuple[float, float, float, float, float]:
    """Min-max scale the five setting fields to [0, 1] (network input encoding)."""
    return (
        (s.channel - CHANNELS[0]) / (CHANNELS[-1] - CHANNELS[0]),
        (s.psr - PSRS[0]) / (PSRS[-1] - PSRS[0]),
        (s.prf_mhz - PRFS_MHZ[0]) / (PRFS_MHZ[-1] - PRFS_MHZ[0]),
        (s.data_rate_kbps - DATA_RATES_KBPS[0]) / (DATA_RATES_KBPS[-1] - DATA_RATES_KBPS[0]),
        (s.tx_gain_db - TX_GAINS_DB[0]) / (TX_GAINS_DB[-1] - TX_GAINS_DB[0]),
    )
