"""Per-frame and per-range energy model for the DW1000 UWB radio.

The model follows the measured current draw of the chip per (channel, PRF,
data rate) mode and the symbol durations of the synchronisation header and
the data part of an IEEE 802.15.4 UWB frame.  One ADS-TWR range costs three
frames, each transmitted and received, with the TX side scaled by the
configured power gain.  Energies are kept in W*us throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phy import ActionSpace, PhySetting, enumerate_actions

SUPPLY_VOLTAGE = 3.3

# Current draw in mA keyed by (channel, prf_mhz, data_rate_kbps):
# (preamble TX, preamble RX, data TX, data RX).
CURRENT_TABLE_MA = {
    (3, 16, 110): (68.0, 113.0, 35.0, 59.0),
    (3, 16, 6800): (68.0, 113.0, 50.0, 118.0),
    (3, 64, 110): (83.0, 113.0, 40.0, 72.0),
    (3, 64, 6800): (83.0, 113.0, 52.0, 118.0),
    (5, 16, 110): (74.0, 118.0, 42.0, 62.0),
    (5, 16, 6800): (74.0, 118.0, 57.0, 123.0),
    (5, 64, 110): (89.0, 118.0, 46.0, 75.0),
    (5, 64, 6800): (89.0, 118.0, 59.0, 123.0),
    (7, 16, 110): (74.0, 118.0, 42.0, 62.0),
    (7, 16, 6800): (74.0, 118.0, 57.0, 123.0),
    (7, 64, 110): (95.0, 124.0, 52.0, 81.0),
    (7, 64, 6800): (95.0, 124.0, 65.0, 129.0),
}

# Symbol durations in ns keyed by (prf_mhz, data_rate_kbps): (SHR, data & PHR).
SYMBOL_DURATION_NS = {
    (16, 110): (993.59, 8205.13),
    (16, 6800): (993.59, 1025.64),
    (64, 110): (1017.63, 8205.13),
    (64, 6800): (1017.63, 128.12),
}

# 850 kbps-class symbol duration; the DW1000 sends the PHR of a 6.8 Mbps frame
# at this slower rate.  Only used when FrameModelParams.split_phr_rate is set.
PHR_SLOW_SYMBOL_NS = 1025.64


@dataclass(frozen=True)
class FrameModelParams:
    """Frame-level constants of the energy model.

    phr_bits is the PHR length b_p; 19 bits is the standard value but long
    preambles dominate the budget so it barely matters there, while the very
    short frames shift by ~10% with it.  split_phr_rate bills the PHR of a
    6.8 Mbps frame at the 850 kbps-class symbol duration instead of one flat
    data-symbol duration.
    """

    phr_bits: int = 19
    payload_bytes: int = 12
    fec_rate: float = 0.87
    supply_v: float = SUPPLY_VOLTAGE
    split_phr_rate: bool = False

    def __post_init__(self):
        if not 0.0 < self.fec_rate <= 1.0:
            raise ValueError("fec_rate must be in (0, 1]")
        if self.phr_bits <= 0 or self.payload_bytes <= 0:
            raise ValueError("frame field counts must be positive")


DEFAULT_FRAME_PARAMS = FrameModelParams()


def sfd_symbols(data_rate_kbps: int) -> int:
    """SFD length: 64 symbols at 110 kbps, 8 at the other data rates."""
    return 64 if data_rate_kbps == 110 else 8


def power_w(current_ma: float, supply_v: float = SUPPLY_VOLTAGE) -> float:
    """Power drawn at the fixed supply voltage, in watts."""
    if current_ma < 0:
        raise ValueError(f"negative current: {current_ma} mA")
    return supply_v * current_ma * 1e-3


def frame_durations(s: PhySetting, params: FrameModelParams = DEFAULT_FRAME_PARAMS):
    """Durations (t_preamble_us, t_data_us) of the two frame parts.

    Preamble symbols: PSR plus the SFD length.  Data symbols: PHR bits plus
    FEC-expanded payload bits, at the data-part symbol duration.
    """
    key = (s.prf_mhz, s.data_rate_kbps)
    if key not in SYMBOL_DURATION_NS:
        raise KeyError(f"no symbol duration for PRF/rate {key}")
    shr_ns, data_ns = SYMBOL_DURATION_NS[key]
    preamble_symbols = s.psr + sfd_symbols(s.data_rate_kbps)
    payload_symbols = params.payload_bytes * 8 / params.fec_rate
    t_preamble_us = preamble_symbols * shr_ns * 1e-3
    if params.split_phr_rate and s.data_rate_kbps == 6800:
        t_data_us = (params.phr_bits * PHR_SLOW_SYMBOL_NS + payload_symbols * data_ns) * 1e-3
    else:
        t_data_us = (params.phr_bits + payload_symbols) * data_ns * 1e-3
    return t_preamble_us, t_data_us


def frame_energy(
    s: PhySetting, direction: str, params: FrameModelParams = DEFAULT_FRAME_PARAMS
) -> float:
    """Energy of one frame in W*us for direction 'tx' or 'rx'."""
    key = (s.channel, s.prf_mhz, s.data_rate_kbps)
    if key not in CURRENT_TABLE_MA:
        raise KeyError(f"no current entry for channel/PRF/rate {key}")
    pre_tx, pre_rx, dat_tx, dat_rx = CURRENT_TABLE_MA[key]
    if direction == "tx":
        pre_ma, dat_ma = pre_tx, dat_tx
    elif direction == "rx":
        pre_ma, dat_ma = pre_rx, dat_rx
    else:
        raise ValueError(f"direction must be 'tx' or 'rx', got {direction!r}")
    t_preamble_us, t_data_us = frame_durations(s, params)
    return (
        power_w(pre_ma, params.supply_v) * t_preamble_us
        + power_w(dat_ma, params.supply_v) * t_data_us
    )


def range_energy(s: PhySetting, params: FrameModelParams = DEFAULT_FRAME_PARAMS) -> float:
    """Total energy of one ADS-TWR range in W*us.

    Three frames are transmitted and three received; the TX side carries the
    linear power gain factor 10^(Ptx/10).
    """
    e_tx = frame_energy(s, "tx", params)
    e_rx = frame_energy(s, "rx", params)
    return 3.0 * (e_rx + e_tx * 10.0 ** (s.tx_gain_db / 10.0))


class EnergyModel:
    """Precomputed per-action energies and their min-max normalisation."""

    def __init__(
        self,
        space: ActionSpace | None = None,
        params: FrameModelParams = DEFAULT_FRAME_PARAMS,
    ):
        self.space = space if space is not None else enumerate_actions()
        self.params = params
        if len(self.space) == 0:
            raise ValueError("empty action space")
        self.energy_wus = np.array([range_energy(s, params) for s in self.space])
        e_min, e_max = float(self.energy_wus.min()), float(self.energy_wus.max())
        if e_max <= e_min:
            raise ValueError("degenerate action space: max energy equals min energy")
        self.e_min = e_min
        self.e_max = e_max
        self.normalized = (self.energy_wus - e_min) / (e_max - e_min)

    def energy_of(self, s: PhySetting) -> float:
        return float(self.energy_wus[self.space.index_of(s)])

    def normalized_of(self, s: PhySetting) -> float:
        return float(self.normalized[self.space.index_of(s)])


def normalized_energy(
    s: PhySetting,
    space: ActionSpace,
    params: FrameModelParams = DEFAULT_FRAME_PARAMS,
) -> float:
    """Energy of `s` scaled to [0, 1] by the min/max over the whole action space."""
    return EnergyModel(space, params).normalized_of(s)
