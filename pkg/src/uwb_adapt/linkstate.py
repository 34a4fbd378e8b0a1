"""Link-state diagnostics of the DW1000 and the agent state built from them.

The radio reports accumulator-level diagnostics per received frame.  From
those we derive the dBm power estimates, the NLOS indicator and the two
quality ratios, then assemble the 14-value observation: 8 scaled diagnostics,
the PRR, and the 5 scaled setting fields.  A ternary discretizer maps the
9 continuous state dimensions onto one of 3^9 = 19,683 table rows for the
tabular agent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .phy import PhySetting, encode_setting

# dBm correction constant of the power estimate formulas, per PRF.
PRF_POWER_CONSTANT = {16: 113.77, 64: 121.74}

NLOS_THRESHOLD_DB = 10.0

# Diagnostic-derived state dimensions, in the fixed observation order.
STATE_FEATURES = (
    "rx_power_dbm",
    "fp_power_dbm",
    "nlos_db",
    "noise_std",
    "q1",
    "rx_pacc",
    "lde_threshold",
    "q2",
)
STATE_DIMS = STATE_FEATURES + ("prr",)

STATE_SIZE = 14  # 8 diagnostics + PRR + 5 setting fields
N_TERNARY_STATES = 3 ** len(STATE_DIMS)  # 19,683


class UndefinedPowerError(ValueError):
    """Raised when a power estimate is undefined (log of zero)."""


@dataclass(frozen=True)
class RawDiagnostics:
    """Per-reception diagnostics as reported by the radio."""

    f1: float
    f2: float
    f3: float
    cir_power: float
    noise_std: float
    rx_pacc: int
    fp_index: float
    lde_threshold: float
    pp_amp: float
    pp_index: float

    def __post_init__(self):
        if self.rx_pacc < 1:
            raise ValueError(f"rx_pacc must be >= 1, got {self.rx_pacc}")
        if self.noise_std <= 0:
            raise ValueError(f"noise_std must be > 0, got {self.noise_std}")
        if self.lde_threshold <= 0:
            raise ValueError(f"lde_threshold must be > 0, got {self.lde_threshold}")
        if min(self.f1, self.f2, self.f3, self.pp_amp) < 0:
            raise ValueError("amplitudes must be non-negative")


@dataclass(frozen=True)
class DerivedFeatures:
    """Quality features computed from one RawDiagnostics record."""

    fp_power_dbm: float
    rx_power_dbm: float
    nlos_db: float
    power_ratio: float
    q1: float
    q2: float

    @property
    def likely_nlos(self) -> bool:
        return self.nlos_db > NLOS_THRESHOLD_DB

    @property
    def plausible(self) -> bool:
        """First path cannot carry more power than the whole response."""
        return self.nlos_db >= 0


def fp_power(f1: float, f2: float, f3: float, rx_pacc: int, prf_mhz: int) -> float:
    """First-path power estimate in dBm.

    10*log10((F1^2 + F2^2 + F3^2) / N^2) - A with A = 113.77 at 16 MHz PRF
    and 121.74 at 64 MHz, N the preamble accumulation count.
    """
    if rx_pacc < 1:
        raise ValueError("rx_pacc must be >= 1")
    total = f1 * f1 + f2 * f2 + f3 * f3
    if total <= 0:
        raise UndefinedPowerError("all first-path harmonics are zero")
    return 10.0 * np.log10(total / rx_pacc**2) - PRF_POWER_CONSTANT[prf_mhz]


def rx_power(cir_power: float, rx_pacc: int, prf_mhz: int) -> float:
    """Total received power estimate in dBm: 10*log10(C * 2^17 / N^2) - A."""
    if rx_pacc < 1:
        raise ValueError("rx_pacc must be >= 1")
    if cir_power <= 0:
        raise UndefinedPowerError(f"cir_power must be > 0, got {cir_power}")
    return 10.0 * np.log10(cir_power * 2.0**17 / rx_pacc**2) - PRF_POWER_CONSTANT[prf_mhz]


def derive_features(d: RawDiagnostics, prf_mhz: int) -> DerivedFeatures:
    fp = fp_power(d.f1, d.f2, d.f3, d.rx_pacc, prf_mhz)
    rx = rx_power(d.cir_power, d.rx_pacc, prf_mhz)
    return DerivedFeatures(
        fp_power_dbm=fp,
        rx_power_dbm=rx,
        nlos_db=rx - fp,
        power_ratio=rx / fp,
        q1=d.f2 / d.noise_std,
        q2=d.f2 / d.lde_threshold,
    )


def feature_row(d: RawDiagnostics, feats: DerivedFeatures) -> np.ndarray:
    """The 8 diagnostic state dimensions of one record, in STATE_FEATURES order."""
    return np.array(
        [
            feats.rx_power_dbm,
            feats.fp_power_dbm,
            feats.nlos_db,
            d.noise_std,
            feats.q1,
            d.rx_pacc,
            d.lde_threshold,
            feats.q2,
        ],
        dtype=np.float64,
    )


class FeatureScaler:
    """Per-feature min-max scaling to [0, 1], fitted once and then frozen.

    Out-of-range values clamp; evaluation never refits.
    """

    def __init__(self, minima: np.ndarray, maxima: np.ndarray):
        minima = np.asarray(minima, dtype=np.float64)
        maxima = np.asarray(maxima, dtype=np.float64)
        if minima.shape != (len(STATE_FEATURES),) or maxima.shape != minima.shape:
            raise ValueError("scaler expects one (min, max) pair per state feature")
        if not np.all(minima < maxima):
            raise ValueError("every feature needs min < max")
        self.minima = minima
        self.maxima = maxima

    @classmethod
    def fit(cls, rows: np.ndarray) -> "FeatureScaler":
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != len(STATE_FEATURES) or rows.shape[0] < 2:
            raise ValueError("fit expects an (n, 8) matrix with n >= 2")
        minima = rows.min(axis=0)
        maxima = rows.max(axis=0)
        degenerate = maxima <= minima
        # A constant column still needs a nonzero span to scale against.
        maxima[degenerate] = minima[degenerate] + 1.0
        return cls(minima, maxima)

    def transform(self, row: np.ndarray) -> np.ndarray:
        scaled = (np.asarray(row, dtype=np.float64) - self.minima) / (self.maxima - self.minima)
        return np.clip(scaled, 0.0, 1.0)


def build_state(
    row: np.ndarray, prr: float, setting: PhySetting, scaler: FeatureScaler
) -> np.ndarray:
    """The 14-value observation: scaled diagnostics, PRR, scaled setting fields."""
    state = np.empty(STATE_SIZE, dtype=np.float64)
    state[:8] = scaler.transform(row)
    state[8] = min(max(prr, 0.0), 1.0)
    state[9:] = encode_setting(setting)
    return state


def sentinel_state(setting: PhySetting) -> np.ndarray:
    """Observation for a block with zero receptions: no diagnostics, PRR 0."""
    state = np.zeros(STATE_SIZE, dtype=np.float64)
    state[9:] = encode_setting(setting)
    return state


class TernaryDiscretizer:
    """Low/middle/high split of the 9 state dimensions into a single index.

    Each dimension contributes a digit in {0, 1, 2}; the index is the base-3
    number over the dimensions in STATE_DIMS order, ranging over 3^9 values.
    """

    def __init__(self, t_low: np.ndarray, t_high: np.ndarray):
        t_low = np.asarray(t_low, dtype=np.float64)
        t_high = np.asarray(t_high, dtype=np.float64)
        if t_low.shape != (len(STATE_DIMS),) or t_high.shape != t_low.shape:
            raise ValueError("discretizer expects two thresholds per state dimension")
        if not np.all(t_low < t_high):
            raise ValueError("thresholds must be strictly increasing per dimension")
        self.t_low = t_low
        self.t_high = t_high
        self._weights = 3 ** np.arange(len(STATE_DIMS), dtype=np.int64)

    @classmethod
    def fit(cls, rows: np.ndarray, prr_values: np.ndarray) -> "TernaryDiscretizer":
        """33rd/66th percentile thresholds per dimension, with degenerate fallbacks."""
        rows = np.asarray(rows, dtype=np.float64)
        prr_values = np.asarray(prr_values, dtype=np.float64)
        t_low = np.empty(len(STATE_DIMS))
        t_high = np.empty(len(STATE_DIMS))
        columns = [rows[:, i] for i in range(len(STATE_FEATURES))] + [prr_values]
        for i, col in enumerate(columns):
            lo, hi = np.percentile(col, [100 / 3, 200 / 3])
            if not lo < hi:
                cmin, cmax = float(col.min()), float(col.max())
                if cmin < cmax:
                    lo = cmin + (cmax - cmin) / 3
                    hi = cmin + 2 * (cmax - cmin) / 3
                else:
                    lo, hi = cmin - 1.0, cmin + 1.0
            t_low[i], t_high[i] = lo, hi
        return cls(t_low, t_high)

    def digits(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        return (values >= self.t_low).astype(np.int64) + (values >= self.t_high).astype(np.int64)

    def index(self, values: np.ndarray) -> int:
        """State index of the 9 raw dimension values (8 features then PRR)."""
        return int(np.dot(self.digits(values), self._weights))

    def index_from_digits(self, digits: np.ndarray) -> int:
        return int(np.dot(np.asarray(digits, dtype=np.int64), self._weights))

    def digits_from_index(self, index: int) -> np.ndarray:
        if not 0 <= index < N_TERNARY_STATES:
            raise ValueError(f"index {index} out of range")
        out = np.empty(len(STATE_DIMS), dtype=np.int64)
        for i in range(len(STATE_DIMS)):
            out[i] = index % 3
            index //= 3
        return out


def save_preprocess(path, scaler: FeatureScaler, disc: TernaryDiscretizer) -> None:
    """Persist scaler and discretizer as {dimension: {min, max, t_low, t_high}}.

    The PRR dimension carries identity scaling bounds.
    """
    doc = {}
    for i, name in enumerate(STATE_DIMS):
        if name == "prr":
            lo, hi = 0.0, 1.0
        else:
            lo, hi = float(scaler.minima[i]), float(scaler.maxima[i])
        doc[name] = {
            "min": lo,
            "max": hi,
            "t_low": float(disc.t_low[i]),
            "t_high": float(disc.t_high[i]),
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def load_preprocess(path) -> tuple[FeatureScaler, TernaryDiscretizer]:
    with open(path) as fh:
        doc = json.load(fh)
    minima = np.array([doc[name]["min"] for name in STATE_FEATURES])
    maxima = np.array([doc[name]["max"] for name in STATE_FEATURES])
    t_low = np.array([doc[name]["t_low"] for name in STATE_DIMS])
    t_high = np.array([doc[name]["t_high"] for name in STATE_DIMS])
    return FeatureScaler(minima, maxima), TernaryDiscretizer(t_low, t_high)
