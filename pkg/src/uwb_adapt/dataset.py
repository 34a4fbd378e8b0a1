"""Ranging dataset ingestion, per-link statistics, and a synthetic generator.

One row of the canonical CSV is one ADS-TWR range attempt between a tag and
an anchor at a given PHY setting.  The store aggregates attempts into
per-(link, setting) reception statistics and pools of diagnostic samples;
the replay environment draws from those pools.  A synthetic generator builds
a plausible multi-link office-style dataset from a seeded link-budget model
so the whole pipeline runs without the measured dataset.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .linkstate import RawDiagnostics, derive_features, feature_row
from .phy import ActionSpace, PhySetting, enumerate_actions

log = logging.getLogger(__name__)

LinkKey = tuple[str, str]

CSV_COLUMNS = (
    "seq",
    "tag_id",
    "anchor_id",
    "channel",
    "psr",
    "prf",
    "rate",
    "gain",
    "received",
    "f1",
    "f2",
    "f3",
    "cir_power",
    "noise_std",
    "rx_pacc",
    "fp_index",
    "lde",
    "pp_amp",
    "pp_index",
    "est_range_m",
    "true_dist_m",
)

DIAGNOSTIC_COLUMNS = (
    "f1",
    "f2",
    "f3",
    "cir_power",
    "noise_std",
    "rx_pacc",
    "fp_index",
    "lde",
    "pp_amp",
    "pp_index",
    "est_range_m",
)


class DatasetFormatError(ValueError):
    """A malformed dataset file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class RangeRecord:
    """One range attempt; diagnostics exist only when the exchange succeeded."""

    seq: int
    tag_id: str
    anchor_id: str
    setting: PhySetting
    received: bool
    diagnostics: RawDiagnostics | None
    est_range_m: float | None
    true_dist_m: float

    def __post_init__(self):
        if self.true_dist_m <= 0:
            raise ValueError(f"true_dist_m must be > 0, got {self.true_dist_m}")
        if self.received and (self.diagnostics is None or self.est_range_m is None):
            raise ValueError("received record needs diagnostics and an estimated range")
        if not self.received and (self.diagnostics is not None or self.est_range_m is not None):
            raise ValueError("failed record cannot carry diagnostics or an estimated range")

    @property
    def link(self) -> LinkKey:
        return (self.tag_id, self.anchor_id)

    @property
    def abs_error_mm(self) -> float | None:
        if self.est_range_m is None:
            return None
        return abs(self.est_range_m - self.true_dist_m) * 1000.0


@dataclass(frozen=True)
class LinkSettingStats:
    """Aggregated outcomes of all attempts of one (link, setting) combination."""

    attempts: int
    received: int
    feature_rows: np.ndarray  # (received, 8) raw derived feature values
    errors_mm: np.ndarray  # (received,)

    @property
    def prr(self) -> float:
        return self.received / self.attempts if self.attempts else 0.0

    @property
    def mean_abs_range_error_mm(self) -> float | None:
        return float(self.errors_mm.mean()) if len(self.errors_mm) else None


def _empty_stats(attempts: int) -> LinkSettingStats:
    return LinkSettingStats(
        attempts=attempts,
        received=0,
        feature_rows=np.empty((0, 8), dtype=np.float64),
        errors_mm=np.empty(0, dtype=np.float64),
    )


class DatasetStore:
    """Immutable per-(link, setting) statistics over a ranging dataset.

    Every combination is assumed to have been attempted a fixed number of
    times (the campaign design), so success-only exports still yield a PRR.
    Combinations absent from the data read as PRR 0 with an empty pool.
    """

    def __init__(
        self,
        stats: dict[tuple[LinkKey, PhySetting], LinkSettingStats],
        attempts_per_combination: int,
        space: ActionSpace | None = None,
    ):
        self.space = space if space is not None else enumerate_actions()
        self.attempts_per_combination = attempts_per_combination
        self._stats = dict(stats)
        self.links: tuple[LinkKey, ...] = tuple(sorted({k[0] for k in self._stats}))
        self._empty = _empty_stats(attempts_per_combination)
        # Dense PRR matrix (link, action) for fast environment queries.
        self._prr = np.zeros((len(self.links), len(self.space)))
        link_row = {link: i for i, link in enumerate(self.links)}
        for (link, setting), st in self._stats.items():
            self._prr[link_row[link], self.space.index_of(setting)] = st.prr
        self._link_row = link_row

    @classmethod
    def from_records(
        cls,
        records,
        attempts_per_combination: int,
        space: ActionSpace | None = None,
    ) -> "DatasetStore":
        space = space if space is not None else enumerate_actions()
        counts: dict[tuple[LinkKey, PhySetting], int] = {}
        received: dict[tuple[LinkKey, PhySetting], int] = {}
        pools: dict[tuple[LinkKey, PhySetting], list[np.ndarray]] = {}
        errors: dict[tuple[LinkKey, PhySetting], list[float]] = {}
        implausible = 0
        for rec in records:
            key = (rec.link, rec.setting)
            counts[key] = counts.get(key, 0) + 1
            if not rec.received:
                continue
            received[key] = received.get(key, 0) + 1
            feats = derive_features(rec.diagnostics, rec.setting.prf_mhz)
            if not feats.plausible:
                implausible += 1
            pools.setdefault(key, []).append(feature_row(rec.diagnostics, feats))
            errors.setdefault(key, []).append(rec.abs_error_mm)
        if implausible:
            log.warning(
                "%d received records report first-path power above RX power", implausible
            )
        stats = {}
        for key, n_rows in counts.items():
            if n_rows > attempts_per_combination:
                raise DatasetFormatError(
                    f"combination {key} has {n_rows} rows, more than the "
                    f"{attempts_per_combination} attempts per combination"
                )
            n_rx = received.get(key, 0)
            stats[key] = LinkSettingStats(
                attempts=attempts_per_combination,
                received=n_rx,
                feature_rows=(
                    np.array(pools[key]) if n_rx else np.empty((0, 8), dtype=np.float64)
                ),
                errors_mm=(
                    np.array(errors[key]) if n_rx else np.empty(0, dtype=np.float64)
                ),
            )
        return cls(stats, attempts_per_combination, space)

    def stats_for(self, link: LinkKey, setting: PhySetting) -> LinkSettingStats:
        return self._stats.get((link, setting), self._empty)

    def prr(self, link: LinkKey, setting: PhySetting) -> float:
        return self.stats_for(link, setting).prr

    def prr_row(self, link: LinkKey) -> np.ndarray:
        """PRR of every action for one link, in action-space order (read-only)."""
        row = self._prr[self._link_row[link]]
        row.flags.writeable = False
        return row

    def has_link(self, link: LinkKey) -> bool:
        return link in self._link_row

    def all_feature_rows(self) -> np.ndarray:
        """Concatenated diagnostic feature rows of every received record."""
        pools = [st.feature_rows for st in self._stats.values() if st.received]
        if not pools:
            raise ValueError("store holds no received records")
        return np.concatenate(pools, axis=0)

    def all_prr_values(self) -> np.ndarray:
        """PRR of every combination present in the data."""
        return np.array([st.prr for st in self._stats.values()])

    def total_received(self) -> int:
        return sum(st.received for st in self._stats.values())

    def combinations(self):
        return self._stats.items()


# ---------------------------------------------------------------------------
# CSV reading and writing
# ---------------------------------------------------------------------------


def _parse_setting(row: dict, line: int) -> PhySetting:
    try:
        return PhySetting(
            channel=int(row["channel"]),
            psr=int(row["psr"]),
            prf_mhz=int(row["prf"]),
            data_rate_kbps=int(row["rate"]),
            tx_gain_db=float(row["gain"]),
        )
    except (KeyError, ValueError) as exc:
        raise DatasetFormatError(f"bad setting tuple: {exc}", line) from exc


def _parse_record(row: dict, line: int) -> RangeRecord:
    setting = _parse_setting(row, line)
    raw_received = row.get("received", "1").strip().lower()
    if raw_received in ("1", "true"):
        received = True
    elif raw_received in ("0", "false"):
        received = False
    else:
        raise DatasetFormatError(f"bad received flag {raw_received!r}", line)
    try:
        seq = int(row["seq"])
        true_dist = float(row["true_dist_m"])
        diagnostics = None
        est_range = None
        if received:
            diagnostics = RawDiagnostics(
                f1=float(row["f1"]),
                f2=float(row["f2"]),
                f3=float(row["f3"]),
                cir_power=float(row["cir_power"]),
                noise_std=float(row["noise_std"]),
                rx_pacc=int(row["rx_pacc"]),
                fp_index=float(row["fp_index"]),
                lde_threshold=float(row["lde"]),
                pp_amp=float(row["pp_amp"]),
                pp_index=float(row["pp_index"]),
            )
            est_range = float(row["est_range_m"])
        return RangeRecord(
            seq=seq,
            tag_id=row["tag_id"].strip(),
            anchor_id=row["anchor_id"].strip(),
            setting=setting,
            received=received,
            diagnostics=diagnostics,
            est_range_m=est_range,
            true_dist_m=true_dist,
        )
    except DatasetFormatError:
        raise
    except (KeyError, ValueError) as exc:
        raise DatasetFormatError(str(exc), line) from exc


def iter_csv_records(path, column_map: dict[str, str] | None = None):
    """Yield RangeRecords from a CSV file, reporting errors with line numbers.

    `column_map` maps canonical column names to the names used in the file,
    adapting externally published datasets.  A file without a mapped
    `received` column is treated as success-only.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DatasetFormatError("empty file, header required", 1)
        header = set(reader.fieldnames)
        rename = {}
        for canonical in CSV_COLUMNS:
            actual = (column_map or {}).get(canonical, canonical)
            if actual in header:
                rename[canonical] = actual
            elif canonical != "received":
                raise DatasetFormatError(f"missing column {canonical!r}", 1)
        for line, raw in enumerate(reader, start=2):
            row = {canonical: raw[actual] for canonical, actual in rename.items()}
            yield _parse_record(row, line)


def load_dataset(
    path,
    attempts_per_combination: int = 500,
    column_map: dict[str, str] | None = None,
) -> DatasetStore:
    return DatasetStore.from_records(
        iter_csv_records(path, column_map), attempts_per_combination
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_csv(records, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        d = rec.diagnostics
        writer.writerow(
            [
                rec.seq,
                rec.tag_id,
                rec.anchor_id,
                rec.setting.channel,
                rec.setting.psr,
                rec.setting.prf_mhz,
                rec.setting.data_rate_kbps,
                _fmt(rec.setting.tx_gain_db),
                int(rec.received),
                _fmt(d.f1 if d else None),
                _fmt(d.f2 if d else None),
                _fmt(d.f3 if d else None),
                _fmt(d.cir_power if d else None),
                _fmt(d.noise_std if d else None),
                _fmt(d.rx_pacc if d else None),
                _fmt(d.fp_index if d else None),
                _fmt(d.lde_threshold if d else None),
                _fmt(d.pp_amp if d else None),
                _fmt(d.pp_index if d else None),
                _fmt(rec.est_range_m),
                _fmt(rec.true_dist_m),
            ]
        )


def records_to_csv_bytes(records) -> bytes:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue().encode()


# ---------------------------------------------------------------------------
# Synthetic dataset generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Link-budget model parameters of the synthetic generator.

    Nodes are scattered over a square floor; each pair is a link whose path
    loss combines distance, wall obstructions and per-channel fading
    (occasionally a deep notch, forcing channel changes).  Reception is a
    steep logistic in the sensitivity margin: margin rises with PSR, the low
    data rate, the higher PRF and the TX gain, reproducing the usual
    robustness/energy trade-offs.
    """

    n_nodes: int = 8
    area_m: float = 40.0
    attempts_per_combination: int = 100
    seed: int = 0
    tx_power_dbm: float = -14.0
    ref_loss_db: float = 40.0
    path_loss_exp: float = 2.0
    obstruction_prob: float = 0.45
    wall_loss_db: float = 7.0
    channel_step_db: float = 1.5
    channel_fade_std_db: float = 2.0
    notch_prob: float = 0.2
    notch_db: tuple[float, float] = (12.0, 25.0)
    base_sensitivity_dbm: float = -89.0
    dr110_gain_db: float = 8.0
    prf64_gain_db: float = 1.5
    psr_gain_coef: float = 0.7
    logistic_scale_db: float = 1.0

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("need at least two nodes")
        if self.attempts_per_combination < 1:
            raise ValueError("attempts_per_combination must be >= 1")


@dataclass(frozen=True)
class SynthLink:
    tag_id: str
    anchor_id: str
    distance_m: float
    obstructed: bool
    walls: int
    channel_loss_db: dict[int, float]  # total path loss per channel

    @property
    def key(self) -> LinkKey:
        return (self.tag_id, self.anchor_id)


class SynthModel:
    """Closed-form ground truth of the synthetic generator."""

    def __init__(self, config: SynthConfig):
        self.config = config
        self.space = enumerate_actions()
        rng = np.random.default_rng(config.seed)
        xy = rng.uniform(0.0, config.area_m, size=(config.n_nodes, 2))
        self.node_ids = [f"n{i:02d}" for i in range(config.n_nodes)]
        links = []
        for i, j in itertools.combinations(range(config.n_nodes), 2):
            d = float(np.hypot(*(xy[i] - xy[j])))
            d = max(d, 1.0)
            obstructed = bool(rng.random() < config.obstruction_prob)
            walls = int(rng.integers(1, 4)) if obstructed else 0
            base = (
                config.ref_loss_db
                + 10.0 * config.path_loss_exp * math.log10(d)
                + walls * config.wall_loss_db
            )
            ch_loss = {}
            for k, ch in enumerate((3, 5, 7)):
                fade = float(rng.normal(0.0, config.channel_fade_std_db))
                notch = 0.0
                if rng.random() < config.notch_prob:
                    notch = float(rng.uniform(*config.notch_db))
                ch_loss[ch] = base + k * config.channel_step_db + fade + notch
            links.append(
                SynthLink(self.node_ids[i], self.node_ids[j], d, obstructed, walls, ch_loss)
            )
        self.links = links

    def sensitivity_dbm(self, s: PhySetting) -> float:
        c = self.config
        sens = c.base_sensitivity_dbm
        if s.data_rate_kbps == 110:
            sens -= c.dr110_gain_db
        if s.prf_mhz == 64:
            sens -= c.prf64_gain_db
        sens -= c.psr_gain_coef * 10.0 * math.log10(s.psr / 128.0)
        return sens

    def rx_power_dbm(self, link: SynthLink, s: PhySetting) -> float:
        return self.config.tx_power_dbm + s.tx_gain_db - link.channel_loss_db[s.channel]

    def margin_db(self, link: SynthLink, s: PhySetting) -> float:
        return self.rx_power_dbm(link, s) - self.sensitivity_dbm(s)

    def true_prr(self, link: SynthLink, s: PhySetting) -> float:
        return 1.0 / (1.0 + math.exp(-self.margin_db(link, s) / self.config.logistic_scale_db))

    def link_by_key(self, key: LinkKey) -> SynthLink:
        for link in self.links:
            if link.key == key:
                return link
        raise KeyError(key)


def _synth_diagnostics(model: SynthModel, link: SynthLink, s: PhySetting, rng):
    """Invert the power formulas so derived features match the link budget."""
    from .linkstate import PRF_POWER_CONSTANT

    rx_p = model.rx_power_dbm(link, s) + float(rng.normal(0.0, 1.0))
    if link.obstructed:
        gap = 8.0 + abs(float(rng.normal(4.0, 2.0)))
    else:
        gap = abs(float(rng.normal(1.0, 0.5)))
    fp_p = rx_p - gap
    rx_pacc = int(max(1, s.psr - rng.integers(0, 8)))
    const = PRF_POWER_CONSTANT[s.prf_mhz]
    cir_power = rx_pacc**2 * 10.0 ** ((rx_p + const) / 10.0) / 2.0**17
    harmonic_total = rx_pacc**2 * 10.0 ** ((fp_p + const) / 10.0)
    w2 = float(rng.uniform(0.45, 0.55))
    w1 = float(rng.uniform(0.25, 0.35))
    w3 = max(1.0 - w1 - w2, 0.05)
    noise_std = max(20.0, float(rng.normal(55.0, 8.0)))
    lde = noise_std * float(rng.uniform(1.3, 1.7))
    f2 = math.sqrt(w2 * harmonic_total)
    diag = RawDiagnostics(
        f1=math.sqrt(w1 * harmonic_total),
        f2=f2,
        f3=math.sqrt(w3 * harmonic_total),
        cir_power=cir_power,
        noise_std=noise_std,
        rx_pacc=rx_pacc,
        fp_index=float(rng.normal(740.0, 4.0)),
        lde_threshold=lde,
        pp_amp=f2 * float(rng.uniform(1.0, 1.4)),
        pp_index=float(rng.normal(745.0 + gap, 4.0)),
    )
    if link.obstructed:
        err_m = float(rng.normal(0.12, 0.25))
    else:
        err_m = float(rng.normal(0.0, 0.05))
    est_range = max(0.05, link.distance_m + err_m)
    return diag, est_range


def generate_records(model: SynthModel):
    """Deterministic record stream for the model's configuration."""
    config = model.config
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    for link in model.links:
        for setting in model.space:
            prr = model.true_prr(link, setting)
            hits = rng.random(config.attempts_per_combination) < prr
            for seq, hit in enumerate(hits):
                if hit:
                    diag, est = _synth_diagnostics(model, link, setting, rng)
                else:
                    diag, est = None, None
                yield RangeRecord(
                    seq=seq,
                    tag_id=link.tag_id,
                    anchor_id=link.anchor_id,
                    setting=setting,
                    received=bool(hit),
                    diagnostics=diag,
                    est_range_m=est,
                    true_dist_m=link.distance_m,
                )


def generate_synthetic(config: SynthConfig) -> DatasetStore:
    model = SynthModel(config)
    return DatasetStore.from_records(
        generate_records(model), config.attempts_per_combination, model.space
    )
