"""Feature ranking for the link-state observation.

Candidate diagnostics are ranked twice: by their correlation-based F-value
against the combined reliability/energy objective (regression) and by the
one-way ANOVA F-value against the best-setting label of the record's link
(classification).  The union of top features across both rankings is what
the agent state carries.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import DatasetStore
from .energy import EnergyModel
from .env import objective_g
from .linkstate import derive_features

# F-value assigned when the correlation is perfect or within-class variance is
# zero (the ratio diverges).
F_CAP = 1e12

CANDIDATE_FEATURES = (
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
    "fp_power",
    "rx_power",
    "nlos",
    "pr",
    "q1",
    "q2",
    "prr",
)


class ZeroVarianceError(ValueError):
    """Correlation is undefined for a constant vector."""


def cross_correlation(feature: np.ndarray, target: np.ndarray) -> float:
    """Pearson correlation between a feature column and the target."""
    f = np.asarray(feature, dtype=np.float64)
    g = np.asarray(target, dtype=np.float64)
    if f.shape != g.shape or f.ndim != 1 or len(f) < 2:
        raise ValueError("expected two equal-length vectors of length >= 2")
    fd = f - f.mean()
    gd = g - g.mean()
    denom = np.sqrt((fd * fd).sum() * (gd * gd).sum())
    if denom == 0.0:
        raise ZeroVarianceError("zero variance in feature or target")
    return float((fd * gd).sum() / denom)


def f_value(xcor: float, dof: float) -> float:
    """F = xcor^2 / (1 - xcor^2) * dof, capped when the correlation is perfect."""
    if abs(xcor) > 1.0 + 1e-12:
        raise ValueError(f"|xcor| must be <= 1, got {xcor}")
    x2 = min(xcor * xcor, 1.0)
    if x2 >= 1.0 - 1e-15:
        warnings.warn("perfect correlation, F-value capped", RuntimeWarning)
        return F_CAP
    return x2 / (1.0 - x2) * dof


def anova_f(feature: np.ndarray, labels: np.ndarray) -> float:
    """One-way ANOVA F: between-group mean square over within-group mean square."""
    f = np.asarray(feature, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("ANOVA needs at least two classes")
    groups = [f[labels == c] for c in classes]
    if any(len(g) < 2 for g in groups):
        raise ValueError("every class needs at least two samples")
    grand = f.mean()
    ss_between = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean()) ** 2).sum() for g in groups)
    df_between = len(classes) - 1
    df_within = len(f) - len(classes)
    ms_between = ss_between / df_between
    if ss_within == 0.0:
        warnings.warn("zero within-class variance, F-value capped", RuntimeWarning)
        return F_CAP
    return float(ms_between / (ss_within / df_within))


@dataclass(frozen=True)
class FeatureMatrix:
    """Named feature columns plus the two targets, one row per received record."""

    columns: dict[str, np.ndarray]
    target_g: np.ndarray
    target_class: np.ndarray

    def __post_init__(self):
        n = len(self.target_g)
        if n < 2:
            raise ValueError("need at least two rows")
        for name, col in self.columns.items():
            if len(col) != n:
                raise ValueError(f"column {name!r} length mismatch")
            if not np.all(np.isfinite(col)):
                raise ValueError(f"column {name!r} contains non-finite values")


def build_feature_matrix(
    records, store: DatasetStore, energy_model: EnergyModel | None = None
) -> FeatureMatrix:
    """Assemble candidate features and targets from the received records.

    The regression target is the objective value of the record's combination;
    the classification target is the best-setting index of the record's link
    (highest expected reward, ties broken by the cheaper setting).
    """
    em = energy_model if energy_model is not None else EnergyModel(store.space)
    norm = em.normalized
    best_cache: dict = {}

    def best_action(link) -> int:
        if link not in best_cache:
            prr_row = store.prr_row(link)
            rewards = prr_row + prr_row * (1.0 - norm)
            top = rewards.max()
            tied = np.flatnonzero(rewards >= top - 1e-12)
            best_cache[link] = int(tied[np.argmin(em.energy_wus[tied])])
        return best_cache[link]

    cols: dict[str, list] = {name: [] for name in CANDIDATE_FEATURES}
    g_vals: list[float] = []
    class_vals: list[int] = []
    for rec in records:
        if not rec.received:
            continue
        d = rec.diagnostics
        feats = derive_features(d, rec.setting.prf_mhz)
        action = store.space.index_of(rec.setting)
        prr = store.prr(rec.link, rec.setting)
        cols["f1"].append(d.f1)
        cols["f2"].append(d.f2)
        cols["f3"].append(d.f3)
        cols["cir_power"].append(d.cir_power)
        cols["noise_std"].append(d.noise_std)
        cols["rx_pacc"].append(d.rx_pacc)
        cols["fp_index"].append(d.fp_index)
        cols["lde"].append(d.lde_threshold)
        cols["pp_amp"].append(d.pp_amp)
        cols["pp_index"].append(d.pp_index)
        cols["fp_power"].append(feats.fp_power_dbm)
        cols["rx_power"].append(feats.rx_power_dbm)
        cols["nlos"].append(feats.nlos_db)
        cols["pr"].append(feats.power_ratio)
        cols["q1"].append(feats.q1)
        cols["q2"].append(feats.q2)
        cols["prr"].append(prr)
        g_vals.append(objective_g(prr, float(norm[action])))
        class_vals.append(best_action(rec.link))
    return FeatureMatrix(
        columns={name: np.array(vals) for name, vals in cols.items()},
        target_g=np.array(g_vals),
        target_class=np.array(class_vals),
    )


@dataclass(frozen=True)
class FeatureRanking:
    regression: tuple[tuple[str, float], ...]  # (feature, F) descending
    classification: tuple[tuple[str, float], ...]
    excluded: tuple[str, ...]


def rank_features(matrix: FeatureMatrix, dof_convention: str = "features") -> FeatureRanking:
    """Rank features by the two F-values.

    dof_convention 'features' uses nu = (number of features) - 1; 'samples'
    uses the usual nu = (number of rows) - 2.
    """
    if dof_convention == "features":
        dof = len(matrix.columns) - 1
    elif dof_convention == "samples":
        dof = len(matrix.target_g) - 2
    else:
        raise ValueError(f"unknown dof convention {dof_convention!r}")
    reg: list[tuple[str, float]] = []
    cls: list[tuple[str, float]] = []
    excluded: list[str] = []
    for name, col in matrix.columns.items():
        if np.ptp(col) == 0.0:
            warnings.warn(f"feature {name!r} is constant, excluded", RuntimeWarning)
            excluded.append(name)
            continue
        reg.append((name, f_value(cross_correlation(col, matrix.target_g), dof)))
        cls.append((name, anova_f(col, matrix.target_class)))
    reg.sort(key=lambda kv: -kv[1])
    cls.sort(key=lambda kv: -kv[1])
    return FeatureRanking(tuple(reg), tuple(cls), tuple(excluded))


def write_ranking_csv(ranking: FeatureRanking, fh) -> None:
    reg_rank = {name: i + 1 for i, (name, _) in enumerate(ranking.regression)}
    cls_rank = {name: i + 1 for i, (name, _) in enumerate(ranking.classification)}
    reg_f = dict(ranking.regression)
    cls_f = dict(ranking.classification)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(
        ["feature", "f_value_regression", "f_value_classification", "rank_r", "rank_c"]
    )
    for name in reg_rank:
        writer.writerow(
            [name, f"{reg_f[name]:.6g}", f"{cls_f[name]:.6g}", reg_rank[name], cls_rank[name]]
        )
