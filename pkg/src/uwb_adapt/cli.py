"""Command-line entry point wiring datasets, training, evaluation and reports.

Every run resolves its configuration (flags override an optional JSON config
file), writes it to manifests/<subcommand>_manifest.json under the output
directory, and derives all randomness from the single --seed.  Exit codes:
2 usage, 3 missing input file, 4 malformed data, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    DatasetFormatError,
    SynthConfig,
    SynthModel,
    generate_records,
    generate_synthetic,
    iter_csv_records,
    load_dataset,
    write_csv,
)
from .dqn import DqnTrainConfig, load_dqn, profile_config, save_dqn, train_dqn
from .energy import EnergyModel, FrameModelParams
from .env import ReplayEnvironment
from .evaluate import (
    DqnPolicy,
    FixedSettingPolicy,
    LinearSearchPolicy,
    QTablePolicy,
    ScenarioSchedule,
    default_dynamic_schedule,
    dynamic_eval,
    static_eval,
    summary_dict,
    timing_report,
    write_dynamic_series_csv,
    write_static_curve_csv,
)
from .features import build_feature_matrix, rank_features, write_ranking_csv
from .linkstate import FeatureScaler, TernaryDiscretizer, load_preprocess, save_preprocess
from .phy import PhySetting, enumerate_actions
from .qlearn import EpsilonSchedule, QTable, QTrainConfig, train_q

EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_FORMAT = 4

HIGH_CH7 = PhySetting(7, 4096, 64, 6800, 10.5)
HIGH_CH3 = PhySetting(3, 4096, 64, 6800, 10.5)
LOW_CH7 = PhySetting(7, 128, 64, 6800, 0.0)


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _out_dirs(out: str) -> dict[str, Path]:
    root = Path(out)
    dirs = {name: root / name for name in ("models", "results", "manifests")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    return dirs


def _write_manifest(out: str, subcommand: str, config: dict) -> None:
    dirs = _out_dirs(out)
    doc = {"subcommand": subcommand, "version": __version__, "config": config}
    path = dirs["manifests"] / f"{subcommand.replace('-', '_')}_manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _config_from_args(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} not found: {path}", EXIT_MISSING)
    return p


def _load_store(args):
    path = _require_file(args.dataset, "dataset")
    column_map = None
    if getattr(args, "column_map", None):
        column_map = json.loads(_require_file(args.column_map, "column map").read_text())
    return load_dataset(path, args.attempts, column_map)


def _threads_cap(requested: int) -> int:
    cap = os.environ.get("UWB_ADAPT_THREADS")
    if cap:
        return max(1, min(requested, int(cap)))
    return max(1, requested)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_synth(args) -> int:
    config = SynthConfig(
        n_nodes=args.nodes,
        area_m=args.area,
        attempts_per_combination=args.attempts,
        seed=args.seed,
    )
    model = SynthModel(config)
    dirs = _out_dirs(args.out)
    dataset_path = dirs["results"] / "synthetic_dataset.csv"
    with open(dataset_path, "w", newline="") as fh:
        write_csv(generate_records(model), fh)
    store = load_dataset(dataset_path, args.attempts)
    schedule = default_dynamic_schedule(store)
    schedule_path = dirs["results"] / "dynamic_schedule.json"
    schedule_path.write_text(schedule.to_json() + "\n")
    _write_manifest(args.out, "gen-synth", _config_from_args(args))
    print(f"wrote {dataset_path} ({len(store.links)} links, "
          f"{store.total_received()} received rows)")
    print(f"wrote {schedule_path}")
    return 0


def cmd_ingest(args) -> int:
    path = _require_file(args.dataset, "dataset")
    column_map = None
    if args.column_map:
        column_map = json.loads(_require_file(args.column_map, "column map").read_text())
    dirs = _out_dirs(args.out)
    out_path = dirs["results"] / "canonical_dataset.csv"
    with open(out_path, "w", newline="") as fh:
        write_csv(iter_csv_records(path, column_map), fh)
    store = load_dataset(out_path, args.attempts)
    _write_manifest(args.out, "ingest", _config_from_args(args))
    print(f"wrote {out_path} ({len(store.links)} links, "
          f"{store.total_received()} received rows)")
    return 0


def cmd_features(args) -> int:
    store = _load_store(args)
    matrix = build_feature_matrix(iter_csv_records(args.dataset), store)
    ranking = rank_features(matrix, args.dof_convention)
    dirs = _out_dirs(args.out)
    out_path = dirs["results"] / "feature_ranking.csv"
    with open(out_path, "w", newline="") as fh:
        write_ranking_csv(ranking, fh)
    _write_manifest(args.out, "features", _config_from_args(args))
    top = ", ".join(name for name, _ in ranking.regression[:6])
    print(f"wrote {out_path}; top regression features: {top}")
    return 0


def cmd_energy(args) -> int:
    params = FrameModelParams(phr_bits=args.phr_bits, split_phr_rate=args.split_phr_rate)
    em = EnergyModel(enumerate_actions(), params)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(
        ["channel", "psr", "prf", "rate", "gain",
         "e_tx_wus", "e_rx_wus", "e_total_wus", "e_norm"]
    )
    from .energy import frame_energy

    for i, s in enumerate(em.space):
        writer.writerow(
            [
                s.channel, s.psr, s.prf_mhz, s.data_rate_kbps, f"{s.tx_gain_db:g}",
                f"{frame_energy(s, 'tx', params):.4f}",
                f"{frame_energy(s, 'rx', params):.4f}",
                f"{em.energy_wus[i]:.4f}",
                f"{em.normalized[i]:.6f}",
            ]
        )
    _write_manifest(args.out, "energy", _config_from_args(args))
    return 0


def _fit_preprocess(store):
    scaler = FeatureScaler.fit(store.all_feature_rows())
    disc = TernaryDiscretizer.fit(store.all_feature_rows(), store.all_prr_values())
    return scaler, disc


def cmd_train_q(args) -> int:
    store = _load_store(args)
    scaler, disc = _fit_preprocess(store)
    env = ReplayEnvironment(store, scaler, block_size=args.block, seed=args.seed)
    config = QTrainConfig(
        steps=args.steps,
        alpha=args.alpha,
        gamma=args.gamma,
        link_switch_period=args.link_switch,
        seed=args.seed,
        schedule=EpsilonSchedule(decay=args.eps_decay),
    )
    table = train_q(env, config, lambda state: disc.index(state[:9]))
    dirs = _out_dirs(args.out)
    table_path = dirs["models"] / "qtable.bin"
    table.save(table_path)
    save_preprocess(dirs["models"] / "preprocess.json", scaler, disc)
    _write_manifest(args.out, "train-q", _config_from_args(args))
    print(f"wrote {table_path} ({table.n_states}x{table.n_actions})")
    return 0


def cmd_train_dqn(args) -> int:
    store = _load_store(args)
    scaler, disc = _fit_preprocess(store)
    env = ReplayEnvironment(store, scaler, block_size=args.block, seed=args.seed)
    base = DqnTrainConfig(
        steps=args.steps,
        seed=args.seed,
        schedule=EpsilonSchedule(decay=args.eps_decay),
    )
    config = profile_config(args.profile, base) if args.profile else base
    net, _, _ = train_dqn(env, config)
    dirs = _out_dirs(args.out)
    stem = dirs["models"] / "dqn"
    save_dqn(stem, net, config)
    save_preprocess(dirs["models"] / "preprocess.json", scaler, disc)
    _write_manifest(args.out, "train-dqn", _config_from_args(args))
    print(f"wrote {stem}.json/.bin ({net.n_params} parameters)")
    return 0


def _agent_policies(args, eval_profile: str | None = None) -> dict:
    """Policies for the trained artifacts given on the command line."""
    policies = {}
    scaler = disc = None
    if args.preprocess:
        scaler, disc = load_preprocess(_require_file(args.preprocess, "preprocess file"))
    if args.qtable:
        if disc is None:
            raise CliError("--qtable needs --preprocess for the discretizer", EXIT_USAGE)
        table = QTable.load(_require_file(args.qtable, "Q-table"))
        policies["q-learning"] = QTablePolicy(table, disc)
    if args.dqn:
        _require_file(args.dqn + ".json", "network checkpoint")
        net, config = load_dqn(args.dqn)
        if eval_profile:
            config = profile_config(eval_profile, config)
        policies["deep-q-learning"] = DqnPolicy(net, config)
    return policies, scaler


def cmd_eval_static(args) -> int:
    store = _load_store(args)
    policies, scaler = _agent_policies(args, eval_profile=args.profile or "static")
    policies["linear-search"] = LinearSearchPolicy(len(store.space))
    result = static_eval(
        policies,
        store,
        repetitions=args.reps,
        seed=args.seed,
        max_iterations=args.iters,
        block_size=args.block,
        scaler=scaler,
        n_jobs=_threads_cap(args.jobs),
    )
    dirs = _out_dirs(args.out)
    out_path = dirs["results"] / "static_curve.csv"
    with open(out_path, "w", newline="") as fh:
        write_static_curve_csv(result, fh)
    _write_manifest(args.out, "eval-static", _config_from_args(args))
    marks = sorted({1, min(10, args.iters), args.iters})
    for name, curve in result.curves.items():
        print(f"{name}: " + ", ".join(f"{curve[m]:.2f} @{m}" for m in marks))
    print(f"wrote {out_path}")
    return 0


def _load_schedule(args, store) -> ScenarioSchedule:
    if args.schedule:
        return ScenarioSchedule.from_json(
            _require_file(args.schedule, "schedule").read_text()
        )
    return default_dynamic_schedule(store)


def cmd_eval_dynamic(args) -> int:
    store = _load_store(args)
    policies, scaler = _agent_policies(args, eval_profile=args.profile or "dynamic")
    if not policies:
        raise CliError("eval-dynamic needs at least one of --qtable/--dqn", EXIT_USAGE)
    schedule = _load_schedule(args, store)
    results = {}
    for name, policy in policies.items():
        env = ReplayEnvironment(store, scaler, block_size=args.block, seed=args.seed)
        results[name] = dynamic_eval(policy, schedule, env, seed=args.seed)
    dirs = _out_dirs(args.out)
    series_path = dirs["results"] / "dynamic_series.csv"
    with open(series_path, "w", newline="") as fh:
        write_dynamic_series_csv(results, store.space, fh)
    summary_path = dirs["results"] / "summary.json"
    summary_path.write_text(json.dumps(summary_dict(results), indent=2, sort_keys=True) + "\n")
    _write_manifest(args.out, "eval-dynamic", _config_from_args(args))
    for name, res in results.items():
        print(f"{name}: PRR {res.avg_prr_pct:.2f}%, energy {res.avg_energy_wus:.2f} Wus, "
              f"error {res.avg_error_mm:.2f} mm")
    print(f"wrote {series_path} and {summary_path}")
    return 0


def cmd_baseline(args) -> int:
    store = _load_store(args)
    schedule = _load_schedule(args, store)
    em = EnergyModel(store.space)
    policies = {
        "fixed-low-ch7": FixedSettingPolicy(store.space.index_of(LOW_CH7), "fixed-low-ch7"),
        "fixed-high-ch7": FixedSettingPolicy(store.space.index_of(HIGH_CH7), "fixed-high-ch7"),
        "fixed-high-ch3": FixedSettingPolicy(store.space.index_of(HIGH_CH3), "fixed-high-ch3"),
        "fixed-max-energy": FixedSettingPolicy(
            int(np.argmax(em.energy_wus)), "fixed-max-energy"
        ),
        "linear-search": LinearSearchPolicy(len(store.space)),
    }
    results = {}
    for name, policy in policies.items():
        env = ReplayEnvironment(store, block_size=args.block, seed=args.seed)
        results[name] = dynamic_eval(policy, schedule, env, seed=args.seed)
    dirs = _out_dirs(args.out)
    series_path = dirs["results"] / "baseline_series.csv"
    with open(series_path, "w", newline="") as fh:
        write_dynamic_series_csv(results, store.space, fh)
    summary_path = dirs["results"] / "baseline_summary.json"
    summary_path.write_text(json.dumps(summary_dict(results), indent=2, sort_keys=True) + "\n")
    _write_manifest(args.out, "baseline", _config_from_args(args))
    for name, res in results.items():
        print(f"{name}: PRR {res.avg_prr_pct:.2f}%, energy {res.avg_energy_wus:.2f} Wus")
    print(f"wrote {series_path} and {summary_path}")
    return 0


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in name)


def cmd_plot(args) -> int:
    results_dir = Path(args.results)
    dirs = _out_dirs(args.out)
    wrote = []
    static_path = results_dir / "static_curve.csv"
    if static_path.exists():
        rows: dict[str, list] = {}
        with open(static_path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.setdefault(row["policy"], []).append(row)
        for policy, entries in rows.items():
            path = dirs["results"] / f"static_{_safe_name(policy)}.dat"
            with open(path, "w") as fh:
                fh.write("# iteration fraction_optimal ci_lo ci_hi\n")
                for e in entries:
                    fh.write(f"{e['iteration']} {e['fraction_optimal']} "
                             f"{e['ci_lo']} {e['ci_hi']}\n")
            wrote.append(path)
    for stem in ("dynamic_series", "baseline_series"):
        series_path = results_dir / f"{stem}.csv"
        if not series_path.exists():
            continue
        rows = {}
        with open(series_path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.setdefault(row["policy"], []).append(row)
        for policy, entries in rows.items():
            path = dirs["results"] / f"{stem}_{_safe_name(policy)}.dat"
            with open(path, "w") as fh:
                fh.write("# t_s prr energy_wus\n")
                for e in entries:
                    fh.write(f"{e['t_s']} {e['prr']} {e['energy_wus']}\n")
            wrote.append(path)
    if not wrote:
        raise CliError(f"no result CSVs found under {results_dir}", EXIT_MISSING)
    _write_manifest(args.out, "plot", _config_from_args(args))
    for path in wrote:
        print(f"wrote {path}")
    return 0


def cmd_timing(args) -> int:
    store = _load_store(args)
    policies, scaler = _agent_policies(args)
    if not policies:
        raise CliError("timing needs at least one of --qtable/--dqn", EXIT_USAGE)
    reports = []
    for name, policy in policies.items():
        env = ReplayEnvironment(store, scaler, block_size=args.block, seed=args.seed)
        reports.append(timing_report(policy, env, args.n, seed=args.seed))
    print(json.dumps(reports, indent=2))
    _write_manifest(args.out, "timing", _config_from_args(args))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(p, dataset_required: bool = True):
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("--out", default="runs", help="output directory")
    p.add_argument("--config", default=None, help="JSON config file; flags override it")
    if dataset_required:
        p.add_argument("--dataset", required=True, help="dataset CSV path")
        p.add_argument("--attempts", type=int, default=500,
                       help="range attempts per (link, setting) combination")


def _add_model_args(p):
    p.add_argument("--qtable", default=None, help="trained Q-table path")
    p.add_argument("--dqn", default=None, help="network checkpoint stem")
    p.add_argument("--preprocess", default=None, help="scaler/discretizer JSON")
    p.add_argument("--profile", choices=("static", "dynamic"), default=None,
                   help="online-update hyperparameter profile")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwb-adapt",
        description="Run-time adaptation of UWB PHY settings: energy model, "
                    "feature ranking, Q-learning agents and evaluation protocols.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic ranging dataset")
    _add_common(p, dataset_required=False)
    p.add_argument("--nodes", type=int, default=8)
    p.add_argument("--area", type=float, default=40.0)
    p.add_argument("--attempts", type=int, default=100)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("ingest", help="convert a dataset to the canonical schema")
    _add_common(p)
    p.add_argument("--column-map", default=None, help="JSON canonical->actual column names")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="rank link-state features by F-value")
    _add_common(p)
    p.add_argument("--dof-convention", choices=("features", "samples"), default="features")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("energy", help="print the 72-setting energy table as CSV")
    _add_common(p, dataset_required=False)
    p.add_argument("--phr-bits", type=int, default=19)
    p.add_argument("--split-phr-rate", action="store_true",
                   help="bill the PHR of 6.8 Mbps frames at the slow symbol duration")
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("train-q", help="train the tabular agent")
    _add_common(p)
    p.add_argument("--steps", type=int, default=500_000)
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--eps-decay", type=float, default=3.91e-5)
    p.add_argument("--link-switch", type=int, default=100)
    p.add_argument("--block", type=int, default=10)
    p.set_defaults(func=cmd_train_q)

    p = sub.add_parser("train-dqn", help="train the deep agent")
    _add_common(p)
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--eps-decay", type=float, default=1.96e-5)
    p.add_argument("--block", type=int, default=10)
    p.add_argument("--profile", choices=("static", "dynamic"), default=None)
    p.set_defaults(func=cmd_train_dqn)

    p = sub.add_parser("eval-static", help="fraction-optimal-vs-iterations protocol")
    _add_common(p)
    _add_model_args(p)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--iters", type=int, default=72)
    p.add_argument("--block", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval_static)

    p = sub.add_parser("eval-dynamic", help="scheduled link-switching protocol")
    _add_common(p)
    _add_model_args(p)
    p.add_argument("--schedule", default=None, help="schedule JSON path")
    p.add_argument("--block", type=int, default=10)
    p.set_defaults(func=cmd_eval_dynamic)

    p = sub.add_parser("baseline", help="fixed settings and linear search on the schedule")
    _add_common(p)
    p.add_argument("--schedule", default=None)
    p.add_argument("--block", type=int, default=10)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("plot", help="emit gnuplot-compatible .dat files from results")
    _add_common(p, dataset_required=False)
    p.add_argument("--results", default="runs/results", help="directory with result CSVs")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("timing", help="decision/update latency report")
    _add_common(p)
    _add_model_args(p)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--block", type=int, default=10)
    p.set_defaults(func=cmd_timing)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Prepend config-file values as defaults; explicit flags keep precedence."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return argv
    path = Path(known.config)
    if not path.exists():
        raise CliError(f"config file not found: {known.config}", EXIT_MISSING)
    values = json.loads(path.read_text())
    if not isinstance(values, dict):
        raise CliError("config file must hold a JSON object", EXIT_FORMAT)
    extra = []
    for key, value in values.items():
        flag = "--" + key.replace("_", "-")
        if any(arg == flag or arg.startswith(flag + "=") for arg in argv):
            continue  # explicit flag wins
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        else:
            extra.extend([flag, str(value)])
    # Config-derived flags go right after the subcommand.
    for i, arg in enumerate(argv):
        if not arg.startswith("-"):
            return argv[: i + 1] + extra + argv[i + 1 :]
    return argv + extra


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DatasetFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
